"""Acceptance criteria 1-13, one test each.

Every test prints a ``[PASS]``/``[FAIL]`` line with the measured value and
tolerance.  Run ``pytest tests/test_acceptance.py -v`` to see them inline.
The heavier trajectories are cached per process, so criteria 9 and 11 reuse
runs made for 7, 8 and 10.
"""
import pytest

from spinorflow import verification as vf


@pytest.fixture
def report(capsys):
    def emit(number, result):
        with capsys.disabled():
            print(f"\ncriterion {number:>2} {result.line()}")
        assert result.passed, result.to_dict()

    return emit


def test_criterion_01_clifford_algebra(report):
    report(1, vf.check_algebra())


def test_criterion_02_stationarity(report):
    report(2, vf.check_stationarity())


def test_criterion_03_ricci_identity(report):
    report(3, vf.check_ricci_identity())


def test_criterion_04_t_tensor_forms(report):
    report(4, vf.check_t_tensor())


def test_criterion_05_pullback_identity(report):
    report(5, vf.check_pullback())


def test_criterion_06_gradient_structure(report):
    report(6, vf.check_gradient())


@pytest.mark.slow
def test_criterion_07_energy_monotonicity(report):
    report(7, vf.check_energy_monotone())


@pytest.mark.slow
def test_criterion_08_diffusion_coefficient(report):
    report(8, vf.check_decay_rate())


@pytest.mark.slow
def test_criterion_09_gradient_chain(report):
    report(9, vf.check_gradient_chain())


@pytest.mark.slow
def test_criterion_10_bernstein_stability(report):
    report(10, vf.check_bernstein())


@pytest.mark.slow
def test_criterion_11_blowup_ordering(report):
    report(11, vf.check_blowup_ordering())


@pytest.mark.slow
def test_criterion_12_interpolation_corpus(report):
    report(12, vf.check_interpolation())


def test_criterion_13_determinism(report):
    report(13, vf.check_determinism())
