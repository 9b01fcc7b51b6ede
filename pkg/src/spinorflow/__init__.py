"""Numerical laboratory for the spinor flow on flat periodic lattices."""
from .clifford import CliffordRep, build_rep
from .flow import FlowState, energy, rhs_modified_flow, rhs_spinor_flow, step
from .lattice import LatticeChart

__all__ = [
    "CliffordRep",
    "FlowState",
    "LatticeChart",
    "build_rep",
    "energy",
    "rhs_modified_flow",
    "rhs_spinor_flow",
    "step",
]
__version__ = "0.1.0"
