"""Binary field container, checkpoints, and CSV/JSON artifacts.

Container layout (all integers little-endian)::

    8 bytes   magic b"SPNFLD01"
    4 bytes   uint32 length L of the JSON header
    L bytes   UTF-8 JSON header: {"meta": {...}, "records": [...]}
    payload   concatenated arrays, float64 little-endian, row-major;
              complex arrays are stored as interleaved (re, im) pairs

Each record is ``{"name", "shape", "complex", "offset", "nbytes"}`` with the
offset counted from the start of the payload.  A sidecar ``<path>.json``
repeats the header for human inspection.
"""
from __future__ import annotations

import csv
import json
import struct
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .clifford import build_rep
from .flow import FlowState
from .lattice import LatticeChart

MAGIC = b"SPNFLD01"


class ContainerError(ValueError):
    pass


def _encode(a: np.ndarray) -> tuple[bytes, bool]:
    a = np.asarray(a)
    is_complex = np.iscomplexobj(a)
    if is_complex:
        a = np.ascontiguousarray(a, dtype="<c16").view("<f8")
    else:
        a = np.ascontiguousarray(a, dtype="<f8")
    return a.tobytes(order="C"), bool(is_complex)


def write_container(path, arrays: Mapping[str, np.ndarray], meta: Mapping | None = None) -> None:
    path = Path(path)
    records, chunks, offset = [], [], 0
    for name, arr in arrays.items():
        data, is_complex = _encode(arr)
        records.append(
            {"name": name, "shape": list(np.shape(arr)), "complex": is_complex, "offset": offset, "nbytes": len(data)}
        )
        chunks.append(data)
        offset += len(data)
    header = {"meta": dict(meta or {}), "records": records}
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for c in chunks:
            fh.write(c)
    with open(str(path) + ".json", "w", encoding="utf-8") as fh:
        json.dump(header, fh, sort_keys=True, indent=2)
        fh.write("\n")


def read_container(path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != MAGIC:
        raise ContainerError(f"{path}: not a field container (bad magic)")
    (L,) = struct.unpack("<I", raw[8:12])
    header = json.loads(raw[12 : 12 + L].decode("utf-8"))
    payload = raw[12 + L :]
    arrays = {}
    for rec in header["records"]:
        lo, hi = rec["offset"], rec["offset"] + rec["nbytes"]
        if hi > len(payload):
            raise ContainerError(f"{path}: truncated payload for {rec['name']!r}")
        a = np.frombuffer(payload[lo:hi], dtype="<f8")
        if rec["complex"]:
            a = a.view("<c16")
        arrays[rec["name"]] = a.reshape(rec["shape"]).astype(complex if rec["complex"] else float)
    return arrays, header["meta"]


def save_checkpoint(path, state: FlowState, config: Mapping | None = None) -> None:
    meta = {
        "kind": "flow_state",
        "n": state.chart.n,
        "dims": list(state.chart.dims),
        "h": state.chart.h,
        "order": state.chart.order,
        "t": state.t,
        "step_index": state.step_index,
        "config": dict(config or {}),
    }
    write_container(path, {"g": state.g, "phi": state.phi}, meta)


def load_checkpoint(path) -> tuple[FlowState, dict]:
    arrays, meta = read_container(path)
    if meta.get("kind") != "flow_state":
        raise ContainerError(f"{path}: container does not hold a flow state")
    chart = LatticeChart(tuple(meta["dims"]), meta["h"], meta["order"])
    rep = build_rep(meta["n"])
    state = FlowState(chart, rep, arrays["g"], arrays["phi"], t=meta["t"], step_index=meta["step_index"])
    return state, meta.get("config", {})


def write_csv(path, columns: Iterable[str], rows: Iterable[Iterable[float]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(columns))
        for row in rows:
            w.writerow([repr(float(v)) for v in row])


def read_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array([[float(v) for v in r] for r in rows[1:]])


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")
