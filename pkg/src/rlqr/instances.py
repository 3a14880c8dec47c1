"""JSON/CSV (de)serialization of LQ instances and solutions.

Instance schema (``"format": 1``)::

    {"format": 1, "delta": 0.1, "c0": [...], "QN": [[...]], "qN": [...],
     "stages": [{"Q": [[...]], "M": [[...]], "R": [[...]], "q": [...], "r": [...],
                 "A": [[...]], "B": [[...]], "c_next": [...]}, ...]}

Matrices are arrays of rows. Floats are written with Python's shortest
round-trip repr, so files reload bit-for-bit.
"""
from __future__ import annotations

import csv
import io
import json
from typing import Any, Dict, Optional

import numpy as np

from .reglqr import LqrStage, RegLqrProblem, RegLqrSolution

FORMAT_VERSION = 1
STAGE_KEYS = ("Q", "M", "R", "q", "r", "A", "B", "c_next")
_MATRIX_KEYS = {"Q", "M", "R", "A", "B"}


class InstanceError(ValueError):
    """Malformed or inconsistent instance file."""


def _array(value, matrix: bool, where: str) -> np.ndarray:
    try:
        a = np.asarray(value, dtype=np.float64)
    except (TypeError, ValueError):
        raise InstanceError(f"{where}: not a numeric array") from None
    a = np.atleast_2d(a) if matrix else np.atleast_1d(a)
    if a.ndim != (2 if matrix else 1):
        raise InstanceError(f"{where}: expected a {'matrix' if matrix else 'vector'}")
    if not np.all(np.isfinite(a)):
        raise InstanceError(f"{where}: non-finite entries")
    return a


def problem_from_dict(doc: Dict[str, Any]) -> RegLqrProblem:
    if not isinstance(doc, dict):
        raise InstanceError("top level must be a JSON object")
    fmt = doc.get("format", FORMAT_VERSION)
    if fmt != FORMAT_VERSION:
        raise InstanceError(f"unsupported format {fmt!r}")
    for key in ("delta", "c0", "QN", "qN", "stages"):
        if key not in doc:
            raise InstanceError(f"missing key {key!r}")
    delta = doc["delta"]
    if not isinstance(delta, (int, float)) or isinstance(delta, bool) or not np.isfinite(delta) or delta < 0:
        raise InstanceError("delta must be a finite number >= 0")
    QN = _array(doc["QN"], True, "QN")
    qN = _array(doc["qN"], False, "qN")
    c0 = _array(doc["c0"], False, "c0")
    nx = QN.shape[0]
    if QN.shape != (nx, nx) or qN.shape != (nx,) or c0.shape != (nx,):
        raise InstanceError(f"terminal blocks inconsistent with nx={nx}")
    if not isinstance(doc["stages"], list):
        raise InstanceError("stages must be an array")
    stages = []
    nu = None
    for i, sd in enumerate(doc["stages"]):
        if not isinstance(sd, dict):
            raise InstanceError(f"stage {i}: must be an object")
        missing = [k for k in STAGE_KEYS if k not in sd]
        if missing:
            raise InstanceError(f"stage {i}: missing keys {missing}")
        arr = {k: _array(sd[k], k in _MATRIX_KEYS, f"stage {i}: {k}") for k in STAGE_KEYS}
        nu = arr["R"].shape[0] if nu is None else nu
        expected = {
            "Q": (nx, nx), "M": (nx, nu), "R": (nu, nu), "q": (nx,), "r": (nu,),
            "A": (nx, nx), "B": (nx, nu), "c_next": (nx,),
        }
        for k, shape in expected.items():
            if arr[k].shape != shape:
                raise InstanceError(f"stage {i}: {k} has shape {arr[k].shape}, expected {shape}")
        stages.append(LqrStage(**arr))
    p = RegLqrProblem(stages=stages, Q_N=QN, q_N=qN, c0=c0, delta=float(delta))
    try:
        p.validate(check_definiteness=True)
    except ValueError as exc:
        raise InstanceError(str(exc)) from None
    return p


def load_problem(text: str) -> RegLqrProblem:
    """Parse an instance document. JSON syntax errors report a byte offset."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        offset = len(text[:exc.pos].encode("utf-8"))
        raise InstanceError(f"malformed JSON at byte offset {offset}: {exc.msg}") from None
    return problem_from_dict(doc)


def problem_to_dict(p: RegLqrProblem) -> Dict[str, Any]:
    return {
        "format": FORMAT_VERSION,
        "delta": float(p.delta),
        "c0": p.c0.tolist(),
        "QN": p.Q_N.tolist(),
        "qN": p.q_N.tolist(),
        "stages": [{k: getattr(st, k).tolist() for k in STAGE_KEYS} for st in p.stages],
    }


def dumps(doc: Dict[str, Any]) -> str:
    return json.dumps(doc, indent=2) + "\n"


def solution_to_dict(sol: RegLqrSolution, kkt_residual: float, oracle_checked: bool,
                     oracle_discrepancy: Optional[float] = None) -> Dict[str, Any]:
    return {
        "format": FORMAT_VERSION,
        "x": [v.tolist() for v in sol.x],
        "u": [v.tolist() for v in sol.u],
        "y": [v.tolist() for v in sol.y],
        "kkt_residual": float(kkt_residual),
        "oracle_checked": bool(oracle_checked),
        "oracle_discrepancy": None if oracle_discrepancy is None else float(oracle_discrepancy),
    }


def solution_from_dict(doc: Dict[str, Any]) -> RegLqrSolution:
    return RegLqrSolution(
        x=[np.asarray(v, dtype=np.float64) for v in doc["x"]],
        u=[np.asarray(v, dtype=np.float64) for v in doc["u"]],
        y=[np.asarray(v, dtype=np.float64) for v in doc["y"]],
    )


def trajectory_csv(x, u, y=None) -> str:
    """One row per stage: ``stage, x[0..], u[0..], y[0..]``; the last stage has empty u."""
    nx = len(x[0]) if len(x) else 0
    nu = len(u[0]) if len(u) else 0
    ny = len(y[0]) if y is not None and len(y) else 0
    header = (["stage"] + [f"x[{j}]" for j in range(nx)] + [f"u[{j}]" for j in range(nu)]
              + [f"y[{j}]" for j in range(ny)])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for i in range(len(x)):
        row = [str(i)] + [repr(float(v)) for v in x[i]]
        row += [repr(float(v)) for v in u[i]] if i < len(u) else [""] * nu
        if ny:
            row += [repr(float(v)) for v in y[i]]
        w.writerow(row)
    return buf.getvalue()
