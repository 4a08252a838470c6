"""JSON documents for cocycles, paths, outcomes and glued maps.

Every top-level document carries ``"v": 1``.  Floats are written with
Python's shortest round-trip representation, so parsing a serialized value
gives back the same bits; non-finite values use the ``Infinity`` / ``NaN``
extension of the ``json`` module.  Indices and base points are 1-based.
"""
from __future__ import annotations

import json
from typing import Any

import numpy as np

from .connection import GluedMap
from .core import PeriodicCocycle
from .domination import DominationReport
from .paths import (
    BlockScaleRamp,
    CocyclePath,
    Constant,
    LinearBlend,
    Lifted,
    Piece,
    PathRadiusReport,
    Reversed,
    RotateToward,
    RotationRamp,
    Segment,
)
from .spectral import SaddleSplitting, Spectrum, Subbundle
from .verification import Certificate

VERSION = 1


class SchemaError(ValueError):
    """A JSON document is malformed or does not follow the expected layout."""


# ---------------------------------------------------------------------------
# generic values


def to_jsonable(x: Any) -> Any:
    """Plain JSON types for numpy scalars, arrays and the package's report types."""
    if isinstance(x, dict):
        return {str(k): to_jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [to_jsonable(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return float(x)
    if isinstance(x, complex):
        return {"re": x.real, "im": x.imag}
    if isinstance(x, np.ndarray):
        return to_jsonable(x.tolist())
    if isinstance(x, PeriodicCocycle):
        return cocycle_to_dict(x, top=False)
    if hasattr(x, "to_dict"):
        return to_jsonable(x.to_dict())
    if x is None or isinstance(x, str):
        return x
    raise TypeError(f"cannot serialize {type(x).__name__}")


def dumps(doc: dict, indent=None) -> str:
    return json.dumps(to_jsonable(doc), indent=indent, allow_nan=True)


def loads(text: str) -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaError("top-level JSON value must be an object")
    return doc


def _check_version(doc: dict):
    v = doc.get("v", VERSION)
    if v != VERSION:
        raise SchemaError(f"unsupported document version {v!r}")


def _array_to_dict(a: np.ndarray) -> dict:
    a = np.asarray(a)
    kind = "bool" if a.dtype == bool else "float"
    data = a.reshape(-1).tolist()
    return {"dtype": kind, "shape": list(a.shape), "data": data}


def _array_from_dict(doc: dict) -> np.ndarray:
    try:
        shape = tuple(int(n) for n in doc["shape"])
        dtype = bool if doc.get("dtype", "float") == "bool" else float
        return np.array(doc["data"], dtype=dtype).reshape(shape)
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"bad array record: {exc}") from exc


# ---------------------------------------------------------------------------
# cocycles


def cocycle_to_dict(c: PeriodicCocycle, top: bool = True) -> dict:
    doc = {"dim": c.dim, "period": c.period, "matrices": [M.reshape(-1).tolist() for M in c.maps]}
    return {"v": VERSION, **doc} if top else doc


def cocycle_from_dict(doc: dict, cond_ceiling: float = None) -> PeriodicCocycle:
    _check_version(doc)
    try:
        d, p = int(doc["dim"]), int(doc["period"])
        mats = doc["matrices"]
        if len(mats) != p or any(len(m) != d * d for m in mats):
            raise SchemaError(f"expected {p} matrices of {d * d} entries each")
        arr = np.array(mats, dtype=float).reshape(p, d, d)
    except SchemaError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"bad cocycle document: {exc}") from exc
    if cond_ceiling is None:
        return PeriodicCocycle(arr)
    return PeriodicCocycle(arr, cond_ceiling=cond_ceiling)


# ---------------------------------------------------------------------------
# segments and paths


def _param_to_json(v):
    if isinstance(v, PeriodicCocycle):
        return {"cocycle": cocycle_to_dict(v, top=False)}
    if isinstance(v, Segment):
        return {"segment": segment_to_dict(v)}
    if isinstance(v, np.ndarray):
        return {"array": _array_to_dict(v)}
    return v


def _param_from_json(v):
    if isinstance(v, dict):
        if "cocycle" in v:
            return cocycle_from_dict(v["cocycle"], cond_ceiling=np.inf)
        if "segment" in v:
            return segment_from_dict(v["segment"])
        if "array" in v:
            return _array_from_dict(v["array"])
    return v


def segment_to_dict(seg: Segment) -> dict:
    return {"kind": seg.kind, "params": {k: _param_to_json(v) for k, v in seg.params().items()}}


_BUILDERS = {
    "Constant": lambda q: Constant(q["base"]),
    "LinearBlend": lambda q: LinearBlend(q["base"], q["target"]),
    "RotationRamp": lambda q: RotationRamp(q["base"], q["planes"], q["angles"]),
    "BlockScaleRamp": lambda q: BlockScaleRamp(q["base"], q["frames"], float(q["log_rate"])),
    "RotateToward": lambda q: RotateToward(q["base"], q["angles"], q["correct"], q["targets"]),
}


def segment_from_dict(doc: dict) -> Segment:
    try:
        kind = doc["kind"]
        q = {k: _param_from_json(v) for k, v in doc["params"].items()}
    except (KeyError, TypeError, AttributeError) as exc:
        raise SchemaError(f"bad segment record: {exc}") from exc
    # wrappers report their inner kind, so they are recognized by their keys
    if "reverse_of" in q:
        return Reversed(q["reverse_of"])
    if "inner" in q:
        return Lifted(q["base"], q["frames"], q["inner"])
    if kind not in _BUILDERS:
        raise SchemaError(f"unknown segment kind {kind!r}")
    try:
        return _BUILDERS[kind](q)
    except KeyError as exc:
        raise SchemaError(f"segment {kind} misses parameter {exc}") from exc


def path_to_dict(path: CocyclePath, top: bool = True) -> dict:
    doc = {
        "start": cocycle_to_dict(path.start, top=False),
        "segments": [{**segment_to_dict(pc.segment), "t0": pc.t0, "t1": pc.t1} for pc in path.pieces],
    }
    return {"v": VERSION, **doc} if top else doc


def path_from_dict(doc: dict) -> CocyclePath:
    _check_version(doc)
    try:
        start = cocycle_from_dict(doc["start"], cond_ceiling=np.inf)
        pieces = tuple(
            Piece(float(s["t0"]), float(s["t1"]), segment_from_dict(s)) for s in doc["segments"]
        )
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"bad path document: {exc}") from exc
    return CocyclePath(start, pieces)


# ---------------------------------------------------------------------------
# reports and outcomes


def certificate_from_dict(doc: dict) -> Certificate:
    return Certificate(
        doc["name"],
        float(doc["margin"]),
        doc.get("details", {}),
        int(doc.get("samples", 0)),
        bool(doc.get("required", True)),
    )


def radius_report_from_dict(doc: dict) -> PathRadiusReport:
    return PathRadiusReport(
        float(doc["radius"]),
        float(doc["argmax_t"]),
        int(doc["argmax_n"]) - 1,
        int(doc["sample_count"]),
        int(doc.get("samples_per_segment", 0)),
    )


def outcome_to_dict(outcome) -> dict:
    return {
        "v": VERSION,
        "type": "outcome",
        "kind": outcome.kind,
        "passed": outcome.passed,
        "radius": outcome.radius_report.to_dict(),
        "certificates": [c.to_dict() for c in outcome.certificates],
        "goals": to_jsonable(outcome.goals),
        "diagnostics": to_jsonable(outcome.diagnostics),
        "path": path_to_dict(outcome.path, top=False),
    }


def outcome_from_dict(doc: dict):
    from .synthesis import SynthesisOutcome

    _check_version(doc)
    try:
        return SynthesisOutcome(
            doc["kind"],
            path_from_dict(doc["path"]),
            radius_report_from_dict(doc["radius"]),
            tuple(certificate_from_dict(c) for c in doc.get("certificates", ())),
            dict(doc.get("goals", {})),
            dict(doc.get("diagnostics", {})),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"bad outcome document: {exc}") from exc


def glued_to_dict(g: GluedMap) -> dict:
    return {"v": VERSION, "type": "glued", **g.to_dict()}


def glued_from_dict(doc: dict) -> GluedMap:
    _check_version(doc)
    try:
        return GluedMap.from_dict(doc)
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"bad glued-map document: {exc}") from exc


def spectrum_from_dict(doc: dict) -> Spectrum:
    return Spectrum(np.array([complex(z["re"], z["im"]) for z in doc["eigenvalues"]]))


def subbundle_from_dict(doc: dict) -> Subbundle:
    """Frames are stored per base as lists of columns, tagged with 1-based bases."""
    items = sorted(doc["frames"], key=lambda e: e["base"])
    frames = np.stack([np.array(e["columns"], dtype=float).T for e in items])
    return Subbundle(frames, float(doc["residual"]))


def splitting_from_dict(doc: dict) -> SaddleSplitting:
    return SaddleSplitting(subbundle_from_dict(doc["stable"]), subbundle_from_dict(doc["unstable"]))


def domination_report_from_dict(doc: dict) -> DominationReport:
    w = doc["worst_window"]
    return DominationReport(
        int(doc["N_tested"]),
        bool(doc["dominated"]),
        float(doc["worst_ratio"]),
        int(doc["worst_base"]) - 1,
        (int(w["first_map"]) - 1, int(w["length"])),
        float(doc["constant"]),
    )
