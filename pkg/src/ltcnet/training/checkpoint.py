"""Checkpoint files: a keyed JSON document with hex-encoded float64 values.

Every float, scalar or array entry, is written with ``float.hex`` so a
save/load/save cycle reproduces the file byte for byte.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ltcnet.cells import PARAM_NAMES, CellParams
from ltcnet.errors import LtcError
from ltcnet.numcore import RNG_ALGORITHM
from ltcnet.training.bptt import OutputHead

FORMAT_VERSION = 1


class CheckpointVersionError(LtcError, ValueError):
    pass


class CheckpointParseError(LtcError, ValueError):
    pass


@dataclass(eq=False)
class Checkpoint:
    cell_kind: str
    params: CellParams
    head: OutputHead
    config: dict
    best_validation_metric: float
    best_epoch: int = 0
    solver: str = "fused"
    rng_algorithm: str = RNG_ALGORITHM
    extra: dict = field(default_factory=dict)  # e.g. normalisation statistics
    format_version: int = FORMAT_VERSION


def _encode(value):
    if isinstance(value, np.ndarray):
        arr = np.asarray(value, dtype=np.float64)
        return {"shape": list(arr.shape), "f64": [float(v).hex() for v in arr.ravel()]}
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return {"f64": float(value).hex()}
    if isinstance(value, dict):
        return {str(k): _encode(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_encode(v) for v in value]
    return value


def _decode(value):
    if isinstance(value, dict):
        if set(value) == {"shape", "f64"}:
            flat = np.array([float.fromhex(h) for h in value["f64"]], dtype=np.float64)
            return flat.reshape(value["shape"])
        if set(value) == {"f64"}:
            return float.fromhex(value["f64"])
        return {k: _decode(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_decode(v) for v in value]
    return value


def dumps(ckpt: Checkpoint) -> str:
    doc = {
        "format_version": ckpt.format_version,
        "cell_kind": ckpt.cell_kind,
        "activation": ckpt.params.activation,
        "solver": ckpt.solver,
        "params": _encode(ckpt.params.arrays()),
        "head": _encode(ckpt.head.arrays()),
        "config": _encode(ckpt.config),
        "best_validation_metric": _encode(float(ckpt.best_validation_metric)),
        "best_epoch": int(ckpt.best_epoch),
        "rng_algorithm": ckpt.rng_algorithm,
        "tau_positivity": "clamped to >= 1e-6 after each update",
        "extra": _encode(ckpt.extra),
    }
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def loads(text: str) -> Checkpoint:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CheckpointParseError(f"checkpoint is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "format_version" not in doc:
        raise CheckpointParseError("checkpoint lacks a format_version field")
    if doc["format_version"] != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"unsupported checkpoint format_version {doc['format_version']!r}; "
            f"this build reads version {FORMAT_VERSION}"
        )
    try:
        arrays = _decode(doc["params"])
        params = CellParams(**{k: arrays[k] for k in PARAM_NAMES}, activation=doc["activation"])
        head_arr = _decode(doc["head"])
        return Checkpoint(
            cell_kind=doc["cell_kind"],
            params=params,
            head=OutputHead(head_arr["w_out"], head_arr["b_out"]),
            config=_decode(doc["config"]),
            best_validation_metric=_decode(doc["best_validation_metric"]),
            best_epoch=doc["best_epoch"],
            solver=doc["solver"],
            rng_algorithm=doc["rng_algorithm"],
            extra=_decode(doc.get("extra", {})),
            format_version=doc["format_version"],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointParseError(f"malformed checkpoint: {exc}") from exc


def checkpoint_save(path, ckpt: Checkpoint) -> None:
    Path(path).write_text(dumps(ckpt), encoding="utf-8")


def checkpoint_load(path) -> Checkpoint:
    return loads(Path(path).read_text(encoding="utf-8"))
