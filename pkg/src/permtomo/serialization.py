"""JSON encoding of the shared value types.

One schema, used by the CLI and tests alike: complex scalars are
``[re, im]`` pairs (never strings), vectors are arrays of those, and the
composite types are plain objects:

* measurement model  -- ``{"dim": d, "groups": [[vector, ...], ...]}``
* count record       -- ``{"counts": [int, ...]}``
* density matrix     -- ``{"dim": d, "rows": [[complex, ...], ...]}``
* pure state         -- ``{"amplitudes": [complex, ...]}``
* gram spec          -- ``{"base": rows, "row_mult": [...], "col_mult": [...]}``
* scaled scalar      -- ``{"mantissa": complex, "log_scale": float}``

Output is deterministic (sorted keys, fixed indentation) so identical runs
produce byte-identical files.  Parse problems raise :class:`SchemaError`,
which the CLI maps to its input-error exit code.
"""

from __future__ import annotations

import json
from typing import Any

import numpy as np

from .types import (
    DensityMatrix,
    GramSpec,
    MeasurementModel,
    OutcomeRecord,
    PureState,
    RunManifest,
    ScaledValue,
)

__all__ = [
    "SchemaError",
    "complex_to_json",
    "complex_from_json",
    "vector_to_json",
    "vector_from_json",
    "matrix_to_json",
    "matrix_from_json",
    "model_to_json",
    "model_from_json",
    "record_to_json",
    "record_from_json",
    "density_to_json",
    "density_from_json",
    "pure_state_to_json",
    "pure_state_from_json",
    "gram_to_json",
    "gram_from_json",
    "scaled_to_json",
    "scaled_from_json",
    "manifest_to_json",
    "dumps_json",
    "load_json_file",
]


class SchemaError(ValueError):
    """The JSON document does not match the expected schema."""


def complex_to_json(z: complex) -> list[float]:
    z = complex(z)
    return [z.real, z.imag]


def complex_from_json(value: Any) -> complex:
    if (
        not isinstance(value, (list, tuple))
        or len(value) != 2
        or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in value)
    ):
        raise SchemaError(f"complex scalar must be a [re, im] pair, got {value!r}")
    return complex(float(value[0]), float(value[1]))


def vector_to_json(vec) -> list:
    return [complex_to_json(z) for z in np.asarray(vec).ravel()]


def vector_from_json(value: Any) -> np.ndarray:
    if not isinstance(value, list) or not value:
        raise SchemaError(f"vector must be a non-empty array, got {value!r}")
    return np.array([complex_from_json(z) for z in value], dtype=complex)


def matrix_to_json(mat) -> list:
    return [vector_to_json(row) for row in np.asarray(mat)]


def matrix_from_json(value: Any) -> np.ndarray:
    if not isinstance(value, list) or not value:
        raise SchemaError(f"matrix must be a non-empty array of rows, got {value!r}")
    rows = [vector_from_json(row) for row in value]
    if len({r.size for r in rows}) != 1:
        raise SchemaError("matrix rows have unequal lengths")
    return np.array(rows, dtype=complex)


def _expect_object(value: Any, keys: set[str], what: str) -> dict:
    if not isinstance(value, dict):
        raise SchemaError(f"{what} must be a JSON object, got {type(value).__name__}")
    missing = keys - value.keys()
    if missing:
        raise SchemaError(f"{what} is missing key(s) {sorted(missing)}")
    return value


def model_to_json(model: MeasurementModel) -> dict:
    groups = []
    for idx in model.groups:
        groups.append([vector_to_json(model.outcomes[k]) for k in idx])
    return {"dim": model.dim, "groups": groups}


def model_from_json(value: Any) -> MeasurementModel:
    obj = _expect_object(value, {"dim", "groups"}, "measurement model")
    dim = obj["dim"]
    if not isinstance(dim, int) or dim < 1:
        raise SchemaError(f"model dim must be a positive integer, got {dim!r}")
    if not isinstance(obj["groups"], list) or not obj["groups"]:
        raise SchemaError("model groups must be a non-empty array")
    group_vectors = []
    for g in obj["groups"]:
        if not isinstance(g, list) or not g:
            raise SchemaError("each group must be a non-empty array of vectors")
        vecs = [vector_from_json(v) for v in g]
        if any(v.size != dim for v in vecs):
            raise SchemaError("outcome vector length does not match model dim")
        group_vectors.append(vecs)
    try:
        return MeasurementModel.from_group_vectors(dim, group_vectors)
    except ValueError as exc:
        raise SchemaError(str(exc)) from exc


def record_to_json(record: OutcomeRecord) -> dict:
    return {"counts": list(record.counts)}


def record_from_json(value: Any) -> OutcomeRecord:
    obj = _expect_object(value, {"counts"}, "outcome record")
    counts = obj["counts"]
    if not isinstance(counts, list) or not all(
        isinstance(c, int) and not isinstance(c, bool) for c in counts
    ):
        raise SchemaError(f"counts must be an array of integers, got {counts!r}")
    try:
        return OutcomeRecord(tuple(counts))
    except ValueError as exc:
        raise SchemaError(str(exc)) from exc


def density_to_json(rho: DensityMatrix) -> dict:
    return {"dim": rho.dim, "rows": matrix_to_json(rho.matrix)}


def density_from_json(value: Any) -> DensityMatrix:
    obj = _expect_object(value, {"dim", "rows"}, "density matrix")
    mat = matrix_from_json(obj["rows"])
    if mat.shape != (obj["dim"], obj["dim"]):
        raise SchemaError(
            f"density matrix shape {mat.shape} does not match dim={obj['dim']!r}"
        )
    return DensityMatrix.from_matrix(mat)


def pure_state_to_json(state: PureState) -> dict:
    return {"amplitudes": vector_to_json(state.amplitudes)}


def pure_state_from_json(value: Any) -> PureState:
    obj = _expect_object(value, {"amplitudes"}, "pure state")
    try:
        return PureState(vector_from_json(obj["amplitudes"]))
    except ValueError as exc:
        raise SchemaError(str(exc)) from exc


def gram_to_json(spec: GramSpec) -> dict:
    return {
        "base": matrix_to_json(spec.base),
        "row_mult": list(spec.row_mult),
        "col_mult": list(spec.col_mult),
    }


def gram_from_json(value: Any) -> GramSpec:
    obj = _expect_object(value, {"base", "row_mult", "col_mult"}, "gram spec")
    base = matrix_from_json(obj["base"])
    for key in ("row_mult", "col_mult"):
        mult = obj[key]
        if not isinstance(mult, list) or not all(isinstance(c, int) for c in mult):
            raise SchemaError(f"{key} must be an array of integers, got {mult!r}")
    try:
        return GramSpec(base, tuple(obj["row_mult"]), tuple(obj["col_mult"]))
    except ValueError as exc:
        raise SchemaError(str(exc)) from exc


def scaled_to_json(value: ScaledValue) -> dict:
    return {
        "mantissa": complex_to_json(value.mantissa),
        "log_scale": value.log_scale,
        "approx": None if value.log_scale > 700 else abs(value.value),
    }


def scaled_from_json(value: Any) -> ScaledValue:
    obj = _expect_object(value, {"mantissa", "log_scale"}, "scaled value")
    return ScaledValue(complex_from_json(obj["mantissa"]), float(obj["log_scale"]))


def manifest_to_json(manifest: RunManifest) -> dict:
    return {
        "command": manifest.command,
        "inputs": manifest.inputs,
        "seed": manifest.seed,
        "config": manifest.config,
        "version": manifest.version,
        "duration_s": manifest.duration_s,
    }


def dumps_json(payload: Any) -> str:
    """Deterministic rendering: sorted keys, two-space indent, newline end."""
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def load_json_file(path) -> Any:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path} is not valid JSON: {exc}") from exc
