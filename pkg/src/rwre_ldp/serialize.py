"""Shared structured configuration format and deterministic JSON output.

Environments, laws, and strip specs share one JSON schema, with step
probabilities always ordered +e_1, -e_1, ..., +e_d, -e_d and period-box
tables listed in C order over box sites.  Floats are emitted with 17
significant digits so that replayed runs compare byte-for-byte.
"""

from __future__ import annotations

import json
import math

import numpy as np

from .env_model import EnvironmentLaw, PeriodicEnvironment, ProbVec
from .errors import ConfigError
from .strip_builder import StripSpec


def format_float(x: float) -> str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return format(float(x), ".17g")


def emit_json(obj, indent: int = 0) -> str:
    """Deterministic JSON with 17-significant-digit floats."""
    pad = " " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        inner = ",\n".join(
            f'{pad}  {json.dumps(str(k))}: {emit_json(v, indent + 2)}' for k, v in obj.items()
        )
        return "{\n" + inner + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if len(obj) == 0:
            return "[]"
        inner = ", ".join(emit_json(v, indent) for v in obj)
        return "[" + inner + "]"
    if isinstance(obj, bool) or isinstance(obj, np.bool_):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_float(float(obj))
    if isinstance(obj, np.ndarray):
        return emit_json(obj.tolist(), indent)
    if isinstance(obj, str):
        return json.dumps(obj)
    raise ConfigError(f"cannot serialize {type(obj).__name__}")


def dump_json(obj, path) -> None:
    with open(path, "w") as fh:
        fh.write(emit_json(obj))
        fh.write("\n")


def _require_fields(data: dict, required, optional=()):
    missing = [k for k in required if k not in data]
    if missing:
        raise ConfigError(f"missing fields: {', '.join(missing)}")
    unknown = [k for k in data if k not in set(required) | set(optional)]
    if unknown:
        raise ConfigError(f"unknown fields: {', '.join(unknown)}")


def law_to_dict(law: EnvironmentLaw) -> dict:
    return {
        "kind": "environment_law",
        "dim": law.dim,
        "kappa": law.kappa,
        "atoms": [
            {"probs": list(a.probs), "weight": float(w)} for a, w in zip(law.atoms, law.weights)
        ],
    }


def law_from_dict(data: dict) -> EnvironmentLaw:
    _require_fields(data, ("kind", "dim", "kappa", "atoms"))
    if data["kind"] != "environment_law":
        raise ConfigError(f"expected kind environment_law, got {data['kind']}")
    dim = int(data["dim"])
    atoms = []
    weights = []
    for entry in data["atoms"]:
        _require_fields(entry, ("probs", "weight"))
        atoms.append(ProbVec(dim, np.asarray(entry["probs"], dtype=np.float64)))
        weights.append(float(entry["weight"]))
    return EnvironmentLaw(dim, tuple(atoms), np.asarray(weights), float(data["kappa"]))


def periodic_env_to_dict(env: PeriodicEnvironment) -> dict:
    d = env.dim
    return {
        "kind": "periodic_environment",
        "dim": d,
        "period": list(env.period),
        "table": [list(row) for row in env.table.reshape(-1, 2 * d)],
    }


def periodic_env_from_dict(data: dict) -> PeriodicEnvironment:
    _require_fields(data, ("kind", "dim", "period", "table"))
    if data["kind"] != "periodic_environment":
        raise ConfigError(f"expected kind periodic_environment, got {data['kind']}")
    d = int(data["dim"])
    period = tuple(int(n) for n in data["period"])
    table = np.asarray(data["table"], dtype=np.float64)
    if table.shape != (int(np.prod(period)), 2 * d):
        raise ConfigError(f"table shape {table.shape} does not match period {period}")
    return PeriodicEnvironment(period, table.reshape(period + (2 * d,)))


def strip_spec_to_dict(spec: StripSpec) -> dict:
    dim = len(spec.u)
    return {
        "kind": "strip_spec",
        "dim": dim,
        "u": list(spec.u),
        "radii": list(spec.radii),
        "sigmas": [list(s.probs) for s in spec.sigmas],
        "orth_residual": spec.orth_residual,
    }


def strip_spec_from_dict(data: dict) -> StripSpec:
    _require_fields(data, ("kind", "dim", "u", "radii", "sigmas"), optional=("orth_residual",))
    if data["kind"] != "strip_spec":
        raise ConfigError(f"expected kind strip_spec, got {data['kind']}")
    dim = int(data["dim"])
    sigmas = tuple(ProbVec(dim, np.asarray(p, dtype=np.float64)) for p in data["sigmas"])
    return StripSpec(
        tuple(int(v) for v in data["u"]),
        tuple(int(r) for r in data["radii"]),
        sigmas,
        float(data.get("orth_residual", 0.0)),
    )


_PARSERS = {
    "environment_law": law_from_dict,
    "periodic_environment": periodic_env_from_dict,
    "strip_spec": strip_spec_from_dict,
}


def parse_object(data: dict):
    """Dispatch a configuration dictionary on its kind field."""
    if not isinstance(data, dict) or "kind" not in data:
        raise ConfigError("configuration objects need a kind field")
    kind = data["kind"]
    if kind not in _PARSERS:
        raise ConfigError(f"unknown kind {kind}")
    return _PARSERS[kind](data)


def load_object(path):
    with open(path) as fh:
        return parse_object(json.load(fh))
