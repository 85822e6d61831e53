"""Batch front-end.

One subcommand per library operation, strict JSON configuration, and
machine-readable outputs.  Every run writes a manifest next to its outputs
(resolved configuration, seeds, versions, wall time) so that published
results can be replayed byte-for-byte with the replay subcommand.

Exit codes: 0 success, 2 configuration error, 3 numerical non-convergence,
4 resource cap exceeded.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time
from enum import Enum
from pathlib import Path

import numpy as np

from . import __version__, env_model, periodic_solver, rate_solver, simulate, strip_builder
from .env_model import Box, ProbVec, sample_environment
from .errors import ConfigError, NonConvergenceError, ResourceCapError
from .serialize import (
    dump_json,
    format_float,
    law_from_dict,
    periodic_env_from_dict,
    periodic_env_to_dict,
    strip_spec_from_dict,
    strip_spec_to_dict,
)

WORKERS_ENV_VAR = "RWRE_LDP_WORKERS"


def _jsonable(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: _jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _check_fields(config: dict, required, optional=()):
    missing = [k for k in required if k not in config]
    if missing:
        raise ConfigError(f"missing config fields: {', '.join(sorted(missing))}")
    unknown = [k for k in config if k not in set(required) | set(optional)]
    if unknown:
        raise ConfigError(f"unknown config fields: {', '.join(sorted(unknown))}")


def _sigma(config, key="sigma"):
    if "dim" not in config or key not in config:
        raise ConfigError(f"need dim and {key}")
    return ProbVec(int(config["dim"]), np.asarray(config[key], dtype=np.float64))


def _write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            cells = []
            for v in row:
                if isinstance(v, (float, np.floating)):
                    cells.append(format_float(float(v)))
                else:
                    cells.append(str(v))
            fh.write(",".join(cells) + "\n")


# ---------------------------------------------------------------------------
# subcommand handlers: take the resolved config, return (result, extra_files)


def _cmd_classify(config, out_dir):
    _check_fields(config, ("law",))
    law = law_from_dict(config["law"])
    cls = env_model.classify_law(law)
    drifts = [list(env_model.drift(a)) for a in law.atoms]
    return {
        "classification": cls.value,
        "atom_drifts": drifts,
        "convention": "interior of the drift hull in R^d (rank test + positivity LP, tol 1e-9)",
    }, []


def _cmd_rate0(config, out_dir):
    _check_fields(config, ("dim", "sigma"), ("tol",))
    sigma = _sigma(config)
    elliptic = sigma.probs.min() > 0.0
    closed = rate_solver.rate_at_zero_closed(sigma) if elliptic else None
    numeric = rate_solver.rate_at_zero_numeric(sigma)
    result = {
        "rate0_closed": closed,
        "rate0_numeric": numeric,
        "minimizer_theta": list(rate_solver.minimizer_theta(sigma)) if elliptic else None,
        "elliptic": elliptic,
    }
    return result, []


def _cmd_saddle(config, out_dir):
    _check_fields(config, ("dim", "sigmas"), ("tol",))
    dim = int(config["dim"])
    sigmas = [ProbVec(dim, np.asarray(p, dtype=np.float64)) for p in config["sigmas"]]
    point = rate_solver.solve_saddle(sigmas, float(config.get("tol", 1e-6)))
    return _jsonable(point), []


def _variational_payload(report):
    result = _jsonable(report)
    result["t_star"] = list(report.saddle.t_star)
    result["theta_star"] = list(report.saddle.theta_star)
    result["gap"] = report.saddle.gap
    return result


def _cmd_variational(config, out_dir):
    if "laws" in config:
        _check_fields(config, ("laws",), ("tol",))
        tol = float(config.get("tol", 1e-6))
        rows = []
        payloads = []
        for entry in config["laws"]:
            report = rate_solver.variational_I0(law_from_dict(entry), tol)
            payloads.append(_variational_payload(report))
            rows.append(
                (
                    report.i0,
                    report.saddle.gap,
                    report.classification.value,
                    report.on_boundary,
                )
            )
        csv_path = Path(out_dir) / "variational_sweep.csv"
        _write_csv(csv_path, ("i0", "gap", "classification", "on_boundary"), rows)
        return {"instances": payloads, "series_file": csv_path.name}, [csv_path.name]
    _check_fields(config, ("law",), ("tol",))
    law = law_from_dict(config["law"])
    report = rate_solver.variational_I0(law, float(config.get("tol", 1e-6)))
    return _variational_payload(report), []


def _cmd_build_strip(config, out_dir):
    if "spec" in config:
        _check_fields(config, ("spec",), ("targets",))
        spec = strip_spec_from_dict(config["spec"])
        report = strip_builder.build_strip_environment(spec, config.get("targets"))
    else:
        _check_fields(config, ("law", "epsilon"), ("M", "M_cap", "tol"))
        law = law_from_dict(config["law"])
        report = strip_builder.optimal_strip_pipeline(
            law,
            float(config["epsilon"]),
            M=float(config.get("M", 20.0)),
            M_cap=float(config.get("M_cap", 200.0)),
            tol=float(config.get("tol", 1e-6)),
        )
    result = _jsonable(report)
    result["spec"] = strip_spec_to_dict(report.spec)
    result["environment"] = periodic_env_to_dict(report.environment)
    return result, []


def _cmd_periodic_rate(config, out_dir):
    _check_fields(config, ("environment",), ("x", "tol", "dp_check_N"))
    env = periodic_env_from_dict(config["environment"])
    tol = float(config.get("tol", 1e-6))
    if "x" in config and config["x"] is not None:
        value = periodic_solver.periodic_rate(env, np.asarray(config["x"], dtype=np.float64), tol)
        return {"x": list(config["x"]), "rate": value}, []
    report = periodic_solver.periodic_rate0(env, tol, dp_check_N=config.get("dp_check_N"))
    return _jsonable(report), []


def _cmd_dp_return(config, out_dir):
    _check_fields(config, ("environment", "N_max"), ("cap",))
    env = periodic_env_from_dict(config["environment"])
    Ns, probs, log_probs = periodic_solver.return_probability_series(
        env, int(config["N_max"]), cap=config.get("cap")
    )
    rows = [(int(n), float(p), float(lp)) for n, p, lp in zip(Ns, probs, log_probs)]
    csv_path = Path(out_dir) / "dp_return_series.csv"
    _write_csv(csv_path, ("N", "probability", "log_probability"), rows)
    keep = np.isfinite(log_probs)
    rate, logn_coef, const = periodic_solver.fit_log_series(Ns[keep], log_probs[keep])
    return {
        "N_max": int(config["N_max"]),
        "final_probability": float(probs[-1]),
        "final_log_probability": float(log_probs[-1]),
        "fitted_rate": rate,
        "fitted_logn_coefficient": logn_coef,
        "series_file": csv_path.name,
    }, [csv_path.name]


def _cmd_simulate(config, out_dir):
    _check_fields(config, ("start", "N", "seed"), ("environment", "law", "box_radius", "env_seed"))
    if "environment" in config:
        env = periodic_env_from_dict(config["environment"])
    else:
        _check_fields(config, ("start", "N", "seed", "law", "box_radius", "env_seed"))
        law = law_from_dict(config["law"])
        env = sample_environment(
            law, Box.centered(law.dim, int(config["box_radius"])), int(config["env_seed"])
        )
    run = simulate.run_walk(env, tuple(config["start"]), int(config["N"]), int(config["seed"]))
    return _jsonable(run), []


def _cmd_occupation(config, out_dir):
    _check_fields(config, ("law", "pipeline_epsilon", "N", "seeds", "epsilon"), ("M", "tilted", "workers"))
    law = law_from_dict(config["law"])
    report = strip_builder.optimal_strip_pipeline(
        law, float(config["pipeline_epsilon"]), M=float(config.get("M", 20.0))
    )
    checks = simulate.occupation_sweep(
        report,
        int(config["N"]),
        [int(s) for s in config["seeds"]],
        float(config["epsilon"]),
        tilted=bool(config.get("tilted", False)),
        workers=int(config.get("workers", 1)),
    )
    return {
        "targets": list(report.target_frequencies),
        "checks": [_jsonable(c) for c in checks],
        "n_passed": sum(c.passed for c in checks),
    }, []


def _cmd_scan(config, out_dir):
    _check_fields(
        config,
        ("law", "target", "epsilon", "delta", "N", "seed"),
        ("center_cap", "first_hit_grid", "first_hit_seeds"),
    )
    law = law_from_dict(config["law"])
    target = periodic_env_from_dict(config["target"])
    cap = config.get("center_cap", 2_000_000)
    report = simulate.scan_for_G(
        law,
        target,
        float(config["epsilon"]),
        float(config["delta"]),
        int(config["N"]),
        int(config["seed"]),
        center_cap=cap,
    )
    if config.get("first_hit_grid") and config.get("first_hit_seeds"):
        stats = simulate.first_hit_over_seeds(
            law,
            target,
            float(config["epsilon"]),
            float(config["delta"]),
            [int(n) for n in config["first_hit_grid"]],
            [int(s) for s in config["first_hit_seeds"]],
            center_cap=cap,
        )
        report = dataclasses.replace(report, first_hit_stats=stats)
    return _jsonable(report), []


def _cmd_dominant(config, out_dir):
    _check_fields(
        config,
        ("law", "epsilon", "delta", "N", "seed"),
        ("pipeline_epsilon", "M", "center_cap"),
    )
    law = law_from_dict(config["law"])
    strip = strip_builder.optimal_strip_pipeline(
        law,
        float(config.get("pipeline_epsilon", 0.05)),
        M=float(config.get("M", 20.0)),
    )
    omega = sample_environment(law, Box.centered(law.dim, 1), int(config["seed"]))
    report = simulate.dominant_event_bound(
        omega,
        strip,
        float(config["epsilon"]),
        float(config["delta"]),
        int(config["N"]),
        center_cap=config.get("center_cap", 2_000_000),
    )
    return _jsonable(report), []


def _cmd_blocks(config, out_dir):
    _check_fields(config, ("environment", "delta", "n"), ("theta", "a_n", "fit_L_max"))
    env = periodic_env_from_dict(config["environment"])
    report = simulate.block_return_bound(
        env,
        float(config["delta"]),
        int(config["n"]),
        theta=None if config.get("theta") is None else np.asarray(config["theta"], dtype=np.float64),
        a_n=config.get("a_n"),
        fit_L_max=config.get("fit_L_max", 64),
    )
    return _jsonable(report), []


def _cmd_quenched(config, out_dir):
    _check_fields(config, ("law", "N_grid", "seeds"), ("samples", "tol", "workers"))
    law = law_from_dict(config["law"])
    rows, report = simulate.quenched_rate_experiment(
        law,
        [int(n) for n in config["N_grid"]],
        [int(s) for s in config["seeds"]],
        samples=int(config.get("samples", 20000)),
        tol=float(config.get("tol", 1e-6)),
        workers=int(config.get("workers", 1)),
    )
    csv_path = Path(out_dir) / "quenched_rates.csv"
    _write_csv(
        csv_path,
        ("N", "estimate", "stderr", "reference"),
        [(r.N, r.rate_estimate, r.rate_stderr, r.reference) for r in rows],
    )
    return {
        "reference_i0": report.i0,
        "rows": [_jsonable(r) for r in rows],
        "all_chebyshev_ok": all(r.chebyshev_ok for r in rows),
        "series_file": csv_path.name,
    }, [csv_path.name]


_HANDLERS = {
    "classify": _cmd_classify,
    "rate0": _cmd_rate0,
    "saddle": _cmd_saddle,
    "variational": _cmd_variational,
    "build-strip": _cmd_build_strip,
    "periodic-rate": _cmd_periodic_rate,
    "dp-return": _cmd_dp_return,
    "simulate": _cmd_simulate,
    "occupation": _cmd_occupation,
    "scan": _cmd_scan,
    "dominant": _cmd_dominant,
    "blocks": _cmd_blocks,
    "quenched-experiment": _cmd_quenched,
}

# defaults echoed into the manifest so that replays resolve identically
_DEFAULTS = {
    "classify": {},
    "rate0": {},
    "saddle": {"tol": 1e-6},
    "variational": {"tol": 1e-6},
    "build-strip": {"M": 20.0, "M_cap": 200.0, "tol": 1e-6},
    "periodic-rate": {"tol": 1e-6, "dp_check_N": None},
    "dp-return": {"cap": None},
    "simulate": {},
    "occupation": {"M": 20.0, "tilted": False, "workers": 1},
    "scan": {"center_cap": 2_000_000},
    "dominant": {"pipeline_epsilon": 0.05, "M": 20.0, "center_cap": 2_000_000},
    "blocks": {"theta": None, "a_n": None, "fit_L_max": 64},
    "quenched-experiment": {"samples": 20000, "tol": 1e-6, "workers": 1},
}


def _resolved_config(command: str, config: dict) -> dict:
    defaults = dict(_DEFAULTS.get(command, {}))
    if command == "build-strip" and "spec" in config:
        defaults = {}
    defaults.update(config)
    return defaults

# which scalar flags each subcommand may override in its config
_FLAG_KEYS = {
    "classify": set(),
    "rate0": {"tol"},
    "saddle": {"tol"},
    "variational": {"tol"},
    "build-strip": {"tol"},
    "periodic-rate": {"tol"},
    "dp-return": {"cap"},
    "simulate": {"seed"},
    "occupation": {"workers"},
    "scan": {"seed"},
    "dominant": {"seed"},
    "blocks": set(),
    "quenched-experiment": {"workers", "tol"},
}


def dispatch(command: str, config: dict, out_dir) -> int:
    """Run one subcommand and write result.json plus a manifest."""
    if command not in _HANDLERS:
        raise ConfigError(f"unknown command {command}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.time()
    config = _resolved_config(command, config)
    result, extra_files = _HANDLERS[command](config, out)
    dump_json(result, out / "result.json")
    manifest = {
        "command": command,
        "config": _jsonable(config),
        "outputs": ["result.json"] + list(extra_files),
        "versions": {
            "rwre_ldp": __version__,
            "numpy": np.__version__,
            "python": sys.version.split()[0],
        },
        "wall_time_s": time.time() - t0,
    }
    dump_json(manifest, out / "manifest.json")
    return 0


def replay(manifest_path, out_dir) -> int:
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    if "command" not in manifest or "config" not in manifest:
        raise ConfigError("manifest needs command and config fields")
    return dispatch(manifest["command"], manifest["config"], out_dir)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="rwre-ldp",
        description="rates at the origin for walks in random and periodic environments",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _HANDLERS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON configuration file")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--workers", type=int, default=None)
        p.add_argument("--tol", type=float, default=None)
        p.add_argument("--cap", type=int, default=None)
    rp = sub.add_parser("replay")
    rp.add_argument("--manifest", required=True)
    rp.add_argument("--out", default=".")

    args = parser.parse_args(argv)
    try:
        if args.command == "replay":
            return replay(args.manifest, args.out)
        try:
            with open(args.config) as fh:
                config = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(config, dict):
            raise ConfigError("config must be a JSON object")
        allowed = _FLAG_KEYS[args.command]
        for flag in ("seed", "workers", "tol", "cap"):
            value = getattr(args, flag, None)
            if value is not None:
                if flag not in allowed:
                    raise ConfigError(f"--{flag} does not apply to {args.command}")
                config[flag] = value
        env_workers = os.environ.get(WORKERS_ENV_VAR)
        if env_workers is not None and "workers" in allowed:
            config["workers"] = int(env_workers)
        return dispatch(args.command, config, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NonConvergenceError as exc:
        print(f"numerical non-convergence: {exc}", file=sys.stderr)
        return 3
    except ResourceCapError as exc:
        print(f"resource cap: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
