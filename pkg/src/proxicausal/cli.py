"""Command-line front end: simulate, allocate, fit, bootstrap, replicate, bridge, report.

The CLI never computes: every number written to an artifact comes from a
library call. Each run resolves its options into a config dict, executes,
writes artifacts atomically (temp file + rename), and records a manifest
with the config, seed, config hash, and package version; ``rerun`` replays a
manifest and reproduces the artifacts byte for byte.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import tempfile
from dataclasses import asdict
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .allocation import allocate_proxies
from .bridge import proximal_g_formula, solve_binary_bridge, solve_categorical_bridge
from .data import CategoricalVariable, Dataset, DiscreteJointLaw, read_dataset
from .dgp import (LongitudinalDgpSpec, PointDgpSpec, default_longitudinal_spec,
                  default_point_spec, generate_longitudinal, generate_point,
                  misspec_longitudinal_spec, misspec_point_spec, probit_point_spec,
                  verify_ground_truth)
from .errors import ConfigSchemaError, DatasetValidationError, ProxicausalError
from .longitudinal import (DEFAULT_MAPS, StageMaps, fit_ipw_msm,
                           fit_longitudinal_g_computation, fit_recursive_ls,
                           named_map)
from .point import (EffectEstimate, fit_ols_baseline, fit_p2sls,
                    fit_proximal_g_computation, fit_standard_g_formula)
from .resampling import bootstrap, summarize_replicates


# ---------------------------------------------------------------------------
# serialization helpers
# ---------------------------------------------------------------------------


def _canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(_canonical_json(cfg).encode()).hexdigest()


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path: Path, obj) -> None:
    _atomic_write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_csv(path: Path, frame: pd.DataFrame) -> None:
    _atomic_write(path, frame.to_csv(index=False))


def spec_to_dict(spec) -> dict:
    kind = "point" if isinstance(spec, PointDgpSpec) else "longitudinal"
    return {"kind": kind, **asdict(spec)}


def _tupled(value):
    if isinstance(value, list):
        return tuple(_tupled(v) for v in value)
    return value


def spec_from_dict(cfg: dict):
    cfg = dict(cfg)
    kind = cfg.pop("kind", None)
    if kind not in ("point", "longitudinal"):
        raise ConfigSchemaError(f"spec config needs kind point|longitudinal, got {kind!r}")
    cls = PointDgpSpec if kind == "point" else LongitudinalDgpSpec
    try:
        return cls(**{k: _tupled(v) for k, v in cfg.items()})
    except TypeError as exc:
        raise ConfigSchemaError(f"bad spec field: {exc}") from exc


_PRESETS = {
    "point": lambda: default_point_spec(),
    "point-unconfounded": lambda: default_point_spec(confounded=False),
    "point-continuous": lambda: default_point_spec(treatment_type="continuous"),
    "point-misspec": misspec_point_spec,
    "point-probit": probit_point_spec,
    "longitudinal": lambda: default_longitudinal_spec(2),
    "longitudinal-unconfounded": lambda: default_longitudinal_spec(2, confounded=False),
    "longitudinal-misspec": misspec_longitudinal_spec,
    "longitudinal-j3": lambda: default_longitudinal_spec(3),
}


def _load_spec(cfg: dict):
    if cfg.get("preset"):
        if cfg["preset"] not in _PRESETS:
            raise ConfigSchemaError(
                f"unknown preset {cfg['preset']!r}; choose from {sorted(_PRESETS)}")
        return _PRESETS[cfg["preset"]]()
    if cfg.get("spec"):
        with open(cfg["spec"]) as fh:
            return spec_from_dict(json.load(fh))
    raise ConfigSchemaError("either --preset or --spec is required")


def ground_truth_to_dict(gt) -> dict:
    return {
        "kind": gt.kind,
        "params": dict(gt.params),
        "regime_means": {",".join(str(int(v)) for v in k): val
                         for k, val in gt.regime_means.items()},
    }


def law_from_dict(cfg: dict) -> DiscreteJointLaw:
    try:
        variables = tuple(CategoricalVariable(v["name"], int(v["n"]))
                          for v in cfg["variables"])
        return DiscreteJointLaw(variables=variables,
                                probabilities=np.asarray(cfg["probabilities"], dtype=float))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigSchemaError(f"bad law config: {exc}") from exc


def _maps_from_config(cfg) -> StageMaps:
    if not cfg:
        return DEFAULT_MAPS

    def resolve(v):
        return tuple(named_map(m) for m in v) if isinstance(v, list) else named_map(v)

    try:
        return StageMaps(
            treatment=resolve(cfg.get("treatment", "cum")),
            w=resolve(cfg.get("w", "concat")),
            x=resolve(cfg.get("x", "concat")),
            z=resolve(cfg.get("z", "concat")),
        )
    except ValueError as exc:
        raise ConfigSchemaError(str(exc)) from exc


def _parse_regimes(text: str | None, J: int) -> list[tuple[int, ...]] | None:
    if not text:
        return None
    regimes = []
    for block in text.split(";"):
        values = tuple(int(v) for v in block.split(","))
        if len(values) != J:
            raise ConfigSchemaError(f"regime {block!r} does not have {J} periods")
        regimes.append(values)
    return regimes


def estimate_vector(est: EffectEstimate) -> tuple[list[str], list[float]]:
    """Flatten an estimate into named parameters (deterministic order)."""
    names, values = [], []
    for key in sorted(est.beta, key=str):
        label = ",".join(str(int(v)) for v in key) if isinstance(key, tuple) else f"{key:g}"
        names.append(f"beta({label})")
        values.append(float(est.beta[key]))
    if est.contrast is not None:
        names.append("contrast")
        values.append(float(est.contrast))
    if est.eta_w is not None:
        for i, v in enumerate(np.atleast_1d(est.eta_w)):
            names.append(f"eta_w[{i}]")
            values.append(float(v))
    return names, values


# ---------------------------------------------------------------------------
# command execution (config dict -> artifacts)
# ---------------------------------------------------------------------------


def _require(cfg: dict, *keys: str) -> None:
    missing = [k for k in keys if cfg.get(k) is None]
    if missing:
        raise ConfigSchemaError(f"missing required config fields: {missing}")


def run_fit(cfg: dict) -> EffectEstimate:
    """Library dispatch for the fit command; shared with bootstrap."""
    _require(cfg, "data", "roles", "method")
    data = read_dataset(cfg["data"], cfg["roles"])
    return fit_on_dataset(cfg, data)


def fit_on_dataset(cfg: dict, data: Dataset) -> EffectEstimate:
    method = cfg["method"]
    grid = tuple(cfg.get("grid", (0.0, 1.0)))
    if method == "ols":
        return fit_ols_baseline(data, adjust=tuple(cfg.get("adjust", ("x",))), grid=grid)
    if method == "gformula":
        return fit_standard_g_formula(data, interactions=bool(cfg.get("interactions", False)),
                                      grid=grid)
    if method == "p2sls":
        return fit_p2sls(data, grid=grid)
    if method == "pgcomp":
        return fit_proximal_g_computation(
            data, bridge=cfg.get("bridge", "linear"), grid=grid,
            force_mc=bool(cfg.get("force_mc", False)), seed=int(cfg.get("seed") or 0))
    maps = _maps_from_config(cfg.get("maps"))
    if method == "recursive":
        regimes = _parse_regimes(cfg.get("regimes"), data.layout.n_periods)
        return fit_recursive_ls(data, maps=maps, regimes=regimes).estimate
    if method == "lgcomp":
        return fit_longitudinal_g_computation(data, maps=maps)
    if method == "ipw":
        return fit_ipw_msm(data)
    raise ConfigSchemaError(f"unknown method {cfg['method']!r}")


def execute(command: str, cfg: dict) -> dict[str, str]:
    """Run one command from its resolved config; returns artifact paths."""
    out = Path(cfg["out"]) if cfg.get("out") else None

    if command == "simulate":
        _require(cfg, "out", "seed", "n")
        spec = _load_spec(cfg)
        verify_ground_truth(spec, n_draws=int(cfg.get("verify_draws", 100_000)),
                            seed=int(cfg["seed"]))
        if isinstance(spec, PointDgpSpec):
            data, truth = generate_point(spec, int(cfg["n"]), seed=int(cfg["seed"]))
            layout = {"kind": "point"}
        else:
            data, truth = generate_longitudinal(spec, int(cfg["n"]), seed=int(cfg["seed"]))
            layout = {"kind": "longitudinal", "J": spec.n_periods}
        frame = pd.DataFrame({c: data.columns[c] for c in data.columns})
        write_csv(out, frame)
        roles_path = out.with_suffix(".roles.json")
        write_json(roles_path, {"roles": data.roles, "layout": layout})
        truth_path = out.with_suffix(".truth.json")
        write_json(truth_path, ground_truth_to_dict(truth))
        return {"data": str(out), "roles": str(roles_path), "truth": str(truth_path)}

    if command == "allocate":
        _require(cfg, "data", "roles", "candidates", "out")
        data = read_dataset(cfg["data"], cfg["roles"])
        result = allocate_proxies(
            data, list(cfg["candidates"]), tie_policy=cfg.get("tie_policy", "prioritize_w"),
            seed=int(cfg.get("seed") or 0), statistic=cfg.get("statistic", "wald"))
        write_json(out, result.to_dict())
        return {"allocation": str(out)}

    if command == "fit":
        _require(cfg, "out")
        est = run_fit(cfg)
        payload = est.to_dict()
        payload["provenance"] = {"seed": cfg.get("seed"), "config_hash": config_hash(cfg),
                                 "version": __version__}
        write_json(out, payload)
        if est.contrast is not None:
            se = "" if est.contrast_se is None else f" (se {est.contrast_se:.4g})"
            print(f"{est.method}: contrast {est.contrast:.6g}{se}")
        else:
            grid = ", ".join(f"{k}: {v:.6g}" for k, v in payload["beta"].items())
            print(f"{est.method}: {grid}")
        return {"result": str(out)}

    if command == "bootstrap":
        _require(cfg, "fit_config", "seed", "out")
        with open(cfg["fit_config"]) as fh:
            fit_cfg = json.load(fh)
        _require(fit_cfg, "data", "roles", "method")
        data = read_dataset(fit_cfg["data"], fit_cfg["roles"])
        names_ref: list[str] = []

        def statistic(d: Dataset):
            names, values = estimate_vector(fit_on_dataset(fit_cfg, d))
            if not names_ref:
                names_ref.extend(names)
            return np.asarray(values)

        point = statistic(data)
        result = bootstrap(statistic, data, B=int(cfg.get("B", 500)),
                           alpha=float(cfg.get("alpha", 0.05)), seed=int(cfg["seed"]),
                           n_jobs=int(cfg.get("jobs", 1)))
        payload = {
            "parameters": names_ref,
            "point": [float(v) for v in point],
            "se": [float(v) for v in result.se],
            "ci": [[float(a), float(b)] for a, b in result.ci],
            "B": result.B, "alpha": result.alpha, "seed": result.seed,
            "n_failed": result.n_failed, "unreliable": result.unreliable,
            "provenance": {"config_hash": config_hash(cfg), "version": __version__},
        }
        write_json(out, payload)
        return {"bootstrap": str(out)}

    if command == "replicate":
        _require(cfg, "seed", "n", "reps", "methods", "out")
        spec = _load_spec(cfg)
        rows, truth_vec = _replication_rows(cfg, spec)
        estimates_path = out.with_suffix(".estimates.csv")
        write_csv(estimates_path, rows)
        summary = _summary_from_estimates(rows, truth_vec)
        write_csv(out, summary)
        truth_path = out.with_suffix(".truth.json")
        write_json(truth_path, {"truth": [float(v) for v in truth_vec]})
        return {"summary": str(out), "estimates": str(estimates_path), "truth": str(truth_path)}

    if command == "report":
        _require(cfg, "estimates", "truth", "out")
        rows = pd.read_csv(cfg["estimates"], float_precision="round_trip")
        with open(cfg["truth"]) as fh:
            truth_vec = np.asarray(json.load(fh)["truth"], dtype=float)
        write_csv(out, _summary_from_estimates(rows, truth_vec))
        return {"summary": str(out)}

    if command == "bridge":
        _require(cfg, "law", "a", "out")
        with open(cfg["law"]) as fh:
            law = law_from_dict(json.load(fh))
        a = int(cfg["a"])
        x = None if cfg.get("x") is None else int(cfg["x"])
        solver = cfg.get("solver", "categorical")
        solve = solve_binary_bridge if solver == "binary" else solve_categorical_bridge
        result = solve(law, a, x)
        payload = {
            "treatment": a, "covariate": x, "solver": solver,
            "h": [float(v) for v in result.h],
            "residual": float(result.residual),
            "rank_deficient": bool(result.rank_deficient),
            "beta": proximal_g_formula(law, a, solver=solver),
        }
        write_json(out, payload)
        table = "  ".join(f"h(w={w})={v:.6g}" for w, v in enumerate(result.h))
        print(f"bridge a={a}" + (f" x={x}" if x is not None else "") + f": {table}")
        print(f"equation residual {result.residual:.2e}; "
              f"deconfounded mean {payload['beta']:.6g}"
              + ("; rank deficient (any solution equivalent)" if result.rank_deficient else ""))
        return {"bridge": str(out)}

    raise ConfigSchemaError(f"unknown command {command!r}")


def _replication_rows(cfg: dict, spec) -> tuple[pd.DataFrame, np.ndarray]:
    from .resampling import run_replication_study

    methods = list(cfg["methods"])
    point_spec = isinstance(spec, PointDgpSpec)
    if point_spec:
        def generate(n, seed_r):
            return generate_point(spec, n, seed=seed_r)[0]
        truth = np.asarray([_load_truth_scalar(spec)])
        estimators = {m: _point_target(m) for m in methods}
    else:
        def generate(n, seed_r):
            return generate_longitudinal(spec, n, seed=seed_r)[0]
        from itertools import product
        regimes = list(product((0, 1), repeat=spec.n_periods))
        from .dgp import longitudinal_do_mean
        truth = np.asarray([longitudinal_do_mean(spec, r) for r in regimes])
        estimators = {m: _longitudinal_target(m, regimes) for m in methods}

    study = run_replication_study(generate, estimators, truth, n=int(cfg["n"]),
                                  reps=int(cfg["reps"]), seed=int(cfg["seed"]),
                                  n_jobs=int(cfg.get("jobs", 1)))
    records = []
    for name, mat in study.estimates.items():
        for r in range(mat.shape[0]):
            for k in range(mat.shape[1]):
                records.append({"rep": r, "estimator": name, "component": k,
                                "value": mat[r, k]})
    return pd.DataFrame.from_records(records), truth


def _load_truth_scalar(spec) -> float:
    return float(spec.treatment_effect)


def _point_target(method: str):
    table = {
        "ols": lambda d: fit_ols_baseline(d).contrast,
        "gformula": lambda d: fit_standard_g_formula(d).contrast,
        "p2sls": lambda d: fit_p2sls(d).contrast,
        "pgcomp": lambda d: fit_proximal_g_computation(d).contrast,
    }
    if method not in table:
        raise ConfigSchemaError(f"method {method!r} is not a point estimator")
    return table[method]


def _longitudinal_target(method: str, regimes):
    def recursive(d):
        est = fit_recursive_ls(d, regimes=regimes).estimate
        return np.asarray([est.beta[r] for r in regimes])

    def lgcomp(d):
        est = fit_longitudinal_g_computation(d)
        return np.asarray([est.beta[r] for r in regimes])

    def ipw(d):
        est = fit_ipw_msm(d)
        return np.asarray([est.beta[r] for r in regimes])

    table = {"recursive": recursive, "lgcomp": lgcomp, "ipw": ipw}
    if method not in table:
        raise ConfigSchemaError(f"method {method!r} is not a longitudinal estimator")
    return table[method]


def _summary_from_estimates(rows: pd.DataFrame, truth: np.ndarray) -> pd.DataFrame:
    estimates = {}
    for name, block in rows.groupby("estimator"):
        pivot = block.pivot(index="rep", columns="component", values="value")
        # match the in-memory layout of the direct path so that reduction
        # order (and therefore every emitted digit) is identical
        estimates[str(name)] = np.ascontiguousarray(pivot.to_numpy())
    summaries = summarize_replicates(estimates, truth)
    records = []
    for s in sorted(summaries, key=lambda s: s.name):
        for k in range(s.mean.size):
            records.append({
                "estimator": s.name, "component": k, "truth": float(truth[k]),
                "mean": float(s.mean[k]), "bias": float(s.bias[k]),
                "mc_se": float(s.mc_se[k]), "sd": float(s.sd[k]),
                "n_failed": s.n_failed,
            })
    return pd.DataFrame.from_records(records)


# ---------------------------------------------------------------------------
# manifest handling and argument parsing
# ---------------------------------------------------------------------------


def write_manifest(command: str, cfg: dict, artifacts: dict[str, str]) -> Path:
    primary = Path(next(iter(artifacts.values())))
    manifest = {
        "command": command,
        "config": cfg,
        "seed": cfg.get("seed"),
        "config_hash": config_hash(cfg),
        "version": __version__,
        "artifacts": artifacts,
    }
    path = Path(str(primary) + ".manifest.json")
    write_json(path, manifest)
    return path


def run_command(command: str, cfg: dict, quiet: bool = False) -> dict[str, str]:
    artifacts = execute(command, cfg)
    manifest = write_manifest(command, cfg, artifacts)
    if not quiet:
        for name, path in artifacts.items():
            print(f"{name}: {path}")
        print(f"manifest: {manifest}")
    return artifacts


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="proxicausal",
        description="Proximal causal effect estimation with confounding proxies.")
    parser.add_argument("--quiet", action="store_true", help="suppress the artifact listing")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="draw a synthetic dataset with known effects")
    sim.add_argument("--preset", choices=sorted(_PRESETS))
    sim.add_argument("--spec", help="path to a spec JSON (alternative to --preset)")
    sim.add_argument("--n", type=int, required=True)
    sim.add_argument("--seed", type=int, required=True)
    sim.add_argument("--out", required=True, help="output CSV path")

    alloc = sub.add_parser("allocate", help="partition candidate proxies into Z and W")
    alloc.add_argument("--data", required=True)
    alloc.add_argument("--roles", required=True)
    alloc.add_argument("--candidates", required=True, help="comma-separated column names")
    alloc.add_argument("--tie-policy", default="prioritize_w",
                       choices=("prioritize_w", "prioritize_z", "randomize"))
    alloc.add_argument("--statistic", default="wald", choices=("wald", "coefficient"))
    alloc.add_argument("--seed", type=int, default=0)
    alloc.add_argument("--out", required=True)

    fit = sub.add_parser("fit", help="fit one estimator to a dataset")
    fit.add_argument("--data", required=True)
    fit.add_argument("--roles", required=True)
    fit.add_argument("--method", required=True,
                     choices=("ols", "gformula", "p2sls", "pgcomp",
                              "recursive", "lgcomp", "ipw"))
    fit.add_argument("--bridge", default="linear", choices=("linear", "probit"))
    fit.add_argument("--adjust", default="x", help="comma subset of x,w,z for ols")
    fit.add_argument("--interactions", action="store_true")
    fit.add_argument("--grid", default="0,1", help="comma-separated treatment grid")
    fit.add_argument("--regimes", help='e.g. "0,0;0,1;1,0;1,1"')
    fit.add_argument("--maps", help="path to a feature-maps JSON")
    fit.add_argument("--seed", type=int)
    fit.add_argument("--out", required=True)

    boot = sub.add_parser("bootstrap", help="percentile bootstrap of a fit config")
    boot.add_argument("--fit-config", required=True)
    boot.add_argument("--B", type=int, default=500)
    boot.add_argument("--alpha", type=float, default=0.05)
    boot.add_argument("--seed", type=int, required=True)
    boot.add_argument("--jobs", type=int, default=1)
    boot.add_argument("--out", required=True)

    rep = sub.add_parser("replicate", help="replication study on a synthetic spec")
    rep.add_argument("--preset", choices=sorted(_PRESETS))
    rep.add_argument("--spec")
    rep.add_argument("--methods", required=True, help="comma-separated method names")
    rep.add_argument("--n", type=int, required=True)
    rep.add_argument("--reps", type=int, required=True)
    rep.add_argument("--seed", type=int, required=True)
    rep.add_argument("--jobs", type=int, default=1)
    rep.add_argument("--out", required=True, help="summary CSV path")

    brg = sub.add_parser("bridge", help="solve a discrete bridge and print diagnostics")
    brg.add_argument("--law", required=True, help="path to a joint-law JSON")
    brg.add_argument("--a", type=int, required=True)
    brg.add_argument("--x", type=int)
    brg.add_argument("--solver", default="categorical", choices=("binary", "categorical"))
    brg.add_argument("--out", required=True)

    repo = sub.add_parser("report", help="bias table from stored replication estimates")
    repo.add_argument("--estimates", required=True)
    repo.add_argument("--truth", required=True)
    repo.add_argument("--out", required=True)

    rerun = sub.add_parser("rerun", help="re-execute a manifest byte-identically")
    rerun.add_argument("manifest")
    return parser


def _config_from_args(args: argparse.Namespace) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k not in ("command", "quiet") and v is not None}
    if "candidates" in cfg:
        cfg["candidates"] = [c for c in str(cfg["candidates"]).split(",") if c]
    if "methods" in cfg:
        cfg["methods"] = [m for m in str(cfg["methods"]).split(",") if m]
    if "adjust" in cfg:
        cfg["adjust"] = [a for a in str(cfg["adjust"]).split(",") if a]
    if "grid" in cfg:
        cfg["grid"] = [float(v) for v in str(cfg["grid"]).split(",")]
    if "maps" in cfg:
        with open(cfg.pop("maps")) as fh:
            cfg["maps"] = json.load(fh)
    return cfg


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "rerun":
            with open(args.manifest) as fh:
                manifest = json.load(fh)
            for key in ("command", "config"):
                if key not in manifest:
                    raise ConfigSchemaError(f"manifest is missing {key!r}")
            run_command(manifest["command"], manifest["config"], quiet=args.quiet)
        else:
            run_command(args.command, _config_from_args(args), quiet=args.quiet)
        return 0
    except (ConfigSchemaError, DatasetValidationError) as exc:
        diag = {"error": type(exc).__name__, "message": str(exc)}
        if isinstance(exc, DatasetValidationError):
            diag["issues"] = [
                {"code": i.code, "column": i.column, "row": i.row, "message": i.message}
                for i in exc.issues
            ]
        print(json.dumps(diag), file=sys.stderr)
        return 2
    except (ProxicausalError, OSError, ValueError, KeyError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
