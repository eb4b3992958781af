"""Reproducible experiment driver: config parsing, runs, and file outputs.

Every run is fully determined by its JSON config (seed mandatory); outputs
are samples.csv (value columns plus weight), diagnostics.csv (per-iteration
records), and summary.json. The bench subcommand sweeps factor counts or
particle budgets and consolidates one row per (method, point).
"""

import argparse
import csv
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from .errors import ConfigInvalid, FusionError
from .estimators import EstimatorConfig
from .guidance import (
    AdaptiveMeshPolicy,
    GuidanceContext,
    recommend_T,
    regular_mesh,
)
from .hierarchy import build_tree, dc_fusion
from .linalg import weighted_mean_cov
from .metrics import DensitySide, consensus_merge, gaussian_density_side, iad
from .models import rwm_chain, load_regression_csv
from .problems import (
    gaussian_equal_factors,
    gaussian_target_of,
    logistic_synthetic_problem,
    regression_model_from_config,
    shard_regression_data,
)
from .smc import gbf, mcf_rejection, regular_times

log = logging.getLogger("fusionmc")

PROBLEMS = (
    "gaussian-synthetic",
    "logistic-synthetic",
    "logistic-csv",
    "robust-csv",
    "negbin-csv",
)
METHODS = ("gbf", "dcfusion", "mcf", "cmc")
MESH_KINDS = ("fixed", "guided-regular", "guided-adaptive")
TREES = ("fork-join", "balanced-binary", "progressive", "tempered")


def _require(cfg, field, types, path=""):
    loc = f"{path}{field}"
    if field not in cfg:
        raise ConfigInvalid(f"missing required field {loc!r}")
    val = cfg[field]
    if not isinstance(val, types):
        raise ConfigInvalid(f"field {loc!r} has wrong type {type(val).__name__}")
    return val


def validate_config(cfg: dict) -> dict:
    """Normalize and validate; raises ConfigInvalid naming the field path."""
    cfg = dict(cfg)
    problem = _require(cfg, "problem", str)
    if problem not in PROBLEMS:
        raise ConfigInvalid(f"field 'problem' must be one of {PROBLEMS}")
    for field in ("C", "N"):
        val = _require(cfg, field, int)
        if isinstance(val, bool) or val < 1:
            raise ConfigInvalid(f"field {field!r} must be a positive integer")
    seed = _require(cfg, "seed", int)
    if isinstance(seed, bool) or seed < 0:
        raise ConfigInvalid("field 'seed' must be a nonnegative integer")
    method = _require(cfg, "method", str)
    if method not in METHODS:
        raise ConfigInvalid(f"field 'method' must be one of {METHODS}")
    mesh = cfg.setdefault("mesh", {"kind": "guided-adaptive"})
    kind = _require(mesh, "kind", str, "mesh.")
    if kind not in MESH_KINDS:
        raise ConfigInvalid(f"field 'mesh.kind' must be one of {MESH_KINDS}")
    if kind == "fixed":
        big_t = _require(mesh, "T", (int, float), "mesh.")
        n = _require(mesh, "n", int, "mesh.")
        if big_t <= 0 or n < 1:
            raise ConfigInvalid("fields 'mesh.T' and 'mesh.n' must be positive")
    guidance = cfg.setdefault("guidance", {})
    guidance.setdefault("zeta", 0.5)
    guidance.setdefault("zeta_prime", 0.5)
    guidance.setdefault("regime", "sh")
    guidance.setdefault("sh_lambda", 1.0)
    if guidance["regime"] not in ("sh", "ssh"):
        raise ConfigInvalid("field 'guidance.regime' must be 'sh' or 'ssh'")
    for f in ("zeta", "zeta_prime"):
        if not 0.0 < guidance[f] < 1.0:
            raise ConfigInvalid(f"field 'guidance.{f}' must lie in (0, 1)")
    estimator = cfg.setdefault("estimator", {})
    estimator.setdefault("kind", "gpe2")
    estimator.setdefault("beta", 10.0)
    if estimator["kind"] not in ("gpe1", "gpe2"):
        raise ConfigInvalid("field 'estimator.kind' must be 'gpe1' or 'gpe2'")
    if estimator["beta"] <= 0:
        raise ConfigInvalid("field 'estimator.beta' must be positive")
    threads = cfg.setdefault("threads", 1)
    if not isinstance(threads, int) or threads < 1:
        raise ConfigInvalid("field 'threads' must be a positive integer")
    if cfg.get("tree", "balanced-binary") not in TREES:
        raise ConfigInvalid(f"field 'tree' must be one of {TREES}")
    cfg.setdefault("tree", "balanced-binary")
    if problem.endswith("-csv"):
        _require(cfg, "csv", str)
    return cfg


def load_config(path) -> dict:
    with open(path) as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigInvalid(f"config is not valid JSON: {exc}") from exc
    return validate_config(cfg)


def _build_problem(cfg, rng):
    """Returns (models, reference side or None, full-model or None)."""
    problem = cfg["problem"]
    c_count = cfg["C"]
    if problem == "gaussian-synthetic":
        dim = cfg.get("d", 1)
        models = gaussian_equal_factors(c_count, dim=dim)
        mean, cov = gaussian_target_of(models)
        return models, gaussian_density_side(mean, cov), None
    if problem == "logistic-synthetic":
        models, full = logistic_synthetic_problem(
            c_count, cfg["seed"], m=cfg.get("data_size", 1000)
        )
        return models, None, full
    family = problem.split("-")[0]
    params = cfg.get("family_params", {})
    data = load_regression_csv(
        cfg["csv"],
        prior_means=cfg.get("prior_means", 0.0),
        prior_vars=cfg.get("prior_vars", 1.0),
    )
    shards = shard_regression_data(
        data.design,
        data.response,
        c_count,
        rng,
        prior_means=cfg.get("prior_means", 0.0),
        prior_var_scale=cfg.get("prior_vars", 1.0),
    )
    models = [regression_model_from_config(family, s, params) for s in shards]
    full = regression_model_from_config(family, data, params)
    return models, None, full


def _reference_side(cfg, reference, full_model, ref_cache=None):
    ref_cfg = cfg.get("reference", {})
    if ref_cfg.get("kind") == "none":
        return None
    if reference is not None:
        return reference
    if full_model is None:
        return None
    key = (cfg["problem"], cfg["seed"], cfg.get("data_size"), cfg.get("csv"))
    if ref_cache is not None and key in ref_cache:
        return ref_cache[key]
    length = ref_cfg.get("length", 30_000)
    thin = ref_cfg.get("thin", 3)
    burn = ref_cfg.get("burn_in", 5000)
    # dedicated stream: the method draws never depend on the reference run
    rng = np.random.default_rng([cfg["seed"], 0x5EED])
    draws, _ = rwm_chain(
        full_model.log_density,
        full_model.mode,
        full_model.laplace_cov(),
        length // thin,
        rng,
        burn_in=burn,
        thin=thin,
    )
    side = DensitySide.from_samples(draws)
    if ref_cache is not None:
        ref_cache[key] = side
    return side


def _estimator_cfg(cfg) -> EstimatorConfig:
    est = cfg["estimator"]
    return EstimatorConfig(kind=est["kind"], nb_beta=est["beta"])


def _guided_pieces(cfg, models, leaves):
    guidance = cfg["guidance"]
    hints, lams, relammed = [], [], []
    for model, draws in zip(models, leaves):
        hint, lam = weighted_mean_cov(draws)
        hints.append(hint)
        lams.append(lam)
        relammed.append(model.with_lambda(lam))
    ctx = GuidanceContext(
        n_factors=len(models),
        dim=models[0].dim,
        zeta=guidance["zeta"],
        zeta_prime=guidance["zeta_prime"],
        regime=guidance["regime"],
        sh_lambda=guidance["sh_lambda"],
        ssh_gamma=guidance.get("ssh_gamma"),
    )
    return ctx, hints, lams, relammed


def run_method(cfg, rng, ref_cache: dict | None = None):
    """Execute the configured method; returns a result record dict.

    runtime_s covers the method itself; reference construction and the
    distance computation are excluded (and cached across bench runs).
    """
    method = cfg["method"]
    n = cfg["N"]
    cfg_est = _estimator_cfg(cfg)
    mesh_cfg = cfg["mesh"]
    models, reference, full_model = _build_problem(cfg, rng)
    leaf_kwargs = dict(cfg.get("leaf", {}))
    record = {
        "method": method,
        "problem": cfg["problem"],
        "C": cfg["C"],
        "N": n,
        "seed": cfg["seed"],
        "acceptance_rate": None,
        "cess0": None,
        "n_mesh": 0,
        "diagnostics": [],
    }
    start = time.perf_counter()
    if method == "cmc":
        draws = [m.sample_leaf(n, rng, **leaf_kwargs) for m in models]
        merged = consensus_merge(draws)
        record["samples"] = merged
        record["weights"] = np.full(n, 1.0 / n)
    elif method == "mcf":
        big_t = mesh_cfg.get("T", 1.0)
        samples, rate = mcf_rejection(models, big_t, n, rng)
        record["samples"] = samples
        record["weights"] = np.full(n, 1.0 / n)
        record["acceptance_rate"] = rate
        record["n_mesh"] = 1
    elif method == "gbf":
        leaves = [m.sample_leaf(n, rng, **leaf_kwargs) for m in models]
        ctx, hints, lams, relammed = _guided_pieces(cfg, models, leaves)
        if mesh_cfg["kind"] == "fixed":
            result = gbf(
                relammed,
                leaves,
                regular_times(mesh_cfg["T"], mesh_cfg["n"]),
                n,
                rng,
                estimator_cfg=cfg_est,
            )
        else:
            big_t = recommend_T(ctx)
            if mesh_cfg["kind"] == "guided-adaptive":
                result = gbf(
                    relammed,
                    leaves,
                    None,
                    n,
                    rng,
                    estimator_cfg=cfg_est,
                    adaptive_policy=AdaptiveMeshPolicy(big_t, ctx, hints, lams),
                )
            else:
                result = gbf(
                    relammed,
                    leaves,
                    None,
                    n,
                    rng,
                    estimator_cfg=cfg_est,
                    mesh_builder=lambda cloud: regular_mesh(
                        big_t, cloud, ctx, hints, lams
                    ),
                    big_t=big_t,
                )
        record.update(_fusion_record(result))
    elif method == "dcfusion":
        guidance = cfg["guidance"]
        tree = build_tree(cfg["tree"], cfg["C"], beta=cfg.get("temper_beta"))
        mesh_policy = mesh_cfg["kind"] if mesh_cfg["kind"] != "fixed" else "fixed"
        out = dc_fusion(
            tree,
            models,
            n,
            rng,
            ctx_kwargs={
                "zeta": guidance["zeta"],
                "zeta_prime": guidance["zeta_prime"],
                "regime": guidance["regime"],
                "sh_lambda": guidance["sh_lambda"],
            },
            estimator_cfg=cfg_est,
            mesh_policy=mesh_policy,
            fixed_mesh=(mesh_cfg.get("T"), mesh_cfg.get("n"))
            if mesh_cfg["kind"] == "fixed"
            else None,
            leaf_kwargs=leaf_kwargs,
        )
        record["samples"] = out.samples
        record["weights"] = out.weights
        if out.root is not None:
            record.update(_fusion_record(out.root))
    record["runtime_s"] = time.perf_counter() - start
    ref_side = _reference_side(cfg, reference, full_model, ref_cache)
    if ref_side is not None:
        record["iad"] = iad(
            DensitySide.from_samples(record["samples"], record["weights"]), ref_side
        )
    else:
        record["iad"] = None
    return record


def _fusion_record(result):
    return {
        "samples": result.samples,
        "weights": result.weights,
        "cess0": result.cess0,
        "n_mesh": result.mesh_used.n_intervals,
        "diagnostics": [
            {
                "iter": r.iteration,
                "t_j": r.t,
                "cess": r.cess,
                "ess": r.ess_before,
                "resampled": int(r.resampled),
                "delta_j": r.delta,
            }
            for r in result.diagnostics
        ],
    }


def _fmt(x) -> str:
    return repr(float(x))


def write_outputs(record, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    samples = np.atleast_2d(record["samples"])
    weights = record["weights"]
    with open(out / "samples.csv", "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"x{j}" for j in range(samples.shape[1])] + ["weight"])
        for row, w in zip(samples, weights):
            writer.writerow([_fmt(v) for v in row] + [_fmt(w)])
    with open(out / "diagnostics.csv", "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["iter", "t_j", "cess", "ess", "resampled", "delta_j"])
        for r in record["diagnostics"]:
            writer.writerow(
                [
                    r["iter"],
                    _fmt(r["t_j"]),
                    _fmt(r["cess"]),
                    _fmt(r["ess"]),
                    r["resampled"],
                    _fmt(r["delta_j"]),
                ]
            )
    summary = {
        "method": record["method"],
        "problem": record["problem"],
        "C": record["C"],
        "N": record["N"],
        "seed": record["seed"],
        "iad": record["iad"],
        "runtime_s": record.get("runtime_s"),
        "n_mesh": record["n_mesh"],
        "acceptance_rate": record["acceptance_rate"],
        "cess0": record["cess0"],
    }
    with open(out / "summary.json", "w", newline="\n") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


def run_config(cfg_or_path, out_dir) -> int:
    """Validate, run, and write outputs; returns a process exit status."""
    if isinstance(cfg_or_path, (str, os.PathLike)):
        cfg = load_config(cfg_or_path)
    else:
        cfg = validate_config(cfg_or_path)
    rng = np.random.default_rng(cfg["seed"])
    record = run_method(cfg, rng)
    write_outputs(record, out_dir)
    log.info(
        "%s on %s: iad=%s runtime=%.2fs",
        cfg["method"],
        cfg["problem"],
        record["iad"],
        record["runtime_s"],
    )
    return 0


def bench_sweep(base_cfg: dict, out_dir) -> Path:
    """One row per sweep point per method: method,C,N,iad,runtime_s,n_mesh."""
    base = dict(base_cfg)
    sweep = base.pop("sweep", None)
    methods = base.pop("methods", [base.get("method", "gbf")])
    if not sweep or len(sweep) != 1 or next(iter(sweep)) not in ("C", "N"):
        raise ConfigInvalid("field 'sweep' must be {'C': [...]} or {'N': [...]}")
    axis, values = next(iter(sweep.items()))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    ref_cache: dict = {}
    for value in values:
        for method in methods:
            cfg = dict(base)
            cfg[axis] = int(value)
            cfg["method"] = method
            cfg = validate_config(cfg)
            rng = np.random.default_rng(cfg["seed"])
            record = run_method(cfg, rng, ref_cache=ref_cache)
            rows.append(
                {
                    "method": method,
                    "C": cfg["C"],
                    "N": cfg["N"],
                    "iad": record["iad"],
                    "runtime_s": record["runtime_s"],
                    "n_mesh": record["n_mesh"],
                }
            )
            log.info(
                "bench %s %s=%s done in %.2fs", method, axis, value, record["runtime_s"]
            )
    path = out / "bench.csv"
    with open(path, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["method", "C", "N", "iad", "runtime_s", "n_mesh"])
        for r in rows:
            writer.writerow(
                [
                    r["method"],
                    r["C"],
                    r["N"],
                    "" if r["iad"] is None else _fmt(r["iad"]),
                    _fmt(r["runtime_s"]),
                    r["n_mesh"],
                ]
            )
    return path


def _read_samples_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader if row]
    arr = np.asarray(rows)
    if "weight" in header:
        w_idx = header.index("weight")
        weights = arr[:, w_idx]
        samples = np.delete(arr, w_idx, axis=1)
    else:
        samples, weights = arr, None
    return samples, weights


def iad_command(samples_path, reference_path, out_dir=None) -> float:
    samples, weights = _read_samples_csv(samples_path)
    ref_samples, ref_weights = _read_samples_csv(reference_path)
    val = iad(
        DensitySide.from_samples(samples, weights),
        DensitySide.from_samples(ref_samples, ref_weights),
    )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "iad.json", "w") as fh:
            json.dump({"iad": val}, fh)
            fh.write("\n")
    return val


def _add_common(parser):
    parser.add_argument("--config", required=True, help="path to JSON config")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="override seed")
    parser.add_argument("--threads", type=int, default=None, help="override threads")


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("FUSION_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = argparse.ArgumentParser(prog="fusionmc")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, method in (
        ("fuse", "gbf"),
        ("dcfuse", "dcfusion"),
        ("mcf", "mcf"),
        ("cmc", "cmc"),
    ):
        p = sub.add_parser(name, help=f"run the {method} method")
        _add_common(p)
        p.set_defaults(method=method)
    p = sub.add_parser("bench", help="sweep C or N over methods")
    _add_common(p)
    p = sub.add_parser("iad", help="distance between two sample CSVs")
    p.add_argument("--samples", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--out", default=None)
    args = parser.parse_args(argv)
    try:
        if args.command == "iad":
            val = iad_command(args.samples, args.reference, args.out)
            print(json.dumps({"iad": val}))
            return 0
        if args.command == "bench":
            with open(args.config) as fh:
                raw = json.load(fh)
            if args.seed is not None:
                raw["seed"] = args.seed
            if args.threads is not None:
                raw["threads"] = args.threads
            bench_sweep(raw, args.out)
            return 0
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg["seed"] = args.seed
        if args.threads is not None:
            cfg["threads"] = args.threads
        cfg["method"] = args.method
        return run_config(cfg, args.out)
    except (ConfigInvalid, FusionError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
