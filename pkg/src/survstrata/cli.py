"""Command-line front end.

Pipeline: ``fit`` -> ``stratify`` -> ``refit`` -> ``curves`` -> ``report``, with
``simulate``, ``compare``, ``diag`` and ``study`` alongside.  Every command
resolves its configuration from defaults, then an optional JSON config file,
then explicit flags, and writes the resolved result to ``<out>/config.echo``.

Output layout under ``--out``::

    config.echo
    chain/          chain.csv, loglik.csv, clusters.csv, k_trace.csv, params.json
    partition/      partition.csv, summary.csv
    refit/          stratum_<j>/ (chain files), coefficients.csv
    report/         scores.csv, coefficients.csv, curve_stratum_<j>.csv, km_stratum_<j>.csv,
                    diagnostics.csv, diagnostics.json, report.json
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import artifacts as io
from .errors import ConfigError, InputDomainError, UnsupportedMeasureError
from .inference import (derive_seed, diagnostics, kaplan_meier, lpml, predictive_survival,
                        stratum_refit, waic)
from .kernels import KernelFamily
from .mixing import BaseMeasure, measure_from_dict, measure_to_dict
from .partitions import optimal_partition
from .sampler import ModelVariant, SamplerConfig, run
from .simulation import (RESULT_COLUMNS, DgpSpec, StudyConfig, apply_censoring, generate,
                         replicate_study, summarize_study)

log = logging.getLogger("survstrata")

DEFAULTS = {
    "data": None,
    "out": "out",
    "variant": "M0",
    "family": "type-I-minimum",
    "measure": {"kind": "NIG", "alpha": 1.0, "tau": 1.0},
    "sampler": SamplerConfig().to_dict(),
    "center": False,
    "workers": 1,
    "min_stratum_size": 2,
    "level": 0.95,
    "grid_size": 100,
    "kernels": ["type-I-minimum", "logistic", "normal"],
}

# flag name -> (section, key); section None means top level
_FLAG_MAP = {
    "data": (None, "data"), "out": (None, "out"), "variant": (None, "variant"),
    "family": (None, "family"), "center": (None, "center"), "workers": (None, "workers"),
    "min_stratum_size": (None, "min_stratum_size"), "level": (None, "level"),
    "grid_size": (None, "grid_size"), "kernels": (None, "kernels"),
    "measure": ("measure", "kind"), "alpha": ("measure", "alpha"), "tau": ("measure", "tau"),
    "mass": ("measure", "mass"), "py_theta": ("measure", "theta_py"), "py_sigma": ("measure", "sigma_py"),
    "iters": ("sampler", "iters"), "burnin": ("sampler", "burnin"), "thin": ("sampler", "thin"),
    "r_aux": ("sampler", "r_aux"), "seed": ("sampler", "seed"),
    "no_adapt": ("sampler", "adapt"), "fixed_tau": ("sampler", "tau_prior"),
}


def resolve_config(args: argparse.Namespace) -> dict:
    """Defaults < config file < explicit flags; validated before any compute."""
    cfg = json.loads(json.dumps(DEFAULTS))
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config file {path} not found")
        try:
            user = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        unknown = set(user) - set(cfg)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for key, val in user.items():
            if isinstance(cfg[key], dict) and isinstance(val, dict):
                if key == "measure" and "kind" in val and val["kind"] != cfg[key].get("kind"):
                    cfg[key] = {}
                cfg[key].update(val)
            else:
                cfg[key] = val
    for flag, (section, key) in _FLAG_MAP.items():
        val = getattr(args, flag, None)
        if val is None or val is False:
            continue
        if flag == "no_adapt":
            val = False
        elif flag == "fixed_tau":
            val = None
        if section is None:
            cfg[key] = val
        else:
            if section == "measure" and key == "kind" and val.upper() != cfg["measure"].get("kind"):
                cfg["measure"] = {}
            cfg[section][key] = val.upper() if key == "kind" else val
    return validate_config(cfg)


def validate_config(cfg: dict) -> dict:
    cfg["variant"] = ModelVariant.parse(cfg["variant"]).value
    cfg["family"] = KernelFamily.parse(cfg["family"]).label
    cfg["kernels"] = [KernelFamily.parse(k).label for k in cfg["kernels"]]
    cfg["measure"] = _measure_dict(cfg["measure"])
    SamplerConfig.from_dict(cfg["sampler"]).validate()
    if not 0 < float(cfg["level"]) < 1:
        raise ConfigError("level must lie in (0, 1)")
    if int(cfg["grid_size"]) < 2 or int(cfg["workers"]) < 1 or int(cfg["min_stratum_size"]) < 1:
        raise ConfigError("grid_size >= 2, workers >= 1 and min_stratum_size >= 1 are required")
    return cfg


def _measure_dict(d: dict) -> dict:
    return measure_to_dict(measure_from_dict(d))


def _sampler_config(cfg: dict, **overrides) -> SamplerConfig:
    return replace(SamplerConfig.from_dict(cfg["sampler"]), **overrides)


def _echo(cfg: dict, command: str):
    out = Path(cfg["out"])
    io.write_json(out / "config.echo", {"command": command, **cfg})


def _require_data(cfg: dict):
    if not cfg["data"]:
        raise ConfigError("a data file is required (--data or config 'data')")
    return io.load_dataset(cfg["data"], center=bool(cfg["center"]))


# --- commands ---------------------------------------------------------------------


def _write_diagnostics(chain, directory: Path, max_lag: int = 50):
    series = chain.k_trace[chain.meta["config"]["burnin"]:] if chain.k_trace.size else chain.k
    series = np.asarray(series, dtype=float)
    report = {"accept_rates": chain.accept_rates, "draws": len(chain),
              "mean_k": float(np.mean(chain.k)), "geweke_z": None, "degenerate": None}
    acf = np.zeros(0)
    try:
        d = diagnostics(series, max_lag)
        report["geweke_z"] = None if d.degenerate else d.geweke_z
        report["degenerate"] = d.degenerate
        acf = d.acf
    except InputDomainError as exc:
        report["note"] = str(exc)
    io.write_csv(directory / "diagnostics.csv", ["lag", "acf"], enumerate(acf))
    io.write_json(directory / "diagnostics.json", report)
    return report


def cmd_simulate(args, cfg):
    seed = cfg["sampler"]["seed"]
    rng = np.random.default_rng(derive_seed(seed, "simulate"))
    spec = DgpSpec.preset(args.dgp, args.n)
    data, truth = generate(spec, rng)
    data = apply_censoring(data, args.censor, rng)
    out = Path(cfg["out"])
    io.write_survival_csv(out / "data.csv", data)
    io.write_partition(out / "truth.csv", truth)
    print(f"wrote {data.n} rows ({data.n_censored} censored) to {out / 'data.csv'}")


def cmd_fit(args, cfg):
    data = _require_data(cfg)
    chain = run(data, cfg["variant"], cfg["family"], measure_from_dict(cfg["measure"]),
                _sampler_config(cfg))
    out = Path(cfg["out"]) / "chain"
    io.save_chain(out, chain)
    rep = _write_diagnostics(chain, out)
    print(f"{len(chain)} draws written to {out}; mean k = {rep['mean_k']:.2f}")


def _stratum_rows(partition, data):
    rows = []
    for j, members in enumerate(partition.blocks()):
        exact = int(data.delta[members].sum())
        rows.append([j + 1, members.size, exact, members.size - exact, int(members.size == 1)])
    return rows


def cmd_stratify(args, cfg):
    out = Path(cfg["out"])
    chain = io.load_chain(out / "chain")
    est, loss = optimal_partition(chain.partitions())
    io.write_partition(out / "partition" / "partition.csv", est)
    rows = []
    if cfg["data"]:
        data = _require_data(cfg)
        if data.n != est.n:
            raise InputDomainError("data file does not match the chain")
        rows = _stratum_rows(est, data)
    else:
        rows = [[j + 1, s, "", "", int(s == 1)] for j, s in enumerate(est.sizes)]
    io.write_csv(out / "partition" / "summary.csv",
                 ["stratum", "total", "exact", "censored", "singleton"], rows)
    io.write_json(out / "partition" / "loss.json", {"expected_vi": loss, "k": est.k})
    print(f"optimal partition: {est.k} strata, sizes {est.sizes.tolist()}, expected VI {loss:.4f}")


def _coefficient_rows(fits):
    rows = []
    for j, fit in sorted(fits.items()):
        for s in fit.summaries:
            rows.append([j + 1, s.name, s.median, s.lo, s.hi, int(s.excludes_zero)])
    return rows


COEF_HEADER = ["stratum", "parameter", "median", "lo", "hi", "excludes_zero"]


def cmd_refit(args, cfg):
    out = Path(cfg["out"])
    data = _require_data(cfg)
    partition = io.read_partition(out / "partition" / "partition.csv")
    fits = stratum_refit(data, partition, cfg["variant"], cfg["family"],
                         measure_from_dict(cfg["measure"]), _sampler_config(cfg),
                         min_size=int(cfg["min_stratum_size"]), level=float(cfg["level"]),
                         workers=int(cfg["workers"]))
    for j, fit in fits.items():
        io.save_chain(out / "refit" / f"stratum_{j + 1}", fit.chain)
    io.write_csv(out / "refit" / "coefficients.csv", COEF_HEADER, _coefficient_rows(fits))
    skipped = [j + 1 for j, b in enumerate(partition.blocks()) if j not in fits]
    print(f"refit {len(fits)} strata" + (f"; skipped singleton strata {skipped}" if skipped else ""))


def _refit_dirs(out: Path):
    root = out / "refit"
    if not root.exists():
        return []
    return sorted((int(p.name.split("_")[1]), p) for p in root.glob("stratum_*") if p.is_dir())


def cmd_curves(args, cfg):
    out = Path(cfg["out"])
    data = _require_data(cfg)
    partition = io.read_partition(out / "partition" / "partition.csv")
    dirs = _refit_dirs(out)
    if not dirs:
        raise FileNotFoundError(f"no refit chains under {out / 'refit'}")
    t_max = float(np.max(data.times))
    grid = np.linspace(t_max / cfg["grid_size"], t_max, int(cfg["grid_size"]))
    blocks = partition.blocks()
    for label, d in dirs:
        chain = io.load_chain(d)
        family = KernelFamily.parse(chain.meta["family"])
        rng = np.random.default_rng(derive_seed(cfg["sampler"]["seed"], f"curve-{label}"))
        curve = predictive_survival(chain, measure_from_dict(chain.meta["measure"]), family,
                                    BaseMeasure.from_dict(chain.meta["base"]), grid,
                                    level=float(cfg["level"]), rng=rng)
        io.write_csv(out / "report" / f"curve_stratum_{label}.csv", ["t", "mean", "lo", "hi"],
                     zip(curve.t_grid, curve.mean, curve.lo, curve.hi))
        rows = blocks[label - 1]
        km = kaplan_meier(data.times[rows], data.delta[rows])
        io.write_csv(out / "report" / f"km_stratum_{label}.csv", ["t", "survival", "at_risk", "events"],
                     zip(km.times, km.survival, km.at_risk.astype(int), km.events.astype(int)))
    print(f"wrote curves for {len(dirs)} strata to {out / 'report'}")


def cmd_compare(args, cfg):
    out = Path(cfg["out"])
    data = _require_data(cfg)
    rows = []
    for kernel in cfg["kernels"]:
        seed = derive_seed(cfg["sampler"]["seed"], f"compare-{kernel}")
        chain = run(data, cfg["variant"], kernel, measure_from_dict(cfg["measure"]),
                    _sampler_config(cfg, seed=seed))
        io.save_chain(out / "chain" / "compare" / kernel, chain)
        rows.append([kernel, lpml(chain), waic(chain)])
        print(f"{kernel}: LPML {rows[-1][1]:.3f}  WAIC {rows[-1][2]:.3f}")
    io.write_csv(out / "report" / "scores.csv", ["kernel", "lpml", "waic"], rows)


def cmd_diag(args, cfg):
    out = Path(cfg["out"])
    chain = io.load_chain(out / "chain")
    rep = _write_diagnostics(chain, out / "report", args.max_lag)
    print(json.dumps(rep, indent=2, sort_keys=True))


def cmd_study(args, cfg):
    out = Path(cfg["out"])
    if args.study:
        study = StudyConfig.from_dict(json.loads(Path(args.study).read_text()))
    else:
        study = StudyConfig(sampler=cfg["sampler"], measure=cfg["measure"])
    if args.replicates:
        study.replicates = args.replicates
    if cfg["workers"] > 1:
        study.workers = int(cfg["workers"])
    study.validate()
    io.write_json(out / "study" / "study.json", study.to_dict())
    rows = replicate_study(study)
    io.write_csv(out / "study" / "results.csv", RESULT_COLUMNS, ([r[c] for c in RESULT_COLUMNS] for r in rows))
    summary = summarize_study(rows)
    if summary:
        cols = list(summary[0])
        io.write_csv(out / "study" / "summary.csv", cols, ([s[c] for c in cols] for s in summary))
    for s in summary:
        print(f"{s['dgp']} {s['variant']} {s['kernel']} n={s['n']} censor={s['censor_level']:g}: "
              f"mean RAND {s['mean_rand_index']:.3f}, mean k {s['mean_k_hat']:.2f}, failed {s['failed']}")


def cmd_report(args, cfg):
    """Assemble whatever artifacts exist and list the missing ones explicitly."""
    out = Path(cfg["out"])
    rep_dir = out / "report"
    present, gaps = [], []

    def attempt(name, fn):
        try:
            fn()
            present.append(name)
        except (FileNotFoundError, InputDomainError, ConfigError) as exc:
            gaps.append({"artifact": name, "reason": str(exc)})

    def scores():
        if (rep_dir / "scores.csv").exists():
            return
        chain = io.load_chain(out / "chain")
        io.write_csv(rep_dir / "scores.csv", ["kernel", "lpml", "waic"],
                     [[chain.meta["family"], lpml(chain), waic(chain)]])

    def coefficients():
        header, rows = io.read_csv(out / "refit" / "coefficients.csv")
        io.write_csv(rep_dir / "coefficients.csv", header, rows)

    def curves():
        if not list(rep_dir.glob("curve_stratum_*.csv")):
            cmd_curves(args, cfg)

    def diag():
        _write_diagnostics(io.load_chain(out / "chain"), rep_dir)

    attempt("scores", scores)
    attempt("coefficients", coefficients)
    attempt("curves", curves)
    attempt("diagnostics", diag)
    io.write_json(rep_dir / "report.json", {"present": present, "gaps": gaps})
    for g in gaps:
        print(f"gap: {g['artifact']}: {g['reason']}")
    print(f"report written to {rep_dir} ({len(present)} sections, {len(gaps)} gaps)")


# --- parser -------------------------------------------------------------------------


def _common(p: argparse.ArgumentParser):
    g = p.add_argument_group("run configuration")
    g.add_argument("--config", help="JSON config file; explicit flags override it")
    g.add_argument("--data", help="CSV with header time,status,x1..xp (status 1 = exact event)")
    g.add_argument("--out", help="output directory")
    g.add_argument("--variant", choices=["M0", "M1", "M2"])
    g.add_argument("--family", help="type-I-minimum | logistic | normal")
    g.add_argument("--measure", choices=["NIG", "DP", "PY", "nig", "dp", "py"])
    g.add_argument("--alpha", type=float)
    g.add_argument("--tau", type=float, help="N-IG tau (initial value unless --fixed-tau)")
    g.add_argument("--fixed-tau", action="store_true", help="keep N-IG tau fixed")
    g.add_argument("--mass", type=float, help="Dirichlet process mass")
    g.add_argument("--py-theta", type=float)
    g.add_argument("--py-sigma", type=float)
    g.add_argument("--iters", type=int)
    g.add_argument("--burnin", type=int)
    g.add_argument("--thin", type=int)
    g.add_argument("--r-aux", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--no-adapt", action="store_true", help="disable burn-in step-size adaptation")
    g.add_argument("--center", action="store_true", default=None, help="center covariates")
    g.add_argument("--workers", type=int)
    g.add_argument("--min-stratum-size", type=int)
    g.add_argument("--level", type=float, help="credible level for bands and intervals")
    g.add_argument("--grid-size", type=int)
    g.add_argument("--kernels", nargs="+")
    g.add_argument("-v", "--verbose", action="store_true")


COMMANDS = {
    "simulate": cmd_simulate, "fit": cmd_fit, "stratify": cmd_stratify, "refit": cmd_refit,
    "curves": cmd_curves, "compare": cmd_compare, "diag": cmd_diag, "study": cmd_study,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="survstrata",
                                     description="Stratification of censored survival data by "
                                                 "nonparametric mixtures")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "simulate": "generate a synthetic three-strata dataset",
        "fit": "run the sampler on a data file",
        "stratify": "estimate the optimal partition from a fitted chain",
        "refit": "refit the model separately on each stratum",
        "curves": "predictive survival curves and Kaplan-Meier estimates per stratum",
        "compare": "LPML and WAIC across kernel families",
        "diag": "convergence diagnostics of the fitted chain",
        "study": "replicated RAND-index simulation study",
        "report": "assemble the report bundle from existing artifacts",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        _common(p)
        if name == "simulate":
            p.add_argument("--dgp", default="D0", choices=["D0", "D1", "D2"])
            p.add_argument("--n", type=int, default=150)
            p.add_argument("--censor", type=float, default=0.0)
        if name == "diag":
            p.add_argument("--max-lag", type=int, default=50)
        if name == "study":
            p.add_argument("--study", help="JSON study grid")
            p.add_argument("--replicates", type=int)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        _echo(cfg, args.command)
        COMMANDS[args.command](args, cfg)
    except (InputDomainError, ConfigError, UnsupportedMeasureError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
