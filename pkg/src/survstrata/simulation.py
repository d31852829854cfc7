"""Synthetic stratified survival data and the replicated RAND-index study."""
from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from itertools import product

import numpy as np
from scipy.optimize import brentq

from .errors import ConfigError, InputDomainError
from .inference import derive_seed
from .kernels import ClusterParams, Dataset, KernelFamily, sample
from .mixing import NIG, measure_from_dict, measure_to_dict
from .partitions import Partition, optimal_partition, rand_index
from .sampler import SamplerConfig, run

log = logging.getLogger(__name__)

_STRATA_LOC_SCALE = ((1.0, 0.15), (3.0, 0.10), (2.0, 0.12))
_THETAS = {
    "D0": (0.0, 0.0, 0.0),
    "D1": (-1.5, -1.5, -1.5),
    "D2": (-1.5, 1.6, -0.1),
}


@dataclass
class DgpSpec:
    """Strata given as ``(mu, zeta, theta)`` with ``theta`` a scalar or a length-p vector."""

    strata: list
    sizes: tuple
    covariate_var: float = 0.25
    family: KernelFamily = KernelFamily.TYPE_I_MINIMUM
    censor_fraction: float = 0.0

    def __post_init__(self):
        self.family = KernelFamily.parse(self.family)
        self.strata = [(float(m), float(z), np.atleast_1d(np.asarray(t, dtype=float)))
                       for m, z, t in self.strata]
        self.sizes = tuple(int(s) for s in self.sizes)
        if len(self.strata) != len(self.sizes) or not self.strata:
            raise InputDomainError("need one size per stratum")
        if any(s < 1 for s in self.sizes):
            raise InputDomainError("stratum sizes must be >= 1")
        if len({t.size for _, _, t in self.strata}) != 1:
            raise InputDomainError("all strata need the same number of coefficients")
        if not self.covariate_var > 0:
            raise InputDomainError("covariate_var must be positive")
        if not 0 <= self.censor_fraction <= 0.9:
            raise InputDomainError("censor_fraction must lie in [0, 0.9]")
        for m, z, t in self.strata:
            if not (math.isfinite(m) and z > 0 and np.all(np.isfinite(t))):
                raise InputDomainError("stratum parameters must be finite with zeta > 0")

    @classmethod
    def preset(cls, name: str, n: int = 150, censor_fraction: float = 0.0,
               family=KernelFamily.TYPE_I_MINIMUM) -> "DgpSpec":
        """Three equal-size strata with locations (1, 3, 2); ``name`` picks the covariate effects."""
        key = name.upper()
        if key not in _THETAS:
            raise ConfigError(f"unknown design {name!r}; choose from {sorted(_THETAS)}")
        if n % 3:
            raise InputDomainError("n must be a multiple of 3 for the three-strata designs")
        strata = [(m, z, t) for (m, z), t in zip(_STRATA_LOC_SCALE, _THETAS[key])]
        return cls(strata, (n // 3,) * 3, 0.25, family, censor_fraction)

    @property
    def n(self) -> int:
        return sum(self.sizes)

    @property
    def p(self) -> int:
        return self.strata[0][2].size


def generate(spec: DgpSpec, rng: np.random.Generator) -> tuple[Dataset, Partition]:
    """Uncensored draw from ``spec`` with its true stratum labels."""
    labels = np.repeat(np.arange(len(spec.sizes)), spec.sizes)
    x = rng.normal(0.0, math.sqrt(spec.covariate_var), size=(spec.n, spec.p))
    y = np.empty(spec.n)
    for j, (mu, zeta, theta) in enumerate(spec.strata):
        rows = labels == j
        y[rows] = sample(spec.family, ClusterParams(mu, theta, zeta), x[rows], rng)
    return Dataset(y, np.ones(spec.n, dtype=int), x), Partition(labels)


def censoring_rate(times: np.ndarray, target: float) -> float:
    """Exponential rate whose expected censored fraction on ``times`` equals ``target``."""
    if not 0 <= target <= 0.9:
        raise InputDomainError("target censored fraction must lie in [0, 0.9]")
    if target == 0:
        return 0.0
    times = np.asarray(times, dtype=float)

    def excess(log_lam):
        return float(np.mean(-np.expm1(-math.exp(log_lam) * times))) - target

    lo, hi = -60.0, 60.0
    if excess(hi) < 0:
        raise InputDomainError(f"censored fraction {target} is not attainable")
    return math.exp(brentq(excess, lo, hi, xtol=1e-12))


def apply_censoring(dataset: Dataset, target: float, rng: np.random.Generator) -> Dataset:
    """Right-censor exact log times with exponential censoring tuned to ``target`` in expectation."""
    t = np.exp(dataset.y)
    lam = censoring_rate(t, target)
    if lam == 0.0:
        return dataset
    c = rng.exponential(1.0 / lam, size=t.size)
    exact = t <= c
    y = np.where(exact, dataset.y, np.log(c))
    delta = np.where(exact, dataset.delta, 0)
    return Dataset(y, delta.astype(int), dataset.x)


# --- replicated study -----------------------------------------------------------


@dataclass
class StudyConfig:
    dgps: tuple = ("D0",)
    variants: tuple = ("M0",)
    kernels: tuple = ("type-I-minimum",)
    sizes: tuple = (90,)
    censor_levels: tuple = (0.0,)
    replicates: int = 10
    measure: dict = field(default_factory=lambda: measure_to_dict(NIG(1.0, 1.0)))
    sampler: dict = field(default_factory=dict)
    seed: int = 0
    workers: int = 1

    def validate(self):
        if self.replicates < 1:
            raise ConfigError("replicates must be >= 1")
        for d in self.dgps:
            if d.upper() not in _THETAS:
                raise ConfigError(f"unknown design {d!r}")
        for lvl in self.censor_levels:
            if not 0 <= lvl <= 0.9:
                raise ConfigError("censor levels must lie in [0, 0.9]")
        for k in self.kernels:
            KernelFamily.parse(k)
        measure_from_dict(self.measure)
        SamplerConfig.from_dict(self.sampler).validate()
        return self

    @classmethod
    def from_dict(cls, d: dict) -> "StudyConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown study keys: {sorted(unknown)}")
        d = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
        return cls(**d).validate()

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


RESULT_COLUMNS = ("dgp", "variant", "kernel", "n", "censor_level", "replicate",
                  "rand_index", "k_hat", "runtime_s", "seed", "censored_fraction", "error")


def cells(study: StudyConfig):
    return list(product(study.dgps, study.variants, study.kernels, study.sizes, study.censor_levels))


def _task_seed(study: StudyConfig, cell, replicate: int) -> int:
    dgp, variant, kernel, n, lvl = cell
    kernel = KernelFamily.parse(kernel).label
    return derive_seed(study.seed, f"{dgp}|{variant}|{kernel}|{n}|{lvl:g}|{replicate}")


def run_replicate(study: StudyConfig, cell, replicate: int) -> dict:
    """One generate-censor-fit-estimate cycle; failures come back as a flagged row."""
    dgp, variant, kernel, n, lvl = cell
    family = KernelFamily.parse(kernel)
    seed = _task_seed(study, cell, replicate)
    row = {"dgp": dgp, "variant": variant, "kernel": family.label, "n": int(n),
           "censor_level": float(lvl), "replicate": int(replicate), "rand_index": math.nan,
           "k_hat": -1, "runtime_s": 0.0, "seed": seed, "censored_fraction": math.nan, "error": ""}
    start = time.perf_counter()
    try:
        # the data-generating kernel is the type-I minimum; ``kernel`` is the fitted family
        data_rng, fit_seed = np.random.default_rng(seed), derive_seed(seed, "fit")
        data, truth = generate(DgpSpec.preset(dgp, int(n)), data_rng)
        data = apply_censoring(data, float(lvl), data_rng)
        cfg = replace(SamplerConfig.from_dict(study.sampler), seed=fit_seed)
        chain = run(data, variant, family, measure_from_dict(study.measure), cfg)
        est, _ = optimal_partition(chain.partitions())
        row.update(rand_index=rand_index(est, truth), k_hat=est.k,
                   censored_fraction=data.n_censored / data.n)
    except Exception as exc:  # noqa: BLE001 - a failed replicate must not stop the grid
        log.warning("replicate %s/%d failed: %s", cell, replicate, exc)
        row["error"] = f"{type(exc).__name__}: {exc}"
    row["runtime_s"] = time.perf_counter() - start
    return row


def _run_task(args):
    return run_replicate(*args)


def replicate_study(study: StudyConfig) -> list[dict]:
    """Rows ordered by (cell, replicate), independent of worker completion order."""
    study.validate()
    tasks = [(study, cell, r) for cell in cells(study) for r in range(study.replicates)]
    if study.workers > 1:
        with ProcessPoolExecutor(max_workers=study.workers) as pool:
            return list(pool.map(_run_task, tasks))
    return [_run_task(t) for t in tasks]


def summarize_study(rows: list[dict]) -> list[dict]:
    """Per-cell mean RAND index, mean k-hat and failure count."""
    groups: dict = {}
    for r in rows:
        key = (r["dgp"], r["variant"], r["kernel"], r["n"], r["censor_level"])
        groups.setdefault(key, []).append(r)
    out = []
    for key, rs in groups.items():
        ok = [r for r in rs if not r["error"]]
        out.append({
            "dgp": key[0], "variant": key[1], "kernel": key[2], "n": key[3], "censor_level": key[4],
            "replicates": len(rs), "failed": len(rs) - len(ok),
            "mean_rand_index": float(np.mean([r["rand_index"] for r in ok])) if ok else math.nan,
            "mean_k_hat": float(np.mean([r["k_hat"] for r in ok])) if ok else math.nan,
        })
    return out
