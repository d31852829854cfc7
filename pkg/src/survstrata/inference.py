"""Post-processing of sampler output.

Predictive survival curves with pointwise bands, stratum-specific refits,
LPML and WAIC, Kaplan-Meier and type-I-minimum maximum likelihood
comparators, and convergence diagnostics.
"""
from __future__ import annotations

import logging
import math
import warnings
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp

from .errors import EstimationError, InputDomainError
from .kernels import EULER_GAMMA, ClusterParams, Dataset, KernelFamily, survival_curve
from .mixing import DP, NIG, PY, BaseMeasure, MixingMeasure
from .partitions import Partition
from .sampler import Chain, ModelVariant, SamplerConfig, run

log = logging.getLogger(__name__)


def derive_seed(seed: int, task: str) -> int:
    """Independent stream seed for a named task, stable across runs and platforms."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(zlib.crc32(task.encode()),))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> 1)


# --- predictive survival ----------------------------------------------------


@dataclass
class SurvivalCurve:
    t_grid: np.ndarray
    mean: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    level: float = 0.95


def _draw_measure(measure: MixingMeasure, chain: Chain, m: int) -> MixingMeasure:
    if isinstance(measure, NIG):
        return NIG(float(chain.alpha[m]), float(chain.tau[m]))
    return measure


def _weights(measure: MixingMeasure, sizes: np.ndarray, u: float):
    sizes = sizes.astype(float)
    if isinstance(measure, NIG):
        return sizes - 0.5, measure.alpha * math.sqrt(u + measure.tau) / 2.0
    if isinstance(measure, DP):
        return sizes, measure.mass
    if isinstance(measure, PY):
        return sizes - measure.sigma_py, measure.theta_py + sizes.size * measure.sigma_py
    raise InputDomainError(f"unknown mixing measure {measure!r}")


def predictive_survival(chain: Chain, measure: MixingMeasure, family, base: BaseMeasure | None,
                        t_grid, x0=None, level: float = 0.95, n_new: int = 25,
                        include_new: bool = True, rng: np.random.Generator | None = None) -> SurvivalCurve:
    """Posterior predictive survival S(t | x0) with pointwise quantile bands.

    Each retained draw contributes a mixture over its occupied clusters
    weighted by the prior allocation factors, plus a new-cluster term whose
    survival is averaged over ``n_new`` base-measure draws.
    """
    t_grid = np.asarray(t_grid, dtype=float).reshape(-1)
    if t_grid.size == 0:
        raise InputDomainError("empty time grid")
    if np.any(t_grid < 0):
        raise InputDomainError("times must be non-negative")
    if not 0 < level < 1:
        raise InputDomainError("level must lie in (0, 1)")
    if len(chain) == 0:
        raise InputDomainError("chain has no draws")
    family = KernelFamily.parse(family)
    rng = np.random.default_rng(0) if rng is None else rng
    pc = chain.n_cluster_theta
    p_common = chain.theta_common.shape[1]
    p = max(pc, p_common)
    x0 = np.zeros(p) if x0 is None else np.atleast_1d(np.asarray(x0, dtype=float))
    if include_new and base is None:
        base = BaseMeasure.from_dict(chain.meta["base"])

    curves = np.empty((len(chain), t_grid.size))
    for m in range(len(chain)):
        table = chain.params[m]
        shift = float(chain.theta_common[m] @ x0) if p_common else 0.0
        loc = table[:, 0] - shift
        if pc:
            loc = loc - table[:, 1:1 + pc] @ x0
        surv = survival_curve(family, t_grid[None, :], loc[:, None], table[:, -1][:, None])
        w_old, w_new = _weights(_draw_measure(measure, chain, m), chain.sizes(m), float(chain.u[m]))
        s = w_old @ surv
        total = w_old.sum()
        if include_new and w_new > 0:
            new = base.sample(rng, n_new)
            nloc = new[:, 0] - shift
            if pc:
                nloc = nloc - new[:, 1:1 + pc] @ x0
            s_new = survival_curve(family, t_grid[None, :], nloc[:, None], new[:, -1][:, None]).mean(axis=0)
            s = s + w_new * s_new
            total += w_new
        curves[m] = s / total

    a = 1.0 - level
    return SurvivalCurve(t_grid, curves.mean(axis=0), np.quantile(curves, a / 2, axis=0),
                         np.quantile(curves, 1 - a / 2, axis=0), level)


# --- stratum refits ---------------------------------------------------------


@dataclass
class ParamSummary:
    name: str
    median: float
    lo: float
    hi: float

    @property
    def excludes_zero(self) -> bool:
        return self.lo > 0 or self.hi < 0


@dataclass
class StratumFit:
    label: int
    rows: np.ndarray
    chain: Chain
    summaries: list[ParamSummary] = field(default_factory=list)
    n_exact: int = 0
    n_censored: int = 0

    def summary(self, name: str) -> ParamSummary:
        for s in self.summaries:
            if s.name == name:
                return s
        raise KeyError(name)


def stratum_parameter_draws(chain: Chain) -> dict[str, np.ndarray]:
    """Per draw, the observation-averaged mu, zeta and theta coefficients of a fitted stratum."""
    pc = chain.n_cluster_theta
    p_common = chain.theta_common.shape[1]
    out: dict[str, list] = {"mu": [], "zeta": []}
    p = max(pc, p_common)
    for l in range(p):
        out[f"theta_{l + 1}"] = []
    for m in range(len(chain)):
        obs = chain.observation_params(m).mean(axis=0)
        out["mu"].append(obs[0])
        out["zeta"].append(obs[-1])
        for l in range(p):
            out[f"theta_{l + 1}"].append(obs[1 + l] if pc else chain.theta_common[m, l])
    return {k: np.asarray(v) for k, v in out.items()}


def summarize_parameters(chain: Chain, level: float = 0.95) -> list[ParamSummary]:
    a = 1.0 - level
    return [ParamSummary(name, float(np.median(v)), float(np.quantile(v, a / 2)),
                         float(np.quantile(v, 1 - a / 2)))
            for name, v in stratum_parameter_draws(chain).items()]


def _refit_one(args):
    label, rows, dataset, variant, family, measure, config, level = args
    sub = dataset.subset(rows)
    chain = run(sub, variant, family, measure, config)
    return StratumFit(label, rows, chain, summarize_parameters(chain, level),
                      int(sub.delta.sum()), int(sub.n - sub.delta.sum()))


def stratum_refit(dataset: Dataset, partition: Partition, variant, family, measure: MixingMeasure,
                  config: SamplerConfig, min_size: int = 2, level: float = 0.95,
                  workers: int = 1) -> dict[int, StratumFit]:
    """Refit the model independently on every block of ``partition`` with at least ``min_size`` rows.

    Stratum ``j`` uses seed ``derive_seed(config.seed, f"stratum-{j}")``; the
    base measure is re-centred on each stratum unless ``config.base`` is set.
    """
    if partition.n != dataset.n:
        raise InputDomainError("partition does not match the dataset")
    tasks = []
    for j, rows in enumerate(partition.blocks()):
        if rows.size < min_size:
            log.info("stratum %d has %d observation(s); skipped", j, rows.size)
            continue
        cfg = replace(config, seed=derive_seed(config.seed, f"stratum-{j}"))
        tasks.append((j, rows, dataset, variant, family, measure, cfg, level))
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            fits = list(pool.map(_refit_one, tasks))
    else:
        fits = [_refit_one(t) for t in tasks]
    return {f.label: f for f in fits}


# --- model comparison ------------------------------------------------------


@dataclass
class FitScores:
    lpml: float
    waic: float


def _loglik_matrix(chain_or_ll) -> np.ndarray:
    ll = chain_or_ll.loglik if isinstance(chain_or_ll, Chain) else chain_or_ll
    ll = np.asarray(ll, dtype=float)
    if ll.ndim == 1:
        ll = ll[:, None]
    if ll.shape[0] == 0:
        raise InputDomainError("no draws")
    return ll


def cpo(chain_or_ll) -> np.ndarray:
    """log CPO per observation: minus the log harmonic-mean of the likelihoods over draws."""
    ll = _loglik_matrix(chain_or_ll)
    bad = ~np.isfinite(ll)
    if bad.any():
        warnings.warn(f"{int(bad.any(axis=0).sum())} observation(s) have non-finite log-likelihood "
                      "draws; their CPO uses the finite draws only", RuntimeWarning, stacklevel=2)
    neg = np.where(bad, -np.inf, -ll)
    m = (~bad).sum(axis=0)
    with np.errstate(divide="ignore"):
        return np.log(m) - logsumexp(neg, axis=0)


def lpml(chain_or_ll) -> float:
    """Log pseudo-marginal likelihood, the sum of log CPO."""
    return float(np.sum(cpo(chain_or_ll)))


def waic(chain_or_ll, ddof: int = 0) -> float:
    """WAIC on the deviance scale, -2 (lppd - p_waic).

    ``ddof=0`` (default) uses the population variance of the pointwise
    log-likelihoods, which makes the score invariant to duplicating the draws.
    """
    ll = _loglik_matrix(chain_or_ll)
    m = ll.shape[0]
    if m < 2:
        raise InputDomainError("WAIC needs at least two draws")
    lppd = np.sum(logsumexp(ll, axis=0) - math.log(m))
    p_waic = np.sum(np.var(ll, axis=0, ddof=ddof))
    return float(-2.0 * (lppd - p_waic))


def scores(chain: Chain) -> FitScores:
    return FitScores(lpml(chain), waic(chain))


# --- nonparametric and parametric comparators ---------------------------------


@dataclass
class KaplanMeierCurve:
    """Right-continuous product-limit step function."""

    times: np.ndarray  # distinct event times
    survival: np.ndarray  # S just after each event time
    at_risk: np.ndarray
    events: np.ndarray

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.times, t, side="right")
        return np.where(idx == 0, 1.0, np.r_[1.0, self.survival][idx])


def kaplan_meier(times, status) -> KaplanMeierCurve:
    """Product-limit estimator; ``status`` is 1 for an observed event, 0 if censored."""
    times = np.asarray(times, dtype=float).reshape(-1)
    status = np.asarray(status).reshape(-1).astype(int)
    if times.size != status.size:
        raise InputDomainError("times and status lengths differ")
    if np.any(times <= 0):
        raise InputDomainError("times must be positive")
    event_times = np.unique(times[status == 1])
    at_risk = np.array([(times >= t).sum() for t in event_times], dtype=float)
    events = np.array([((times == t) & (status == 1)).sum() for t in event_times], dtype=float)
    surv = np.cumprod(1.0 - events / at_risk) if event_times.size else np.zeros(0)
    return KaplanMeierCurve(event_times, surv, at_risk, events)


@dataclass
class MLEResult:
    mu: float
    zeta: float
    loglik: float
    gradient: np.ndarray  # with respect to (mu, zeta)
    iterations: int
    boundary: bool = False

    @property
    def params(self) -> ClusterParams:
        if self.boundary:
            raise EstimationError("scale estimate is on the boundary zeta -> 0")
        return ClusterParams(self.mu, np.zeros(0), self.zeta)


_B = math.sqrt(6.0) / math.pi


def weibull_loglik(y, delta, mu: float, zeta: float) -> float:
    """Censored type-I-minimum log-likelihood with no covariates."""
    y = np.asarray(y, dtype=float)
    delta = np.asarray(delta, dtype=float)
    w = (y - mu) / (zeta * _B) - EULER_GAMMA
    return float(np.sum(delta * (w - math.log(zeta * _B))) - np.sum(np.exp(w)))


def _weibull_derivs(y, delta, mu, eta):
    zeta = math.exp(eta)
    w = (y - mu) / (zeta * _B) - EULER_GAMMA
    ew = np.exp(w)
    g = delta - ew
    wg = w + EULER_GAMMA
    grad = np.array([-g.sum() / (_B * zeta), -(g * wg).sum() - delta.sum()])
    h_mm = -ew.sum() / (_B * zeta) ** 2
    h_me = (-(ew * wg).sum() + g.sum()) / (_B * zeta)
    h_ee = (-(ew * wg**2).sum() + (g * wg).sum())
    return grad, np.array([[h_mm, h_me], [h_me, h_ee]])


def weibull_mle(y, delta, max_iter: int = 200, tol: float = 1e-8) -> MLEResult:
    """Newton maximisation of the censored type-I-minimum likelihood over (mu, log zeta)."""
    y = np.asarray(y, dtype=float).reshape(-1)
    delta = np.asarray(delta, dtype=float).reshape(-1)
    if int(delta.sum()) < 2:
        raise InputDomainError("need at least two exact observations")
    if np.ptp(y[delta == 1]) == 0 and np.all(delta == 1):
        return MLEResult(float(y[0]), 0.0, math.inf, np.zeros(2), 0, boundary=True)
    mu, eta = float(np.mean(y)), math.log(max(float(np.std(y)), 1e-3))

    def ll(m, e):
        return weibull_loglik(y, delta, m, math.exp(e))

    cur = ll(mu, eta)
    for it in range(1, max_iter + 1):
        grad, hess = _weibull_derivs(y, delta, mu, eta)
        zeta = math.exp(eta)
        grad_mz = np.array([grad[0], grad[1] / zeta])
        if np.max(np.abs(grad_mz)) < tol:
            return MLEResult(mu, zeta, cur, grad_mz, it - 1)
        try:
            step = np.linalg.solve(hess, -grad)
            if grad @ step <= 0:  # not an ascent direction
                step = grad / max(1.0, np.abs(grad).max())
        except np.linalg.LinAlgError:
            step = grad / max(1.0, np.abs(grad).max())
        t = 1.0
        while True:
            m_new, e_new = mu + t * step[0], eta + t * step[1]
            new = ll(m_new, e_new)
            if np.isfinite(new) and new >= cur - 1e-12 * abs(cur):
                break
            t *= 0.5
            if t < 1e-12:
                break
        mu, eta, cur = m_new, e_new, new
        if eta < math.log(1e-10):
            return MLEResult(mu, math.exp(eta), cur, grad_mz, it, boundary=True)
    raise EstimationError(f"Newton iterations did not converge in {max_iter} steps")


# --- diagnostics --------------------------------------------------------------


@dataclass
class Diagnostics:
    geweke_z: float
    acf: np.ndarray
    degenerate: bool = False


def autocorrelation(series, max_lag: int = 50) -> np.ndarray:
    x = np.asarray(series, dtype=float)
    x = x - x.mean()
    max_lag = min(max_lag, x.size - 1)
    denom = float(x @ x)
    if denom == 0.0:
        out = np.zeros(max_lag + 1)
        out[0] = 1.0
        return out
    return np.array([float(x[: x.size - l] @ x[l:]) / denom for l in range(max_lag + 1)])


def _batch_means_var(x: np.ndarray) -> float:
    """Variance of the mean of ``x`` from non-overlapping batch means (spectral density at zero)."""
    nb = max(int(math.sqrt(x.size)), 2)
    size = x.size // nb
    means = x[: nb * size].reshape(nb, size).mean(axis=1)
    return float(means.var(ddof=1) / nb)


def geweke(series, first: float = 0.1, last: float = 0.5) -> float:
    x = np.asarray(series, dtype=float)
    if x.size < 100:
        raise InputDomainError("Geweke diagnostic needs at least 100 values")
    a = x[: int(first * x.size)]
    b = x[x.size - int(last * x.size):]
    var = _batch_means_var(a) + _batch_means_var(b)
    if var == 0.0:
        return math.nan
    return float((a.mean() - b.mean()) / math.sqrt(var))


def diagnostics(series, max_lag: int = 50) -> Diagnostics:
    x = np.asarray(series, dtype=float)
    z = geweke(x)
    return Diagnostics(z, autocorrelation(x, max_lag), degenerate=bool(np.isnan(z)))
