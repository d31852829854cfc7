"""Mixing random measures: normalized inverse-Gaussian, Dirichlet and Pitman-Yor.

For the N-IG process the Levy density is

    rho(s) = s**(-3/2) * exp(-tau * s) / (2 * sqrt(pi)),

which gives closed forms for the Laplace exponent ``psi`` and the tilted
moments ``kappa``.  The allocation step of the sampler only needs the
unnormalised prior factors returned by :func:`predictive_weights`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy import integrate, special

from .errors import InputDomainError, ScaleError, UnsupportedMeasureError

# largest sample size accepted by the exhaustive/quadrature EPPF oracle
EPPF_MAX_N = 12


@dataclass(frozen=True)
class NIG:
    """Normalized inverse-Gaussian process with total mass ``alpha`` and tilt ``tau``."""

    alpha: float = 1.0
    tau: float = 1.0

    def __post_init__(self):
        if not (self.alpha > 0 and self.tau > 0):
            raise InputDomainError("NIG requires alpha > 0 and tau > 0")


@dataclass(frozen=True)
class DP:
    mass: float = 1.0

    def __post_init__(self):
        if not self.mass > 0:
            raise InputDomainError("DP mass must be positive")


@dataclass(frozen=True)
class PY:
    theta_py: float = 1.0
    sigma_py: float = 0.5

    def __post_init__(self):
        if not (0.0 <= self.sigma_py < 1.0 and self.theta_py > -self.sigma_py):
            raise InputDomainError("PY requires 0 <= sigma < 1 and theta > -sigma")


MixingMeasure = Union[NIG, DP, PY]


def measure_code(measure: MixingMeasure) -> tuple[int, float, float]:
    """Integer tag and two parameters, as consumed by the compiled sampler."""
    if isinstance(measure, NIG):
        return 0, measure.alpha, measure.tau
    if isinstance(measure, DP):
        return 1, measure.mass, 0.0
    if isinstance(measure, PY):
        return 2, measure.theta_py, measure.sigma_py
    raise UnsupportedMeasureError(f"unknown mixing measure {measure!r}")


def measure_to_dict(measure: MixingMeasure) -> dict:
    if isinstance(measure, NIG):
        return {"kind": "NIG", "alpha": measure.alpha, "tau": measure.tau}
    if isinstance(measure, DP):
        return {"kind": "DP", "mass": measure.mass}
    if isinstance(measure, PY):
        return {"kind": "PY", "theta_py": measure.theta_py, "sigma_py": measure.sigma_py}
    raise UnsupportedMeasureError(f"unknown mixing measure {measure!r}")


def measure_from_dict(d: dict) -> MixingMeasure:
    kind = str(d.get("kind", "NIG")).upper()
    if kind == "NIG":
        return NIG(float(d.get("alpha", 1.0)), float(d.get("tau", 1.0)))
    if kind == "DP":
        return DP(float(d.get("mass", 1.0)))
    if kind == "PY":
        return PY(float(d.get("theta_py", 1.0)), float(d.get("sigma_py", 0.5)))
    raise UnsupportedMeasureError(f"unknown mixing measure kind {kind!r}")


@dataclass
class BaseMeasure:
    """Product of normals for (mu, theta_1..theta_pc) and an inverse gamma for zeta.

    ``q0_gamma`` is the inverse-gamma shape and ``q1_gamma`` its scale.
    """

    mu0: np.ndarray
    tau0sq: np.ndarray
    q0_gamma: float = 5.0
    q1_gamma: float = 1.0

    def __post_init__(self):
        self.mu0 = np.atleast_1d(np.asarray(self.mu0, dtype=float))
        self.tau0sq = np.atleast_1d(np.asarray(self.tau0sq, dtype=float))
        if self.mu0.shape != self.tau0sq.shape or self.mu0.size < 1:
            raise InputDomainError("mu0 and tau0sq must be non-empty and of equal length")
        if np.any(self.tau0sq <= 0) or self.q0_gamma <= 0 or self.q1_gamma <= 0:
            raise InputDomainError("base measure variances and inverse-gamma parameters must be positive")

    @property
    def n_theta(self) -> int:
        """Number of cluster-specific regression coefficients (m - 2)."""
        return self.mu0.size - 1

    @classmethod
    def default(cls, y, n_theta: int = 0, theta_var: float = 20.0,
                q0_gamma: float = 5.0, q1_gamma: float = 1.0) -> "BaseMeasure":
        """Data-centred defaults: mu ~ N(mean(y), var(y)), theta_l ~ N(0, theta_var)."""
        y = np.asarray(y, dtype=float)
        s2 = float(np.var(y, ddof=1)) if y.size > 1 else 1.0
        if not s2 > 0:
            s2 = 1.0
        mu0 = np.r_[float(np.mean(y)), np.zeros(n_theta)]
        tau0sq = np.r_[s2, np.full(n_theta, float(theta_var))]
        return cls(mu0, tau0sq, q0_gamma, q1_gamma)

    def sample(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        """Rows of (mu, theta..., zeta)."""
        shape = () if size is None else (size,)
        locs = rng.normal(self.mu0, np.sqrt(self.tau0sq), size=shape + self.mu0.shape)
        zeta = self.q1_gamma / rng.gamma(self.q0_gamma, 1.0, size=shape)
        return np.concatenate([locs, np.asarray(zeta)[..., None]], axis=-1)

    def logpdf(self, mu: float, theta, zeta: float) -> float:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        v = np.r_[mu, theta]
        if v.size != self.mu0.size:
            raise InputDomainError("parameter vector length does not match base measure")
        lp = -0.5 * np.sum((v - self.mu0) ** 2 / self.tau0sq + np.log(2 * np.pi * self.tau0sq))
        if zeta <= 0:
            return -math.inf
        a, b = self.q0_gamma, self.q1_gamma
        lp += a * math.log(b) - math.lgamma(a) - (a + 1) * math.log(zeta) - b / zeta
        return float(lp)

    def to_dict(self) -> dict:
        return {"mu0": self.mu0.tolist(), "tau0sq": self.tau0sq.tolist(),
                "q0_gamma": self.q0_gamma, "q1_gamma": self.q1_gamma}

    @classmethod
    def from_dict(cls, d: dict) -> "BaseMeasure":
        return cls(d["mu0"], d["tau0sq"], float(d["q0_gamma"]), float(d["q1_gamma"]))


def _require_nig(measure) -> NIG:
    if not isinstance(measure, NIG):
        raise UnsupportedMeasureError("only defined for the normalized inverse-Gaussian process")
    return measure


def psi(measure: NIG, u: float) -> float:
    """Laplace exponent sqrt(u + tau) - sqrt(tau)."""
    m = _require_nig(measure)
    if u < 0:
        raise InputDomainError("psi requires u >= 0")
    # difference of square roots rewritten to avoid cancellation at small u
    return u / (math.sqrt(u + m.tau) + math.sqrt(m.tau))


def log_kappa(measure: NIG, nj: int, u: float) -> float:
    m = _require_nig(measure)
    if nj < 1:
        raise InputDomainError("kappa requires nj >= 1")
    if u < 0:
        raise InputDomainError("kappa requires u >= 0")
    return (math.lgamma(nj - 0.5) - math.log(2.0 * math.sqrt(math.pi))
            + (0.5 - nj) * math.log(u + m.tau))


def kappa(measure: NIG, nj: int, u: float) -> float:
    """Tilted moment: integral of exp(-s u) s**nj rho(s) over s > 0."""
    return math.exp(log_kappa(measure, nj, u))


def levy_density(measure: NIG, s):
    m = _require_nig(measure)
    s = np.asarray(s, dtype=float)
    return s ** -1.5 * np.exp(-m.tau * s) / (2.0 * math.sqrt(math.pi))


def predictive_weights(measure: MixingMeasure, cluster_sizes, u: float = 0.0, r: int = 1):
    """Unnormalised prior allocation factors.

    Returns ``(existing, new_per_aux)``: one factor per existing cluster and
    the factor attached to each of the ``r`` auxiliary components.
    """
    sizes = np.asarray(cluster_sizes, dtype=float).reshape(-1)
    if np.any(sizes < 1):
        raise InputDomainError("cluster sizes must be >= 1")
    if r < 1:
        raise InputDomainError("r must be a positive integer")
    k = sizes.size
    if isinstance(measure, NIG):
        if u < 0:
            raise InputDomainError("u must be non-negative")
        return sizes - 0.5, measure.alpha * math.sqrt(u + measure.tau) / (2.0 * r)
    if isinstance(measure, DP):
        return sizes.copy(), measure.mass / r
    if isinstance(measure, PY):
        if k == 0:
            return sizes.copy(), 1.0 / r
        return sizes - measure.sigma_py, (measure.theta_py + k * measure.sigma_py) / r
    raise UnsupportedMeasureError(f"unknown mixing measure {measure!r}")


def _log_rising(a: float, m: int) -> float:
    # log of the rising factorial (a)_m
    return special.gammaln(a + m) - special.gammaln(a)


def eppf(measure: MixingMeasure, composition) -> float:
    """Prior probability of one labelled partition with the given block sizes."""
    comp = [int(c) for c in np.atleast_1d(composition)]
    if not comp or min(comp) < 1:
        raise InputDomainError("composition entries must be >= 1")
    n, k = sum(comp), len(comp)
    if n > EPPF_MAX_N:
        raise ScaleError(f"EPPF oracle limited to n <= {EPPF_MAX_N}, got {n}")
    if isinstance(measure, PY):
        th, sg = measure.theta_py, measure.sigma_py
        num = 1.0
        for j in range(1, k):
            num *= th + j * sg
        val = num / math.exp(_log_rising(th + 1.0, n - 1))
        for nj in comp:
            val *= math.exp(_log_rising(1.0 - sg, nj - 1))
        return float(val)
    if isinstance(measure, DP):
        a = measure.mass
        lv = k * math.log(a) + sum(math.lgamma(nj) for nj in comp) - _log_rising(a, n)
        return float(math.exp(lv))
    m = _require_nig(measure)
    return _nig_eppf_quadrature(m, comp)


def _nig_eppf_quadrature(m: NIG, comp: list[int]) -> float:
    n, k = sum(comp), len(comp)

    def log_integrand(u):
        val = (n - 1) * math.log(u) - m.alpha * psi(m, u)
        for nj in comp:
            val += log_kappa(m, nj, u)
        return val

    # locate the mode on a log grid so the integrand can be rescaled
    grid = np.exp(np.linspace(-20, 25, 2000))
    lvals = np.array([log_integrand(g) for g in grid])
    shift = float(lvals.max())

    def integrand_v(v):
        if v <= 0.0 or v >= 1.0:
            return 0.0
        u = v / (1.0 - v)
        return math.exp(log_integrand(u) - shift) / (1.0 - v) ** 2

    u_mode = grid[int(np.argmax(lvals))]
    v_mode = u_mode / (1.0 + u_mode)
    points = sorted({min(max(v_mode * f, 1e-12), 1 - 1e-12) for f in (0.1, 0.5, 1.0)}
                    | {1.0 - (1.0 - v_mode) * f for f in (0.5, 0.1)})
    total, _ = integrate.quad(integrand_v, 0.0, 1.0, points=points, epsabs=0.0,
                              epsrel=1e-10, limit=500)
    log_val = k * math.log(m.alpha) - math.lgamma(n) + shift + math.log(total)
    return float(math.exp(log_val))


def set_partitions(n: int):
    """Yield every set partition of ``range(n)`` as a compact label list (restricted growth strings)."""
    if n < 1:
        return
    labels = [0] * n

    def rec(i, kmax):
        if i == n:
            yield list(labels)
            return
        for lab in range(kmax + 2):
            labels[i] = lab
            yield from rec(i + 1, max(kmax, lab))

    labels[0] = 0
    yield from rec(1, 0)


def block_sizes(labels) -> tuple[int, ...]:
    labels = np.asarray(labels)
    return tuple(int(c) for c in np.bincount(labels) if c > 0)


def dp_expected_clusters(mass: float, n: int) -> float:
    if mass <= 0:
        raise InputDomainError("mass must be positive")
    i = np.arange(n, dtype=float)
    return float(np.sum(mass / (mass + i)))


def py_expected_clusters(theta_py: float, sigma_py: float, n: int) -> float:
    if sigma_py == 0.0:
        return dp_expected_clusters(theta_py, n)
    # (theta + sigma)_n / (sigma (theta + 1)_{n-1}) - theta / sigma
    lr = _log_rising(theta_py + sigma_py, n) - _log_rising(theta_py + 1.0, n - 1)
    return float(math.exp(lr) / sigma_py - theta_py / sigma_py)


@dataclass
class ExpectedClusters:
    mean: float
    se: float = 0.0
    draws: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)


def prior_expected_clusters(measure: MixingMeasure, n: int, rng: np.random.Generator | None = None,
                            sweeps: int = 20000, burnin: int = 1000) -> ExpectedClusters:
    """Prior mean of the number of clusters among ``n`` observations.

    Exact for the DP.  For PY the sequential two-parameter urn is simulated;
    for N-IG the marginal sampler is run with unit likelihood and fixed
    ``tau``, and the standard error uses batch means.
    """
    if n < 1:
        raise InputDomainError("n must be >= 1")
    if isinstance(measure, DP):
        return ExpectedClusters(dp_expected_clusters(measure.mass, n))
    rng = np.random.default_rng() if rng is None else rng
    if isinstance(measure, PY):
        ks = np.empty(sweeps)
        th, sg = measure.theta_py, measure.sigma_py
        for s in range(sweeps):
            k = 1
            for i in range(1, n):
                if rng.random() * (th + i) < th + k * sg:
                    k += 1
            ks[s] = k
        return ExpectedClusters(float(ks.mean()), float(ks.std(ddof=1) / math.sqrt(sweeps)), ks)
    _require_nig(measure)
    from .sampler import SamplerConfig, prior_partition_chain

    cfg = SamplerConfig(iters=sweeps + burnin, burnin=burnin, thin=1, tau_prior=None,
                        seed=int(rng.integers(2**63 - 1)))
    chain = prior_partition_chain(n, measure, cfg)
    ks = chain.k.astype(float)
    nb = 50
    batches = ks[: len(ks) // nb * nb].reshape(nb, -1).mean(axis=1)
    return ExpectedClusters(float(ks.mean()), float(batches.std(ddof=1) / math.sqrt(nb)), ks)


def dp_mass_matching(target_ek: float, n: int, tol: float = 1e-10) -> float:
    """DP mass whose prior expected number of clusters among ``n`` equals ``target_ek``."""
    if not (1.0 < target_ek < n):
        raise InputDomainError("target expected number of clusters must lie in (1, n)")
    lo, hi = 0.0, 1.0
    while dp_expected_clusters(hi, n) < target_ek:
        hi *= 2.0
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if dp_expected_clusters(mid, n) < target_ek:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
