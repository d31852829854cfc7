"""Standardized log-location-scale kernels for log survival times.

Each family is parameterised so that the standardized variable ``Y0`` has
mean 0 and variance 1, and the log time of subject ``i`` is

    Y_i = mu - theta'x_i + zeta * Y0.

Right-censored observations contribute ``log S*`` instead of ``log f*``.
The scalar routines are compiled with numba and shared with the sampler,
so the public functions below evaluate the exact same code path.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import InputDomainError

EULER_GAMMA = 0.57721566490153286060651209008240243

_SQRT6_OVER_PI = math.sqrt(6.0) / math.pi
_SQRT3_OVER_PI = math.sqrt(3.0) / math.pi
_LOG_PI_OVER_SQRT6 = math.log(math.pi / math.sqrt(6.0))
_LOG_PI_OVER_SQRT3 = math.log(math.pi / math.sqrt(3.0))
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
_SQRT2 = math.sqrt(2.0)


class KernelFamily(enum.IntEnum):
    TYPE_I_MINIMUM = 0  # Weibull times
    LOGISTIC = 1  # log-logistic times
    NORMAL = 2  # log-normal times

    @classmethod
    def parse(cls, value) -> "KernelFamily":
        if isinstance(value, cls):
            return value
        if isinstance(value, (int, np.integer)):
            return cls(int(value))
        key = str(value).strip().lower().replace("-", "_").replace(" ", "_")
        aliases = {
            "type_i_minimum": cls.TYPE_I_MINIMUM,
            "typeiminimum": cls.TYPE_I_MINIMUM,
            "type1": cls.TYPE_I_MINIMUM,
            "weibull": cls.TYPE_I_MINIMUM,
            "evi": cls.TYPE_I_MINIMUM,
            "logistic": cls.LOGISTIC,
            "loglogistic": cls.LOGISTIC,
            "log_logistic": cls.LOGISTIC,
            "normal": cls.NORMAL,
            "lognormal": cls.NORMAL,
            "log_normal": cls.NORMAL,
        }
        try:
            return aliases[key]
        except KeyError:
            raise InputDomainError(f"unknown kernel family {value!r}") from None

    @property
    def label(self) -> str:
        return {0: "type-I-minimum", 1: "logistic", 2: "normal"}[int(self)]


@dataclass(frozen=True)
class ClusterParams:
    """Location ``mu``, regression coefficients ``theta`` and scale ``zeta``."""

    mu: float
    theta: np.ndarray = field(default_factory=lambda: np.zeros(0))
    zeta: float = 1.0

    def __post_init__(self):
        theta = np.atleast_1d(np.asarray(self.theta, dtype=float))
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "mu", float(self.mu))
        object.__setattr__(self, "zeta", float(self.zeta))
        if not (math.isfinite(self.mu) and math.isfinite(self.zeta)):
            raise InputDomainError("cluster parameters must be finite")
        if not np.all(np.isfinite(theta)):
            raise InputDomainError("theta must be finite")
        if self.zeta <= 0.0:
            raise InputDomainError(f"zeta must be positive, got {self.zeta}")

    def location(self, x):
        """``mu - theta'x`` for one covariate vector, or one value per row of a matrix.

        An empty ``theta`` means no covariate effect.
        """
        x = np.asarray(x, dtype=float)
        if self.theta.size == 0:
            return self.mu if x.ndim < 2 else np.full(x.shape[0], self.mu)
        x = np.atleast_1d(x)
        if x.shape[-1] != self.theta.size or x.ndim > 2:
            raise InputDomainError(
                f"covariate length {x.shape[-1]} does not match theta length {self.theta.size}"
            )
        return self.mu - float(self.theta @ x) if x.ndim == 1 else self.mu - x @ self.theta


@dataclass
class Dataset:
    """Log survival times ``y``, event indicators ``delta`` (1 = exact) and covariates ``x``."""

    y: np.ndarray
    delta: np.ndarray
    x: np.ndarray | None = None

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float).reshape(-1)
        n = self.y.size
        self.delta = np.asarray(self.delta).reshape(-1).astype(np.int64)
        if self.x is None:
            self.x = np.zeros((n, 0))
        self.x = np.asarray(self.x, dtype=float)
        if self.x.ndim == 1:
            self.x = self.x.reshape(n, -1) if n else self.x.reshape(0, 0)
        if self.delta.size != n or self.x.shape[0] != n:
            raise InputDomainError("y, delta and x must have matching lengths")
        if not np.all(np.isfinite(self.y)):
            raise InputDomainError("log survival times must be finite")
        if not np.all(np.isin(self.delta, (0, 1))):
            raise InputDomainError("censoring indicators must be 0 or 1")
        if not np.all(np.isfinite(self.x)):
            raise InputDomainError("covariates must be finite")

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def n_censored(self) -> int:
        return int(self.n - self.delta.sum())

    @property
    def times(self) -> np.ndarray:
        return np.exp(self.y)

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(self.y[rows].copy(), self.delta[rows].copy(), self.x[rows].copy())

    def centered(self) -> "Dataset":
        return Dataset(self.y.copy(), self.delta.copy(), self.x - self.x.mean(axis=0))


# --- compiled scalar core -------------------------------------------------


@numba.njit(cache=True)
def _log_normal_sf(z):
    # log(1 - Phi(z)); relative accuracy in the far upper tail
    if z < -1.0:
        return math.log1p(-0.5 * math.erfc(-z / _SQRT2))
    if z < 26.0:
        return math.log(0.5 * math.erfc(z / _SQRT2))
    z2 = z * z
    series = 1.0 - 1.0 / z2 + 3.0 / z2**2 - 15.0 / z2**3 + 105.0 / z2**4
    return -0.5 * z2 - math.log(z) - _HALF_LOG_2PI + math.log(series)


@numba.njit(cache=True)
def _softplus(w):
    if w > 0.0:
        return w + math.log1p(math.exp(-w))
    return math.log1p(math.exp(w))


@numba.njit(cache=True)
def std_logpdf(family, z):
    """log density of the standardized variable at ``z``."""
    if family == 0:
        w = z / _SQRT6_OVER_PI - EULER_GAMMA
        return w - math.exp(w) + _LOG_PI_OVER_SQRT6
    if family == 1:
        w = z / _SQRT3_OVER_PI
        return -w - 2.0 * _softplus(-w) + _LOG_PI_OVER_SQRT3
    return -0.5 * z * z - _HALF_LOG_2PI


@numba.njit(cache=True)
def std_logsf(family, z):
    """log survival of the standardized variable at ``z``."""
    if family == 0:
        return -math.exp(z / _SQRT6_OVER_PI - EULER_GAMMA)
    if family == 1:
        return -_softplus(z / _SQRT3_OVER_PI)
    return _log_normal_sf(z)


@numba.njit(cache=True)
def obs_loglik(family, y, delta, loc, zeta):
    """Censored contribution delta*log f* + (1-delta)*log S* of one observation."""
    z = (y - loc) / zeta
    if delta == 1:
        return std_logpdf(family, z) - math.log(zeta)
    return std_logsf(family, z)


@numba.njit(cache=True)
def _loglik_vec(family, y, delta, loc, zeta, out):
    for i in range(y.size):
        out[i] = obs_loglik(family, y[i], delta[i], loc[i], zeta[i])


@numba.njit(cache=True)
def _logsf_vec(family, z, out):
    for i in range(z.size):
        v = z[i]
        if math.isinf(v):
            out[i] = 0.0 if v < 0 else -math.inf
        else:
            out[i] = std_logsf(family, v)


# --- public API -----------------------------------------------------------


def _check_inputs(y, x, params: ClusterParams):
    if not isinstance(params, ClusterParams):
        raise InputDomainError("params must be a ClusterParams instance")
    y = float(y)
    if not math.isfinite(y):
        raise InputDomainError("y must be finite")
    x = np.atleast_1d(np.asarray(x, dtype=float)) if x is not None else np.zeros(0)
    if not np.all(np.isfinite(x)):
        raise InputDomainError("covariates must be finite")
    return y, params.location(x)


def log_density(family, y, x, params: ClusterParams) -> float:
    """log f*(y | mu, theta, zeta, x)."""
    fam = int(KernelFamily.parse(family))
    y, loc = _check_inputs(y, x, params)
    return float(std_logpdf(fam, (y - loc) / params.zeta) - math.log(params.zeta))


def log_survival(family, y, x, params: ClusterParams) -> float:
    """log S*(y | mu, theta, zeta, x)."""
    fam = int(KernelFamily.parse(family))
    y, loc = _check_inputs(y, x, params)
    return float(std_logsf(fam, (y - loc) / params.zeta))


def sample(family, params: ClusterParams, x, rng: np.random.Generator, size=None):
    """Draw log survival time(s) by inverting the standardized CDF.

    ``x`` may be a single covariate vector or an (m, p) matrix, in which case
    one value is drawn per row and ``size`` defaults to m.
    """
    fam = int(KernelFamily.parse(family))
    loc = params.location(np.zeros(0) if x is None else x)
    if np.ndim(loc) == 1 and size is None:
        size = loc.size
    if fam == KernelFamily.NORMAL:
        z = rng.standard_normal(size)
    else:
        u = rng.random(size)
        if fam == KernelFamily.TYPE_I_MINIMUM:
            z = _SQRT6_OVER_PI * (EULER_GAMMA + np.log(-np.log1p(-u)))
        else:
            z = _SQRT3_OVER_PI * np.log(u / (1.0 - u))
    out = loc + params.zeta * z
    return float(out) if size is None else out


def censored_loglik(family, y, delta, loc, zeta) -> np.ndarray:
    """Vectorised per-observation censored log-likelihood.

    ``loc`` and ``zeta`` broadcast against ``y``.
    """
    fam = int(KernelFamily.parse(family))
    y = np.asarray(y, dtype=float)
    shape = y.shape
    y = y.reshape(-1)
    delta = np.broadcast_to(np.asarray(delta, dtype=np.int64), shape).reshape(-1)
    loc = np.broadcast_to(np.asarray(loc, dtype=float), shape).reshape(-1)
    zeta = np.broadcast_to(np.asarray(zeta, dtype=float), shape).reshape(-1)
    out = np.empty(y.size)
    _loglik_vec(fam, np.ascontiguousarray(y), np.ascontiguousarray(delta),
                np.ascontiguousarray(loc), np.ascontiguousarray(zeta), out)
    return out.reshape(shape)


def survival_curve(family, t, loc, zeta) -> np.ndarray:
    """S(t) on the time scale for arrays of times ``t`` (t > 0)."""
    fam = int(KernelFamily.parse(family))
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore"):
        y = np.log(t)
    z = np.asarray((y - loc) / zeta, dtype=float)
    out = np.empty(z.size)
    _logsf_vec(fam, np.ascontiguousarray(z.reshape(-1)), out)
    return np.exp(out).reshape(z.shape)
