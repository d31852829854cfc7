"""Marginal Gibbs sampler for mixtures of accelerated-life models.

One sweep updates, in order: every allocation (auxiliary-component scheme
with ``r_aux`` fresh draws from the base measure), cluster parameters
(reshuffle), the auxiliary variable ``u``, ``tau``, ``alpha`` and, for the
common-coefficient model, each entry of ``theta``.  Random-walk steps adapt
towards the target acceptance rate during burn-in and are frozen afterwards.
"""
from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _core
from .errors import ConfigError, InputDomainError, UnsupportedMeasureError
from .kernels import ClusterParams, Dataset, KernelFamily
from .mixing import NIG, BaseMeasure, MixingMeasure, measure_code, measure_to_dict, psi


class ModelVariant(enum.Enum):
    M0 = "M0"  # no covariate effect
    M1 = "M1"  # one theta shared by all clusters
    M2 = "M2"  # theta inside every cluster

    @classmethod
    def parse(cls, value) -> "ModelVariant":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).upper())
        except ValueError:
            raise ConfigError(f"unknown model variant {value!r}") from None

    def n_cluster_theta(self, p: int) -> int:
        return p if self is ModelVariant.M2 else 0

    def n_common_theta(self, p: int) -> int:
        return p if self is ModelVariant.M1 else 0


@dataclass
class SamplerConfig:
    iters: int = 5000
    burnin: int = 3000
    thin: int = 1
    r_aux: int = 3
    step_u: float = 0.5
    step_tau: float = 0.5
    step_reshuffle: float = 1.0
    step_theta: float = 0.05
    adapt: bool = True
    target_accept: float = 0.3
    adapt_every: int = 50
    alpha_prior: tuple[float, float] | None = None  # None keeps alpha fixed
    tau_prior: tuple[float, float] | None = (1.0, 1.0)  # None keeps tau fixed
    theta_prior_var: float = 20.0
    base: BaseMeasure | None = None
    seed: int = 0
    unit_likelihood: bool = False

    def validate(self):
        if not (self.iters > self.burnin >= 0):
            raise ConfigError("need iters > burnin >= 0")
        if self.thin < 1 or self.r_aux < 1:
            raise ConfigError("thin and r_aux must be >= 1")
        for name in ("step_u", "step_tau", "step_reshuffle", "step_theta", "theta_prior_var"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if not 0 < self.target_accept < 1:
            raise ConfigError("target_accept must lie in (0, 1)")
        for name in ("alpha_prior", "tau_prior"):
            prior = getattr(self, name)
            if prior is not None and not (len(prior) == 2 and min(prior) > 0):
                raise ConfigError(f"{name} must be a (shape, rate) pair of positive reals")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["base"] = None if self.base is None else self.base.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SamplerConfig":
        d = dict(d)
        base = d.pop("base", None)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown sampler settings: {sorted(unknown)}")
        for name in ("alpha_prior", "tau_prior"):
            if d.get(name) is not None:
                d[name] = tuple(float(v) for v in d[name])
        cfg = cls(**d)
        cfg.base = None if base is None else BaseMeasure.from_dict(base)
        return cfg


@dataclass
class SamplerState:
    """Mutable sampler state; cluster tables have spare capacity beyond ``k`` rows."""

    alloc: np.ndarray
    mu: np.ndarray
    theta: np.ndarray
    zeta: np.ndarray
    sizes: np.ndarray
    k: int
    u: float = 1.0
    tau: float = 1.0
    alpha: float = 1.0
    theta_common: np.ndarray = field(default_factory=lambda: np.zeros(0))
    accepted: dict = field(default_factory=dict)
    tried: dict = field(default_factory=dict)

    @classmethod
    def single_cluster(cls, dataset: Dataset, variant: ModelVariant, measure: MixingMeasure,
                       u: float | None = None) -> "SamplerState":
        n, p = dataset.n, dataset.p
        pc = variant.n_cluster_theta(p)
        cap = n + 1
        sd = float(np.std(dataset.y)) if n > 1 else 1.0
        state = cls(
            alloc=np.zeros(n, dtype=np.int64),
            mu=np.zeros(cap), theta=np.zeros((cap, pc)), zeta=np.ones(cap),
            sizes=np.zeros(cap, dtype=np.int64), k=1,
            u=float(n) if u is None else float(u),
            theta_common=np.zeros(variant.n_common_theta(p)),
        )
        state.mu[0] = float(np.mean(dataset.y))
        state.zeta[0] = max(sd, 0.05)
        state.sizes[0] = n
        if isinstance(measure, NIG):
            state.alpha, state.tau = measure.alpha, measure.tau
        return state

    @property
    def n(self) -> int:
        return self.alloc.size

    @property
    def clusters(self) -> list[tuple[ClusterParams, int]]:
        return [(ClusterParams(self.mu[j], self.theta[j].copy(), self.zeta[j]), int(self.sizes[j]))
                for j in range(self.k)]

    def params_table(self) -> np.ndarray:
        """Occupied clusters as rows (mu, theta..., zeta)."""
        return np.column_stack([self.mu[:self.k], self.theta[:self.k], self.zeta[:self.k]])

    def offset(self, x: np.ndarray) -> np.ndarray:
        if self.theta_common.size:
            return x @ self.theta_common
        return np.zeros(x.shape[0])

    def check(self):
        k = self.k
        counts = np.bincount(self.alloc, minlength=k)
        if counts.size != k or np.any(counts == 0):
            raise AssertionError("labels are not compact 0..k-1")
        if not np.array_equal(counts, self.sizes[:k]):
            raise AssertionError("cluster sizes out of sync with allocations")
        if self.sizes[:k].sum() != self.n:
            raise AssertionError("sizes do not sum to n")
        if not (self.u > 0 and self.tau > 0 and self.alpha > 0):
            raise AssertionError("u, tau and alpha must be positive")
        if np.any(self.zeta[:k] <= 0):
            raise AssertionError("non-positive scale")

    def record(self, name: str, accepted: bool | int, tried: int = 1):
        self.accepted[name] = self.accepted.get(name, 0) + int(accepted)
        self.tried[name] = self.tried.get(name, 0) + tried


def _base_arrays(base: BaseMeasure):
    return (np.ascontiguousarray(base.mu0), np.sqrt(base.tau0sq),
            np.ascontiguousarray(base.tau0sq), float(base.q0_gamma), float(base.q1_gamma))


def _measure_args(measure: MixingMeasure, state: SamplerState):
    code, a, b = measure_code(measure)
    if code == 0:
        a, b = state.alpha, state.tau
    return code, a, b


def update_allocation(state: SamplerState, i: int, dataset: Dataset, family, measure: MixingMeasure,
                      base: BaseMeasure, r_aux: int, rng: np.random.Generator,
                      unit_likelihood: bool = False) -> SamplerState:
    """Resample the cluster of observation ``i``."""
    if not 0 <= i < dataset.n:
        raise InputDomainError("observation index out of range")
    if base.n_theta != state.theta.shape[1]:
        raise ConfigError("base measure dimension does not match the model variant")
    mu0, sd0, _, q0, q1 = _base_arrays(base)
    code, a, b = _measure_args(measure, state)
    pc = state.theta.shape[1]
    lw = np.empty(state.mu.size + r_aux)
    state.k = int(_core.update_alloc_one(
        i, state.alloc, state.mu, state.theta, state.zeta, state.sizes, state.k,
        dataset.y, dataset.delta, np.ascontiguousarray(dataset.x), state.offset(dataset.x),
        int(KernelFamily.parse(family)), code, a, b, state.u, r_aux, mu0, sd0, q0, q1,
        bool(unit_likelihood), rng, np.empty(r_aux), np.empty((r_aux, pc)), np.empty(r_aux), lw))
    return state


def log_target_log_u(log_u: float, alpha: float, tau: float, k: int, n: int) -> float:
    """Full conditional of U on the log axis, Jacobian included."""
    u = math.exp(log_u)
    return n * log_u - alpha * math.sqrt(u + tau) + (0.5 * k - n) * math.log(u + tau)


def log_target_log_tau(log_tau: float, u: float, alpha: float, k: int, n: int,
                       tau_prior: tuple[float, float]) -> float:
    """Full conditional of tau on the log axis under a Gamma(shape, rate) prior."""
    tau = math.exp(log_tau)
    q0, q1 = tau_prior
    return (q0 * log_tau - q1 * tau
            - alpha * (math.sqrt(u + tau) - math.sqrt(tau))
            + (0.5 * k - n) * math.log(u + tau))


def _rw_step(x, log_target, step, rng):
    prop = x + step * rng.normal()
    log_r = log_target(prop) - log_target(x)
    if math.log(rng.random()) < log_r:
        return prop, True
    return x, False


def update_u(state: SamplerState, measure: MixingMeasure, k: int, n: int, step_u: float,
             rng: np.random.Generator) -> SamplerState:
    if not isinstance(measure, NIG):
        raise UnsupportedMeasureError("the auxiliary variable U only exists for N-IG mixtures")
    new, ok = _rw_step(math.log(state.u),
                       lambda lu: log_target_log_u(lu, state.alpha, state.tau, k, n), step_u, rng)
    state.u = math.exp(new)
    state.record("u", ok)
    return state


def update_tau(state: SamplerState, measure: MixingMeasure, k: int, n: int,
               tau_prior: tuple[float, float], step_tau: float, rng: np.random.Generator) -> SamplerState:
    if not isinstance(measure, NIG):
        raise UnsupportedMeasureError("tau only exists for N-IG mixtures")
    new, ok = _rw_step(math.log(state.tau),
                       lambda lt: log_target_log_tau(lt, state.u, state.alpha, k, n, tau_prior),
                       step_tau, rng)
    state.tau = math.exp(new)
    state.record("tau", ok)
    return state


def update_alpha(state: SamplerState, k: int, psi_u: float, alpha_prior: tuple[float, float] | None,
                 rng: np.random.Generator) -> SamplerState:
    """Conjugate Gamma(q0 + k, q1 + psi(u)) draw; no-op when alpha is fixed."""
    if alpha_prior is None:
        return state
    q0, q1 = alpha_prior
    state.alpha = float(rng.gamma(q0 + k, 1.0 / (q1 + psi_u)))
    return state


def update_theta_common(state: SamplerState, dataset: Dataset, family, theta_prior_var: float,
                        step_theta, rng: np.random.Generator, unit_likelihood: bool = False) -> SamplerState:
    """One random-walk MH move per common coefficient (M1 only)."""
    p = state.theta_common.size
    if p == 0:
        raise ConfigError("common-theta update requires the M1 variant with covariates")
    fam = int(KernelFamily.parse(family))
    x = np.ascontiguousarray(dataset.x)
    steps = np.broadcast_to(np.asarray(step_theta, dtype=float), (p,))

    def loglik(offset):
        if unit_likelihood:
            return 0.0
        return _core.total_loglik(state.alloc, state.mu, state.theta, state.zeta,
                                  dataset.y, dataset.delta, x, offset, fam)

    offset = x @ state.theta_common
    cur = loglik(offset)
    for l in range(p):
        old = state.theta_common[l]
        prop = old + steps[l] * rng.normal()
        new_offset = offset + (prop - old) * x[:, l]
        new = loglik(new_offset)
        log_r = new - cur - 0.5 * (prop**2 - old**2) / theta_prior_var
        ok = math.log(rng.random()) < log_r
        if ok:
            state.theta_common[l] = prop
            offset, cur = new_offset, new
        state.record(f"theta_common_{l + 1}", ok)
        state.record("theta_common", ok)
    return state


def reshuffle_clusters(state: SamplerState, dataset: Dataset, family, base: BaseMeasure,
                       step_reshuffle, rng: np.random.Generator, unit_likelihood: bool = False) -> SamplerState:
    """Random-walk MH refresh of every occupied cluster's parameters."""
    pc = state.theta.shape[1]
    steps = np.broadcast_to(np.asarray(step_reshuffle, dtype=float), (pc + 2,)).copy()
    mu0, _, var0, q0, q1 = _base_arrays(base)
    acc = np.zeros(pc + 2, dtype=np.int64)
    tries = np.zeros(pc + 2, dtype=np.int64)
    _core.reshuffle(state.alloc, state.mu, state.theta, state.zeta, state.sizes, state.k,
                    dataset.y, dataset.delta, np.ascontiguousarray(dataset.x), state.offset(dataset.x),
                    int(KernelFamily.parse(family)), mu0, var0, q0, q1, steps,
                    bool(unit_likelihood), rng, acc, tries)
    _record_reshuffle(state, acc, tries)
    return state


def _reshuffle_names(pc: int) -> list[str]:
    return ["reshuffle_mu"] + [f"reshuffle_theta_{l + 1}" for l in range(pc)] + ["reshuffle_zeta"]


def _record_reshuffle(state: SamplerState, acc, tries):
    for name, a, t in zip(_reshuffle_names(len(acc) - 2), acc, tries):
        state.record(name, int(a), int(t))
    state.record("reshuffle", int(acc.sum()), int(tries.sum()))


@dataclass
class Chain:
    """Retained draws of one run."""

    iterations: np.ndarray
    alloc: np.ndarray  # (M, n)
    k: np.ndarray
    u: np.ndarray
    tau: np.ndarray
    alpha: np.ndarray
    theta_common: np.ndarray  # (M, p_common)
    loglik: np.ndarray  # (M, n)
    params: list  # per draw: (k_m, 2 + pc) rows of (mu, theta..., zeta)
    accept_rates: dict = field(default_factory=dict)
    k_trace: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.alloc.shape[0]

    @property
    def n(self) -> int:
        return self.alloc.shape[1]

    @property
    def n_cluster_theta(self) -> int:
        return int(self.meta.get("pc", self.params[0].shape[1] - 2 if self.params else 0))

    def cluster_params(self, m: int) -> list[ClusterParams]:
        return [ClusterParams(row[0], row[1:-1], row[-1]) for row in self.params[m]]

    def sizes(self, m: int) -> np.ndarray:
        return np.bincount(self.alloc[m], minlength=len(self.params[m]))

    def partitions(self):
        from .partitions import Partition

        return [Partition(row) for row in self.alloc]

    def observation_params(self, m: int) -> np.ndarray:
        """(n, 2 + pc) matrix of the parameters attached to each observation at draw m."""
        return self.params[m][self.alloc[m]]


class _Tuner:
    """Batch-wise adaptation of random-walk log step sizes during burn-in."""

    def __init__(self, steps: dict, target: float, every: int, enabled: bool):
        self.log_steps = {name: np.log(np.atleast_1d(np.asarray(v, dtype=float))).copy()
                          for name, v in steps.items()}
        self.target, self.every, self.enabled = target, every, enabled
        self._acc = {name: np.zeros_like(v) for name, v in self.log_steps.items()}
        self._try = {name: np.zeros_like(v) for name, v in self.log_steps.items()}

    def step(self, name):
        s = np.exp(self.log_steps[name])
        return s if s.size > 1 else float(s[0])

    def observe(self, name, acc, tries):
        self._acc[name] += np.asarray(acc, dtype=float)
        self._try[name] += np.asarray(tries, dtype=float)

    def end_iteration(self, it: int):
        if not self.enabled or (it + 1) % self.every:
            return
        for name, ls in self.log_steps.items():
            tries = self._try[name]
            ok = tries > 0
            rate = np.where(ok, self._acc[name] / np.maximum(tries, 1), self.target)
            ls += rate - self.target
            np.clip(ls, math.log(1e-4), math.log(50.0), out=ls)
            self._acc[name][:] = 0
            self._try[name][:] = 0


def run(dataset: Dataset, variant, family, measure: MixingMeasure, config: SamplerConfig,
        init: SamplerState | None = None) -> Chain:
    """Run the sampler and return thinned post-burn-in draws."""
    config.validate()
    variant = ModelVariant.parse(variant)
    family = KernelFamily.parse(family)
    if dataset.n < 1:
        raise InputDomainError("dataset is empty")
    measure_code(measure)
    n, p = dataset.n, dataset.p
    pc = variant.n_cluster_theta(p)
    base = config.base or BaseMeasure.default(dataset.y, n_theta=pc)
    if base.n_theta != pc:
        raise ConfigError(f"base measure has {base.n_theta} theta components, variant {variant.value} needs {pc}")
    if config.alpha_prior is not None and not isinstance(measure, NIG):
        raise UnsupportedMeasureError("random alpha is only implemented for N-IG mixtures")
    rng = np.random.default_rng(config.seed)
    state = init or SamplerState.single_cluster(dataset, variant, measure)
    is_nig = isinstance(measure, NIG)

    y, delta = dataset.y, dataset.delta
    x = np.ascontiguousarray(dataset.x)
    fam = int(family)
    mu0, sd0, var0, q0, q1 = _base_arrays(base)
    unit = bool(config.unit_likelihood)
    r = int(config.r_aux)

    steps = {"reshuffle": np.r_[config.step_reshuffle * np.ones(pc + 1), config.step_reshuffle * 0.5]}
    if is_nig:
        steps["u"] = config.step_u
        if config.tau_prior is not None:
            steps["tau"] = config.step_tau
    if variant is ModelVariant.M1 and p:
        steps["theta_common"] = np.full(p, config.step_theta)
    tuner = _Tuner(steps, config.target_accept, config.adapt_every, config.adapt and config.burnin > 0)

    keep = [it for it in range(config.burnin, config.iters) if (it - config.burnin) % config.thin == 0]
    m_draws = len(keep)
    out_alloc = np.empty((m_draws, n), dtype=np.int32)
    out_ll = np.empty((m_draws, n))
    out_k = np.empty(m_draws, dtype=np.int64)
    out_u, out_tau, out_alpha = np.empty(m_draws), np.empty(m_draws), np.empty(m_draws)
    out_theta = np.empty((m_draws, state.theta_common.size))
    out_params = []
    k_trace = np.empty(config.iters, dtype=np.int64)
    post_acc: dict = {}
    post_try: dict = {}
    ll_buf = np.empty(n)
    kept = 0

    for it in range(config.iters):
        burning = it < config.burnin
        offset = state.offset(x)
        code, a, b = _measure_args(measure, state)
        state.k = int(_core.sweep_alloc(state.alloc, state.mu, state.theta, state.zeta, state.sizes,
                                        state.k, y, delta, x, offset, fam, code, a, b, state.u, r,
                                        mu0, sd0, q0, q1, unit, rng))

        acc = np.zeros(pc + 2, dtype=np.int64)
        tries = np.zeros(pc + 2, dtype=np.int64)
        _core.reshuffle(state.alloc, state.mu, state.theta, state.zeta, state.sizes, state.k,
                        y, delta, x, offset, fam, mu0, var0, q0, q1, tuner.step("reshuffle"),
                        unit, rng, acc, tries)
        tuner.observe("reshuffle", acc, tries)
        before_acc, before_try = dict(state.accepted), dict(state.tried)
        _record_reshuffle(state, acc, tries)

        k = state.k
        if is_nig:
            a0 = state.accepted.get("u", 0)
            update_u(state, measure, k, n, tuner.step("u"), rng)
            tuner.observe("u", state.accepted["u"] - a0, 1)
            if config.tau_prior is not None:
                a0 = state.accepted.get("tau", 0)
                update_tau(state, measure, k, n, config.tau_prior, tuner.step("tau"), rng)
                tuner.observe("tau", state.accepted["tau"] - a0, 1)
            update_alpha(state, k, psi(NIG(state.alpha, state.tau), state.u), config.alpha_prior, rng)
        if "theta_common" in steps:
            before = np.array([state.accepted.get(f"theta_common_{l + 1}", 0) for l in range(p)])
            update_theta_common(state, dataset, family, config.theta_prior_var,
                                tuner.step("theta_common"), rng, unit)
            after = np.array([state.accepted[f"theta_common_{l + 1}"] for l in range(p)])
            tuner.observe("theta_common", after - before, np.ones(p))

        if not burning:
            for name, t in state.tried.items():
                post_try[name] = post_try.get(name, 0) + t - before_try.get(name, 0)
                post_acc[name] = post_acc.get(name, 0) + state.accepted[name] - before_acc.get(name, 0)
        tuner.end_iteration(it)
        k_trace[it] = state.k

        if kept < m_draws and it == keep[kept]:
            _core.per_obs_loglik(state.alloc, state.mu, state.theta, state.zeta, y, delta, x,
                                 state.offset(x), fam, ll_buf)
            out_ll[kept] = ll_buf
            out_alloc[kept] = state.alloc
            out_k[kept] = state.k
            out_u[kept], out_tau[kept], out_alpha[kept] = state.u, state.tau, state.alpha
            out_theta[kept] = state.theta_common
            out_params.append(state.params_table().copy())
            kept += 1

    rates = {name: post_acc[name] / post_try[name] for name in post_try if post_try[name] > 0}
    meta = {
        "variant": variant.value, "family": family.label, "measure": measure_to_dict(measure),
        "n": n, "p": p, "pc": pc, "base": base.to_dict(), "config": config.to_dict(),
        "final_steps": {name: np.exp(v).tolist() for name, v in tuner.log_steps.items()},
    }
    return Chain(np.asarray(keep, dtype=np.int64), out_alloc, out_k, out_u, out_tau, out_alpha,
                 out_theta, out_ll, out_params, rates, k_trace, meta)


def prior_partition_chain(n: int, measure: MixingMeasure, config: SamplerConfig) -> Chain:
    """Sample the prior partition law by running the sampler with unit likelihood."""
    data = Dataset(np.zeros(n), np.ones(n, dtype=int))
    cfg = SamplerConfig(**{**config.__dict__, "unit_likelihood": True})
    if cfg.base is None:
        cfg.base = BaseMeasure(np.zeros(1), np.ones(1))
    return run(data, ModelVariant.M0, KernelFamily.NORMAL, measure, cfg)
