"""Compiled inner loops of the marginal sampler.

Cluster tables are fixed-capacity arrays ``mu[cap]``, ``theta[cap, pc]``,
``zeta[cap]``, ``sizes[cap]`` with the first ``k`` rows occupied.  Removing a
cluster moves the last occupied row into the hole, so labels stay compact.
``offset`` holds the common-theta shift theta'x_i (zero outside M1) and
``pc`` is the number of cluster-specific coefficients (zero outside M2).

Mixing measure codes: 0 = N-IG (a = alpha, b = tau), 1 = DP (a = mass),
2 = Pitman-Yor (a = theta, b = sigma).
"""
import math

import numba
import numpy as np

from .kernels import obs_loglik

_LOG_2PI = math.log(2.0 * math.pi)


@numba.njit(cache=True)
def loglik_at(family, i, y, delta, X, offset, mu_j, theta_row, zeta_j, pc):
    loc = mu_j - offset[i]
    for l in range(pc):
        loc -= theta_row[l] * X[i, l]
    return obs_loglik(family, y[i], delta[i], loc, zeta_j)


@numba.njit(cache=True)
def log_old_weight(mcode, b, nj):
    if mcode == 0:
        return math.log(nj - 0.5)
    if mcode == 1:
        return math.log(nj)
    return math.log(nj - b)


@numba.njit(cache=True)
def log_new_weight(mcode, a, b, u, kminus, r):
    if mcode == 0:
        return math.log(a * math.sqrt(u + b) / (2.0 * r))
    if mcode == 1:
        return math.log(a / r)
    if kminus == 0:
        return -math.log(r)
    return math.log((a + kminus * b) / r)


@numba.njit(cache=True)
def draw_base(rng, mu0, sd0, q0, q1, out_mu, out_theta, out_zeta, row, pc):
    out_mu[row] = rng.normal(mu0[0], sd0[0])
    for l in range(pc):
        out_theta[row, l] = rng.normal(mu0[l + 1], sd0[l + 1])
    out_zeta[row] = q1 / rng.gamma(q0, 1.0)


@numba.njit(cache=True)
def update_alloc_one(i, alloc, mu, theta, zeta, sizes, k, y, delta, X, offset, family,
                     mcode, a, b, u, r, mu0, sd0, q0, q1, unit, rng,
                     aux_mu, aux_theta, aux_zeta, lw):
    """Reallocate observation ``i`` with ``r`` auxiliary components; returns the new k."""
    n = y.size
    pc = theta.shape[1]
    c = alloc[i]
    sizes[c] -= 1
    start = 0
    if sizes[c] == 0:
        # the singleton's current value is kept as the first auxiliary component
        aux_mu[0] = mu[c]
        for l in range(pc):
            aux_theta[0, l] = theta[c, l]
        aux_zeta[0] = zeta[c]
        start = 1
        last = k - 1
        if c != last:
            mu[c] = mu[last]
            for l in range(pc):
                theta[c, l] = theta[last, l]
            zeta[c] = zeta[last]
            sizes[c] = sizes[last]
            for j in range(n):
                if alloc[j] == last:
                    alloc[j] = c
        k -= 1
    for l in range(start, r):
        draw_base(rng, mu0, sd0, q0, q1, aux_mu, aux_theta, aux_zeta, l, pc)

    lnew = log_new_weight(mcode, a, b, u, k, r)
    top = -math.inf
    for j in range(k):
        v = log_old_weight(mcode, b, sizes[j])
        if not unit:
            v += loglik_at(family, i, y, delta, X, offset, mu[j], theta[j], zeta[j], pc)
        lw[j] = v
        if v > top:
            top = v
    for l in range(r):
        v = lnew
        if not unit:
            v += loglik_at(family, i, y, delta, X, offset, aux_mu[l], aux_theta[l], aux_zeta[l], pc)
        lw[k + l] = v
        if v > top:
            top = v

    total = 0.0
    for j in range(k + r):
        lw[j] = math.exp(lw[j] - top)
        total += lw[j]
    target = rng.random() * total
    acc = 0.0
    pick = k + r - 1
    for j in range(k + r):
        acc += lw[j]
        if target < acc:
            pick = j
            break

    if pick < k:
        alloc[i] = pick
        sizes[pick] += 1
        return k
    l = pick - k
    mu[k] = aux_mu[l]
    for q in range(pc):
        theta[k, q] = aux_theta[l, q]
    zeta[k] = aux_zeta[l]
    sizes[k] = 1
    alloc[i] = k
    return k + 1


@numba.njit(cache=True)
def sweep_alloc(alloc, mu, theta, zeta, sizes, k, y, delta, X, offset, family,
                mcode, a, b, u, r, mu0, sd0, q0, q1, unit, rng):
    pc = theta.shape[1]
    aux_mu = np.empty(r)
    aux_theta = np.empty((r, pc))
    aux_zeta = np.empty(r)
    lw = np.empty(mu.size + r)
    for i in range(y.size):
        k = update_alloc_one(i, alloc, mu, theta, zeta, sizes, k, y, delta, X, offset, family,
                             mcode, a, b, u, r, mu0, sd0, q0, q1, unit, rng,
                             aux_mu, aux_theta, aux_zeta, lw)
    return k


@numba.njit(cache=True)
def _members_loglik(members, family, y, delta, X, offset, mu_j, theta_row, zeta_j, pc, unit):
    if unit:
        return 0.0
    s = 0.0
    for m in members:
        s += loglik_at(family, m, y, delta, X, offset, mu_j, theta_row, zeta_j, pc)
    return s


@numba.njit(cache=True)
def reshuffle(alloc, mu, theta, zeta, sizes, k, y, delta, X, offset, family,
              mu0, var0, q0, q1, steps, unit, rng, acc, tries):
    """Coordinate-wise random-walk MH on every occupied cluster's (mu, theta, log zeta).

    Proposal scales are ``steps[c] * zeta / sqrt(n_j)`` for mu and theta and
    ``steps[-1] / sqrt(n_j)`` on the log-zeta axis.
    """
    pc = theta.shape[1]
    n = y.size
    order = np.argsort(alloc[:n], kind="mergesort")
    start = 0
    prop_row = np.empty(pc)
    for j in range(k):
        nj = sizes[j]
        members = order[start:start + nj]
        start += nj
        scale = 1.0 / math.sqrt(nj)
        cur = _members_loglik(members, family, y, delta, X, offset, mu[j], theta[j], zeta[j], pc, unit)

        prop = mu[j] + steps[0] * zeta[j] * scale * rng.normal()
        new = _members_loglik(members, family, y, delta, X, offset, prop, theta[j], zeta[j], pc, unit)
        logr = new - cur - 0.5 * ((prop - mu0[0]) ** 2 - (mu[j] - mu0[0]) ** 2) / var0[0]
        tries[0] += 1
        if math.log(rng.random()) < logr:
            mu[j] = prop
            cur = new
            acc[0] += 1

        for l in range(pc):
            for q in range(pc):
                prop_row[q] = theta[j, q]
            prop = theta[j, l] + steps[l + 1] * zeta[j] * scale * rng.normal()
            prop_row[l] = prop
            new = _members_loglik(members, family, y, delta, X, offset, mu[j], prop_row, zeta[j], pc, unit)
            m0 = mu0[l + 1]
            logr = new - cur - 0.5 * ((prop - m0) ** 2 - (theta[j, l] - m0) ** 2) / var0[l + 1]
            tries[l + 1] += 1
            if math.log(rng.random()) < logr:
                theta[j, l] = prop
                cur = new
                acc[l + 1] += 1

        lz = math.log(zeta[j])
        lzp = lz + steps[pc + 1] * scale * rng.normal()
        zp = math.exp(lzp)
        new = _members_loglik(members, family, y, delta, X, offset, mu[j], theta[j], zp, pc, unit)
        # inverse-gamma prior on zeta plus the log-axis Jacobian
        lp_new = -(q0 + 1.0) * lzp - q1 / zp + lzp
        lp_old = -(q0 + 1.0) * lz - q1 / zeta[j] + lz
        logr = new - cur + lp_new - lp_old
        tries[pc + 1] += 1
        if math.log(rng.random()) < logr:
            zeta[j] = zp
            acc[pc + 1] += 1


@numba.njit(cache=True)
def per_obs_loglik(alloc, mu, theta, zeta, y, delta, X, offset, family, out):
    pc = theta.shape[1]
    for i in range(y.size):
        j = alloc[i]
        out[i] = loglik_at(family, i, y, delta, X, offset, mu[j], theta[j], zeta[j], pc)


@numba.njit(cache=True)
def total_loglik(alloc, mu, theta, zeta, y, delta, X, offset, family):
    pc = theta.shape[1]
    s = 0.0
    for i in range(y.size):
        j = alloc[i]
        s += loglik_at(family, i, y, delta, X, offset, mu[j], theta[j], zeta[j], pc)
    return s
