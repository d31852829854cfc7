"""Partitions, variation-of-information loss, RAND index and the VI-optimal partition."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .errors import InputDomainError


def canonical_labels(labels) -> np.ndarray:
    """Relabel blocks 0..k-1 in order of first appearance."""
    labels = np.asarray(labels).reshape(-1)
    _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
    rank = np.empty(first.size, dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(first.size)
    return rank[inverse.reshape(-1)]


@dataclass(frozen=True, eq=False)
class Partition:
    """A set partition of ``n`` items stored as canonical block labels."""

    labels: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "labels", canonical_labels(self.labels))
        self.labels.setflags(write=False)

    @classmethod
    def from_blocks(cls, blocks, n: int | None = None) -> "Partition":
        blocks = [list(b) for b in blocks]
        n = sum(len(b) for b in blocks) if n is None else n
        labels = np.full(n, -1, dtype=np.int64)
        for j, b in enumerate(blocks):
            labels[np.asarray(b, dtype=int)] = j
        if np.any(labels < 0):
            raise InputDomainError("blocks do not cover every item")
        return cls(labels)

    @property
    def n(self) -> int:
        return self.labels.size

    @property
    def k(self) -> int:
        return int(self.labels.max()) + 1 if self.n else 0

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.k)

    def blocks(self) -> list[np.ndarray]:
        order = np.argsort(self.labels, kind="stable")
        return np.split(order, np.cumsum(self.sizes)[:-1])

    def key(self) -> bytes:
        return self.labels.astype(np.int32).tobytes()

    def __eq__(self, other):
        return isinstance(other, Partition) and np.array_equal(self.labels, other.labels)

    def __hash__(self):
        return hash(self.key())

    def __repr__(self):
        return f"Partition(n={self.n}, k={self.k}, sizes={self.sizes.tolist()})"


def _as_partition(p) -> Partition:
    return p if isinstance(p, Partition) else Partition(p)


def _contingency(a: Partition, b: Partition) -> np.ndarray:
    if a.n != b.n:
        raise InputDomainError(f"partitions over different n ({a.n} vs {b.n})")
    return np.bincount(a.labels * b.k + b.labels, minlength=a.k * b.k).reshape(a.k, b.k)


def _xlogx(counts) -> float:
    c = np.asarray(counts, dtype=float)
    c = c[c > 0]
    return float(np.sum(c * np.log(c)))


def vi_distance(a, b) -> float:
    """Variation of information (natural log) between two partitions of the same items."""
    a, b = _as_partition(a), _as_partition(b)
    table = _contingency(a, b)
    n = a.n
    # H(a) + H(b) - 2 I(a, b) written through sums of c log c
    val = (2.0 * _xlogx(table) - _xlogx(table.sum(1)) - _xlogx(table.sum(0))) / n
    return max(-val, 0.0)


def rand_index(a, b) -> float:
    """Fraction of item pairs on which both partitions agree."""
    a, b = _as_partition(a), _as_partition(b)
    if a.n != b.n:
        raise InputDomainError(f"partitions over different n ({a.n} vs {b.n})")
    if a.n < 2:
        raise InputDomainError("RAND index needs at least two items")
    table = _contingency(a, b)

    def pairs(c):
        c = np.asarray(c, dtype=float)
        return float(np.sum(c * (c - 1) / 2))

    total = a.n * (a.n - 1) / 2
    agree = total + 2 * pairs(table) - pairs(table.sum(1)) - pairs(table.sum(0))
    return agree / total


@numba.njit(cache=True)
def _expected_vi(labels, ks, weights):
    """Weighted mean VI of each row of ``labels`` against all rows."""
    u, n = labels.shape
    xlx = np.zeros(n + 1)
    for c in range(2, n + 1):
        xlx[c] = c * math.log(c)
    ent = np.zeros(u)  # sum over blocks of c log c
    kmax = 0
    for r in range(u):
        if ks[r] > kmax:
            kmax = ks[r]
    counts = np.zeros(kmax, dtype=np.int64)
    for r in range(u):
        counts[:] = 0
        for i in range(n):
            counts[labels[r, i]] += 1
        s = 0.0
        for j in range(ks[r]):
            s += xlx[counts[j]]
        ent[r] = s
    table = np.zeros((kmax, kmax), dtype=np.int64)
    out = np.zeros(u)
    wsum = 0.0
    for r in range(u):
        wsum += weights[r]
    for r in range(u):
        for q in range(r + 1, u):
            for i in range(n):
                table[labels[r, i], labels[q, i]] += 1
            s = 0.0
            for i in range(n):
                c = table[labels[r, i], labels[q, i]]
                if c > 0:
                    s += xlx[c]
                    table[labels[r, i], labels[q, i]] = 0
            d = (ent[r] + ent[q] - 2.0 * s) / n
            if d < 0.0:
                d = 0.0
            out[r] += weights[q] * d
            out[q] += weights[r] * d
    for r in range(u):
        out[r] /= wsum
    return out


def unique_partitions(samples) -> tuple[list[Partition], np.ndarray, np.ndarray]:
    """Distinct partitions in order of first occurrence, their counts and first indices."""
    seen: dict[bytes, int] = {}
    uniq: list[Partition] = []
    counts: list[int] = []
    first: list[int] = []
    for idx, s in enumerate(samples):
        p = _as_partition(s)
        key = p.key()
        j = seen.get(key)
        if j is None:
            seen[key] = len(uniq)
            uniq.append(p)
            counts.append(1)
            first.append(idx)
        else:
            counts[j] += 1
    return uniq, np.asarray(counts, dtype=float), np.asarray(first)


def expected_vi(samples) -> tuple[list[Partition], np.ndarray, np.ndarray]:
    """Monte Carlo posterior expected VI loss of every distinct sampled partition."""
    uniq, counts, _ = unique_partitions(samples)
    n = uniq[0].n
    if any(p.n != n for p in uniq):
        raise InputDomainError("samples are partitions of different sizes")
    labels = np.stack([p.labels for p in uniq]).astype(np.int64)
    ks = np.array([p.k for p in uniq], dtype=np.int64)
    return uniq, counts, _expected_vi(labels, ks, counts)


def optimal_partition(samples) -> tuple[Partition, float]:
    """Sampled partition minimising the Monte Carlo mean VI to all samples.

    Ties go to the smaller number of blocks, then to the earliest sample.
    """
    samples = list(samples)
    if not samples:
        raise InputDomainError("no partitions supplied")
    uniq, _, losses = expected_vi(samples)
    best = 0
    for j in range(1, len(uniq)):
        lj, lb = losses[j], losses[best]
        if lj < lb - 1e-12 * max(1.0, abs(lb)):
            best = j
        elif abs(lj - lb) <= 1e-12 * max(1.0, abs(lb)) and uniq[j].k < uniq[best].k:
            best = j
    return uniq[best], float(losses[best])


def match_blocks(estimate, truth) -> dict[int, int]:
    """Map each block of ``estimate`` to the ``truth`` block it overlaps most."""
    table = _contingency(_as_partition(estimate), _as_partition(truth))
    return {j: int(np.argmax(table[j])) for j in range(table.shape[0])}
