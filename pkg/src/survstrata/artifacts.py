"""Reading and writing of survival data files and sampler artifacts.

Data files are CSV with header ``time,status,x1..xp``; ``status`` is 1 for an
observed (exact) event time and 0 for a right-censored one.  Chains are stored
as a directory of CSV files plus a JSON sidecar, written with round-trip float
precision so that re-loading reproduces every draw exactly.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .errors import InputDomainError
from .kernels import Dataset
from .partitions import Partition
from .sampler import Chain


class DataFormatError(InputDomainError):
    """Malformed input file; ``problems`` lists (line number, message) pairs."""

    def __init__(self, path, problems):
        self.problems = list(problems)
        shown = "; ".join(f"line {ln}: {msg}" for ln, msg in self.problems[:20])
        more = f" (+{len(self.problems) - 20} more)" if len(self.problems) > 20 else ""
        super().__init__(f"{path}: {len(self.problems)} malformed row(s): {shown}{more}")


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"missing artifact {path}")
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise InputDomainError(f"{path} is empty")
    return rows[0], rows[1:]


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"missing artifact {path}")
    return json.loads(path.read_text())


# --- survival data -----------------------------------------------------------


def read_survival_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Parse a ``time,status,x1..xp`` file into (times, status, covariates).

    Every malformed row is collected and reported together with its line number.
    """
    header, rows = read_csv(path)
    header = [h.strip().lower() for h in header]
    p = len(header) - 2
    expected = ["time", "status"] + [f"x{l + 1}" for l in range(p)]
    if p < 0 or header != expected:
        raise DataFormatError(path, [(1, f"header must be {','.join(expected) or 'time,status,x1..xp'}, "
                                         f"got {','.join(header)}")])
    times, status, covs, problems = [], [], [], []
    for ln, row in enumerate(rows, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            problems.append((ln, f"expected {len(header)} fields, got {len(row)}"))
            continue
        try:
            t = float(row[0])
            s = float(row[1])
            x = [float(c) for c in row[2:]]
        except ValueError as exc:
            problems.append((ln, f"non-numeric field ({exc})"))
            continue
        if not math.isfinite(t) or t <= 0:
            problems.append((ln, f"time must be positive and finite, got {row[0]}"))
            continue
        if s not in (0.0, 1.0):
            problems.append((ln, f"status must be 0 or 1, got {row[1]}"))
            continue
        if not all(math.isfinite(v) for v in x):
            problems.append((ln, "covariates must be finite"))
            continue
        times.append(t)
        status.append(int(s))
        covs.append(x)
    if problems:
        raise DataFormatError(path, problems)
    if not times:
        raise DataFormatError(path, [(1, "no data rows")])
    return np.asarray(times), np.asarray(status, dtype=int), np.asarray(covs, dtype=float).reshape(len(times), p)


def load_dataset(path, center: bool = False) -> Dataset:
    t, s, x = read_survival_csv(path)
    data = Dataset(np.log(t), s, x)
    return data.centered() if center else data


def write_survival_rows(path, times, status, x):
    x = np.asarray(x, dtype=float).reshape(len(times), -1)
    header = ["time", "status"] + [f"x{l + 1}" for l in range(x.shape[1])]
    write_csv(path, header, ([t, int(s), *row] for t, s, row in zip(times, status, x)))


def write_survival_csv(path, dataset: Dataset):
    write_survival_rows(path, np.exp(dataset.y), dataset.delta, dataset.x)


# --- partitions ----------------------------------------------------------------


def write_partition(path, partition: Partition):
    write_csv(path, ["obs_id", "stratum_label"],
              ((i + 1, int(l) + 1) for i, l in enumerate(partition.labels)))


def read_partition(path) -> Partition:
    header, rows = read_csv(path)
    if [h.strip() for h in header] != ["obs_id", "stratum_label"]:
        raise DataFormatError(path, [(1, "header must be obs_id,stratum_label")])
    rows.sort(key=lambda r: int(r[0]))
    return Partition(np.array([int(r[1]) for r in rows]))


# --- chains -----------------------------------------------------------------------


def save_chain(directory, chain: Chain):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    n, pt = chain.n, chain.theta_common.shape[1]
    header = (["iter", "k", "u", "tau", "alpha"] + [f"theta_common_{l + 1}" for l in range(pt)]
              + [f"alloc_{i + 1}" for i in range(n)])
    write_csv(d / "chain.csv", header,
              ([it, k, u, tau, a, *th, *al] for it, k, u, tau, a, th, al in
               zip(chain.iterations, chain.k, chain.u, chain.tau, chain.alpha,
                   chain.theta_common, chain.alloc)))
    write_csv(d / "loglik.csv", ["iter"] + [f"ll_{i + 1}" for i in range(n)],
              ([it, *ll] for it, ll in zip(chain.iterations, chain.loglik)))
    pc = chain.n_cluster_theta
    write_csv(d / "clusters.csv", ["iter", "cluster", "mu"] + [f"theta_{l + 1}" for l in range(pc)] + ["zeta"],
              ([it, j, *row] for it, table in zip(chain.iterations, chain.params)
               for j, row in enumerate(table)))
    write_csv(d / "k_trace.csv", ["iter", "k"], enumerate(chain.k_trace))
    write_json(d / "params.json", {"meta": chain.meta, "accept_rates": chain.accept_rates})


def load_chain(directory) -> Chain:
    d = Path(directory)
    side = read_json(d / "params.json")
    header, rows = read_csv(d / "chain.csv")
    pt = sum(h.startswith("theta_common_") for h in header)
    arr = np.array(rows, dtype=float).reshape(len(rows), len(header))
    iters = arr[:, 0].astype(np.int64)
    alloc = arr[:, 5 + pt:].astype(np.int32)
    _, ll_rows = read_csv(d / "loglik.csv")
    loglik = np.array(ll_rows, dtype=float).reshape(len(ll_rows), -1)[:, 1:]
    _, cl_rows = read_csv(d / "clusters.csv")
    cl = np.array(cl_rows, dtype=float).reshape(len(cl_rows), -1)
    # rows are written grouped by iteration in increasing order
    lo = np.searchsorted(cl[:, 0], iters, side="left")
    hi = np.searchsorted(cl[:, 0], iters, side="right")
    params = [cl[a:b, 2:].copy() for a, b in zip(lo, hi)]
    _, kt = read_csv(d / "k_trace.csv")
    k_trace = np.array([int(r[1]) for r in kt], dtype=np.int64)
    return Chain(iters, alloc, arr[:, 1].astype(np.int64), arr[:, 2], arr[:, 3], arr[:, 4],
                 arr[:, 5:5 + pt], loglik, params, dict(side["accept_rates"]), k_trace, side["meta"])
