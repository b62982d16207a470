"""Cluster validity, distribution tests and the representation benchmark."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import re
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping

import numpy as np
import scipy.sparse as sp

from . import __version__
from .clustering import ALGORITHMS, cluster

logger = logging.getLogger(__name__)

REPORT_HEADER = ["representation", "features", "algorithm", "k", "seed", "ch_score"]


class DegenerateClusteringError(ValueError):
    """Raised when the within-cluster dispersion is zero."""


@dataclass(frozen=True)
class CHReport:
    score: float
    K: int
    N: int


def _values(X):
    X = getattr(X, "values", X)
    if sp.issparse(X):
        return X
    matrix = getattr(X, "matrix", None)
    return matrix if matrix is not None else np.asarray(X, dtype=np.float64)


def ch_score(X, labels) -> CHReport:
    """Calinski-Harabasz variance ratio.

    ``(N-K)/(K-1) * sum_k N_k ||c_k - m||^2 / sum_k sum_{x in k} ||x - c_k||^2``
    """
    X = _values(X)
    labels = np.asarray(getattr(labels, "labels", labels))
    n = X.shape[0]
    if len(labels) != n:
        raise ValueError("one label per row is required")
    uniq, idx, counts = np.unique(labels, return_inverse=True, return_counts=True)
    K = len(uniq)
    if K < 2:
        raise ValueError("CH score needs at least two clusters")
    if n <= K:
        raise ValueError("CH score needs more points than clusters")
    onehot = sp.csr_matrix((np.ones(n), (idx, np.arange(n))), shape=(K, n))
    sums = onehot @ X
    sums = sums.toarray() if sp.issparse(sums) else np.asarray(sums)
    centroids = sums / counts[:, None]
    mean = np.asarray(X.mean(axis=0)).ravel()
    between = float(np.sum(counts * np.sum((centroids - mean) ** 2, axis=1)))
    if sp.issparse(X):
        total_sq = float(X.multiply(X).sum())
        # sum_k sum_x ||x - c_k||^2 = sum ||x||^2 - sum_k N_k ||c_k||^2
        within = total_sq - float(np.sum(counts * np.sum(centroids ** 2, axis=1)))
    else:
        total_sq = float(np.sum(X * X))
        within = float(np.sum((X - centroids[idx]) ** 2))
    if within <= 1e-12 * max(total_sq, 1e-300):
        raise DegenerateClusteringError("degenerate clustering: zero within-cluster dispersion")
    return CHReport(between / within * (n - K) / (K - 1), K, n)


def pair_agreement(a, b) -> float:
    """Rand index: fraction of point pairs on which two labelings agree."""
    a = np.asarray(getattr(a, "labels", a))
    b = np.asarray(getattr(b, "labels", b))
    n = len(a)
    if n < 2:
        return 1.0
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = sp.coo_matrix((np.ones(n), (ai, bi))).toarray()
    same_both = np.sum(table * (table - 1)) / 2
    same_a = np.sum(table.sum(axis=1) * (table.sum(axis=1) - 1)) / 2
    same_b = np.sum(table.sum(axis=0) * (table.sum(axis=0) - 1)) / 2
    pairs = n * (n - 1) / 2
    return float((pairs + 2 * same_both - same_a - same_b) / pairs)


# -- Hotelling's T^2 ----------------------------------------------------------------

def _betacf(a: float, b: float, x: float, tol: float = 1e-15, max_iter: int = 10000) -> float:
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > tiny else tiny)
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < tol:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def betainc(a: float, b: float, x: float) -> float:
    """Regularised incomplete beta function ``I_x(a, b)``."""
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _betacf(a, b, x) / a
    return 1.0 - math.exp(log_front) * _betacf(b, a, 1.0 - x) / b


def f_sf(f: float, d1: float, d2: float) -> float:
    """Upper tail ``P(F > f)`` of the F distribution with ``(d1, d2)`` degrees of freedom."""
    if f <= 0:
        return 1.0
    return betainc(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f))


@dataclass(frozen=True)
class HotellingResult:
    t2: float
    f_stat: float
    p_value: float
    df: tuple


def hotelling_t2(A, B, pinv: bool = False) -> HotellingResult:
    """Two-sample Hotelling T^2 test with pooled covariance.

    Raises
    ------
    np.linalg.LinAlgError
        If the pooled covariance is singular and ``pinv`` is false.
    """
    A, B = np.asarray(_values(A), dtype=float), np.asarray(_values(B), dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    if B.ndim == 1:
        B = B[:, None]
    if A.shape[1] != B.shape[1]:
        raise ValueError("samples must have the same number of features")
    na, nb, p = len(A), len(B), A.shape[1]
    dof = na + nb - 2
    if dof <= p and not pinv:
        raise np.linalg.LinAlgError("too few observations for the pooled covariance; use pinv")
    diff = A.mean(axis=0) - B.mean(axis=0)
    pooled = ((na - 1) * np.cov(A, rowvar=False).reshape(p, p)
              + (nb - 1) * np.cov(B, rowvar=False).reshape(p, p)) / dof
    if pinv:
        sol = np.linalg.pinv(pooled, hermitian=True) @ diff
    else:
        cond = np.linalg.cond(pooled)
        if not np.isfinite(cond) or cond > 1e14:
            raise np.linalg.LinAlgError("pooled covariance is singular")
        sol = np.linalg.solve(pooled, diff)
    t2 = float(na * nb / (na + nb) * diff @ sol)
    d2 = na + nb - p - 1
    if d2 <= 0:
        return HotellingResult(t2, float("nan"), float("nan"), (p, d2))
    f_stat = t2 * d2 / (p * dof)
    return HotellingResult(t2, f_stat, f_sf(f_stat, p, d2), (p, d2))


# -- benchmark ---------------------------------------------------------------------

@dataclass
class BenchmarkRow:
    representation: str
    features: int
    algorithm: str
    k: int
    seed: int
    ch_score: float


@dataclass
class BenchmarkReport:
    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.rows)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(REPORT_HEADER)
        for r in self.rows:
            writer.writerow([r.representation, r.features, r.algorithm, r.k, r.seed,
                             repr(float(r.ch_score))])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({"metadata": self.metadata,
                           "rows": [asdict(r) for r in self.rows]}, indent=2, sort_keys=True)

    @classmethod
    def from_csv(cls, text: str) -> "BenchmarkReport":
        reader = csv.DictReader(io.StringIO(text))
        rows = [BenchmarkRow(r["representation"], int(r["features"]), r["algorithm"],
                             int(r["k"]), int(r["seed"]), float(r["ch_score"]))
                for r in reader]
        return cls(rows)

    def representations(self) -> list[str]:
        return list(dict.fromkeys(r.representation for r in self.rows))

    def summary(self) -> dict:
        """``{(representation, algorithm, k): (mean, min, max)}`` over seeds."""
        groups: dict = {}
        for r in self.rows:
            groups.setdefault((r.representation, r.algorithm, r.k), []).append(r.ch_score)
        return {key: (float(np.mean(v)), float(np.min(v)), float(np.max(v)))
                for key, v in groups.items()}

    def mean_score(self, representation: str, algorithm: str | None = None,
                   k: int | None = None) -> float:
        vals = [r.ch_score for r in self.rows if r.representation == representation
                and (algorithm is None or r.algorithm == algorithm)
                and (k is None or r.k == k)]
        if not vals:
            raise KeyError(f"no rows for {representation!r}")
        return float(np.mean(vals))

    def check(self, assertion: str) -> bool:
        """Evaluate ``"<rep> > <rep>"`` (or ``<``) on mean CH over all matching cells."""
        m = re.fullmatch(r"\s*(\S+)\s*([<>])\s*(\S+)\s*", assertion)
        if not m:
            raise ValueError(f"cannot parse assertion {assertion!r}")
        left, op, right = m.groups()
        a, b = self.mean_score(left), self.mean_score(right)
        return a > b if op == ">" else a < b

    def format_table(self) -> str:
        summ = self.summary()
        cols = sorted({(k, a) for (_, a, k) in summ}, key=lambda t: (t[0], ALGORITHMS.index(t[1])
                                                                    if t[1] in ALGORITHMS else 9))
        head = f"{'representation':<28}" + "".join(f"{f'{a}@{k}':>16}" for k, a in cols)
        lines = [head]
        for rep in self.representations():
            cells = []
            for k, a in cols:
                if (rep, a, k) in summ:
                    mean, lo, hi = summ[(rep, a, k)]
                    cells.append(f"{mean:>9.1f}±{(hi - lo) / 2:<6.1f}")
                else:
                    cells.append(f"{'-':>16}")
            lines.append(f"{rep:<28}" + "".join(cells))
        return "\n".join(lines)


def config_hash(config: Mapping) -> str:
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _score_cell(cell) -> "BenchmarkRow":
    name, X, algorithm, K, seed, options = cell
    result = cluster(X, algorithm, K, seed=seed, **options)
    score = ch_score(X, result.labels).score
    logger.info("%s %s K=%d seed=%d CH=%.2f", name, algorithm, K, seed, score)
    return BenchmarkRow(name, int(X.shape[1]), algorithm, K, seed, score)


def run_benchmark(representations: Mapping, Ks: Iterable[int] = (10, 20, 50),
                  algorithms: Iterable[str] = ALGORITHMS, seeds: Iterable[int] = (0,),
                  cluster_options: Mapping | None = None, jobs: int = 1) -> BenchmarkReport:
    """Score every representation x algorithm x K x seed cell with the CH criterion.

    A representation maps to a feature matrix, or to ``{seed: matrix}`` when
    the representation itself was fitted per seed. With ``jobs > 1`` cells are
    scored in worker processes; rows keep the serial order either way.
    """
    Ks, algorithms, seeds = list(Ks), list(algorithms), list(seeds)
    cluster_options = dict(cluster_options or {})
    sizes = set()
    for name, rep in representations.items():
        mats = rep.values() if isinstance(rep, Mapping) else [rep]
        for mat in mats:
            sizes.add(_values(mat).shape[0])
    if len(sizes) > 1:
        raise ValueError(f"representations disagree on the number of rows: {sorted(sizes)}")

    cells = []
    for name, rep in representations.items():
        for seed in seeds:
            mat = rep[seed] if isinstance(rep, Mapping) else rep
            for algorithm in algorithms:
                for K in Ks:
                    cells.append((name, _values(mat), algorithm, K, seed,
                                  dict(cluster_options.get(algorithm, {}))))
    if jobs > 1 and len(cells) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_score_cell, cells))
    else:
        rows = [_score_cell(cell) for cell in cells]
    report = BenchmarkReport(rows=rows)
    config = {"representations": list(representations), "Ks": Ks,
              "algorithms": algorithms, "seeds": seeds, "n": sizes.pop() if sizes else 0,
              "cluster_options": cluster_options}
    report.metadata = {"config": config, "config_hash": config_hash(config),
                       "seeds": seeds, "version": __version__}
    return report
