"""k-means, Ward agglomerative and spectral clustering of feature matrices."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh

logger = logging.getLogger(__name__)

ALGORITHMS = ("kmeans", "ward", "spectral")


@dataclass
class ClusterResult:
    labels: np.ndarray
    K: int
    algorithm: str
    inertia_or_objective: float
    history: list = field(default_factory=list, repr=False)

    def to_csv(self) -> str:
        lines = ["row_index,label"]
        lines += [f"{i},{int(lab)}" for i, lab in enumerate(self.labels)]
        return "\n".join(lines) + "\n"


def _values(X):
    X = getattr(X, "values", X)
    if isinstance(X, np.ndarray) or sp.issparse(X):
        return X
    matrix = getattr(X, "matrix", None)
    return matrix if matrix is not None else np.asarray(X, dtype=np.float64)


def _check_k(n: int, K: int) -> None:
    if K < 2 or K >= n:
        raise ValueError(f"need 2 <= K < N, got K={K}, N={n}")


def relabel(labels: np.ndarray) -> np.ndarray:
    """Renumber labels ``0..K-1`` in order of first appearance."""
    _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
    rank = np.empty(len(first), dtype=np.int64)
    rank[np.argsort(first)] = np.arange(len(first))
    return rank[inverse]


# -- k-means ---------------------------------------------------------------------

def _row_sq_norms(X) -> np.ndarray:
    if sp.issparse(X):
        return np.asarray(X.multiply(X).sum(axis=1)).ravel()
    return np.einsum("ij,ij->i", X, X)


def _sq_distances(X, x_sq: np.ndarray, C: np.ndarray) -> np.ndarray:
    cross = np.asarray(X @ C.T)
    d = x_sq[:, None] - 2 * cross + np.einsum("ij,ij->i", C, C)[None, :]
    return np.maximum(d, 0)


def _centroids(X, labels: np.ndarray, K: int, weights: np.ndarray) -> np.ndarray:
    onehot = sp.csr_matrix((weights, (labels, np.arange(len(labels)))), shape=(K, len(labels)))
    sums = onehot @ X
    sums = sums.toarray() if sp.issparse(sums) else np.asarray(sums)
    counts = np.asarray(onehot.sum(axis=1)).ravel()
    return sums / counts[:, None]


def kmeans_plusplus(X, K: int, rng: np.random.Generator, x_sq: np.ndarray | None = None,
                    weights: np.ndarray | None = None) -> np.ndarray:
    """Arthur & Vassilvitskii seeding; returns initial centroids."""
    n = X.shape[0]
    x_sq = _row_sq_norms(X) if x_sq is None else x_sq
    w = np.ones(n) if weights is None else weights

    def row(i):
        r = X[i]
        return r.toarray().ravel() if sp.issparse(r) else np.asarray(r, dtype=np.float64)

    centers = [row(rng.choice(n, p=w / w.sum()))]
    closest = _sq_distances(X, x_sq, np.array(centers)).ravel()
    for _ in range(1, K):
        p = w * closest
        total = p.sum()
        idx = rng.choice(n, p=p / total) if total > 0 else rng.integers(n)
        centers.append(row(idx))
        closest = np.minimum(closest, _sq_distances(X, x_sq, centers[-1][None]).ravel())
    return np.array(centers)


def _lloyd(X, x_sq, centers, weights, max_iter, tol):
    K = len(centers)
    history = []
    labels = None
    for _ in range(max_iter):
        d = _sq_distances(X, x_sq, centers)
        labels = d.argmin(axis=1)
        history.append(float(np.sum(weights * d[np.arange(len(labels)), labels])))
        counts = np.bincount(labels, weights=weights, minlength=K)
        new = centers.copy()
        filled = counts > 0
        new[filled] = _centroids(X, labels, K, weights)[filled]
        # reseed an empty cluster at the point farthest from its centroid
        for k in np.flatnonzero(~filled):
            far = int(np.argmax(d[np.arange(len(labels)), labels]))
            r = X[far]
            new[k] = r.toarray().ravel() if sp.issparse(r) else r
            labels[far] = k
        shift = float(np.sqrt(np.sum((new - centers) ** 2)))
        centers = new
        if shift < tol:
            break
    d = _sq_distances(X, x_sq, centers)
    labels = d.argmin(axis=1)
    wcss = float(np.sum(weights * d[np.arange(len(labels)), labels]))
    history.append(wcss)
    return labels, centers, wcss, history


def kmeans(X, K: int, seed: int = 0, max_iter: int = 300, tol: float = 1e-4,
           n_init: int = 10, sample_weight=None) -> ClusterResult:
    """Lloyd's algorithm from k-means++ seeds; the best of ``n_init`` restarts is kept.

    ``inertia_or_objective`` is the within-cluster sum of squares and
    ``history`` holds the WCSS after every assignment step of the best run.
    """
    X = _values(X)
    if not sp.issparse(X):
        X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    _check_k(n, K)
    weights = np.ones(n) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
    x_sq = _row_sq_norms(X)
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_init):
        centers = kmeans_plusplus(X, K, rng, x_sq, weights)
        run = _lloyd(X, x_sq, centers, weights, max_iter, tol)
        if best is None or run[2] < best[2]:
            best = run
    labels, centers, wcss, history = best
    result = ClusterResult(labels, K, "kmeans", wcss, history)
    result.centers = centers
    return result


# -- Ward ------------------------------------------------------------------------

def ward_tree(X) -> np.ndarray:
    """Ward merge sequence via the nearest-neighbour chain.

    Returns an ``(N-1, 4)`` array ``[a, b, cost, size]`` in the format of a
    SciPy linkage, except ``cost`` is the increase in within-cluster sum of
    squares ``|A||B|/(|A|+|B|) * ||c_A - c_B||^2``. That quantity obeys the
    Lance-Williams recurrence for Ward linkage, so it can be evaluated from
    centroids and sizes without an ``N x N`` dissimilarity matrix. Rows are
    sorted by cost (stable), and nearest-neighbour ties go to the chain's
    previous element, then to the lowest cluster id.
    """
    X = _values(X)
    X = X.toarray() if sp.issparse(X) else np.asarray(X, dtype=np.float64)
    n = len(X)
    cent = np.empty((2 * n - 1, X.shape[1]))
    cent[:n] = X
    size = np.zeros(2 * n - 1)
    size[:n] = 1
    active = np.zeros(2 * n - 1, dtype=bool)
    active[:n] = True
    merges = []
    chain: list[int] = []
    next_id = n

    def costs(a: int) -> tuple[np.ndarray, np.ndarray]:
        ids = np.flatnonzero(active)
        ids = ids[ids != a]
        d = np.sum((cent[ids] - cent[a]) ** 2, axis=1)
        return ids, size[a] * size[ids] / (size[a] + size[ids]) * d

    while next_id < 2 * n - 1:
        if not chain:
            chain.append(int(np.flatnonzero(active)[0]))
        a = chain[-1]
        ids, c = costs(a)
        best = c.min()
        candidates = ids[c == best]
        prev = chain[-2] if len(chain) > 1 else None
        b = prev if prev is not None and prev in candidates else int(candidates.min())
        if b == prev:
            chain.pop()
            chain.pop()
            lo, hi = min(a, b), max(a, b)
            total = size[a] + size[b]
            cent[next_id] = (size[a] * cent[a] + size[b] * cent[b]) / total
            size[next_id] = total
            active[a] = active[b] = False
            active[next_id] = True
            merges.append((lo, hi, float(best), total))
            next_id += 1
        else:
            chain.append(b)
    Z = np.array(merges, dtype=np.float64).reshape(-1, 4)
    order = np.argsort(Z[:, 2], kind="stable")
    # relabel cluster ids so that merge i creates cluster n + i
    new_id = np.arange(2 * n - 1)
    new_id[n + order] = n + np.arange(len(order))
    Z = Z[order]
    Z[:, :2] = np.sort(new_id[Z[:, :2].astype(int)], axis=1)
    return Z


def cut_tree(Z: np.ndarray, n: int, K: int) -> np.ndarray:
    """Labels after applying the first ``n - K`` merges of a sorted tree."""
    parent = np.arange(2 * n - 1)

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for step in range(n - K):
        a, b = int(Z[step, 0]), int(Z[step, 1])
        parent[find(a)] = n + step
        parent[find(b)] = n + step
    roots = np.array([find(i) for i in range(n)])
    return relabel(roots)


def ward(X, K: int) -> ClusterResult:
    """Ward agglomerative clustering cut at ``K`` clusters.

    ``inertia_or_objective`` is the total within-cluster sum of squares of the
    cut and ``history`` the non-decreasing merge costs.
    """
    Xv = _values(X)
    n = Xv.shape[0]
    _check_k(n, K)
    Z = ward_tree(Xv)
    labels = cut_tree(Z, n, K)
    wcss = float(Z[: n - K, 2].sum())
    result = ClusterResult(labels, K, "ward", wcss, list(Z[:, 2]))
    result.linkage = Z
    return result


# -- spectral ---------------------------------------------------------------------

def gaussian_affinity(X, gamma: float) -> np.ndarray:
    """``exp(-gamma * ||x_i - x_j||^2)`` with a zero diagonal."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    X = _values(X)
    x_sq = _row_sq_norms(X)
    gram = X @ X.T
    gram = gram.toarray() if sp.issparse(gram) else np.asarray(gram)
    d = np.maximum(x_sq[:, None] + x_sq[None, :] - 2 * gram, 0)
    A = np.exp(-gamma * d)
    np.fill_diagonal(A, 0.0)
    return A


def normalized_laplacian(A: np.ndarray) -> np.ndarray:
    deg = A.sum(axis=1)
    isolated = np.flatnonzero(deg <= 0)
    if isolated.size:
        raise ValueError(f"point {int(isolated[0])} has zero degree in the affinity graph")
    inv = 1.0 / np.sqrt(deg)
    return np.eye(len(A)) - inv[:, None] * A * inv[None, :]


def spectral_embedding(A: np.ndarray, K: int, dense_limit: int = 3000) -> np.ndarray:
    """Row-normalised bottom-``K`` eigenvectors of the symmetric normalised Laplacian."""
    L = normalized_laplacian(A)
    n = len(L)
    if n <= dense_limit:
        _, vecs = np.linalg.eigh(L)
        V = vecs[:, :K]
    else:
        # largest eigenvalues of I - L are the smallest of L
        _, vecs = eigsh(np.eye(n) - L, k=K, which="LA", v0=np.ones(n) / np.sqrt(n))
        V = vecs[:, ::-1]
    norms = np.linalg.norm(V, axis=1, keepdims=True)
    return V / np.where(norms > 0, norms, 1.0)


def spectral(X, K: int, gamma: float | None = None, seed: int = 0,
             max_samples: int = 20000) -> ClusterResult:
    """Spectral clustering with a Gaussian-kernel affinity.

    ``gamma`` defaults to ``1 / F``. With more than ``max_samples`` rows a
    seeded subsample is clustered and every remaining row joins the cluster
    with the nearest centroid in feature space.
    """
    Xv = _values(X)
    if not sp.issparse(Xv):
        Xv = np.asarray(Xv, dtype=np.float64)
    n, f = Xv.shape
    if K < 2 or K > n:
        raise ValueError(f"need 2 <= K <= N, got K={K}, N={n}")
    gamma = 1.0 / f if gamma is None else gamma
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if K == n:
        return ClusterResult(np.arange(n), K, "spectral", 0.0)

    rng = np.random.default_rng(seed)
    if n > max_samples:
        sample = np.sort(rng.choice(n, max_samples, replace=False))
        logger.info("spectral clustering on a %d-row subsample of %d", max_samples, n)
    else:
        sample = np.arange(n)
    Xs = Xv[sample]
    E = spectral_embedding(gaussian_affinity(Xs, gamma), K)
    inner = kmeans(E, K, seed=int(rng.integers(2**31)))
    labels = inner.labels
    if len(sample) < n:
        centers = _centroids(Xs, labels, K, np.ones(len(sample)))
        rest = np.setdiff1d(np.arange(n), sample)
        Xr = Xv[rest]
        full = np.empty(n, dtype=np.int64)
        full[sample] = labels
        full[rest] = _sq_distances(Xr, _row_sq_norms(Xr), centers).argmin(axis=1)
        labels = full
    return ClusterResult(labels, K, "spectral", inner.inertia_or_objective)


def cluster(X, algorithm: str, K: int, seed: int = 0, **kwargs) -> ClusterResult:
    if algorithm == "kmeans":
        return kmeans(X, K, seed=seed, **kwargs)
    if algorithm == "ward":
        return ward(X, K)
    if algorithm == "spectral":
        return spectral(X, K, seed=seed, **kwargs)
    raise ValueError(f"unknown clustering algorithm {algorithm!r}")
