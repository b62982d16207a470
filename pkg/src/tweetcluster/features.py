"""Conventional tweet representations.

Bag-of-words and tf-idf document-term matrices, and their low-dimensional
reductions: PCA, truncated SVD, LDA (online variational Bayes) and
Frobenius NMF (multiplicative updates).
"""

from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.special import psi
from scipy.sparse.linalg import svds

from .io import atomic_write_text, read_block, write_block

FEATURE_COUNT = 24
FEATURE_MAGIC = b"FEAT"
DENSE_SVD_LIMIT = 500


@dataclass
class DocTermMatrix:
    matrix: sp.csr_matrix
    vocab: list[str]
    weighting: str = "counts"

    def __post_init__(self):
        if self.matrix.shape[1] != len(self.vocab):
            raise ValueError("vocabulary length does not match column count")
        if self.weighting not in ("counts", "tfidf"):
            raise ValueError(f"unknown weighting {self.weighting!r}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    @property
    def sparsity(self) -> float:
        n, p = self.shape
        return 1.0 - self.matrix.nnz / (n * p)

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def save(self, path: str | Path) -> None:
        """Write the matrix as ``.npz`` with the vocabulary alongside."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        sp.save_npz(path, self.matrix.tocsr(), compressed=True)
        atomic_write_text(Path(str(path) + ".vocab"),
                          self.weighting + "\n" + "\n".join(self.vocab) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "DocTermMatrix":
        matrix = sp.load_npz(path).tocsr()
        lines = Path(str(path) + ".vocab").read_text(encoding="utf-8").splitlines()
        return cls(matrix, lines[1:], lines[0])


@dataclass
class FeatureMatrix:
    values: np.ndarray
    method_label: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError("feature matrix must be 2-D")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("feature matrix contains NaN or Inf")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([f"f{j}" for j in range(self.values.shape[1])])
        for row in self.values:
            writer.writerow([repr(float(v)) for v in row])
        return buf.getvalue()

    def save_csv(self, path: str | Path) -> None:
        atomic_write_text(path, self.to_csv())

    def save_binary(self, path: str | Path) -> None:
        write_block(path, FEATURE_MAGIC, self.values)

    @classmethod
    def load(cls, path: str | Path, label: str = "") -> "FeatureMatrix":
        path = Path(path)
        if path.suffix == ".csv":
            values = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        else:
            values = read_block(path, FEATURE_MAGIC)[:, 0, :]
        return cls(values, label or path.stem)


# -- document-term matrices ----------------------------------------------------

def build_bow(token_lists: Sequence[Sequence[str]], min_df: int = 2) -> DocTermMatrix:
    """Count matrix over tokens with document frequency ``>= min_df``.

    ``token_lists`` may also be a list of :class:`~tweetcluster.corpus.Tweet`.
    """
    docs = [getattr(t, "tokens", t) for t in token_lists]
    if not docs:
        raise ValueError("empty corpus")
    df = Counter(tok for doc in docs for tok in set(doc))
    vocab = sorted(tok for tok, n in df.items() if n >= min_df)
    if not vocab:
        raise ValueError("empty vocabulary")
    index = {tok: j for j, tok in enumerate(vocab)}
    rows, cols, vals = [], [], []
    for i, doc in enumerate(docs):
        for tok, n in Counter(t for t in doc if t in index).items():
            rows.append(i)
            cols.append(index[tok])
            vals.append(n)
    matrix = sp.csr_matrix(
        (np.array(vals, dtype=np.float64), (rows, cols)), shape=(len(docs), len(vocab))
    )
    matrix.sort_indices()
    return DocTermMatrix(matrix, vocab, "counts")


def idf(bow: DocTermMatrix) -> np.ndarray:
    n = bow.shape[0]
    df = np.bincount(bow.matrix.indices, minlength=bow.shape[1])
    return np.log((1.0 + n) / (1.0 + df)) + 1.0


def build_tfidf(bow: DocTermMatrix) -> DocTermMatrix:
    """Smoothed-idf weighting followed by unit L2 row normalisation."""
    if bow.weighting != "counts":
        raise ValueError("tf-idf needs a count matrix")
    weighted = bow.matrix @ sp.diags(idf(bow))
    norms = np.sqrt(np.asarray(weighted.multiply(weighted).sum(axis=1)).ravel())
    norms[norms == 0] = 1.0
    weighted = sp.diags(1.0 / norms) @ weighted
    return DocTermMatrix(sp.csr_matrix(weighted), list(bow.vocab), "tfidf")


def _as_matrix(X):
    if isinstance(X, DocTermMatrix):
        return X.matrix
    if isinstance(X, FeatureMatrix):
        return X.values
    return X


def _fix_signs(components: np.ndarray) -> np.ndarray:
    """Sign per row so that the largest-magnitude entry is positive."""
    idx = np.argmax(np.abs(components), axis=1)
    return np.sign(components[np.arange(len(components)), idx])


# -- PCA ------------------------------------------------------------------------

@dataclass
class PCAResult:
    scores: np.ndarray
    components: np.ndarray
    mean: np.ndarray
    explained_variance: np.ndarray
    total_variance: float

    def reconstruct(self) -> np.ndarray:
        return self.scores @ self.components + self.mean


def pca(X, n_components: int = FEATURE_COUNT) -> PCAResult:
    """Principal components from an exact eigendecomposition.

    The covariance (``P x P``) or the centred Gram matrix (``N x N``) is
    decomposed, whichever is smaller. Each component's largest-magnitude
    loading is made positive.
    """
    X = _as_matrix(X)
    n, p = X.shape
    if not 1 <= n_components <= min(n, p) or n_components >= n:
        raise ValueError(f"n_components={n_components} out of range for a {n}x{p} matrix")
    mean = np.asarray(X.mean(axis=0)).ravel()

    if p <= n:
        if sp.issparse(X):
            gram = (X.T @ X).toarray()
        else:
            gram = X.T @ X
        cov = (gram - n * np.outer(mean, mean)) / (n - 1)
        cov = (cov + cov.T) / 2
        total = float(np.trace(cov))
        evals, evecs = np.linalg.eigh(cov)
        order = np.argsort(evals)[::-1][:n_components]
        evals, components = evals[order], evecs[:, order].T
    else:
        Xc = (X.toarray() if sp.issparse(X) else np.asarray(X)) - mean
        gram = Xc @ Xc.T
        total = float(np.trace(gram)) / (n - 1)
        evals, evecs = np.linalg.eigh(gram)
        order = np.argsort(evals)[::-1][:n_components]
        evals, U = evals[order], evecs[:, order]
        sing = np.sqrt(np.clip(evals, 0, None))
        safe = np.where(sing > 0, sing, 1.0)
        components = (Xc.T @ U / safe).T
        evals = evals / (n - 1)

    if total <= 0 or evals[0] <= 1e-12 * max(1.0, total):
        raise ValueError("data has zero variance")
    components = components * _fix_signs(components)[:, None]
    Xc_scores = X @ components.T
    scores = np.asarray(Xc_scores) - mean @ components.T
    return PCAResult(scores, components, mean, np.clip(evals, 0, None), total)


def pca_reduce(X, F: int = FEATURE_COUNT, label: str = "pca") -> FeatureMatrix:
    return FeatureMatrix(pca(X, F).scores, label)


# -- truncated SVD ----------------------------------------------------------------

@dataclass
class SVDResult:
    U: np.ndarray
    s: np.ndarray
    Vt: np.ndarray

    @property
    def scores(self) -> np.ndarray:
        return self.U * self.s


def randomized_svd(X, rank: int, n_iter: int = 10, oversample: int = 20,
                   seed: int = 0) -> SVDResult:
    """Halko-Martinsson-Tropp range finder with QR-stabilised power iterations."""
    n, p = X.shape
    rng = np.random.default_rng(seed)
    width = min(rank + oversample, n, p)
    Q, _ = np.linalg.qr(np.asarray(X @ rng.standard_normal((p, width))))
    for _ in range(n_iter):
        Z, _ = np.linalg.qr(np.asarray(X.T @ Q))
        Q, _ = np.linalg.qr(np.asarray(X @ Z))
    B = np.asarray((X.T @ Q).T)
    Ub, s, Vt = np.linalg.svd(B, full_matrices=False)
    U = Q @ Ub[:, :rank]
    s, Vt = s[:rank], Vt[:rank]
    signs = _fix_signs(Vt)
    return SVDResult(U * signs, s, Vt * signs[:, None])


def _exact_svd(X, rank: int, seed: int) -> SVDResult:
    n, p = X.shape
    if min(n, p) <= DENSE_SVD_LIMIT:
        dense = X.toarray() if sp.issparse(X) else np.asarray(X, dtype=float)
        U, s, Vt = np.linalg.svd(dense, full_matrices=False)
    else:
        v0 = np.random.default_rng(seed).uniform(-1, 1, min(n, p))
        U, s, Vt = svds(sp.csr_matrix(X, dtype=float) if sp.issparse(X) else np.asarray(X, float),
                        k=rank, v0=v0, tol=0)
        order = np.argsort(s)[::-1]
        U, s, Vt = U[:, order], s[order], Vt[order]
    U, s, Vt = U[:, :rank], s[:rank], Vt[:rank]
    signs = _fix_signs(Vt)
    return SVDResult(U * signs, s, Vt * signs[:, None])


def tsvd(X, F: int = FEATURE_COUNT, seed: int = 0, solver: str = "exact") -> SVDResult:
    """Top-``F`` singular triplets of the uncentred matrix.

    ``solver="exact"`` uses a dense SVD for small matrices and Lanczos
    bidiagonalisation (ARPACK) otherwise; ``"randomized"`` trades accuracy
    for speed on very large inputs.
    """
    X = _as_matrix(X)
    n, p = X.shape
    if not 1 <= F < min(n, p):
        raise ValueError(f"F={F} out of range for a {n}x{p} matrix")
    if solver == "randomized":
        return randomized_svd(X, F, seed=seed)
    if solver != "exact":
        raise ValueError(f"unknown solver {solver!r}")
    return _exact_svd(X, F, seed)


def tsvd_reduce(X, F: int = FEATURE_COUNT, seed: int = 0, label: str = "tsvd") -> FeatureMatrix:
    """Uncentred low-rank projection ``U_F diag(s_F)``."""
    return FeatureMatrix(tsvd(X, F, seed).scores, label)


# -- LDA (online variational Bayes) -------------------------------------------------

@dataclass
class LDAModel:
    lam: np.ndarray
    alpha: float
    eta: float
    updates: int = 0
    bound_history: list = field(default_factory=list)

    @property
    def topics(self) -> np.ndarray:
        return self.lam / self.lam.sum(axis=1, keepdims=True)


def _dirichlet_expectation(a: np.ndarray) -> np.ndarray:
    return psi(a) - psi(a.sum(axis=-1, keepdims=True))


def _e_step(X: sp.csr_matrix, exp_elog_beta: np.ndarray, alpha: float,
            rng: np.random.Generator, max_iter: int = 100, tol: float = 1e-3):
    """Batched variational E-step.

    Returns ``(gamma, sstats)`` where ``sstats`` is the expected topic-word
    count matrix, not yet multiplied by ``exp(E[log beta])``.
    """
    n = X.shape[0]
    k = exp_elog_beta.shape[0]
    coo = X.tocoo()
    rows, cols, cts = coo.row, coo.col, coo.data
    gamma = rng.gamma(100.0, 0.01, (n, k))
    exp_theta = np.exp(_dirichlet_expectation(gamma))
    eb = exp_elog_beta[:, cols].T  # nnz x k
    active = np.ones(n, dtype=bool)
    for _ in range(max_iter):
        phinorm = np.einsum("ik,ik->i", exp_theta[rows], eb) + 1e-100
        S = sp.csr_matrix((cts / phinorm, (rows, cols)), shape=X.shape)
        new_gamma = alpha + exp_theta * np.asarray(S @ exp_elog_beta.T)
        change = np.mean(np.abs(new_gamma - gamma), axis=1)
        gamma = np.where(active[:, None], new_gamma, gamma)
        exp_theta = np.exp(_dirichlet_expectation(gamma))
        active &= change >= tol
        if not active.any():
            break
    phinorm = np.einsum("ik,ik->i", exp_theta[rows], eb) + 1e-100
    S = sp.csr_matrix((cts / phinorm, (rows, cols)), shape=X.shape)
    sstats = np.asarray((S.T @ exp_theta).T)
    return gamma, sstats


def lda_fit(X, K: int, passes: int = 5, seed: int = 0, batch_size: int = 256,
            kappa: float = 0.7, tau0: float = 10.0, alpha: float | None = None,
            eta: float | None = None) -> LDAModel:
    """Online variational Bayes for LDA with step size ``(tau0 + t) ** -kappa``."""
    X = sp.csr_matrix(_as_matrix(X), dtype=np.float64)
    n, p = X.shape
    if K < 2 or K >= p:
        raise ValueError(f"K={K} must satisfy 2 <= K < {p}")
    if X.data.size and X.data.min() < 0:
        raise ValueError("LDA needs non-negative (pseudo-)counts")
    alpha = 1.0 / K if alpha is None else alpha
    eta = 1.0 / K if eta is None else eta
    rng = np.random.default_rng(seed)
    model = LDAModel(rng.gamma(100.0, 0.01, (K, p)), alpha, eta)

    for _ in range(passes):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            batch = X[idx]
            exp_elog_beta = np.exp(_dirichlet_expectation(model.lam))
            _, sstats = _e_step(batch, exp_elog_beta, alpha, rng)
            sstats *= exp_elog_beta
            rho = (tau0 + model.updates) ** -kappa
            model.lam = (1 - rho) * model.lam + rho * (eta + n / len(idx) * sstats)
            model.updates += 1
    return model


def lda_transform(model: LDAModel, X, seed: int = 0) -> np.ndarray:
    X = sp.csr_matrix(_as_matrix(X), dtype=np.float64)
    exp_elog_beta = np.exp(_dirichlet_expectation(model.lam))
    gamma, _ = _e_step(X, exp_elog_beta, model.alpha, np.random.default_rng(seed))
    return gamma / gamma.sum(axis=1, keepdims=True)


def lda_fit_transform(bow, K: int = FEATURE_COUNT, passes: int = 5, seed: int = 0,
                      label: str = "lda", **kwargs) -> FeatureMatrix:
    """Normalised variational document-topic vectors.

    Accepts count or tf-idf weighting (tf-idf values act as pseudo-counts).
    """
    model = lda_fit(bow, K, passes=passes, seed=seed, **kwargs)
    return FeatureMatrix(lda_transform(model, bow, seed=seed), label)


# -- NMF ---------------------------------------------------------------------------

@dataclass
class NMFResult:
    W: np.ndarray
    H: np.ndarray
    objective: list


def nndsvd(X, K: int, seed: int = 0, fill: str = "mean"):
    """Nonnegative double SVD initialisation (Boutsidis & Gallopoulos).

    ``fill="mean"`` replaces exact zeros with the mean of ``X`` since
    multiplicative updates can never move an entry away from zero;
    ``fill="zero"`` keeps them.
    """
    svd = randomized_svd(X, K, seed=seed)
    U, s, V = svd.U, svd.s, svd.Vt
    n, p = X.shape
    W = np.zeros((n, K))
    H = np.zeros((K, p))
    W[:, 0] = np.sqrt(s[0]) * np.abs(U[:, 0])
    H[0] = np.sqrt(s[0]) * np.abs(V[0])
    for j in range(1, K):
        x, y = U[:, j], V[j]
        xp, xn = np.maximum(x, 0), np.maximum(-x, 0)
        yp, yn = np.maximum(y, 0), np.maximum(-y, 0)
        xpn, ypn = np.linalg.norm(xp), np.linalg.norm(yp)
        xnn, ynn = np.linalg.norm(xn), np.linalg.norm(yn)
        if xpn * ypn >= xnn * ynn:
            u, v, sigma = xp / (xpn or 1), yp / (ypn or 1), xpn * ypn
        else:
            u, v, sigma = xn / (xnn or 1), yn / (ynn or 1), xnn * ynn
        lbd = np.sqrt(s[j] * sigma)
        W[:, j] = lbd * u
        H[j] = lbd * v
    W[W < 1e-11] = 0
    H[H < 1e-11] = 0
    if fill == "mean":
        avg = float(X.mean())
        W[W == 0] = avg
        H[H == 0] = avg
    return W, H


def _frobenius_objective(X, W, H, x_sq: float) -> float:
    cross = float(np.sum(np.asarray(X @ H.T) * W))
    quad = float(np.sum((W.T @ W) * (H @ H.T)))
    return max(x_sq - 2 * cross + quad, 0.0)


def nmf(X, K: int, iters: int = 200, seed: int = 0, init_fill: str = "mean") -> NMFResult:
    """Lee-Seung multiplicative updates for ``min ||X - WH||_F^2``, no regularisation."""
    X = _as_matrix(X)
    X = sp.csr_matrix(X, dtype=np.float64) if sp.issparse(X) else np.asarray(X, dtype=np.float64)
    n, p = X.shape
    if (X.data if sp.issparse(X) else X).min(initial=0.0) < 0:
        raise ValueError("NMF input has negative entries")
    if not 1 <= K < min(n, p):
        raise ValueError(f"K={K} out of range for a {n}x{p} matrix")
    x_sq = float(X.multiply(X).sum()) if sp.issparse(X) else float(np.sum(X * X))
    if x_sq == 0:
        return NMFResult(np.zeros((n, K)), np.zeros((K, p)), [0.0])

    W, H = nndsvd(X, K, seed=seed, fill=init_fill)
    tiny = np.finfo(np.float64).tiny
    history = [_frobenius_objective(X, W, H, x_sq)]
    for _ in range(iters):
        H *= np.asarray(W.T @ X) / np.maximum((W.T @ W) @ H, tiny)
        W *= np.asarray(X @ H.T) / np.maximum(W @ (H @ H.T), tiny)
        history.append(_frobenius_objective(X, W, H, x_sq))
    return NMFResult(W, H, history)


def nmf_fit_transform(X, K: int = FEATURE_COUNT, iters: int = 200, seed: int = 0,
                      label: str = "nmf") -> FeatureMatrix:
    return FeatureMatrix(nmf(X, K, iters=iters, seed=seed).W, label)
