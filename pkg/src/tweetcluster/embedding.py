"""Pretrained word-vector tables and padded tweet matrices."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .io import FormatError, read_block, write_block

logger = logging.getLogger(__name__)

MAX_TOKENS = 32
TENSOR_MAGIC = b"TWTE"
OOV_POLICIES = ("zeros", "subword_lookup")


@dataclass(frozen=True)
class EmbeddingTable:
    name: str
    dim: int
    vectors: Mapping[str, np.ndarray]
    oov_policy: str = "zeros"

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("embedding dimension must be positive")
        if self.oov_policy not in OOV_POLICIES:
            raise ValueError(f"unknown OOV policy {self.oov_policy!r}")

    def __len__(self) -> int:
        return len(self.vectors)

    def __contains__(self, token: str) -> bool:
        return token in self.vectors

    def lookup(self, token: str) -> np.ndarray | None:
        # subword_lookup expects the vector file to already hold vectors for
        # the corpus vocabulary; anything else falls back to zeros.
        return self.vectors.get(token)


@dataclass(frozen=True)
class TweetTensor:
    values: np.ndarray
    used_rows: int

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def load_table(path: str | Path, name: str | None = None,
               oov_policy: str = "zeros") -> EmbeddingTable:
    """Read a text vector file (``token v1 ... vD`` per line).

    An optional first line ``count dim`` is skipped. Duplicate tokens keep
    their first vector.

    Raises
    ------
    FormatError
        If the file is empty or a line has the wrong number of values.
    """
    path = Path(path)
    vectors: dict[str, np.ndarray] = {}
    dim = None
    with open(path, encoding="utf-8", errors="replace") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip().split(" ")
            if not parts or parts == [""]:
                continue
            if lineno == 1 and len(parts) == 2 and all(p.isdigit() for p in parts):
                continue
            token, values = parts[0], parts[1:]
            if dim is None:
                dim = len(values)
                if dim == 0:
                    raise FormatError(f"{path}:{lineno}: no vector values")
            elif len(values) != dim:
                raise FormatError(
                    f"{path}:{lineno}: expected {dim} values, found {len(values)}"
                )
            if token in vectors:
                continue
            try:
                vectors[token] = np.array(values, dtype=np.float64)
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
    if dim is None:
        raise FormatError(f"{path}: empty vector file")
    return EmbeddingTable(name or path.stem, dim, vectors, oov_policy)


def embed_tweet(tokens: Sequence[str], table: EmbeddingTable,
                max_tokens: int = MAX_TOKENS) -> TweetTensor:
    """Stack token vectors into a zero-padded ``max_tokens x D`` matrix."""
    out = np.zeros((max_tokens, table.dim))
    used = min(len(tokens), max_tokens)
    for i, tok in enumerate(tokens[:used]):
        vec = table.lookup(tok)
        if vec is not None:
            out[i] = vec
    return TweetTensor(out, used)


def tensorize_corpus(tweets, table: EmbeddingTable) -> list[TweetTensor]:
    if not tweets:
        raise ValueError("cannot tensorize an empty corpus")
    tensors = [embed_tweet(t.tokens, table) for t in tweets]
    vocab = {tok for t in tweets for tok in t.tokens}
    if vocab:
        hit = sum(tok in table for tok in vocab) / len(vocab)
        logger.info("%s covers %.1f%% of %d corpus types", table.name, 100 * hit, len(vocab))
    return tensors


def stack(tensors: Sequence[TweetTensor]) -> np.ndarray:
    """Stack tensors into an ``(N, 32, D)`` array."""
    return np.stack([t.values for t in tensors])


def write_tensor_cache(path: str | Path, tensors: Sequence[TweetTensor] | np.ndarray) -> None:
    arr = tensors if isinstance(tensors, np.ndarray) else stack(tensors)
    if arr.ndim != 3 or arr.shape[1] != MAX_TOKENS:
        raise ValueError(f"expected (count, {MAX_TOKENS}, dim) tensors")
    write_block(path, TENSOR_MAGIC, arr)


def read_tensor_cache(path: str | Path) -> list[TweetTensor]:
    """Read a ``TWTE`` cache; this is also how precomputed contextual vectors are loaded."""
    arr = read_block(path, TENSOR_MAGIC)
    if arr.shape[1] != MAX_TOKENS:
        raise FormatError(f"{path}: expected {MAX_TOKENS} rows per tweet, found {arr.shape[1]}")
    out = []
    for m in arr:
        nz = np.flatnonzero(np.any(m != 0, axis=1))
        out.append(TweetTensor(m, int(nz[-1]) + 1 if nz.size else 0))
    return out
