"""Seeded synthetic corpora and vector files for demos and tests.

Tweets are drawn from a handful of topics, each with its own vocabulary,
plus a pool of shared filler words. Word vectors cluster around one random
direction per topic, so topical structure is recoverable from embeddings.
"""

from __future__ import annotations

from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from .corpus import TIMESTAMP_FORMAT, Tweet, clean, tokenize
from .embedding import EmbeddingTable
from .io import atomic_write_text


def topic_word(topic: int, j: int) -> str:
    return f"{chr(97 + topic % 26)}{topic // 26}w{j}"


def make_corpus(n: int, n_topics: int = 4, words_per_topic: int = 40,
                n_common: int = 30, topical_fraction: float = 0.75,
                length: tuple[int, int] = (4, 14), seed: int = 0,
                channel: str = "synthetic") -> tuple[list[Tweet], np.ndarray]:
    """Return ``n`` tweets and their generating topic ids."""
    rng = np.random.default_rng(seed)
    topics = rng.integers(n_topics, size=n)
    start = datetime(2015, 1, 1, tzinfo=timezone.utc)
    tweets = []
    for i, k in enumerate(topics):
        size = int(rng.integers(length[0], length[1] + 1))
        words = []
        for _ in range(size):
            if rng.random() < topical_fraction:
                words.append(topic_word(int(k), int(rng.integers(words_per_topic))))
            else:
                words.append(f"common{int(rng.integers(n_common))}")
        raw = " ".join(words)
        if rng.random() < 0.5:
            raw += f" http://t.co/{i:x}"
        text = clean(raw)
        tweets.append(Tweet(str(i), channel, start + timedelta(minutes=int(i)), raw, text,
                            tuple(tokenize(text))))
    return tweets, topics


def make_table(n_topics: int = 4, words_per_topic: int = 40, n_common: int = 30,
               dim: int = 300, spread: float = 0.35, oov_fraction: float = 0.05,
               seed: int = 0, name: str = "synthetic") -> EmbeddingTable:
    """Word vectors clustered by topic; a fraction of topical words is left out (OOV)."""
    rng = np.random.default_rng(seed)
    centers = rng.normal(size=(n_topics, dim))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    vectors = {}
    scale = 1.0 / np.sqrt(dim)
    for k in range(n_topics):
        for j in range(words_per_topic):
            if rng.random() < oov_fraction:
                continue
            vectors[topic_word(k, j)] = centers[k] + spread * scale * rng.normal(size=dim) * np.sqrt(dim)
    for j in range(n_common):
        vectors[f"common{j}"] = spread * rng.normal(size=dim) * scale * np.sqrt(dim)
    return EmbeddingTable(name, dim, vectors)


def write_channel_file(tweets, path: str | Path, delimiter: str = "|") -> None:
    lines = [f"{t.id}{delimiter}{t.timestamp.strftime(TIMESTAMP_FORMAT)}{delimiter}{t.raw_text}"
             for t in tweets]
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_vector_file(table: EmbeddingTable, path: str | Path, header: bool = True) -> None:
    lines = [f"{len(table)} {table.dim}"] if header else []
    for tok, vec in table.vectors.items():
        lines.append(tok + " " + " ".join(f"{v:.6f}" for v in vec))
    atomic_write_text(path, "\n".join(lines) + "\n")
