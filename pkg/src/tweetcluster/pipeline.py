"""Run configuration and method dispatch shared by the command-line tools."""

from __future__ import annotations

import logging
import os
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import features as F
from .cae import CAEConfig, LearningCurve, featurize, train
from .cae.model import CAEModel
from .embedding import EmbeddingTable, load_table, read_tensor_cache, stack, tensorize_corpus

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

logger = logging.getLogger(__name__)

WEIGHTINGS = ("bow", "tfidf")
REDUCTIONS = ("pca", "tsvd", "lda", "nmf")
NETWORKS = ("cae", "l2cae")


def default_seed() -> int:
    return int(os.environ.get("TWEETCLUSTER_SEED", "0"))


@dataclass(frozen=True)
class Method:
    base: str
    stage: str | None = None

    @property
    def name(self) -> str:
        return self.base if self.stage is None else f"{self.base}+{self.stage}"

    @property
    def is_network(self) -> bool:
        return self.stage in NETWORKS

    @property
    def stochastic(self) -> bool:
        return self.stage in ("tsvd", "lda", "nmf") or self.is_network


def parse_method(text: str) -> Method:
    """Parse ``bow``, ``tfidf+lda``, ``fasttext+l2cae`` style method names."""
    parts = text.strip().lower().split("+")
    if len(parts) == 1 and parts[0] in WEIGHTINGS:
        return Method(parts[0])
    if len(parts) == 2:
        base, stage = parts
        if stage in REDUCTIONS and base in WEIGHTINGS:
            return Method(base, stage)
        if stage in NETWORKS and base:
            return Method(base, stage)
        if stage in REDUCTIONS:
            raise ValueError(f"{text!r}: {stage} needs a bow or tfidf base")
    raise ValueError(f"unknown method {text!r}")


@dataclass
class RunConfig:
    corpus_path: str | None = None
    delimiter: str = "|"
    embeddings: dict = field(default_factory=dict)
    methods: list = field(default_factory=lambda: ["tfidf+lda"])
    feature_count: int = F.FEATURE_COUNT
    ks: list = field(default_factory=lambda: [10, 20, 50])
    algorithms: list = field(default_factory=lambda: ["kmeans", "ward", "spectral"])
    seeds: list = field(default_factory=lambda: [default_seed()])
    output_dir: str = "runs"
    subsample: int | None = None
    min_df: int = 2
    lda_passes: int = 5
    nmf_iters: int = 200
    cae_epochs: int = 50
    cae_learning_rate: float = 1e-5
    cae_batch_size: int = 32
    cae_dtype: str = "float64"
    spectral_max_samples: int = 20000
    jobs: int = 1

    def validate(self) -> None:
        for text in self.methods:
            m = parse_method(text)
            if m.is_network and m.base not in self.embeddings:
                raise ValueError(f"method {text!r} names embedding {m.base!r}, which is not configured")

    @classmethod
    def from_file(cls, path: str | Path, **overrides) -> "RunConfig":
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
        return cls.from_dict({**data, **{k: v for k, v in overrides.items() if v is not None}})

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**data)


def cae_config(config: RunConfig, dim: int, constrained: bool, seed: int) -> CAEConfig:
    return CAEConfig(input_cols=dim, l2_constrained=constrained, seed=seed,
                     learning_rate=config.cae_learning_rate, batch_size=config.cae_batch_size,
                     max_epochs=config.cae_epochs, dtype=config.cae_dtype)


def load_inputs(source: str | Path) -> EmbeddingTable | np.ndarray:
    """A text vector table, or a ``TWTE`` cache of precomputed tweet matrices."""
    source = Path(source)
    with open(source, "rb") as fh:
        magic = fh.read(4)
    if magic == b"TWTE":
        return stack(read_tensor_cache(source))
    return load_table(source)


@dataclass
class MethodOutput:
    features: F.FeatureMatrix | F.DocTermMatrix
    model: CAEModel | None = None
    curve: LearningCurve | None = None


def run_method(method: Method | str, tweets, config: RunConfig, seed: int,
               inputs: EmbeddingTable | np.ndarray | None = None,
               bow: F.DocTermMatrix | None = None) -> MethodOutput:
    """Produce one representation of ``tweets``."""
    method = parse_method(method) if isinstance(method, str) else method
    if method.is_network:
        if inputs is None:
            raise ValueError(f"{method.name} needs word vectors or a tensor cache")
        if isinstance(inputs, EmbeddingTable):
            data = stack(tensorize_corpus(tweets, inputs))
        else:
            data = inputs
            if len(data) != len(tweets):
                raise ValueError(f"tensor cache has {len(data)} tweets, corpus has {len(tweets)}")
        cfg = cae_config(config, data.shape[2], method.stage == "l2cae", seed)
        model, curve = train(cfg, data)
        return MethodOutput(featurize(model, data, label=method.name), model, curve)

    bow = F.build_bow(tweets, config.min_df) if bow is None else bow
    dtm = bow if method.base == "bow" else F.build_tfidf(bow)
    k = config.feature_count
    if method.stage is None:
        return MethodOutput(dtm)
    if method.stage == "pca":
        return MethodOutput(F.pca_reduce(dtm, k, label=method.name))
    if method.stage == "tsvd":
        return MethodOutput(F.tsvd_reduce(dtm, k, seed=seed, label=method.name))
    if method.stage == "lda":
        return MethodOutput(F.lda_fit_transform(dtm, k, passes=config.lda_passes, seed=seed,
                                                label=method.name))
    return MethodOutput(F.nmf_fit_transform(dtm, k, iters=config.nmf_iters, seed=seed,
                                            label=method.name))


def subsample(items, n: int | None, seed: int):
    """Seeded subsample preserving the original order."""
    if n is None or n >= len(items):
        return list(items), np.arange(len(items))
    idx = np.sort(np.random.default_rng(seed).choice(len(items), n, replace=False))
    return [items[i] for i in idx], idx
