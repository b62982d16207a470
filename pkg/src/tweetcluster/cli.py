"""Command-line entry point: ``tweetcluster <subcommand> ...``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import corpus as C
from . import features as F
from .cae import LearningCurve, featurize, train
from .clustering import ALGORITHMS, cluster
from .evaluation import BenchmarkReport, ch_score, hotelling_t2, run_benchmark
from .io import atomic_write_text
from .pipeline import (RunConfig, cae_config, default_seed, load_inputs, parse_method,
                       run_method, subsample)

logger = logging.getLogger("tweetcluster")


class UsageError(Exception):
    """Bad arguments or missing inputs (exit code 2)."""


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _words(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def _require(path, what: str) -> Path:
    path = Path(path)
    if not path.exists():
        raise UsageError(f"{what} not found: {path}")
    return path


def _load_features(path: Path, label: str = ""):
    if path.suffix == ".npz":
        return F.DocTermMatrix.load(path)
    return F.FeatureMatrix.load(path, label)


def _write_features(result, out_dir: Path, name: str, fmt: str) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = name.replace("+", "_")
    if isinstance(result, F.DocTermMatrix):
        path = out_dir / f"{stem}.npz"
        result.save(path)
        return [path]
    written = []
    if fmt in ("csv", "both"):
        written.append(out_dir / f"{stem}.csv")
        result.save_csv(written[-1])
    if fmt in ("bin", "both"):
        written.append(out_dir / f"{stem}.feat")
        result.save_binary(written[-1])
    return written


# -- subcommands ---------------------------------------------------------------------

def cmd_ingest(args) -> int:
    source = _require(args.input, "input")
    tweets = C.ingest(source, args.delimiter)
    out = Path(args.out)
    C.write_jsonl(tweets, out)
    stats_path = Path(args.stats) if args.stats else out.with_name(out.stem + "_stats.csv")
    atomic_write_text(stats_path, C.stats(tweets).to_csv() if tweets else
                      "channel,tweets,words,unique_words,mean_words\n")
    print(f"{len(tweets)} tweets -> {out}; statistics -> {stats_path}")
    return 0


def _config_from_args(args) -> RunConfig:
    base = RunConfig.from_file(args.config) if getattr(args, "config", None) else RunConfig()
    for key in ("min_df", "feature_count", "lda_passes", "nmf_iters", "cae_epochs",
                "cae_learning_rate", "cae_batch_size", "cae_dtype", "subsample", "jobs"):
        value = getattr(args, key, None)
        if value is not None:
            setattr(base, key, value)
    return base


def _subsample_inputs(tweets, inputs, n, seed):
    """Apply ``--subsample`` to the corpus and, for tensor caches, to the cache rows."""
    if isinstance(inputs, np.ndarray) and len(inputs) != len(tweets):
        raise UsageError(f"tensor cache has {len(inputs)} tweets, corpus has {len(tweets)}")
    tweets, idx = subsample(tweets, n, seed)
    if isinstance(inputs, np.ndarray):
        inputs = inputs[idx]
    return tweets, inputs


def cmd_featurize(args) -> int:
    config = _config_from_args(args)
    try:
        method = parse_method(args.method)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    tweets = C.read_jsonl(_require(args.corpus, "corpus"))
    inputs = load_inputs(_require(args.embedding, "embedding")) if args.embedding else None
    tweets, inputs = _subsample_inputs(tweets, inputs, config.subsample, args.seed)
    out = run_method(method, tweets, config, args.seed, inputs)
    out_dir = Path(args.out_dir)
    written = _write_features(out.features, out_dir, method.name, args.format)
    if out.model is not None:
        stem = method.name.replace("+", "_")
        out.model.save(out_dir / f"{stem}.cae")
        out.curve.save(out_dir / f"{stem}_curve.csv")
        written += [out_dir / f"{stem}.cae", out_dir / f"{stem}_curve.csv"]
    shape = out.features.shape
    print(f"{method.name}: {shape[0]}x{shape[1]} -> " + ", ".join(map(str, written)))
    return 0


def cmd_train_cae(args) -> int:
    config = _config_from_args(args)
    tweets = C.read_jsonl(_require(args.corpus, "corpus"))
    inputs = load_inputs(_require(args.embedding, "embedding"))
    tweets, inputs = _subsample_inputs(tweets, inputs, config.subsample, args.seed)
    from .embedding import EmbeddingTable, stack, tensorize_corpus

    data = stack(tensorize_corpus(tweets, inputs)) if isinstance(inputs, EmbeddingTable) else inputs
    if len(data) != len(tweets):
        raise UsageError(f"tensor cache has {len(data)} tweets, corpus has {len(tweets)}")
    cfg = cae_config(config, data.shape[2], args.l2, args.seed)

    def progress(epoch, tr, va):
        print(f"epoch {epoch:3d}  train {tr:.6g}  val {va:.6g}", flush=True)

    model, curve = train(cfg, data, progress=progress)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    name = "l2cae" if args.l2 else "cae"
    model.save(out_dir / f"{name}.cae")
    curve.save(out_dir / f"{name}_curve.csv")
    feats = featurize(model, data, label=name)
    feats.save_csv(out_dir / f"{name}.csv")
    print(f"best epoch {curve.best_epoch}; checkpoint -> {out_dir / (name + '.cae')}")
    return 0


def cmd_cluster(args) -> int:
    X = _load_features(_require(args.features, "features"))
    kwargs = {"gamma": args.gamma} if args.gamma and args.algorithm == "spectral" else {}
    result = cluster(X, args.algorithm, args.k, seed=args.seed, **kwargs)
    atomic_write_text(args.out, result.to_csv())
    print(f"{args.algorithm} K={args.k}: objective {result.inertia_or_objective:.6g} -> {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    X = _load_features(_require(args.features, "features"))
    if args.labels:
        data = np.loadtxt(_require(args.labels, "labels"), delimiter=",", skiprows=1,
                          dtype=np.int64, ndmin=2)
        labels = np.empty(len(data), dtype=np.int64)
        labels[data[:, 0]] = data[:, 1]
        rep = ch_score(X, labels)
        print(f"calinski_harabasz,{rep.score!r}\nk,{rep.K}\nn,{rep.N}")
    if args.compare:
        other = _load_features(_require(args.compare, "comparison features"))
        res = hotelling_t2(X, other, pinv=args.pinv)
        print(f"t2,{res.t2!r}\nf,{res.f_stat!r}\np_value,{res.p_value!r}")
    if not args.labels and not args.compare:
        raise UsageError("evaluate needs --labels and/or --compare")
    return 0


def _benchmark_inputs(args, config: RunConfig) -> tuple[dict, dict]:
    """Representations to score, plus learning curves of any networks trained here."""
    reps: dict = {}
    curves: dict = {}
    for pair in args.features or []:
        if "=" not in pair:
            raise UsageError(f"--features expects name=path, got {pair!r}")
        name, path = pair.split("=", 1)
        p = Path(path)
        if not p.exists():
            reps[name] = None
            continue
        reps[name] = _load_features(p, name)
    missing = [n for n, v in reps.items() if v is None]
    if missing:
        raise UsageError("missing feature artifact(s): " + ", ".join(missing))

    if config.corpus_path and config.methods:
        config.validate()
        corpus_path = _require(config.corpus_path, "corpus")
        tweets = (C.read_jsonl(corpus_path) if corpus_path.suffix == ".jsonl"
                  else C.ingest(corpus_path, config.delimiter))
        tweets, _ = subsample(tweets, config.subsample, config.seeds[0])
        bow = F.build_bow(tweets, config.min_df)
        loaded = {name: load_inputs(_require(path, f"embedding {name}"))
                  for name, path in config.embeddings.items()}
        for text in config.methods:
            method = parse_method(text)
            inputs = loaded.get(method.base)
            if method.stochastic:
                per_seed = {}
                for seed in config.seeds:
                    out = run_method(method, tweets, config, seed, inputs, bow)
                    per_seed[seed] = out.features
                    if out.curve is not None:
                        curves[f"{method.name}@{seed}"] = out.curve
                reps[method.name] = per_seed
            else:
                reps[method.name] = run_method(method, tweets, config, config.seeds[0],
                                               inputs, bow).features
    elif config.subsample:
        n = {(_shape(v)) for v in reps.values()}
        if len(n) == 1:
            _, idx = subsample(list(range(n.pop())), config.subsample, config.seeds[0])
            reps = {k: _take(v, idx) for k, v in reps.items()}
    if not reps:
        raise UsageError("nothing to benchmark: pass --features or a config with corpus_path")
    return reps, curves


def _shape(rep) -> int:
    return rep.shape[0]


def _take(rep, idx):
    if isinstance(rep, F.DocTermMatrix):
        return F.DocTermMatrix(rep.matrix[idx], rep.vocab, rep.weighting)
    return F.FeatureMatrix(rep.values[idx], rep.method_label)


def cmd_benchmark(args) -> int:
    config = _config_from_args(args)
    if args.corpus:
        config.corpus_path = args.corpus
    if args.methods:
        config.methods = _words(args.methods)
    elif not args.config and args.features:
        config.methods = []
    if args.ks:
        config.ks = _ints(args.ks)
    if args.algorithms:
        config.algorithms = _words(args.algorithms)
    if args.seeds:
        config.seeds = _ints(args.seeds)
    for pair in args.embedding or []:
        name, _, path = pair.partition("=")
        config.embeddings[name] = path
    if args.out_dir:
        config.output_dir = args.out_dir
    bad = [a for a in config.algorithms if a not in ALGORITHMS]
    if bad:
        raise UsageError(f"unknown algorithm(s): {', '.join(bad)}")
    try:
        config.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from None

    reps, curves = _benchmark_inputs(args, config)
    report = run_benchmark(reps, config.ks, config.algorithms, config.seeds,
                           {"spectral": {"max_samples": config.spectral_max_samples}},
                           jobs=config.jobs)
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out_dir / "report.csv", report.to_csv())
    atomic_write_text(out_dir / "report.json", report.to_json())
    for name, curve in curves.items():
        curve.save(out_dir / f"curve_{name.replace('+', '_').replace('@', '_seed')}.csv")
    print(report.format_table())
    print(f"\n{len(report)} rows -> {out_dir / 'report.csv'}")

    status = 0
    for expr in args.asserts or []:
        ok = report.check(expr)
        print(f"{'PASS' if ok else 'FAIL'}  {expr}")
        status |= 0 if ok else 1
    return status


def cmd_report(args) -> int:
    from . import plotting

    out_dir = Path(args.out_dir)
    written = []
    if args.benchmark:
        report = BenchmarkReport.from_csv(_require(args.benchmark, "benchmark report").read_text())
        written += plotting.plot_benchmark(report, out_dir / "benchmark")
        atomic_write_text(out_dir / "summary.txt", report.format_table() + "\n")
        written.append(out_dir / "summary.txt")
    curves = {}
    for pair in args.curves or []:
        name, _, path = pair.rpartition("=")
        curves[name or Path(path).stem] = LearningCurve.load(_require(path, "learning curve"))
    if curves:
        written += plotting.plot_learning_curves(curves, out_dir / "learning_curves")
        rows = ["run,epochs,best_epoch,plateau_epoch"]
        rows += [f"{n},{c.epochs},{c.best_epoch},{c.epochs_to_plateau()}" for n, c in curves.items()]
        atomic_write_text(out_dir / "curves.csv", "\n".join(rows) + "\n")
        written.append(out_dir / "curves.csv")
    if args.features:
        X = _load_features(_require(args.features, "features"))
        if not args.labels:
            raise UsageError("--features needs --labels for the scatter plot")
        data = np.loadtxt(_require(args.labels, "labels"), delimiter=",", skiprows=1,
                          dtype=np.int64, ndmin=2)
        written += plotting.plot_clusters(X, data[:, 1], out_dir / "clusters",
                                          title=Path(args.features).stem)
    if not written:
        raise UsageError("report needs --benchmark, --curves or --features")
    for p in written:
        print(p)
    return 0


# -- parser --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tweetcluster", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    seed = default_seed()

    p = sub.add_parser("ingest", help="clean and tokenize delimited tweet files")
    p.add_argument("--in", dest="input", required=True, help="channel file or directory of *.txt")
    p.add_argument("--delimiter", default="|")
    p.add_argument("--out", required=True, help="JSON-lines corpus to write")
    p.add_argument("--stats", help="statistics CSV (default: <out>_stats.csv)")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("featurize", help="compute one representation of a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--method", required=True,
                   help="bow, tfidf, {bow,tfidf}+{pca,tsvd,lda,nmf}, <embedding>+{cae,l2cae}")
    p.add_argument("--k", dest="feature_count", type=int)
    p.add_argument("--embedding", help="text vector file or TWTE tensor cache")
    p.add_argument("--out-dir", default="features")
    p.add_argument("--format", choices=("csv", "bin", "both"), default="csv")
    _common(p, seed)
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("train-cae", help="train a (constrained) convolutional autoencoder")
    p.add_argument("--corpus", required=True)
    p.add_argument("--embedding", required=True, help="text vector file or TWTE tensor cache")
    p.add_argument("--l2", action="store_true", help="unit-norm bottleneck constraint")
    p.add_argument("--out-dir", default="cae")
    _common(p, seed)
    p.set_defaults(func=cmd_train_cae)

    p = sub.add_parser("cluster", help="cluster a feature matrix")
    p.add_argument("--features", required=True)
    p.add_argument("--algorithm", choices=ALGORITHMS, default="kmeans")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--gamma", type=float, help="Gaussian kernel width for spectral (default 1/F)")
    p.add_argument("--seed", type=int, default=seed)
    p.add_argument("--out", default="labels.csv")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("evaluate", help="CH score of a labelling, Hotelling T^2 between matrices")
    p.add_argument("--features", required=True)
    p.add_argument("--labels")
    p.add_argument("--compare", help="second feature matrix for Hotelling's T^2")
    p.add_argument("--pinv", action="store_true", help="pseudo-inverse for singular covariance")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("benchmark", help="representation x algorithm x K grid of CH scores")
    p.add_argument("--features", action="append", metavar="NAME=PATH")
    p.add_argument("--corpus", help="corpus to featurize (JSON-lines or channel files)")
    p.add_argument("--methods", help="comma-separated methods to featurize")
    p.add_argument("--embedding", action="append", metavar="NAME=PATH")
    p.add_argument("--ks")
    p.add_argument("--algorithms")
    p.add_argument("--seeds")
    p.add_argument("--out-dir")
    p.add_argument("--assert", dest="asserts", action="append", metavar="'A > B'")
    p.add_argument("--jobs", type=int)
    _common(p, None)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("report", help="render figures and summaries")
    p.add_argument("--benchmark", help="report.csv from the benchmark command")
    p.add_argument("--curves", action="append", metavar="NAME=PATH")
    p.add_argument("--features")
    p.add_argument("--labels")
    p.add_argument("--out-dir", default="report")
    p.set_defaults(func=cmd_report)
    return parser


def _common(p: argparse.ArgumentParser, seed: int | None) -> None:
    p.add_argument("--config", help="TOML run configuration; flags override it")
    if seed is not None:
        p.add_argument("--seed", type=int, default=seed)
    p.add_argument("--min-df", type=int)
    p.add_argument("--lda-passes", type=int)
    p.add_argument("--nmf-iters", type=int)
    p.add_argument("--epochs", dest="cae_epochs", type=int)
    p.add_argument("--lr", dest="cae_learning_rate", type=float)
    p.add_argument("--batch-size", dest="cae_batch_size", type=int)
    p.add_argument("--float32", dest="cae_dtype", action="store_const", const="float32")
    p.add_argument("--subsample", type=int)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"tweetcluster {args.command}: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"tweetcluster {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
