import numpy as np
import pytest

from tweetcluster import synthetic
from tweetcluster.cli import main
from tweetcluster.pipeline import RunConfig, parse_method


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("ws")
    tweets, _ = synthetic.make_corpus(120, n_topics=3, seed=1)
    (root / "data").mkdir()
    synthetic.write_channel_file(tweets[:60], root / "data" / "bbchealth.txt")
    synthetic.write_channel_file(tweets[60:], root / "data" / "cnnhealth.txt")
    synthetic.write_vector_file(synthetic.make_table(n_topics=3, dim=300, seed=2), root / "vec.txt")
    assert main(["ingest", "--in", str(root / "data"), "--out", str(root / "corpus.jsonl")]) == 0
    return root


def run(*argv):
    return main([str(a) for a in argv])


def test_ingest_outputs(workspace):
    lines = (workspace / "corpus_stats.csv").read_text().splitlines()
    assert lines[0] == "channel,tweets,words,unique_words,mean_words"
    assert lines[1].startswith("BBC Health,60,") and lines[2].startswith("CNN Health,60,")
    assert len((workspace / "corpus.jsonl").read_text().splitlines()) == 120


def test_ingest_missing(tmp_path, capsys):
    assert run("ingest", "--in", tmp_path / "absent", "--out", tmp_path / "c.jsonl") == 2
    assert "absent" in capsys.readouterr().err


@pytest.mark.parametrize("method, cols", [("tfidf+lda", 10), ("bow+nmf", 10), ("tfidf+tsvd", 10),
                                          ("bow+pca", 10)])
def test_featurize_reductions(workspace, method, cols):
    out = workspace / "feats"
    assert run("featurize", "--corpus", workspace / "corpus.jsonl", "--method", method,
               "--k", cols, "--out-dir", out, "--format", "both") == 0
    stem = method.replace("+", "_")
    values = np.loadtxt(out / f"{stem}.csv", delimiter=",", skiprows=1)
    assert values.shape == (120, cols)
    assert (out / f"{stem}.feat").read_bytes()[:4] == b"FEAT"


def test_featurize_raw_is_sparse(workspace):
    assert run("featurize", "--corpus", workspace / "corpus.jsonl", "--method", "bow",
               "--out-dir", workspace / "feats") == 0
    assert (workspace / "feats" / "bow.npz").exists()


def test_featurize_unknown_method(workspace, capsys):
    assert run("featurize", "--corpus", workspace / "corpus.jsonl", "--method", "glove+lda",
               "--out-dir", workspace / "feats") == 2
    assert "glove+lda" in capsys.readouterr().err


def test_featurize_l2cae(workspace):
    out = workspace / "cae"
    assert run("featurize", "--corpus", workspace / "corpus.jsonl", "--method", "syn+l2cae",
               "--embedding", workspace / "vec.txt", "--epochs", 1, "--float32",
               "--subsample", 50, "--out-dir", out) == 0
    values = np.loadtxt(out / "syn_l2cae.csv", delimiter=",", skiprows=1)
    assert values.shape == (50, 24)
    np.testing.assert_allclose(np.linalg.norm(values, axis=1), 1, atol=1e-6)
    assert (out / "syn_l2cae.cae").read_bytes()[:4] == b"CAE1"
    assert (out / "syn_l2cae_curve.csv").read_text().startswith("epoch,train_loss,val_loss\n1,")


def test_cluster_and_evaluate(workspace, capsys):
    feats = workspace / "feats" / "tfidf_lda.csv"
    if not feats.exists():
        run("featurize", "--corpus", workspace / "corpus.jsonl", "--method", "tfidf+lda",
            "--k", 10, "--out-dir", workspace / "feats")
    labels = workspace / "labels.csv"
    assert run("cluster", "--features", feats, "--algorithm", "ward", "--k", 3, "--out", labels) == 0
    assert labels.read_text().splitlines()[0] == "row_index,label"
    capsys.readouterr()
    assert run("evaluate", "--features", feats, "--labels", labels,
               "--compare", workspace / "feats" / "bow_nmf.csv") == 0
    out = capsys.readouterr().out
    assert "calinski_harabasz," in out and "p_value," in out


@pytest.fixture(scope="module")
def bench_features(workspace):
    out = workspace / "bfeats"
    for m in ("tfidf+lda", "tfidf+nmf"):
        assert run("featurize", "--corpus", workspace / "corpus.jsonl", "--method", m,
                   "--k", 6, "--out-dir", out) == 0
    return [f"lda={out / 'tfidf_lda.csv'}", f"nmf={out / 'tfidf_nmf.csv'}"]


def _bench(workspace, feats, out, *extra):
    argv = ["benchmark", "--ks", "3,4", "--seeds", "0,1", "--out-dir", workspace / out]
    for f in feats:
        argv += ["--features", f]
    return run(*argv, *extra)


def test_benchmark_grid_and_rerun(workspace, bench_features):
    assert _bench(workspace, bench_features, "b1") == 0
    assert _bench(workspace, bench_features, "b2", "--jobs", 2) == 0
    a = (workspace / "b1" / "report.csv").read_text()
    assert a == (workspace / "b2" / "report.csv").read_text()
    assert len(a.splitlines()) == 1 + 2 * 3 * 2 * 2


def test_benchmark_assert(workspace, bench_features):
    lda_wins = _bench(workspace, bench_features, "b3", "--assert", "lda > nmf")
    nmf_wins = _bench(workspace, bench_features, "b3", "--assert", "nmf > lda")
    assert sorted([lda_wins, nmf_wins]) == [0, 1]


def test_benchmark_missing_artifact(workspace, capsys):
    assert run("benchmark", "--features", f"ghost={workspace / 'nope.csv'}",
               "--out-dir", workspace / "b4") == 2
    assert "ghost" in capsys.readouterr().err


def test_benchmark_config_pipeline(workspace):
    cfg = workspace / "run.toml"
    cfg.write_text(f'corpus_path = "{workspace / "corpus.jsonl"}"\n'
                   'methods = ["tfidf", "tfidf+lda"]\nfeature_count = 6\nks = [3]\n'
                   'algorithms = ["kmeans", "ward"]\nseeds = [0]\n'
                   f'output_dir = "{workspace / "b5"}"\n')
    assert run("benchmark", "--config", cfg) == 0
    lines = (workspace / "b5" / "report.csv").read_text().splitlines()
    assert len(lines) == 1 + 2 * 2
    assert any(l.startswith("tfidf,") for l in lines)


def test_report(workspace, bench_features):
    _bench(workspace, bench_features, "b6")
    curve = workspace / "c.csv"
    curve.write_text("epoch,train_loss,val_loss\n1,2.0,2.1\n2,1.0,1.2\n3,0.9,1.1\n")
    assert run("report", "--benchmark", workspace / "b6" / "report.csv",
               "--curves", f"cae={curve}", "--out-dir", workspace / "rep") == 0
    for name in ("benchmark.png", "benchmark.svg", "learning_curves.png", "learning_curves.svg",
                 "summary.txt", "curves.csv"):
        assert (workspace / "rep" / name).stat().st_size > 0
    svg = (workspace / "rep" / "benchmark.svg").read_bytes()
    run("report", "--benchmark", workspace / "b6" / "report.csv", "--out-dir", workspace / "rep")
    assert (workspace / "rep" / "benchmark.svg").read_bytes() == svg


def test_report_nothing(tmp_path):
    assert run("report", "--out-dir", tmp_path) == 2


def test_seed_env(monkeypatch):
    monkeypatch.setenv("TWEETCLUSTER_SEED", "17")
    assert RunConfig().seeds == [17]
    from tweetcluster.cli import build_parser

    args = build_parser().parse_args(["cluster", "--features", "x", "--k", "2"])
    assert args.seed == 17


class TestRunConfig:
    def test_parse_method(self):
        assert parse_method("TFIDF+LDA").name == "tfidf+lda"
        assert parse_method("fasttext+l2cae").is_network
        for bad in ("lda", "glove+pca", "tfidf+cae+x", "word2vec"):
            with pytest.raises(ValueError):
                parse_method(bad)

    def test_validate_needs_embedding(self):
        with pytest.raises(ValueError):
            RunConfig(methods=["glove+cae"]).validate()
        RunConfig(methods=["glove+cae"], embeddings={"glove": "g.txt"}).validate()

    def test_unknown_key(self, tmp_path):
        p = tmp_path / "c.toml"
        p.write_text("colour = 1\n")
        with pytest.raises(ValueError):
            RunConfig.from_file(p)

    def test_override(self, tmp_path):
        p = tmp_path / "c.toml"
        p.write_text("ks = [5]\nmin_df = 3\n")
        cfg = RunConfig.from_file(p, min_df=1)
        assert cfg.ks == [5] and cfg.min_df == 1 and cfg.feature_count == 24
