import json

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from conftest import blobs
from tweetcluster.evaluation import (BenchmarkReport, DegenerateClusteringError, betainc,
                                     ch_score, f_sf, hotelling_t2, pair_agreement, run_benchmark)
from tweetcluster.features import FeatureMatrix


def ch_oracle(X, labels):
    """Straight double loop over clusters and points."""
    n, ks = len(X), sorted(set(labels))
    mean = [sum(X[i][f] for i in range(n)) / n for f in range(X.shape[1])]
    between = within = 0.0
    for k in ks:
        members = [i for i in range(n) if labels[i] == k]
        c = [sum(X[i][f] for i in members) / len(members) for f in range(X.shape[1])]
        between += len(members) * sum((c[f] - mean[f]) ** 2 for f in range(X.shape[1]))
        for i in members:
            within += sum((X[i][f] - c[f]) ** 2 for f in range(X.shape[1]))
    K = len(ks)
    return (n - K) / (K - 1) * between / within


def random_instance(seed):
    r = np.random.default_rng(seed)
    n, f, k = int(r.integers(12, 201)), int(r.integers(1, 25)), int(r.integers(2, 11))
    labels = np.concatenate([np.arange(k), r.integers(k, size=n - k)])
    return r.normal(size=(n, f)) * r.uniform(0.1, 10), r.permutation(labels)


class TestCH:
    def test_hand_example(self):
        X = np.array([[0, 0], [0, 2], [10, 0], [10, 2]], float)
        rep = ch_score(X, [0, 0, 1, 1])
        assert rep.score == 50.0 and (rep.K, rep.N) == (2, 4)

    @pytest.mark.parametrize("seed", range(10))
    def test_oracle(self, seed):
        X, labels = random_instance(seed)
        assert ch_score(X, labels).score == pytest.approx(ch_oracle(X, labels), rel=1e-9)

    def test_sparse_matches_dense(self, rng):
        X = sp.random(80, 30, density=0.2, random_state=2, format="csr")
        labels = rng.integers(4, size=80)
        assert ch_score(X, labels).score == pytest.approx(ch_score(X.toarray(), labels).score, rel=1e-9)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000), st.floats(-100, 100).filter(lambda c: abs(c) > 1e-3))
    def test_translation_and_scale(self, seed, c):
        X, labels = random_instance(seed)
        base = ch_score(X, labels).score
        assert ch_score(c * X, labels).score == pytest.approx(base, rel=1e-9)
        assert ch_score(X + 1e3 * c, labels).score == pytest.approx(base, rel=1e-9)

    def test_random_vs_true_labels(self):
        for seed in range(5):
            noise = np.random.default_rng(seed).normal(size=(300, 4))
            rand = ch_score(noise, np.random.default_rng(seed + 1).integers(3, size=300)).score
            X, y = blobs(100, [[0, 0, 0, 0], [8, 0, 0, 0], [0, 8, 0, 0]], seed=seed)
            assert rand < 5
            assert rand < ch_score(X, y).score

    def test_errors(self):
        with pytest.raises(ValueError):
            ch_score(np.zeros((4, 2)), [0, 0, 0, 0])
        with pytest.raises(ValueError):
            ch_score(np.eye(3), [0, 1, 2])
        with pytest.raises(DegenerateClusteringError):
            ch_score(np.array([[0.0], [0.0], [1.0], [1.0]]), [0, 0, 1, 1])


def test_pair_agreement():
    assert pair_agreement([0, 0, 1, 1], [5, 5, 3, 3]) == 1.0
    assert pair_agreement([0, 0, 1, 1], [0, 1, 0, 1]) == pytest.approx(2 / 6)


class TestFTail:
    @pytest.mark.parametrize("a, b, x", [(0.5, 0.5, 0.3), (2, 3, 0.9), (12, 150, 0.97),
                                         (1e-2, 5, 0.5), (200, 300, 0.4)])
    def test_betainc(self, a, b, x):
        from scipy.special import betainc as ref

        assert betainc(a, b, x) == pytest.approx(ref(a, b, x), rel=1e-10, abs=1e-300)

    @settings(max_examples=60)
    @given(st.floats(1e-3, 1e3), st.integers(1, 60), st.integers(1, 5000))
    def test_matches_scipy(self, f, d1, d2):
        want = stats.f.sf(f, d1, d2)
        assert f_sf(f, d1, d2) == pytest.approx(want, rel=1e-9, abs=1e-300)


class TestHotelling:
    def test_identical(self, rng):
        A = rng.normal(size=(30, 4))
        res = hotelling_t2(A, A.copy())
        assert res.t2 == 0 and res.p_value == 1.0

    @pytest.mark.parametrize("seed", range(5))
    def test_univariate_t(self, seed):
        r = np.random.default_rng(seed)
        a, b = r.normal(size=25), r.normal(0.4, 1.3, size=40)
        t = stats.ttest_ind(a, b).statistic
        res = hotelling_t2(a, b)
        assert res.t2 == pytest.approx(t ** 2, rel=1e-9)
        assert res.p_value == pytest.approx(stats.ttest_ind(a, b).pvalue, rel=1e-8)

    def test_separated(self, rng):
        A = rng.normal(size=(100, 24))
        B = rng.normal(size=(100, 24)) + 10
        assert hotelling_t2(A, B).p_value < 0.001

    def test_symmetry_and_affine_invariance(self, rng):
        A, B = rng.normal(size=(40, 5)), rng.normal(0.3, 1, size=(50, 5))
        M, c = rng.normal(size=(5, 5)) + 3 * np.eye(5), rng.normal(size=5)
        base = hotelling_t2(A, B).t2
        assert hotelling_t2(B, A).t2 == pytest.approx(base, rel=1e-6)
        assert hotelling_t2(A @ M.T + c, B @ M.T + c).t2 == pytest.approx(base, rel=1e-6)

    def test_singular(self, rng):
        A = rng.normal(size=(30, 3))
        A[:, 2] = A[:, 0]
        B = rng.normal(size=(30, 3))
        B[:, 2] = B[:, 0]
        with pytest.raises(np.linalg.LinAlgError):
            hotelling_t2(A, B)
        assert np.isfinite(hotelling_t2(A, B, pinv=True).t2)


class TestBenchmark:
    def reps(self):
        X, _ = blobs(20, [[0, 0], [9, 0], [0, 9]], seed=0)
        Y, _ = blobs(20, [[0, 0, 0], [3, 0, 0], [0, 3, 0]], seed=1)
        return {"x": FeatureMatrix(X, "x"), "y": FeatureMatrix(Y, "y")}

    def test_grid_size(self):
        report = run_benchmark(self.reps(), Ks=(2, 3, 5), seeds=(0,))
        assert len(report) == 18
        report = run_benchmark(self.reps(), Ks=(2, 3), seeds=(1, 2, 3))
        assert len(report) == 36 and {r.seed for r in report.rows} == {1, 2, 3}

    def test_duplicate_representation_scores_equal(self):
        x = self.reps()["x"]
        report = run_benchmark({"a": x, "b": x}, Ks=(3, 4), seeds=(0,))
        a = [r.ch_score for r in report.rows if r.representation == "a"]
        b = [r.ch_score for r in report.rows if r.representation == "b"]
        assert a == b

    def test_parallel_matches_serial(self):
        serial = run_benchmark(self.reps(), Ks=(2, 3), seeds=(0, 1))
        parallel = run_benchmark(self.reps(), Ks=(2, 3), seeds=(0, 1), jobs=2)
        assert serial.to_csv() == parallel.to_csv()

    def test_per_seed_representation(self):
        reps = self.reps()
        report = run_benchmark({"s": {0: reps["x"], 1: reps["x"]}}, Ks=(3,), seeds=(0, 1),
                               algorithms=("ward",))
        assert [r.seed for r in report.rows] == [0, 1]

    def test_inconsistent_rows(self, rng):
        with pytest.raises(ValueError):
            run_benchmark({"a": rng.normal(size=(10, 2)), "b": rng.normal(size=(11, 2))}, Ks=(2,))

    def test_artifacts(self):
        report = run_benchmark(self.reps(), Ks=(3,), seeds=(0,))
        text = report.to_csv()
        assert text.splitlines()[0] == "representation,features,algorithm,k,seed,ch_score"
        back = BenchmarkReport.from_csv(text)
        assert back.to_csv() == text
        meta = json.loads(report.to_json())
        assert meta["metadata"]["config_hash"] and meta["metadata"]["seeds"] == [0]
        assert report.check("x > y") and not report.check("x < y")
        with pytest.raises(ValueError):
            report.check("x >> y")
        assert "kmeans@3" in report.format_table()
