import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tweetcluster.embedding import (EmbeddingTable, embed_tweet, load_table, read_tensor_cache,
                                    stack, tensorize_corpus, write_tensor_cache)
from tweetcluster.io import FormatError
from tweetcluster.synthetic import make_corpus

TABLE = EmbeddingTable("t", 2, {"a": np.array([1.0, 0.0]), "b": np.array([0.0, 1.0])})


class TestLoadTable:
    def test_plain(self, tmp_path):
        p = tmp_path / "v.txt"
        p.write_text("a 1.0 0.0\nb 0.0 1.0\n")
        t = load_table(p)
        assert t.dim == 2 and len(t) == 2
        np.testing.assert_array_equal(t.vectors["b"], [0.0, 1.0])

    def test_header_skipped(self, tmp_path):
        p, q = tmp_path / "v.txt", tmp_path / "w.txt"
        p.write_text("a 1.0 0.0\nb 0.0 1.0\n")
        q.write_text("2 2\na 1.0 0.0\nb 0.0 1.0\n")
        a, b = load_table(p), load_table(q)
        assert a.vectors.keys() == b.vectors.keys()
        for k in a.vectors:
            np.testing.assert_array_equal(a.vectors[k], b.vectors[k])

    def test_bad_length_names_line(self, tmp_path):
        p = tmp_path / "v.txt"
        p.write_text("a 1.0 0.0\nb 0.0 1.0\nc 1.0\n")
        with pytest.raises(FormatError, match=":3:"):
            load_table(p)

    def test_empty(self, tmp_path):
        p = tmp_path / "v.txt"
        p.write_text("")
        with pytest.raises(FormatError):
            load_table(p)

    def test_duplicate_keeps_first(self, tmp_path):
        p = tmp_path / "v.txt"
        p.write_text("a 1 2\na 3 4\n")
        np.testing.assert_array_equal(load_table(p).vectors["a"], [1, 2])


class TestEmbedTweet:
    def test_lookup_and_padding(self):
        t = embed_tweet(["a", "b"], TABLE)
        assert t.values.shape == (32, 2) and t.used_rows == 2
        np.testing.assert_array_equal(t.values[:2], [[1, 0], [0, 1]])
        assert not t.values[2:].any()

    def test_oov_zero_row(self):
        t = embed_tweet(["unknownword"], TABLE)
        assert t.used_rows == 1 and not t.values.any()

    def test_truncation(self):
        t = embed_tweet(["a"] * 40, TABLE)
        assert t.used_rows == 32 and t.values[:, 0].sum() == 32

    @given(st.lists(st.sampled_from(["a", "b", "zz"]), max_size=40))
    def test_norm_lives_in_used_rows(self, tokens):
        t = embed_tweet(tokens, TABLE)
        assert t.used_rows <= 32
        assert not t.values[t.used_rows:].any()
        assert np.linalg.norm(t.values) == np.linalg.norm(t.values[:t.used_rows])


class TestTensorize:
    def test_shapes_and_order(self):
        tweets, _ = make_corpus(3, seed=0)
        from tweetcluster.synthetic import make_table

        for dim in (300, 768):
            table = make_table(dim=dim, seed=1)
            tensors = tensorize_corpus(tweets, table)
            assert [t.shape for t in tensors] == [(32, dim)] * 3
            for tw, tt in zip(tweets, tensors):
                np.testing.assert_array_equal(tt.values, embed_tweet(tw.tokens, table).values)

    def test_order_independent(self):
        from tweetcluster.synthetic import make_table

        tweets, _ = make_corpus(10, seed=0)
        table = make_table(dim=8, seed=1)
        fwd = stack(tensorize_corpus(tweets, table))
        rev = stack(tensorize_corpus(tweets[::-1], table))
        np.testing.assert_array_equal(fwd, rev[::-1])

    def test_empty_corpus(self):
        with pytest.raises(ValueError):
            tensorize_corpus([], TABLE)

    def test_cache_round_trip(self, tmp_path):
        tensors = [embed_tweet(["a", "b", "zz"], TABLE), embed_tweet(["b"], TABLE)]
        write_tensor_cache(tmp_path / "c.twte", tensors)
        data = (tmp_path / "c.twte").read_bytes()
        assert data[:4] == b"TWTE" and len(data) == 16 + 2 * 32 * 2 * 4
        back = read_tensor_cache(tmp_path / "c.twte")
        np.testing.assert_array_equal(stack(back), stack(tensors))
        assert [t.used_rows for t in back] == [2, 1]
