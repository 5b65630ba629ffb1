import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tensorbp.corpus import Article, Corpus, Vocabulary
from tensorbp.tensor import (
    SparseTensor,
    TensorConfig,
    TensorError,
    build_cooccurrence_tensor,
    build_tfidf,
    load_tensor,
    save_tensor,
)


def brute_force_counts(tokens, vocab, window):
    """Enumerate every position pair p < q with q - p < window."""
    counts = Counter()
    for p in range(len(tokens)):
        for q in range(p + 1, len(tokens)):
            if q - p >= window:
                break
            a, b = tokens[p], tokens[q]
            if a not in vocab or b not in vocab or a == b:
                continue
            counts[(vocab.index[a], vocab.index[b])] += 1
            counts[(vocab.index[b], vocab.index[a])] += 1
    return counts


def slice_dict(tensor, k):
    sel = tensor.k == k
    return {(int(i), int(j)): float(v) for i, j, v in zip(tensor.i[sel], tensor.j[sel], tensor.values[sel])}


def one_article(tokens):
    return Corpus([Article("a", tokens=tuple(tokens))])


AB = Vocabulary(("a", "b"))


class TestWorkedExamples:
    def test_frequency_w2(self):
        t = build_cooccurrence_tensor(one_article("aba"), AB, TensorConfig(2, "frequency"))
        assert slice_dict(t, 0) == {(0, 1): 2.0, (1, 0): 2.0}

    def test_binary_w2(self):
        t = build_cooccurrence_tensor(one_article("aba"), AB, TensorConfig(2, "binary"))
        assert slice_dict(t, 0) == {(0, 1): 1.0, (1, 0): 1.0}

    def test_frequency_w3_has_no_diagonal(self):
        t = build_cooccurrence_tensor(one_article("aba"), AB, TensorConfig(3, "frequency"))
        assert slice_dict(t, 0) == {(0, 1): 2.0, (1, 0): 2.0}

    def test_single_token(self):
        corpus = Corpus([Article("x", tokens=("a",)), Article("y", tokens=("a", "b"))])
        t = build_cooccurrence_tensor(corpus, AB, TensorConfig(5, "frequency"))
        assert slice_dict(t, 0) == {}
        assert t.shape == (2, 2, 2)

    def test_oov_tokens_keep_positions(self):
        # a . b : distance 2, counted at w=3 but not at w=2
        t2 = build_cooccurrence_tensor(one_article(["a", "zz", "b"]), AB, TensorConfig(2, "frequency"))
        t3 = build_cooccurrence_tensor(one_article(["a", "zz", "b"]), AB, TensorConfig(3, "frequency"))
        assert t2.nnz == 0
        assert slice_dict(t3, 0) == {(0, 1): 1.0, (1, 0): 1.0}


class TestErrors:
    def test_empty_vocab(self):
        with pytest.raises(TensorError):
            build_cooccurrence_tensor(one_article("ab"), Vocabulary(()), TensorConfig())

    @pytest.mark.parametrize("window", [1, 0, 51])
    def test_window_bounds(self, window):
        with pytest.raises(TensorError):
            TensorConfig(window=window)

    def test_bad_mode(self):
        with pytest.raises(TensorError):
            TensorConfig(mode="count")


tokens_st = st.lists(st.sampled_from(list("abcdefg")), max_size=50)


@settings(max_examples=150, deadline=None)
@given(st.lists(tokens_st, min_size=1, max_size=4), st.integers(2, 8), st.integers(2, 7))
def test_matches_brute_force(docs, window, n_vocab):
    vocab = Vocabulary(tuple("abcdefg"[:n_vocab]))
    corpus = Corpus([Article(f"d{n}", tokens=tuple(d)) for n, d in enumerate(docs)])
    freq = build_cooccurrence_tensor(corpus, vocab, TensorConfig(window, "frequency"))
    binary = build_cooccurrence_tensor(corpus, vocab, TensorConfig(window, "binary"))
    for k, doc in enumerate(docs):
        expected = brute_force_counts(doc, vocab, window)
        got = slice_dict(freq, k)
        assert got == {key: float(v) for key, v in expected.items()}
        # slice mass = 2 x in-window distinct-word pairs
        assert sum(got.values()) == sum(expected.values())
        assert slice_dict(binary, k) == {key: 1.0 for key in expected}
        # symmetric, no diagonal
        assert all(got[(j, i)] == v for (i, j), v in got.items())
        assert all(i != j for i, j in got)


def test_binary_is_indicator_of_frequency(small_corpus, small_vocab):
    freq = build_cooccurrence_tensor(small_corpus, small_vocab, TensorConfig(6, "frequency"))
    binary = build_cooccurrence_tensor(small_corpus, small_vocab, TensorConfig(6, "binary"))
    np.testing.assert_array_equal(freq.i, binary.i)
    np.testing.assert_array_equal(freq.j, binary.j)
    np.testing.assert_array_equal(freq.k, binary.k)
    assert np.all(binary.values == 1.0)
    assert np.all(freq.values >= 1.0)


def test_sorted_unique_coordinates(small_corpus, small_vocab):
    t = build_cooccurrence_tensor(small_corpus, small_vocab, TensorConfig(5, "frequency"))
    key = (t.k * t.shape[0] + t.i) * t.shape[1] + t.j
    assert np.all(np.diff(key) > 0)


def test_coordinate_file_roundtrip(tmp_path, small_corpus, small_vocab):
    t = build_cooccurrence_tensor(small_corpus, small_vocab, TensorConfig(5, "frequency"))
    path = tmp_path / "x.coo"
    save_tensor(t, path)
    lines = path.read_text().splitlines()
    assert lines[0] == f"{len(small_vocab)} {len(small_vocab)} {len(small_corpus)}"
    back = load_tensor(path)
    assert back.shape == t.shape
    for a, b in zip((back.i, back.j, back.k, back.values), (t.i, t.j, t.k, t.values)):
        np.testing.assert_array_equal(a, b)


def test_from_coords_sums_duplicates():
    t = SparseTensor.from_coords((2, 2, 1), [0, 0, 1], [1, 1, 0], [0, 0, 0], [1.0, 2.0, 5.0])
    assert t.nnz == 2
    assert slice_dict(t, 0) == {(0, 1): 3.0, (1, 0): 5.0}


class TestTfidf:
    def test_formula(self):
        corpus = Corpus([Article("0", tokens=("x", "x", "x", "y")), Article("1", tokens=("y",))])
        vocab = Vocabulary(("x", "y"))
        m = build_tfidf(corpus, vocab).toarray()
        assert m[0, 0] == pytest.approx(3 * math.log(2))
        assert m[1, 0] == 0.0
        # y is in every article
        np.testing.assert_array_equal(m[:, 1], 0.0)

    def test_empty_article_row(self):
        corpus = Corpus([Article("0", tokens=("x",)), Article("1")])
        m = build_tfidf(corpus, Vocabulary(("x",))).toarray()
        np.testing.assert_array_equal(m[1], 0.0)

    def test_brute_force(self, small_corpus, small_vocab):
        m = build_tfidf(small_corpus, small_vocab).toarray()
        n_docs = len(small_corpus)
        for w in small_vocab.words[:25]:
            df = sum(w in art.tokens for art in small_corpus)
            for k, art in enumerate(small_corpus):
                expected = art.tokens.count(w) * math.log(n_docs / df)
                assert m[k, small_vocab.index[w]] == pytest.approx(expected, abs=1e-12)
        assert np.all(m >= 0)

    def test_row_depends_on_others_only_through_df(self):
        vocab = Vocabulary(("x", "y", "z"))
        a = Article("a", tokens=("x", "y", "y"))
        m1 = build_tfidf(Corpus([a, Article("b", tokens=("z",))]), vocab).toarray()
        m2 = build_tfidf(Corpus([a, Article("b", tokens=("z", "z", "z"))]), vocab).toarray()
        np.testing.assert_array_equal(m1[0], m2[0])
