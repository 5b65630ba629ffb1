"""Word x word x article co-occurrence tensors and the tf-idf matrix."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .corpus import Corpus, Vocabulary

FREQUENCY = "frequency"
BINARY = "binary"
MODES = (FREQUENCY, BINARY)


class TensorError(ValueError):
    pass


@dataclass(frozen=True)
class TensorConfig:
    """Co-occurrence settings.

    A pair of tokens at positions ``p < q`` co-occurs when ``q - p < window``,
    i.e. both ends of the pair lie in one run of ``window`` consecutive tokens.
    """

    window: int = 5
    mode: str = BINARY

    def __post_init__(self):
        if not isinstance(self.window, (int, np.integer)) or not 2 <= self.window <= 50:
            raise TensorError(f"window must be an integer in [2, 50], got {self.window!r}")
        if self.mode not in MODES:
            raise TensorError(f"mode must be one of {MODES}, got {self.mode!r}")


@dataclass
class SparseTensor:
    """Three-mode tensor in coordinate format.

    ``i, j, k`` are int64 index arrays and ``values`` float64, sorted by
    ``(k, i, j)`` with no duplicate coordinates.
    """

    shape: tuple[int, int, int]
    i: np.ndarray
    j: np.ndarray
    k: np.ndarray
    values: np.ndarray

    @property
    def nnz(self) -> int:
        return int(self.values.size)

    def norm(self) -> float:
        return float(np.sqrt(np.dot(self.values, self.values)))

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        np.add.at(out, (self.i, self.j, self.k), self.values)
        return out

    def scaled(self, s: float) -> SparseTensor:
        return SparseTensor(self.shape, self.i, self.j, self.k, self.values * s)

    @classmethod
    def from_coords(cls, shape, i, j, k, values) -> SparseTensor:
        """Build from possibly unsorted, possibly duplicated coordinates (duplicates summed)."""
        shape = tuple(int(d) for d in shape)
        i, j, k = (np.asarray(a, dtype=np.int64).ravel() for a in (i, j, k))
        values = np.asarray(values, dtype=np.float64).ravel()
        if not (i.size == j.size == k.size == values.size):
            raise TensorError("coordinate arrays differ in length")
        for arr, dim, name in ((i, shape[0], "i"), (j, shape[1], "j"), (k, shape[2], "k")):
            if arr.size and (arr.min() < 0 or arr.max() >= dim):
                raise TensorError(f"index {name} out of range for dimension {dim}")
        key = (k * shape[0] + i) * shape[1] + j
        uniq, inv = np.unique(key, return_inverse=True)
        vals = np.bincount(inv.ravel(), weights=values, minlength=uniq.size)
        keep = vals != 0
        uniq, vals = uniq[keep], vals[keep]
        jj = uniq % shape[1]
        rest = uniq // shape[1]
        ii = rest % shape[0]
        kk = rest // shape[0]
        return cls(shape, ii, jj, kk, vals)


def _pair_arrays(corpus: Corpus, vocab: Vocabulary, window: int):
    """All in-window ordered position pairs (p < q) with both tokens in vocab and distinct words."""
    index = vocab.index
    word_ids, doc_ids = [], []
    for k, art in enumerate(corpus):
        word_ids.append(np.fromiter((index.get(t, -1) for t in art.tokens), dtype=np.int64, count=len(art.tokens)))
        doc_ids.append(np.full(len(art.tokens), k, dtype=np.int64))
    if not word_ids:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, empty
    words = np.concatenate(word_ids)
    docs = np.concatenate(doc_ids)
    us, vs, ks = [], [], []
    for d in range(1, window):
        a, b = words[:-d], words[d:]
        ok = (docs[:-d] == docs[d:]) & (a >= 0) & (b >= 0) & (a != b)
        us.append(a[ok])
        vs.append(b[ok])
        ks.append(docs[:-d][ok])
    return np.concatenate(us), np.concatenate(vs), np.concatenate(ks)


def build_cooccurrence_tensor(corpus: Corpus, vocab: Vocabulary, config: TensorConfig | None = None) -> SparseTensor:
    """Symmetric word-word co-occurrence slices, one per article.

    Out-of-vocabulary tokens keep their positions but contribute no entries;
    self pairs (same word twice) are dropped. In binary mode every stored
    value is 1.
    """
    config = config or TensorConfig()
    if len(vocab) == 0:
        raise TensorError("empty vocabulary")
    n_words = len(vocab)
    u, v, k = _pair_arrays(corpus, vocab, config.window)
    tensor = SparseTensor.from_coords(
        (n_words, n_words, len(corpus)),
        np.concatenate([u, v]),
        np.concatenate([v, u]),
        np.concatenate([k, k]),
        np.ones(2 * u.size),
    )
    if config.mode == BINARY:
        tensor.values = np.ones_like(tensor.values)
    return tensor


def save_tensor(tensor: SparseTensor, path) -> None:
    """Text coordinate file: ``I J M`` header, then ``i j k value`` lines sorted by (k, i, j)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("{} {} {}\n".format(*tensor.shape))
        fh.writelines(f"{a} {b} {c} {val:.17g}\n" for a, b, c, val in zip(tensor.i, tensor.j, tensor.k, tensor.values))


def load_tensor(path) -> SparseTensor:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise TensorError(f"{path}: empty tensor file")
    try:
        shape = tuple(int(x) for x in lines[0].split())
    except ValueError:
        raise TensorError(f"{path}:1: bad header") from None
    if len(shape) != 3:
        raise TensorError(f"{path}:1: header needs three dimensions")
    rows = [ln.split() for ln in lines[1:] if ln.strip()]
    if any(len(r) != 4 for r in rows):
        raise TensorError(f"{path}: every entry line needs 'i j k value'")
    if not rows:
        z = np.zeros(0)
        return SparseTensor.from_coords(shape, z, z, z, z)
    arr = np.array(rows, dtype=np.float64)
    return SparseTensor.from_coords(shape, arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3])


def build_tfidf(corpus: Corpus, vocab: Vocabulary) -> sp.csr_matrix:
    """Raw counts times ``ln(M / df)``; no row normalization.

    Returns an ``M x I`` CSR matrix. Words present in every article get
    weight 0 everywhere.
    """
    if len(vocab) == 0:
        raise TensorError("empty vocabulary")
    index = vocab.index
    rows, cols = [], []
    for k, art in enumerate(corpus):
        ids = [index[t] for t in art.tokens if t in index]
        rows.extend([k] * len(ids))
        cols.extend(ids)
    n_docs = len(corpus)
    counts = sp.csr_matrix(
        (np.ones(len(rows)), (np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64))),
        shape=(n_docs, len(vocab)),
    )
    counts.sum_duplicates()
    df = np.bincount(counts.indices, minlength=len(vocab))
    with np.errstate(divide="ignore"):
        idf = np.where(df > 0, np.log(n_docs / np.maximum(df, 1)), 0.0)
    tfidf = counts @ sp.diags(idf)
    tfidf = sp.csr_matrix(tfidf)
    tfidf.eliminate_zeros()
    tfidf.sort_indices()
    return tfidf
