"""Article loading, text normalization, vocabulary construction and class balancing."""

from __future__ import annotations

import csv
import json
import re
from collections import Counter
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field, replace
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np
from nltk.stem.porter import PorterStemmer

REAL = "real"
FAKE = "fake"
UNKNOWN = "unknown"
LABELS = (REAL, FAKE, UNKNOWN)

FORMATS = ("jsonl", "csv", "directory")

_TOKEN_RE = re.compile(r"[^\W_]+")


class CorpusError(ValueError):
    """Raised for unreadable, malformed or degenerate corpora."""


@dataclass(frozen=True)
class Article:
    id: str
    text: str = ""
    label: str = UNKNOWN
    category: str | None = None
    tokens: tuple[str, ...] = ()

    @property
    def length(self) -> int:
        return len(self.tokens)


@dataclass
class Corpus:
    articles: list[Article]

    def __post_init__(self):
        seen = set()
        for art in self.articles:
            if art.id in seen:
                raise CorpusError(f"duplicate article id {art.id!r}")
            seen.add(art.id)

    def __len__(self):
        return len(self.articles)

    def __iter__(self):
        return iter(self.articles)

    def __getitem__(self, idx):
        return self.articles[idx]

    @property
    def ids(self) -> list[str]:
        return [a.id for a in self.articles]

    @property
    def labels(self) -> list[str]:
        return [a.label for a in self.articles]

    @property
    def label_counts(self) -> dict[str, int]:
        counts = Counter(a.label for a in self.articles)
        return {lab: counts.get(lab, 0) for lab in LABELS}

    def subset(self, indices: Iterable[int]) -> Corpus:
        return Corpus([self.articles[i] for i in indices])


@dataclass(frozen=True)
class Vocabulary:
    words: tuple[str, ...]
    index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        index = {w: i for i, w in enumerate(self.words)}
        if len(index) != len(self.words):
            raise CorpusError("vocabulary contains duplicate words")
        object.__setattr__(self, "index", index)

    def __len__(self):
        return len(self.words)

    def __contains__(self, word):
        return word in self.index


# ---------------------------------------------------------------------------
# loading


def _parse_label(raw, where: str) -> str:
    if raw is None:
        return UNKNOWN
    lab = str(raw).strip().lower()
    if lab in ("", "null", "none", UNKNOWN):
        return UNKNOWN
    if lab not in (REAL, FAKE):
        raise CorpusError(f"{where}: invalid label {raw!r} (expected real, fake or empty)")
    return lab


def _parse_category(raw) -> str | None:
    if raw is None:
        return None
    cat = str(raw).strip()
    return cat or None


def _load_jsonl(path: Path) -> list[Article]:
    articles = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{where}: malformed JSON ({exc.msg})") from None
            if not isinstance(rec, dict) or "id" not in rec or "text" not in rec:
                raise CorpusError(f"{where}: record needs 'id' and 'text' fields")
            if not isinstance(rec["text"], str):
                raise CorpusError(f"{where}: 'text' must be a string")
            articles.append(
                Article(
                    id=str(rec["id"]),
                    text=rec["text"],
                    label=_parse_label(rec.get("label"), where),
                    category=_parse_category(rec.get("category")),
                )
            )
    return articles


def _load_csv(path: Path) -> list[Article]:
    articles = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return []
        missing = {"id", "text"} - set(reader.fieldnames)
        if missing:
            raise CorpusError(f"{path}: header lacks column(s) {sorted(missing)}")
        for row in reader:
            where = f"{path}:{reader.line_num}"
            if None in row or row["id"] is None or row["text"] is None:
                raise CorpusError(f"{where}: wrong number of fields")
            articles.append(
                Article(
                    id=row["id"],
                    text=row["text"],
                    label=_parse_label(row.get("label"), where),
                    category=_parse_category(row.get("category")),
                )
            )
    return articles


def _load_directory(path: Path) -> list[Article]:
    labels: dict[str, str] = {}
    categories: dict[str, str | None] = {}
    sidecar = path / "labels.csv"
    if sidecar.exists():
        with open(sidecar, encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or not {"id", "label"} <= set(reader.fieldnames):
                raise CorpusError(f"{sidecar}: header must contain id,label")
            for row in reader:
                labels[row["id"]] = _parse_label(row["label"], f"{sidecar}:{reader.line_num}")
                categories[row["id"]] = row.get("category") or None
    articles = []
    for txt in sorted(path.glob("*.txt")):
        try:
            text = txt.read_text(encoding="utf-8")
        except UnicodeDecodeError:
            raise CorpusError(f"{txt}: not valid UTF-8") from None
        articles.append(
            Article(id=txt.stem, text=text, label=labels.get(txt.stem, UNKNOWN), category=categories.get(txt.stem))
        )
    return articles


def load_corpus(path, format: str = "jsonl") -> Corpus:
    """Read raw articles from disk.

    Parameters
    ----------
    path : str or Path
        A ``.jsonl`` file, a ``.csv`` file (header ``id,text,label,category``)
        or a directory of ``.txt`` files with an optional ``labels.csv``.
    format : {'jsonl', 'csv', 'directory'}

    Returns
    -------
    Corpus
        Articles in file order, with raw text attached and no tokens yet.
    """
    path = Path(path)
    if format not in FORMATS:
        raise CorpusError(f"unknown corpus format {format!r}; expected one of {FORMATS}")
    if not path.exists():
        raise CorpusError(f"corpus path {path} does not exist")
    if format == "directory":
        if not path.is_dir():
            raise CorpusError(f"{path} is not a directory")
        articles = _load_directory(path)
    else:
        if not path.is_file():
            raise CorpusError(f"{path} is not a file")
        articles = _load_jsonl(path) if format == "jsonl" else _load_csv(path)
    if not articles:
        raise CorpusError("empty corpus")
    return Corpus(articles)


# ---------------------------------------------------------------------------
# preprocessing


def load_stopwords(path=None) -> frozenset[str]:
    """One word per line, UTF-8. ``None`` loads the bundled English list."""
    if path is None:
        text = resources.files("tensorbp").joinpath("data/stopwords_en.txt").read_text("utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    return frozenset(w.strip().lower() for w in text.splitlines() if w.strip())


@dataclass(frozen=True)
class PreprocessConfig:
    stopwords: frozenset[str] = field(default_factory=load_stopwords)
    stem: bool = True
    min_token_len: int = 2


_STEMMER = PorterStemmer(mode=PorterStemmer.ORIGINAL_ALGORITHM)


@lru_cache(maxsize=200_000)
def stem(word: str) -> str:
    # Porter is not idempotent on ~3% of English words; iterate to a fixed point
    # so that re-processing already-processed text is a no-op.
    prev, cur = None, word
    while cur != prev:
        prev, cur = cur, _STEMMER.stem(cur)
    return cur


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def preprocess(raw_text: str, config: PreprocessConfig | None = None) -> list[str]:
    """Lowercase, split on non-alphanumerics, drop short tokens and stopwords, stem.

    >>> preprocess("The cats are running!")
    ['cat', 'run']
    """
    if config is None:
        config = _default_config()
    stop = config.stopwords
    out = []
    for tok in tokenize(raw_text):
        if len(tok) < config.min_token_len or tok in stop:
            continue
        if config.stem:
            tok = stem(tok)
            if len(tok) < config.min_token_len or tok in stop:
                continue
        out.append(tok)
    return out


@lru_cache(maxsize=1)
def _default_config() -> PreprocessConfig:
    return PreprocessConfig()


def preprocess_corpus(corpus: Corpus, config: PreprocessConfig | None = None) -> Corpus:
    return Corpus([replace(a, tokens=tuple(preprocess(a.text, config))) for a in corpus])


# ---------------------------------------------------------------------------
# vocabulary and balancing


def build_vocabulary(corpus: Corpus, max_vocab: int | None = 5000) -> Vocabulary:
    """Most frequent tokens first; equal counts ordered lexicographically.

    ``max_vocab=None`` keeps every token.
    """
    counts = Counter()
    for art in corpus:
        counts.update(art.tokens)
    if not counts:
        raise CorpusError("corpus has no tokens; cannot build a vocabulary")
    if max_vocab is not None and max_vocab < 1:
        raise CorpusError("max_vocab must be positive or None")
    ordered = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    if max_vocab is not None:
        ordered = ordered[:max_vocab]
    return Vocabulary(tuple(w for w, _ in ordered))


def _balanced_indices(labels: Sequence[str], seed) -> list[int]:
    real = [i for i, lab in enumerate(labels) if lab == REAL]
    fake = [i for i, lab in enumerate(labels) if lab == FAKE]
    if not real or not fake:
        raise CorpusError(
            f"cannot balance: {len(real)} real and {len(fake)} fake articles"
        )
    n = min(len(real), len(fake))
    rng = np.random.default_rng(seed)
    keep = set()
    for group in (real, fake):
        if len(group) > n:
            group = rng.choice(group, size=n, replace=False).tolist()
        keep.update(group)
    unknown = [i for i, lab in enumerate(labels) if lab not in (REAL, FAKE)]
    keep.update(unknown)
    return sorted(keep)


def downsample_balance(corpus: Corpus, seed: int = 0) -> Corpus:
    """Randomly shrink the majority class so that |real| == |fake|.

    Unlabeled articles are kept untouched; file order is preserved.
    """
    idx = _balanced_indices(corpus.labels, seed)
    if len(idx) == len(corpus):
        return corpus
    return corpus.subset(idx)
