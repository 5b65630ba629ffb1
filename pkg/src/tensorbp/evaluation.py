"""Label masking, held-out scoring and sub-sampled sensitivity corpora."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from fractions import Fraction

import numpy as np

from .corpus import FAKE, REAL, Corpus, CorpusError, downsample_balance
from .fabp import FAKE_LABEL, REAL_LABEL


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class Confusion:
    """Counts with fake as the positive class."""

    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class MetricReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    support: int
    precision_undefined: bool = False
    recall_undefined: bool = False

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SplitSpec:
    label_fraction: float = 0.3
    seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        if not 0.0 < self.label_fraction < 1.0:
            raise EvaluationError(f"label_fraction must lie in (0, 1), got {self.label_fraction}")


def _label_value(label: str) -> int:
    if label == REAL:
        return REAL_LABEL
    if label == FAKE:
        return FAKE_LABEL
    raise EvaluationError(f"article label {label!r} is not real/fake")


def revealed_count(fraction: float, n: int) -> int:
    """``round(fraction * n)`` with ties to even, evaluated on the decimal value of ``fraction``."""
    return round(Fraction(str(fraction)) * n)


def make_label_mask(corpus: Corpus, split: SplitSpec):
    """Reveal a seeded random subset of ground-truth labels.

    Returns
    -------
    labels : ndarray of int
        ``+1`` real / ``-1`` fake on revealed articles, ``0`` elsewhere.
    held_out : ndarray of int
        Sorted indices of the unrevealed articles.
    """
    truth = np.array([_label_value(lab) for lab in corpus.labels], dtype=np.int64)
    rng = np.random.default_rng(split.seed)
    n = truth.size
    if split.stratified:
        revealed = []
        for cls, name in ((REAL_LABEL, REAL), (FAKE_LABEL, FAKE)):
            members = np.flatnonzero(truth == cls)
            count = revealed_count(split.label_fraction, members.size)
            if count == 0:
                raise EvaluationError(
                    f"label_fraction {split.label_fraction} reveals no {name} article "
                    f"({members.size} available)"
                )
            revealed.append(rng.choice(members, size=count, replace=False))
        revealed = np.concatenate(revealed)
    else:
        count = revealed_count(split.label_fraction, n)
        if count == 0:
            raise EvaluationError(f"label_fraction {split.label_fraction} reveals no article of {n}")
        revealed = rng.choice(n, size=count, replace=False)
    labels = np.zeros(n, dtype=np.int64)
    labels[revealed] = truth[revealed]
    mask = np.ones(n, dtype=bool)
    mask[revealed] = False
    return labels, np.flatnonzero(mask)


def confusion(predictions, truth) -> Confusion:
    pred = np.asarray(predictions)
    true = np.asarray(truth)
    fake_p, fake_t = pred == FAKE_LABEL, true == FAKE_LABEL
    return Confusion(
        tp=int(np.sum(fake_p & fake_t)),
        fp=int(np.sum(fake_p & ~fake_t)),
        tn=int(np.sum(~fake_p & ~fake_t)),
        fn=int(np.sum(~fake_p & fake_t)),
    )


def report_from_confusion(c: Confusion) -> MetricReport:
    total = c.total
    accuracy = (c.tp + c.tn) / total if total else 0.0
    p_undef = c.tp + c.fp == 0
    r_undef = c.tp + c.fn == 0
    precision = 0.0 if p_undef else c.tp / (c.tp + c.fp)
    recall = 0.0 if r_undef else c.tp / (c.tp + c.fn)
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return MetricReport(accuracy, precision, recall, f1, total, p_undef, r_undef)


def score(predictions, truth, held_out) -> MetricReport:
    """Accuracy, precision, recall and F1 over the held-out articles only.

    ``predictions`` and ``truth`` are per-article arrays of ``+1`` (real) and
    ``-1`` (fake). A zero/missing prediction on a held-out article is an error.
    Undefined precision or recall (zero denominator) is reported as 0 and flagged.
    """
    pred = np.asarray(predictions)
    true = np.asarray(truth)
    held = np.asarray(held_out, dtype=np.int64)
    if held.size and (held.max() >= pred.size or held.max() >= true.size or held.min() < 0):
        raise EvaluationError("held-out index outside the prediction vector")
    pred, true = pred[held], true[held]
    missing = ~np.isin(pred, (REAL_LABEL, FAKE_LABEL))
    if np.any(missing):
        raise EvaluationError(f"missing prediction for held-out article(s) {held[missing][:5].tolist()}")
    if not np.all(np.isin(true, (REAL_LABEL, FAKE_LABEL))):
        raise EvaluationError("held-out articles need known ground truth")
    return report_from_confusion(confusion(pred, true))


def truth_vector(corpus: Corpus) -> np.ndarray:
    return np.array([_label_value(lab) for lab in corpus.labels], dtype=np.int64)


def subsample_sensitivity(
    corpus: Corpus,
    category: str | None = None,
    length_band: tuple[float, float] | None = None,
    length_delta: float | None = None,
    balance: bool = True,
    seed: int = 0,
) -> Corpus:
    """Restrict a corpus by fake-news category and/or article length, then rebalance.

    Parameters
    ----------
    category : str, optional
        Keep only fake articles carrying this category tag; real articles are
        unaffected (they serve as the balancing pool).
    length_band : (lo, hi), optional
        Keep articles whose token count lies in ``[lo, hi]``.
    length_delta : float, optional
        Shortcut for ``length_band = (mean - delta, mean + delta)`` where
        ``mean`` is the mean token count of the input corpus. Mutually
        exclusive with ``length_band``.
    balance : bool
        Down-sample the larger class with ``seed`` so both classes match.
    """
    if length_band is not None and length_delta is not None:
        raise EvaluationError("give either length_band or length_delta, not both")
    if length_delta is not None:
        mean = float(np.mean([a.length for a in corpus])) if len(corpus) else 0.0
        length_band = (mean - length_delta, mean + length_delta)

    keep = []
    for idx, art in enumerate(corpus):
        if category is not None and art.label == FAKE and art.category != category:
            continue
        if length_band is not None and not length_band[0] <= art.length <= length_band[1]:
            continue
        if art.label not in (REAL, FAKE):
            continue
        keep.append(idx)
    sub = corpus.subset(keep)
    counts = sub.label_counts
    if counts[REAL] == 0 or counts[FAKE] == 0:
        raise EvaluationError(
            f"unsatisfiable filter (category={category!r}, length_band={length_band}): "
            f"{counts[REAL]} real and {counts[FAKE]} fake articles remain"
        )
    if balance:
        try:
            sub = downsample_balance(sub, seed)
        except CorpusError as exc:
            raise EvaluationError(str(exc)) from None
    return sub
