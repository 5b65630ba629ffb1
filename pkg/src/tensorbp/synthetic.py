"""Planted two-class corpora for tests and desk-scale experiments.

Each class owns a handful of "topics" (small word clusters). An article is
a run of phrases: with probability ``signal`` a phrase is drawn from one of
its class's topics, otherwise from topics shared by both classes or from
background filler. Words are consonant-only strings, which the tokenizer,
stopword filter and Porter stemmer all leave unchanged.
"""

from __future__ import annotations

import itertools
import json
from pathlib import Path

import numpy as np

from .corpus import FAKE, REAL, Article, Corpus

_LETTERS = "bcdfghjklmnpqrtvwxz"
CATEGORIES = ("bias", "clickbait", "conspiracy", "fake", "hate", "junksci", "satire", "unreliable")


def _words(n: int, rng) -> list[str]:
    pool = ["".join(t) for t in itertools.product(_LETTERS, repeat=3)]
    if n > len(pool):
        pool += ["".join(t) for t in itertools.product(_LETTERS, repeat=4)]
    idx = rng.choice(len(pool), size=n, replace=False)
    return [pool[i] for i in idx]


def make_corpus(
    n_articles: int = 200,
    seed: int = 0,
    signal: float = 0.5,
    topics_per_class: int = 4,
    shared_topics: int = 4,
    topic_size: int = 8,
    background_size: int = 200,
    length_range: tuple[int, int] = (40, 120),
    log_lengths: bool = False,
    phrase_len: tuple[int, int] = (3, 6),
    fake_fraction: float = 0.5,
) -> Corpus:
    """Generate a labeled corpus with class-dependent co-occurrence structure.

    ``log_lengths=True`` draws lengths log-uniformly over ``length_range``
    (heterogeneous article lengths); otherwise uniformly.
    """
    rng = np.random.default_rng(seed)
    n_topics = 2 * topics_per_class + shared_topics
    vocab = _words(n_topics * topic_size + background_size, rng)
    topics = [vocab[t * topic_size:(t + 1) * topic_size] for t in range(n_topics)]
    background = vocab[n_topics * topic_size:]
    # Zipf-like background frequencies
    bg_p = 1.0 / np.arange(1, background_size + 1)
    bg_p /= bg_p.sum()

    class_topics = {
        REAL: topics[:topics_per_class],
        FAKE: topics[topics_per_class:2 * topics_per_class],
    }
    common = topics[2 * topics_per_class:]

    n_fake = int(round(fake_fraction * n_articles))
    labels = [FAKE] * n_fake + [REAL] * (n_articles - n_fake)
    rng.shuffle(labels)

    lo, hi = length_range
    articles = []
    for idx, label in enumerate(labels):
        if log_lengths:
            length = int(round(np.exp(rng.uniform(np.log(lo), np.log(hi)))))
        else:
            length = int(rng.integers(lo, hi + 1))
        # each article leans on a couple of its class topics
        own = class_topics[label]
        favored = rng.choice(len(own), size=min(2, len(own)), replace=False)
        tokens: list[str] = []
        while len(tokens) < length:
            plen = int(rng.integers(phrase_len[0], phrase_len[1] + 1))
            u = rng.random()
            if u < signal:
                topic = own[favored[rng.integers(len(favored))]]
                tokens.extend(rng.choice(topic, size=plen))
            elif u < signal + (1 - signal) / 2 and common:
                topic = common[rng.integers(len(common))]
                tokens.extend(rng.choice(topic, size=plen))
            else:
                tokens.extend(rng.choice(background, size=plen, p=bg_p))
        tokens = [str(t) for t in tokens[:length]]
        category = CATEGORIES[int(rng.integers(len(CATEGORIES)))] if label == FAKE else None
        articles.append(
            Article(id=f"a{idx:05d}", text=" ".join(tokens), label=label, category=category, tokens=tuple(tokens))
        )
    return Corpus(articles)


def write_jsonl(corpus: Corpus, path, hide_labels: bool = False) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for art in corpus:
            rec = {
                "id": art.id,
                "text": art.text,
                "label": None if hide_labels or art.label not in (REAL, FAKE) else art.label,
                "category": art.category,
            }
            fh.write(json.dumps(rec) + "\n")
    return path
