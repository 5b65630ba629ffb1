"""Parameter sweeps: one pipeline run per grid cell and seed, plus mean/std aggregates."""

from __future__ import annotations

import csv
import itertools
import json
import logging
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from .corpus import Corpus, Vocabulary
from .evaluation import SplitSpec
from .pipeline import PipelineSettings, StageError, embed, run_pipeline, stage_seeds
from .tensor import TensorConfig

logger = logging.getLogger(__name__)

GRID_KEYS = ("embedding", "window", "mode", "rank", "k", "p")
CELL_KEYS = GRID_KEYS + ("stratified",)
METRICS = ("accuracy", "precision", "recall", "f1")
AGG_KEYS = ("embedding", "rank", "k", "window", "mode", "p", "stratified")
RUN_COLUMNS = ("embedding", "rank", "k", "window", "mode", "p", "stratified", "seed",
               "accuracy", "precision", "recall", "f1", "h", "runtime_ms", "error")


class SweepError(ValueError):
    pass


def expand_grid(grid: dict, base: PipelineSettings, base_split: SplitSpec):
    """Turn a grid mapping into (cells, seeds).

    Keys are any of ``embedding, window, mode, rank, k, p`` (scalars or lists)
    plus ``seeds``: a list of seeds or an integer count ``n`` meaning
    ``1..n``. Unlisted keys take their value from ``base``/``base_split``.
    """
    if not grid:
        raise SweepError("empty grid")
    unknown = set(grid) - set(GRID_KEYS) - {"seeds", "stratified"}
    if unknown:
        raise SweepError(f"unknown grid key(s): {sorted(unknown)}")
    defaults = {
        "embedding": base.embedding,
        "window": base.tensor.window,
        "mode": base.tensor.mode,
        "rank": base.cp.rank,
        "k": base.graph.k,
        "p": base_split.label_fraction,
        "stratified": base_split.stratified,
    }
    axes = []
    for key in CELL_KEYS:
        val = grid.get(key, defaults[key])
        vals = list(val) if isinstance(val, (list, tuple)) else [val]
        if not vals:
            raise SweepError(f"grid axis {key!r} is empty")
        axes.append(vals)
    seeds = grid.get("seeds", [base_split.seed])
    if isinstance(seeds, int):
        seeds = list(range(1, seeds + 1))
    seeds = list(seeds)
    if not seeds:
        raise SweepError("grid has no seeds")
    cells = [dict(zip(CELL_KEYS, combo)) for combo in itertools.product(*axes)]
    return cells, seeds


def _embed_key(cell):
    if cell["embedding"] == "tfidf":
        return ("tfidf",)
    return (cell["embedding"], cell["window"], cell["mode"], cell["rank"])


def _run_group(corpus: Corpus, vocab: Vocabulary, base: PipelineSettings, cells, seed: int):
    """All cells sharing an embedding, for one seed. Returns run rows."""
    seeds = stage_seeds(seed)
    rows = []
    embedding = None
    embed_error = None
    first = cells[0]
    t0 = time.perf_counter()
    try:
        settings = replace(
            base,
            embedding=first["embedding"],
            tensor=TensorConfig(window=first["window"], mode=first["mode"]),
            cp=replace(base.cp, rank=first["rank"], seed=seeds["cp"]),
        )
        embedding = embed(corpus, vocab, settings)
    except Exception as exc:  # noqa: BLE001 - recorded per cell, never aborts the sweep
        embed_error = exc
    embed_ms = (time.perf_counter() - t0) * 1e3

    for cell in cells:
        row = {key: cell[key] for key in ("embedding", "rank", "k", "window", "mode", "p")}
        row.update(seed=seed, stratified=cell["stratified"], h=None, error="")
        for m in METRICS:
            row[m] = None
        t1 = time.perf_counter()
        try:
            if embed_error is not None:
                raise embed_error
            settings = replace(
                base,
                embedding=cell["embedding"],
                tensor=TensorConfig(window=cell["window"], mode=cell["mode"]),
                cp=replace(base.cp, rank=cell["rank"], seed=seeds["cp"]),
                graph=replace(base.graph, k=cell["k"]),
            )
            split = SplitSpec(cell["p"], seed=seeds["mask"], stratified=cell["stratified"])
            result = run_pipeline(corpus, vocab, settings, split=split, embedding=embedding)
            for m in METRICS:
                row[m] = getattr(result.report, m)
            row["h"] = result.state.homophily
        except Exception as exc:  # noqa: BLE001
            name = exc.stage if isinstance(exc, StageError) else type(exc).__name__
            row["error"] = f"{name}: {exc}"
            logger.warning("cell %s seed %s failed: %s", cell, seed, exc)
        row["runtime_ms"] = embed_ms + (time.perf_counter() - t1) * 1e3
        rows.append(row)
    return rows


def aggregate(rows) -> list[dict]:
    """Mean and sample standard deviation of each metric per grid cell."""
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        key = tuple(row[k] for k in AGG_KEYS)
        groups.setdefault(key, []).append(row)
    out = []
    for key, members in groups.items():
        ok = [r for r in members if not r["error"]]
        agg = dict(zip(AGG_KEYS, key))
        agg["n_runs"] = len(members)
        agg["n_failed"] = len(members) - len(ok)
        for m in METRICS:
            vals = [r[m] for r in ok]
            agg[f"{m}_mean"] = statistics.fmean(vals) if vals else None
            agg[f"{m}_std"] = statistics.stdev(vals) if len(vals) > 1 else (0.0 if vals else None)
        out.append(agg)
    return out


def sweep(
    corpus: Corpus,
    vocab: Vocabulary,
    grid: dict,
    base: PipelineSettings | None = None,
    base_split: SplitSpec | None = None,
    n_jobs: int = 1,
):
    """Run the pipeline over a parameter grid.

    The corpus must already be preprocessed and fully labeled. Every seed is
    fanned out into a CP-initialization seed and a label-mask seed, and the
    CP embedding is computed once per (embedding, window, mode, rank, seed)
    and shared by the cells that differ only in ``k`` or ``p``.

    Returns
    -------
    runs : list of dict
        One row per (cell, seed), columns ``RUN_COLUMNS``; failures carry
        an ``error`` string instead of metrics.
    aggregates : list of dict
        One row per cell with ``<metric>_mean`` and ``<metric>_std``.
    """
    base = base or PipelineSettings()
    base_split = base_split or SplitSpec()
    cells, seeds = expand_grid(grid, base, base_split)
    groups: dict[tuple, list[dict]] = {}
    for cell in cells:
        groups.setdefault(_embed_key(cell), []).append(cell)
    jobs = [(g, s) for g in groups.values() for s in seeds]

    if n_jobs == 1:
        results = [_run_group(corpus, vocab, base, g, s) for g, s in jobs]
    else:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            futures = [pool.submit(_run_group, corpus, vocab, base, g, s) for g, s in jobs]
            results = [f.result() for f in futures]
    runs = [row for rows in results for row in rows]
    order = {tuple(c[k] for k in CELL_KEYS): i for i, c in enumerate(cells)}
    runs.sort(key=lambda r: (order[tuple(r[k] for k in CELL_KEYS)], seeds.index(r["seed"])))
    return runs, aggregate(runs)


def write_results(runs, aggregates, outdir) -> tuple[Path, Path]:
    """``results.csv`` (one row per run) and ``summary.json`` (aggregates)."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    csv_path = outdir / "results.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=RUN_COLUMNS, extrasaction="ignore")
        writer.writeheader()
        for row in runs:
            writer.writerow({k: ("" if row.get(k) is None else row.get(k)) for k in RUN_COLUMNS})
    json_path = outdir / "summary.json"
    json_path.write_text(json.dumps({"cells": aggregates, "n_runs": len(runs)}, indent=2))
    return csv_path, json_path
