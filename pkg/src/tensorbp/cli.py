"""Command line entry point: ``tensorbp {run, sweep, inspect, export-graph}``.

Exit codes: 0 success, 1 configuration error, 2 pipeline stage error,
3 every sweep cell failed.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .config import ConfigError, RunConfig, flat_keys, load_config, read_mapping
from .corpus import (
    FAKE,
    REAL,
    CorpusError,
    PreprocessConfig,
    build_vocabulary,
    downsample_balance,
    load_corpus,
    load_stopwords,
    preprocess_corpus,
)
from .cpd import save_factors
from .fabp import save_beliefs
from .graph import knn_graph, save_edge_list
from .pipeline import StageError, embed, run_pipeline, stage, stage_seeds
from .sweep import SweepError, sweep, write_results

logger = logging.getLogger("tensorbp")

EXIT_OK, EXIT_CONFIG, EXIT_STAGE, EXIT_ALL_FAILED = 0, 1, 2, 3


def _prepare(config: RunConfig):
    """ingest -> preprocess -> (balance) -> vocabulary. Returns corpus, vocab, seeds."""
    raw = config.raw
    seeds = stage_seeds(config.seed)
    with stage("ingest"):
        corpus = load_corpus(raw["corpus"]["path"], raw["corpus"]["format"])
    with stage("preprocess"):
        stop = load_stopwords(raw["preprocess"]["stopwords"])
        corpus = preprocess_corpus(corpus, PreprocessConfig(stopwords=stop, stem=raw["preprocess"]["stem"]))
        if raw["preprocess"]["balance"]:
            corpus = downsample_balance(corpus, seeds["balance"])
    with stage("vocabulary"):
        vocab = build_vocabulary(corpus, raw["preprocess"]["max_vocab"])
    return corpus, vocab, seeds


def _read_label_file(path, corpus) -> np.ndarray:
    labels = np.zeros(len(corpus), dtype=np.int64)
    pos = {aid: i for i, aid in enumerate(corpus.ids)}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"id", "label"} <= set(reader.fieldnames):
            raise CorpusError(f"{path}: header must contain id,label")
        for row in reader:
            if row["id"] not in pos:
                raise CorpusError(f"{path}:{reader.line_num}: unknown article id {row['id']!r}")
            lab = row["label"].strip().lower()
            if lab not in (REAL, FAKE):
                raise CorpusError(f"{path}:{reader.line_num}: label must be real or fake")
            labels[pos[row["id"]]] = 1 if lab == REAL else -1
    return labels


def _resolved_settings(config: RunConfig, seeds):
    settings = config.settings
    settings = replace(settings, cp=replace(settings.cp, seed=seeds["cp"]))
    split = replace(config.split, seed=seeds["mask"]) if config.split is not None else None
    return settings, split


def run(config: RunConfig) -> dict:
    """Execute the whole pipeline and write every artifact into ``config.output_dir``.

    Returns the manifest. Raises ``StageError`` on any stage failure.
    """
    out = config.output_dir
    started = time.perf_counter()
    corpus, vocab, seeds = _prepare(config)
    settings, split = _resolved_settings(config, seeds)
    labels = None
    if split is None:
        with stage("split"):
            labels = _read_label_file(config.raw["label_file"], corpus)
    result = run_pipeline(corpus, vocab, settings, split=split, labels=labels)

    with stage("emit"):
        files = {}
        emb = result.embedding
        if emb.factors is not None:
            files["factors"] = [p.name for p in save_factors(emb.factors, out / "factors")]
        save_edge_list(result.graph, out / "graph.txt")
        files["graph"] = "graph.txt"
        save_beliefs(result.state, result.predictions, out / "beliefs.txt", node_ids=corpus.ids)
        files["beliefs"] = "beliefs.txt"
        held = np.zeros(len(corpus), dtype=bool)
        held[result.held_out] = True
        with open(out / "predictions.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["id", "prediction", "held_out", "truth"])
            for idx, art in enumerate(corpus):
                pred = REAL if result.predictions[idx] > 0 else FAKE
                writer.writerow([art.id, pred, int(held[idx]), art.label])
        files["predictions"] = "predictions.csv"
        rep = result.report
        with open(out / "metrics.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            cols = ["embedding", "rank", "k", "window", "mode", "p", "seed",
                    "accuracy", "precision", "recall", "f1", "support",
                    "precision_undefined", "recall_undefined", "h", "runtime_ms"]
            writer.writerow(cols)
            writer.writerow([
                settings.embedding, settings.cp.rank, settings.graph.k, settings.tensor.window,
                settings.tensor.mode, split.label_fraction if split else "", config.seed,
                *(["", "", "", "", 0, "", ""] if rep is None else [
                    rep.accuracy, rep.precision, rep.recall, rep.f1, rep.support,
                    int(rep.precision_undefined), int(rep.recall_undefined)]),
                result.state.homophily, round((time.perf_counter() - started) * 1e3, 3),
            ])
        files["metrics"] = "metrics.csv"

        state = result.state
        manifest = {
            "version": __version__,
            "status": "ok",
            "config": config.raw,
            "seeds": {"root": config.seed, **seeds},
            "corpus": {
                "articles": len(corpus),
                "label_counts": corpus.label_counts,
                "vocabulary_size": len(vocab),
                "revealed_labels": int(np.count_nonzero(result.labels)),
                "held_out": int(result.held_out.size),
            },
            "embedding": {
                "source": settings.embedding,
                "nnz": emb.nnz,
                "dims": list(emb.points.shape),
            },
            "graph": {"nodes": result.graph.n, "edges": result.graph.n_edges,
                      "max_degree": int(result.graph.degrees.max()),
                      "min_degree": int(result.graph.degrees.min())},
            "propagation": {
                "homophily": state.homophily, "homophily_mode": config.raw["fabp"]["homophily"],
                "a": state.a, "c_prime": state.c_prime,
                "prior_magnitude": settings.fabp.prior_magnitude,
                "residual": state.residual, "solver_tol": settings.fabp.solver_tol,
                "iterations": state.iterations, "solver": state.solver, "ties": result.ties,
            },
            "metrics": None if rep is None else rep.as_dict(),
            "timings_ms": result.timings_ms,
            "files": files,
        }
        if emb.factors is not None:
            manifest["decomposition"] = {
                "rank": settings.cp.rank, "seed": settings.cp.seed,
                "max_iters": settings.cp.max_iters, "tol": settings.cp.tol,
                "sweeps": len(emb.history) - 1,
                "initial_residual": emb.history[0],
                "final_residual": emb.history[-1],
                "weights": emb.factors.weights.tolist(),
            }
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=_json_default))
    return manifest


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _error_record(exc: BaseException, stage_name: str | None) -> dict:
    cause = exc.cause if isinstance(exc, StageError) else exc
    return {
        "status": "error",
        "stage": stage_name,
        "error_type": type(cause).__name__,
        "message": str(cause),
    }


def _emit_error(record: dict, outdir: Path | None) -> None:
    print(json.dumps(record), file=sys.stderr)
    if outdir is not None:
        try:
            outdir.mkdir(parents=True, exist_ok=True)
            (outdir / "error.json").write_text(json.dumps(record, indent=2))
        except OSError:
            pass


def _check_writable(path: Path) -> None:
    try:
        path.mkdir(parents=True, exist_ok=True)
        probe = path / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory {path} is not writable: {exc.strerror}") from None


def _overrides(args) -> dict:
    out = {}
    for key in flat_keys():
        val = getattr(args, key, None)
        if val is not None:
            out[key] = yaml.safe_load(val)
    return out


def _load(args) -> RunConfig:
    config = load_config(args.config, _overrides(args))
    _check_writable(config.output_dir)
    return config


def cmd_run(args) -> int:
    try:
        config = _load(args)
    except ConfigError as exc:
        _emit_error(_error_record(exc, "config"), None)
        return EXIT_CONFIG
    try:
        manifest = run(config)
    except StageError as exc:
        _emit_error(_error_record(exc, exc.stage), config.output_dir)
        return EXIT_STAGE
    metrics = manifest["metrics"]
    if metrics:
        print(f"accuracy={metrics['accuracy']:.4f} precision={metrics['precision']:.4f} "
              f"recall={metrics['recall']:.4f} f1={metrics['f1']:.4f} (n={metrics['support']})")
    print(f"artifacts written to {config.output_dir}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    try:
        config = _load(args)
        grid = read_mapping(args.grid)
        if config.split is None:
            raise ConfigError("sweeps reveal labels from ground truth; remove label_file")
        n_jobs = int(args.n_jobs)
    except ConfigError as exc:
        _emit_error(_error_record(exc, "config"), None)
        return EXIT_CONFIG
    try:
        corpus, vocab, _ = _prepare(config)
        runs, aggregates = sweep(corpus, vocab, grid, config.settings, config.split, n_jobs=n_jobs)
    except SweepError as exc:
        _emit_error(_error_record(exc, "config"), config.output_dir)
        return EXIT_CONFIG
    except StageError as exc:
        _emit_error(_error_record(exc, exc.stage), config.output_dir)
        return EXIT_STAGE
    csv_path, json_path = write_results(runs, aggregates, config.output_dir)
    for agg in aggregates:
        acc = agg["accuracy_mean"]
        desc = " ".join(f"{k}={agg[k]}" for k in ("embedding", "rank", "k", "window", "mode", "p"))
        if acc is None:
            print(f"{desc}: all {agg['n_runs']} runs failed")
        else:
            print(f"{desc}: accuracy {acc:.4f} +/- {agg['accuracy_std']:.4f} ({agg['n_runs']} runs)")
    print(f"results: {csv_path}\nsummary: {json_path}")
    if runs and all(r["error"] for r in runs):
        return EXIT_ALL_FAILED
    return EXIT_OK


def cmd_inspect(args) -> int:
    path = Path(args.target)
    if path.is_dir():
        path = path / "manifest.json"
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        print(json.dumps({"status": "error", "stage": "config", "message": str(exc)}), file=sys.stderr)
        return EXIT_CONFIG
    print(json.dumps(manifest, indent=2))
    return EXIT_OK


def cmd_export_graph(args) -> int:
    try:
        config = _load(args)
    except ConfigError as exc:
        _emit_error(_error_record(exc, "config"), None)
        return EXIT_CONFIG
    out = Path(args.out) if args.out else config.output_dir / "graph.txt"
    try:
        corpus, vocab, seeds = _prepare(config)
        settings, _ = _resolved_settings(config, seeds)
        emb = embed(corpus, vocab, settings)
        with stage("graph"):
            graph = knn_graph(emb.points, settings.graph)
        with stage("emit"):
            out.parent.mkdir(parents=True, exist_ok=True)
            save_edge_list(graph, out)
    except StageError as exc:
        _emit_error(_error_record(exc, exc.stage), config.output_dir)
        return EXIT_STAGE
    print(f"{graph.n} nodes, {graph.n_edges} edges -> {out}")
    return EXIT_OK


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("config", nargs="?", help="JSON or YAML run configuration")
    group = parser.add_argument_group("config overrides (values parsed as YAML scalars)")
    for key in flat_keys():
        group.add_argument(f"--{key}", dest=key, metavar="VALUE")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tensorbp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the full pipeline once")
    _add_config_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run a parameter grid")
    _add_config_flags(p)
    p.add_argument("--grid", required=True, help="JSON/YAML mapping of grid axes")
    p.add_argument("--n-jobs", default=1, type=int)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("inspect", help="print a run manifest")
    p.add_argument("target", help="run directory or manifest.json")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("export-graph", help="build the k-NN graph and write its edge list")
    _add_config_flags(p)
    p.add_argument("--out", help="edge-list path (default: <output_dir>/graph.txt)")
    p.set_defaults(func=cmd_export_graph)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
