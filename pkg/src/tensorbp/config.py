"""Declarative run configuration.

A config file (JSON or YAML) holds the sections below; any key left out
takes the default shown. Relative paths are resolved against the config
file's directory. Every key can also be overridden on the command line as
``--section.key VALUE``.

.. code-block:: yaml

    corpus:     {path: articles.jsonl, format: jsonl}
    preprocess: {stopwords: null, stem: true, max_vocab: 5000, balance: false}
    tensor:     {window: 5, mode: binary}
    cp:         {rank: 10, max_iters: 100, tol: 1.0e-6}
    graph:      {k: 10, backend: kd-tree, normalize_rows: false}
    fabp:       {homophily: auto, prior_magnitude: 0.5, solver_tol: 1.0e-12, max_solver_iters: 1000}
    split:      {label_fraction: 0.3, stratified: true}
    label_file: null
    embedding:  cp
    seed:       0
    output_dir: out
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

import yaml

from .cpd import CpConfig
from .evaluation import SplitSpec
from .fabp import FabpConfig
from .graph import GraphConfig
from .pipeline import PipelineSettings
from .tensor import TensorConfig

DEFAULTS = {
    "corpus": {"path": None, "format": "jsonl"},
    "preprocess": {"stopwords": None, "stem": True, "max_vocab": 5000, "balance": False},
    "tensor": {"window": 5, "mode": "binary"},
    "cp": {"rank": 10, "max_iters": 100, "tol": 1e-6},
    "graph": {"k": 10, "backend": "kd-tree", "normalize_rows": False},
    "fabp": {"homophily": "auto", "prior_magnitude": 0.5, "solver_tol": 1e-12, "max_solver_iters": 1000},
    "split": {"label_fraction": 0.3, "stratified": True},
    "label_file": None,
    "embedding": "cp",
    "seed": 0,
    "output_dir": "out",
}

_PATH_KEYS = (("corpus", "path"), ("preprocess", "stopwords"), ("label_file",), ("output_dir",))


class ConfigError(ValueError):
    pass


def read_mapping(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    try:
        data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"{path}: not valid {'JSON' if path.suffix == '.json' else 'YAML'}: {exc}") from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def merge(base: dict, override: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        if key not in base:
            raise ConfigError(f"unknown config key '{where}{key}'")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"config key '{where}{key}' must be a mapping")
            out[key] = merge(base[key], val, f"{where}{key}.")
        else:
            out[key] = val
    return out


def set_dotted(data: dict, dotted: str, value) -> None:
    parts = dotted.split(".")
    node = data
    for part in parts[:-1]:
        if not isinstance(node.get(part), dict):
            raise ConfigError(f"unknown config key {dotted!r}")
        node = node[part]
    if parts[-1] not in node:
        raise ConfigError(f"unknown config key {dotted!r}")
    node[parts[-1]] = value


def flat_keys(data: dict = DEFAULTS, prefix: str = ""):
    for key, val in data.items():
        if isinstance(val, dict):
            yield from flat_keys(val, f"{prefix}{key}.")
        else:
            yield f"{prefix}{key}"


@dataclass
class RunConfig:
    raw: dict
    settings: PipelineSettings
    split: SplitSpec | None

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    @property
    def output_dir(self) -> Path:
        return Path(self.raw["output_dir"])


def build(raw: dict) -> RunConfig:
    """Validate a fully merged mapping and construct the typed configs."""
    try:
        if raw["corpus"]["path"] is None:
            raise ConfigError("corpus.path is required")
        mv = raw["preprocess"]["max_vocab"]
        if mv is not None and (not isinstance(mv, int) or mv < 1):
            raise ConfigError("preprocess.max_vocab must be a positive integer or null")
        if not isinstance(raw["seed"], int):
            raise ConfigError("seed must be an integer")
        settings = PipelineSettings(
            tensor=TensorConfig(**raw["tensor"]),
            cp=CpConfig(**raw["cp"], seed=0),
            graph=GraphConfig(**raw["graph"]),
            fabp=FabpConfig(**raw["fabp"]),
            embedding=raw["embedding"],
        )
        split = None
        if raw["label_file"] is None:
            split = SplitSpec(raw["split"]["label_fraction"], seed=0, stratified=raw["split"]["stratified"])
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    return RunConfig(raw, settings, split)


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Read ``path`` (optional), apply dotted ``overrides`` and validate."""
    raw = copy.deepcopy(DEFAULTS)
    base_dir = Path.cwd()
    if path is not None:
        raw = merge(raw, read_mapping(path))
        base_dir = Path(path).resolve().parent
        for keys in _PATH_KEYS:
            node = raw
            for key in keys[:-1]:
                node = node[key]
            if node[keys[-1]] is not None:
                node[keys[-1]] = str((base_dir / node[keys[-1]]).resolve())
    for dotted, value in (overrides or {}).items():
        set_dotted(raw, dotted, value)
    return build(raw)
