"""Multi-label metric learning on synthetic data: Python access to the C++ core."""

from __future__ import annotations

import json
import os
from typing import Any, Mapping

import numpy as np

from . import _core
from ._core import (
    ConfigError,
    ContractError,
    DegenerateInputError,
    DimensionError,
    Error,
    EvaluationError,
    FormatError,
    Model,
    SamplingError,
    TrainingError,
    kmeans,
    nmi,
    overlap_tau,
    project_2d,
    recall_at_k,
)

__all__ = [
    "ConfigError",
    "ContractError",
    "DegenerateInputError",
    "DimensionError",
    "Error",
    "EvaluationError",
    "FormatError",
    "Model",
    "SamplingError",
    "TrainingError",
    "default_config",
    "embed",
    "evaluate",
    "gen_data",
    "kmeans",
    "load_model",
    "nmi",
    "overlap_tau",
    "project_2d",
    "recall_at_k",
    "train",
]


def _dump(config: Mapping[str, Any] | None) -> str:
    return json.dumps(dict(config)) if config else ""


def default_config() -> dict:
    """Every setting with its default value."""
    return json.loads(_core.default_config())


def gen_data(out_dir: str | os.PathLike, config: Mapping[str, Any] | None = None) -> None:
    _core.gen_data(_dump(config), os.fspath(out_dir))


def train(config: Mapping[str, Any]) -> dict:
    """Runs training as the CLI would; `config["paths"]` names the data and run directories."""
    return json.loads(_core.train(_dump(config)))


def evaluate(checkpoint: str | os.PathLike, data_dir: str | os.PathLike, seed: int = 1) -> dict:
    return json.loads(_core.evaluate(os.fspath(checkpoint), os.fspath(data_dir), seed))


def load_model(path: str | os.PathLike) -> Model:
    return Model(os.fspath(path))


def embed(model: Model, features: np.ndarray) -> np.ndarray:
    return model.embed(np.ascontiguousarray(features, dtype=np.float64))
