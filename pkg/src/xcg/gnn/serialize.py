"""Versioned JSON model weights."""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .models import (ClassificationConfig, ClassificationModel, RegressionConfig,
                     RegressionModel)

SCHEMA_VERSION = 1

_KINDS = {
    "RegressionModel": (RegressionModel, RegressionConfig),
    "ClassificationModel": (ClassificationModel, ClassificationConfig),
}


def model_to_dict(model) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "type": model.kind,
        "config": asdict(model.config),
        "params": {name: {"shape": list(v.shape), "values": v.ravel(order="C").tolist()}
                   for name, v in sorted(model.params.items())},
    }


def model_from_dict(doc: dict):
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported schema_version {doc.get('schema_version')!r}")
    try:
        cls, cfg_cls = _KINDS[doc["type"]]
    except KeyError:
        raise ValueError(f"unknown model type {doc.get('type')!r}") from None
    config = cfg_cls(**doc["config"])
    params = {}
    for name, entry in doc["params"].items():
        shape = tuple(entry["shape"])
        values = np.asarray(entry["values"], dtype=np.float64)
        if values.size != int(np.prod(shape)):
            raise ValueError(f"{name}: {values.size} values do not fill shape {shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError(f"{name}: non-finite weights")
        params[name] = values.reshape(shape)
    expected = cls.init(config, seed=0).params
    if set(expected) != set(params):
        raise ValueError(f"parameter names mismatch: {sorted(set(expected) ^ set(params))}")
    for name, ref in expected.items():
        if ref.shape != params[name].shape:
            raise ValueError(f"{name}: shape {params[name].shape}, expected {ref.shape}")
    return cls(config, params)


def save_model(model, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), separators=(",", ":")))


def load_model(path):
    return model_from_dict(json.loads(Path(path).read_text()))
