"""Versioned JSON checkpoints for :class:`~anchor_risk.nn.Mlp` networks.

Floats are stored as ``repr`` strings, which round-trip float64 exactly, so
``load(save(m))`` reproduces predictions bit for bit.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .nn import Mlp, MlpSpec

FORMAT_VERSION = 1
KINDS = ("regressor", "autoencoder")


def _encode(a: np.ndarray):
    if a.ndim == 1:
        return [repr(float(v)) for v in a]
    return [_encode(row) for row in a]


def _decode(rows) -> np.ndarray:
    return np.array(rows, dtype=object).astype(np.float64)


def to_dict(model: Mlp, kind: str = "regressor", meta: dict | None = None) -> dict:
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    return {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "spec": model.spec.to_dict(),
        "weights": [_encode(w) for w in model.weights],
        "biases": [_encode(b) for b in model.biases],
        "loss_history": [repr(float(v)) for v in model.loss_history],
        "meta": meta or {},
    }


def from_dict(doc: dict, kind: str | None = None) -> Mlp:
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format_version {version!r}")
    if kind is not None and doc.get("kind") != kind:
        raise ValueError(f"expected a {kind} checkpoint, found {doc.get('kind')!r}")
    spec = doc["spec"]
    spec = MlpSpec(spec["input_dim"], tuple(spec["hidden_dims"]), spec["output_dim"],
                   spec["activation"], spec["seed"])
    weights = [_decode(w).reshape(len(w), -1) for w in doc["weights"]]
    biases = [_decode(b) for b in doc["biases"]]
    hist = [float(v) for v in doc.get("loss_history", [])]
    return Mlp(spec, weights, biases, hist)


def save(model: Mlp, path, kind: str = "regressor", meta: dict | None = None) -> None:
    Path(path).write_text(json.dumps(to_dict(model, kind, meta), sort_keys=True) + "\n")


def load(path, kind: str | None = None) -> tuple[Mlp, dict]:
    """Return ``(model, meta)``."""
    doc = json.loads(Path(path).read_text())
    return from_dict(doc, kind), doc.get("meta", {})
