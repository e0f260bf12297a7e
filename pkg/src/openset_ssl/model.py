"""Shared feature extractor with a closed-set head and one-vs-all heads.

The extractor is a plain MLP: ReLU between consecutive layers, no
activation after the last one. Two linear heads sit on the features:
a K-way classifier and a bank of K one-vs-all sub-classifiers, each
with two logits (index 0 = inlier, index 1 = outlier). Sub-classifier
j owns columns [2j, 2j+1] of the one-vs-all weight matrix.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, DimensionError, ParseError

CHECKPOINT_FORMAT = "openset-ssl-checkpoint-1"

# Verdict value for samples rejected as outliers; inliers carry their class index.
OUTLIER = -1


@dataclass
class OpenSetPrediction:
    closed_label: np.ndarray  # [B] int, argmax of the closed-set head
    inlier_prob: np.ndarray   # [B] float, p of the predicted class's inlier logit
    verdict: np.ndarray       # [B] int, class index or OUTLIER


@dataclass
class ModelParams:
    extractor: list[tuple[Tensor, Tensor]]
    closed_w: Tensor
    closed_b: Tensor
    ova_w: Tensor
    ova_b: Tensor
    k_classes: int

    @property
    def d_in(self) -> int:
        if self.extractor:
            return self.extractor[0][0].shape[0]
        return self.closed_w.shape[0]

    @property
    def d_feat(self) -> int:
        return self.closed_w.shape[0]

    @property
    def hidden(self) -> tuple[int, ...]:
        return tuple(w.shape[1] for w, _ in self.extractor)

    def parameters(self) -> list[Tensor]:
        out: list[Tensor] = []
        for w, b in self.extractor:
            out.extend((w, b))
        out.extend((self.closed_w, self.closed_b, self.ova_w, self.ova_b))
        return out

    def copy(self) -> "ModelParams":
        def dup(t: Tensor) -> Tensor:
            return Tensor(t.data.copy(), requires_grad=True)

        return ModelParams(
            extractor=[(dup(w), dup(b)) for w, b in self.extractor],
            closed_w=dup(self.closed_w),
            closed_b=dup(self.closed_b),
            ova_w=dup(self.ova_w),
            ova_b=dup(self.ova_b),
            k_classes=self.k_classes,
        )


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> Tensor:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-limit, limit, size=(fan_in, fan_out)), requires_grad=True)


def _zero_bias(n: int) -> Tensor:
    return Tensor(np.zeros(n), requires_grad=True)


def init_params(d_in: int, hidden: Sequence[int], k_classes: int, rng: np.random.Generator) -> ModelParams:
    if d_in < 1 or k_classes < 1:
        raise ConfigError(f"need d_in >= 1 and k_classes >= 1, got {d_in}, {k_classes}")
    if any(h < 1 for h in hidden):
        raise ConfigError(f"hidden widths must be positive, got {tuple(hidden)}")
    extractor = []
    width = d_in
    for h in hidden:
        extractor.append((_glorot(rng, width, h), _zero_bias(h)))
        width = h
    return ModelParams(
        extractor=extractor,
        closed_w=_glorot(rng, width, k_classes),
        closed_b=_zero_bias(k_classes),
        ova_w=_glorot(rng, width, 2 * k_classes),
        ova_b=_zero_bias(2 * k_classes),
        k_classes=k_classes,
    )


def feature_extract(params: ModelParams, x) -> Tensor:
    if not isinstance(x, Tensor):
        x = Tensor(x)
    if x.data.ndim != 2 or x.shape[1] != params.d_in:
        raise DimensionError(f"expected input of shape [B, {params.d_in}], got {x.shape}")
    h = x
    last = len(params.extractor) - 1
    for i, (w, b) in enumerate(params.extractor):
        h = h @ w + b
        if i < last:
            h = ad.relu(h)
    return h


def classify_closed(params: ModelParams, features: Tensor) -> Tensor:
    """Closed-set class probabilities, shape [B, K]."""
    return ad.softmax(features @ params.closed_w + params.closed_b, axis=1)


def ova_probs(params: ModelParams, features: Tensor) -> Tensor:
    """One-vs-all probabilities, shape [B, K, 2]; [:, j, 0] is inlier-for-class-j."""
    logits = features @ params.ova_w + params.ova_b
    b = logits.shape[0]
    return ad.softmax(logits.reshape((b, params.k_classes, 2)), axis=-1)


def predict_open(params: ModelParams, x: np.ndarray) -> OpenSetPrediction:
    """Closed-set label plus the outlier verdict, on the input as given.

    A sample is rejected as an outlier when the predicted class's
    inlier probability falls strictly below 0.5.
    """
    with ad.no_grad():
        features = feature_extract(params, x)
        closed = classify_closed(params, features).data
        ova = ova_probs(params, features).data
    label = closed.argmax(axis=1)
    inlier_prob = ova[np.arange(len(label)), label, 0]
    verdict = np.where(inlier_prob < 0.5, OUTLIER, label)
    return OpenSetPrediction(closed_label=label, inlier_prob=inlier_prob, verdict=verdict)


def save_checkpoint(path, params: ModelParams, config: dict | None = None) -> None:
    """Write params (and an optional config dict) to an .npz container.

    Layout: a JSON 'meta' entry carrying format id, k_classes, d_in,
    hidden widths and the config; float64 arrays ext{i}_w / ext{i}_b
    per extractor layer plus closed_w/closed_b/ova_w/ova_b.
    """
    meta = {
        "format": CHECKPOINT_FORMAT,
        "k_classes": params.k_classes,
        "d_in": params.d_in,
        "hidden": list(params.hidden),
        "config": config if config is not None else {},
    }
    arrays = {"meta": np.array(json.dumps(meta, sort_keys=True))}
    for i, (w, b) in enumerate(params.extractor):
        arrays[f"ext{i}_w"] = w.data
        arrays[f"ext{i}_b"] = b.data
    arrays["closed_w"] = params.closed_w.data
    arrays["closed_b"] = params.closed_b.data
    arrays["ova_w"] = params.ova_w.data
    arrays["ova_b"] = params.ova_b.data
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path) -> tuple[ModelParams, dict]:
    with np.load(path, allow_pickle=False) as archive:
        try:
            meta = json.loads(str(archive["meta"]))
        except (KeyError, json.JSONDecodeError) as e:
            raise ParseError(f"{path}: not a checkpoint produced by this package") from e
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise ParseError(f"{path}: unsupported checkpoint format {meta.get('format')!r}")

        def tensor(name: str) -> Tensor:
            return Tensor(archive[name].copy(), requires_grad=True)

        extractor = [(tensor(f"ext{i}_w"), tensor(f"ext{i}_b")) for i in range(len(meta["hidden"]))]
        params = ModelParams(
            extractor=extractor,
            closed_w=tensor("closed_w"),
            closed_b=tensor("closed_b"),
            ova_w=tensor("ova_w"),
            ova_b=tensor("ova_b"),
            k_classes=int(meta["k_classes"]),
        )
    return params, meta["config"]
