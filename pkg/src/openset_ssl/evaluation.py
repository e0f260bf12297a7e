"""Scoring and metrics: anomaly scores, rank AUROC, error rates, reports.

The anomaly score of a sample is the predicted class's outlier
probability, 1 - p(inlier | predicted class). AUROC is the
Mann-Whitney rank statistic with half credit for ties, which equals
the trapezoidal area under the ROC curve.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .data import Split, TAG_INLIER, TAG_SEEN_OUTLIER, TAG_UNSEEN_OUTLIER
from .errors import ConfigError, MetricError
from .model import ModelParams, classify_closed, feature_extract, ova_probs

METRICS_KEY_ORDER = (
    "epoch", "l_cls", "l_ova", "l_em", "l_oc", "l_fm",
    "err_inlier", "auroc_seen", "auroc_unseen", "k_size",
)


@dataclass
class MetricsRecord:
    epoch: int
    l_cls: float
    l_ova: float
    l_em: float
    l_oc: float
    l_fm: float
    err_inlier: float
    auroc_seen: float | None
    auroc_unseen: float | None
    k_size: int


@dataclass
class ScoredSample:
    anomaly_score: float
    is_outlier_truth: bool
    closed_pred: int
    closed_truth: int | None  # present only for ground-truth inliers


def anomaly_scores(params: ModelParams, x: np.ndarray) -> np.ndarray:
    """Outlier probability of the predicted class for each row of x."""
    x = np.asarray(x, dtype=np.float64)
    with ad.no_grad():
        features = feature_extract(params, x)
        closed = classify_closed(params, features).data
        ova = ova_probs(params, features).data
    pred = closed.argmax(axis=1)
    return 1.0 - ova[np.arange(len(pred)), pred, 0]


def score_test_split(params: ModelParams, test: Split) -> list[ScoredSample]:
    scores = anomaly_scores(params, test.x)
    with ad.no_grad():
        preds = classify_closed(params, feature_extract(params, test.x)).data.argmax(axis=1)
    out = []
    for i in range(len(test)):
        inlier = test.tag[i] == TAG_INLIER
        out.append(
            ScoredSample(
                anomaly_score=float(scores[i]),
                is_outlier_truth=not inlier,
                closed_pred=int(preds[i]),
                closed_truth=int(test.y[i]) if inlier else None,
            )
        )
    return out


def auroc(scores: np.ndarray, is_outlier: np.ndarray) -> float:
    """Probability that a random outlier outscores a random inlier,
    counting ties as half. Needs both populations present."""
    scores = np.asarray(scores, dtype=np.float64)
    is_outlier = np.asarray(is_outlier, dtype=bool)
    if scores.shape != is_outlier.shape or scores.ndim != 1:
        raise MetricError(f"scores {scores.shape} and labels {is_outlier.shape} must be equal-length vectors")
    n_pos = int(is_outlier.sum())
    n_neg = len(is_outlier) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUROC is undefined without both inliers and outliers")
    # Average ranks (1-based) with ties sharing their group mean.
    _, inverse, counts = np.unique(scores, return_inverse=True, return_counts=True)
    ends = np.cumsum(counts)
    avg_rank = ends - (counts - 1) / 2.0
    ranks = avg_rank[inverse]
    u = ranks[is_outlier].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def error_rate_inliers(params: ModelParams, test: Split) -> float:
    """Closed-set misclassification rate over ground-truth inliers only;
    the outlier verdict plays no part here."""
    mask = test.tag == TAG_INLIER
    if not mask.any():
        raise MetricError("error_rate_inliers needs at least one ground-truth inlier")
    with ad.no_grad():
        preds = classify_closed(params, feature_extract(params, test.x[mask])).data.argmax(axis=1)
    return float(np.mean(preds != test.y[mask]))


def _auroc_against(params: ModelParams, test: Split, outlier_tag: int) -> float:
    mask = (test.tag == TAG_INLIER) | (test.tag == outlier_tag)
    if not (test.tag == TAG_INLIER).any() or not (test.tag == outlier_tag).any():
        raise MetricError("AUROC needs both inliers and the requested outlier population")
    scores = anomaly_scores(params, test.x[mask])
    return auroc(scores, test.tag[mask] != TAG_INLIER)


def auroc_seen(params: ModelParams, test: Split) -> float:
    """AUROC of inliers against outliers whose clusters occur in training data."""
    return _auroc_against(params, test, TAG_SEEN_OUTLIER)


def eval_unseen(params: ModelParams, test: Split) -> float:
    """AUROC of inliers against outliers never seen during training."""
    return _auroc_against(params, test, TAG_UNSEEN_OUTLIER)


@dataclass
class EvalResult:
    err_inlier: float
    auroc_seen: float | None
    auroc_unseen: float | None
    scores: np.ndarray      # anomaly scores over the full test split
    is_outlier: np.ndarray  # ground-truth outlier flags, same order


def evaluate_params(params: ModelParams, test: Split) -> EvalResult:
    """One evaluation pass; AUROCs against absent populations come back None."""
    err = error_rate_inliers(params, test)
    seen = auroc_seen(params, test) if (test.tag == TAG_SEEN_OUTLIER).any() else None
    unseen = eval_unseen(params, test) if (test.tag == TAG_UNSEEN_OUTLIER).any() else None
    return EvalResult(
        err_inlier=err,
        auroc_seen=seen,
        auroc_unseen=unseen,
        scores=anomaly_scores(params, test.x),
        is_outlier=test.tag != TAG_INLIER,
    )


def export_histogram(scores: np.ndarray, is_outlier: np.ndarray, bins: int, path) -> None:
    """Write per-bin inlier and outlier counts over [0, 1] to a CSV.

    Bins are uniform and half-open except the last, which includes 1.0.
    """
    if bins < 1:
        raise ConfigError(f"bins must be >= 1, got {bins}")
    scores = np.asarray(scores, dtype=np.float64)
    is_outlier = np.asarray(is_outlier, dtype=bool)
    if scores.shape != is_outlier.shape:
        raise ConfigError("scores and outlier flags must align")
    edges = np.linspace(0.0, 1.0, bins + 1)
    inlier_counts, _ = np.histogram(scores[~is_outlier], bins=edges)
    outlier_counts, _ = np.histogram(scores[is_outlier], bins=edges)
    with open(path, "w") as fh:
        fh.write("bin_low,bin_high,inlier_count,outlier_count\n")
        for i in range(bins):
            fh.write(f"{repr(float(edges[i]))},{repr(float(edges[i + 1]))},{inlier_counts[i]},{outlier_counts[i]}\n")


def format_metrics_line(record: MetricsRecord) -> str:
    """Render one record as space-separated key=value pairs in a fixed
    key order; None-valued AUROCs are omitted."""
    parts = []
    for key in METRICS_KEY_ORDER:
        value = getattr(record, key)
        if value is None:
            continue
        if key in ("epoch", "k_size"):
            parts.append(f"{key}={int(value)}")
        else:
            parts.append(f"{key}={repr(float(value))}")
    return " ".join(parts)


def parse_metrics_line(line: str) -> MetricsRecord:
    fields: dict[str, str] = {}
    for token in line.split():
        if "=" not in token:
            raise ConfigError(f"malformed metrics token {token!r}")
        key, value = token.split("=", 1)
        fields[key] = value
    try:
        return MetricsRecord(
            epoch=int(fields["epoch"]),
            l_cls=float(fields["l_cls"]),
            l_ova=float(fields["l_ova"]),
            l_em=float(fields["l_em"]),
            l_oc=float(fields["l_oc"]),
            l_fm=float(fields["l_fm"]),
            err_inlier=float(fields["err_inlier"]),
            auroc_seen=float(fields["auroc_seen"]) if "auroc_seen" in fields else None,
            auroc_unseen=float(fields["auroc_unseen"]) if "auroc_unseen" in fields else None,
            k_size=int(fields["k_size"]),
        )
    except KeyError as e:
        raise ConfigError(f"metrics line is missing key {e}") from e


def write_metrics(path, records: list[MetricsRecord]) -> None:
    with open(path, "w") as fh:
        for record in records:
            fh.write(format_metrics_line(record) + "\n")


def read_metrics(path) -> list[MetricsRecord]:
    with open(path) as fh:
        return [parse_metrics_line(line) for line in fh if line.strip()]
