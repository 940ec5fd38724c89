"""
Metric suite: event scoring, ROC/AUC, cross-validated thresholds,
false-positive rate against rotation intensity and pitch-track comparison.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Mapping, NamedTuple, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from sklearn.metrics import auc, balanced_accuracy_score, f1_score, roc_curve
from sklearn.model_selection import StratifiedKFold

from .exceptions import (
    ConfigError,
    LengthMismatch,
    MissingSequence,
    SingleClassError,
    TooFewEvents,
    UndefinedResponse,
)

logger = logging.getLogger(__name__)

ANOMALY = "anomaly"
BACKGROUND = "background"
LABELS = (ANOMALY, BACKGROUND)

DEFAULT_INTENSITY_EDGES = tuple(np.round(np.arange(0.0, 0.0301, 0.005), 6))


@dataclass(frozen=True)
class LabeledEvent:
    sequence: str
    apex_frame: int
    label: str

    def __post_init__(self):
        if self.label not in LABELS:
            raise ConfigError(f"label must be one of {LABELS}, got {self.label!r}")
        if self.apex_frame < 0:
            raise ConfigError(f"apex_frame must be non-negative, got {self.apex_frame}")

    @property
    def positive(self) -> bool:
        return self.label == ANOMALY


class ScoredEvent(NamedTuple):
    score: float
    label: int


@dataclass
class MetricsReport:
    balanced_accuracy: tuple[float, float]
    f_score: tuple[float, float]
    auc: float
    roc: list[tuple[float, float, float]]
    thresholds: list[float]
    folds: int
    seed: int
    stratified: bool = True
    positives: int = 0
    negatives: int = 0

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class RotationIntensityBin:
    low: float
    high: float
    fpr: float
    count: int


@dataclass(frozen=True)
class PitchComparison:
    rms: float
    max_abs: float


# =============================================================================
# SCORING
# =============================================================================


def window_max(s, apex: int, half_width: int) -> float:
    """Largest defined response within +-half_width frames of apex"""
    s = np.asarray(s, dtype=float)
    if not (0 <= apex < len(s)):
        raise UndefinedResponse(f"apex frame {apex} outside a {len(s)}-frame response")
    values = s[max(0, apex - half_width) : apex + half_width + 1]
    values = values[~np.isnan(values)]
    if not len(values):
        raise UndefinedResponse(f"response undefined around frame {apex}")
    return float(values.max())


def score_events(events: Sequence[LabeledEvent], responses: Mapping[str, object], window: int | None = None) -> list[ScoredEvent]:
    """Score every event by the peak response in its +-T/2 neighbourhood.

    `responses` maps a sequence id to a ResponseSeries (or a bare response
    array, in which case `window` must be given).
    """
    scored = []
    for event in events:
        if event.sequence not in responses:
            raise MissingSequence(event.sequence)
        response = responses[event.sequence]
        s = getattr(response, "s", response)
        T = window or getattr(response, "window", None)
        if T is None:
            raise ConfigError("window is required for bare response arrays")
        try:
            score = window_max(s, event.apex_frame, T // 2)
        except UndefinedResponse as e:
            raise UndefinedResponse(f"{event.sequence}: {e}") from e
        scored.append(ScoredEvent(score, int(event.positive)))
    return scored


def _split(scored: Sequence) -> tuple[np.ndarray, np.ndarray]:
    data = np.asarray([(float(s), int(l)) for s, l in scored], dtype=float).reshape(-1, 2)
    return data[:, 0], data[:, 1].astype(int)


def roc_auc(scored: Sequence) -> tuple[list[tuple[float, float, float]], float]:
    """ROC vertices (one per distinct score) and trapezoidal AUC"""
    scores, labels = _split(scored)
    if len(np.unique(labels)) < 2:
        raise SingleClassError(f"need both classes, got {len(labels)} event(s) of one class")
    fpr, tpr, thresholds = roc_curve(labels, scores, drop_intermediate=False)
    roc = [(float(a), float(b), float(c)) for a, b, c in zip(fpr, tpr, thresholds)]
    return roc, float(auc(fpr, tpr))


def pairwise_win_rate(scored: Sequence) -> float:
    """Fraction of positive/negative pairs ranked correctly, ties counting 1/2"""
    scores, labels = _split(scored)
    pos, neg = scores[labels == 1], scores[labels == 0]
    if not len(pos) or not len(neg):
        raise SingleClassError("need both classes")
    diff = pos[:, None] - neg[None, :]
    return float(((diff > 0).sum() + 0.5 * (diff == 0).sum()) / diff.size)


def best_threshold(scores: np.ndarray, labels: np.ndarray) -> float:
    """Threshold maximising F1 of `score >= threshold`; ties go to the smallest"""
    candidates = np.unique(scores)
    f = [f1_score(labels, scores >= c, zero_division=0) for c in candidates]
    return float(candidates[int(np.argmax(f))])


def cv_threshold_metrics(scored: Sequence, k_folds: int = 5, seed: int = 0) -> MetricsReport:
    scores, labels = _split(scored)
    positives = int(labels.sum())
    negatives = int(len(labels) - positives)
    if min(positives, negatives) == 0:
        raise SingleClassError(f"{positives} positive and {negatives} negative events")
    if k_folds < 2:
        raise ConfigError(f"k_folds must be at least 2, got {k_folds}")
    if min(positives, negatives) < k_folds:
        raise TooFewEvents(f"{positives} positive and {negatives} negative events for {k_folds} folds")

    roc, area = roc_auc(scored)
    folds = StratifiedKFold(n_splits=k_folds, shuffle=True, random_state=seed)
    balanced, fscores, thresholds = [], [], []
    for fold, (train, test) in enumerate(folds.split(scores.reshape(-1, 1), labels)):
        threshold = best_threshold(scores[train], labels[train])
        predicted = scores[test] >= threshold
        balanced.append(balanced_accuracy_score(labels[test], predicted))
        fscores.append(f1_score(labels[test], predicted, zero_division=0))
        thresholds.append(threshold)
        logger.debug("fold %d: threshold %.4f, balanced accuracy %.3f", fold, threshold, balanced[-1])

    return MetricsReport(
        balanced_accuracy=(float(np.mean(balanced)), float(np.std(balanced))),
        f_score=(float(np.mean(fscores)), float(np.std(fscores))),
        auc=area,
        roc=roc,
        thresholds=thresholds,
        folds=k_folds,
        seed=seed,
        positives=positives,
        negatives=negatives,
    )


# =============================================================================
# FALSE POSITIVES AGAINST ROTATION INTENSITY
# =============================================================================


def rotation_intensity(phi_cum, fps: float = 30.0) -> np.ndarray:
    """Mean |phi_cum| over a trailing one-second window; NaN until it fills"""
    phi_cum = np.abs(np.asarray(phi_cum, dtype=float))
    width = max(1, int(round(fps)))
    intensity = np.full(len(phi_cum), np.nan)
    if len(phi_cum) >= width:
        intensity[width - 1 :] = sliding_window_view(phi_cum, width).mean(axis=1)
    return intensity


def fpr_vs_rotation_intensity(
    responses: Sequence,
    threshold: float,
    edges: Sequence[float] = DEFAULT_INTENSITY_EDGES,
    fps: float = 30.0,
    pitch: Sequence | None = None,
) -> dict[str, list[RotationIntensityBin]]:
    """Per-window false-positive rate binned by rotation intensity.

    Every response belongs to a sequence whose vehicle crosses no anomaly,
    so any frame with s above threshold is a false positive. Intensity comes
    from `pitch` (one phi_cum series per response) or else from the
    response's own compensation angles. The last bin is open to the right.
    Bins holding no frame are left out.
    """
    edges = np.asarray(edges, dtype=float)
    if len(edges) < 1 or np.any(np.diff(edges) <= 0):
        raise ConfigError("intensity edges must be strictly increasing")
    bounds = np.append(edges, np.inf)
    if pitch is not None and len(pitch) != len(responses):
        raise LengthMismatch(f"{len(responses)} responses but {len(pitch)} pitch series")

    intensity, variants = [], {"compensated": [], "uncompensated": []}
    for i, response in enumerate(responses):
        angles = pitch[i] if pitch is not None else response.compensation_angle
        if len(angles) != len(response):
            raise LengthMismatch(f"response of {len(response)} frames but {len(angles)} pitch values")
        intensity.append(rotation_intensity(angles, fps))
        variants["compensated"].append(response.s)
        variants["uncompensated"].append(response.s_uncompensated)
    intensity = np.concatenate(intensity) if intensity else np.empty(0)

    curves = {}
    for name, series in variants.items():
        s = np.concatenate(series) if series else np.empty(0)
        defined = ~np.isnan(s) & ~np.isnan(intensity)
        index = np.searchsorted(bounds, intensity[defined], side="right") - 1
        exceeded = s[defined] > threshold
        bins = []
        for b in range(len(edges)):
            members = index == b
            count = int(members.sum())
            if count:
                bins.append(RotationIntensityBin(float(bounds[b]), float(bounds[b + 1]), float(exceeded[members].mean()), count))
        curves[name] = bins
    return curves


def compare_pitch_tracks(estimated, reference) -> PitchComparison:
    """RMS and largest absolute difference between two cumulative pitch series"""
    estimated = np.asarray(getattr(estimated, "phi_cum", estimated), dtype=float)
    reference = np.asarray(reference, dtype=float)
    if estimated.shape != reference.shape:
        raise LengthMismatch(f"{len(estimated)} estimated but {len(reference)} reference pitch values")
    error = np.abs(estimated - reference)
    if not len(error):
        return PitchComparison(0.0, 0.0)
    return PitchComparison(float(np.sqrt(np.mean(error**2))), float(error.max()))


@dataclass
class SubsetReports:
    """Metrics on the whole event set and on each subset that supports them"""

    reports: dict[str, MetricsReport] = field(default_factory=dict)
    skipped: dict[str, str] = field(default_factory=dict)


def evaluate_subsets(
    events: Sequence[LabeledEvent],
    scored: Sequence[ScoredEvent],
    subsets: Mapping[str, str],
    k_folds: int = 5,
    seed: int = 0,
) -> SubsetReports:
    """cv_threshold_metrics on `all` and per subset; `subsets` maps sequence id to subset"""
    if len(events) != len(scored):
        raise LengthMismatch(f"{len(events)} events but {len(scored)} scores")
    result = SubsetReports()
    result.reports["all"] = cv_threshold_metrics(scored, k_folds, seed)
    for name in sorted(set(subsets.values())):
        members = [sc for ev, sc in zip(events, scored) if subsets.get(ev.sequence) == name]
        try:
            result.reports[name] = cv_threshold_metrics(members, k_folds, seed)
        except (SingleClassError, TooFewEvents) as e:
            result.skipped[name] = str(e)
            logger.info("subset %s skipped: %s", name, e)
    return result
