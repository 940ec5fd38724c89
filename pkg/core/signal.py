"""
Visual response of the preceding vehicle and anomaly detection.

Pipeline: aggregate tracked points -> compensate ego pitch -> windowed
standard deviation -> threshold with non-maximum suppression.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .exceptions import ConfigError, DomainError, EmptyTrack, LengthMismatch, SeriesTooShort
from .geometry import CameraIntrinsics, CorrespondenceSet, TranslationDirection
from .pitch_estimator import EstimatorConfig, PitchEstimate, PitchTrack, estimate_pitch_track

logger = logging.getLogger(__name__)

MAX_POINTS = 400
DEFAULT_WINDOW = 30

PITCH_SOURCES = ("visual", "external", "fallback")


@dataclass
class VehicleTrack:
    """Per-frame pixel locations of up to MAX_POINTS points on the vehicle rear"""

    x: np.ndarray
    y: np.ndarray
    valid: np.ndarray
    fps: float = 30.0

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.y.ndim != 2 or self.x.shape != self.y.shape or self.valid.shape != self.y.shape:
            raise ConfigError(f"track arrays must share a (frames, points) shape: {self.x.shape}, {self.y.shape}, {self.valid.shape}")
        if self.y.shape[1] > MAX_POINTS:
            raise ConfigError(f"track has {self.y.shape[1]} points per frame, limit is {MAX_POINTS}")
        if not self.fps > 0:
            raise ConfigError(f"fps must be positive, got {self.fps}")
        self.valid = self.valid & np.isfinite(self.y)

    @property
    def frames(self) -> int:
        return self.y.shape[0]


class AggregatedSeries(NamedTuple):
    values: np.ndarray
    interpolated: np.ndarray


@dataclass
class DetectionEvent:
    frame: int
    response: float
    window: tuple[int, int]


@dataclass(frozen=True)
class PipelineConfig:
    window: int = DEFAULT_WINDOW
    threshold: float = 1.0
    nms_radius: int | None = None
    compensation: bool = True
    pitch_source: str = "visual"
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)

    def __post_init__(self):
        if self.window < 2:
            raise ConfigError(f"window must be at least 2 frames, got {self.window}")
        if not self.threshold > 0:
            raise ConfigError(f"threshold must be positive, got {self.threshold}")
        if self.nms_radius is not None and self.nms_radius < 1:
            raise ConfigError(f"nms_radius must be at least 1, got {self.nms_radius}")
        if self.pitch_source not in PITCH_SOURCES:
            raise ConfigError(f"pitch_source must be one of {PITCH_SOURCES}, got {self.pitch_source!r}")

    @property
    def radius(self) -> int:
        return self.nms_radius if self.nms_radius is not None else self.window


@dataclass
class ResponseSeries:
    y_hat: np.ndarray
    y_comp: np.ndarray
    s: np.ndarray
    window: int
    s_uncompensated: np.ndarray
    interpolated: np.ndarray
    pitch: PitchTrack | None = None
    compensation_angle: np.ndarray | None = None
    compensated: bool = True

    def __len__(self):
        return len(self.y_hat)


# =============================================================================
# STAGES
# =============================================================================


def aggregate_vertical(track: VehicleTrack) -> AggregatedSeries:
    """Mean vertical location of valid points; empty frames interpolated"""
    counts = track.valid.sum(axis=1)
    sums = np.where(track.valid, track.y, 0.0).sum(axis=1)
    observed = counts > 0
    if not observed.any():
        raise EmptyTrack("no frame has a valid vehicle point")
    values = np.zeros(track.frames)
    values[observed] = sums[observed] / counts[observed]
    missing = ~observed
    if missing.any():
        frames = np.arange(track.frames)
        values[missing] = np.interp(frames[missing], frames[observed], values[observed])
        logger.info("aggregate: interpolated %d frame(s) without valid points", int(missing.sum()))
    return AggregatedSeries(values, missing)


def pitch_angles(pitch) -> np.ndarray:
    if isinstance(pitch, PitchTrack):
        return pitch.phi_cum
    pitch = list(pitch)
    if pitch and isinstance(pitch[0], PitchEstimate):
        return np.array([p.phi_cum for p in pitch])
    return np.asarray(pitch, dtype=float)


def compensate(y_hat, pitch, intr: CameraIntrinsics) -> np.ndarray:
    """Remove ego pitch from the aggregated trajectory.

    With y growing downward, a camera tilted down by phi lifts the vehicle
    by fy * tan(phi) pixels, so the row is restored as
        y_c = y + fy * tan(phi_cum)
    i.e. the tan-compensation applied with the image-row sign.
    """
    y_hat = np.asarray(y_hat, dtype=float)
    angles = pitch_angles(pitch)
    if len(angles) != len(y_hat):
        raise LengthMismatch(f"{len(y_hat)} trajectory frames but {len(angles)} pitch values")
    if np.any(np.abs(angles) >= math.pi / 2):
        raise DomainError("cumulative pitch reached pi/2")
    return y_hat + intr.fy * np.tan(angles)


def windowed_std(y, window: int = DEFAULT_WINDOW) -> np.ndarray:
    """Trailing population standard deviation; NaN for the first window-1 frames"""
    y = np.asarray(y, dtype=float)
    if window < 2:
        raise ConfigError(f"window must be at least 2 frames, got {window}")
    if len(y) < window:
        raise SeriesTooShort(f"series of {len(y)} frames is shorter than window {window}")
    s = np.full(len(y), np.nan)
    s[window - 1 :] = sliding_window_view(y, window).std(axis=1)
    return s


def _local_maxima(values: np.ndarray, threshold: float) -> list[int]:
    """Strict local maxima; a plateau counts once, at its first frame"""
    peaks = []
    n = len(values)
    i = 0
    while i < n:
        j = i
        while j + 1 < n and values[j + 1] == values[i]:
            j += 1
        left = values[i - 1] if i > 0 else -np.inf
        right = values[j + 1] if j + 1 < n else -np.inf
        if values[i] >= threshold and values[i] > left and values[i] > right:
            peaks.append(i)
        i = j + 1
    return peaks


def detect(s, threshold: float, nms_radius: int = DEFAULT_WINDOW, window: int | None = None) -> list[DetectionEvent]:
    """Local maxima of s at or above threshold, one per +-nms_radius frames"""
    if not threshold > 0:
        raise ConfigError(f"threshold must be positive, got {threshold}")
    if nms_radius < 1:
        raise ConfigError(f"nms_radius must be at least 1, got {nms_radius}")
    window = window or nms_radius
    values = np.asarray(s, dtype=float)
    # sub-nanopixel ripple must not split a plateau into several peaks
    values = np.round(np.where(np.isnan(values), -np.inf, values), 9)
    order = sorted(_local_maxima(values, threshold), key=lambda i: (-values[i], i))

    kept: list[int] = []
    for frame in order:
        if all(abs(frame - other) > nms_radius for other in kept):
            kept.append(int(frame))
    return [
        DetectionEvent(frame=f, response=float(values[f]), window=(max(0, f - window + 1), f))
        for f in sorted(kept)
    ]


def _compensation_angles(pitch: PitchTrack, cfg: PipelineConfig, external_pitch) -> np.ndarray:
    visual = pitch.phi_cum
    if cfg.pitch_source == "visual":
        return visual
    if external_pitch is None:
        raise ConfigError(f"pitch_source={cfg.pitch_source!r} needs an external pitch series")
    external = np.asarray(external_pitch, dtype=float)
    if len(external) != len(visual):
        raise LengthMismatch(f"{len(visual)} frames but {len(external)} external pitch values")
    if cfg.pitch_source == "external":
        return external
    # fallback: follow external increments on held frames, anchored to the visual track
    angles = visual.copy()
    held = pitch.held
    leak = cfg.estimator.leak
    for k in range(1, len(angles)):
        if held[k]:
            increment = external[k] - external[k - 1]
        else:
            increment = pitch[k].phi_rel
        angles[k] = leak * angles[k - 1] + increment
    return angles


def run_pipeline(
    track: VehicleTrack,
    correspondence_sets: Sequence[CorrespondenceSet],
    intr: CameraIntrinsics,
    t: TranslationDirection,
    cfg: PipelineConfig | None = None,
    external_pitch=None,
) -> tuple[ResponseSeries, list[DetectionEvent]]:
    """Estimate pitch, compensate, compute the response and detect events"""
    cfg = cfg or PipelineConfig()
    aggregated = aggregate_vertical(track)
    if len(correspondence_sets) != track.frames - 1:
        raise LengthMismatch(
            f"track has {track.frames} frames, expected {track.frames - 1} correspondence sets, got {len(correspondence_sets)}"
        )

    pitch = PitchTrack.from_estimates(estimate_pitch_track(correspondence_sets, intr, t, cfg.estimator))
    held = int(pitch.held.sum())
    if held:
        logger.warning("pipeline: %d frame(s) held the previous pitch", held)

    angles = _compensation_angles(pitch, cfg, external_pitch)
    if cfg.compensation:
        y_comp = compensate(aggregated.values, angles, intr)
    else:
        y_comp = aggregated.values.copy()

    s = windowed_std(y_comp, cfg.window)
    s_uncompensated = windowed_std(aggregated.values, cfg.window)
    detections = detect(s, cfg.threshold, cfg.radius, window=cfg.window)
    logger.debug("pipeline: %d frames, %d detection(s)", track.frames, len(detections))

    response = ResponseSeries(
        y_hat=aggregated.values,
        y_comp=y_comp,
        s=s,
        window=cfg.window,
        s_uncompensated=s_uncompensated,
        interpolated=aggregated.interpolated,
        pitch=pitch,
        compensation_angle=angles,
        compensated=cfg.compensation,
    )
    return response, detections
