"""
Synthetic ground truth: a static scene and a preceding vehicle seen by a
forward-moving camera with scripted pitch, plus the 1/d signal model.

Motion model per frame pair k -> k+1 (camera coordinates):
    X_{k+1} = R(theta_{k+1} - theta_k) X_k - (ego_speed / fps) t
so static correspondences satisfy the epipolar constraint of
F(theta_{k+1} - theta_k) exactly. The vehicle keeps its distance and is
only rotated by the camera pitch: X_k = R(theta_k) P_k.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields, replace
from typing import NamedTuple, Sequence

import numpy as np

from .evaluation import window_max
from .exceptions import ConfigError, DegenerateFit, DomainError
from .geometry import (
    CameraIntrinsics,
    CorrespondenceSet,
    TranslationDirection,
    back_project,
    pitch_rotation,
    project,
)
from .signal import MAX_POINTS, PipelineConfig, VehicleTrack, run_pipeline, windowed_std

logger = logging.getLogger(__name__)

EGO_PITCH = "ego_pitch"
VEHICLE_DISPLACEMENT = "vehicle_displacement"
BUMP_KINDS = (EGO_PITCH, VEHICLE_DISPLACEMENT)

# controlled speed bump: 2 m long, 0.06 m high
BUMP_LENGTH = 2.0
BUMP_HEIGHT = 0.06

SUITE_KINDS = ("flat", "easy", "hard", "distance", "ego")
DEFAULT_DISTANCES = (5.0, 10.0, 15.0, 20.0, 30.0, 40.0)


def config_from_dict(cls, data: dict | None):
    """Build a config dataclass from a JSON object, rejecting unknown keys"""
    data = dict(data or {})
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} options: {', '.join(sorted(unknown))}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"{cls.__name__}: {e}") from e


def default_bump_duration(ego_speed: float = 5.56, fps: float = 30.0, length: float = BUMP_LENGTH) -> int:
    """Frames needed to drive over a bump of the given length"""
    return max(2, int(round(length / ego_speed * fps)))


@dataclass(frozen=True)
class SceneConfig:
    seed: int = 0
    n_static_points: int = 300
    depth_min: float = 4.0
    depth_max: float = 60.0
    ego_speed: float = 5.56
    fps: float = 30.0
    noise_sigma: float = 0.5
    outlier_fraction: float = 0.1
    outlier_displacement: float = 20.0
    # False marks outliers non-static, isolating the estimator from them
    outliers_static: bool = True
    duration: int = 300
    # matches on the vehicle rear, always flagged non-static
    n_vehicle_matches: int = 20
    # drifting gyro channel, rad/s
    gyro_bias: float = 0.005
    gyro_bias_walk: float = 1e-4
    gyro_noise: float = 0.01

    def __post_init__(self):
        if not (0 < self.depth_min < self.depth_max):
            raise ConfigError(f"depth range must be positive and ordered, got {self.depth_min}..{self.depth_max}")
        if not (0 <= self.outlier_fraction < 0.5):
            raise ConfigError(f"outlier_fraction must be in [0, 0.5), got {self.outlier_fraction}")
        if self.noise_sigma < 0 or self.outlier_displacement < 0:
            raise ConfigError("noise_sigma and outlier_displacement must be non-negative")
        if self.duration < 2:
            raise ConfigError(f"duration must be at least 2 frames, got {self.duration}")
        if not self.fps > 0 or self.ego_speed < 0:
            raise ConfigError("fps must be positive and ego_speed non-negative")
        if self.n_static_points < 0 or self.n_vehicle_matches < 0:
            raise ConfigError("point counts must be non-negative")
        if min(self.gyro_bias_walk, self.gyro_noise) < 0:
            raise ConfigError("gyro noise levels must be non-negative")

    @property
    def step(self) -> float:
        return self.ego_speed / self.fps


@dataclass(frozen=True)
class BumpProfile:
    kind: str
    apex_frame: int
    duration: int = 11
    amplitude: float = BUMP_HEIGHT
    shape: str = "half_sine"

    def __post_init__(self):
        if self.kind not in BUMP_KINDS:
            raise ConfigError(f"bump kind must be one of {BUMP_KINDS}, got {self.kind!r}")
        if self.amplitude < 0:
            raise ConfigError(f"bump amplitude must be non-negative, got {self.amplitude}")
        if self.duration < 2:
            raise ConfigError(f"bump duration must be at least 2 frames, got {self.duration}")
        if self.shape != "half_sine":
            raise ConfigError(f"unsupported bump shape {self.shape!r}")

    def values(self, n_frames: int) -> np.ndarray:
        """Half-sine pulse peaking at apex_frame"""
        u = (np.arange(n_frames) - (self.apex_frame - self.duration / 2.0)) / self.duration
        pulse = self.amplitude * np.sin(np.pi * np.clip(u, 0.0, 1.0))
        pulse[(u <= 0.0) | (u >= 1.0)] = 0.0
        return pulse


@dataclass(frozen=True)
class VehicleConfig:
    distance: float | tuple[float, ...] = 10.0
    width: float = 1.8
    height: float = 1.2
    n_points: int = 100
    # rear-plane centre below the optical axis, metres
    height_offset: float = 0.2

    def __post_init__(self):
        if isinstance(self.distance, (list, tuple)):
            object.__setattr__(self, "distance", tuple(float(d) for d in self.distance))
            distances = self.distance
        else:
            distances = (float(self.distance),)
        if not distances or min(distances) <= 1.0:
            raise ConfigError(f"vehicle distance must exceed 1 m, got {self.distance}")
        if not (4 <= self.n_points <= MAX_POINTS):
            raise ConfigError(f"n_points must be in [4, {MAX_POINTS}], got {self.n_points}")
        if not (self.width > 0 and self.height > 0):
            raise ConfigError("vehicle rear size must be positive")

    def distances(self, n_frames: int) -> np.ndarray:
        if isinstance(self.distance, tuple):
            if len(self.distance) != n_frames:
                raise ConfigError(f"{len(self.distance)} distances for {n_frames} frames")
            return np.array(self.distance)
        return np.full(n_frames, float(self.distance))

    @property
    def grid_shape(self) -> tuple[int, int]:
        cols = max(2, int(round(math.sqrt(self.n_points * self.width / self.height))))
        rows = max(2, self.n_points // cols)
        return rows, cols

    def grid(self) -> np.ndarray:
        """Rear-plane points (x, y) in metres, y down, centred on the plate"""
        rows, cols = self.grid_shape
        gx, gy = np.meshgrid(
            np.linspace(-self.width / 2, self.width / 2, cols),
            np.linspace(-self.height / 2, self.height / 2, rows),
        )
        return np.column_stack([gx.ravel(), gy.ravel() + self.height_offset])


@dataclass
class GroundTruth:
    pitch: np.ndarray
    relative_pitch: np.ndarray
    displacement: np.ndarray
    imu_pitch: np.ndarray
    apex_frames: list[int] = field(default_factory=list)


class GeneratedSequence(NamedTuple):
    correspondences: list[CorrespondenceSet]
    track: VehicleTrack
    truth: GroundTruth


def _active(bumps: Sequence[BumpProfile], kind: str, n_frames: int) -> np.ndarray:
    total = np.zeros(n_frames)
    for bump in bumps:
        if bump.kind == kind:
            total += bump.values(n_frames)
    return total


def _gyro_pitch(pitch: np.ndarray, scene: SceneConfig, rng: np.random.Generator) -> np.ndarray:
    """Integrated angular velocity with bias, bias random walk and white noise"""
    n = len(pitch)
    rate = np.diff(pitch) * scene.fps
    bias = scene.gyro_bias + np.cumsum(rng.normal(0.0, scene.gyro_bias_walk, n - 1))
    measured = rate + bias + rng.normal(0.0, scene.gyro_noise, n - 1)
    return np.concatenate([[0.0], np.cumsum(measured / scene.fps)])


def generate_sequence(
    scene: SceneConfig,
    bumps: Sequence[BumpProfile],
    vehicle: VehicleConfig,
    intr: CameraIntrinsics,
    t: TranslationDirection | None = None,
) -> GeneratedSequence:
    t = t or TranslationDirection()
    n = scene.duration
    for bump in bumps:
        if not (0 <= bump.apex_frame < n):
            raise ConfigError(f"bump apex {bump.apex_frame} outside the {n}-frame sequence")
    visual_seed, imu_seed = np.random.SeedSequence(scene.seed).spawn(2)
    rng = np.random.default_rng(visual_seed)

    pitch = _active(bumps, EGO_PITCH, n)
    displacement = _active(bumps, VEHICLE_DISPLACEMENT, n)
    if np.any(np.abs(pitch) >= math.pi / 2):
        raise ConfigError("scripted pitch reaches pi/2")

    # vehicle rear, road-aligned frame -> camera frame through the pitch
    grid = vehicle.grid()
    distances = vehicle.distances(n)
    pixels = np.empty((n, len(grid), 2))
    for k in range(n):
        rear = np.column_stack([grid[:, 0], grid[:, 1] - displacement[k], np.full(len(grid), distances[k])])
        pixels[k] = project(rear @ pitch_rotation(pitch[k]).T, intr)
    if scene.noise_sigma > 0:
        pixels = pixels + rng.normal(0.0, scene.noise_sigma, pixels.shape)
    track = VehicleTrack(x=pixels[:, :, 0], y=pixels[:, :, 1], valid=np.ones(pixels.shape[:2], dtype=bool), fps=scene.fps)

    n_vehicle = min(scene.n_vehicle_matches, len(grid))
    correspondences = []
    for k in range(n - 1):
        rotation = pitch_rotation(pitch[k + 1] - pitch[k])
        m = scene.n_static_points
        pixels0 = np.column_stack([rng.uniform(0.0, intr.width, m), rng.uniform(0.0, intr.height, m)])
        depth = rng.uniform(scene.depth_min, scene.depth_max, m)
        X0 = back_project(pixels0, depth, intr)
        X1 = X0 @ rotation.T - scene.step * t.vector
        p0 = project(X0, intr)
        p1 = project(X1, intr)
        if scene.noise_sigma > 0:
            p0 = p0 + rng.normal(0.0, scene.noise_sigma, p0.shape)
            p1 = p1 + rng.normal(0.0, scene.noise_sigma, p1.shape)
        is_static = np.ones(m, dtype=bool)
        n_outliers = int(round(scene.outlier_fraction * m))
        if n_outliers:
            index = rng.choice(m, n_outliers, replace=False)
            p1[index] += rng.uniform(-scene.outlier_displacement, scene.outlier_displacement, (n_outliers, 2))
            is_static[index] = scene.outliers_static
        correspondences.append(
            CorrespondenceSet(
                frame=k,
                p0=np.vstack([p0, pixels[k, :n_vehicle]]),
                p1=np.vstack([p1, pixels[k + 1, :n_vehicle]]),
                is_static=np.concatenate([is_static, np.zeros(n_vehicle, dtype=bool)]),
            )
        )

    truth = GroundTruth(
        pitch=pitch,
        relative_pitch=np.diff(pitch),
        displacement=displacement,
        imu_pitch=_gyro_pitch(pitch, scene, np.random.default_rng(imu_seed)),
        apex_frames=sorted(b.apex_frame for b in bumps if b.kind == VEHICLE_DISPLACEMENT),
    )
    return GeneratedSequence(correspondences, track, truth)


# =============================================================================
# SIGNAL MODEL
# =============================================================================


@dataclass(frozen=True)
class SignalModelFit:
    alpha: float
    beta: float
    residual: float
    r_squared: float


def predict_response(d: float, delta: float, f: float, alpha: float = 1.0, beta: float = 0.0) -> float:
    """s(d) = alpha * f * delta / d + beta"""
    if d <= 0:
        raise DomainError(f"distance must be positive, got {d}")
    return alpha * f * delta / d + beta


def fit_signal_model(samples: Sequence[tuple[float, float]], f: float, delta: float) -> SignalModelFit:
    """Linear least squares on the basis [f * delta / d, 1]"""
    data = np.asarray(samples, dtype=float).reshape(-1, 2)
    d, s = data[:, 0], data[:, 1]
    if len(d) < 2 or np.all(d == d[0]):
        raise DegenerateFit("need at least two samples with distinct distances")
    if np.any(d <= 0):
        raise DomainError("distances must be positive")
    if f * delta == 0:
        raise DegenerateFit("f * delta is zero, the 1/d basis vanishes")
    A = np.column_stack([f * delta / d, np.ones_like(d)])
    (alpha, beta), *_ = np.linalg.lstsq(A, s, rcond=None)
    predicted = A @ np.array([alpha, beta])
    residual = float(np.sqrt(np.mean((s - predicted) ** 2)))
    spread = float(np.sum((s - s.mean()) ** 2))
    r_squared = 1.0 - float(np.sum((s - predicted) ** 2)) / spread if spread > 0 else 1.0
    return SignalModelFit(float(alpha), float(beta), residual, r_squared)


def pulse_response_factor(duration: int, window: int) -> float:
    """Peak windowed std of a unit half-sine pulse, i.e. alpha for an ideal tracker"""
    n = duration + 3 * window
    pulse = BumpProfile(VEHICLE_DISPLACEMENT, apex_frame=window + duration // 2, duration=duration, amplitude=1.0)
    return float(np.nanmax(windowed_std(pulse.values(n), window)))


# =============================================================================
# EXPERIMENTS AND SUITES
# =============================================================================


@dataclass(frozen=True)
class DistanceResponse:
    distance: float
    s_apex: float
    s_background: float
    peak_deflection: float


def event_mask(n_frames: int, apex: int, window: int, duration: int) -> np.ndarray:
    """Frames influenced by a pulse through the trailing window"""
    frames = np.arange(n_frames)
    return (frames >= apex - window) & (frames <= apex + duration + window)


def response_vs_distance_experiment(
    distances: Sequence[float],
    scene: SceneConfig,
    vehicle: VehicleConfig,
    intr: CameraIntrinsics,
    t: TranslationDirection | None = None,
    bump: BumpProfile | None = None,
    cfg: PipelineConfig | None = None,
    ego_bumps: Sequence[BumpProfile] = (),
) -> list[DistanceResponse]:
    """Apex and background response of one bump traversal per distance"""
    cfg = cfg or PipelineConfig()
    bump = bump or BumpProfile(
        VEHICLE_DISPLACEMENT,
        apex_frame=scene.duration // 2,
        duration=default_bump_duration(scene.ego_speed, scene.fps),
    )
    results = []
    for d in distances:
        if d <= 1.0:
            raise ConfigError(f"distance must exceed 1 m, got {d}")
        sequence = generate_sequence(scene, [bump, *ego_bumps], replace(vehicle, distance=float(d)), intr, t)
        response, _ = run_pipeline(sequence.track, sequence.correspondences, intr, t or TranslationDirection(), cfg)
        inside = event_mask(len(response), bump.apex_frame, cfg.window, bump.duration)
        outside = ~inside & ~np.isnan(response.s)
        baseline = float(np.median(response.y_comp[~inside])) if (~inside).any() else float(response.y_comp[0])
        results.append(
            DistanceResponse(
                distance=float(d),
                s_apex=window_max(response.s, bump.apex_frame, cfg.window // 2),
                s_background=float(np.median(response.s[outside])) if outside.any() else 0.0,
                peak_deflection=float(np.max(np.abs(response.y_comp[inside] - baseline))),
            )
        )
        logger.info("distance %.1f m: apex %.4f px, background %.4f px", d, results[-1].s_apex, results[-1].s_background)
    return results


@dataclass(frozen=True)
class SequencePlan:
    sequence: str
    bumps: tuple[BumpProfile, ...] = ()
    # None keeps the vehicle's own distance
    distance: float | None = None
    subset: str = "easy"
    background_frames: tuple[int, ...] = ()

    @property
    def apex_frames(self) -> list[int]:
        return sorted(b.apex_frame for b in self.bumps if b.kind == VEHICLE_DISPLACEMENT)


def build_suite(
    kind: str,
    scene: SceneConfig,
    positives: int = 0,
    negatives: int = 0,
    seed: int = 0,
    distances: Sequence[float] = DEFAULT_DISTANCES,
    window: int = 30,
    ego_amplitude: tuple[float, float] = (0.01, 0.03),
    distance_range: tuple[float, float] = (5.0, 40.0),
) -> list[SequencePlan]:
    """Expand a named suite into labelled sequence plans.

    flat: no excitation at all; easy: vehicle bumps with a still ego camera;
    hard: every event coincides with an ego pitch pulse; distance: one bump
    per distance; ego: ego pitch pulses only.
    """
    if kind not in SUITE_KINDS:
        raise ConfigError(f"suite kind must be one of {SUITE_KINDS}, got {kind!r}")
    rng = np.random.default_rng(seed)
    n = scene.duration
    duration = default_bump_duration(scene.ego_speed, scene.fps)
    apex = n // 2
    if apex < window + duration or apex + duration + window >= n:
        raise ConfigError(f"duration {n} too short for window {window} and bump of {duration} frames")

    def ego_bump(at: int) -> BumpProfile:
        return BumpProfile(EGO_PITCH, apex_frame=at, duration=duration, amplitude=float(rng.uniform(*ego_amplitude)))

    def vehicle_bump() -> BumpProfile:
        return BumpProfile(VEHICLE_DISPLACEMENT, apex_frame=apex, duration=duration, amplitude=BUMP_HEIGHT)

    def background_frame() -> int:
        return int(rng.integers(window, n - window // 2))

    plans: list[SequencePlan] = []
    if kind == "distance":
        for d in distances:
            plans.append(SequencePlan(f"d{d:05.1f}", (vehicle_bump(),), float(d), "easy"))
        return plans

    for i in range(positives):
        d = float(np.round(rng.uniform(*distance_range), 1))
        if kind == "hard":
            bumps = (vehicle_bump(), ego_bump(apex + int(rng.integers(-10, 11))))
        elif kind in ("easy", "flat"):
            bumps = (vehicle_bump(),)
        else:
            raise ConfigError(f"suite {kind!r} has no positive events")
        plans.append(SequencePlan(f"{kind}-pos-{i:03d}", bumps, d, "hard" if kind == "hard" else "easy"))

    for i in range(negatives):
        d = float(np.round(rng.uniform(*distance_range), 1))
        if kind in ("hard", "ego"):
            bump = ego_bump(apex)
            plans.append(SequencePlan(f"{kind}-neg-{i:03d}", (bump,), d, "hard", (apex,)))
        else:
            plans.append(SequencePlan(f"{kind}-neg-{i:03d}", (), d, "easy", (background_frame(),)))
    return plans
