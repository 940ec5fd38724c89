"""
Dataset and run orchestration shared by the management commands and the API
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import pandas as pd
from django.conf import settings

from core.evaluation import (
    ANOMALY,
    BACKGROUND,
    LabeledEvent,
    evaluate_subsets,
    fpr_vs_rotation_intensity,
    score_events,
)
from core.exceptions import ConfigError, MissingSequence, RoadAnomalyError, SingleClassError
from core.geometry import CameraIntrinsics, CorrespondenceSet, TranslationDirection
from core.pitch_estimator import EstimatorConfig
from core.signal import PipelineConfig, VehicleTrack, run_pipeline
from core.synth import (
    SceneConfig,
    SequencePlan,
    VehicleConfig,
    BumpProfile,
    build_suite,
    config_from_dict,
    default_bump_duration,
    event_mask,
    fit_signal_model,
    generate_sequence,
    pulse_response_factor,
)

from . import formats

logger = logging.getLogger(__name__)

DEFAULT_CALIBRATION = {"fx": 1000.0, "fy": 1000.0, "cx": 640.0, "cy": 360.0, "width": 1280, "height": 720}

ESTIMATOR_KEYS = {
    "MAX_ITERATIONS": "max_iterations",
    "GRADIENT_TOLERANCE": "gradient_tolerance",
    "STEP_TOLERANCE": "step_tolerance",
    "INITIAL_DAMPING": "initial_damping",
    "DAMPING_UP": "damping_up",
    "DAMPING_DOWN": "damping_down",
    "PHI_CLAMP": "phi_clamp",
    "MIN_PAIRS": "min_pairs",
    "LOSS_SCALE": "loss_scale",
    "LEAK": "leak",
}

SYNTH_KEYS = {"calibration", "scene", "vehicle", "sequences", "suite"}

PITCH_COLUMNS = ("pitch", "imu_pitch")


def fan_out(func, jobs: list, workers: int = 1) -> list:
    """Map func over jobs, in a process pool when workers > 1; order is preserved"""
    if workers <= 1 or len(jobs) <= 1:
        return [func(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, jobs))


# =============================================================================
# CONFIGURATION
# =============================================================================


def pipeline_config(overrides: dict | None = None) -> PipelineConfig:
    """Settings defaults layered under a JSON document of overrides"""
    defaults = settings.ROAD_ANOMALY
    overrides = dict(overrides or {})
    estimator = {name: defaults[key] for key, name in ESTIMATOR_KEYS.items()}
    estimator.update(overrides.pop("estimator", None) or {})
    values = {
        "window": defaults["WINDOW"],
        "threshold": defaults["THRESHOLD"],
        "nms_radius": defaults["NMS_RADIUS"],
        "compensation": defaults["COMPENSATION"],
        "pitch_source": "visual",
    }
    unknown = set(overrides) - set(values)
    if unknown:
        raise ConfigError(f"unknown run options: {', '.join(sorted(unknown))}")
    values.update(overrides)
    try:
        values["window"] = int(values["window"])
        values["threshold"] = float(values["threshold"])
        if values["nms_radius"] is not None:
            values["nms_radius"] = int(values["nms_radius"])
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid run option: {e}") from e
    return PipelineConfig(**values, estimator=EstimatorConfig.from_dict(estimator))


def calibration_from_dict(data: dict | None) -> tuple[CameraIntrinsics, TranslationDirection]:
    values = {**DEFAULT_CALIBRATION, **(data or {})}
    t = values.pop("t", (0.0, 0.0, 1.0))
    unknown = set(values) - set(DEFAULT_CALIBRATION)
    if unknown:
        raise ConfigError(f"unknown calibration keys: {', '.join(sorted(unknown))}")
    try:
        return CameraIntrinsics.from_dict(values), TranslationDirection.from_vector(t)
    except (TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"invalid calibration: {e}") from e


# =============================================================================
# DATASETS
# =============================================================================


@dataclass
class Dataset:
    root: Path
    intr: CameraIntrinsics
    t: TranslationDirection
    sequences: pd.DataFrame
    labels: list[LabeledEvent]

    @property
    def ids(self) -> list[str]:
        return sorted(self.sequences["sequence"])

    @property
    def subsets(self) -> dict[str, str]:
        return dict(zip(self.sequences["sequence"], self.sequences["subset"]))

    @property
    def distances(self) -> dict[str, float]:
        return dict(zip(self.sequences["sequence"], self.sequences["distance"].astype(float)))


def load_dataset(root, calibration=None, require_labels: bool = False) -> Dataset:
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(2, "dataset directory not found", str(root))
    intr, t = formats.read_calibration(Path(calibration) if calibration else root / "calibration.txt")

    manifest = root / "sequences.txt"
    if manifest.exists():
        sequences = formats.read_sequences(manifest)
    else:
        found = sorted(p.parent.name for p in root.glob("*/track.txt"))
        sequences = pd.DataFrame({"sequence": found, "distance": np.nan, "subset": "easy", "frames": 0})
        logger.info("dataset %s has no manifest, found %d sequence(s)", root, len(found))

    labels_path = root / "labels.txt"
    labels = []
    if labels_path.exists():
        known = set(sequences["sequence"])
        for row in formats.read_labels(labels_path).itertuples(index=False):
            if row.sequence not in known:
                raise MissingSequence(row.sequence)
            labels.append(LabeledEvent(row.sequence, int(row.apex_frame), row.label))
    elif require_labels:
        raise FileNotFoundError(2, "labels file not found", str(labels_path))
    return Dataset(root, intr, t, sequences, labels)


@dataclass(frozen=True)
class SynthJob:
    output: Path
    plan: SequencePlan
    scene: SceneConfig
    vehicle: VehicleConfig
    intr: CameraIntrinsics
    t: TranslationDirection


def _synthesize_one(job: SynthJob) -> tuple[str, float, str, int]:
    vehicle = job.vehicle if job.plan.distance is None else replace(job.vehicle, distance=job.plan.distance)
    generated = generate_sequence(job.scene, job.plan.bumps, vehicle, job.intr, job.t)
    directory = job.output / job.plan.sequence
    formats.write_correspondences(directory / "correspondences.txt", generated.correspondences)
    formats.write_track(directory / "track.txt", generated.track)
    formats.write_pitch(directory / "pitch.txt", generated.truth)
    distance = float(np.mean(vehicle.distances(job.scene.duration)))
    return job.plan.sequence, distance, job.plan.subset, job.scene.duration


def _sequence_plans(doc: dict, scene: SceneConfig, window: int) -> list[SequencePlan]:
    plans = []
    for i, item in enumerate(doc.get("sequences") or []):
        item = dict(item)
        try:
            plan = SequencePlan(
                sequence=str(item.pop("id", f"seq-{i:03d}")),
                bumps=tuple(config_from_dict(BumpProfile, b) for b in item.pop("bumps", [])),
                distance=float(item["distance"]) if item.get("distance") is not None else None,
                subset=str(item.pop("subset", "easy")),
                background_frames=tuple(int(f) for f in item.pop("background_frames", [])),
            )
        except (TypeError, ValueError) as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"sequence {i}: {e}") from e
        item.pop("distance", None)
        if item:
            raise ConfigError(f"sequence {plan.sequence}: unknown keys {', '.join(sorted(item))}")
        plans.append(plan)

    suites = doc.get("suite") or []
    for suite in [suites] if isinstance(suites, dict) else suites:
        suite = dict(suite)
        kind = suite.pop("kind", None)
        suite.setdefault("window", window)
        try:
            plans.extend(build_suite(kind, scene, **suite))
        except TypeError as e:
            raise ConfigError(f"suite {kind!r}: {e}") from e

    if not plans:
        plans = [SequencePlan("seq-000")]
    ids = [s.sequence for s in plans]
    if len(set(ids)) != len(ids):
        raise ConfigError("duplicate sequence ids in synth document")
    return plans


def synthesize_dataset(doc: dict, output, seed: int | None = None, workers: int = 1) -> Dataset:
    """Write calibration, manifest, labels and per-sequence files for a synth document"""
    if not isinstance(doc, dict):
        raise ConfigError("synth document must be a JSON object")
    unknown = set(doc) - SYNTH_KEYS
    if unknown:
        raise ConfigError(f"unknown synth keys: {', '.join(sorted(unknown))}")
    output = Path(output)
    intr, t = calibration_from_dict(doc.get("calibration"))
    scene = config_from_dict(SceneConfig, doc.get("scene"))
    if seed is not None:
        scene = replace(scene, seed=seed)
    vehicle = config_from_dict(VehicleConfig, doc.get("vehicle"))
    plans = _sequence_plans(doc, scene, settings.ROAD_ANOMALY["WINDOW"])

    jobs = [SynthJob(output, plan, replace(scene, seed=scene.seed + i), vehicle, intr, t) for i, plan in enumerate(plans)]
    output.mkdir(parents=True, exist_ok=True)
    rows = fan_out(_synthesize_one, jobs, workers)

    labels = []
    for plan in plans:
        labels.extend(LabeledEvent(plan.sequence, f, ANOMALY) for f in plan.apex_frames)
        labels.extend(LabeledEvent(plan.sequence, f, BACKGROUND) for f in plan.background_frames)
    labels.sort(key=lambda e: (e.sequence, e.apex_frame, e.label))

    formats.write_calibration(output / "calibration.txt", intr, t)
    formats.write_sequences(output / "sequences.txt", sorted(rows))
    formats.write_labels(output / "labels.txt", labels)
    logger.info("synth: wrote %d sequence(s), %d label(s) to %s", len(rows), len(labels), output)
    return load_dataset(output)


# =============================================================================
# DETECTION
# =============================================================================


@dataclass(frozen=True)
class DetectJob:
    root: Path
    output: Path
    sequence: str
    intr: CameraIntrinsics
    t: TranslationDirection
    cfg: PipelineConfig
    external_pitch: str | None = None
    external_column: str = "imu_pitch"


@dataclass(frozen=True)
class DetectSummary:
    sequence: str
    frames: int
    detections: tuple[tuple[int, float], ...]
    held: int
    fps: float


def read_external_pitch(path, column: str = "imu_pitch") -> np.ndarray:
    if column not in PITCH_COLUMNS:
        raise ConfigError(f"external pitch column must be one of {PITCH_COLUMNS}, got {column!r}")
    return formats.read_pitch(path)[column].to_numpy(dtype=float)


def _detect_one(job: DetectJob) -> DetectSummary:
    directory = job.root / job.sequence
    track = formats.read_track(directory / "track.txt")
    sets = formats.read_correspondences(directory / "correspondences.txt")
    external = None
    if job.external_pitch:
        path = Path(job.external_pitch)
        external = read_external_pitch(path if path.is_absolute() else directory / path, job.external_column)

    response, detections = run_pipeline(track, sets, job.intr, job.t, job.cfg, external_pitch=external)
    formats.write_response(job.output / job.sequence / "response.txt", response)
    formats.write_detections(job.output / job.sequence / "detections.txt", detections)
    return DetectSummary(
        sequence=job.sequence,
        frames=track.frames,
        detections=tuple((d.frame, d.response) for d in detections),
        held=int(response.pitch.held.sum()),
        fps=track.fps,
    )


def run_detection(
    root,
    output,
    cfg: PipelineConfig,
    sequences: list[str] | None = None,
    calibration=None,
    workers: int = 1,
    external_pitch: str | None = None,
    external_column: str = "imu_pitch",
    seed: int = 0,
) -> list[DetectSummary]:
    """Run the pipeline on every selected sequence; results sorted by sequence id"""
    if cfg.pitch_source != "visual" and not external_pitch:
        raise ConfigError(f"pitch_source={cfg.pitch_source!r} needs --external-pitch")
    dataset = load_dataset(root, calibration)
    ids = dataset.ids
    if sequences:
        for sequence in sequences:
            if sequence not in ids:
                raise MissingSequence(sequence)
        ids = sorted(set(sequences))
    output = Path(output)
    jobs = [DetectJob(dataset.root, output, s, dataset.intr, dataset.t, cfg, external_pitch, external_column) for s in ids]
    summaries = fan_out(_detect_one, jobs, workers)

    formats.write_key_values(
        output / "run.txt",
        "run",
        {
            "window": cfg.window,
            "threshold": cfg.threshold,
            "nms_radius": cfg.radius,
            "compensation": cfg.compensation,
            "pitch_source": cfg.pitch_source,
            "seed": seed,
            "fps": summaries[0].fps if summaries else 30.0,
            "sequences": len(summaries),
        },
    )
    logger.info(
        "detect: %d sequence(s), %d detection(s)",
        len(summaries),
        sum(len(s.detections) for s in summaries),
    )
    return summaries


# =============================================================================
# EVALUATION
# =============================================================================


@dataclass
class RunEvaluation:
    name: str
    reports: dict
    skipped: dict
    intensity: dict
    distances: list[tuple[str, float, float, float]]


def read_run(run) -> tuple[dict[str, str], dict]:
    run = Path(run)
    meta = formats.parse_key_values(run / "run.txt")
    responses = {p.parent.name: formats.read_response(p) for p in sorted(run.glob("*/response.txt"))}
    return meta, responses


def distance_rows(dataset: Dataset, responses: dict, scored, events, pulse_duration: int) -> list[tuple[str, float, float, float]]:
    """Apex response and background level of each anomaly with a known distance.

    The background is the median response outside the frames a pulse of
    `pulse_duration` frames can reach through the trailing window.
    """
    distances = dataset.distances
    rows = []
    for event, score in zip(events, scored):
        distance = distances.get(event.sequence, math.nan)
        if not event.positive or not math.isfinite(distance):
            continue
        response = responses[event.sequence]
        outside = ~event_mask(len(response), event.apex_frame, response.window, pulse_duration) & ~np.isnan(response.s)
        background = float(np.median(response.s[outside])) if outside.any() else math.nan
        rows.append((event.sequence, distance, score.score, background))
    return rows


def evaluate_runs(
    root,
    runs: list,
    output,
    folds: int = 5,
    seed: int = 0,
    edges=None,
    fpr_threshold: float | None = None,
    pulse_duration: int | None = None,
) -> list[RunEvaluation]:
    dataset = load_dataset(root, require_labels=True)
    events = dataset.labels
    if not events:
        raise SingleClassError("labels file holds no events")
    edges = edges if edges is not None else settings.ROAD_ANOMALY["INTENSITY_EDGES"]
    anomalous = {e.sequence for e in events if e.positive}
    output = Path(output)

    results = []
    names: set[str] = set()
    for i, run in enumerate(runs):
        run = Path(run)
        meta, responses = read_run(run)
        name = run.name or f"run{i}"
        if name in names:
            name = f"{name}-{i}"
        names.add(name)

        scored = score_events(events, responses)
        subsets = evaluate_subsets(events, scored, dataset.subsets, folds, seed)
        negatives = [responses[s] for s in sorted(responses) if s not in anomalous]
        threshold = fpr_threshold if fpr_threshold is not None else float(meta.get("threshold", settings.ROAD_ANOMALY["THRESHOLD"]))
        fps = float(meta.get("fps", 30.0))
        intensity = fpr_vs_rotation_intensity(negatives, threshold, edges, fps)
        duration = pulse_duration or default_bump_duration(fps=fps)
        distances = distance_rows(dataset, responses, scored, events, duration)

        directory = output / name
        formats.write_report(directory / "report.txt", subsets, meta)
        formats.write_roc(directory / "roc.txt", subsets.reports["all"].roc)
        formats.write_intensity(directory / "fpr_intensity.txt", intensity)
        formats.write_distance_table(directory / "response_distance.txt", distances)
        results.append(RunEvaluation(name, subsets.reports, subsets.skipped, intensity, distances))
        logger.info("eval %s: AUC %.4f over %d event(s)", name, subsets.reports["all"].auc, len(scored))
    return results


# =============================================================================
# SIGNAL MODEL
# =============================================================================


def fit_model_table(path, f: float, delta: float, column: str = "s_apex"):
    table = formats.read_distance_table(path)
    if column not in ("s_apex", "s_background"):
        raise ConfigError(f"column must be s_apex or s_background, got {column!r}")
    table = table[np.isfinite(table["distance"]) & np.isfinite(table[column])]
    samples = list(zip(table["distance"].astype(float), table[column].astype(float)))
    return fit_signal_model(samples, f, delta)


def shape_factor(duration: int | None, window: int) -> float | None:
    return pulse_response_factor(duration, window) if duration else None


# =============================================================================
# API PAYLOADS
# =============================================================================


def _finite(values) -> list:
    return [float(v) if math.isfinite(v) else None for v in np.asarray(values, dtype=float).tolist()]


def _track_from_payload(data: dict) -> VehicleTrack:
    y = np.asarray(data["y"], dtype=float)
    x = np.asarray(data.get("x", np.zeros_like(y)), dtype=float)
    valid = np.asarray(data.get("valid", np.isfinite(y)), dtype=bool)
    if y.ndim == 1:
        x, y, valid = x.reshape(-1, 1), y.reshape(-1, 1), valid.reshape(-1, 1)
    return VehicleTrack(x=x, y=y, valid=valid, fps=float(data.get("fps", 30.0)))


def detect_payload(data: dict) -> dict:
    """Run the pipeline on an in-memory JSON document"""
    try:
        intr, t = calibration_from_dict(data.get("calibration"))
        cfg = pipeline_config(data.get("config"))
        track = _track_from_payload(data["track"])
        sets = [
            CorrespondenceSet(frame=k, p0=item.get("p0", []), p1=item.get("p1", []), is_static=item.get("is_static"))
            for k, item in enumerate(data.get("correspondences") or [])
        ]
        response, detections = run_pipeline(track, sets, intr, t, cfg, external_pitch=data.get("external_pitch"))
    except KeyError as e:
        return {"ok": False, "error": f"missing field {e}"}
    except (RoadAnomalyError, ValueError, TypeError) as e:
        return {"ok": False, "error": str(e)}
    return {
        "ok": True,
        "detections": [{"frame": d.frame, "response": d.response, "window": list(d.window)} for d in detections],
        "response": {
            "y_hat": _finite(response.y_hat),
            "y_comp": _finite(response.y_comp),
            "phi_cum": _finite(response.pitch.phi_cum),
            "s": _finite(response.s),
            "held": response.pitch.held.astype(int).tolist(),
            "interpolated": response.interpolated.astype(int).tolist(),
        },
    }


def fit_model_payload(data: dict) -> dict:
    try:
        fit = fit_signal_model(data["samples"], float(data["f"]), float(data["delta"]))
        factor = shape_factor(data.get("pulse_duration"), int(data.get("window", settings.ROAD_ANOMALY["WINDOW"])))
    except KeyError as e:
        return {"ok": False, "error": f"missing field {e}"}
    except (RoadAnomalyError, ValueError, TypeError) as e:
        return {"ok": False, "error": str(e)}
    result = {"ok": True, "alpha": fit.alpha, "beta": fit.beta, "residual": fit.residual, "r_squared": fit.r_squared}
    if factor:
        result["shape_factor"] = factor
        result["alpha_normalized"] = fit.alpha / factor
    return result
