"""
Plain-text table formats for datasets and runs.

Every table starts with a version comment, optionally carrying
`key=value` metadata, followed by a tab-separated header line:

    # road-anomaly correspondences v1 pairs=299
    frame	point_id	x0	y0	x1	y1	is_static

Angles are written in radians with 9 significant digits, pixels with 4
decimals. Calibration files are `key = value` lines.
"""

import logging
import math
from pathlib import Path

import numpy as np
import pandas as pd

from core.exceptions import FormatError
from core.geometry import CameraIntrinsics, CorrespondenceSet, TranslationDirection
from core.signal import MAX_POINTS, ResponseSeries, VehicleTrack

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
MAGIC = "road-anomaly"

ANGLE = "%.9g"
PIXEL = "%.4f"
INTEGER = "%d"

CORRESPONDENCE_COLUMNS = {"frame": INTEGER, "point_id": INTEGER, "x0": PIXEL, "y0": PIXEL, "x1": PIXEL, "y1": PIXEL, "is_static": INTEGER}
TRACK_COLUMNS = {"frame": INTEGER, "point_id": INTEGER, "x": PIXEL, "y": PIXEL, "valid": INTEGER}
LABEL_COLUMNS = {"sequence": "%s", "apex_frame": INTEGER, "label": "%s"}
SEQUENCE_COLUMNS = {"sequence": "%s", "distance": "%.3f", "subset": "%s", "frames": INTEGER}
PITCH_COLUMNS = {"frame": INTEGER, "pitch": ANGLE, "relative_pitch": ANGLE, "displacement": "%.6f", "imu_pitch": ANGLE}
DETECTION_COLUMNS = {"frame": INTEGER, "response": PIXEL, "window_start": INTEGER, "window_end": INTEGER}
RESPONSE_COLUMNS = {
    "frame": INTEGER,
    "y_hat": PIXEL,
    "interpolated": INTEGER,
    "y_comp": PIXEL,
    "phi_rel": ANGLE,
    "phi_cum": ANGLE,
    "angle": ANGLE,
    "s": PIXEL,
    "s_uncompensated": PIXEL,
    "n_pairs": INTEGER,
    "held": INTEGER,
    "converged": INTEGER,
}
DISTANCE_COLUMNS = {"sequence": "%s", "distance": "%.3f", "s_apex": PIXEL, "s_background": PIXEL}
ROC_COLUMNS = {"fpr": "%.6f", "tpr": "%.6f", "threshold": PIXEL}
INTENSITY_COLUMNS = {"variant": "%s", "low": ANGLE, "high": ANGLE, "fpr": "%.6f", "count": INTEGER}

CALIBRATION_KEYS = ("fx", "fy", "cx", "cy", "width", "height")
TRANSLATION_KEYS = ("t_x", "t_y", "t_z")


def _format_cell(fmt: str, value) -> str:
    if fmt == INTEGER:
        return "%d" % int(value)
    if fmt == "%s":
        return str(value)
    if isinstance(value, float) and not math.isfinite(value):
        return "nan" if math.isnan(value) else ("inf" if value > 0 else "-inf")
    return fmt % value


def write_table(path, kind: str, frame: pd.DataFrame, columns: dict[str, str], **meta) -> Path:
    """Write a versioned tab-separated table with fixed per-column formats"""
    path = Path(path)
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise FormatError(f"{kind}: missing columns {missing}")
    header = " ".join([f"# {MAGIC} {kind} v{FORMAT_VERSION}", *(f"{k}={v}" for k, v in meta.items())])
    formatted = pd.DataFrame({c: [_format_cell(fmt, v) for v in frame[c].tolist()] for c, fmt in columns.items()}, columns=list(columns))
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        formatted.to_csv(fh, sep="\t", index=False, lineterminator="\n")
    return path


def read_header(path) -> tuple[str, dict[str, str]]:
    """Kind and metadata of the version comment"""
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        first = fh.readline().strip()
    tokens = first.lstrip("#").split()
    if not first.startswith("#") or len(tokens) < 3 or tokens[0] != MAGIC:
        raise FormatError(f"{path}: missing '# {MAGIC} <kind> v{FORMAT_VERSION}' header")
    if tokens[2] != f"v{FORMAT_VERSION}":
        raise FormatError(f"{path}: unsupported format version {tokens[2]}")
    meta = dict(token.split("=", 1) for token in tokens[3:] if "=" in token)
    return tokens[1], meta


def read_table(path, kind: str, columns: dict[str, str]) -> tuple[pd.DataFrame, dict[str, str]]:
    path = Path(path)
    found, meta = read_header(path)
    if found != kind:
        raise FormatError(f"{path}: expected a {kind} table, found {found}")
    dtypes = {c: str for c, fmt in columns.items() if fmt == "%s"}
    try:
        frame = pd.read_csv(path, sep="\t", comment="#", dtype=dtypes, keep_default_na=True)
    except pd.errors.EmptyDataError as e:
        raise FormatError(f"{path}: empty table") from e
    except (pd.errors.ParserError, ValueError) as e:
        raise FormatError(f"{path}: {e}") from e
    if list(frame.columns) != list(columns):
        raise FormatError(f"{path}: columns {list(frame.columns)} do not match {list(columns)}")
    return frame, meta


# =============================================================================
# CALIBRATION
# =============================================================================


def write_calibration(path, intr: CameraIntrinsics, t: TranslationDirection) -> Path:
    path = Path(path)
    values = {**intr.as_dict(), **dict(zip(TRANSLATION_KEYS, t.t))}
    lines = [f"# {MAGIC} calibration v{FORMAT_VERSION}"]
    for key, value in values.items():
        lines.append(f"{key} = {value:d}" if isinstance(value, int) else f"{key} = {value:.9g}")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def parse_key_values(path) -> dict[str, str]:
    values = {}
    for number, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"{path}:{number}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = value
    return values


def read_calibration(path) -> tuple[CameraIntrinsics, TranslationDirection]:
    values = parse_key_values(path)
    intr = CameraIntrinsics.from_dict(values)
    try:
        t = [float(values.get(k, default)) for k, default in zip(TRANSLATION_KEYS, (0.0, 0.0, 1.0))]
    except ValueError as e:
        raise FormatError(f"{path}: invalid translation: {e}") from e
    return intr, TranslationDirection.from_vector(t)


# =============================================================================
# SEQUENCE DATA
# =============================================================================


def write_correspondences(path, sets: list[CorrespondenceSet]) -> Path:
    rows = []
    for cs in sets:
        for point_id, ((x0, y0), (x1, y1), static) in enumerate(zip(cs.p0, cs.p1, cs.is_static)):
            rows.append((cs.frame, point_id, x0, y0, x1, y1, int(static)))
    frame = pd.DataFrame(rows, columns=list(CORRESPONDENCE_COLUMNS))
    return write_table(path, "correspondences", frame, CORRESPONDENCE_COLUMNS, pairs=len(sets))


def read_correspondences(path) -> list[CorrespondenceSet]:
    """One set per frame pair; pairs without rows become empty sets"""
    frame, meta = read_table(path, "correspondences", CORRESPONDENCE_COLUMNS)
    declared = int(meta["pairs"]) if "pairs" in meta else None
    n_sets = declared if declared is not None else (int(frame["frame"].max()) + 1 if len(frame) else 0)
    if len(frame) and (frame["frame"].min() < 0 or frame["frame"].max() >= n_sets):
        raise FormatError(f"{path}: frame index outside 0..{n_sets - 1}")
    groups = {int(k): g for k, g in frame.groupby("frame", sort=True)}
    sets = []
    for k in range(n_sets):
        group = groups.get(k)
        if group is None:
            sets.append(CorrespondenceSet.empty(k))
            continue
        sets.append(
            CorrespondenceSet(
                frame=k,
                p0=group[["x0", "y0"]].to_numpy(dtype=float),
                p1=group[["x1", "y1"]].to_numpy(dtype=float),
                is_static=group["is_static"].to_numpy() != 0,
            )
        )
    return sets


def write_track(path, track: VehicleTrack) -> Path:
    frames, points = track.y.shape
    frame = pd.DataFrame(
        {
            "frame": np.repeat(np.arange(frames), points),
            "point_id": np.tile(np.arange(points), frames),
            "x": track.x.ravel(),
            "y": track.y.ravel(),
            "valid": track.valid.ravel().astype(int),
        }
    )
    return write_table(path, "track", frame, TRACK_COLUMNS, frames=frames, fps=f"{track.fps:g}")


def read_track(path) -> VehicleTrack:
    frame, meta = read_table(path, "track", TRACK_COLUMNS)
    if not len(frame):
        raise FormatError(f"{path}: track has no rows")
    frames = int(meta.get("frames", int(frame["frame"].max()) + 1))
    points = int(frame["point_id"].max()) + 1
    if points > MAX_POINTS:
        raise FormatError(f"{path}: {points} points per frame, limit is {MAX_POINTS}")
    if frame["frame"].min() < 0 or frame["frame"].max() >= frames or frame["point_id"].min() < 0:
        raise FormatError(f"{path}: frame or point index out of range")
    x = np.full((frames, points), np.nan)
    y = np.full((frames, points), np.nan)
    valid = np.zeros((frames, points), dtype=bool)
    f = frame["frame"].to_numpy(dtype=int)
    p = frame["point_id"].to_numpy(dtype=int)
    x[f, p] = frame["x"].to_numpy(dtype=float)
    y[f, p] = frame["y"].to_numpy(dtype=float)
    valid[f, p] = frame["valid"].to_numpy() != 0
    return VehicleTrack(x=x, y=y, valid=valid, fps=float(meta.get("fps", 30.0)))


def write_pitch(path, truth) -> Path:
    n = len(truth.pitch)
    frame = pd.DataFrame(
        {
            "frame": np.arange(n),
            "pitch": truth.pitch,
            "relative_pitch": np.concatenate([[0.0], truth.relative_pitch]),
            "displacement": truth.displacement,
            "imu_pitch": truth.imu_pitch,
        }
    )
    return write_table(path, "pitch", frame, PITCH_COLUMNS)


def read_pitch(path) -> pd.DataFrame:
    frame, _ = read_table(path, "pitch", PITCH_COLUMNS)
    if not frame["frame"].equals(pd.Series(np.arange(len(frame)), name="frame")):
        raise FormatError(f"{path}: pitch frames must be 0..{len(frame) - 1} in order")
    return frame


def write_labels(path, events) -> Path:
    frame = pd.DataFrame([(e.sequence, e.apex_frame, e.label) for e in events], columns=list(LABEL_COLUMNS))
    return write_table(path, "labels", frame, LABEL_COLUMNS)


def read_labels(path) -> pd.DataFrame:
    frame, _ = read_table(path, "labels", LABEL_COLUMNS)
    return frame


def write_sequences(path, rows: list[tuple[str, float, str, int]]) -> Path:
    frame = pd.DataFrame(rows, columns=list(SEQUENCE_COLUMNS))
    return write_table(path, "sequences", frame, SEQUENCE_COLUMNS)


def read_sequences(path) -> pd.DataFrame:
    frame, _ = read_table(path, "sequences", SEQUENCE_COLUMNS)
    if frame["sequence"].duplicated().any():
        raise FormatError(f"{path}: duplicate sequence ids")
    return frame


# =============================================================================
# RUN OUTPUT
# =============================================================================


def write_response(path, response: ResponseSeries) -> Path:
    pitch = response.pitch
    n = len(response)
    frame = pd.DataFrame(
        {
            "frame": np.arange(n),
            "y_hat": response.y_hat,
            "interpolated": np.asarray(response.interpolated, dtype=int),
            "y_comp": response.y_comp,
            "phi_rel": pitch.phi_rel if pitch is not None else np.zeros(n),
            "phi_cum": pitch.phi_cum if pitch is not None else np.zeros(n),
            "angle": response.compensation_angle if response.compensation_angle is not None else np.zeros(n),
            "s": response.s,
            "s_uncompensated": response.s_uncompensated,
            "n_pairs": [e.n_pairs_used for e in pitch] if pitch is not None else np.zeros(n, dtype=int),
            "held": pitch.held.astype(int) if pitch is not None else np.zeros(n, dtype=int),
            "converged": pitch.converged.astype(int) if pitch is not None else np.ones(n, dtype=int),
        }
    )
    return write_table(path, "response", frame, RESPONSE_COLUMNS, window=response.window, compensated=int(response.compensated))


def read_response(path) -> ResponseSeries:
    frame, meta = read_table(path, "response", RESPONSE_COLUMNS)
    if "window" not in meta:
        raise FormatError(f"{path}: response header lacks window=")
    return ResponseSeries(
        y_hat=frame["y_hat"].to_numpy(dtype=float),
        y_comp=frame["y_comp"].to_numpy(dtype=float),
        s=frame["s"].to_numpy(dtype=float),
        window=int(meta["window"]),
        s_uncompensated=frame["s_uncompensated"].to_numpy(dtype=float),
        interpolated=frame["interpolated"].to_numpy(dtype=int) != 0,
        compensation_angle=frame["angle"].to_numpy(dtype=float),
        compensated=meta.get("compensated", "1") == "1",
    )


def write_detections(path, detections) -> Path:
    frame = pd.DataFrame(
        [(d.frame, d.response, d.window[0], d.window[1]) for d in detections],
        columns=list(DETECTION_COLUMNS),
    )
    return write_table(path, "detections", frame, DETECTION_COLUMNS)


def read_detections(path) -> pd.DataFrame:
    frame, _ = read_table(path, "detections", DETECTION_COLUMNS)
    return frame


def write_key_values(path, kind: str, values: dict) -> Path:
    path = Path(path)
    lines = [f"# {MAGIC} {kind} v{FORMAT_VERSION}"]
    for key, value in values.items():
        if isinstance(value, bool):
            value = str(value).lower()
        elif isinstance(value, float):
            value = f"{value:.9g}"
        elif isinstance(value, (list, tuple)):
            value = ",".join(f"{v:.9g}" if isinstance(v, float) else str(v) for v in value)
        lines.append(f"{key} = {value}")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def write_report(path, subsets, meta: dict) -> Path:
    """Metrics per subset as `[subset]` sections of `key = value` lines"""
    path = Path(path)
    lines = [f"# {MAGIC} report v{FORMAT_VERSION}"]
    lines += [f"{key} = {meta[key]}" for key in ("compensation", "pitch_source", "window", "threshold") if key in meta]
    for name, report in subsets.reports.items():
        lines += [
            "",
            f"[{name}]",
            f"auc = {report.auc:.6f}",
            f"balanced_accuracy = {report.balanced_accuracy[0]:.6f}",
            f"balanced_accuracy_std = {report.balanced_accuracy[1]:.6f}",
            f"f_score = {report.f_score[0]:.6f}",
            f"f_score_std = {report.f_score[1]:.6f}",
            f"thresholds = {','.join(PIXEL % v for v in report.thresholds)}",
            f"folds = {report.folds}",
            f"stratified = {str(report.stratified).lower()}",
            f"seed = {report.seed}",
            f"positives = {report.positives}",
            f"negatives = {report.negatives}",
        ]
    for name, reason in subsets.skipped.items():
        lines += ["", f"[{name}]", f"skipped = {reason}"]
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_report(path) -> dict[str, dict[str, str]]:
    sections: dict[str, dict[str, str]] = {"": {}}
    current = ""
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1]
            sections[current] = {}
            continue
        key, value = (part.strip() for part in line.split("=", 1))
        sections[current][key] = value
    return sections


def write_distance_table(path, rows) -> Path:
    frame = pd.DataFrame(rows, columns=list(DISTANCE_COLUMNS))
    return write_table(path, "response_distance", frame, DISTANCE_COLUMNS)


def read_distance_table(path) -> pd.DataFrame:
    frame, _ = read_table(path, "response_distance", DISTANCE_COLUMNS)
    return frame


def write_roc(path, roc) -> Path:
    frame = pd.DataFrame(roc, columns=list(ROC_COLUMNS))
    return write_table(path, "roc", frame, ROC_COLUMNS)


def write_intensity(path, curves) -> Path:
    rows = [(name, b.low, b.high, b.fpr, b.count) for name, bins in curves.items() for b in bins]
    frame = pd.DataFrame(rows, columns=list(INTENSITY_COLUMNS))
    return write_table(path, "fpr_intensity", frame, INTENSITY_COLUMNS)
