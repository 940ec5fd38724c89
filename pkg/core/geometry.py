"""
Pinhole camera model and the pitch-parameterised fundamental matrix.

Conventions: image origin top-left, x right, y DOWN. Camera frame x right,
y down, z forward. A positive pitch angle rotates scene points by R(phi)
about the camera x-axis, which tilts the optical axis downward in the scene
and moves static content UP in the image (towards smaller y). The sign of
the image-row compensation in core.signal.compensate follows from this.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError, DegenerateGeometry

# Sampson denominators below this (squared pixels) mark a point on the epipole
DEGENERATE_DENOMINATOR = 1e-20


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ConfigError(f"focal lengths must be positive (fx={self.fx}, fy={self.fy})")
        if not (0 <= self.cx < self.width):
            raise ConfigError(f"cx={self.cx} outside [0, {self.width})")
        if not (0 <= self.cy < self.height):
            raise ConfigError(f"cy={self.cy} outside [0, {self.height})")

    @classmethod
    def from_dict(cls, data: dict) -> "CameraIntrinsics":
        try:
            return cls(
                fx=float(data["fx"]),
                fy=float(data["fy"]),
                cx=float(data["cx"]),
                cy=float(data["cy"]),
                width=int(data["width"]),
                height=int(data["height"]),
            )
        except KeyError as e:
            raise ConfigError(f"calibration is missing {e.args[0]!r}") from e
        except (TypeError, ValueError) as e:
            raise ConfigError(f"invalid calibration value: {e}") from e

    @property
    def f(self) -> float:
        """Focal length used for image-row compensation"""
        return self.fy

    @property
    def K(self) -> np.ndarray:
        return assemble_K(self)

    def as_dict(self) -> dict:
        return {
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "width": self.width,
            "height": self.height,
        }


@dataclass(frozen=True)
class TranslationDirection:
    """Unit forward direction of the ego motion, in camera coordinates"""

    t: tuple[float, float, float] = (0.0, 0.0, 1.0)

    def __post_init__(self):
        if len(self.t) != 3 or not all(math.isfinite(v) for v in self.t):
            raise ConfigError(f"translation must be a finite 3-vector, got {self.t}")
        norm = math.sqrt(sum(v * v for v in self.t))
        if abs(norm - 1.0) > 1e-9:
            raise ConfigError(f"translation direction must have unit norm, got {norm:.12g}")

    @classmethod
    def from_vector(cls, vector) -> "TranslationDirection":
        v = np.asarray(vector, dtype=float).reshape(3)
        norm = float(np.linalg.norm(v))
        if not norm > 0:
            raise ConfigError("translation direction must be non-zero")
        return cls(tuple(float(c) for c in v / norm))

    @property
    def vector(self) -> np.ndarray:
        return np.array(self.t, dtype=float)


@dataclass(frozen=True)
class PointPair:
    p0: tuple[float, float]
    p1: tuple[float, float]
    is_static: bool = True


@dataclass
class CorrespondenceSet:
    """Matches between frame `frame` and frame `frame + 1`"""

    frame: int
    p0: np.ndarray
    p1: np.ndarray
    is_static: np.ndarray = field(default=None)

    def __post_init__(self):
        self.p0 = np.asarray(self.p0, dtype=float).reshape(-1, 2)
        self.p1 = np.asarray(self.p1, dtype=float).reshape(-1, 2)
        if self.is_static is None:
            self.is_static = np.ones(len(self.p0), dtype=bool)
        self.is_static = np.asarray(self.is_static, dtype=bool).reshape(-1)
        if not (len(self.p0) == len(self.p1) == len(self.is_static)):
            raise ConfigError(
                f"frame {self.frame}: p0, p1 and is_static lengths differ "
                f"({len(self.p0)}, {len(self.p1)}, {len(self.is_static)})"
            )

    @classmethod
    def from_pairs(cls, frame: int, pairs: list[PointPair]) -> "CorrespondenceSet":
        if not pairs:
            return cls.empty(frame)
        return cls(
            frame=frame,
            p0=[p.p0 for p in pairs],
            p1=[p.p1 for p in pairs],
            is_static=[p.is_static for p in pairs],
        )

    @classmethod
    def empty(cls, frame: int) -> "CorrespondenceSet":
        return cls(frame=frame, p0=np.empty((0, 2)), p1=np.empty((0, 2)), is_static=np.empty(0, dtype=bool))

    def __len__(self):
        return len(self.p0)

    def pairs(self) -> list[PointPair]:
        return [
            PointPair(tuple(a), tuple(b), bool(s))
            for a, b, s in zip(self.p0.tolist(), self.p1.tolist(), self.is_static.tolist())
        ]

    def static(self) -> tuple[np.ndarray, np.ndarray]:
        """Static pairs with finite coordinates, in input order"""
        keep = self.is_static & np.isfinite(self.p0).all(axis=1) & np.isfinite(self.p1).all(axis=1)
        return self.p0[keep], self.p1[keep]


def homogenize(points: np.ndarray) -> np.ndarray:
    """(N, 2) pixels -> (N, 3) with w = 1"""
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    return np.hstack([points, np.ones((len(points), 1))])


def assemble_K(intr: CameraIntrinsics) -> np.ndarray:
    return np.array(
        [
            [intr.fx, 0.0, intr.cx],
            [0.0, intr.fy, intr.cy],
            [0.0, 0.0, 1.0],
        ]
    )


def inverse_K(intr: CameraIntrinsics) -> np.ndarray:
    # closed form of the upper-triangular inverse
    return np.array(
        [
            [1.0 / intr.fx, 0.0, -intr.cx / intr.fx],
            [0.0, 1.0 / intr.fy, -intr.cy / intr.fy],
            [0.0, 0.0, 1.0],
        ]
    )


def skew(v) -> np.ndarray:
    x, y, z = np.asarray(v, dtype=float).reshape(3)
    return np.array(
        [
            [0.0, -z, y],
            [z, 0.0, -x],
            [-y, x, 0.0],
        ]
    )


def pitch_rotation(phi: float) -> np.ndarray:
    """Rotation about the camera x-axis"""
    c, s = math.cos(phi), math.sin(phi)
    return np.array(
        [
            [1.0, 0.0, 0.0],
            [0.0, c, -s],
            [0.0, s, c],
        ]
    )


def pitch_rotation_derivative(phi: float) -> np.ndarray:
    c, s = math.cos(phi), math.sin(phi)
    return np.array(
        [
            [0.0, 0.0, 0.0],
            [0.0, -s, -c],
            [0.0, c, -s],
        ]
    )


# R(phi) = _R_CONST + cos(phi) * _R_COS + sin(phi) * _R_SIN
_R_CONST = np.diag([1.0, 0.0, 0.0])
_R_COS = np.diag([0.0, 1.0, 1.0])
_R_SIN = np.array([[0.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]])


def fundamental_from_pitch(intr: CameraIntrinsics, t: TranslationDirection, phi: float) -> np.ndarray:
    """F(phi) = -K^-T [t]x R(phi) K^-1, unnormalised"""
    K_inv = inverse_K(intr)
    return -K_inv.T @ skew(t.vector) @ pitch_rotation(phi) @ K_inv


def fundamental_basis(intr: CameraIntrinsics, t: TranslationDirection) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Matrices (F0, Fc, Fs) with F(phi) = F0 + cos(phi) Fc + sin(phi) Fs"""
    K_inv = inverse_K(intr)
    M = -K_inv.T @ skew(t.vector)
    return M @ _R_CONST @ K_inv, M @ _R_COS @ K_inv, M @ _R_SIN @ K_inv


def sampson_terms(p0: np.ndarray, p1: np.ndarray, F: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Numerator (p1^T F p0)^2 and the four-partial denominator, per pair"""
    x0 = homogenize(p0)
    x1 = homogenize(p1)
    Fx0 = x0 @ F.T
    Ftx1 = x1 @ F
    algebraic = np.einsum("ij,ij->i", x1, Fx0)
    denominator = Fx0[:, 0] ** 2 + Fx0[:, 1] ** 2 + Ftx1[:, 0] ** 2 + Ftx1[:, 1] ** 2
    return algebraic**2, denominator


def sampson_errors(p0: np.ndarray, p1: np.ndarray, F: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised Sampson error; returns (errors, usable) with NaN where degenerate"""
    numerator, denominator = sampson_terms(p0, p1, F)
    usable = denominator >= DEGENERATE_DENOMINATOR
    errors = np.full(len(numerator), np.nan)
    errors[usable] = numerator[usable] / denominator[usable]
    return errors, usable


def sampson_error(pair: PointPair, F: np.ndarray) -> float:
    numerator, denominator = sampson_terms(np.array([pair.p0]), np.array([pair.p1]), np.asarray(F, dtype=float))
    if denominator[0] < DEGENERATE_DENOMINATOR:
        raise DegenerateGeometry(f"Sampson denominator {denominator[0]:.3g} at p0={pair.p0}")
    return float(numerator[0] / denominator[0])


def project(points: np.ndarray, intr: CameraIntrinsics) -> np.ndarray:
    """(N, 3) camera-frame points -> (N, 2) pixels"""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    return np.column_stack(
        [
            intr.fx * points[:, 0] / points[:, 2] + intr.cx,
            intr.fy * points[:, 1] / points[:, 2] + intr.cy,
        ]
    )


def back_project(pixels: np.ndarray, depth: np.ndarray, intr: CameraIntrinsics) -> np.ndarray:
    """(N, 2) pixels at depths z -> (N, 3) camera-frame points"""
    rays = homogenize(pixels) @ inverse_K(intr).T
    return rays * np.asarray(depth, dtype=float).reshape(-1, 1)
