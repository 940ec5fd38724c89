"""
Robust one-parameter pitch estimation from static correspondences.

The relative pitch between frames t and t+1 minimises
    sum_i rho(S(p_i(t), p_i(t+1), F(phi)))
with rho the Cauchy loss and S the Sampson error, by a Levenberg-Marquardt
iteration on phi warm-started from the previous frame.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields
from typing import Iterable, Sequence

import numpy as np

from .exceptions import ConfigError, DomainError, InsufficientCorrespondences
from .geometry import (
    DEGENERATE_DENOMINATOR,
    CameraIntrinsics,
    CorrespondenceSet,
    PointPair,
    TranslationDirection,
    fundamental_basis,
    homogenize,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EstimatorConfig:
    max_iterations: int = 50
    gradient_tolerance: float = 1e-10
    step_tolerance: float = 1e-9
    initial_damping: float = 1e-3
    damping_up: float = 10.0
    damping_down: float = 0.1
    phi_clamp: float = 0.3
    min_pairs: int = 8
    loss_scale: float = 1.0
    # decay of the cumulative integrator, 1.0 is a plain running sum
    leak: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ConfigError(f"{f.name} must be positive, got {value!r}")
        if self.phi_clamp >= math.pi / 2:
            raise ConfigError(f"phi_clamp must be below pi/2, got {self.phi_clamp}")
        if self.leak > 1.0:
            raise ConfigError(f"leak must be in (0, 1], got {self.leak}")

    @classmethod
    def from_dict(cls, data: dict | None) -> "EstimatorConfig":
        data = dict(data or {})
        known = {f.name: f for f in fields(cls)}
        unknown = set(data) - set(known)
        if unknown:
            raise ConfigError(f"unknown estimator options: {', '.join(sorted(unknown))}")
        kwargs = {}
        for name, value in data.items():
            caster = int if name in ("max_iterations", "min_pairs") else float
            try:
                kwargs[name] = caster(value)
            except (TypeError, ValueError) as e:
                raise ConfigError(f"estimator option {name}: {e}") from e
        return cls(**kwargs)


@dataclass(frozen=True)
class PitchEstimate:
    phi_rel: float
    phi_cum: float
    objective: float
    iterations: int
    n_pairs_used: int
    n_pairs_dropped: int
    converged: bool
    # hold-last policy applied (too few correspondences)
    held: bool = False
    # objective after each accepted step, starting at the warm start
    trace: tuple[float, ...] = field(default=(), compare=True, repr=False)


@dataclass
class PitchTrack:
    """Per-frame pitch; entry k describes frame k relative to frame k-1 and to frame 0"""

    estimates: list[PitchEstimate]

    @classmethod
    def from_estimates(cls, estimates: Sequence[PitchEstimate]) -> "PitchTrack":
        anchor = PitchEstimate(
            phi_rel=0.0,
            phi_cum=0.0,
            objective=0.0,
            iterations=0,
            n_pairs_used=0,
            n_pairs_dropped=0,
            converged=True,
        )
        return cls([anchor, *estimates])

    def __len__(self):
        return len(self.estimates)

    def __iter__(self):
        return iter(self.estimates)

    def __getitem__(self, index):
        return self.estimates[index]

    @property
    def phi_rel(self) -> np.ndarray:
        return np.array([e.phi_rel for e in self.estimates])

    @property
    def phi_cum(self) -> np.ndarray:
        return np.array([e.phi_cum for e in self.estimates])

    @property
    def held(self) -> np.ndarray:
        return np.array([e.held for e in self.estimates], dtype=bool)

    @property
    def converged(self) -> np.ndarray:
        return np.array([e.converged for e in self.estimates], dtype=bool)


# =============================================================================
# LOSS
# =============================================================================


def cauchy_loss(z: float, scale: float = 1.0) -> float:
    """rho(z) = scale * log(1 + z / scale); the plain Cauchy loss for scale = 1"""
    if z < 0:
        raise DomainError(f"Cauchy loss is defined for z >= 0, got {z}")
    return scale * math.log1p(z / scale)


def cauchy_derivative(z: float, scale: float = 1.0) -> float:
    if z < 0:
        raise DomainError(f"Cauchy loss is defined for z >= 0, got {z}")
    return 1.0 / (1.0 + z / scale)


# =============================================================================
# OBJECTIVE
# =============================================================================


def _as_arrays(pairs) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(pairs, CorrespondenceSet):
        return pairs.static()
    pairs = list(pairs)
    if not pairs:
        return np.empty((0, 2)), np.empty((0, 2))
    return CorrespondenceSet.from_pairs(-1, pairs).static()


class PitchObjective:
    """Robust Sampson cost as a function of phi.

    F(phi) is affine in (cos phi, sin phi), so every quantity entering the
    Sampson error is precomputed once per pair as three coefficients.
    """

    def __init__(self, p0: np.ndarray, p1: np.ndarray, intr: CameraIntrinsics, t: TranslationDirection, loss_scale: float = 1.0):
        self.loss_scale = loss_scale
        self.n_pairs = len(p0)
        F0, Fc, Fs = fundamental_basis(intr, t)
        x0 = homogenize(p0)
        x1 = homogenize(p1)
        # epipolar lines F x0 and F^T x1, first two components
        self._lines = np.stack([x0 @ F.T for F in (F0, Fc, Fs)])[:, :, :2]
        self._lines_t = np.stack([x1 @ F for F in (F0, Fc, Fs)])[:, :, :2]
        self._algebraic = np.stack([np.einsum("ij,ij->i", x1, x0 @ F.T) for F in (F0, Fc, Fs)])

    @classmethod
    def from_pairs(cls, pairs, intr, t, loss_scale: float = 1.0) -> "PitchObjective":
        p0, p1 = _as_arrays(pairs)
        return cls(p0, p1, intr, t, loss_scale)

    def _terms(self, phi: float):
        c, s = math.cos(phi), math.sin(phi)
        basis = np.array([1.0, c, s])
        d_basis = np.array([0.0, -s, c])
        e = basis @ self._algebraic
        de = d_basis @ self._algebraic
        lines = np.tensordot(basis, self._lines, axes=1)
        lines_t = np.tensordot(basis, self._lines_t, axes=1)
        d_lines = np.tensordot(d_basis, self._lines, axes=1)
        d_lines_t = np.tensordot(d_basis, self._lines_t, axes=1)
        denominator = (lines**2).sum(axis=1) + (lines_t**2).sum(axis=1)
        d_denominator = 2.0 * ((lines * d_lines).sum(axis=1) + (lines_t * d_lines_t).sum(axis=1))
        return e, de, denominator, d_denominator

    def sampson(self, phi: float) -> tuple[np.ndarray, np.ndarray]:
        e, _, denominator, _ = self._terms(phi)
        usable = denominator >= DEGENERATE_DENOMINATOR
        return e[usable] ** 2 / denominator[usable], usable

    def cost(self, phi: float, min_pairs: int = 1) -> tuple[float, int]:
        errors, usable = self.sampson(phi)
        n_used = int(usable.sum())
        if n_used < min_pairs:
            raise InsufficientCorrespondences(n_used, min_pairs)
        c = self.loss_scale
        return float(np.sum(c * np.log1p(errors / c))), n_used

    def evaluate(self, phi: float, min_pairs: int = 1) -> tuple[float, float, float, int]:
        """Cost, exact derivative, Gauss-Newton curvature and pairs used at phi"""
        e, de, D, dD = self._terms(phi)
        usable = D >= DEGENERATE_DENOMINATOR
        n_used = int(usable.sum())
        if n_used < min_pairs:
            raise InsufficientCorrespondences(n_used, min_pairs)
        e, de, D, dD = e[usable], de[usable], D[usable], dD[usable]
        c = self.loss_scale
        errors = e**2 / D
        weights = 1.0 / (1.0 + errors / c)
        d_errors = 2.0 * e * de / D - errors * dD / D
        # signed residual r = e / sqrt(D), S = r^2
        d_residual = de / np.sqrt(D) - 0.5 * e * dD / D**1.5
        cost = float(np.sum(c * np.log1p(errors / c)))
        gradient = float(np.sum(weights * d_errors))
        curvature = float(np.sum(2.0 * weights * d_residual**2))
        return cost, gradient, curvature, n_used


def robust_objective(pairs, intr: CameraIntrinsics, t: TranslationDirection, phi: float, cfg: EstimatorConfig | None = None) -> float:
    cfg = cfg or EstimatorConfig()
    objective = PitchObjective.from_pairs(pairs, intr, t, cfg.loss_scale)
    cost, _ = objective.cost(phi, cfg.min_pairs)
    return cost


def grid_search_pitch(
    pairs,
    intr: CameraIntrinsics,
    t: TranslationDirection,
    phis: np.ndarray,
    cfg: EstimatorConfig | None = None,
    chunk: int = 2048,
) -> tuple[float, np.ndarray]:
    """Brute-force argmin of the robust objective over a grid of angles"""
    cfg = cfg or EstimatorConfig()
    objective = PitchObjective.from_pairs(pairs, intr, t, cfg.loss_scale)
    if objective.n_pairs < cfg.min_pairs:
        raise InsufficientCorrespondences(objective.n_pairs, cfg.min_pairs)
    phis = np.asarray(phis, dtype=float)
    costs = np.empty(len(phis))
    for start in range(0, len(phis), chunk):
        block = phis[start : start + chunk]
        basis = np.stack([np.ones_like(block), np.cos(block), np.sin(block)], axis=1)
        e = basis @ objective._algebraic
        D = (np.tensordot(basis, objective._lines, axes=1) ** 2).sum(axis=2)
        D += (np.tensordot(basis, objective._lines_t, axes=1) ** 2).sum(axis=2)
        with np.errstate(divide="ignore", invalid="ignore"):
            errors = np.where(D >= DEGENERATE_DENOMINATOR, e**2 / D, 0.0)
        c = objective.loss_scale
        costs[start : start + chunk] = (c * np.log1p(errors / c)).sum(axis=1)
    return float(phis[int(np.argmin(costs))]), costs


# =============================================================================
# SOLVER
# =============================================================================


def estimate_pitch(
    pairs,
    intr: CameraIntrinsics,
    t: TranslationDirection,
    warm_start: float = 0.0,
    cfg: EstimatorConfig | None = None,
    previous_cum: float = 0.0,
) -> PitchEstimate:
    """Levenberg-Marquardt on the single pitch parameter.

    Non-convergence is reported through ``converged``; the last accepted
    angle is still returned.
    """
    cfg = cfg or EstimatorConfig()
    objective = PitchObjective.from_pairs(pairs, intr, t, cfg.loss_scale)
    if objective.n_pairs < cfg.min_pairs:
        raise InsufficientCorrespondences(objective.n_pairs, cfg.min_pairs)

    clamp = cfg.phi_clamp
    phi = min(max(float(warm_start), -clamp), clamp)
    cost, gradient, curvature, n_used = objective.evaluate(phi, cfg.min_pairs)
    damping = cfg.initial_damping
    trace = [cost]
    converged = False
    iterations = 0

    while iterations < cfg.max_iterations:
        if abs(gradient) <= cfg.gradient_tolerance:
            converged = True
            break
        if curvature <= 0.0:
            logger.debug("pitch: zero curvature at phi=%.6g, stopping", phi)
            break
        iterations += 1
        step = gradient / (curvature * (1.0 + damping))
        if abs(step) <= cfg.step_tolerance:
            converged = True
            break
        candidate = min(max(phi - step, -clamp), clamp)
        if candidate == phi:
            logger.debug("pitch: pinned at the search bound phi=%.6g", phi)
            break
        try:
            new_cost, new_gradient, new_curvature, new_used = objective.evaluate(candidate, cfg.min_pairs)
        except InsufficientCorrespondences:
            damping *= cfg.damping_up
            continue
        if new_cost <= cost:
            phi, cost, gradient, curvature, n_used = candidate, new_cost, new_gradient, new_curvature, new_used
            damping *= cfg.damping_down
            trace.append(cost)
        else:
            damping *= cfg.damping_up

    if not converged:
        logger.debug("pitch: no convergence after %d iterations (phi=%.6g)", iterations, phi)

    return PitchEstimate(
        phi_rel=phi,
        phi_cum=cfg.leak * previous_cum + phi,
        objective=cost,
        iterations=iterations,
        n_pairs_used=n_used,
        n_pairs_dropped=objective.n_pairs - n_used,
        converged=converged,
        trace=tuple(trace),
    )


def estimate_pitch_track(
    frame_pairs: Iterable[CorrespondenceSet],
    intr: CameraIntrinsics,
    t: TranslationDirection,
    cfg: EstimatorConfig | None = None,
) -> list[PitchEstimate]:
    """One estimate per correspondence set, in temporal order.

    Sets with too few usable pairs keep the previous relative angle and are
    flagged ``held``.
    """
    cfg = cfg or EstimatorConfig()
    estimates: list[PitchEstimate] = []
    previous_rel = 0.0
    previous_cum = 0.0
    for index, pairs in enumerate(frame_pairs):
        try:
            estimate = estimate_pitch(pairs, intr, t, previous_rel, cfg, previous_cum)
        except InsufficientCorrespondences as e:
            logger.info("pitch: frame pair %d holds previous angle (%s)", index, e)
            estimate = PitchEstimate(
                phi_rel=previous_rel,
                phi_cum=cfg.leak * previous_cum + previous_rel,
                objective=0.0,
                iterations=0,
                n_pairs_used=0,
                n_pairs_dropped=e.available,
                converged=False,
                held=True,
            )
        estimates.append(estimate)
        previous_rel = estimate.phi_rel
        previous_cum = estimate.phi_cum
    return estimates
