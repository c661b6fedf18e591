"""Lattice random walk discretisation.

Each coordinate moves by ``-dx``, ``0`` or ``+dx`` per step with

    p_plus/minus = dt / (2 dx) * (+/- f + sigma^2 / dx)

so that the increment has mean ``dt f`` and second moment ``dt sigma^2``.
Inputs that would make these invalid probabilities are clipped: first
``sigma^2`` down to ``dx^2 / dt``, then ``f`` into ``[-sigma^2/dx, sigma^2/dx]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import SdeSpec, StepConfig, constant_schedule

# Clip flags ignore overshoot below this relative size (rounding in dx = sqrt(dt) sigma).
_FLAG_RTOL = 8 * np.finfo(float).eps
_SNAP = 4 * np.finfo(float).eps


@dataclass(frozen=True)
class TernaryProbs:
    p_minus: np.ndarray
    p_plus: np.ndarray
    clipped_sigma: np.ndarray
    clipped_drift: np.ndarray

    @property
    def p_zero(self) -> np.ndarray:
        return 1.0 - self.p_minus - self.p_plus

    @property
    def clipped(self) -> np.ndarray:
        return self.clipped_sigma | self.clipped_drift

    def increment_mean(self, dx) -> np.ndarray:
        return (self.p_plus - self.p_minus) * dx

    def increment_second_moment(self, dx) -> np.ndarray:
        return (self.p_plus + self.p_minus) * np.square(dx)


def probabilities(f, sigma, dt: float, dx) -> TernaryProbs:
    """Clipped ternary probabilities from drift and diffusion values."""
    # Work with r = dt sigma^2 / dx^2 = p_plus + p_minus and g = dt f / dx = p_plus - p_minus.
    # Clipping sigma^2 to dx^2/dt is r <= 1 and clipping f to sigma^2/dx is |g| <= r, so the
    # binary and degenerate cases come out exact instead of one ulp short.
    f = np.asarray(f, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    ratio = dt / np.asarray(dx, dtype=float)
    r = ratio * (sigma * sigma / dx)
    g = ratio * f
    clipped_sigma = r > 1 + _FLAG_RTOL
    # dx = sqrt(dt) sigma lands r within a few ulps of 1; treat that as the binary edge
    r = np.where(r >= 1 - _SNAP, 1.0, r)
    clipped_drift = np.abs(g) > r * (1 + _FLAG_RTOL)
    g = np.clip(g, -r, r)
    p_plus = 0.5 * (r + g)
    p_minus = 0.5 * (r - g)
    # rounding guard: keep p_minus + p_plus <= 1 exactly in floating point
    p_plus = np.minimum(p_plus, 1.0 - p_minus)
    return TernaryProbs(p_minus, p_plus, clipped_sigma, clipped_drift)


def ternary_probs(spec: SdeSpec, x, t: float, dt: float, dx) -> TernaryProbs:
    if not dt > 0:
        raise ValueError("dt must be positive")
    if not np.all(np.asarray(dx) > 0):
        raise ValueError("dx must be positive")
    x = np.asarray(x, dtype=float)
    return probabilities(spec.drift(x, t), spec.diffusion(x, t), dt, dx)


def allowable_dx_range(f_abs, sigma, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Interval ``[sqrt(dt) sigma, sigma^2 / |f|]`` of valid spatial stepsizes.

    The upper end is ``inf`` where ``f == 0``.  When the feasibility
    condition fails the interval is empty (``lo > hi``).
    """
    f_abs = np.abs(np.asarray(f_abs, dtype=float))
    sigma = np.asarray(sigma, dtype=float)
    lo = np.sqrt(dt) * sigma
    with np.errstate(divide="ignore", over="ignore"):
        hi = np.where(f_abs == 0, np.inf, sigma**2 / np.where(f_abs == 0, 1.0, f_abs))
    return lo, hi


def check_feasibility(f_abs, sigma, dt: float) -> np.ndarray:
    f_abs = np.asarray(f_abs, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    ok = sigma**2 >= dt * f_abs**2
    # sigma = 0 cannot be handled by a lattice walk, whatever the drift
    return ok & (sigma > 0)


def rule_of_thumb_dx(dt: float, sigma_max) -> np.ndarray:
    return np.sqrt(dt) * np.asarray(sigma_max, dtype=float)


def increments(probs: TernaryProbs, eta) -> np.ndarray:
    """Map uniforms to lattice moves in {-1, 0, +1}.

    ``eta < p_minus`` moves down, ``eta >= 1 - p_plus`` moves up, anything in
    between stays put.
    """
    # p_minus <= 1 - p_plus, so the two events are disjoint
    up = eta >= 1.0 - probs.p_plus
    down = eta < probs.p_minus
    return up.astype(np.int64) - down


def lrw_step(spec: SdeSpec, x, t: float, dt: float, dx, rng) -> np.ndarray:
    """One lattice random walk step; consumes one uniform per coordinate."""
    x = np.asarray(x, dtype=float)
    probs = ternary_probs(spec, x, t, dt, dx)
    move = increments(probs, rng.uniform(x.shape))
    return x + move * np.asarray(dx, dtype=float)


@dataclass(frozen=True)
class LatticeState:
    """Integer coordinates ``z`` with real-space view ``origin + dx * z``."""

    z: np.ndarray
    origin: np.ndarray
    dx: np.ndarray

    @classmethod
    def from_point(cls, x0, dx) -> "LatticeState":
        x0 = np.asarray(x0, dtype=float)
        return cls(np.zeros(x0.shape, dtype=np.int64), x0, np.broadcast_to(np.asarray(dx, dtype=float), x0.shape[-1:]))

    @property
    def x(self) -> np.ndarray:
        return self.origin + self.dx * self.z


def lrw_step_lattice(spec: SdeSpec, ls: LatticeState, t: float, dt: float, rng) -> LatticeState:
    probs = ternary_probs(spec, ls.x, t, dt, ls.dx)
    move = increments(probs, rng.uniform(ls.z.shape))
    return LatticeState(ls.z + move, ls.origin, ls.dx)


class LRWStepper:
    """Real-space lattice walk with spatial stepsize ``dx_schedule(t)``.

    Without a schedule the stepper reads ``cfg.dx``.  ``clip_count`` tracks,
    per replica, how many coordinate-steps needed clipping; ``coord_steps``
    the number of coordinate-steps taken.
    """

    gaussian_free = True

    def __init__(self, dx_schedule: Callable[[float], np.ndarray] | None = None, constant: bool = False):
        self.dx_schedule = dx_schedule
        self._constant = constant
        self.clip_count = 0
        self.coord_steps = 0

    def reset_counters(self):
        self.clip_count = 0
        self.coord_steps = 0

    @property
    def clipped_fraction(self):
        return np.asarray(self.clip_count) / max(self.coord_steps, 1)

    def __call__(self, spec: SdeSpec, x, t: float, cfg: StepConfig, rng) -> np.ndarray:
        if self.dx_schedule is None:
            dx = cfg.dx_at(t)
        else:
            dx = np.asarray(self.dx_schedule(t), dtype=float)
            if not self._constant and not np.all(dx > 0):
                raise ValueError(f"spatial stepsize must be positive, got {dx} at t={t}")
        probs = probabilities(spec.drift(x, t), spec.diffusion(x, t), cfg.dt, dx)
        self.clip_count = self.clip_count + np.count_nonzero(probs.clipped, axis=-1)
        self.coord_steps += spec.dim
        move = increments(probs, rng.uniform(np.shape(x)))
        return x + move * dx


def make_lrw_stepper(dx_schedule=None) -> LRWStepper:
    """LRW stepper from a schedule ``t -> dx``, a constant, or None (use ``cfg.dx``)."""
    if dx_schedule is not None and not callable(dx_schedule):
        if not np.all(np.asarray(dx_schedule) > 0):
            raise ValueError(f"spatial stepsize must be positive, got {dx_schedule}")
        return LRWStepper(constant_schedule(dx_schedule), constant=True)
    return LRWStepper(dx_schedule)


def simulate_lattice(spec: SdeSpec, ls: LatticeState, cfg: StepConfig, rng, observer=None) -> LatticeState:
    """Integer-lattice counterpart of :func:`~lrwsde.core.simulate_path` (fixed dx only)."""
    t = cfg.t0
    for k in range(1, cfg.n_steps + 1):
        ls = lrw_step_lattice(spec, ls, t, cfg.dt, rng)
        t = cfg.t0 + k * cfg.dt
        if observer is not None:
            observer(k, t, ls)
    return ls
