"""SDE rewrites: Lamperti transform and flow-matching models as SDEs.

Time convention for flows
-------------------------
Simulation always runs forward, ``t: 0 -> 1``, from noise to data.  A
:class:`NoiseSchedule` gives the noise level ``sigma_of_t(t)`` of the
marginal at simulation time ``t`` (decreasing in ``t``) and
``sigma_dot_of_t(t)``, the rate of the *noising* schedule, i.e. the
derivative with respect to noising time ``tau = 1 - t``.  With that
convention ``sigma_dot * sigma >= 0`` and the SDE

    dx = (sigma_dot sigma + alpha) s(x, t) dt + sqrt(2 alpha) dw

keeps the marginals of the probability-flow ODE for every ``alpha >= 0``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import SdeSpec

ScalarFn = Callable[[float], float]


def _zero(t: float) -> float:
    return 0.0


@dataclass(frozen=True)
class NoiseSchedule:
    sigma_of_t: ScalarFn
    sigma_dot_of_t: ScalarFn
    alpha_of_t: ScalarFn = _zero

    def flow_rate(self, t: float) -> float:
        """``sigma_dot(t) * sigma(t)``, the probability-flow drift factor."""
        return float(self.sigma_dot_of_t(t) * self.sigma_of_t(t))

    def with_langevin(self, a: float) -> "NoiseSchedule":
        """Same schedule with ``alpha(t) = a * sigma_dot(t) * sigma(t)``."""
        if a < 0:
            raise ValueError("Langevin scale must be nonnegative")

        def alpha(t):
            return a * self.flow_rate(t)

        return NoiseSchedule(self.sigma_of_t, self.sigma_dot_of_t, alpha)

    @classmethod
    def linear(cls, sigma_start: float, sigma_end: float, a: float = 0.0) -> "NoiseSchedule":
        """Noise level falling linearly from ``sigma_start`` at t=0 to ``sigma_end`` at t=1."""
        if not sigma_start > sigma_end > 0:
            raise ValueError("need sigma_start > sigma_end > 0")
        rate = sigma_start - sigma_end

        def sigma(t):
            return sigma_start - rate * t

        def sigma_dot(t):
            return rate

        return cls(sigma, sigma_dot).with_langevin(a) if a else cls(sigma, sigma_dot)


def _alpha(ns: NoiseSchedule, t: float) -> float:
    a = float(ns.alpha_of_t(t))
    if a < 0:
        raise ValueError(f"alpha(t) must be nonnegative, got {a} at t={t}")
    return a


def flow_to_sde(score, ns: NoiseSchedule, dim: int, probe_times=None) -> SdeSpec:
    """SDE with drift ``(sigma_dot sigma + alpha) s`` and diffusion ``sqrt(2 alpha)``.

    ``probe_times`` optionally checks the schedule up front; otherwise a
    negative ``alpha`` raises when the evaluator hits it.
    """
    for t in probe_times if probe_times is not None else ():
        _alpha(ns, t)
        if not ns.sigma_of_t(t) > 0:
            raise ValueError(f"noise level must be positive, got {ns.sigma_of_t(t)} at t={t}")

    def drift(x, t):
        return (ns.flow_rate(t) + _alpha(ns, t)) * score(x, t)

    def diffusion(x, t):
        return np.full(np.shape(x), np.sqrt(2.0 * _alpha(ns, t)))

    return SdeSpec(dim, drift, diffusion)


def velocity_to_score(u, ns: NoiseSchedule, x, t: float):
    """Score at simulation time ``t`` from a velocity ``u(x, tau)`` in noising time."""
    rate = ns.flow_rate(t)
    if rate == 0:
        raise ValueError(f"sigma_dot * sigma vanishes at t={t}; velocity does not determine the score")
    return -np.asarray(u(x, 1.0 - t), dtype=float) / rate


def score_to_velocity(score, ns: NoiseSchedule):
    """Velocity field ``u(x, tau)`` implied by a score; inverse of :func:`velocity_to_score`."""

    def u(x, tau):
        t = 1.0 - tau
        return -ns.flow_rate(t) * np.asarray(score(x, t), dtype=float)

    return u


# --------------------------------------------------------------------------
# Lamperti transform
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TimeDiffusion:
    """Time-only diffusion ``sigma(t)`` and the target constant level ``kappa``.

    Diagonal case: ``sigma_of_t`` returns a positive vector (or scalar) and
    ``sigma_dot_of_t`` its time derivative.  Dense case: ``sigma_of_t``
    returns a ``d x d`` matrix and the caller supplies ``inverse_of_t`` and
    ``inverse_dot_of_t`` (the derivative of the inverse); nothing is
    differentiated or inverted numerically.
    """

    sigma_of_t: Callable
    sigma_dot_of_t: Callable | None = None
    kappa: float = 1.0
    inverse_of_t: Callable | None = None
    inverse_dot_of_t: Callable | None = None

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")
        if self.dense and self.inverse_dot_of_t is None:
            raise ValueError("dense diffusion needs inverse_dot_of_t as well as inverse_of_t")
        if not self.dense and self.sigma_dot_of_t is None:
            raise ValueError("diagonal diffusion needs sigma_dot_of_t")

    @property
    def dense(self) -> bool:
        return self.inverse_of_t is not None

    def check(self, t: float, atol: float = 1e-8):
        s = np.asarray(self.sigma_of_t(t), dtype=float)
        if self.dense:
            inv = np.asarray(self.inverse_of_t(t), dtype=float)
            if not np.allclose(s @ inv, np.eye(s.shape[0]), rtol=0, atol=atol):
                raise ValueError(f"supplied inverse does not invert sigma(t) at t={t}")
        elif not np.all(s > 0):
            raise ValueError(f"sigma(t) is not invertible (entries {s}) at t={t}")


@dataclass(frozen=True)
class LampertiResult:
    spec: SdeSpec
    to_x: Callable[[np.ndarray, float], np.ndarray]
    to_z: Callable[[np.ndarray, float], np.ndarray]


def lamperti_transform(spec: SdeSpec, td: TimeDiffusion, probe_times=(0.0,)) -> LampertiResult:
    """Rewrite ``dx = f dt + sigma(t) dw`` in ``z = kappa sigma(t)^-1 x``.

    The new SDE has drift ``d/dt(sigma^-1) sigma z + kappa sigma^-1 f(sigma z / kappa, t)``
    and constant diffusion ``kappa``.  Only ``spec.drift`` is used; the noise
    comes from ``td``.
    """
    for t in probe_times:
        td.check(t)
    kappa = td.kappa

    if td.dense:
        def to_x(z, t):
            return np.asarray(z) @ np.asarray(td.sigma_of_t(t)).T / kappa

        def to_z(x, t):
            return kappa * np.asarray(x) @ np.asarray(td.inverse_of_t(t)).T

        def drift(z, t):
            sig = np.asarray(td.sigma_of_t(t), dtype=float)
            inv = np.asarray(td.inverse_of_t(t), dtype=float)
            lin = np.asarray(td.inverse_dot_of_t(t), dtype=float) @ sig
            z = np.asarray(z, dtype=float)
            return z @ lin.T + kappa * spec.drift(z @ sig.T / kappa, t) @ inv.T
    else:
        def _sigma(t):
            s = np.asarray(td.sigma_of_t(t), dtype=float)
            if np.any(s <= 0):
                raise ValueError(f"sigma(t) is not invertible at t={t}")
            return s

        def to_x(z, t):
            return _sigma(t) * np.asarray(z) / kappa

        def to_z(x, t):
            return kappa * np.asarray(x) / _sigma(t)

        def drift(z, t):
            s = _sigma(t)
            z = np.asarray(z, dtype=float)
            # d/dt(1/s) * s = -s_dot / s
            return -np.asarray(td.sigma_dot_of_t(t)) / s * z + kappa * spec.drift(s * z / kappa, t) / s

    def diffusion(z, t):
        return np.full(np.shape(z), kappa)

    return LampertiResult(SdeSpec(spec.dim, drift, diffusion), to_x, to_z)
