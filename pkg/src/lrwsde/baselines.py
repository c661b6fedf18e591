"""Euler-Maruyama and the two-point (Rademacher noise) scheme."""

from __future__ import annotations

import numpy as np

from .core import SdeSpec, StepConfig


def em_step(spec: SdeSpec, x, t: float, dt: float, rng) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    xi = rng.normal(x.shape)
    return x + dt * spec.drift(x, t) + np.sqrt(dt) * spec.diffusion(x, t) * xi


def rademacher(rng, shape) -> np.ndarray:
    """Signs from uniforms: ``eta < 0.5`` gives -1, otherwise +1."""
    return np.where(rng.uniform(shape) < 0.5, -1.0, 1.0)


def two_point_step(spec: SdeSpec, x, t: float, dt: float, rng) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    xi = rademacher(rng, x.shape)
    return x + dt * spec.drift(x, t) + np.sqrt(dt) * spec.diffusion(x, t) * xi


def em_second_moment(f, sigma, dt: float):
    """Exact ``E[increment^2]`` for EM; the two-point scheme has the same value."""
    f = np.asarray(f, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    return dt * sigma**2 + dt**2 * f**2


class EMStepper:
    gaussian_free = False

    def __call__(self, spec: SdeSpec, x, t: float, cfg: StepConfig, rng):
        return em_step(spec, x, t, cfg.dt, rng)


class TwoPointStepper:
    gaussian_free = True

    def __call__(self, spec: SdeSpec, x, t: float, cfg: StepConfig, rng):
        return two_point_step(spec, x, t, cfg.dt, rng)
