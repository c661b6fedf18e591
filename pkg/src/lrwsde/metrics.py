"""Moment accumulation, Gaussian KL and weak-order estimation."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg


def burn_in_count(n: int, fraction: float) -> int:
    if not 0 <= fraction < 1:
        raise ValueError("burn-in fraction must lie in [0, 1)")
    return int(math.floor(n * fraction + 1e-9))


class MomentAccumulator:
    """Streaming mean and centred comoment of d-vectors (Chan et al. merge).

    ``skip`` leading samples are dropped as burn-in; use :meth:`for_run`
    when the run length is known up front.
    """

    def __init__(self, dim: int, skip: int = 0, burn_in_fraction: float = 0.0):
        self.dim = dim
        self.count = 0
        self.mean = np.zeros(dim)
        self.comoment = np.zeros((dim, dim))
        self.burn_in_fraction = burn_in_fraction
        self._skip = int(skip)

    @classmethod
    def for_run(cls, dim: int, n_total: int, burn_in_fraction: float) -> "MomentAccumulator":
        return cls(dim, burn_in_count(n_total, burn_in_fraction), burn_in_fraction)

    def update(self, samples) -> "MomentAccumulator":
        samples = np.asarray(samples, dtype=float).reshape(-1, self.dim)
        if self._skip:
            drop = min(self._skip, len(samples))
            samples = samples[drop:]
            self._skip -= drop
        if len(samples):
            other = MomentAccumulator(self.dim)
            other.count = len(samples)
            other.mean = samples.mean(axis=0)
            centred = samples - other.mean
            other.comoment = centred.T @ centred
            self._absorb(other)
        return self

    def _absorb(self, other: "MomentAccumulator"):
        if other.count == 0:
            return
        n = self.count + other.count
        delta = other.mean - self.mean
        self.comoment = (self.comoment + other.comoment
                         + np.outer(delta, delta) * (self.count * other.count / n))
        self.mean = self.mean + delta * (other.count / n)
        self.count = n

    def merge(self, other: "MomentAccumulator") -> "MomentAccumulator":
        out = MomentAccumulator(self.dim, burn_in_fraction=self.burn_in_fraction)
        out.count, out.mean, out.comoment = self.count, self.mean.copy(), self.comoment.copy()
        out._absorb(other)
        return out

    def covariance(self) -> np.ndarray:
        if self.count < 2:
            raise ValueError("need at least two samples for a covariance")
        cov = self.comoment / (self.count - 1)
        return 0.5 * (cov + cov.T)


@dataclass(frozen=True)
class GaussianFit:
    mean: np.ndarray
    cov: np.ndarray
    count: int
    singular: bool


def empirical_gaussian(data, burn_in_fraction: float = 0.0) -> GaussianFit:
    """Mean and unbiased covariance of samples ``(n, d)`` or of an accumulator.

    For an accumulator the burn-in was applied while streaming and
    ``burn_in_fraction`` is ignored.
    """
    if isinstance(data, MomentAccumulator):
        acc = data
    else:
        x = np.asarray(data, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        acc = MomentAccumulator(x.shape[1]).update(x[burn_in_count(len(x), burn_in_fraction):])
    if acc.count < acc.dim + 1:
        raise ValueError(f"need at least {acc.dim + 1} retained samples, have {acc.count}")
    cov = acc.covariance()
    singular = bool(np.any(np.diag(cov) <= 0) or np.linalg.matrix_rank(cov) < acc.dim)
    return GaussianFit(acc.mean.copy(), cov, acc.count, singular)


def gaussian_kl(mean_hat, cov_hat, mean_true, cov_true) -> float:
    """``KL[N(mean_hat, cov_hat) || N(mean_true, cov_true)]``; inf if ``cov_hat`` is singular."""
    mean_hat = np.atleast_1d(np.asarray(mean_hat, dtype=float))
    mean_true = np.atleast_1d(np.asarray(mean_true, dtype=float))
    cov_hat = np.atleast_2d(np.asarray(cov_hat, dtype=float))
    cov_true = np.atleast_2d(np.asarray(cov_true, dtype=float))
    d = mean_true.size
    try:
        c_true = linalg.cho_factor(cov_true, lower=True)
    except linalg.LinAlgError:
        raise ValueError("true covariance must be positive definite") from None
    if not (np.all(np.isfinite(cov_hat)) and np.all(np.isfinite(mean_hat))):
        return math.inf
    try:
        c_hat = linalg.cho_factor(cov_hat, lower=True)
    except linalg.LinAlgError:
        return math.inf
    logdet_true = 2 * np.log(np.diag(c_true[0])).sum()
    logdet_hat = 2 * np.log(np.diag(c_hat[0])).sum()
    if not np.isfinite(logdet_hat):
        return math.inf
    diff = mean_true - mean_hat
    trace = np.trace(linalg.cho_solve(c_true, cov_hat))
    maha = diff @ linalg.cho_solve(c_true, diff)
    return float(max(0.5 * (trace + maha - d + logdet_true - logdet_hat), 0.0))


def ergodic_mean_mse(stream, true_value: float) -> float:
    """Squared error of the time average; ``inf`` marks a diverged stream."""
    x = np.asarray(stream, dtype=float)
    if x.size == 0:
        raise ValueError("empty stream")
    if not np.all(np.isfinite(x)):
        return math.inf
    return float((x.mean() - true_value) ** 2)


def weak_order_estimate(errors) -> float:
    """Least-squares slope of ``log error`` against ``log dt``.

    ``errors`` is a sequence of ``(dt, error)`` pairs; nonpositive errors are
    dropped with a warning.
    """
    pts = [(float(h), float(e)) for h, e in errors]
    keep = [(h, e) for h, e in pts if e > 0 and h > 0 and math.isfinite(e)]
    if len(keep) < len(pts):
        warnings.warn(f"dropped {len(pts) - len(keep)} nonpositive error values", RuntimeWarning)
    if len(keep) < 3:
        raise ValueError("need at least three positive errors to fit an order")
    h, e = np.log(np.array(keep)).T
    slope, _ = np.polyfit(h, e, 1)
    return float(slope)
