"""Test problems: multivariate OU, Poisson random effects Langevin, Gaussian flow."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .core import SdeSpec
from .transforms import NoiseSchedule


@dataclass(frozen=True)
class OuParams:
    """``dx = -(A x - b) dt + sqrt(2 T) dw`` with stationary law ``N(A^-1 b, T A^-1)``."""

    A: np.ndarray
    b: np.ndarray
    temperature: float = 0.5

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        if A.shape != (b.size, b.size):
            raise ValueError(f"A has shape {A.shape}, b has length {b.size}")
        if np.max(np.abs(A - A.T)) > 1e-12:
            raise ValueError("A must be symmetric")
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")

    @property
    def dim(self) -> int:
        return self.b.size

    def to_dict(self) -> dict:
        return {"A": self.A.tolist(), "b": self.b.tolist(), "temperature": self.temperature}

    @classmethod
    def from_dict(cls, d: dict) -> "OuParams":
        return cls(np.array(d["A"]), np.array(d["b"]), float(d["temperature"]))


def make_ou(p: OuParams) -> tuple[SdeSpec, np.ndarray, np.ndarray]:
    try:
        chol = np.linalg.cholesky(p.A)
    except np.linalg.LinAlgError:
        raise ValueError("A must be positive definite") from None
    A, b = p.A, p.b
    noise = np.sqrt(2.0 * p.temperature)

    def drift(x, t):
        return b - x @ A.T

    def diffusion(x, t):
        return np.full(np.shape(x), noise)

    eye = np.eye(p.dim)
    a_inv = np.linalg.solve(chol.T, np.linalg.solve(chol, eye))
    a_inv = 0.5 * (a_inv + a_inv.T)
    return SdeSpec(p.dim, drift, diffusion), a_inv @ b, p.temperature * a_inv


def sample_ou_params(d: int, rng, temperature: float = 0.5) -> OuParams:
    """``A = Z Z^T + I`` with standard normal ``Z``; ``b`` standard normal."""
    if d < 1:
        raise ValueError("d must be >= 1")
    Z = rng.normal((d, d))
    A = Z @ Z.T
    A = 0.5 * (A + A.T) + np.eye(d)
    b = rng.normal((d,))
    return OuParams(A, b, temperature)


# --------------------------------------------------------------------------
# Poisson random effects
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PoissonModelParams:
    """Hierarchical Poisson model.  Coordinate 0 is the hierarchical mean
    (the parameter of interest), coordinates ``1..d`` the random effects."""

    d: int
    J: int
    sigma1: float
    x_star: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y)
        if y.shape != (self.d, self.J):
            raise ValueError(f"y has shape {y.shape}, expected ({self.d}, {self.J})")
        if np.any(y < 0) or not np.all(np.mod(y, 1) == 0):
            raise ValueError("counts must be nonnegative integers")
        if np.shape(self.x_star) != (self.d + 1,):
            raise ValueError("x_star must have length d + 1")

    @property
    def y_sum(self) -> np.ndarray:
        return np.asarray(self.y).sum(axis=1)

    def to_dict(self) -> dict:
        return {"d": self.d, "J": self.J, "sigma1": self.sigma1,
                "x_star": np.asarray(self.x_star).tolist(), "y": np.asarray(self.y).tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "PoissonModelParams":
        return cls(int(d["d"]), int(d["J"]), float(d["sigma1"]),
                   np.array(d["x_star"], dtype=float), np.array(d["y"], dtype=np.int64))


def poisson_potential(x, p: PoissonModelParams):
    x = np.asarray(x, dtype=float)
    mu, eff = x[..., 0], x[..., 1:]
    return (p.J * np.exp(eff).sum(-1) - (p.y_sum * eff).sum(-1)
            + 0.5 * ((eff - mu[..., None]) ** 2).sum(-1) + mu**2 / (2 * p.sigma1**2))


def poisson_grad(x, p: PoissonModelParams) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    mu, eff = x[..., :1], x[..., 1:]
    g_mu = -(eff - mu).sum(-1, keepdims=True) + mu / p.sigma1**2
    g_eff = p.J * np.exp(eff) - p.y_sum + (eff - mu)
    return np.concatenate([g_mu, g_eff], axis=-1)


def poisson_spec(p: PoissonModelParams) -> SdeSpec:
    """Overdamped Langevin ``dx = -grad U dt + sqrt(2) dw``."""
    root2 = np.sqrt(2.0)

    def drift(x, t):
        return -poisson_grad(x, p)

    def diffusion(x, t):
        return np.full(np.shape(x), root2)

    return SdeSpec(p.d + 1, drift, diffusion)


def _poisson_counts(lam: np.ndarray, u: np.ndarray) -> np.ndarray:
    # inversion of the Poisson CDF; keep u off the endpoints where ppf is -1 / inf
    tiny = 2.0**-54
    return stats.poisson.ppf(np.clip(u, tiny, 1 - tiny), lam).astype(np.int64)


def make_poisson_model(d: int, J: int, sigma1: float, rng, mean: float = 5.0,
                       max_tries: int = 10) -> tuple[PoissonModelParams, SdeSpec]:
    """Generate synthetic data (hierarchical mean ``mean``, effects ``N(mean, 1)``)."""
    if d < 1 or J < 1 or not sigma1 > 0:
        raise ValueError("need d >= 1, J >= 1, sigma1 > 0")
    for _ in range(max_tries):
        effects = mean + rng.normal((d,))
        lam = np.exp(effects)
        if np.all(np.isfinite(lam)):
            break
        warnings.warn("Poisson rate overflowed; redrawing random effects", RuntimeWarning)
    else:
        raise OverflowError("could not draw finite Poisson rates")
    y = _poisson_counts(lam[:, None] * np.ones(J), rng.uniform((d, J)))
    params = PoissonModelParams(d, J, float(sigma1), np.concatenate([[mean], effects]), y)
    return params, poisson_spec(params)


# --------------------------------------------------------------------------
# Gaussian flow
# --------------------------------------------------------------------------


def make_gaussian_flow(sigma_data: float, ns: NoiseSchedule):
    """Exact score ``-x / (sigma_data^2 + sigma(t)^2)`` for data ``N(0, sigma_data^2 I)``."""
    if not sigma_data > 0:
        raise ValueError("sigma_data must be positive")
    var_data = sigma_data**2

    def score(x, t):
        return -np.asarray(x, dtype=float) / (var_data + ns.sigma_of_t(t) ** 2)

    return score
