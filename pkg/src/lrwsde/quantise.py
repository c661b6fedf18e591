"""Emulated reduced-precision floating point.

Values are rounded to nearest (ties to even) onto the grid of a binary
format with the given exponent and explicit mantissa widths, including
subnormals.  Magnitudes beyond the largest finite value saturate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import SdeSpec


@dataclass(frozen=True)
class PrecisionFormat:
    name: str
    exponent_bits: int
    mantissa_bits: int
    # None means IEEE-style: the all-ones exponent is reserved for inf/nan
    max_finite: float | None = None

    def __post_init__(self):
        if self.exponent_bits < 2 or self.mantissa_bits < 0:
            raise ValueError(f"invalid format {self}")

    @property
    def bias(self) -> int:
        return 2 ** (self.exponent_bits - 1) - 1

    @property
    def emin(self) -> int:
        return 1 - self.bias

    @property
    def largest(self) -> float:
        if self.max_finite is not None:
            return float(self.max_finite)
        return float((2.0 - 2.0 ** -self.mantissa_bits) * 2.0 ** self.bias)

    @property
    def smallest_subnormal(self) -> float:
        return float(2.0 ** (self.emin - self.mantissa_bits))


FP32 = PrecisionFormat("fp32", 8, 23)
FP16 = PrecisionFormat("fp16", 5, 10)
# OCP E4M3: no infinities, only S.1111.111 is NaN, so the top binade is usable
FP8 = PrecisionFormat("fp8", 4, 3, max_finite=448.0)

FORMATS = {f.name: f for f in (FP8, FP16, FP32)}


def get_format(name: str) -> PrecisionFormat:
    try:
        return FORMATS[name]
    except KeyError:
        raise ValueError(f"unknown precision {name!r}; choose from {sorted(FORMATS)}") from None


def quantise_array(v, fmt: PrecisionFormat) -> np.ndarray:
    """Elementwise rounding into ``fmt``; NaN and inf pass through unchanged."""
    v = np.asarray(v, dtype=float)
    finite = np.isfinite(v)
    safe = np.where(finite, v, 0.0)
    _, e = np.frexp(safe)
    exp = np.maximum(e - 1, fmt.emin)
    quantum = np.ldexp(1.0, exp - fmt.mantissa_bits)
    q = np.rint(safe / quantum) * quantum
    q = np.clip(q, -fmt.largest, fmt.largest)
    return np.where(finite, q, v)


def quantise_value(v: float, fmt: PrecisionFormat) -> float:
    v = float(v)
    if not np.isfinite(v):
        raise ValueError(f"cannot quantise non-finite value {v}")
    return float(quantise_array(v, fmt))


def quantise_spec(spec: SdeSpec, fmt: PrecisionFormat) -> SdeSpec:
    """Round every drift and diffusion output into ``fmt``.

    State and scheme arithmetic stay in float64.  Non-finite outputs (a
    diverging baseline) pass through so the driver can record the divergence.
    """
    drift, diffusion = spec.drift, spec.diffusion

    def q_drift(x, t):
        return quantise_array(drift(x, t), fmt)

    def q_diffusion(x, t):
        return quantise_array(diffusion(x, t), fmt)

    return SdeSpec(spec.dim, q_drift, q_diffusion)
