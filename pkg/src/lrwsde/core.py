"""Problem definition, random streams and the generic trajectory driver.

Every evaluator in this package works on arrays whose last axis is the state
dimension, so a batch of replicas ``x`` of shape ``(M, d)`` moves through a
stepper in one call.  Steppers draw their randomness with
``rng.uniform(x.shape)`` / ``rng.normal(x.shape)``, which lets the same code
drive a single path, many replicas fed by one stream, or a
:class:`StreamBatch` where every row owns its own derived stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np

Evaluator = Callable[[np.ndarray, float], np.ndarray]

#: States with any coordinate above this magnitude (or non-finite) count as diverged.
DIVERGENCE_THRESHOLD = 1e150

_BLOCK = 8192


@dataclass(frozen=True)
class SdeSpec:
    """``dx = drift(x, t) dt + diag(diffusion(x, t)) dw`` in ``dim`` dimensions.

    ``drift`` and ``diffusion`` take ``x`` of shape ``(..., dim)`` and a float
    time and return arrays of the same shape.  Diffusion entries are the
    diagonal of the noise matrix and must be nonnegative.
    """

    dim: int
    drift: Evaluator
    diffusion: Evaluator

    def __post_init__(self):
        if int(self.dim) < 1:
            raise ValueError(f"dim must be positive, got {self.dim}")


def constant_schedule(value) -> Callable[[float], np.ndarray]:
    arr = np.asarray(value, dtype=float)

    def schedule(t: float) -> np.ndarray:
        return arr

    return schedule


@dataclass(frozen=True)
class StepConfig:
    """Temporal grid plus the (possibly time-varying) spatial stepsize.

    ``dx`` may be a scalar, a length-``d`` vector or a callable ``t -> dx``.
    Only the lattice random walk reads it.
    """

    dt: float
    n_steps: int
    t0: float = 0.0
    dx: object = None

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if int(self.n_steps) < 1:
            raise ValueError(f"n_steps must be >= 1, got {self.n_steps}")

    @property
    def t_end(self) -> float:
        return self.t0 + self.n_steps * self.dt

    def dx_at(self, t: float) -> np.ndarray:
        if self.dx is None:
            raise ValueError("StepConfig.dx is not set")
        dx = self.dx(t) if callable(self.dx) else self.dx
        dx = np.asarray(dx, dtype=float)
        if not np.all(dx > 0):
            raise ValueError(f"spatial stepsize must be positive, got {dx}")
        return dx


# --------------------------------------------------------------------------
# Random streams
# --------------------------------------------------------------------------


def _key(index) -> tuple[int, ...]:
    if isinstance(index, (int, np.integer)):
        return (int(index),)
    return tuple(int(i) for i in index)


def derive_generator(seed: int, index=0) -> np.random.Generator:
    """PCG64 generator for stream ``index`` of ``seed``.

    The derivation is ``SeedSequence(seed, spawn_key=index)``, where ``index``
    is an int or a tuple of ints.  Distinct keys give statistically
    independent streams.
    """
    ss = np.random.SeedSequence(int(seed) % 2**64, spawn_key=_key(index))
    return np.random.Generator(np.random.PCG64(ss))


def _box_muller(u: np.ndarray) -> np.ndarray:
    # u[..., 0] -> radius, u[..., 1] -> angle; 1 - u lies in (0, 1] so log is finite
    r = np.sqrt(-2.0 * np.log1p(-u[..., 0]))
    return r * np.cos(2.0 * math.pi * u[..., 1])


class RngStream:
    """Buffered stream of uniforms on [0, 1) from one derived PCG64 generator.

    Draws are served from a block buffer, so the sequence does not depend on
    how requests are sliced.  Normals use the cosine branch of Box-Muller and
    consume exactly two uniforms each.  ``n_uniform`` / ``n_normal`` count
    the variates handed out (uniforms spent on normals are not double counted).
    """

    def __init__(self, seed: int, index=0):
        self.seed = int(seed)
        self.index = _key(index)
        self._gen = derive_generator(seed, index)
        self._buf = np.empty(0)
        self._pos = 0
        self.n_uniform = 0
        self.n_normal = 0

    def _take(self, n: int) -> np.ndarray:
        if self._pos + n > self._buf.size:
            fresh = self._gen.random(max(_BLOCK, n))
            self._buf = np.concatenate([self._buf[self._pos:], fresh])
            self._pos = 0
        out = self._buf[self._pos:self._pos + n]
        self._pos += n
        return out

    def uniform(self, shape=()) -> np.ndarray | float:
        shape = tuple(np.atleast_1d(shape)) if shape != () else ()
        n = math.prod(shape)
        self.n_uniform += n
        out = self._take(n)
        return float(out[0]) if shape == () else out.reshape(shape)

    def normal(self, shape=()) -> np.ndarray | float:
        shape = tuple(np.atleast_1d(shape)) if shape != () else ()
        n = math.prod(shape)
        self.n_normal += n
        z = _box_muller(self._take(2 * n).reshape(n, 2))
        return float(z[0]) if shape == () else z.reshape(shape)

    def spawn(self, index) -> "RngStream":
        """Independent stream keyed by ``self.index + index``."""
        return RngStream(self.seed, self.index + _key(index))


class StreamBatch:
    """Stack of independent streams, one per leading-axis row.

    ``uniform((S, ...))`` returns row ``i`` filled from stream ``i``, in the
    same order a lone :class:`RngStream` with that key would produce.  This is
    how experiments run several seeds in lockstep while each seed keeps the
    exact sequence it would have on its own.
    """

    def __init__(self, seed: int, indices: Sequence):
        self.seed = int(seed)
        self.indices = [_key(i) for i in indices]
        if not self.indices:
            raise ValueError("StreamBatch needs at least one stream")
        self._gens = [derive_generator(seed, i) for i in self.indices]
        self._buf = np.empty((len(self._gens), 0))
        self._pos = 0
        self.n_uniform = 0
        self.n_normal = 0

    def __len__(self):
        return len(self._gens)

    def _take(self, n: int) -> np.ndarray:
        if self._pos + n > self._buf.shape[1]:
            size = max(_BLOCK, n)
            fresh = np.stack([g.random(size) for g in self._gens])
            self._buf = np.concatenate([self._buf[:, self._pos:], fresh], axis=1)
            self._pos = 0
        out = self._buf[:, self._pos:self._pos + n]
        self._pos += n
        return out

    def _row_shape(self, shape) -> tuple[int, ...]:
        shape = tuple(np.atleast_1d(shape))
        if shape[0] != len(self):
            raise ValueError(f"leading axis {shape[0]} != number of streams {len(self)}")
        return shape[1:]

    def uniform(self, shape) -> np.ndarray:
        rest = self._row_shape(shape)
        n = math.prod(rest)
        self.n_uniform += n * len(self)
        return self._take(n).reshape((len(self),) + rest)

    def normal(self, shape) -> np.ndarray:
        rest = self._row_shape(shape)
        n = math.prod(rest)
        self.n_normal += n * len(self)
        z = _box_muller(self._take(2 * n).reshape(len(self), n, 2))
        return z.reshape((len(self),) + rest)


def standard_normal(rng, shape=()):
    """Standard normal draw(s) from ``rng`` (two uniforms per variate)."""
    return rng.normal(shape)


# --------------------------------------------------------------------------
# Validation and simulation
# --------------------------------------------------------------------------


def validate_spec(spec: SdeSpec, probe_points) -> list[str]:
    """Evaluate ``spec`` at ``(x, t)`` probes and list every contract violation.

    An empty list means the SDE is well formed at all probes.
    """
    probe_points = list(probe_points)
    if not probe_points:
        raise ValueError("need at least one probe point")
    report = []
    for k, (x, t) in enumerate(probe_points):
        x = np.asarray(x, dtype=float)
        tag = f"probe {k} (x={x.tolist()}, t={t})"
        for name, fn in (("drift", spec.drift), ("diffusion", spec.diffusion)):
            try:
                out = np.asarray(fn(x, t), dtype=float)
            except Exception as exc:  # noqa: BLE001 - any evaluator failure is a finding
                report.append(f"{tag}: {name} raised {type(exc).__name__}: {exc}")
                continue
            if out.shape != (spec.dim,):
                report.append(f"{tag}: {name} has shape {out.shape}, expected ({spec.dim},)")
                continue
            if not np.all(np.isfinite(out)):
                report.append(f"{tag}: {name} is not finite")
            if name == "diffusion" and np.any(out < 0):
                report.append(f"{tag}: diffusion has negative entries {out[out < 0].tolist()}")
    return report


class Stepper(Protocol):
    gaussian_free: bool

    def __call__(self, spec: SdeSpec, x: np.ndarray, t: float, cfg: StepConfig, rng) -> np.ndarray:
        ...


@dataclass
class PathResult:
    """Final state of :func:`simulate_path`.

    ``diverged_step`` has the batch shape of the state and holds the 1-based
    step at which each replica diverged, or -1.  Diverged replicas are
    frozen at NaN.
    """

    state: np.ndarray
    time: float
    steps_taken: int
    diverged_step: np.ndarray = field(repr=False)

    @property
    def diverged(self) -> np.ndarray:
        return self.diverged_step >= 0

    @property
    def any_diverged(self) -> bool:
        return bool(np.any(self.diverged))


def simulate_path(spec: SdeSpec, stepper: Stepper, x0, cfg: StepConfig, rng,
                  observer: Callable[[int, float, np.ndarray], None] | None = None) -> PathResult:
    """Apply ``stepper`` ``cfg.n_steps`` times starting from ``x0`` at ``cfg.t0``.

    ``x0`` has shape ``(d,)`` or ``(..., d)`` for a batch of replicas.
    ``observer(k, t, x)`` is called after every step ``k = 1..N`` with the new
    time and state.  A replica whose state becomes non-finite or exceeds
    :data:`DIVERGENCE_THRESHOLD` is marked diverged and held at NaN; the run
    stops early once every replica has diverged.
    """
    x = np.array(x0, dtype=float)
    if x.shape[-1:] != (spec.dim,):
        raise ValueError(f"x0 has shape {x.shape}, expected trailing dimension {spec.dim}")
    batch = x.shape[:-1]
    diverged_step = np.full(batch, -1, dtype=np.int64)
    t = cfg.t0
    k = 0
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(1, cfg.n_steps + 1):
            x = stepper(spec, x, t, cfg, rng)
            t = cfg.t0 + k * cfg.dt
            # NaN compares False, so it fails the check too
            if not np.abs(x).max() <= DIVERGENCE_THRESHOLD:
                bad = ~np.all(np.abs(x) <= DIVERGENCE_THRESHOLD, axis=-1)
                fresh = bad & (diverged_step < 0)
                diverged_step[fresh] = k
                x = np.where(bad[..., None], np.nan, x)
            if observer is not None:
                observer(k, t, x)
            if np.all(diverged_step >= 0):
                break
    return PathResult(state=x, time=t, steps_taken=k, diverged_step=diverged_step)
