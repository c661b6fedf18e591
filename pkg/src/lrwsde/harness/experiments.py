"""The experiment runners behind the ``lrwsde`` CLI.

Random streams are keyed ``(seed_index, purpose, ...)`` under the base
seed, see :func:`lrwsde.core.derive_generator`.  Purposes:

====  ==========================================================
0     model parameters for a seed (shared by every grid cell)
1     ou-grid trajectory ``(s, 1, dt_index, multiplier_index)``
2     ou-quant trajectory ``(s, 2, scheme_index, dt_index)``; the
      precision is deliberately not in the key, so precisions are
      compared on common random numbers
3     poisson trajectory ``(s, 3, scheme_index, dt_index)``
4     converge replicas ``(0, 4, scheme_index, dt_index)``, one
      stream feeding every replica of the row
5     simulate ``(0, 5)``
====  ==========================================================

Seeds of a grid cell run in lockstep as one batch (:class:`StreamBatch`),
so results do not depend on batching or worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from ..baselines import EMStepper, TwoPointStepper
from ..core import RngStream, SdeSpec, StepConfig, StreamBatch, simulate_path
from ..lrw import make_lrw_stepper
from ..metrics import MomentAccumulator, empirical_gaussian, gaussian_kl, weak_order_estimate
from ..models import OuParams, make_gaussian_flow, make_ou, make_poisson_model, sample_ou_params
from ..quantise import get_format, quantise_spec
from ..transforms import NoiseSchedule, flow_to_sde
from . import convergence
from .config import SCHEMES, ExperimentConfig

PURPOSE_MODEL, PURPOSE_GRID, PURPOSE_QUANT, PURPOSE_POISSON, PURPOSE_CONVERGE, PURPOSE_SIMULATE = range(6)

COLUMNS = {
    "ou-grid": ["dt", "dx_multiplier", "dx", "seed", "kl", "clipped_fraction"],
    "ou-quant": ["scheme", "precision", "dt", "seed", "kl"],
    "poisson": ["scheme", "dt", "seed", "mse", "exploded"],
    "converge": ["scheme", "dt", "n_steps", "replicas", "estimate", "std_error", "error"],
}

EXPLODED = "exploded"
POISSON_TRUE_MEAN = 5.0


def make_stepper(scheme: str, dx=None):
    if scheme == "lrw":
        return make_lrw_stepper(dx)
    if scheme == "em":
        return EMStepper()
    if scheme == "two_point":
        return TwoPointStepper()
    raise ValueError(f"unknown scheme {scheme!r}")


def maybe_quantise(spec: SdeSpec, precision: str) -> SdeSpec:
    return spec if precision == "fp64" else quantise_spec(spec, get_format(precision))


def rule_of_thumb_ou(dt: float, temperature: float) -> float:
    return math.sqrt(2 * dt * temperature)


def _run_tasks(fn, tasks, workers: int):
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, *zip(*tasks)))
    return [fn(*t) for t in tasks]


# --------------------------------------------------------------------------
# Batched models
# --------------------------------------------------------------------------


def ou_params_for_seed(cfg: ExperimentConfig, s: int) -> OuParams:
    return sample_ou_params(cfg.dim, RngStream(cfg.base_seed, (s, PURPOSE_MODEL)), cfg.temperature)


def stacked_ou(params: list[OuParams]):
    """One spec driving a ``(S, d)`` batch where row ``s`` follows ``params[s]``."""
    A = np.stack([p.A for p in params])
    b = np.stack([p.b for p in params])
    noise = math.sqrt(2 * params[0].temperature)
    truth = [make_ou(p)[1:] for p in params]

    def drift(x, t):
        return b - np.matmul(A, x[..., None])[..., 0]

    def diffusion(x, t):
        return np.full(np.shape(x), noise)

    return SdeSpec(params[0].dim, drift, diffusion), truth


def stacked_poisson(params):
    y_sum = np.stack([p.y_sum for p in params]).astype(float)
    p0 = params[0]
    root2 = math.sqrt(2.0)

    def drift(x, t):
        mu, eff = x[..., :1], x[..., 1:]
        g_mu = -(eff - mu).sum(-1, keepdims=True) + mu / p0.sigma1**2
        g_eff = p0.J * np.exp(eff) - y_sum + (eff - mu)
        return -np.concatenate([g_mu, g_eff], axis=-1)

    def diffusion(x, t):
        return np.full(np.shape(x), root2)

    return SdeSpec(p0.d + 1, drift, diffusion)


class MomentRecorder:
    """Observer that streams batch states into one accumulator per row."""

    def __init__(self, n_rows: int, dim: int, n_steps: int, burn_in_fraction: float, chunk: int = 4096):
        self.accs = [MomentAccumulator.for_run(dim, n_steps, burn_in_fraction) for _ in range(n_rows)]
        self._buf = np.empty((chunk, n_rows, dim))
        self._fill = 0

    def __call__(self, k, t, x):
        self._buf[self._fill] = x
        self._fill += 1
        if self._fill == len(self._buf):
            self.flush()

    def flush(self):
        for s, acc in enumerate(self.accs):
            acc.update(self._buf[:self._fill, s])
        self._fill = 0


def _kl_rows(recorder: MomentRecorder, truth, diverged):
    recorder.flush()
    out = []
    for s, acc in enumerate(recorder.accs):
        if diverged[s]:
            out.append(EXPLODED)
            continue
        fit = empirical_gaussian(acc)
        mean, cov = truth[s]
        out.append(gaussian_kl(fit.mean, fit.cov, mean, cov))
    return out


# --------------------------------------------------------------------------
# Experiments
# --------------------------------------------------------------------------


def _dx_multipliers(cfg: ExperimentConfig) -> list[float]:
    return list(cfg.dx_multipliers) if cfg.dx_rule == "multipliers" else [1.0]


def _ou_grid_cell(cfg: ExperimentConfig, i_dt: int, i_mult: int) -> list[dict]:
    dt = cfg.dt_grid[i_dt]
    mult = _dx_multipliers(cfg)[i_mult]
    seeds = range(cfg.n_seeds)
    spec, truth = stacked_ou([ou_params_for_seed(cfg, s) for s in seeds])
    spec = maybe_quantise(spec, cfg.precisions[0])
    dx = mult * rule_of_thumb_ou(dt, cfg.temperature)
    rng = StreamBatch(cfg.base_seed, [(s, PURPOSE_GRID, i_dt, i_mult) for s in seeds])
    stepper = make_lrw_stepper(dx)
    rec = MomentRecorder(cfg.n_seeds, cfg.dim, cfg.n_steps, cfg.burn_in_fraction)
    res = simulate_path(spec, stepper, np.zeros((cfg.n_seeds, cfg.dim)), StepConfig(dt, cfg.n_steps), rng, rec)
    kls = _kl_rows(rec, truth, res.diverged)
    clipped = stepper.clipped_fraction
    return [dict(dt=dt, dx_multiplier=mult, dx=dx, seed=s, kl=kls[s], clipped_fraction=float(clipped[s]))
            for s in seeds]


def run_ou_grid(cfg: ExperimentConfig) -> list[dict]:
    """KL of the LRW stationary law on random 3-d OU problems over a (dt, dx) grid."""
    tasks = [(cfg, i, j) for i in range(len(cfg.dt_grid)) for j in range(len(_dx_multipliers(cfg)))]
    return [row for rows in _run_tasks(_ou_grid_cell, tasks, cfg.workers) for row in rows]


def _ou_quant_cell(cfg: ExperimentConfig, scheme: str, precision: str, i_dt: int) -> list[dict]:
    dt = cfg.dt_grid[i_dt]
    seeds = range(cfg.n_seeds)
    spec, truth = stacked_ou([ou_params_for_seed(cfg, s) for s in seeds])
    spec = maybe_quantise(spec, precision)
    rng = StreamBatch(cfg.base_seed, [(s, PURPOSE_QUANT, SCHEMES.index(scheme), i_dt) for s in seeds])
    stepper = make_stepper(scheme, rule_of_thumb_ou(dt, cfg.temperature))
    rec = MomentRecorder(cfg.n_seeds, cfg.dim, cfg.n_steps, cfg.burn_in_fraction)
    res = simulate_path(spec, stepper, np.zeros((cfg.n_seeds, cfg.dim)), StepConfig(dt, cfg.n_steps), rng, rec)
    kls = _kl_rows(rec, truth, res.diverged)
    return [dict(scheme=scheme, precision=precision, dt=dt, seed=s, kl=kls[s]) for s in seeds]


def run_ou_quantisation(cfg: ExperimentConfig) -> list[dict]:
    """KL of each scheme on random OU problems with drift/diffusion rounded to low precision."""
    tasks = [(cfg, sch, prec, i) for sch in cfg.schemes for prec in cfg.precisions
             for i in range(len(cfg.dt_grid))]
    return [row for rows in _run_tasks(_ou_quant_cell, tasks, cfg.workers) for row in rows]


def poisson_params_for_seed(cfg: ExperimentConfig, s: int):
    return make_poisson_model(cfg.dim, cfg.n_obs, cfg.sigma1, RngStream(cfg.base_seed, (s, PURPOSE_MODEL)))[0]


def _poisson_cell(cfg: ExperimentConfig, scheme: str, i_dt: int) -> list[dict]:
    dt = cfg.dt_grid[i_dt]
    seeds = range(cfg.n_seeds)
    params = [poisson_params_for_seed(cfg, s) for s in seeds]
    spec = maybe_quantise(stacked_poisson(params), cfg.precisions[0])
    rng = StreamBatch(cfg.base_seed, [(s, PURPOSE_POISSON, SCHEMES.index(scheme), i_dt) for s in seeds])
    stepper = make_stepper(scheme, math.sqrt(2 * dt))
    total = np.zeros(cfg.n_seeds)
    skip = math.floor(cfg.n_steps * cfg.burn_in_fraction + 1e-9)

    def observe(k, t, x):
        if k > skip:
            total[:] += x[:, 0]

    x0 = np.stack([p.x_star for p in params])
    res = simulate_path(spec, stepper, x0, StepConfig(dt, cfg.n_steps), rng, observe)
    rows = []
    for s in seeds:
        if res.diverged[s]:
            rows.append(dict(scheme=scheme, dt=dt, seed=s, mse=EXPLODED, exploded=1))
        else:
            mean = total[s] / (cfg.n_steps - skip)
            rows.append(dict(scheme=scheme, dt=dt, seed=s, mse=(mean - POISSON_TRUE_MEAN) ** 2, exploded=0))
    return rows


def run_poisson(cfg: ExperimentConfig) -> list[dict]:
    """Ergodic-mean error for the hierarchical mean of the Poisson random effects posterior."""
    tasks = [(cfg, sch, i) for sch in cfg.schemes for i in range(len(cfg.dt_grid))]
    return [row for rows in _run_tasks(_poisson_cell, tasks, cfg.workers) for row in rows]


def ou_1d_spec() -> SdeSpec:
    spec, _, _ = make_ou(OuParams(np.eye(1), np.zeros(1), 0.5))
    return spec


def _converge_cell(cfg: ExperimentConfig, scheme: str, i_dt: int) -> dict:
    dt = cfg.dt_grid[i_dt]
    n = round(cfg.t_end / dt)
    if not math.isclose(n * dt, cfg.t_end, rel_tol=1e-9):
        raise ValueError(f"dt={dt} does not divide t_end={cfg.t_end}")
    dx = math.sqrt(dt) * convergence.OU_SIGMA
    stepper = make_stepper(scheme, dx)
    rng = RngStream(cfg.base_seed, (0, PURPOSE_CONVERGE, SCHEMES.index(scheme), i_dt))
    x0 = np.full((cfg.n_replicas, 1), convergence.X0)
    res = simulate_path(ou_1d_spec(), stepper, x0, StepConfig(dt, n), rng)
    est, se = convergence.cv_estimate(res.state, convergence.scheme_moments(scheme, dt, n, dx))
    exact = convergence.exact_cos_expectation(cfg.t_end, convergence.X0)
    return dict(scheme=scheme, dt=dt, n_steps=n, replicas=cfg.n_replicas,
                estimate=est, std_error=se, error=abs(est - exact))


def run_convergence(cfg: ExperimentConfig) -> tuple[list[dict], dict[str, float]]:
    """Weak error of ``E[cos x_T]`` on the scalar OU process, and fitted orders."""
    tasks = [(cfg, sch, i) for sch in cfg.schemes for i in range(len(cfg.dt_grid))]
    rows = _run_tasks(_converge_cell, tasks, cfg.workers)
    slopes = {}
    for sch in cfg.schemes:
        pts = [(r["dt"], r["error"]) for r in rows if r["scheme"] == sch]
        slopes[sch] = weak_order_estimate(pts) if len(pts) >= 3 else math.nan
    return rows, slopes


def run_simulate(cfg: ExperimentConfig) -> tuple[list[str], list[dict]]:
    """Single trajectory of the configured model, recorded every ``record_every`` steps."""
    scheme, dt = cfg.schemes[0], cfg.dt_grid[0]
    mult = cfg.dx_multipliers[0] if cfg.dx_rule == "multipliers" else 1.0
    if cfg.model == "ou":
        spec, _, _ = make_ou(ou_params_for_seed(cfg, 0))
        x0 = np.zeros(cfg.dim)
        dx = mult * rule_of_thumb_ou(dt, cfg.temperature)
    elif cfg.model == "poisson":
        params = poisson_params_for_seed(cfg, 0)
        spec = stacked_poisson([params])
        x0 = params.x_star[None, :]
        dx = mult * math.sqrt(2 * dt)
    else:
        ns = NoiseSchedule.linear(2.0, 0.1, a=0.3)
        spec = flow_to_sde(make_gaussian_flow(1.0, ns), ns, cfg.dim)
        x0 = RngStream(cfg.base_seed, (0, PURPOSE_MODEL)).normal((cfg.dim,)) * math.sqrt(1.0 + ns.sigma_of_t(0.0) ** 2)

        def dx(t):
            return mult * math.sqrt(dt * 2 * ns.alpha_of_t(t))

    spec = maybe_quantise(spec, cfg.precisions[0])
    columns = ["step", "t"] + [f"x{i}" for i in range(spec.dim)]
    rows = [dict(step=0, t=0.0, **{f"x{i}": v for i, v in enumerate(np.ravel(x0))})]

    def observe(k, t, x):
        if k % cfg.record_every == 0 or not np.all(np.isfinite(x)):
            rows.append(dict(step=k, t=t, **{f"x{i}": v for i, v in enumerate(np.ravel(x))}))

    stepper = make_stepper(scheme, dx)
    simulate_path(spec, stepper, x0, StepConfig(dt, cfg.n_steps), RngStream(cfg.base_seed, (0, PURPOSE_SIMULATE)),
                  observe)
    return columns, rows


def fmt_value(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return EXPLODED
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)
