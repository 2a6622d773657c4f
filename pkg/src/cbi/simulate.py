"""Euler simulation of the CBI stochastic equation and of its decoupled auxiliary process.

Scheme on a uniform grid ``t_i = i h`` (the last step may be shorter):

1. the linear part ``dX = (beta' + A X) dt`` is advanced exactly,
   ``X <- e^{hA} X + int_0^h e^{sA} beta' ds``;
2. the diffusion adds ``sqrt(2 c_k max(X_k, 0)) dW_k`` evaluated at the
   start of the step;
3. jump events falling into the step are applied in time order: immigration
   jumps are always added, a branching event ``(t, z, r)`` of ``N_j`` is
   accepted iff ``r <= X_j`` (thinning);
4. the state is projected onto the orthant and the projection distance kept.

Finite-activity measures are sampled in full. Infinite-activity measures are
truncated at ``|z| > eps``; the branching small jumps are dropped (their
compensated integral has mean zero) and the immigration small jumps enter
through their mean. ``A = B - M_eps`` with
``M_eps[k, j] = int_{|z| > eps} z_k mu_j`` (full moment for finite parts).

The auxiliary process runs the same kernel on the same events but only sees
coordinate ``k`` of the events of ``N_k`` and of ``N_nu``, with the diagonal
drift ``a_kk``.

Thinning marks of ``N_j`` are organised in layers ``[0, R0]`` and
``(R0 2^(L-1), R0 2^L]`` with ``R0 = 4 (max x + T max beta)``, at least 1,
and the horizon is cut into blocks of
``BLOCK_STEPS`` steps. Each (component, layer, block) has its own substream.
A block starts with the layers covering the current state; when a state
overtakes its top mark the block gets one more layer and is rerun. Events
above the state are rejected anyway, so the path is a function of
``(seed, path)`` only.
"""
from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Sequence

import numpy as np
from numba import njit

from .boundary import affine_flow
from .levy import LevyMeasure, Sum, Zero
from .params import AdmissibleParams, StructureError

__all__ = [
    "SimConfig",
    "DriverRealization",
    "Trajectory",
    "Ensemble",
    "make_drivers",
    "simulate_cbi",
    "simulate_auxiliary",
    "run_ensemble",
    "coupling_stats",
    "empirical_laplace",
    "boundary_stats",
    "write_trajectories_csv",
    "default_workers",
    "EULER_BIAS_CONSTANT",
    "EventBudgetError",
]

WORKERS_ENV = "CBI_WORKERS"

# weak-error allowance ``C h`` used when comparing Monte Carlo Laplace
# transforms with the Riccati value; see the convergence tests for the
# measured size of the bias
EULER_BIAS_CONSTANT = 1.0

# substream labels
_W, _GAUSS, _NU, _MU = 0, 1, 2, 3


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class SimConfig:
    T: float
    h: float
    eps: float = 1e-3
    seed: int = 0
    n_paths: int = 1
    small_jumps: str = "compensate"  # or "gaussian"
    workers: int | None = None

    def __post_init__(self):
        if not (self.T > 0 and self.h > 0 and self.eps > 0):
            raise ValueError("T, h and eps must be positive")
        if self.h > self.T:
            raise ValueError("h must not exceed T")
        if self.n_paths < 1:
            raise ValueError("n_paths must be at least 1")
        if self.small_jumps not in ("compensate", "gaussian"):
            raise ValueError("small_jumps must be 'compensate' or 'gaussian'")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")

    @property
    def n_steps(self) -> int:
        # guard against h dividing T up to rounding
        n = math.ceil(self.T / self.h - 1e-9)
        return max(n, 1)

    def grid(self) -> np.ndarray:
        n = self.n_steps
        t = np.arange(n + 1) * self.h
        t[-1] = self.T
        return t


# ---------------------------------------------------------------------------
# per-parameter setup
# ---------------------------------------------------------------------------


def _parts(m: LevyMeasure) -> tuple[LevyMeasure, ...]:
    return m.parts if isinstance(m, Sum) else (m,)


def _threshold(m: LevyMeasure, eps: float) -> float:
    return 0.0 if m.finite_activity else eps


@dataclass(frozen=True, eq=False)
class _Setup:
    """Scheme coefficients shared by all paths of one run."""

    A: np.ndarray
    beta_eff: np.ndarray
    sig: np.ndarray
    chol: np.ndarray  # (d, d, d): Cholesky factor of the small-jump covariance of mu_j
    E: np.ndarray
    q: np.ndarray
    E_last: np.ndarray
    q_last: np.ndarray
    Ea: np.ndarray
    qa: np.ndarray
    Ea_last: np.ndarray
    qa_last: np.ndarray


def _psd_factor(S: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(0.5 * (S + S.T))
    return V * np.sqrt(np.clip(w, 0.0, None))


def _setup(p: AdmissibleParams, cfg: SimConfig) -> _Setup:
    d, eps = p.dim, cfg.eps
    A = np.array(p.B, dtype=float)
    for j, m in enumerate(p.mu):
        for part in _parts(m):
            lo = _threshold(part, eps)
            for k in range(d):
                A[k, j] -= part.coord_moment(k, lo, math.inf)[0]
    beta_eff = np.array(p.beta, dtype=float)
    for part in _parts(p.nu):
        if not part.finite_activity:
            beta_eff += [part.coord_moment(k, 0.0, eps)[0] for k in range(d)]
    chol = np.zeros((d, d, d))
    if cfg.small_jumps == "gaussian":
        for j, m in enumerate(p.mu):
            S = np.zeros((d, d))
            for part in _parts(m):
                if part.finite_activity:
                    continue
                for k in range(d):
                    for l in range(d):
                        S[k, l] += part.second_moment(k, l, 0.0, eps)[0]
            chol[j] = _psd_factor(S)
    h, n = cfg.h, cfg.n_steps
    h_last = cfg.T - (n - 1) * h
    Ad = np.diag(np.diag(A))
    E, q = affine_flow(A, beta_eff, h)
    E_last, q_last = affine_flow(A, beta_eff, h_last)
    Ea, qa = affine_flow(Ad, beta_eff, h)
    Ea_last, qa_last = affine_flow(Ad, beta_eff, h_last)
    # the auxiliary flow is diagonal; drop rounding noise off the diagonal
    Ea, Ea_last = np.diag(np.diag(Ea)), np.diag(np.diag(Ea_last))
    sig = np.sqrt(2.0 * p.c)
    return _Setup(A, beta_eff, sig, chol, E, q, E_last, q_last, Ea, qa, Ea_last, qa_last)


# ---------------------------------------------------------------------------
# drivers
# ---------------------------------------------------------------------------

BLOCK_STEPS = 64
# refuse to draw more events than this for one (component, layer, block)
MAX_LAYER_EVENTS = 20_000_000


class EventBudgetError(ValueError):
    """A path grew so large that thinning would need an unreasonable number of events."""


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def _layer_range(R0: float, L: int) -> tuple[float, float]:
    return (0.0, R0) if L == 0 else (R0 * 2.0 ** (L - 1), R0 * 2.0**L)


@dataclass(frozen=True, eq=False)
class DriverRealization:
    """Noise of one path: Brownian increments, immigration events and marked branching events.

    Branching events are produced on demand per time block and mark layer:
    :meth:`branching_events` with key ``(j, L, b)`` returns the events of
    ``N_j`` in block ``b`` with marks in layer ``L`` (layer 0 is
    ``[0, R0]``, layer ``L`` is ``(R0 2^(L-1), R0 2^L]``). Every key has its
    own substream, so the realisation does not depend on which keys were
    requested. ``mark_overrides`` replaces single marks and exists for
    sanity checks of the coupling.
    """

    path: int
    seed: int
    grid: np.ndarray
    dW: np.ndarray  # (n, d) increments
    gauss: np.ndarray  # (n, d, d) standard normals, empty unless the gaussian mode is on
    nu_times: np.ndarray
    nu_jumps: np.ndarray
    mu: tuple[LevyMeasure, ...]
    eps: float
    R0: float
    block_starts: np.ndarray  # step index of each block start, plus n
    mark_overrides: tuple[tuple[int, int, int, int, float], ...] = ()
    # events already drawn; not an init field, so ``replace`` starts afresh
    _cache: dict = field(init=False, repr=False, default_factory=dict)

    @property
    def n_blocks(self) -> int:
        return len(self.block_starts) - 1

    def branching_events(self, j: int, L: int, b: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return _cached(self, ("mu", j, L, b), lambda: self._draw(j, L, b))

    def _draw(self, j: int, L: int, b: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        lo, hi = _layer_range(self.R0, L)
        t0 = self.grid[self.block_starts[b]]
        t1 = self.grid[self.block_starts[b + 1]]
        rng = _rng(self.seed, self.path, _MU, j, L, b)
        times, jumps, marks = [], [], []
        m = self.mu[j]
        expected = (t1 - t0) * (hi - lo) * sum(part.tail_mass(_threshold(part, self.eps)) for part in _parts(m))
        if expected > MAX_LAYER_EVENTS:
            raise EventBudgetError(
                f"path {self.path}: about {expected:.3g} events of N_{j} needed for marks up to {hi:.3g} "
                f"in one block at eps={self.eps}; the state is too large for thinning at this truncation"
            )
        for part in _parts(m):
            t, z = part.poisson_events(_threshold(part, self.eps), t1 - t0, hi - lo, rng)
            times.append(t + t0)
            jumps.append(z.reshape(len(t), m.dim))
            marks.append(rng.uniform(lo, hi, len(t)))
        t, z, r = np.concatenate(times), np.concatenate(jumps), np.concatenate(marks)
        order = np.argsort(t, kind="stable")
        t, z, r = t[order], z[order], r[order]
        for jj, LL, bb, i, value in self.mark_overrides:
            if (jj, LL, bb) == (j, L, b):
                r[i] = value
        for a in (t, z, r):
            a.flags.writeable = False
        return t, z, r

    def with_mark(self, j: int, L: int, b: int, i: int, value: float) -> DriverRealization:
        return replace(self, mark_overrides=self.mark_overrides + ((j, L, b, i, float(value)),))

    def coarsen(self) -> DriverRealization:
        """The same noise on the grid with every other point removed.

        Brownian increments are summed pairwise; events and block time
        windows are unchanged. Needs an even number of steps in every block.
        """
        if np.any(self.block_starts % 2):
            raise ValueError("coarsening needs an even number of steps in every block")
        dW = self.dW[0::2] + self.dW[1::2]
        gauss = self.gauss
        if len(gauss):
            gauss = (gauss[0::2] + gauss[1::2]) / math.sqrt(2.0)
        return replace(self, grid=self.grid[0::2], dW=dW, gauss=gauss, block_starts=self.block_starts // 2)


# events kept per driver; beyond this they are drawn again from their substream
CACHE_EVENTS = 4_000_000


def _cached(drv: DriverRealization, key: tuple, build):
    hit = drv._cache.get(key)
    if hit is not None:
        return hit
    value = build()
    size = drv._cache.get("size", 0) + len(value[0])
    if size <= CACHE_EVENTS:
        drv._cache[key] = value
        drv._cache["size"] = size
    return value


def make_drivers(p: AdmissibleParams, x: Any, cfg: SimConfig, path: int) -> DriverRealization:
    """The noise of ``path``, a function of ``(cfg.seed, path)`` only."""
    d = p.dim
    x = np.asarray(x, dtype=float)
    grid = cfg.grid()
    n = len(grid) - 1
    steps = np.diff(grid)
    dW = _rng(cfg.seed, path, _W).standard_normal((n, d)) * np.sqrt(steps)[:, None]
    if cfg.small_jumps == "gaussian":
        gauss = _rng(cfg.seed, path, _GAUSS).standard_normal((n, d, d))
    else:
        gauss = np.zeros((0, d, d))
    nu_rng = _rng(cfg.seed, path, _NU)
    pieces = [part.poisson_events(_threshold(part, cfg.eps), cfg.T, 1.0, nu_rng) for part in _parts(p.nu)]
    nu_t = np.concatenate([t for t, _ in pieces])
    nu_z = np.concatenate([z.reshape(len(t), d) for t, z in pieces])
    order = np.argsort(nu_t, kind="stable")
    nu_t, nu_z = nu_t[order], nu_z[order]
    R0 = max(1.0, 4.0 * (float(x.max()) + cfg.T * float(p.beta.max())))
    if all(isinstance(m, Zero) for m in p.mu):
        starts = np.array([0, n])  # no marks, so a single block
    else:
        starts = np.append(np.arange(0, n, BLOCK_STEPS), n)
    return DriverRealization(path, cfg.seed, grid, dW, gauss, nu_t, nu_z, p.mu, cfg.eps, R0, starts)


def _layers_for(drv: DriverRealization, state: np.ndarray) -> list[int]:
    # smallest layer count whose top mark covers the state
    out = []
    for v in state:
        L = 1
        while drv.R0 * 2.0 ** (L - 1) < v:
            L += 1
        out.append(L)
    return out


def _block_events(drv: DriverRealization, b: int, layers: Sequence[int]) -> tuple[np.ndarray, ...]:
    return _cached(drv, ("block", b, tuple(layers)), lambda: _merge_block_events(drv, b, layers))


def _merge_block_events(drv: DriverRealization, b: int, layers: Sequence[int]) -> tuple[np.ndarray, ...]:
    d = drv.dW.shape[1]
    t0 = drv.grid[drv.block_starts[b]]
    t1 = drv.grid[drv.block_starts[b + 1]]
    lo, hi = np.searchsorted(drv.nu_times, [t0, t1], side="right")
    if b == 0:
        lo = 0
    times = [drv.nu_times[lo:hi]]
    kinds = [np.full(hi - lo, -1)]
    jumps = [drv.nu_jumps[lo:hi].reshape(-1, d)]
    marks = [np.zeros(hi - lo)]
    for j, nl in enumerate(layers):
        if isinstance(drv.mu[j], Zero):
            continue
        for L in range(nl):
            t, z, r = drv.branching_events(j, L, b)
            times.append(t)
            kinds.append(np.full(len(t), j))
            jumps.append(z)
            marks.append(r)
    t = np.concatenate(times)
    order = np.argsort(t, kind="stable")
    step = np.searchsorted(drv.grid, t[order], side="left") - 1
    step = np.clip(step, drv.block_starts[b], drv.block_starts[b + 1] - 1)
    return (
        step.astype(np.int64),
        np.concatenate(kinds)[order].astype(np.int64),
        np.ascontiguousarray(np.concatenate(jumps)[order]),
        np.concatenate(marks)[order],
    )


# ---------------------------------------------------------------------------
# kernel
# ---------------------------------------------------------------------------


@njit(cache=True)
def _kernel(out, i0, i1, E, q, E_last, q_last, sig, dW, steps, chol, gauss, ev_step, ev_kind, ev_z, ev_r, bounds, aux):
    """Advance ``out[i0] -> out[i1]`` in place; returns ``(projection, overflowing component or -1)``."""
    n, d = dW.shape
    x = out[i0].copy()
    pre = np.empty(d)
    proj = 0.0
    m = ev_step.shape[0]
    use_gauss = gauss.shape[0] > 0
    e = 0
    for i in range(i0, i1):
        pre[:] = x
        Ei = E_last if i == n - 1 else E
        qi = q_last if i == n - 1 else q
        for k in range(d):
            acc = qi[k]
            for l in range(d):
                acc += Ei[k, l] * pre[l]
            x[k] = acc
        for k in range(d):
            if sig[k] > 0.0:
                x[k] += sig[k] * math.sqrt(max(pre[k], 0.0)) * dW[i, k]
        if use_gauss:
            for j in range(d):
                s = math.sqrt(max(pre[j], 0.0) * steps[i])
                for k in range(d):
                    if aux and k != j:
                        continue
                    acc = 0.0
                    for l in range(d):
                        acc += chol[j, k, l] * gauss[i, j, l]
                    x[k] += s * acc
        while e < m and ev_step[e] == i:
            j = ev_kind[e]
            if j < 0:
                for k in range(d):
                    x[k] += ev_z[e, k]
            else:
                if x[j] > bounds[j]:
                    return proj, j
                if ev_r[e] <= x[j]:
                    if aux:
                        x[j] += ev_z[e, j]
                    else:
                        for k in range(d):
                            x[k] += ev_z[e, k]
            e += 1
        for k in range(d):
            if x[k] < 0.0:
                proj = max(proj, -x[k])
                x[k] = 0.0
        out[i + 1] = x
    return proj, -1


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Grid snapshots of one path; ``projection`` is the largest orthant correction applied."""

    t: np.ndarray
    states: np.ndarray
    projection: float
    path: int = 0
    auxiliary: bool = False


def _run(
    p: AdmissibleParams, x: Any, cfg: SimConfig, drv: DriverRealization | None, aux: bool, setup: _Setup | None
) -> Trajectory:
    x = np.asarray(x, dtype=float)
    if x.shape != (p.dim,) or np.any(x < 0) or not np.all(np.isfinite(x)):
        raise ValueError("initial state must be a vector in the nonnegative orthant")
    drv = drv or make_drivers(p, x, cfg, 0)
    n = len(drv.dW)
    steps = np.diff(drv.grid)
    if n != cfg.n_steps or not np.allclose(steps, np.diff(cfg.grid()), rtol=0, atol=1e-12):
        # a coarsened driver carries its own step
        cfg = replace(cfg, h=float(steps[0]))
        setup = None
    setup = setup or _setup(p, cfg)
    if aux:
        flows = (setup.Ea, setup.qa, setup.Ea_last, setup.qa_last)
    else:
        flows = (setup.E, setup.q, setup.E_last, setup.q_last)
    out = np.empty((n + 1, p.dim))
    out[0] = x
    proj = 0.0
    for b in range(drv.n_blocks):
        i0, i1 = int(drv.block_starts[b]), int(drv.block_starts[b + 1])
        layers = _layers_for(drv, out[i0])
        while True:
            bounds = drv.R0 * 2.0 ** (np.array(layers, dtype=float) - 1)
            ev = _block_events(drv, b, layers)
            pb, overflow = _kernel(
                out, i0, i1, *flows, setup.sig, drv.dW, steps, setup.chol, drv.gauss, *ev, bounds, aux
            )
            if overflow < 0:
                break
            layers[overflow] += 1
        proj = max(proj, pb)
    return Trajectory(drv.grid, out, float(proj), drv.path, aux)


def simulate_cbi(
    p: AdmissibleParams, x: Any, cfg: SimConfig, drv: DriverRealization | None = None
) -> Trajectory:
    """One path of the CBI process; ``drv`` defaults to path 0 of ``cfg.seed``."""
    return _run(p, x, cfg, drv, False, None)


def simulate_auxiliary(
    p: AdmissibleParams, y: Any, cfg: SimConfig, drv: DriverRealization | None = None
) -> Trajectory:
    """One path of the auxiliary process driven by the same noise as :func:`simulate_cbi`."""
    return _run(p, y, cfg, drv, True, None)


def _pair(p, x, cfg, setup, path, coupled):
    drv = make_drivers(p, x, cfg, path)
    X = _run(p, x, cfg, drv, False, setup)
    Y = _run(p, x, cfg, drv, True, setup) if coupled else None
    return X, Y


def _chunk(args):
    p, x, cfg, setup, paths, coupled = args
    out = [_pair(p, x, cfg, setup, i, coupled) for i in paths]
    X = np.stack([a.states for a, _ in out])
    Y = np.stack([b.states for _, b in out]) if coupled else None
    proj = np.array([[a.projection, b.projection if b else 0.0] for a, b in out])
    return X, Y, proj


@dataclass(frozen=True, eq=False)
class Ensemble:
    """Snapshots of ``n_paths`` paths: ``X[path, time, component]`` (and ``Y`` for coupled runs)."""

    t: np.ndarray
    X: np.ndarray
    Y: np.ndarray | None
    projection: np.ndarray  # (n_paths, 2): largest correction for X and Y
    config: SimConfig = field(repr=False, default=None)

    def trajectory(self, i: int, auxiliary: bool = False) -> Trajectory:
        arr = self.Y if auxiliary else self.X
        if arr is None:
            raise ValueError("ensemble has no auxiliary paths")
        return Trajectory(self.t, arr[i], float(self.projection[i, int(auxiliary)]), i, auxiliary)


def run_ensemble(p: AdmissibleParams, x: Any, cfg: SimConfig, coupled: bool = False) -> Ensemble:
    """Simulate paths ``0 .. n_paths-1``; the result does not depend on the worker count."""
    x = np.asarray(x, dtype=float)
    setup = _setup(p, cfg)
    workers = cfg.workers or default_workers()
    workers = max(1, min(workers, cfg.n_paths))
    chunks = np.array_split(np.arange(cfg.n_paths), workers)
    jobs = [(p, x, cfg, setup, c.tolist(), coupled) for c in chunks]
    if workers == 1:
        results = [_chunk(jobs[0])]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_chunk, jobs))
    X = np.concatenate([r[0] for r in results])
    Y = np.concatenate([r[1] for r in results]) if coupled else None
    proj = np.concatenate([r[2] for r in results])
    return Ensemble(cfg.grid(), X, Y, proj, cfg)


# ---------------------------------------------------------------------------
# statistics
# ---------------------------------------------------------------------------


def coupling_stats(X: Trajectory, Y: Trajectory) -> np.ndarray:
    """Per component ``max_t (Y_k(t) - X_k(t))`` over the shared grid."""
    if X.t.shape != Y.t.shape or not np.array_equal(X.t, Y.t) or X.states.shape != Y.states.shape:
        raise StructureError("trajectories live on different grids")
    return (Y.states - X.states).max(axis=0)


def _time_index(t_grid: np.ndarray, t: float) -> int:
    i = int(np.argmin(np.abs(t_grid - t)))
    if abs(t_grid[i] - t) > 1e-9 * max(1.0, abs(t)):
        raise ValueError(f"t={t} is not a grid time")
    return i


def empirical_laplace(ens: Ensemble, xi: Any, t: float) -> tuple[float, float]:
    """Mean and standard error of ``exp(-<xi, X(t)>)`` over the paths."""
    xi = np.asarray(xi, dtype=float)
    if np.any(xi < 0):
        raise ValueError("xi must lie in the nonnegative orthant")
    vals = np.exp(-ens.X[:, _time_index(ens.t, t)] @ xi)
    n = len(vals)
    se = float(vals.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    return float(vals.mean()), se


def boundary_stats(ens: Ensemble, k: int, deltas: Sequence[float]) -> np.ndarray:
    """Fraction of paths with ``min_{t <= T} X_k(t) < delta`` for each ``delta``."""
    deltas = np.asarray(deltas, dtype=float)
    if np.any(deltas <= 0) or np.any(np.diff(deltas) > 0):
        raise ValueError("deltas must be positive and decreasing")
    lows = ens.X[:, :, k].min(axis=1)
    return (lows[:, None] < deltas[None, :]).mean(axis=0)


def write_trajectories_csv(path: str | os.PathLike, ens: Ensemble, stride: int = 1) -> None:
    """Columns ``path, t, X_1..X_d`` (and ``Y_1..Y_d``); the last grid time is always written."""
    if stride < 1:
        raise ValueError("stride must be at least 1")
    d = ens.X.shape[2]
    idx = np.arange(0, len(ens.t), stride)
    if idx[-1] != len(ens.t) - 1:
        idx = np.append(idx, len(ens.t) - 1)
    header = ["path", "t"] + [f"X_{k + 1}" for k in range(d)]
    if ens.Y is not None:
        header += [f"Y_{k + 1}" for k in range(d)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(len(ens.X)):
            for j in idx:
                row = [str(i), f"{ens.t[j]:.17g}"] + [f"{v:.17g}" for v in ens.X[i, j]]
                if ens.Y is not None:
                    row += [f"{v:.17g}" for v in ens.Y[i, j]]
                w.writerow(row)
