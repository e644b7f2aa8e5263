"""N-particle construction of the mean-field queue.

Three modes share one thinning loop (see :mod:`mfqueue._engine`):

* ``SelfConsistent``: intensities use the current ensemble measure.
* ``FrozenDelay(h)``: intensities use the particle's own state and the
  recorded flow at ``(t - h)+``; the run advances window by window.
* ``GivenFlow(flow)``: particles are independent given an external flow.
"""
from __future__ import annotations

import math
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import stats

from . import _engine as eng
from .intensity import (EmpiricalMeasure, IntensityKernel, MeasureFlow, rates_from_means,
                        uniform_grid)
from .rng import seed_to_uint64
from .state import JumpType, State, Trajectory, TrajectoryEvent, make_trajectory

# -- configuration ---------------------------------------------------------------


@dataclass(frozen=True)
class SelfConsistent:
    def label(self) -> str:
        return "self"


@dataclass(frozen=True)
class FrozenDelay:
    h: float

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError(f"frozen delay h must be positive, got {self.h}")

    def label(self) -> str:
        return f"frozen:{self.h!r}"


@dataclass(frozen=True)
class GivenFlow:
    flow: MeasureFlow = field(compare=False)

    def label(self) -> str:
        return "flow"


SimMode = SelfConsistent | FrozenDelay | GivenFlow


@dataclass(frozen=True)
class SimConfig:
    N: int
    T: float
    mode: SimMode = field(default_factory=SelfConsistent)
    grid_step: float = 0.1
    seed: int = 0
    initial: EmpiricalMeasure | State = State(0, 0.0)

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N}")
        if not self.T > 0 or not math.isfinite(self.T):
            raise ValueError(f"horizon T must be positive, got {self.T}")
        if not self.grid_step > 0:
            raise ValueError(f"grid step must be positive, got {self.grid_step}")
        if isinstance(self.mode, FrozenDelay) and self.grid_step > self.mode.h:
            raise ValueError(f"grid step {self.grid_step} exceeds frozen delay h={self.mode.h}")
        if isinstance(self.mode, GivenFlow) and self.mode.flow.horizon < self.T:
            raise ValueError(f"given flow ends at {self.mode.flow.horizon} < T={self.T}")
        if not isinstance(self.mode, (SelfConsistent, FrozenDelay, GivenFlow)):
            raise TypeError(f"unknown mode {self.mode!r}")
        if isinstance(self.initial, State):
            object.__setattr__(self, "initial", EmpiricalMeasure.point_mass(self.initial))
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "T", float(self.T))

    @property
    def grid(self) -> np.ndarray:
        return uniform_grid(self.T, self.grid_step)


def _initial_states(config: SimConfig):
    mu = config.initial
    n = config.N
    if len(mu) == 1:
        return (np.full(n, mu.k[0], np.int64), np.full(n, mu.x[0]), np.full(n, mu.y[0]))
    return eng.sample_initial(np.uint64(seed_to_uint64(config.seed)), n, np.cumsum(mu.w),
                              np.ascontiguousarray(mu.k), np.ascontiguousarray(mu.x),
                              np.ascontiguousarray(mu.y))


def _cap(n: int, rate: float, span: float) -> int:
    return int(0.6 * n * rate * span) + 64


def _chunks(n: int, threads: int) -> list[tuple[int, int]]:
    threads = max(1, min(int(threads), n))
    edges = np.linspace(0, n, threads + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]


def _run_chunks(fn, chunks, threads):
    if len(chunks) == 1 or threads <= 1:
        return [fn(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, chunks))


# -- the system --------------------------------------------------------------------


class _TrajectoryView(Sequence):
    def __init__(self, system: "ParticleSystem"):
        self._system = system

    def __len__(self):
        return self._system.N

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self._system.trajectory(j) for j in range(*i.indices(len(self)))]
        return self._system.trajectory(i)


class _MarginalView(Sequence):
    def __init__(self, system: "ParticleSystem", grid: np.ndarray):
        self._system = system
        self._grid = grid

    def __len__(self):
        return self._grid.size

    def __getitem__(self, i):
        return self._system.marginal(float(self._grid[i]))


class RecordedFlow(MeasureFlow):
    """Flow of uniform empirical measures of a finished system on its grid.

    Measures are built on demand; feature tables come from exact integer sums.
    """

    def __init__(self, system: "ParticleSystem", grid: np.ndarray, feature_table=None):
        super().__init__(grid, _MarginalView(system, np.asarray(grid)))
        self._system = system
        if feature_table is not None:
            self._feature_cache[tuple(system.kernel.y_features)] = feature_table

    def _compute_feature_table(self, kernel):
        s = self._system
        _, _, _, _, fk, fm = kernel.engine_arrays()
        sums = eng.grid_feature_sums(s.offsets, s.ev_t, s.ev_kind, s.ev_k, s.k0, self.grid, fk, fm)
        # same feature means as the generic route, from exact integer sums
        out = np.empty(sums.shape)
        for f, (kind, kmax) in enumerate(kernel.y_features):
            out[:, f] = 1.0 if kind == 0 else sums[:, f] / (kmax * s.N)
        return out


@dataclass(eq=False)
class ParticleSystem:
    """Finished N-particle run, stored column-wise.

    Events are sorted by particle, then time; particle ``i`` owns the slice
    ``offsets[i]:offsets[i + 1]``. Each event stores its pre-jump state.
    """

    config: SimConfig
    kernel: IntensityKernel
    k0: np.ndarray
    x0: np.ndarray
    y0: np.ndarray
    offsets: np.ndarray
    ev_t: np.ndarray
    ev_kind: np.ndarray
    ev_k: np.ndarray
    ev_x: np.ndarray
    ev_y: np.ndarray
    flow: RecordedFlow = field(init=False)
    _feature_table: np.ndarray | None = None

    def __post_init__(self):
        self.flow = RecordedFlow(self, self.config.grid, self._feature_table)

    @classmethod
    def from_buffers(cls, config, kernel, k0, x0, y0, parts, feature_table=None):
        cols = [np.concatenate([b[c][:ne] for b, ne in parts]) if parts else np.empty(0)
                for c in range(6)]
        p, t, kind, k, x, y = cols
        order = np.argsort(p, kind="stable")
        counts = np.bincount(p[order].astype(np.int64), minlength=config.N)
        offsets = np.zeros(config.N + 1, np.int64)
        np.cumsum(counts, out=offsets[1:])
        return cls(config, kernel, k0, x0, y0, offsets, t[order].astype(np.float64),
                   kind[order].astype(np.int8), k[order].astype(np.int64),
                   x[order].astype(np.float64), y[order].astype(np.float64), feature_table)

    @property
    def N(self) -> int:
        return self.config.N

    @property
    def T(self) -> float:
        return self.config.T

    @property
    def n_events(self) -> int:
        return int(self.ev_t.size)

    @property
    def trajectories(self) -> Sequence[Trajectory]:
        return _TrajectoryView(self)

    def trajectory(self, i: int) -> Trajectory:
        if not 0 <= i < self.N:
            raise IndexError(i)
        lo, hi = self.offsets[i], self.offsets[i + 1]
        evs = tuple(TrajectoryEvent(float(self.ev_t[e]), JumpType.from_code(int(self.ev_kind[e])),
                                    State(int(self.ev_k[e]), float(self.ev_x[e]), float(self.ev_y[e])))
                    for e in range(lo, hi))
        return Trajectory(State(int(self.k0[i]), float(self.x0[i]), float(self.y0[i])), evs, self.T)

    def jump_counts(self) -> np.ndarray:
        return np.diff(self.offsets)

    def states_at(self, t: float, left: bool = False):
        if not 0 <= t <= self.T:
            raise ValueError(f"time {t} outside [0, {self.T}]")
        return eng.states_at(self.offsets, self.ev_t, self.ev_kind, self.ev_k, self.ev_x, self.ev_y,
                             self.k0, self.x0, self.y0, float(t), left)

    def marginal(self, t: float) -> EmpiricalMeasure:
        k, x, y = self.states_at(t)
        return EmpiricalMeasure(k, x, y, np.full(self.N, 1.0 / self.N), check=False)

    @cached_property
    def time_order(self) -> np.ndarray:
        return np.argsort(self.ev_t, kind="stable")

    def ensemble_path(self, kernel: IntensityKernel | None = None):
        """Exact ensemble Y-feature means as a step function ``(breakpoints, values)``."""
        kernel = kernel or self.kernel
        _, _, _, _, fk, fm = kernel.engine_arrays()
        return eng.ensemble_feature_path(self.time_order, self.ev_t, self.ev_kind, self.ev_k,
                                         self.k0, fk, fm)


# -- simulation ---------------------------------------------------------------------


def _seed(config):
    return np.uint64(seed_to_uint64(config.seed))


def _simulate_self(config, kernel, k0, x0, y0):
    side, coef, fx, fyi, fk, fm = kernel.engine_arrays()
    tb = kernel.bounds.total_bar
    buf, ne = eng.simulate_self_consistent(_seed(config), config.T, k0, x0, y0, side, coef, fx, fyi,
                                           fk, fm, tb, _cap(config.N, tb, config.T))
    return ParticleSystem.from_buffers(config, kernel, k0, x0, y0, [(buf, ne)])


def _simulate_given(config, kernel, k0, x0, y0, threads):
    flow = config.mode.flow
    side, coef, fx, fyi, _, _ = kernel.engine_arrays()
    tb = kernel.bounds.total_bar
    table = np.ascontiguousarray(flow.feature_table(kernel))
    grid = np.ascontiguousarray(flow.grid)
    seed = _seed(config)

    def work(chunk):
        lo, hi = chunk
        return eng.simulate_given_flow(seed, config.T, lo, hi, k0, x0, y0, grid, table,
                                       side, coef, fx, fyi, tb, _cap(hi - lo, tb, config.T))

    parts = _run_chunks(work, _chunks(config.N, threads), threads)
    return ParticleSystem.from_buffers(config, kernel, k0, x0, y0, parts)


class FrozenScheme:
    """Window-by-window frozen-delay construction in progress.

    After ``j`` completed steps all particles and the recorded flow are final
    up to ``j * h`` (``T`` for the last window).
    """

    def __init__(self, config: SimConfig, kernel: IntensityKernel, threads: int = 1):
        if not isinstance(config.mode, FrozenDelay):
            raise TypeError("FrozenScheme needs a FrozenDelay mode")
        self.config = config
        self.kernel = kernel
        self.threads = max(1, int(threads))
        self.h = h = float(config.mode.h)
        T = config.T
        n_win = max(1, int(math.ceil(T / h - 1e-9)))
        self.windows = [(j * h, min((j + 1) * h, T)) for j in range(n_win)]
        self.windows[-1] = (self.windows[-1][0], T)
        self.grid = config.grid
        self._arrays = kernel.engine_arrays()
        fk, fm = self._arrays[4], self._arrays[5]
        k0, x0, y0 = _initial_states(config)
        self.k0, self.x0, self.y0 = k0, x0, y0
        N = config.N
        self.cur = [k0.copy(), x0.copy(), y0.copy(), np.zeros(N)]
        self.prev_anchor = [k0.copy(), x0.copy(), y0.copy(), np.zeros(N)]
        self.prev_events = (np.empty(0), np.empty(0, np.int8), np.empty(0, np.int64),
                            np.empty(0), np.empty(0))
        self.prev_off = np.zeros(N + 1, np.int64)
        self.rec_isum = np.zeros((self.grid.size, fk.size), np.int64)
        for f in range(fk.size):
            self.rec_isum[0, f] = N if fk[f] == 0 else int(np.minimum(k0, fm[f]).sum())
        self.upto = 0
        self.completed = 0
        self.parts: list = []

    @property
    def done(self) -> bool:
        return self.completed == len(self.windows)

    def _table(self) -> np.ndarray:
        fk, fm = self._arrays[4], self._arrays[5]
        table = np.full(self.rec_isum.shape, np.nan)
        rows = self.rec_isum[: self.upto + 1]
        for f in range(fk.size):
            table[: self.upto + 1, f] = 1.0 if fk[f] == 0 else rows[:, f] / (fm[f] * self.config.N)
        return table

    def step(self, j: int) -> None:
        if j != self.completed:
            raise RuntimeError(f"window {j} requested but {self.completed} windows are complete")
        a, b = self.windows[j]
        side, coef, fx, fyi, fk, fm = self._arrays
        tb = self.kernel.bounds.total_bar
        grid = self.grid
        rec_lo = int(np.searchsorted(grid, a, side="right"))
        rec_hi = grid.size if j == len(self.windows) - 1 else int(np.searchsorted(grid, b, side="right"))
        table = self._table()
        anchor = [c.copy() for c in self.cur]
        ck, cx, cy, ct = self.cur
        pk, px, py, pt = self.prev_anchor
        p_t, p_kind, p_k, p_x, p_y = self.prev_events
        seed = _seed(self.config)
        chunks = _chunks(self.config.N, self.threads)

        def work(chunk):
            lo, hi = chunk
            isum = np.zeros_like(self.rec_isum)
            buf, ne = eng.frozen_window(seed, j + 1, a, b, self.h, lo, hi, ck, cx, cy, ct, pk, px, py, pt,
                                        p_t, p_kind, p_k, p_x, p_y, self.prev_off, grid, table,
                                        self.upto, rec_lo, rec_hi, fk, fm, isum,
                                        side, coef, fx, fyi, tb, _cap(hi - lo, tb, b - a))
            return buf, ne, isum

        out = _run_chunks(work, chunks, self.threads)
        for _, _, isum in out:
            self.rec_isum += isum
        parts = [(buf, ne) for buf, ne, _ in out]
        self.parts.extend(parts)
        cols = [np.concatenate([buf[c][:ne] for buf, ne in parts]) for c in range(6)]
        counts = np.bincount(cols[0], minlength=self.config.N)
        self.prev_off = np.zeros(self.config.N + 1, np.int64)
        np.cumsum(counts, out=self.prev_off[1:])
        self.prev_events = tuple(cols[1:])
        self.prev_anchor = anchor
        self.upto = rec_hi - 1
        self.completed += 1

    def run(self) -> "ParticleSystem":
        while not self.done:
            self.step(self.completed)
        return self.finish()

    def finish(self) -> "ParticleSystem":
        if not self.done:
            raise RuntimeError("frozen scheme not finished")
        return ParticleSystem.from_buffers(self.config, self.kernel, self.k0, self.x0, self.y0,
                                           self.parts, feature_table=self._table())


def frozen_window_step(scheme: FrozenScheme, j: int) -> FrozenScheme:
    """Extend every particle over window ``j``; windows must be taken in order."""
    scheme.step(j)
    return scheme


def simulate(config: SimConfig, kernel: IntensityKernel, *, threads: int = 1) -> ParticleSystem:
    """Run the particle system; the result is a deterministic function of the config."""
    b = kernel.bounds
    if not (math.isfinite(b.total_bar) and math.isfinite(b.lambda_bar)):
        raise ValueError("kernel bounds must be finite")
    if isinstance(config.mode, FrozenDelay):
        return FrozenScheme(config, kernel, threads).run()
    k0, x0, y0 = _initial_states(config)
    if isinstance(config.mode, GivenFlow):
        return _simulate_given(config, kernel, k0, x0, y0, threads)
    return _simulate_self(config, kernel, k0, x0, y0)


# -- validation and summaries -----------------------------------------------------------


def validate_system(system: ParticleSystem) -> int:
    """Check the trajectory invariants for every particle with array arithmetic.

    Returns the number of events checked; raises ``ValueError`` on the first
    violation. The drift is recomputed with the same floating-point
    operations as the simulator, so equality is exact.
    """
    s = system
    n_ev = s.ev_t.size
    if (s.k0 < 0).any() or (s.x0 < 0).any() or (s.y0 < 0).any() or (s.y0[s.k0 == 0] != 0).any():
        raise ValueError("invalid initial states")
    if n_ev == 0:
        return 0
    owner = np.repeat(np.arange(s.N), np.diff(s.offsets))
    first = np.zeros(n_ev, bool)
    first[s.offsets[:-1][np.diff(s.offsets) > 0]] = True
    # post state of the preceding event (or the initial state)
    up = s.ev_kind > 0
    post_k = np.where(up, s.ev_k + 1, s.ev_k - 1)
    post_x = np.where(up, 0.0, s.ev_x)
    post_y = np.where(up, s.ev_y, 0.0)
    prev_k = np.where(first, s.k0[owner], np.roll(post_k, 1))
    prev_x = np.where(first, s.x0[owner], np.roll(post_x, 1))
    prev_y = np.where(first, s.y0[owner], np.roll(post_y, 1))
    prev_t = np.where(first, 0.0, np.roll(s.ev_t, 1))
    if not (s.ev_t > prev_t).all():
        raise ValueError("event times not strictly increasing")
    if (s.ev_t > s.T).any():
        raise ValueError("event beyond horizon")
    d = s.ev_t - prev_t
    exp_x = prev_x + d
    exp_y = np.where(prev_k > 0, prev_y + d, 0.0)
    bad = (s.ev_k != prev_k) | (s.ev_x != exp_x) | (s.ev_y != exp_y)
    if bad.any():
        e = int(np.argmax(bad))
        raise ValueError(f"event {e} of particle {owner[e]}: pre-state is not the drifted post-state")
    if ((s.ev_kind < 0) & (s.ev_k == 0)).any():
        raise ValueError("service jump from empty system")
    if not np.isin(s.ev_kind, (-1, 1)).all():
        raise ValueError("unknown event kind")
    return n_ev


def jump_count_distribution(system: ParticleSystem) -> np.ndarray:
    """Fraction of particles with exactly ``n`` jumps, indexed by ``n``."""
    return np.bincount(system.jump_counts(), minlength=1) / system.N


@dataclass(frozen=True)
class JumpCountRow:
    n: int
    p_hat: float
    se: float
    poisson_tail: float
    envelope: float

    @property
    def ok(self) -> bool:
        return self.p_hat <= self.poisson_tail + 3 * self.se and self.p_hat <= self.envelope + 3 * self.se


def jump_count_check(system: ParticleSystem) -> list[JumpCountRow]:
    """Compare ``P(exactly n jumps)`` with the dominating Poisson tail and the
    ``(total_bar T)^n / n! exp(-lambda_underbar T)`` envelope."""
    hist = jump_count_distribution(system)
    b = system.kernel.bounds
    lam = b.total_bar * system.T
    rows = []
    for n, p in enumerate(hist):
        se = math.sqrt(max(p * (1 - p), 1.0 / system.N) / system.N)
        tail = float(stats.poisson.sf(n - 1, lam)) if n > 0 else 1.0
        env = math.exp(n * math.log(lam) - math.lgamma(n + 1) - b.lambda_underbar * system.T) if lam > 0 else float(n == 0)
        rows.append(JumpCountRow(n, float(p), se, tail, env))
    return rows


def jump_in_interval_fraction(system: ParticleSystem, s: float, t: float) -> tuple[float, float]:
    """Fraction of particles with at least one jump in ``(s, t]`` and its SE."""
    lo = system.offsets[:-1]
    hi = system.offsets[1:]
    hit = np.zeros(system.N, bool)
    owner = np.repeat(np.arange(system.N), hi - lo)
    mask = (system.ev_t > s) & (system.ev_t <= t)
    hit[owner[mask]] = True
    p = float(hit.mean())
    return p, math.sqrt(max(p * (1 - p), 1.0 / system.N) / system.N)


# -- one-jump probabilities over a frozen history ------------------------------------


def _history_arrays(history: Trajectory):
    ev = history.events
    return (np.array([e.time for e in ev], float), np.array([e.kind.code for e in ev], np.int8),
            np.array([e.pre_state.k for e in ev], np.int64), np.array([e.pre_state.x for e in ev], float),
            np.array([e.pre_state.y for e in ev], float))


def one_jump_probability_oracle(kernel: IntensityKernel, flow: MeasureFlow, s: State, t: float, delta: float,
                                *, history: Trajectory, lag: float, step: float | None = None,
                                event: str = "exact") -> tuple[float, float, float]:
    """Probabilities of one arrival, one service and no jump on ``(t, t + delta]``.

    The particle sits in state ``s`` at time ``t``; its intensities use
    ``history`` and ``flow`` at ``(r - lag)+``, which must not go past
    ``history.horizon``. With ``event="exact"`` the first two entries are the
    probabilities of exactly one jump of each kind; with ``event="first"``
    they are the probabilities that the first jump in the window has that kind.
    Integrals use the composite midpoint rule on a mesh that contains every
    discontinuity of the integrand.
    """
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    if delta == 0:
        return 0.0, 0.0, 1.0
    step = delta / 2000 if step is None else step
    if not 0 < step <= delta / 10:
        raise ValueError(f"quadrature step {step} must be in (0, delta/10]")
    if event not in ("exact", "first"):
        raise ValueError("event must be 'exact' or 'first'")
    if t + delta - lag > history.horizon + 1e-12:
        raise ValueError("frozen history does not cover the window")
    n = int(math.ceil(delta / step))
    pts = [np.linspace(t, t + delta, n + 1)]
    for e in history.events:
        pts.append([e.time + lag])
    pts.append(flow.grid + lag)
    nodes = np.unique(np.concatenate([np.atleast_1d(np.asarray(p, float)) for p in pts]))
    nodes = nodes[(nodes >= t) & (nodes <= t + delta)]
    mids = 0.5 * (nodes[1:] + nodes[:-1])
    widths = np.diff(nodes)
    table = flow.feature_table(kernel)

    def rates(r):
        u = max(r - lag, 0.0)
        X = history.state_at(min(u, history.horizon))
        return rates_from_means(kernel, X, table[flow.index_at(u)])

    lp = np.empty(mids.size)
    lm = np.empty(mids.size)
    for i, r in enumerate(mids):
        lp[i], lm[i] = rates(r)
    g = 1.0 if s.k > 0 else 0.0
    g_down = 1.0 if s.k > 1 else 0.0
    tot_pre = lp + g * lm
    cum_pre = np.concatenate([[0.0], np.cumsum(tot_pre * widths)])
    a_pre = cum_pre[:-1] + 0.5 * tot_pre * widths  # integral up to each midpoint
    p_none = math.exp(-cum_pre[-1])
    if event == "first":
        w = np.exp(-a_pre) * widths
        return float(np.dot(lp, w)), float(g * np.dot(lm, w)), p_none

    def after(tot):
        cum = np.concatenate([[0.0], np.cumsum(tot * widths)])
        return cum[-1] - (cum[:-1] + 0.5 * tot * widths)

    rest_up = after(lp + lm)
    rest_down = after(lp + g_down * lm)
    p_up = float(np.dot(lp * np.exp(-a_pre - rest_up), widths))
    p_down = float(g * np.dot(lm * np.exp(-a_pre - rest_down), widths))
    return p_up, p_down, p_none


def replicate_frozen_window(kernel: IntensityKernel, flow: MeasureFlow, s: State, t: float, delta: float, *,
                            history: Trajectory, lag: float, reps: int, seed: int = 0) -> tuple[int, int, int]:
    """Counts of (one arrival, one service, no jump) over ``reps`` thinning runs."""
    side, coef, fx, fyi, _, _ = kernel.engine_arrays()
    h_t, h_kind, h_k, h_x, h_y = _history_arrays(history)
    ini = history.initial
    up, down, none = eng.replicate_frozen(
        np.uint64(seed_to_uint64(seed)), int(reps), float(t), float(delta), s.k, s.x, s.y, float(lag),
        h_t, h_kind, h_k, h_x, h_y, ini.k, ini.x, ini.y, float(history.horizon),
        np.ascontiguousarray(flow.grid), np.ascontiguousarray(flow.feature_table(kernel)),
        side, coef, fx, fyi, kernel.bounds.total_bar)
    return int(up), int(down), int(none)


def truncate_trajectory(traj: Trajectory, horizon: float) -> Trajectory:
    """The same path observed on ``[0, horizon]`` only."""
    return make_trajectory(traj.initial, [(e.time, e.kind) for e in traj.events if e.time <= horizon], horizon)
