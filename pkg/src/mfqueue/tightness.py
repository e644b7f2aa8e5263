"""Empirical tightness diagnostics over a family of frozen-delay systems.

``sko1``: sup over grid times of ``P(|X_t| > c)`` with ``|X| = k + x + y``.
``sko2``: max over grid pairs ``|t - s| <= w`` of ``P(rho(X_t, X_s) > eps)``.
Both are reported per scheme delay ``h``; they are diagnostics of the
finite family simulated, not proofs of the limit statements.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

from . import _engine as eng
from .intensity import KernelBounds
from .simulator import ParticleSystem


@dataclass(frozen=True)
class DiagnosticRow:
    h_scheme: float
    param: float  # c for sko1, window h for sko2
    value: float
    se: float


@dataclass(frozen=True)
class DiagnosticTable:
    name: str
    rows: tuple[DiagnosticRow, ...]

    def params(self) -> list[float]:
        return sorted({r.param for r in self.rows})

    def column_max(self, param: float) -> DiagnosticRow:
        """Row with the largest value over the scheme family at one parameter."""
        return max((r for r in self.rows if r.param == param), key=lambda r: r.value)

    def as_array(self) -> np.ndarray:
        return np.array([(r.h_scheme, r.param, r.value, r.se) for r in self.rows])


def _grid_states(system: ParticleSystem):
    s = system
    grid = s.config.grid
    k, x, y = eng.states_on_grid(s.offsets, s.ev_t, s.ev_kind, s.ev_k, s.ev_x, s.ev_y, s.k0, s.x0, s.y0, grid)
    return grid, k, x, y


def _se(p: float, n: int) -> float:
    return math.sqrt(p * (1 - p) / n)


def _check_family(systems: Mapping[float, ParticleSystem], T: float):
    Ns = {s.N for s in systems.values()}
    Ts = {s.T for s in systems.values()}
    if len(Ns) != 1 or Ts != {T}:
        raise ValueError("systems must share N and the horizon T")


def sko1_diagnostic(systems: Mapping[float, ParticleSystem], T: float, c_grid: Sequence[float]) -> DiagnosticTable:
    _check_family(systems, T)
    rows = []
    for h, s in systems.items():
        _, k, x, y = _grid_states(s)
        norm = k + x + y
        for c in c_grid:
            frac = (norm > c).mean(axis=1)
            g = int(np.argmax(frac))
            rows.append(DiagnosticRow(h, float(c), float(frac[g]), _se(float(frac[g]), s.N)))
    return DiagnosticTable("sko1", tuple(rows))


def sko2_diagnostic(systems: Mapping[float, ParticleSystem], T: float, h_grid: Sequence[float],
                    eps: float) -> DiagnosticTable:
    if not eps > 0:
        raise ValueError("eps must be positive")
    _check_family(systems, T)
    rows = []
    for h, s in systems.items():
        grid, k, x, y = _grid_states(s)
        per_lag: dict[int, tuple[float, float]] = {}
        max_lag = 0
        for w in h_grid:
            max_lag = max(max_lag, _lags_within(grid, w))
        for lag in range(1, max_lag + 1):
            d = (np.abs(k[lag:] - k[:-lag]) + np.abs(x[lag:] - x[:-lag]) + np.abs(y[lag:] - y[:-lag]))
            span = grid[lag:] - grid[:-lag]
            frac = (d > eps).mean(axis=1)
            per_lag[lag] = (frac, span)
        for w in h_grid:
            best = 0.0
            for lag in range(1, _lags_within(grid, w) + 1):
                frac, span = per_lag[lag]
                ok = span <= w * (1 + 1e-9)
                if ok.any():
                    best = max(best, float(frac[ok].max()))
            rows.append(DiagnosticRow(h, float(w), best, _se(best, s.N)))
    return DiagnosticTable("sko2", tuple(rows))


def _lags_within(grid: np.ndarray, w: float) -> int:
    """Largest index lag such that some grid pair that far apart is within ``w``."""
    if w <= 0:
        return 0
    min_step = float(np.diff(grid).min())
    return min(int(math.floor(w / min_step * (1 + 1e-9))), grid.size - 1)


def sko1_level(bounds: KernelBounds, T: float, c0: float, level: float = 0.995) -> float:
    """``c0 + 2T + q`` with ``q`` the ``level`` quantile of Poisson(lambda_bar T).

    The queue grows by at most the number of arrivals and the clocks by at
    most ``T`` each, so ``P(|X_t| > c) <= 1 - level`` for every ``t <= T``.
    """
    return c0 + 2 * T + float(stats.poisson.ppf(level, bounds.lambda_bar * T))


def sko2_bound(total_bar: float, window: float, eps: float) -> float:
    """Jump part ``1 - exp(-total_bar w)`` plus a drift part once ``2 w >= eps``."""
    jump = 1.0 - math.exp(-total_bar * window)
    drift = 0.0 if 2 * window < eps else min(1.0, 2 * window / eps)
    return min(1.0, jump + drift)
