"""The generator of the mean-field queue and Monte-Carlo Dynkin tests.

Test functions come from a small catalog,

    g(k, x, y) = scale * phi(k) * exp(-alpha x - beta y),

with ``phi`` one of ``1``, ``exp(-k)``, ``min(k, c)/c`` or a bump at a fixed
``k``; plus constants and ``g = scale * x`` (unbounded, handy for checks).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.linalg import expm

from . import _engine as eng
from .intensity import EmpiricalMeasure, IntensityKernel, uniform_grid
from .simulator import FrozenDelay, GivenFlow, ParticleSystem, SelfConsistent
from .state import State, jump_down, jump_up

PHI_CODES = {"one": eng.PHI_ONE, "expk": eng.PHI_EXPK, "cap": eng.PHI_CAP, "bump": eng.PHI_BUMP}
G_CODES = {"const": eng.G_CONST, "product": eng.G_PRODUCT, "linear-x": eng.G_LINEAR_X}


@dataclass(frozen=True)
class TestFunction:
    """Catalog test function with its declared partial derivatives."""

    __test__ = False  # not a pytest class

    kind: str = "product"
    scale: float = 1.0
    alpha: float = 0.0
    beta: float = 0.0
    phi: str = "one"
    phi_param: float = 1.0

    def __post_init__(self):
        if self.kind not in G_CODES:
            raise ValueError(f"unknown test function {self.kind!r}")
        if self.phi not in PHI_CODES:
            raise ValueError(f"unknown phi {self.phi!r}")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be >= 0")
        if self.phi == "cap" and not self.phi_param >= 1:
            raise ValueError("cap level must be >= 1")

    def _phi(self, k: int) -> float:
        if self.phi == "one":
            return 1.0
        if self.phi == "expk":
            return math.exp(-k)
        if self.phi == "cap":
            return min(k, self.phi_param) / self.phi_param
        return 1.0 if k == self.phi_param else 0.0

    def eval(self, s: State) -> float:
        if self.kind == "const":
            return self.scale
        if self.kind == "linear-x":
            return self.scale * s.x
        return self.scale * self._phi(s.k) * math.exp(-self.alpha * s.x - self.beta * s.y)

    def dx(self, s: State) -> float:
        if self.kind == "const":
            return 0.0
        if self.kind == "linear-x":
            return self.scale
        return -self.alpha * self.eval(s)

    def dy(self, s: State) -> float:
        if self.kind == "product":
            return -self.beta * self.eval(s)
        return 0.0

    @property
    def bound(self) -> float:
        return math.inf if self.kind == "linear-x" else abs(self.scale)

    @property
    def code(self) -> int:
        return G_CODES[self.kind]

    @property
    def params(self) -> np.ndarray:
        return np.array([self.scale, self.alpha, self.beta, PHI_CODES[self.phi], self.phi_param])

    @property
    def descriptor(self) -> str:
        if self.kind == "const":
            return f"const:scale={self.scale!r}"
        if self.kind == "linear-x":
            return f"linear-x:scale={self.scale!r}"
        return (f"product:phi={self.phi},p={self.phi_param!r},alpha={self.alpha!r},"
                f"beta={self.beta!r},scale={self.scale!r}")


def parse_test_function(text: str) -> TestFunction:
    """Parse ``id[:key=value,...]``, e.g. ``product:phi=cap,p=10,scale=10``."""
    name, _, rest = text.strip().partition(":")
    kw: dict = {}
    for item in filter(None, rest.split(",")):
        key, sep, val = item.partition("=")
        if not sep:
            raise ValueError(f"bad test-function parameter {item!r} in {text!r}")
        key = key.strip()
        if key == "phi":
            kw["phi"] = val.strip()
        elif key in ("p", "phi_param"):
            kw["phi_param"] = float(val)
        elif key in ("scale", "alpha", "beta"):
            kw[key] = float(val)
        else:
            raise ValueError(f"unknown test-function parameter {key!r}")
    return TestFunction(kind=name, **kw)


@dataclass(frozen=True)
class ObservableProduct:
    """Weights ``prod_j phi_j(X_{t_j})`` for the martingale test.

    ``times`` holds ``t_1 < ... < t_{m+1}`` for ``m = len(phis)`` observables;
    the increment is taken over ``[t_m, t_{m+1}]``. With no observables,
    ``times`` must give the increment interval itself as two points.
    """

    times: tuple[float, ...]
    phis: tuple[TestFunction, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "times", tuple(float(t) for t in self.times))
        object.__setattr__(self, "phis", tuple(self.phis))
        m = len(self.phis)
        if len(self.times) != max(m + 1, 2):
            raise ValueError(f"{m} observables need {max(m + 1, 2)} times, got {len(self.times)}")
        if any(b <= a for a, b in zip(self.times, self.times[1:])) or self.times[0] < 0:
            raise ValueError("observation times must be increasing and nonnegative")

    @property
    def interval(self) -> tuple[float, float]:
        return self.times[-2], self.times[-1]

    @property
    def obs_times(self) -> tuple[float, ...]:
        return self.times[: len(self.phis)]


# -- pointwise and mean-field generators -------------------------------------------


def apply_pointwise_generator(kernel: IntensityKernel, t: float, Xp: State, Y: State, g: TestFunction,
                              X: State) -> float:
    """``L(t, X', Y) g (X)``: rates frozen at ``X'``, jumps and drift applied to ``X``."""
    g0 = g.eval(X)
    val = kernel.lambda_plus(t, Xp, Y) * (g.eval(jump_up(X)) - g0) + g.dx(X)
    if X.k > 0:
        val += kernel.lambda_minus(t, Xp, Y) * (g.eval(jump_down(X)) - g0) + g.dy(X)
    return val


def apply_generator(kernel: IntensityKernel, t: float, Xp: State, mu: EmpiricalMeasure, g: TestFunction,
                    X: State) -> float:
    """``L[t, X', mu] g (X)``, the ``mu``-average of the pointwise generator."""
    return sum(w * apply_pointwise_generator(kernel, t, Xp, Y, g, X) for Y, w in mu.atoms)


# -- Monte-Carlo identities ---------------------------------------------------------


class MCEstimate(NamedTuple):
    mean: float
    se: float

    def passes(self, z: float = 3.0) -> bool:
        return abs(self.mean) <= z * self.se


def _estimate(v: np.ndarray) -> MCEstimate:
    n = v.size
    se = float(v.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    return MCEstimate(float(v.mean()), se)


def _measure_path(system: ParticleSystem, kernel: IntensityKernel, delayed: bool):
    mode = system.config.mode
    if isinstance(mode, SelfConsistent):
        bps, vals = system.ensemble_path(kernel)
        return 0.0, bps, vals
    flow = mode.flow if isinstance(mode, GivenFlow) else system.flow
    lag = mode.h if isinstance(mode, FrozenDelay) and delayed else 0.0
    table = np.ascontiguousarray(flow.feature_table(kernel))
    return lag, np.ascontiguousarray(flow.grid[1:]), table


def dynkin_terms(system: ParticleSystem, kernel: IntensityKernel, g: TestFunction, t1: float, t2: float,
                 obs: ObservableProduct | None = None, *, delayed: bool = True,
                 quad_step: float | None = None):
    """Per-particle ``g(X_t2) - g(X_t1)``, ``int_t1^t2 L g ds`` and observable weight.

    The intensities inside ``L`` follow the system's mode; in frozen-delay
    mode ``delayed=False`` uses the current state and measure instead. The
    integral is a trapezoid rule on the grid refined to ``quad_step``, plus
    every event time of the particle (and its shift by the delay), with
    one-sided limits at each node.
    """
    if not 0 <= t1 < t2 <= system.T:
        raise ValueError(f"need 0 <= t1 < t2 <= T, got {t1}, {t2}")
    delta = system.config.grid_step
    quad_step = delta if quad_step is None else quad_step
    if quad_step > delta * (1 + 1e-12):
        raise ValueError(f"quadrature step {quad_step} coarser than the grid step {delta}")
    lag, bps, vals = _measure_path(system, kernel, delayed)
    nodes = [t1 + uniform_grid(t2 - t1, quad_step), [t1, t2]]
    grid = system.config.mode.flow.grid if isinstance(system.config.mode, GivenFlow) else system.config.grid
    nodes.append(grid)
    if lag > 0:
        nodes.append(grid + lag)
        nodes.append([lag])
    nodes = np.unique(np.concatenate([np.asarray(n, float) for n in nodes]))
    nodes = nodes[(nodes >= t1) & (nodes <= t2)]
    if obs is None:
        obs_t, obs_code, obs_par = np.empty(0), np.empty(0, np.int64), np.empty((0, 5))
    else:
        if obs.times[-1] > system.T:
            raise ValueError("observation times beyond the horizon")
        obs_t = np.array(obs.obs_times, float)
        obs_code = np.array([p.code for p in obs.phis], np.int64)
        obs_par = np.array([p.params for p in obs.phis]).reshape(len(obs.phis), 5)
    side, coef, fx, fyi, _, _ = kernel.engine_arrays()
    s = system
    return eng.dynkin_batch(s.offsets, s.ev_t, s.ev_kind, s.ev_k, s.ev_x, s.ev_y, s.k0, s.x0, s.y0,
                            float(t1), float(t2), g.code, g.params, obs_t, obs_code, obs_par,
                            side, coef, fx, fyi, float(lag), bps, vals, nodes)


def dynkin_residual(system: ParticleSystem, kernel: IntensityKernel, g: TestFunction, t1: float, t2: float,
                    **kw) -> MCEstimate:
    gdiff, integ, _ = dynkin_terms(system, kernel, g, t1, t2, **kw)
    return _estimate(gdiff - integ)


def martingale_test(system: ParticleSystem, kernel: IntensityKernel, g: TestFunction,
                    obs: ObservableProduct, **kw) -> MCEstimate:
    t1, t2 = obs.interval
    gdiff, integ, w = dynkin_terms(system, kernel, g, t1, t2, obs, **kw)
    return _estimate((gdiff - integ) * w)


# -- birth-death oracle for constant kernels ------------------------------------------


def birth_death_generator(a: float, b: float, kmax: int) -> np.ndarray:
    """Generator matrix of the queue length under constant rates, truncated at ``kmax``."""
    n = kmax + 1
    Q = np.zeros((n, n))
    for k in range(n):
        if k < kmax:
            Q[k, k + 1] = a
        if k > 0:
            Q[k, k - 1] = b
        Q[k, k] = -Q[k].sum()
    return Q


def birth_death_expectation(a: float, b: float, p0: np.ndarray, g_of_k: np.ndarray,
                            times: Sequence[float], phis: Sequence[np.ndarray] = ()) -> np.ndarray:
    """``E[prod_j phi_j(k_{t_j}) g(k_t)]`` at every ``t`` in ``times[len(phis):]``.

    ``phis[j]`` is weighted at ``times[j]``; all vectors live on ``0..kmax``.
    """
    kmax = len(p0) - 1
    Q = birth_death_generator(a, b, kmax)
    row = np.asarray(p0, float)
    now = 0.0
    for t, phi in zip(times, phis):
        row = (row @ expm(Q * (t - now))) * phi
        now = t
    out = []
    for t in times[len(phis):]:
        out.append(float(row @ expm(Q * (t - now)) @ g_of_k))
    return np.array(out)


def k_vector(f: TestFunction, kmax: int) -> np.ndarray:
    """Values of a test function that depends on ``k`` only, on ``0..kmax``."""
    if f.kind == "linear-x" or (f.kind == "product" and (f.alpha or f.beta)):
        raise ValueError("test function depends on x or y")
    return np.array([f.eval(State(k, 0.0, 0.0)) for k in range(kmax + 1)])
