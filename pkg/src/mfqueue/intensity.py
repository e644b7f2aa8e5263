"""Intensity kernels, empirical measures, measure flows and the TV proxy.

Catalog kernels are sums of separable terms

    coef * fx(X) * fy(Y)

with ``fx`` one of {1, 1 - exp(-y(X))} and ``fy`` one of
{1, min(k(Y), kmax) / kmax}. Averaging over a measure then only needs the
means of the ``fy`` features, which is what the simulation engine uses.
The service side is always multiplied by ``1(k(X) > 0)``.

Total variation is reported with the mass-2 convention,
``TV(mu, nu) = sum |mu - nu|`` taking values in [0, 2].
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

import numpy as np

from .state import JumpType, State

ARRIVAL, SERVICE = 1, -1

# x-feature codes
FX_ONE, FX_AGE = 0, 1
# y-feature codes
FY_ONE, FY_QUEUE = 0, 1


@dataclass(frozen=True)
class Term:
    side: int  # ARRIVAL or SERVICE
    coef: float
    fx: int = FX_ONE
    fy: int = FY_ONE
    kmax: int = 1

    def __post_init__(self):
        if self.side not in (ARRIVAL, SERVICE):
            raise ValueError(f"bad side {self.side}")
        if not self.coef >= 0 or not math.isfinite(self.coef):
            raise ValueError(f"term coefficient must be finite and >= 0, got {self.coef}")
        if self.fy == FY_QUEUE and self.kmax < 1:
            raise ValueError("kmax must be >= 1")


@dataclass(frozen=True)
class KernelBounds:
    lambda_bar: float
    lambda_underbar: float
    total_bar: float
    K: float

    @property
    def a4(self) -> bool:
        return self.lambda_underbar > 0


def _fx(code: int, s: State) -> float:
    if code == FX_ONE:
        return 1.0
    return 1.0 - math.exp(-s.y)


def _fy(code: int, kmax: int, s: State) -> float:
    if code == FY_ONE:
        return 1.0
    return min(s.k, kmax) / kmax


@dataclass(frozen=True)
class IntensityKernel:
    """Jump intensities ``lambda_plus(t, X, Y)`` and ``lambda_minus(t, X, Y)``.

    Catalog kernels are time-homogeneous; ``t`` is accepted for signature
    compatibility only.
    """

    catalog_id: str
    params: Mapping[str, float]
    terms: tuple[Term, ...]
    bounds: KernelBounds = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        object.__setattr__(self, "params", dict(self.params))
        object.__setattr__(self, "bounds", _bounds_of(self.terms))

    def lambda_plus(self, t: float, X: State, Y: State) -> float:
        return sum(tm.coef * _fx(tm.fx, X) * _fy(tm.fy, tm.kmax, Y)
                   for tm in self.terms if tm.side == ARRIVAL)

    def lambda_minus(self, t: float, X: State, Y: State) -> float:
        if X.k == 0:
            return 0.0
        return sum(tm.coef * _fx(tm.fx, X) * _fy(tm.fy, tm.kmax, Y)
                   for tm in self.terms if tm.side == SERVICE)

    def rate(self, side: JumpType, t: float, X: State, Y: State) -> float:
        return self.lambda_plus(t, X, Y) if side is JumpType.ARRIVAL else self.lambda_minus(t, X, Y)

    # -- vectorized form used by the engine ---------------------------------

    @property
    def y_features(self) -> list[tuple[int, int]]:
        """Distinct ``(fy, kmax)`` pairs; index 0 is always the constant feature."""
        feats = [(FY_ONE, 1)]
        for tm in self.terms:
            key = (FY_ONE, 1) if tm.fy == FY_ONE else (FY_QUEUE, int(tm.kmax))
            if key not in feats:
                feats.append(key)
        return feats

    def engine_arrays(self):
        feats = self.y_features
        side = np.array([tm.side for tm in self.terms], dtype=np.int64)
        coef = np.array([tm.coef for tm in self.terms], dtype=np.float64)
        fx = np.array([tm.fx for tm in self.terms], dtype=np.int64)
        fyi = np.array([feats.index((FY_ONE, 1) if tm.fy == FY_ONE else (FY_QUEUE, int(tm.kmax)))
                        for tm in self.terms], dtype=np.int64)
        feat_kind = np.array([f[0] for f in feats], dtype=np.int64)
        feat_kmax = np.array([f[1] for f in feats], dtype=np.int64)
        return side, coef, fx, fyi, feat_kind, feat_kmax

    @property
    def depends_on_measure(self) -> bool:
        return any(tm.fy != FY_ONE and tm.coef > 0 for tm in self.terms)


def _bounds_of(terms: Sequence[Term]) -> KernelBounds:
    sup = {ARRIVAL: 0.0, SERVICE: 0.0}
    inf = {ARRIVAL: 0.0, SERVICE: 0.0}
    for tm in terms:
        sup[tm.side] += tm.coef
        # both feature families attain 0 (y = 0, or k(Y) = 0)
        if tm.fx == FX_ONE and tm.fy == FY_ONE:
            inf[tm.side] += tm.coef
    lam_bar = max(sup.values())
    lam_under = min(inf.values())
    K = 1.0 / lam_under if lam_under > 0 else math.inf
    return KernelBounds(lam_bar, lam_under, sup[ARRIVAL] + sup[SERVICE], K)


# -- catalog -----------------------------------------------------------------

def const_kernel(a: float, b: float) -> IntensityKernel:
    return IntensityKernel("const", {"a": a, "b": b},
                           (Term(ARRIVAL, a), Term(SERVICE, b)))


def meanfield_queue_kernel(a0: float, a1: float, b0: float, b1: float, kmax: int = 10) -> IntensityKernel:
    """Rates that grow with the fraction ``min(k(Y), kmax)/kmax`` of the population's queue."""
    kmax = int(kmax)
    return IntensityKernel(
        "meanfield-queue", {"a0": a0, "a1": a1, "b0": b0, "b1": b1, "kmax": kmax},
        (Term(ARRIVAL, a0), Term(ARRIVAL, a1, FX_ONE, FY_QUEUE, kmax),
         Term(SERVICE, b0), Term(SERVICE, b1, FX_ONE, FY_QUEUE, kmax)))


def age_service_kernel(a: float, b0: float, b1: float) -> IntensityKernel:
    """Service hazard ``b0 + b1 (1 - exp(-y))`` increasing with elapsed service time."""
    return IntensityKernel("age-service", {"a": a, "b0": b0, "b1": b1},
                           (Term(ARRIVAL, a), Term(SERVICE, b0), Term(SERVICE, b1, FX_AGE, FY_ONE)))


def sum_kernel(*kernels: IntensityKernel) -> IntensityKernel:
    params = {f"{i}.{kern.catalog_id}.{k}": v for i, kern in enumerate(kernels) for k, v in kern.params.items()}
    terms = tuple(tm for kern in kernels for tm in kern.terms)
    return IntensityKernel("sum", params, terms)


CATALOG = {
    "const": (const_kernel, ("a", "b")),
    "meanfield-queue": (meanfield_queue_kernel, ("a0", "a1", "b0", "b1", "kmax")),
    "age-service": (age_service_kernel, ("a", "b0", "b1")),
}


def make_kernel(catalog_id: str, params: Mapping[str, float]) -> IntensityKernel:
    """Build a catalog kernel from its id and named parameters.

    ``sum`` takes parameters named ``<i>.<id>.<name>``, e.g. ``0.const.a``.
    """
    if catalog_id == "sum":
        parts: dict[int, tuple[str, dict]] = {}
        for key, val in params.items():
            try:
                idx, cid, name = key.split(".", 2)
            except ValueError:
                raise ValueError(f"sum kernel parameter {key!r} must look like '<i>.<id>.<name>'") from None
            parts.setdefault(int(idx), (cid, {}))[1][name] = val
        return sum_kernel(*(make_kernel(cid, p) for _, (cid, p) in sorted(parts.items())))
    if catalog_id not in CATALOG:
        raise ValueError(f"unknown kernel {catalog_id!r}; choose from {sorted(CATALOG) + ['sum']}")
    factory, names = CATALOG[catalog_id]
    missing = [n for n in names if n not in params and not (n == "kmax")]
    if missing:
        raise ValueError(f"kernel {catalog_id!r} missing parameters {missing}")
    extra = set(params) - set(names)
    if extra:
        raise ValueError(f"kernel {catalog_id!r} got unknown parameters {sorted(extra)}")
    kw = {n: float(params[n]) for n in names if n in params}
    if "kmax" in kw:
        if kw["kmax"] != int(kw["kmax"]):
            raise ValueError("kmax must be an integer")
        kw["kmax"] = int(kw["kmax"])
    return factory(**kw)


# -- measures ----------------------------------------------------------------

class EmpiricalMeasure:
    """Finite atomic probability measure on the state space, stored column-wise."""

    __slots__ = ("k", "x", "y", "w")

    def __init__(self, k, x, y, w=None, *, check=True):
        k = np.asarray(k, dtype=np.int64)
        x = np.asarray(x, dtype=np.float64)
        y = np.where(k > 0, np.asarray(y, dtype=np.float64), 0.0)
        if w is None:
            w = np.full(k.shape, 1.0 / max(k.size, 1))
        w = np.asarray(w, dtype=np.float64)
        if check:
            if not (k.shape == x.shape == y.shape == w.shape) or k.ndim != 1 or k.size == 0:
                raise ValueError("atom arrays must be 1-d, non-empty and of equal length")
            if (k < 0).any() or (x < 0).any() or (y < 0).any():
                raise ValueError("atoms must be valid states")
            if (w < 0).any() or abs(w.sum() - 1.0) > 1e-12:
                raise ValueError(f"weights must be >= 0 and sum to 1 (sum={w.sum()!r})")
        for name, arr in zip(self.__slots__, (k, x, y, w)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __setattr__(self, name, value):
        raise AttributeError("EmpiricalMeasure is immutable")

    @classmethod
    def point_mass(cls, s: State) -> "EmpiricalMeasure":
        return cls([s.k], [s.x], [s.y], [1.0])

    @classmethod
    def from_atoms(cls, atoms: Sequence[tuple[State, float]]) -> "EmpiricalMeasure":
        return cls([a.k for a, _ in atoms], [a.x for a, _ in atoms], [a.y for a, _ in atoms],
                   [w for _, w in atoms])

    @property
    def atoms(self) -> Iterator[tuple[State, float]]:
        for k, x, y, w in zip(self.k, self.x, self.y, self.w):
            yield State(int(k), float(x), float(y)), float(w)

    def __len__(self) -> int:
        return self.k.size

    def mix(self, other: "EmpiricalMeasure", alpha: float) -> "EmpiricalMeasure":
        """The mixture ``alpha * self + (1 - alpha) * other``."""
        w = np.concatenate([alpha * self.w, (1.0 - alpha) * other.w])
        return EmpiricalMeasure(np.concatenate([self.k, other.k]), np.concatenate([self.x, other.x]),
                                np.concatenate([self.y, other.y]), w / w.sum())

    def feature_means(self, kernel: IntensityKernel) -> np.ndarray:
        return feature_means(self.k, self.w, kernel)

    def equals(self, other: "EmpiricalMeasure") -> bool:
        return all(np.array_equal(getattr(self, n), getattr(other, n)) for n in self.__slots__)


def feature_means(k: np.ndarray, w: np.ndarray | None, kernel: IntensityKernel) -> np.ndarray:
    out = np.empty(len(kernel.y_features))
    for i, (kind, kmax) in enumerate(kernel.y_features):
        f = np.ones(k.shape) if kind == FY_ONE else np.minimum(k, kmax) / kmax
        out[i] = f.mean() if w is None else float(np.dot(w, f))
    return out


def mean_field_rate(kernel: IntensityKernel, side: JumpType, t: float, X: State, mu: EmpiricalMeasure) -> float:
    """``Lambda^side[t, X, mu]``: the kernel averaged over the atoms of ``mu``."""
    if side is JumpType.SERVICE and X.k == 0:
        return 0.0
    total = 0.0
    for Y, w in mu.atoms:
        total += w * kernel.rate(side, t, X, Y)
    return total


def rates_from_means(kernel: IntensityKernel, X: State, means) -> tuple[float, float]:
    """``(Lambda^+, Lambda^-)`` at ``X`` from precomputed Y-feature means.

    Equal to :func:`mean_field_rate` on any measure with those feature means.
    """
    feats = kernel.y_features
    lp = lm = 0.0
    for tm in kernel.terms:
        key = (FY_ONE, 1) if tm.fy == FY_ONE else (FY_QUEUE, int(tm.kmax))
        v = tm.coef * _fx(tm.fx, X) * means[feats.index(key)]
        if tm.side == ARRIVAL:
            lp += v
        else:
            lm += v
    return lp, (lm if X.k > 0 else 0.0)


def total_rate(kernel: IntensityKernel, t: float, X: State, mu: EmpiricalMeasure) -> float:
    return (mean_field_rate(kernel, JumpType.ARRIVAL, t, X, mu)
            + mean_field_rate(kernel, JumpType.SERVICE, t, X, mu))


# -- cells and TV ------------------------------------------------------------

@dataclass(frozen=True)
class CellScheme:
    """Partition of the state space: exact ``k``, square ``(x, y)`` cells of side ``width``.

    Optional caps send everything beyond ``x_max``/``y_max``/``k_max`` to one
    overflow bin per coordinate. Without caps every state has its own finite cell.
    """

    width: float = 0.25
    x_max: float | None = None
    y_max: float | None = None
    k_max: int | None = None

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError("cell width must be positive")

    def _bin(self, v: np.ndarray, vmax: float | None) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        b = np.floor(v / self.width).astype(np.int64)
        if vmax is not None:
            nb_ = int(math.ceil(vmax / self.width))
            b = np.where(v >= vmax, nb_, np.minimum(b, nb_ - 1))
        return b

    def cells(self, k, x, y) -> np.ndarray:
        """Integer cell labels, shape (n, 3)."""
        k = np.asarray(k, dtype=np.int64)
        if self.k_max is not None:
            k = np.minimum(k, self.k_max + 1)
        return np.stack([k, self._bin(x, self.x_max), self._bin(y, self.y_max)], axis=1)

    def center(self, kbin: int, xbin: int, ybin: int) -> State:
        def c(b, vmax):
            if vmax is not None and b >= math.ceil(vmax / self.width):
                return float(vmax)
            return (b + 0.5) * self.width
        return State(int(kbin), c(xbin, self.x_max), c(ybin, self.y_max) if kbin > 0 else 0.0)


def cell_masses(mu: EmpiricalMeasure, scheme: CellScheme) -> dict[tuple[int, int, int], float]:
    labels = scheme.cells(mu.k, mu.x, mu.y)
    uniq, inv = np.unique(labels, axis=0, return_inverse=True)
    mass = np.bincount(inv.ravel(), weights=mu.w, minlength=len(uniq))
    return {tuple(int(v) for v in u): float(m) for u, m in zip(uniq, mass)}


def tv_distance_proxy(mu1: EmpiricalMeasure, mu2: EmpiricalMeasure, scheme: CellScheme | None = None) -> float:
    """Sum over cells of ``|mu1(cell) - mu2(cell)|`` (in [0, 2])."""
    scheme = scheme or CellScheme()
    lab1 = scheme.cells(mu1.k, mu1.x, mu1.y)
    lab2 = scheme.cells(mu2.k, mu2.x, mu2.y)
    uniq, inv = np.unique(np.concatenate([lab1, lab2]), axis=0, return_inverse=True)
    inv = inv.ravel()
    n1 = len(mu1)
    diff = (np.bincount(inv[:n1], weights=mu1.w, minlength=len(uniq))
            - np.bincount(inv[n1:], weights=mu2.w, minlength=len(uniq)))
    return float(min(np.abs(diff).sum(), 2.0))


def tv_half(mu1: EmpiricalMeasure, mu2: EmpiricalMeasure) -> float:
    """Half of the exact atomic TV, i.e. ``sup_A |mu1(A) - mu2(A)|``."""
    stack = np.concatenate([np.stack([mu1.k, mu1.x, mu1.y], 1), np.stack([mu2.k, mu2.x, mu2.y], 1)])
    uniq, inv = np.unique(stack, axis=0, return_inverse=True)
    inv = inv.ravel()
    n1 = len(mu1)
    diff = (np.bincount(inv[:n1], weights=mu1.w, minlength=len(uniq))
            - np.bincount(inv[n1:], weights=mu2.w, minlength=len(uniq)))
    return 0.5 * float(np.abs(diff).sum())


# -- flows ---------------------------------------------------------------------

class MeasureFlow:
    """Piecewise-constant, right-continuous flow of measures on a time grid.

    ``measures`` may be any sequence (including a lazy one) with one measure
    per grid point.
    """

    def __init__(self, grid, measures: Sequence[EmpiricalMeasure]):
        grid = np.asarray(grid, dtype=float)
        if grid.ndim != 1 or grid.size == 0 or grid[0] != 0.0:
            raise ValueError("flow grid must be 1-d and start at 0")
        if (np.diff(grid) <= 0).any():
            raise ValueError("flow grid must be strictly increasing")
        if len(measures) != grid.size:
            raise ValueError(f"{len(measures)} measures for {grid.size} grid points")
        grid.setflags(write=False)
        self.grid = grid
        self.measures = measures
        self._feature_cache: dict = {}

    @property
    def horizon(self) -> float:
        return float(self.grid[-1])

    def index_at(self, t: float) -> int:
        if not 0 <= t <= self.horizon:
            raise ValueError(f"time {t} outside flow range [0, {self.horizon}]")
        return int(np.searchsorted(self.grid, t, side="right")) - 1

    def at(self, t: float) -> EmpiricalMeasure:
        return self.measures[self.index_at(t)]

    def initial(self) -> EmpiricalMeasure:
        return self.measures[0]

    def feature_table(self, kernel: IntensityKernel) -> np.ndarray:
        """Y-feature means of every grid measure, shape (len(grid), n_features)."""
        key = tuple(kernel.y_features)
        if key not in self._feature_cache:
            self._feature_cache[key] = self._compute_feature_table(kernel)
        return self._feature_cache[key]

    def _compute_feature_table(self, kernel):
        return np.array([m.feature_means(kernel) for m in self.measures])

    @classmethod
    def constant(cls, mu: EmpiricalMeasure, horizon: float, step: float | None = None) -> "MeasureFlow":
        grid = uniform_grid(horizon, step or horizon)
        return cls(grid, [mu] * grid.size)


def flow_at(flow: MeasureFlow, t: float) -> EmpiricalMeasure:
    return flow.at(t)


def uniform_grid(horizon: float, step: float) -> np.ndarray:
    """``0, step, 2 step, ...`` up to ``horizon``, always ending exactly at ``horizon``."""
    if not horizon > 0 or not step > 0:
        raise ValueError("horizon and grid step must be positive")
    m = horizon / step
    mr = round(m)
    if abs(m - mr) < 1e-9 * max(1.0, m):
        return np.linspace(0.0, horizon, int(mr) + 1)
    g = np.arange(0.0, horizon, step)
    return np.append(g, horizon)
