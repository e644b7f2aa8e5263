"""Path densities between the laws driven by two measure flows.

For a trajectory ``X`` on ``[0, T]`` and flows ``mu1``, ``mu2``,

    log rho_T = sum_i log(Lambda^{s_i}[t_i, X_{t_i-}, mu2] / Lambda^{s_i}[t_i, X_{t_i-}, mu1])
                - int_0^T (Lambda_bar[mu2] - Lambda_bar[mu1]) dt,

where ``s_i`` is the sign of jump ``i`` and ``Lambda_bar`` the total rate
(service gated by ``k > 0``). Everything stays in log space until the
final estimators.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from . import _engine as eng
from .generator import MCEstimate
from .intensity import (FX_ONE, CellScheme, EmpiricalMeasure, IntensityKernel, MeasureFlow,
                        rates_from_means, tv_distance_proxy, tv_half)
from .simulator import GivenFlow, ParticleSystem
from .state import JumpType, State, Trajectory, make_trajectory


class DensityError(ValueError):
    pass


@dataclass(frozen=True)
class PathDensity:
    log_rho: float
    jump_terms: tuple[float, ...]
    integral_term: float

    @property
    def rho(self) -> float:
        return math.exp(self.log_rho)


def _rates(kernel, X: State, table, flow: MeasureFlow, t: float, left: bool = False):
    if left:
        i = int(np.searchsorted(flow.grid, t, side="left")) - 1
        i = max(i, 0)
    else:
        i = flow.index_at(t)
    return rates_from_means(kernel, X, table[i])


def _union_nodes(T: float, *arrays) -> np.ndarray:
    pts = np.unique(np.concatenate([np.asarray(a, float).ravel() for a in arrays] + [np.array([0.0, T])]))
    return pts[(pts >= 0) & (pts <= T)]


def _check_flows(flow1, flow2, T):
    for f in (flow1, flow2):
        if f.horizon < T:
            raise ValueError(f"flow ends at {f.horizon} before horizon {T}")


def log_density(traj: Trajectory, kernel: IntensityKernel, flow1: MeasureFlow, flow2: MeasureFlow) -> PathDensity:
    """Log density of the flow-2 path law against the flow-1 law along ``traj``.

    Jump terms use each jump's own side at the pre-jump state; the integral
    is a trapezoid rule on both flow grids plus the event times, with
    one-sided limits at every node.
    """
    T = traj.horizon
    _check_flows(flow1, flow2, T)
    if not kernel.bounds.a4:
        raise DensityError("A4 violated: density undefined")
    tab1, tab2 = flow1.feature_table(kernel), flow2.feature_table(kernel)
    jumps = []
    for ev in traj.events:
        r1 = _rates(kernel, ev.pre_state, tab1, flow1, ev.time)
        r2 = _rates(kernel, ev.pre_state, tab2, flow2, ev.time)
        j = 0 if ev.kind is JumpType.ARRIVAL else 1
        if r1[j] <= 0 or r2[j] <= 0:
            raise DensityError("A4 violated: density undefined")
        jumps.append(math.log(r2[j]) - math.log(r1[j]))

    def diff(X, t, left):
        a = _rates(kernel, X, tab1, flow1, t, left)
        b = _rates(kernel, X, tab2, flow2, t, left)
        return (b[0] + b[1]) - (a[0] + a[1])

    nodes = _union_nodes(T, flow1.grid, flow2.grid, [e.time for e in traj.events])
    acc = 0.0
    fa = diff(traj.state_at(nodes[0]), nodes[0], False)
    for j in range(1, nodes.size):
        b = float(nodes[j])
        fb = diff(traj.state_before(b), b, True)
        acc += 0.5 * (b - nodes[j - 1]) * (fa + fb)
        if j + 1 < nodes.size:
            fa = diff(traj.state_at(b), b, False)
    return PathDensity(math.fsum(jumps) - acc, tuple(jumps), -acc)


def log_density_system(system: ParticleSystem, kernel: IntensityKernel, flow1: MeasureFlow,
                       flow2: MeasureFlow) -> np.ndarray:
    """``log rho_T`` for every particle of a finished system (compiled route)."""
    T = system.T
    _check_flows(flow1, flow2, T)
    if not kernel.bounds.a4:
        raise DensityError("A4 violated: density undefined")
    side, coef, fx, fyi, _, _ = kernel.engine_arrays()
    tab1 = np.ascontiguousarray(flow1.feature_table(kernel))
    tab2 = np.ascontiguousarray(flow2.feature_table(kernel))
    nodes = _union_nodes(T, flow1.grid, flow2.grid)
    s = system
    try:
        jumps, integ = eng.log_density_batch(s.offsets, s.ev_t, s.ev_kind, s.ev_k, s.ev_x, s.ev_y,
                                             s.k0, s.x0, s.y0, T, side, coef, fx, fyi,
                                             np.ascontiguousarray(flow1.grid[1:]), tab1,
                                             np.ascontiguousarray(flow2.grid[1:]), tab2, nodes)
    except ValueError as exc:
        raise DensityError(str(exc)) from None
    return jumps - integ


def _driving_flow(system: ParticleSystem, flow1: MeasureFlow) -> None:
    mode = system.config.mode
    if not isinstance(mode, GivenFlow) or mode.flow is not flow1:
        raise ValueError("system must be simulated in GivenFlow mode with flow1")


def normalization_check(system: ParticleSystem, kernel: IntensityKernel, flow1: MeasureFlow,
                        flow2: MeasureFlow) -> MCEstimate:
    """Monte-Carlo mean of ``rho_T`` under flow-1 dynamics; should be 1."""
    _driving_flow(system, flow1)
    rho = np.exp(log_density_system(system, kernel, flow1, flow2))
    se = float(rho.std(ddof=1) / math.sqrt(rho.size)) if rho.size > 1 else math.inf
    return MCEstimate(float(rho.mean()), se)


def psi_estimate(system: ParticleSystem, kernel: IntensityKernel, flow1: MeasureFlow,
                 flow2: MeasureFlow) -> MCEstimate:
    """``2 - 2 E[rho_T ^ 1]``: total variation between the two path laws (in [0, 2])."""
    _driving_flow(system, flow1)
    v = 2.0 - 2.0 * np.minimum(np.exp(log_density_system(system, kernel, flow1, flow2)), 1.0)
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else math.inf
    return MCEstimate(float(v.mean()), se)


class TVCheck(NamedTuple):
    phi: float
    psi: float
    phi_se: float
    psi_se: float

    @property
    def combined_se(self) -> float:
        return math.hypot(self.phi_se, self.psi_se)

    def passes(self, z: float = 3.0) -> bool:
        return self.phi <= self.psi + z * self.combined_se


def _proxy_se(mu1: EmpiricalMeasure, mu2: EmpiricalMeasure, scheme: CellScheme) -> float:
    """Multinomial standard error of the TV proxy with the signs held fixed."""
    lab = np.concatenate([scheme.cells(mu1.k, mu1.x, mu1.y), scheme.cells(mu2.k, mu2.x, mu2.y)])
    uniq, inv = np.unique(lab, axis=0, return_inverse=True)
    inv = inv.ravel()
    n1 = len(mu1)
    p = np.bincount(inv[:n1], weights=mu1.w, minlength=len(uniq))
    q = np.bincount(inv[n1:], weights=mu2.w, minlength=len(uniq))
    s = np.sign(p - q)
    var = (np.dot(s * s, p) - np.dot(s, p) ** 2) / len(mu1) + (np.dot(s * s, q) - np.dot(s, q) ** 2) / len(mu2)
    return math.sqrt(max(var, 0.0))


def marginal_tv_check(system1: ParticleSystem, system2: ParticleSystem, t: float,
                      partition: CellScheme | None = None, kernel: IntensityKernel | None = None) -> TVCheck:
    """TV proxy between the two marginals at ``t`` and the path-law TV on ``[0, t]``.

    Both systems must be driven by given flows; the density is computed for
    system 1's particles, with paths restricted to ``[0, t]``.
    """
    if system1.T != system2.T:
        raise ValueError("systems have mismatched horizons")
    if system1.N != system2.N:
        raise ValueError("systems have different particle counts")
    for s in (system1, system2):
        if not isinstance(s.config.mode, GivenFlow):
            raise ValueError("marginal_tv_check needs GivenFlow systems")
    kernel = kernel or system1.kernel
    partition = partition or CellScheme()
    mu1, mu2 = system1.marginal(t), system2.marginal(t)
    phi = tv_distance_proxy(mu1, mu2, partition)
    phi_se = _proxy_se(mu1, mu2, partition)
    f1, f2 = system1.config.mode.flow, system2.config.mode.flow
    if t == 0:
        return TVCheck(phi, 0.0, phi_se, 0.0)
    sys_t = restrict_system(system1, t) if t < system1.T else system1
    v = 2.0 - 2.0 * np.minimum(np.exp(log_density_system(sys_t, kernel, f1, f2)), 1.0)
    return TVCheck(phi, float(v.mean()), phi_se, float(v.std(ddof=1) / math.sqrt(v.size)))


def restrict_system(system: ParticleSystem, t: float) -> ParticleSystem:
    """The same particles observed on ``[0, t]``."""
    keep = system.ev_t <= t
    owner = np.repeat(np.arange(system.N), np.diff(system.offsets))
    counts = np.bincount(owner[keep], minlength=system.N)
    offsets = np.zeros(system.N + 1, np.int64)
    np.cumsum(counts, out=offsets[1:])
    cfg = replace(system.config, T=float(t), grid_step=min(system.config.grid_step, float(t)))
    return ParticleSystem(cfg, system.kernel, system.k0, system.x0, system.y0, offsets,
                          system.ev_t[keep], system.ev_kind[keep], system.ev_k[keep],
                          system.ev_x[keep], system.ev_y[keep])


def jump_term_bound_check(traj: Trajectory, kernel: IntensityKernel, flow1: MeasureFlow,
                          flow2: MeasureFlow) -> list[tuple[float, float]]:
    """Per jump: ``|log ratio|`` and the bound ``K * lambda_bar * tv_half(mu2, mu1)``."""
    dens = log_density(traj, kernel, flow1, flow2)
    b = kernel.bounds
    out = []
    for ev, term in zip(traj.events, dens.jump_terms):
        out.append((abs(term), b.K * b.lambda_bar * tv_half(flow2.at(ev.time), flow1.at(ev.time))))
    return out


# -- closed form on the two-state instance ----------------------------------------------


def two_state_paths(T: float, times: list[float]) -> list[Trajectory]:
    """All paths from the empty state with at most three jumps that stay in ``k <= 1``.

    Jump ``j`` happens at ``times[j]``; kinds alternate arrival, service, arrival.
    """
    kinds = [JumpType.ARRIVAL, JumpType.SERVICE, JumpType.ARRIVAL]
    return [make_trajectory(State(0, 0.0), list(zip(times[:n], kinds[:n])), T) for n in range(4)]


def two_state_log_density(traj: Trajectory, kernel: IntensityKernel, flow1: MeasureFlow,
                          flow2: MeasureFlow) -> float:
    """Exact ``log rho_T`` for kernels with no age dependence, by summing pieces.

    Rates are then constant between the flow grid points and the jump
    times, so the integral is a finite sum of rate times length.
    """
    if any(tm.fx != FX_ONE for tm in kernel.terms):
        raise ValueError("closed form needs rates that do not depend on x or y")
    tab1, tab2 = flow1.feature_table(kernel), flow2.feature_table(kernel)

    def rate(side, k, table, flow, t):
        m = table[flow.index_at(t)]
        v = 0.0
        feats = kernel.y_features
        for tm in kernel.terms:
            if tm.side == side:
                key = (0, 1) if tm.fy == 0 else (1, int(tm.kmax))
                v += tm.coef * m[feats.index(key)]
        return v if side > 0 or k > 0 else 0.0

    total = 0.0
    for ev in traj.events:
        side = ev.kind.code
        total += math.log(rate(side, ev.pre_state.k, tab2, flow2, ev.time)) \
            - math.log(rate(side, ev.pre_state.k, tab1, flow1, ev.time))
    cuts = _union_nodes(traj.horizon, flow1.grid, flow2.grid, [e.time for e in traj.events])
    for a, b in zip(cuts[:-1], cuts[1:]):
        k = traj.state_at(a).k
        lam2 = rate(1, k, tab2, flow2, a) + rate(-1, k, tab2, flow2, a)
        lam1 = rate(1, k, tab1, flow1, a) + rate(-1, k, tab1, flow1, a)
        total -= (lam2 - lam1) * (b - a)
    return total
