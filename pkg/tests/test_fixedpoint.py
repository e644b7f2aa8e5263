import math

import pytest
from hypothesis import given, strategies as st

from mfqueue.fixedpoint import (choose_horizon, flow_distance, noise_floor, picard_iterate, series_constant,
                                uniqueness_experiment)
from mfqueue.intensity import CellScheme, EmpiricalMeasure, KernelBounds, MeasureFlow, make_kernel
from mfqueue.simulator import SelfConsistent, SimConfig
from mfqueue.state import State

MFQ = make_kernel("meanfield-queue", {"a0": 0.5, "a1": 0.5, "b0": 0.6, "b1": 0.4})
SCHEME = CellScheme(1e9, k_max=10)


def test_horizon_frozen_value():
    # lambda_bar = 1, K = 2: the series sums to 3e, so T = 0.9 / (6e)
    assert math.isclose(series_constant(MFQ.bounds), 3 * math.e, rel_tol=1e-12)
    assert math.isclose(choose_horizon(MFQ.bounds), 0.055182, rel_tol=1e-5)


@given(st.floats(0.05, 5.0), st.floats(0.05, 5.0), st.floats(0.1, 2.0))
def test_series_closed_form(lam, lam_under, T):
    b = KernelBounds(lam, lam_under, 2 * lam, 1 / lam_under)
    closed = b.K * lam ** 2 * math.exp(lam * T) + lam * math.exp(lam * T)
    assert math.isclose(series_constant(b, T), closed, rel_tol=1e-10)
    h = choose_horizon(b)
    assert 0 < h <= 0.9


def test_horizon_requires_positive_lower_bound():
    with pytest.raises(ValueError):
        choose_horizon(KernelBounds(1.0, 0.0, 2.0, math.inf))


def _const_flow(k, T, step):
    mu0 = EmpiricalMeasure.point_mass(State(0, 0.0))
    grid = MeasureFlow.constant(mu0, T, step).grid
    return MeasureFlow(grid, [mu0] + [EmpiricalMeasure.point_mass(State(k, 0.0))] * (grid.size - 1))


def test_flow_distance():
    a, b = _const_flow(10, 1.0, 0.25), _const_flow(3, 1.0, 0.25)
    assert flow_distance(a, b, SCHEME) == 2.0
    assert flow_distance(a, a, SCHEME) == 0.0
    with pytest.raises(ValueError):
        flow_distance(a, _const_flow(3, 1.0, 0.5))


def test_picard_contracts_from_a_wrong_flow():
    T = choose_horizon(MFQ.bounds)
    sim = SimConfig(4000, T, SelfConsistent(), T / 10, seed=1)
    run = picard_iterate(MFQ, _const_flow(10, T, T / 10), 5, sim, scheme=SCHEME)
    d = run.distances
    assert len(d) == 4 and d[0] > 1.0
    nf = noise_floor(MFQ, run.flows[-1], sim, SCHEME)
    assert nf > 0
    assert all(d[m + 1] <= 0.5 * d[m] + 2 * nf for m in range(len(d) - 1))
    crn = picard_iterate(MFQ, _const_flow(10, T, T / 10), 4, sim, scheme=SCHEME, common_random_numbers=True)
    assert crn.distances[-1] == 0.0
    stop = picard_iterate(MFQ, _const_flow(10, T, T / 10), 6, sim, scheme=SCHEME, common_random_numbers=True,
                          stop_below=0.0)
    assert len(stop.distances) < 5


def test_uniqueness_merges_small():
    T = choose_horizon(MFQ.bounds)
    sim = SimConfig(2000, T, SelfConsistent(), T / 10, seed=2)
    mu0 = EmpiricalMeasure.point_mass(State(0, 0.0))
    rep = uniqueness_experiment(MFQ, _const_flow(10, T, T / 10), MeasureFlow.constant(mu0, T, T / 10), sim,
                                windows=2, iterations=4, scheme=SCHEME)
    assert len(rep.window_distances) == 2 and rep.merged
    coupled = uniqueness_experiment(MFQ, _const_flow(10, T, T / 10), MeasureFlow.constant(mu0, T, T / 10), sim,
                                    windows=1, iterations=4, scheme=SCHEME, common_random_numbers=True)
    assert coupled.window_distances[0] <= rep.window_distances[0]
    with pytest.raises(ValueError):
        uniqueness_experiment(MFQ, _const_flow(10, T, T / 10),
                              MeasureFlow.constant(EmpiricalMeasure.point_mass(State(1, 0.0)), T), sim)
