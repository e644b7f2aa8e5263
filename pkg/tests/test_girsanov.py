import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mfqueue.girsanov import (DensityError, jump_term_bound_check, log_density, log_density_system,
                              marginal_tv_check, normalization_check, psi_estimate, restrict_system,
                              two_state_log_density, two_state_paths)
from mfqueue.intensity import CellScheme, EmpiricalMeasure, MeasureFlow, make_kernel, uniform_grid
from mfqueue.simulator import GivenFlow, SelfConsistent, SimConfig, simulate
from mfqueue.state import JumpType, State, make_trajectory

MFQ = make_kernel("meanfield-queue", {"a0": 0.5, "a1": 0.5, "b0": 0.6, "b1": 0.4, "kmax": 4})
AGE = make_kernel("sum", {"0.const.a": 0.5, "0.const.b": 0.4, "1.age-service.a": 0.0,
                          "1.age-service.b0": 0.0, "1.age-service.b1": 1.0})


def _flow(seed, k_start, T=1.0, N=2000, kernel=MFQ):
    cfg = SimConfig(N, T, SelfConsistent(), 0.1, seed=seed, initial=State(k_start, 0.0))
    return simulate(cfg, kernel).flow


def _step_flow(T, values):
    """Flow whose queue-length measure changes at every grid point."""
    grid = uniform_grid(T, T / (len(values) - 1))
    mus = [EmpiricalMeasure([0, v], [0.0, 0.0], [0.0, 0.0], [0.5, 0.5]) for v in values]
    return MeasureFlow(grid, mus)


F1 = _step_flow(1.0, [0, 1, 2, 4, 3, 1])
F2 = _step_flow(1.0, [4, 4, 0, 1, 2, 2])
F3 = _step_flow(1.0, [2, 0, 0, 4, 4, 1])

jump_lists = st.lists(st.tuples(st.floats(0.001, 0.999), st.booleans()), max_size=8)


def _path(evs):
    evs = sorted({round(t, 6): up for t, up in evs}.items())
    k, out = 0, []
    for t, up in evs:
        kind = JumpType.ARRIVAL if up or k == 0 else JumpType.SERVICE
        k += kind.code
        out.append((t, kind))
    return make_trajectory(State(0, 0.0), out, 1.0)


@pytest.mark.parametrize("kernel", [MFQ, AGE], ids=["mfq", "age"])
@given(evs=jump_lists)
def test_swap_antisymmetry_and_chain_rule(kernel, evs):
    tr = _path(evs)
    a = log_density(tr, kernel, F1, F2).log_rho
    b = log_density(tr, kernel, F2, F1).log_rho
    assert abs(a + b) <= 1e-10
    c = log_density(tr, kernel, F2, F3).log_rho
    d = log_density(tr, kernel, F1, F3).log_rho
    assert abs(a + c - d) <= 1e-10
    assert log_density(tr, kernel, F1, F1).log_rho == 0.0


@given(st.lists(st.floats(0.001, 0.999), min_size=3, max_size=3, unique=True))
def test_two_state_closed_form(times):
    for tr in two_state_paths(1.0, sorted(times)):
        exact = two_state_log_density(tr, MFQ, F1, F2)
        assert abs(log_density(tr, MFQ, F1, F2).log_rho - exact) <= 1e-8


def test_compiled_route_matches_python():
    s = simulate(SimConfig(300, 1.0, GivenFlow(F1), 0.1, seed=8, initial=F1.initial()), AGE)
    batch = log_density_system(s, AGE, F1, F2)
    for i in range(0, 300, 7):
        assert math.isclose(batch[i], log_density(s.trajectory(i), AGE, F1, F2).log_rho, rel_tol=1e-9,
                            abs_tol=1e-11)


def test_density_requires_positive_lower_bound():
    bad = make_kernel("age-service", {"a": 1.0, "b0": 0.0, "b1": 1.0})
    tr = make_trajectory(State(0, 0.0), [(0.5, JumpType.ARRIVAL)], 1.0)
    with pytest.raises(DensityError):
        log_density(tr, bad, F1, F2)


def test_normalization_and_tv_bound():
    f1, f2 = _flow(1, 0), _flow(2, 3)
    s1 = simulate(SimConfig(20000, 1.0, GivenFlow(f1), 0.1, seed=3, initial=f1.initial()), MFQ)
    s2 = simulate(SimConfig(20000, 1.0, GivenFlow(f2), 0.1, seed=4, initial=f1.initial()), MFQ)
    rho = normalization_check(s1, MFQ, f1, f2)
    assert abs(rho.mean - 1) <= 4 * rho.se
    psi = psi_estimate(s1, MFQ, f1, f2)
    assert 0 < psi.mean < 2
    chk = marginal_tv_check(s1, s2, 1.0, CellScheme(1e9, k_max=6), MFQ)
    assert chk.passes()
    assert math.isclose(chk.psi, psi.mean, rel_tol=1e-12)
    half = marginal_tv_check(s1, s2, 0.5, CellScheme(1e9, k_max=6), MFQ)
    assert half.psi <= chk.psi + 3 * chk.psi_se
    with pytest.raises(ValueError):
        normalization_check(s2, MFQ, f1, f2)


def test_restrict_system_keeps_early_events():
    s = simulate(SimConfig(50, 1.0, GivenFlow(F1), 0.1, seed=5, initial=F1.initial()), MFQ)
    r = restrict_system(s, 0.5)
    assert r.T == 0.5 and (r.ev_t <= 0.5).all()
    assert r.n_events == int((s.ev_t <= 0.5).sum())
    for i in (0, 10, 49):
        a, b = r.trajectory(i), s.trajectory(i)
        assert a.events == tuple(e for e in b.events if e.time <= 0.5)


def test_jump_terms_obey_lipschitz_bound():
    tr = _path([(0.15, True), (0.35, True), (0.55, False), (0.75, True), (0.95, False)])
    for term, bound in jump_term_bound_check(tr, MFQ, F1, F2):
        assert term <= bound + 1e-12
