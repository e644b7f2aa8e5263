import math

import numpy as np
import pytest

from mfqueue.generator import birth_death_expectation
from mfqueue.intensity import EmpiricalMeasure, MeasureFlow, make_kernel
from mfqueue.simulator import (FrozenDelay, GivenFlow, SelfConsistent, SimConfig, jump_count_check,
                               jump_in_interval_fraction, one_jump_probability_oracle, replicate_frozen_window,
                               simulate, truncate_trajectory, validate_system)
from mfqueue.state import JumpType, State, make_trajectory, validate_trajectory

CONST = make_kernel("const", {"a": 1.0, "b": 2.0})
MFQ = make_kernel("meanfield-queue", {"a0": 0.5, "a1": 0.5, "b0": 0.6, "b1": 0.4})
AGE = make_kernel("age-service", {"a": 0.8, "b0": 0.3, "b1": 1.0})
MU0 = EmpiricalMeasure([0, 1, 3], [0.0, 0.5, 1.0], [0.0, 0.2, 0.0], [0.5, 0.3, 0.2])


def modes(T=2.0):
    return [SelfConsistent(), FrozenDelay(0.5), GivenFlow(MeasureFlow.constant(MU0, T, 0.1))]


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(0, 1.0)
    with pytest.raises(ValueError):
        SimConfig(10, -1.0)
    with pytest.raises(ValueError):
        SimConfig(10, 1.0, FrozenDelay(0.05), grid_step=0.1)
    with pytest.raises(ValueError):
        SimConfig(10, 3.0, GivenFlow(MeasureFlow.constant(MU0, 2.0)))
    with pytest.raises(ValueError):
        FrozenDelay(0.0)
    assert SimConfig(3, 1.0, grid_step=0.3).grid.tolist()[-1] == 1.0


@pytest.mark.parametrize("kernel", [CONST, MFQ, AGE], ids=["const", "mfq", "age"])
@pytest.mark.parametrize("mode", range(3), ids=["self", "frozen", "flow"])
def test_structural_invariants(kernel, mode):
    cfg = SimConfig(300, 2.0, modes()[mode], 0.1, seed=5, initial=MU0)
    system = simulate(cfg, kernel)
    assert validate_system(system) == system.n_events > 0
    for i in range(0, system.N, 37):
        tr = system.trajectory(i)
        validate_trajectory(tr)
        assert tr.state_at(system.T) == State(*[v[i] for v in system.states_at(system.T)])


@pytest.mark.parametrize("mode", [1, 2], ids=["frozen", "flow"])
def test_thread_count_does_not_change_results(mode):
    cfg = SimConfig(500, 2.0, modes()[mode], 0.1, seed=11, initial=MU0)
    a, b = simulate(cfg, MFQ, threads=1), simulate(cfg, MFQ, threads=3)
    for name in ("offsets", "ev_t", "ev_kind", "ev_k", "ev_x", "ev_y", "k0", "x0", "y0"):
        assert np.array_equal(getattr(a, name), getattr(b, name))


def test_seed_determinism():
    cfg = SimConfig(200, 2.0, SelfConsistent(), seed=3, initial=MU0)
    a, b = simulate(cfg, MFQ), simulate(cfg, MFQ)
    assert np.array_equal(a.ev_t, b.ev_t)
    c = simulate(SimConfig(200, 2.0, SelfConsistent(), seed=4, initial=MU0), MFQ)
    assert not np.array_equal(a.ev_t[:50], c.ev_t[:50])


def test_validator_catches_tampering():
    s = simulate(SimConfig(50, 2.0, seed=1), CONST)
    s.ev_x[3] += 1e-9
    with pytest.raises(ValueError):
        validate_system(s)


@pytest.mark.parametrize("mode", [0, 2], ids=["self", "flow"])
def test_const_kernel_law_matches_birth_death(mode):
    # constant rates ignore the measure; the frozen scheme differs because
    # its service gate also looks at the delayed state
    T = 2.0
    s = simulate(SimConfig(20000, T, modes(T)[mode], 0.1, seed=21, initial=State(0, 0.0)), CONST)
    k, _, _ = s.states_at(T)
    p0 = np.zeros(60)
    p0[0] = 1.0
    for j in range(4):
        exact = birth_death_expectation(1.0, 2.0, p0, (np.arange(60) == j).astype(float), [T])[0]
        est = (k == j).mean()
        assert abs(est - exact) <= 4 * math.sqrt(exact * (1 - exact) / k.size)


def test_recorded_flow_matches_particles():
    s = simulate(SimConfig(400, 1.0, SelfConsistent(), 0.25, seed=2, initial=MU0), MFQ)
    assert s.flow.grid.tolist() == [0.0, 0.25, 0.5, 0.75, 1.0]
    mu = s.flow.at(0.5)
    k, x, y = s.states_at(0.5)
    assert np.array_equal(mu.k, k) and np.array_equal(mu.x, x)
    table = s.flow.feature_table(MFQ)
    assert np.allclose(table[2], [1.0, np.minimum(k, 10).mean() / 10])


def test_jump_counts_and_interval_fraction():
    s = simulate(SimConfig(2000, 1.0, seed=9), CONST)
    assert all(r.ok for r in jump_count_check(s))
    p, se = jump_in_interval_fraction(s, 0.0, 1.0)
    assert p == (s.jump_counts() > 0).mean()
    assert se > 0


def test_truncate_trajectory():
    tr = make_trajectory(State(0, 0.0), [(0.5, JumpType.ARRIVAL), (1.5, JumpType.SERVICE)], 2.0)
    cut = truncate_trajectory(tr, 1.0)
    assert cut.horizon == 1.0 and cut.jump_count == 1


def _const_history():
    return make_trajectory(State(1, 0.0, 0.0), [(0.3, JumpType.ARRIVAL)], 1.0)


@pytest.mark.parametrize("k", [0, 1, 3])
def test_oracle_closed_form_constant_rates(k):
    a, b, d = 1.0, 2.0, 0.05
    flow = MeasureFlow.constant(MU0, 2.0, 0.1)
    up, down, none = one_jump_probability_oracle(CONST, flow, State(k, 0.0, 0.0), 0.5, d,
                                                 history=_const_history(), lag=0.5)
    assert math.isclose(none, math.exp(-(a + (k > 0) * b) * d), rel_tol=1e-12)
    # exactly one jump: the first at r with the pre-jump total rate, none after with the post-jump one
    if k == 0:
        exact_up = a * math.exp(-(a + b) * d) * (math.exp(b * d) - 1) / b
        exact_down = 0.0
    elif k == 1:
        exact_up = a * d * math.exp(-(a + b) * d)
        exact_down = math.exp(-a * d) * (1 - math.exp(-b * d))
    else:
        exact_up = a * d * math.exp(-(a + b) * d)
        exact_down = b * d * math.exp(-(a + b) * d)
    assert math.isclose(up, exact_up, rel_tol=1e-6)
    assert math.isclose(down, exact_down, rel_tol=1e-6, abs_tol=1e-15)
    fu, fd, fn = one_jump_probability_oracle(CONST, flow, State(k, 0.0, 0.0), 0.5, d, history=_const_history(),
                                             lag=0.5, event="first")
    tot = a + (k > 0) * b
    assert math.isclose(fu, a * (1 - math.exp(-tot * d)) / tot, rel_tol=1e-6)
    assert math.isclose(fu + fd + fn, 1.0, rel_tol=1e-9)


def test_oracle_edge_cases():
    flow = MeasureFlow.constant(MU0, 2.0, 0.1)
    assert one_jump_probability_oracle(CONST, flow, State(1, 0.0), 0.5, 0.0, history=_const_history(),
                                       lag=0.5) == (0.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        one_jump_probability_oracle(CONST, flow, State(1, 0.0), 0.5, 0.05, history=_const_history(), lag=0.5,
                                    step=0.01)
    with pytest.raises(ValueError):
        one_jump_probability_oracle(CONST, flow, State(1, 0.0), 1.5, 0.05, history=_const_history(), lag=0.1)


def test_replicated_window_matches_oracle_for_age_kernel():
    hist = make_trajectory(State(1, 0.0, 0.0), [(0.2, JumpType.SERVICE), (0.3, JumpType.ARRIVAL)], 0.6)
    flow = MeasureFlow.constant(MU0, 2.0, 0.1)
    s, t, d, lag = State(2, 0.4, 0.1), 1.0, 0.3, 0.8
    probs = one_jump_probability_oracle(AGE, flow, s, t, d, history=hist, lag=lag)
    reps = 40000
    counts = replicate_frozen_window(AGE, flow, s, t, d, history=hist, lag=lag, reps=reps, seed=1)
    for p, c in zip(probs, counts):
        assert abs(c / reps - p) <= 4 * math.sqrt(p * (1 - p) / reps)
