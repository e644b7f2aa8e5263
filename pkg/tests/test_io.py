import json

import numpy as np

from mfqueue import io
from mfqueue.intensity import CellScheme, EmpiricalMeasure, make_kernel, tv_distance_proxy
from mfqueue.simulator import SelfConsistent, SimConfig, simulate

KERN = make_kernel("meanfield-queue", {"a0": 0.5, "a1": 0.5, "b0": 0.6, "b1": 0.4})
META = {"config_hash": "abc", "seed": 7}


def _system():
    mu0 = EmpiricalMeasure([0, 2], [0.0, 0.3], [0.0, 0.1], [0.5, 0.5])
    return simulate(SimConfig(40, 1.0, SelfConsistent(), 0.25, seed=7, initial=mu0), KERN)


def test_trajectory_round_trip(tmp_path):
    s = _system()
    io.write_trajectories_csv(tmp_path / "t.csv", s.trajectories, s.T, META)
    io.write_trajectories_json(tmp_path / "t.json", s.trajectories, s.T, META)
    for reader, name in ((io.read_trajectories_csv, "t.csv"), (io.read_trajectories_json, "t.json")):
        back, meta = reader(tmp_path / name)
        assert str(meta["seed"]) == "7" and meta["config_hash"] == "abc"
        assert len(back) == s.N
        assert all(a == b for a, b in zip(back, s.trajectories))


def test_flow_round_trip(tmp_path):
    s = _system()
    scheme = CellScheme(0.25)
    io.write_flow_csv(tmp_path / "f.csv", s.flow, scheme, META)
    flow, sch, meta = io.read_flow_csv(tmp_path / "f.csv")
    assert sch == scheme and meta["seed"] == "7"
    assert np.array_equal(flow.grid, s.flow.grid)
    for t in flow.grid:
        assert tv_distance_proxy(flow.at(t), s.flow.at(t), scheme) < 1e-12


def test_config_hash_is_order_free():
    assert io.config_hash({"a": 1, "b": [1, 2]}) == io.config_hash({"b": [1, 2], "a": 1})
    assert io.config_hash({"a": 1}) != io.config_hash({"a": 2})


def test_json_and_table_writers(tmp_path):
    io.write_json(tmp_path / "x.json", {**META, "v": np.float64(0.1), "a": np.arange(3), "n": np.int64(2)})
    doc = json.loads((tmp_path / "x.json").read_text())
    assert doc == {"config_hash": "abc", "seed": 7, "v": 0.1, "a": [0, 1, 2], "n": 2}
    io.write_table_csv(tmp_path / "x.csv", ("m", "d"), [(0, 0.1), (1, np.float64(1 / 3))], META)
    lines = (tmp_path / "x.csv").read_text().splitlines()
    assert lines[:3] == ["# config_hash=abc", "# seed=7", "m,d"]
    assert float(lines[-1].split(",")[1]) == 1 / 3
