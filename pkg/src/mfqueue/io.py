"""Plain-text persistence: trajectories (CSV and JSON), flows (CSV), summaries (JSON).

Every file carries the config hash and seed it was produced from. Floats
are written with ``repr``, which round-trips exactly.
"""
from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path
from typing import Any, Iterable, Mapping

import numpy as np

from .intensity import CellScheme, EmpiricalMeasure, MeasureFlow, cell_masses
from .state import JumpType, State, Trajectory, TrajectoryEvent

TRAJ_FIELDS = ("particle", "time", "kind", "k", "x", "y")
FLOW_FIELDS = ("grid_time", "k", "x_bin", "y_bin", "weight")


def config_hash(config: Mapping[str, Any]) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _num(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _header(fh, meta: Mapping[str, Any]):
    for key, val in meta.items():
        fh.write(f"# {key}={val}\n")


def _read_header(lines: list[str]) -> tuple[dict[str, str], list[str]]:
    meta = {}
    body = []
    for line in lines:
        if line.startswith("# "):
            key, _, val = line[2:].rstrip("\n").partition("=")
            meta[key] = val
        else:
            body.append(line)
    return meta, body


def _records(trajs: Iterable[Trajectory]):
    for i, tr in enumerate(trajs):
        ini = tr.initial
        yield i, 0.0, "I", ini.k, ini.x, ini.y
        for ev in tr.events:
            s = ev.pre_state
            yield i, ev.time, ev.kind.value, s.k, s.x, s.y


def write_trajectories_csv(path, trajs: Iterable[Trajectory], horizon: float, meta: Mapping[str, Any]) -> None:
    """One row per event with its pre-jump state; kind ``I`` rows hold initial states."""
    with open(path, "w", newline="") as fh:
        _header(fh, {**meta, "horizon": _num(horizon)})
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJ_FIELDS)
        for p, t, kind, k, x, y in _records(trajs):
            w.writerow((p, _num(t), kind, k, _num(x), _num(y)))


def write_trajectories_json(path, trajs: Iterable[Trajectory], horizon: float, meta: Mapping[str, Any]) -> None:
    records = [dict(zip(TRAJ_FIELDS, (p, float(t), kind, int(k), float(x), float(y))))
               for p, t, kind, k, x, y in _records(trajs)]
    doc = {**meta, "horizon": float(horizon), "fields": list(TRAJ_FIELDS), "records": records}
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def _build(rows, horizon: float) -> list[Trajectory]:
    out: list[Trajectory] = []
    cur_p, ini, evs = None, None, []
    for p, t, kind, k, x, y in rows:
        if kind == "I":
            if cur_p is not None:
                out.append(Trajectory(ini, tuple(evs), horizon))
            cur_p, ini, evs = p, State(k, x, y), []
        else:
            if p != cur_p:
                raise ValueError(f"event for particle {p} before its initial record")
            evs.append(TrajectoryEvent(t, JumpType(kind), State(k, x, y)))
    if cur_p is not None:
        out.append(Trajectory(ini, tuple(evs), horizon))
    return out


def read_trajectories_csv(path) -> tuple[list[Trajectory], dict[str, str]]:
    meta, body = _read_header(Path(path).read_text().splitlines(keepends=True))
    reader = csv.reader(body)
    if tuple(next(reader)) != TRAJ_FIELDS:
        raise ValueError("unexpected trajectory columns")
    rows = ((int(p), float(t), kind, int(k), float(x), float(y)) for p, t, kind, k, x, y in reader)
    return _build(rows, float(meta["horizon"])), meta


def read_trajectories_json(path) -> tuple[list[Trajectory], dict[str, Any]]:
    doc = json.loads(Path(path).read_text())
    if tuple(doc["fields"]) != TRAJ_FIELDS:
        raise ValueError("unexpected trajectory fields")
    rows = ((r["particle"], r["time"], r["kind"], r["k"], r["x"], r["y"]) for r in doc["records"])
    meta = {k: v for k, v in doc.items() if k not in ("records", "fields")}
    return _build(rows, float(doc["horizon"])), meta


def write_flow_csv(path, flow: MeasureFlow, scheme: CellScheme, meta: Mapping[str, Any]) -> None:
    """Cell masses of every grid measure; the header records the cell scheme."""
    with open(path, "w", newline="") as fh:
        _header(fh, {**meta, "cell_width": _num(scheme.width), "x_max": scheme.x_max,
                     "y_max": scheme.y_max, "k_max": scheme.k_max})
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FLOW_FIELDS)
        for t, mu in zip(flow.grid, flow.measures):
            for (k, xb, yb), m in sorted(cell_masses(mu, scheme).items()):
                w.writerow((_num(t), k, xb, yb, _num(m)))


def _opt(val: str, cast):
    return None if val in ("None", "") else cast(val)


def read_flow_csv(path) -> tuple[MeasureFlow, CellScheme, dict[str, str]]:
    """Flow of cell-center atoms carrying the recorded cell masses."""
    meta, body = _read_header(Path(path).read_text().splitlines(keepends=True))
    scheme = CellScheme(float(meta["cell_width"]), _opt(meta.get("x_max", "None"), float),
                        _opt(meta.get("y_max", "None"), float), _opt(meta.get("k_max", "None"), int))
    reader = csv.reader(body)
    if tuple(next(reader)) != FLOW_FIELDS:
        raise ValueError("unexpected flow columns")
    by_time: dict[float, list] = {}
    for t, k, xb, yb, w in reader:
        by_time.setdefault(float(t), []).append((scheme.center(int(k), int(xb), int(yb)), float(w)))
    grid = np.array(sorted(by_time))
    measures = []
    for t in grid:
        atoms = by_time[float(t)]
        total = sum(w for _, w in atoms)
        measures.append(EmpiricalMeasure.from_atoms([(s, w / total) for s, w in atoms]))
    return MeasureFlow(grid, measures), scheme, meta


def write_json(path, doc: Mapping[str, Any]) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=False, default=_json_default) + "\n")


def _json_default(v):
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.floating):
        return float(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(f"not JSON serializable: {type(v)}")


def write_table_csv(path, fields: Iterable[str], rows: Iterable[Iterable], meta: Mapping[str, Any]) -> None:
    with open(path, "w", newline="") as fh:
        _header(fh, meta)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(fields))
        for row in rows:
            w.writerow([_num(v) if isinstance(v, (float, np.floating)) else v for v in row])
