"""File formats: graphs, schedules, trajectories, certificates, regions and scenarios."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .exceptions import ParameterError
from .graph_spectral import Graph, demo_graph, random_connected_graph
from .lmi_certifier import Certificate, CertificateVariables, FeasibilityReport
from .protocol_dynamics import (DEFAULT_MIN_GAP, ConsensusMetrics, NetworkState, ProtocolGains,
                                SamplingSchedule, Trajectory)

FLOAT_FMT = "%.17g"


def fmt(x) -> str:
    return FLOAT_FMT % x


class InputError(ParameterError):
    """A user-supplied file or value could not be parsed."""


# graphs ---------------------------------------------------------------------

def read_graph(path) -> Graph:
    """Read ``n`` followed by ``n`` rows of ``n`` space-separated 0/1 entries."""
    try:
        lines = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()]
    except OSError as exc:
        raise InputError(f"cannot read graph file {path}: {exc}") from exc
    try:
        n = int(lines[0][0])
        rows = [[int(tok) for tok in row] for row in lines[1:1 + n]]
    except (IndexError, ValueError) as exc:
        raise InputError(f"malformed graph file {path}") from exc
    if len(lines[0]) != 1 or len(rows) != n or any(len(r) != n for r in rows) or len(lines) != n + 1:
        raise InputError(f"graph file {path} must hold n={n} rows of {n} entries")
    return Graph(np.array(rows, dtype=float))


def format_graph(g: Graph) -> str:
    rows = [" ".join(str(int(a)) for a in row) for row in g.adjacency]
    return "\n".join([str(g.n)] + rows) + "\n"


def write_graph(g: Graph, path):
    Path(path).write_text(format_graph(g))


# schedules and trajectories -------------------------------------------------

def write_schedule_csv(schedule: SamplingSchedule, path):
    Path(path).write_text("".join(fmt(t) + "\n" for t in schedule.instants))


def read_schedule_csv(path, tau_bar=None) -> SamplingSchedule:
    t = np.array([float(s) for s in Path(path).read_text().split()])
    if tau_bar is None:
        tau_bar = float(np.diff(t).max()) if t.size > 1 else 1.0
    return SamplingSchedule(t, tau_bar)


def write_trajectory_csv(traj: Trajectory, path):
    n = traj.n
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"x{i}" for i in range(1, n + 1)] + [f"v{i}" for i in range(1, n + 1)])
        for t, x, v in zip(traj.times, traj.positions, traj.velocities):
            w.writerow([fmt(t)] + [fmt(a) for a in x] + [fmt(a) for a in v])


def read_trajectory_csv(path) -> Trajectory:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], np.array(rows[1:], dtype=float).reshape(len(rows) - 1, len(rows[0]))
    n = (len(header) - 1) // 2
    return Trajectory(body[:, 0].copy(), body[:, 1:1 + n].copy(), body[:, 1 + n:].copy())


def write_metrics_csv(metrics: ConsensusMetrics, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "position_spread", "velocity_spread", "max_speed"])
        for row in zip(metrics.times, metrics.position_spread, metrics.velocity_spread, metrics.max_speed):
            w.writerow([fmt(a) for a in row])


# certificates ---------------------------------------------------------------

def certificate_to_dict(cert: Certificate, report: FeasibilityReport | None = None) -> dict:
    v = cert.variables
    out = {
        "params": {"kp": cert.kp, "kd": cert.kd, "tau_bar": cert.tau_bar, "lambda_bar": cert.lambda_bar},
        "P": v.P.tolist(),
        "R": v.R.tolist(),
        "Q1": v.Q1.tolist(),
        "Q2": v.Q2.tolist(),
        "margin": cert.margin,
    }
    if report is not None:
        out["report"] = {
            "status": report.status,
            "iterations": report.iterations,
            "extremes": report.verification.extremes if report.verification else None,
        }
    return out


def certificate_from_dict(d: dict) -> Certificate:
    try:
        p = d["params"]
        v = CertificateVariables(*(np.array(d[k], dtype=float) for k in ("P", "R", "Q1", "Q2")))
        return Certificate(v, float(p["kp"]), float(p["kd"]), float(p["tau_bar"]), float(p["lambda_bar"]),
                           float(d.get("margin", math.nan)))
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed certificate: {exc}") from exc


def write_certificate(cert: Certificate, path, report: FeasibilityReport | None = None):
    """JSON with params and row-major matrices; floats round-trip exactly."""
    Path(path).write_text(json.dumps(certificate_to_dict(cert, report), indent=2) + "\n")


def read_certificate(path) -> Certificate:
    try:
        return certificate_from_dict(json.loads(Path(path).read_text()))
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read certificate {path}: {exc}") from exc


# regions --------------------------------------------------------------------

def write_region_csv(region, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lambda_bar", "tau_star", "margin", "fragile"])
        for p in region.points:
            w.writerow([fmt(p.lambda_bar), fmt(p.tau_star), fmt(p.margin), str(p.fragile).lower()])


def read_region_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [
            {"lambda_bar": float(r["lambda_bar"]), "tau_star": float(r["tau_star"]),
             "margin": float(r["margin"]), "fragile": r["fragile"] == "true"}
            for r in csv.DictReader(fh)
        ]


# scenarios ------------------------------------------------------------------

@dataclass
class Scenario:
    """Everything ``simulate`` needs.

    ``graph`` is a path, ``"demo"`` for the built-in 8-agent network, or
    ``"random:<n>:<edge_prob>:<seed>"``.  ``initial`` is either a mapping with
    ``x`` and ``v`` lists or ``"random:<seed>"`` (positions uniform on
    [-10, 10], velocities uniform on [-1, 1]).
    """

    graph: str = "demo"
    kp: float = 1.0
    kd: float = 1.0
    tau_bar: float = 0.05
    min_gap: float = DEFAULT_MIN_GAP
    horizon: float = 60.0
    seed: int = 0
    initial: object = "random:0"
    output_step: float = 0.01
    out_dir: str = "out"
    base_dir: Path = Path(".")

    @property
    def gains(self) -> ProtocolGains:
        return ProtocolGains(self.kp, self.kd)

    def load_graph(self) -> Graph:
        spec = str(self.graph)
        if spec == "demo":
            return demo_graph()
        if spec.startswith("random:"):
            try:
                _, n, prob, seed = spec.split(":")
                return random_connected_graph(int(n), float(prob), int(seed))
            except ValueError as exc:
                raise InputError(f"bad random graph spec {spec!r}, expected random:<n>:<p>:<seed>") from exc
        path = Path(spec)
        if not path.is_absolute():
            path = self.base_dir / path
        if not path.exists():
            raise InputError(f"graph file not found: {path}")
        return read_graph(path)

    def initial_state(self, n: int) -> NetworkState:
        spec = self.initial
        if isinstance(spec, str):
            if not spec.startswith("random:"):
                raise InputError(f"bad initial-state spec {spec!r}")
            rng = np.random.default_rng(int(spec.split(":", 1)[1]))
            return NetworkState(rng.uniform(-10, 10, n), rng.uniform(-1, 1, n))
        try:
            x = np.asarray(spec["x"], dtype=float)
            v = np.asarray(spec.get("v", np.zeros(n)), dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"bad inline initial state: {exc}") from exc
        if x.size != n or v.size != n:
            raise InputError(f"initial state must have {n} entries per vector")
        return NetworkState(x, v)


_SCENARIO_KEYS = {
    "graph-path": "graph", "graph": "graph", "kp": "kp", "kd": "kd", "tau_bar": "tau_bar",
    "tau-bar": "tau_bar", "min_gap": "min_gap", "min-gap": "min_gap", "horizon": "horizon", "seed": "seed",
    "initial-state": "initial", "initial": "initial", "output_step": "output_step",
    "output-step": "output_step", "out-dir": "out_dir", "out_dir": "out_dir",
}


def load_scenario(path) -> Scenario:
    """Read a YAML scenario file; relative paths resolve against its directory."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text()) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise InputError(f"cannot read scenario {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise InputError(f"scenario {path} must be a mapping")
    fields = {}
    for key, value in raw.items():
        if key not in _SCENARIO_KEYS:
            raise InputError(f"unknown scenario field {key!r}")
        fields[_SCENARIO_KEYS[key]] = value
    sc = Scenario(**fields, base_dir=path.parent)
    for name in ("kp", "kd", "tau_bar", "min_gap", "horizon", "output_step"):
        try:
            setattr(sc, name, float(getattr(sc, name)))
        except (TypeError, ValueError) as exc:
            raise InputError(f"scenario field {name} must be numeric") from exc
    sc.seed = int(sc.seed)
    return sc
