"""Command line front end: ``consensus-lab {simulate,certify,sweep,graph-gen}``.

Exit codes: 0 success (certificate found), 1 no certificate found, 2 input error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import io, plotting
from .exceptions import ConsensusLabError, ConvergenceError
from .graph_spectral import modal_decomposition, random_connected_graph
from .lmi_certifier import SolverOptions, find_certificate
from .protocol_dynamics import (consensus_metrics, generate_schedule, sampled_states, simulate_modal,
                                uem_limit)
from .region_sweep import DEFAULT_BISECT_TOL, DEFAULT_GRID, DEFAULT_TAU_HI, stability_region

EXIT_OK, EXIT_NO_CERT, EXIT_INPUT = 0, 1, 2

log = logging.getLogger("consensus_lab")


def _parse_grid(text):
    """``"0.1,0.2,0.5"`` or ``"start:stop:step"`` (inclusive stop)."""
    if ":" in text:
        start, stop, step = (float(s) for s in text.split(":"))
        count = int(round((stop - start) / step)) + 1
        return [round(start + k * step, 12) for k in range(count)]
    return [float(s) for s in text.split(",") if s.strip()]


def cmd_simulate(args):
    if args.config:
        sc = io.load_scenario(args.config)
    else:
        sc = io.Scenario()
    for name in ("graph", "kp", "kd", "tau_bar", "min_gap", "horizon", "seed", "output_step", "out_dir"):
        val = getattr(args, name, None)
        if val is not None:
            setattr(sc, name, val)
    if args.initial is not None:
        sc.initial = args.initial
    g = sc.load_graph()
    basis = modal_decomposition(g)
    init = sc.initial_state(g.n)
    schedule = generate_schedule(sc.tau_bar, sc.min_gap, sc.horizon, sc.seed)
    traj = simulate_modal(basis, sc.gains, schedule, init, sc.output_step, horizon=sc.horizon)
    sampled = sampled_states(basis, sc.gains, schedule, init)
    metrics = consensus_metrics(traj)

    out = Path(sc.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    io.write_graph(g, out / "graph.txt")
    io.write_schedule_csv(schedule, out / "schedule.csv")
    io.write_trajectory_csv(traj, out / "trajectory.csv")
    io.write_trajectory_csv(sampled, out / "sampled.csv")
    io.write_metrics_csv(metrics, out / "metrics.csv")
    plotting.plot_trajectory(traj, out)
    plotting.plot_sampled(sampled, out)
    plotting.plot_metrics(metrics, out / "disagreement.svg")

    print(f"agents={g.n} lambda_2={basis.second_eigenvalue:.17g} samples={len(schedule)}")
    print(f"final_position_disagreement={metrics.position_spread[-1]:.17g}")
    print(f"final_velocity_disagreement={metrics.velocity_spread[-1]:.17g}")
    print(f"final_max_speed={metrics.max_speed[-1]:.17g}")
    print(f"gamma_hat={metrics.gamma_hat:.17g}")
    try:
        uem = uem_limit(basis, sc.gains, schedule, init)
        print(f"uem_gamma={uem.gamma:.17g} uem_residual={uem.residual:.3g}")
    except ConvergenceError as exc:
        print(f"uem_gamma=unsettled ({exc})")
    return EXIT_OK


def _options(args):
    return SolverOptions(max_iters=args.max_iters, feas_tol=args.feas_tol, seed=args.seed)


def cmd_certify(args):
    report = find_certificate(io.ProtocolGains(args.kp, args.kd), args.tau_bar, args.lambda_bar, _options(args))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ver = report.verification
    lines = [
        f"status={report.status}",
        f"kp={args.kp:.17g} kd={args.kd:.17g} tau_bar={args.tau_bar:.17g} lambda_bar={args.lambda_bar:.17g}",
        f"iterations={report.iterations}",
        f"margin={ver.margin:.17g}",
    ] + [f"extreme_{k}={v:.17g}" for k, v in ver.extremes.items()]
    if report.feasible:
        io.write_certificate(report.certificate, out / "certificate.json", report)
    else:
        lines.append("note=budget exhausted without a certificate; this does not prove infeasibility")
    text = "\n".join(lines) + "\n"
    (out / "report.txt").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK if report.feasible else EXIT_NO_CERT


def cmd_sweep(args):
    grid = _parse_grid(args.lambda_grid) if args.lambda_grid else list(DEFAULT_GRID)
    region = stability_region(io.ProtocolGains(args.kp, args.kd), grid, args.bisect_tol, args.tau_hi,
                              _options(args))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    io.write_region_csv(region, out / "region.csv")
    plotting.plot_region(region, out / "region.svg")
    cert_dir = out / "certificates"
    cert_dir.mkdir(exist_ok=True)
    for p in region.points:
        if p.certificate is not None:
            io.write_certificate(p.certificate, cert_dir / f"lambda_{p.lambda_bar:.6g}.json")
    for p in region.points:
        flag = " FRAGILE: " + "; ".join(p.notes) if p.fragile else ""
        print(f"lambda_bar={p.lambda_bar:g} tau_star={p.tau_star:.6g} margin={p.margin:.3g}{flag}")
    print(f"total_iterations={region.total_iterations}")
    return EXIT_OK


def cmd_graph_gen(args):
    g = random_connected_graph(args.n, args.edge_prob, args.seed)
    text = io.format_graph(g)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="consensus-lab", description=__doc__.splitlines()[0])
    p.add_argument("--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)

    sim = sub.add_parser("simulate", help="simulate the sampled-data protocol on a graph")
    sim.add_argument("--config", help="YAML scenario file")
    sim.add_argument("--graph", help="graph file, 'demo', or random:<n>:<p>:<seed>")
    sim.add_argument("--kp", type=float)
    sim.add_argument("--kd", type=float)
    sim.add_argument("--tau-bar", dest="tau_bar", type=float)
    sim.add_argument("--min-gap", dest="min_gap", type=float)
    sim.add_argument("--horizon", type=float)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--initial", help="random:<seed>")
    sim.add_argument("--output-step", dest="output_step", type=float)
    sim.add_argument("--out-dir", dest="out_dir")
    sim.set_defaults(func=cmd_simulate)

    def solver_flags(sp):
        sp.add_argument("--kp", type=float, default=1.0)
        sp.add_argument("--kd", type=float, default=1.0)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--max-iters", dest="max_iters", type=int, default=SolverOptions.max_iters)
        sp.add_argument("--feas-tol", dest="feas_tol", type=float, default=SolverOptions.feas_tol)
        sp.add_argument("--out-dir", dest="out_dir", default="out")

    cert = sub.add_parser("certify", help="search for an LMI stability certificate")
    solver_flags(cert)
    cert.add_argument("--tau-bar", dest="tau_bar", type=float, required=True)
    cert.add_argument("--lambda-bar", dest="lambda_bar", type=float, required=True)
    cert.set_defaults(func=cmd_certify)

    sw = sub.add_parser("sweep", help="map the certified (lambda_bar, tau_bar) region")
    solver_flags(sw)
    sw.add_argument("--lambda-grid", dest="lambda_grid", help="comma list or start:stop:step")
    sw.add_argument("--bisect-tol", dest="bisect_tol", type=float, default=DEFAULT_BISECT_TOL)
    sw.add_argument("--tau-hi", dest="tau_hi", type=float, default=DEFAULT_TAU_HI)
    sw.set_defaults(func=cmd_sweep)

    gg = sub.add_parser("graph-gen", help="write a random connected graph")
    gg.add_argument("--n", type=int, required=True)
    gg.add_argument("--edge-prob", dest="edge_prob", type=float, default=0.3)
    gg.add_argument("--seed", type=int, default=0)
    gg.add_argument("--out", help="output path (stdout when omitted)")
    gg.set_defaults(func=cmd_graph_gen)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    np.seterr(over="ignore")
    try:
        return args.func(args)
    except (ConsensusLabError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
