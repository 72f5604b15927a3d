"""Certified stability region in the (lambda_bar, tau_bar) plane.

For each connectivity bound the largest certifiable sampling bound is located
by bisection over ``tau_bar``, warm-starting each certificate search from the
last feasible point.
"""
from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import BracketError, ParameterError
from .lmi_certifier import Certificate, SolverOptions, find_certificate, verify_certificate
from .protocol_dynamics import ProtocolGains

log = logging.getLogger(__name__)

DEFAULT_BISECT_TOL = 1e-3
DEFAULT_TAU_HI = 5.0
DEFAULT_GRID = tuple(round(0.1 * k, 1) for k in range(1, 10))
THREADS_ENV = "CONSENSUS_LAB_THREADS"


@dataclass
class RegionPoint:
    lambda_bar: float
    tau_star: float
    certificate: Certificate | None
    iterations: int
    fragile: bool = False
    notes: list = field(default_factory=list)

    @property
    def margin(self) -> float:
        return self.certificate.margin if self.certificate is not None else float("nan")


@dataclass
class StabilityRegion:
    gains: ProtocolGains
    points: list
    tolerance: float
    solver_options: SolverOptions

    @property
    def lambda_bars(self) -> np.ndarray:
        return np.array([p.lambda_bar for p in self.points])

    @property
    def tau_stars(self) -> np.ndarray:
        return np.array([p.tau_star for p in self.points])

    @property
    def total_iterations(self) -> int:
        return sum(p.iterations for p in self.points)


def max_certified_tau(gains: ProtocolGains, lambda_bar, bisect_tol=DEFAULT_BISECT_TOL,
                      tau_hi=DEFAULT_TAU_HI, options: SolverOptions | None = None) -> RegionPoint:
    """Largest ``tau_bar`` (to within ``bisect_tol``) with a verified certificate.

    Returns ``tau_star = 0`` without a certificate when ``tau_bar = bisect_tol``
    already fails.

    Raises
    ------
    BracketError
        If a certificate is found at ``tau_hi``.
    """
    if not bisect_tol > 0:
        raise ParameterError(f"bisect_tol must be positive, got {bisect_tol}")
    if not tau_hi > bisect_tol:
        raise ParameterError(f"tau_hi={tau_hi} must exceed bisect_tol={bisect_tol}")
    options = options or SolverOptions()
    iters = 0

    top = find_certificate(gains, tau_hi, lambda_bar, options)
    iters += top.iterations
    if top.feasible:
        raise BracketError(f"certificate found at tau_hi={tau_hi} for lambda_bar={lambda_bar}; widen the bracket")

    low = find_certificate(gains, bisect_tol, lambda_bar, options)
    iters += low.iterations
    if not low.feasible:
        return RegionPoint(float(lambda_bar), 0.0, None, iters)

    lo, hi, best = bisect_tol, tau_hi, low.certificate
    while hi - lo > bisect_tol:
        mid = 0.5 * (lo + hi)
        rep = find_certificate(gains, mid, lambda_bar, options, initial=best.variables)
        iters += rep.iterations
        if rep.feasible:
            lo, best = mid, rep.certificate
        else:
            hi = mid
    return RegionPoint(float(lambda_bar), float(lo), best, iters)


def _probe_point(args):
    gains, lam, bisect_tol, tau_hi, options = args
    point = max_certified_tau(gains, lam, bisect_tol, tau_hi, options)
    if point.tau_star > 0 and point.tau_star / 2 > bisect_tol:
        # spot check that feasibility persists below tau_star
        half = find_certificate(gains, point.tau_star / 2, lam, options)
        point.iterations += half.iterations
        if not half.feasible:
            point.fragile = True
            point.notes.append(f"no certificate found at tau_star/2={point.tau_star / 2:.6g}")
    return point


def _workers(requested):
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get(THREADS_ENV)
    if env:
        return max(1, int(env))
    return 1


def stability_region(gains: ProtocolGains, lambda_grid=DEFAULT_GRID, bisect_tol=DEFAULT_BISECT_TOL,
                     tau_hi=DEFAULT_TAU_HI, options: SolverOptions | None = None, workers=None) -> StabilityRegion:
    """Run :func:`max_certified_tau` over a sorted grid of connectivity bounds.

    Points may be evaluated in parallel (``workers`` or the
    ``CONSENSUS_LAB_THREADS`` environment variable); results are always
    aggregated in grid order.  A point whose ``tau_star`` exceeds that of its
    predecessor by more than ``bisect_tol`` is flagged ``fragile``, as is a
    point where the search fails at ``tau_star / 2``.
    """
    grid = [float(g) for g in lambda_grid]
    if not grid:
        raise ParameterError("empty lambda grid")
    if any(not -1 < g < 1 for g in grid):
        raise ParameterError("grid values must lie in (-1, 1)")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ParameterError("grid values must be strictly increasing")
    options = options or SolverOptions()
    jobs = [(gains, lam, bisect_tol, tau_hi, options) for lam in grid]
    n_workers = min(_workers(workers), len(jobs))
    if n_workers > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            points = list(pool.map(_probe_point, jobs))
    else:
        points = [_probe_point(j) for j in jobs]

    for prev, cur in zip(points, points[1:]):
        if cur.tau_star > prev.tau_star + bisect_tol:
            cur.fragile = True
            cur.notes.append(
                f"tau_star {cur.tau_star:.6g} exceeds {prev.tau_star:.6g} at lambda_bar={prev.lambda_bar:g}")
    for p in points:
        log.info("lambda_bar=%g tau_star=%g fragile=%s", p.lambda_bar, p.tau_star, p.fragile)
    return StabilityRegion(gains, points, bisect_tol, replace(options))


def reverify(region: StabilityRegion, margin_tol=None) -> list:
    """Re-check every stored certificate; returns one boolean per point with ``tau_star > 0``."""
    tol = region.solver_options.feas_tol if margin_tol is None else margin_tol
    return [verify_certificate(p.certificate, tol).passed for p in region.points if p.tau_star > 0]
