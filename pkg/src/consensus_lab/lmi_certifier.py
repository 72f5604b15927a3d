"""Stability certificate for the sampled modes: LMI assembly, solver and checks.

A certificate is a quadruple ``(P, R, Q1, Q2)`` of 2x2 matrices with ``P, R``
positive definite that makes four block matrices ``M1 .. M4`` negative
definite.  The matrices are linear in the 14 free entries, so feasibility is
searched by minimising the convex function

    f(theta) = max(lmax(M1), .., lmax(M4), -lmin(P), -lmin(R))

on the slice ``trace(P) + trace(R) = 2``.  A point with ``f < 0`` is a
certificate; ``-f`` is its margin.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ParameterError
from .protocol_dynamics import ProtocolGains, SamplingSchedule, _flow_terms, system_matrices

log = logging.getLogger(__name__)

N_VARS = 14
CONSTRAINT_NAMES = ("P", "R", "M1", "M2", "M3", "M4")
# entries of theta holding the diagonals of P and R
_TRACE_IDX = np.array([0, 2, 3, 5])


@dataclass(frozen=True)
class CertificateVariables:
    P: np.ndarray
    R: np.ndarray
    Q1: np.ndarray
    Q2: np.ndarray

    def to_vector(self) -> np.ndarray:
        P, R = self.P, self.R
        return np.array([P[0, 0], P[0, 1], P[1, 1], R[0, 0], R[0, 1], R[1, 1],
                         *np.ravel(self.Q1), *np.ravel(self.Q2)], dtype=float)

    @classmethod
    def from_vector(cls, theta):
        t = np.asarray(theta, dtype=float)
        if t.shape != (N_VARS,):
            raise ParameterError(f"expected {N_VARS} decision variables, got shape {t.shape}")
        P = np.array([[t[0], t[1]], [t[1], t[2]]])
        R = np.array([[t[3], t[4]], [t[4], t[5]]])
        return cls(P, R, t[6:10].reshape(2, 2).copy(), t[10:14].reshape(2, 2).copy())

    def scaled(self, alpha):
        return CertificateVariables(alpha * self.P, alpha * self.R, alpha * self.Q1, alpha * self.Q2)


@dataclass(frozen=True)
class Certificate:
    """Decision matrices together with the parameters they certify."""

    variables: CertificateVariables
    kp: float
    kd: float
    tau_bar: float
    lambda_bar: float
    margin: float = float("nan")

    @property
    def gains(self) -> ProtocolGains:
        return ProtocolGains(self.kp, self.kd)

    P = property(lambda self: self.variables.P)
    R = property(lambda self: self.variables.R)
    Q1 = property(lambda self: self.variables.Q1)
    Q2 = property(lambda self: self.variables.Q2)


@dataclass(frozen=True)
class Verification:
    """Outcome of the explicit eigenvalue check of a certificate.

    ``extremes`` maps ``P`` and ``R`` to their smallest eigenvalue and
    ``M1 .. M4`` to their largest.  ``margin`` is the worst slack over the six
    conditions; it is positive exactly when every condition holds strictly.
    """

    passed: bool
    extremes: dict
    margin: float


@dataclass
class FeasibilityReport:
    """Result of a certificate search.

    ``no-certificate-found`` only means the search budget ran out; the LMIs are
    sufficient conditions and the solver is not a proof of infeasibility.
    """

    status: str
    certificate: Certificate | None
    objective_trace: list = field(default_factory=list)
    iterations: int = 0
    verification: Verification | None = None

    @property
    def feasible(self) -> bool:
        return self.status == "feasible"


def _check_params(tau_bar, lambda_bar):
    if not (math.isfinite(tau_bar) and tau_bar > 0):
        raise ParameterError(f"tau_bar must be positive, got {tau_bar}")
    if not (math.isfinite(lambda_bar) and lambda_bar < 1):
        raise ParameterError(f"lambda_bar must be < 1, got {lambda_bar}")


def _sym(M):
    return 0.5 * (M + M.T)


def _two_block(P, R, Q1, Q2, G, tau_bar):
    top = np.hstack((Q1.T @ G + G.T @ Q1, P - Q1.T + G.T @ Q2))
    bot = np.hstack((np.zeros((2, 2)), -Q2 - Q2.T + tau_bar * R))
    M = np.vstack((top, bot))
    M[2:, :2] = M[:2, 2:].T
    return M


def _three_block(P, R, Q1, Q2, G, B, c, tau_bar, corner_R):
    M = np.zeros((6, 6))
    M[:2, :2] = Q1.T @ G + G.T @ Q1
    M[:2, 2:4] = P - Q1.T + G.T @ Q2
    M[:2, 4:] = c * Q1.T @ B
    M[2:4, 2:4] = -Q2 - Q2.T + corner_R * R
    M[2:4, 4:] = c * Q2.T @ B
    M[4:, 4:] = -tau_bar * R
    M[2:4, :2] = M[:2, 2:4].T
    M[4:, :2] = M[:2, 4:].T
    M[4:, 2:4] = M[2:4, 4:].T
    return M


def assemble_lmis(cert_vars: CertificateVariables, gains: ProtocolGains, tau_bar, lambda_bar):
    """Return ``(M1, M2, M3, M4)``: two 4x4 and two 6x6 symmetric matrices.

    ``M1``/``M3`` use the endpoint ``lambda = -1`` and ``M2``/``M4`` the
    endpoint ``lambda = lambda_bar``; ``M1``/``M2`` correspond to a zero hold
    age and ``M3``/``M4`` to the full age ``tau_bar``.
    """
    _check_params(tau_bar, lambda_bar)
    A, B = system_matrices(gains)
    P, R, Q1, Q2 = cert_vars.P, cert_vars.R, cert_vars.Q1, cert_vars.Q2
    G_lo = A - B
    G_hi = A + lambda_bar * B
    M1 = _two_block(P, R, Q1, Q2, G_lo, tau_bar)
    M2 = _two_block(P, R, Q1, Q2, G_hi, tau_bar)
    M3 = _three_block(P, R, Q1, Q2, G_lo, B, tau_bar, tau_bar, 0.0)
    M4 = _three_block(P, R, Q1, Q2, G_hi, B, -tau_bar * lambda_bar, tau_bar, 0.0)
    return M1, M2, M3, M4


def psi(cert_vars: CertificateVariables, gains: ProtocolGains, tau_bar, tau, lam):
    """Bound matrix of the functional derivative at hold age ``tau`` and eigenvalue ``lam``.

    Acts on ``(y, y', xi)`` with ``xi`` the mean of ``y'`` since the last
    sampling instant.
    """
    if not 0.0 <= tau <= tau_bar:
        raise ParameterError(f"tau must lie in [0, tau_bar={tau_bar}], got {tau}")
    A, B = system_matrices(gains)
    M = _three_block(cert_vars.P, cert_vars.R, cert_vars.Q1, cert_vars.Q2, A + lam * B, B,
                     -tau * lam, 0.0, tau_bar - tau)
    M[4:, 4:] = -tau * cert_vars.R
    return M


def embed4(M):
    """Place a 4x4 matrix in the leading block of a 6x6 zero matrix."""
    out = np.zeros((6, 6))
    out[:4, :4] = M
    return out


def convex_mixture(cert_vars, gains, tau_bar, lambda_bar, tau, lam):
    """Bilinear interpolation of ``M1 .. M4`` at ``(tau, lam)``; equals ``psi`` identically."""
    mu_t = (tau_bar - tau) / tau_bar
    mu_l = (lambda_bar - lam) / (lambda_bar + 1.0)
    M1, M2, M3, M4 = assemble_lmis(cert_vars, gains, tau_bar, lambda_bar)
    return (mu_t * mu_l * embed4(M1) + mu_t * (1 - mu_l) * embed4(M2)
            + (1 - mu_t) * mu_l * M3 + (1 - mu_t) * (1 - mu_l) * M4)


def constraint_extremes(cert_vars, gains, tau_bar, lambda_bar) -> dict:
    """Smallest eigenvalue of ``P``, ``R`` and largest of each ``Mi``."""
    mats = assemble_lmis(cert_vars, gains, tau_bar, lambda_bar)
    out = {
        "P": float(np.linalg.eigvalsh(_sym(cert_vars.P))[0]),
        "R": float(np.linalg.eigvalsh(_sym(cert_vars.R))[0]),
    }
    for name, M in zip(CONSTRAINT_NAMES[2:], mats):
        out[name] = float(np.linalg.eigvalsh(_sym(M))[-1])
    return out


def verify_certificate(cert: Certificate, margin_tol=0.0) -> Verification:
    """Recompute all six extreme eigenvalues and compare them against ``margin_tol``."""
    ext = constraint_extremes(cert.variables, cert.gains, cert.tau_bar, cert.lambda_bar)
    slacks = [ext["P"], ext["R"]] + [-ext[k] for k in CONSTRAINT_NAMES[2:]]
    margin = float(min(slacks))
    return Verification(passed=bool(margin > margin_tol), extremes=ext, margin=margin)


@dataclass(frozen=True)
class SolverOptions:
    max_iters: int = 20000
    feas_tol: float = 1e-7
    seed: int = 0
    restarts: int = 4
    # iterations without sufficient decrease before the target gap is halved
    patience: int = 30
    deflection: float = 1.5
    # abandon a run when the target gap falls below this fraction of f_best - goal
    stall_ratio: float = 1e-4


class _LinearLMIs:
    """The six constraint matrices as linear maps ``theta -> sum_j theta_j * basis_j``."""

    def __init__(self, gains, tau_bar, lambda_bar):
        eye = np.eye(N_VARS)
        per_var = [self._blocks(CertificateVariables.from_vector(e), gains, tau_bar, lambda_bar) for e in eye]
        self.basis = [np.stack([pv[c] for pv in per_var]) for c in range(6)]
        # the problem's own sign: P, R enter as -P, -R so every condition reads lmax < 0
        self.basis[0] = -self.basis[0]
        self.basis[1] = -self.basis[1]

    @staticmethod
    def _blocks(v, gains, tau_bar, lambda_bar):
        return (v.P, v.R) + assemble_lmis(v, gains, tau_bar, lambda_bar)

    def evaluate(self, theta):
        """Return ``f(theta)`` and a subgradient."""
        best, grad = -np.inf, None
        for basis in self.basis:
            M = _sym(np.tensordot(theta, basis, axes=1))
            w, V = np.linalg.eigh(M)
            if w[-1] > best:
                u = V[:, -1]
                best = w[-1]
                # d lmax / d theta_j = u^T basis_j u
                grad = np.einsum("i,jik,k->j", u, basis, u)
        return float(best), grad


def _normalize(theta):
    tr = theta[_TRACE_IDX].sum()
    if tr <= 0:
        return None
    return theta * (2.0 / tr)


def _default_start():
    return CertificateVariables(0.5 * np.eye(2), 0.5 * np.eye(2), np.zeros((2, 2)), np.eye(2)).to_vector()


def _random_start(rng):
    def spd():
        X = rng.normal(size=(2, 2))
        return X @ X.T + 0.1 * np.eye(2)

    theta = CertificateVariables(spd(), spd(), rng.normal(size=(2, 2)),
                                 np.eye(2) + 0.5 * rng.normal(size=(2, 2))).to_vector()
    return _normalize(theta)


def _project(g):
    # remove the component normal to the plane trace(P) + trace(R) = const
    g = g.copy()
    g[_TRACE_IDX] -= g[_TRACE_IDX].mean()
    return g


def _descend(lmis, theta, budget, goal, options, trace):
    """Polyak steps towards an adaptive target level below the best value so far.

    The target is ``f_best - gap``; the gap is halved whenever ``patience``
    iterations pass without the best value dropping by half a gap, and the
    iterate is then reset to the best point.  Successive subgradients are
    deflected (Camerini-Fratta-Maffioli) when they point against each other.
    A run is abandoned once the gap is negligible next to the distance from
    the goal.
    """
    f, g = lmis.evaluate(theta)
    best_f, best_theta = f, theta.copy()
    gap = max(abs(f), 1e-2)
    ref, stall, used = best_f, 0, 1
    d_prev = None
    trace.append(best_f)
    while used < budget and best_f >= goal:
        if gap < options.stall_ratio * (best_f - goal) or gap < 1e-14:
            break
        d = _project(g)
        if d_prev is not None and options.deflection > 0:
            dot = d @ d_prev
            if dot < 0:
                d = d - options.deflection * dot / (d_prev @ d_prev) * d_prev
        dn = d @ d
        if dn == 0.0:
            break
        target = best_f - gap
        theta = theta - ((f - target) / dn) * d
        d_prev = d
        f, g = lmis.evaluate(theta)
        used += 1
        if f < best_f:
            best_f, best_theta = f, theta.copy()
        trace.append(best_f)
        if best_f <= ref - 0.5 * gap:
            ref, stall = best_f, 0
        else:
            stall += 1
            if stall >= options.patience:
                gap *= 0.5
                theta, d_prev = best_theta.copy(), None
                f, g = lmis.evaluate(theta)
                used += 1
                ref, stall = best_f, 0
    return best_f, best_theta, used


def find_certificate(gains: ProtocolGains, tau_bar, lambda_bar, options: SolverOptions | None = None,
                     initial: CertificateVariables | None = None) -> FeasibilityReport:
    """Search for a certificate of the four LMIs at ``(tau_bar, lambda_bar)``.

    The iteration budget is split evenly between a first run (from ``initial``
    when given, otherwise a fixed symmetric start) and seeded random restarts.
    Feasibility is declared only when the best point has ``f < -feas_tol`` and
    passes :func:`verify_certificate` with the same tolerance.
    """
    options = options or SolverOptions()
    _check_params(tau_bar, lambda_bar)
    if lambda_bar <= -1:
        raise ParameterError(f"lambda_bar must exceed -1, got {lambda_bar}")
    lmis = _LinearLMIs(gains, tau_bar, lambda_bar)
    rng = np.random.default_rng(options.seed)
    goal = -options.feas_tol
    per_run = max(1, options.max_iters // (options.restarts + 1))

    starts = []
    if initial is not None:
        warm = _normalize(initial.to_vector())
        if warm is not None:
            starts.append(warm)
    starts.append(_default_start())

    trace, used_total = [], 0
    best_f, best_theta = np.inf, None
    run = 0
    while used_total < options.max_iters and run <= options.restarts + len(starts) - 1:
        theta0 = starts[run] if run < len(starts) else _random_start(rng)
        run += 1
        if theta0 is None:
            continue
        budget = min(per_run, options.max_iters - used_total)
        f, theta, used = _descend(lmis, theta0, budget, goal, options, trace)
        used_total += used
        if f < best_f:
            best_f, best_theta = f, theta
        if best_f < goal:
            break

    cert_vars = CertificateVariables.from_vector(best_theta)
    cert = Certificate(cert_vars, gains.kp, gains.kd, float(tau_bar), float(lambda_bar), float(-best_f))
    check = verify_certificate(cert, options.feas_tol)
    status = "feasible" if (best_f < goal and check.passed) else "no-certificate-found"
    cert = Certificate(cert_vars, gains.kp, gains.kd, float(tau_bar), float(lambda_bar), check.margin)
    log.debug("tau_bar=%g lambda_bar=%g -> %s after %d iterations (f=%.3e)",
              tau_bar, lambda_bar, status, used_total, best_f)
    return FeasibilityReport(
        status=status,
        certificate=cert if status == "feasible" else None,
        objective_trace=trace,
        iterations=used_total,
        verification=check,
    )


def _lyapunov_integrand(gains, lam, R, y_k):
    A, B = system_matrices(gains)

    def ydot_R_ydot(s):
        E, GB = _flow_terms(gains, s)
        Phi = E + lam * GB
        y = Phi @ y_k
        yd = y @ A.T + lam * (B @ y_k)
        return np.einsum("...i,ij,...j->...", yd, R, yd)

    return ydot_R_ydot


def adaptive_simpson(f, a, b, rtol=1e-12, max_depth=50):
    """Adaptive composite Simpson quadrature of a vectorised scalar function."""
    if b <= a:
        return 0.0
    fa, fm, fb = f(np.array([a, 0.5 * (a + b), b]))
    whole = (b - a) / 6.0 * (fa + 4 * fm + fb)
    scale = max(abs(whole), 1e-300)

    def rec(a, b, fa, fm, fb, whole, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(np.array([lm, rm]))
        left = (m - a) / 6.0 * (fa + 4 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4 * frm + fb)
        err = left + right - whole
        if depth >= max_depth or abs(err) <= 15.0 * rtol * scale:
            return left + right + err / 15.0
        return (rec(a, m, fa, flm, fm, left, depth + 1)
                + rec(m, b, fm, frm, fb, right, depth + 1))

    return rec(a, b, fa, fm, fb, whole, 0)


@dataclass(frozen=True)
class LyapunovTrace:
    times: np.ndarray
    values: np.ndarray
    # V at each sampling instant, where the integral term has just reset
    instant_times: np.ndarray
    instant_values: np.ndarray


def lyapunov_trace(cert: Certificate, gains: ProtocolGains, lam, schedule: SamplingSchedule, y0,
                   output_step, horizon=None, rtol=1e-12) -> LyapunovTrace:
    """Evaluate the functional ``y'Py + (tau_bar - tau) * int_{t_k}^t y'(s)^T R y'(s) ds`` along a mode.

    The mode is propagated exactly; the integral uses adaptive Simpson
    quadrature on the closed-form integrand of the current hold interval.
    """
    if not -1.0 <= lam <= cert.lambda_bar:
        raise ParameterError(f"lambda must lie in [-1, {cert.lambda_bar}], got {lam}")
    if horizon is None:
        horizon = schedule.horizon
    from .protocol_dynamics import modal_states_at_instants

    P, R, tb = cert.P, cert.R, cert.tau_bar
    held = modal_states_at_instants(np.array([lam]), gains, schedule, np.asarray(y0, float).reshape(1, 2))[:, 0, :]
    inst = schedule.instants
    keep = inst <= horizon * (1 + 1e-12)
    inst_vals = np.einsum("ki,ij,kj->k", held[keep], P, held[keep])

    count = int(math.floor(horizon / output_step * (1 + 1e-12)))
    times = output_step * np.arange(count + 1, dtype=float)
    idx = np.searchsorted(inst, times, side="right") - 1
    values = np.empty(times.size)
    for m, (t, k) in enumerate(zip(times, idx)):
        y_k = held[k]
        age = t - inst[k]
        E, GB = _flow_terms(gains, np.asarray(age))
        y = (E + lam * GB) @ y_k
        integral = adaptive_simpson(_lyapunov_integrand(gains, lam, R, y_k), 0.0, age, rtol) if age > 0 else 0.0
        values[m] = y @ P @ y + (tb - age) * integral
    return LyapunovTrace(times, values, inst[keep].copy(), inst_vals)
