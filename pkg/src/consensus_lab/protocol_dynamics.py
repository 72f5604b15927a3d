"""Sampled-data PD consensus protocol: exact modal propagation and an RK4 oracle.

Between two sampling instants every agent integrates

    x' = v
    v' = kp * (W x(t_k) - x) + kd * (W v(t_k) - v)

with the neighbour information frozen at the last instant ``t_k``.  After the
change of variables ``x = T z`` each mode ``y_i = (z_i, z_i')`` evolves as
``y' = A y + lambda_i B y(t_k)``, whose flow over a hold interval is a 2x2
matrix known in closed form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConvergenceError, DimensionError, ParameterError, PreconditionError
from .graph_spectral import Graph, ModalBasis, weighted_adjacency

DEFAULT_MIN_GAP = 1e-3


@dataclass(frozen=True)
class ProtocolGains:
    kp: float
    kd: float

    def __post_init__(self):
        if not (math.isfinite(self.kp) and self.kp > 0):
            raise PreconditionError(f"kp must be positive (A is singular otherwise), got {self.kp}")
        if not (math.isfinite(self.kd) and self.kd > 0):
            raise PreconditionError(f"kd must be positive, got {self.kd}")


@dataclass(frozen=True)
class SamplingSchedule:
    """Global sampling instants ``0 = t_0 < t_1 < ...`` with gaps at most ``tau_bar``."""

    instants: np.ndarray
    tau_bar: float

    def __post_init__(self):
        t = np.array(self.instants, dtype=float, copy=True)
        if t.ndim != 1 or t.size < 1:
            raise ParameterError("a schedule needs at least one instant")
        if t[0] != 0.0:
            raise ParameterError("the first sampling instant must be t = 0")
        gaps = np.diff(t)
        if np.any(gaps <= 0):
            raise ParameterError("sampling instants must be strictly increasing")
        # slack for rounding of k * gap grids far from the origin
        if gaps.size and gaps.max() > self.tau_bar * (1 + 1e-12) + 4 * np.spacing(t[-1]):
            raise ParameterError(f"gap {gaps.max()} exceeds tau_bar={self.tau_bar}")
        t.setflags(write=False)
        object.__setattr__(self, "instants", t)

    @property
    def gaps(self) -> np.ndarray:
        return np.diff(self.instants)

    @property
    def horizon(self) -> float:
        return float(self.instants[-1])

    def __len__(self):
        return self.instants.size


@dataclass(frozen=True)
class NetworkState:
    x: np.ndarray
    v: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x, dtype=float))
        v = np.atleast_1d(np.asarray(self.v, dtype=float))
        if x.shape != v.shape or x.ndim != 1:
            raise DimensionError(f"position/velocity shapes differ: {x.shape} vs {v.shape}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v", v)

    @property
    def n(self) -> int:
        return self.x.size


@dataclass
class Trajectory:
    """Time-stamped network (or single-mode) states.

    ``positions`` and ``velocities`` have shape ``(len(times), n)``.  A single
    mode is stored with ``n = 1`` (``z`` and ``z'``).
    """

    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ParameterError("trajectory timestamps must be strictly increasing")
        if self.positions.shape != self.velocities.shape or self.positions.shape[0] != self.times.size:
            raise DimensionError("trajectory arrays are inconsistent")

    @property
    def n(self) -> int:
        return self.positions.shape[1]

    def __len__(self):
        return self.times.size

    def state(self, k) -> NetworkState:
        return NetworkState(self.positions[k], self.velocities[k], float(self.times[k]))


def system_matrices(gains: ProtocolGains):
    """Return ``(A, B)`` with ``A = [[0, 1], [-kp, -kd]]`` and ``B = [[0, 0], [kp, kd]]``."""
    A = np.array([[0.0, 1.0], [-gains.kp, -gains.kd]])
    B = np.array([[0.0, 0.0], [gains.kp, gains.kd]])
    return A, B


def _flow_terms(gains: ProtocolGains, dts):
    """Closed-form ``exp(A dt)`` and ``A^-1 (exp(A dt) - I) B`` for a batch of ``dt``.

    With ``s = tr(A)/2`` and ``M = A - s I`` one has ``M @ M = d I`` where
    ``d = s**2 - det(A)``, hence ``exp(A t) = exp(s t) (C I + S M)`` with
    ``C = cosh(sqrt(d) t)`` and ``S = sinh(sqrt(d) t) / sqrt(d)`` (their
    trigonometric counterparts for ``d < 0`` and ``C = 1, S = t`` for ``d = 0``).
    ``exp(A t) - I`` is formed without cancellation so that short intervals
    keep full relative accuracy.
    """
    dts = np.asarray(dts, dtype=float)
    if np.any(dts < 0):
        raise ParameterError("hold interval must be non-negative")
    A, B = system_matrices(gains)
    s = -0.5 * gains.kd
    d = s * s - gains.kp
    M = A - s * np.eye(2)
    if d > 0:
        r = math.sqrt(d)
        C_m1 = 2.0 * np.sinh(0.5 * r * dts) ** 2
        S = np.sinh(r * dts) / r
    elif d < 0:
        r = math.sqrt(-d)
        C_m1 = -2.0 * np.sin(0.5 * r * dts) ** 2
        S = np.sin(r * dts) / r
    else:
        C_m1 = np.zeros_like(dts)
        S = dts.copy()
    e = np.exp(s * dts)
    # exp(s t) C - 1: the expm1 split avoids cancellation for short holds only
    short = (np.abs(s * dts) < 0.5) & (np.abs(C_m1) < 0.5)
    diag = np.where(short, np.expm1(s * dts) * (1.0 + C_m1) + C_m1, e * (1.0 + C_m1) - 1.0)
    E_m1 = diag[..., None, None] * np.eye(2) + (e * S)[..., None, None] * M
    A_inv = np.array([[-gains.kd, -1.0], [gains.kp, 0.0]]) / gains.kp
    E = np.eye(2) + E_m1
    GB = A_inv @ E_m1 @ B
    return E, GB


def hold_propagator(gains: ProtocolGains, lam: float, dt: float) -> np.ndarray:
    """Exact transition matrix of ``y' = A y + lam B y(t_k)`` over a hold of length ``dt``.

    ``y(t_k + dt) = Phi @ y(t_k)`` with
    ``Phi = exp(A dt) + A^-1 (exp(A dt) - I) lam B``.
    """
    E, GB = _flow_terms(gains, np.asarray(float(dt)))
    return E + lam * GB


def generate_schedule(tau_bar, min_gap=DEFAULT_MIN_GAP, horizon=10.0, seed=0) -> SamplingSchedule:
    """Random aperiodic schedule with gaps drawn uniformly from ``[min_gap, tau_bar]``.

    Instants are appended until the last one reaches ``horizon``.
    """
    if not (0 < min_gap < tau_bar):
        raise ParameterError(f"need 0 < min_gap < tau_bar, got min_gap={min_gap}, tau_bar={tau_bar}")
    if not horizon > 0:
        raise ParameterError(f"horizon must be positive, got {horizon}")
    rng = np.random.default_rng(seed)
    chunk = int(math.ceil(2.0 * horizon / (min_gap + tau_bar))) + 16
    gaps = []
    total = 0.0
    while total < horizon:
        g = rng.uniform(min_gap, tau_bar, size=chunk)
        gaps.append(g)
        total += g.sum()
    gaps = np.concatenate(gaps)
    t = np.concatenate(([0.0], np.cumsum(gaps)))
    last = int(np.searchsorted(t, horizon, side="left"))
    return SamplingSchedule(t[: last + 1], tau_bar)


def periodic_schedule(gap, horizon) -> SamplingSchedule:
    """Equally spaced instants ``k * gap`` covering ``[0, horizon]``."""
    if not (gap > 0 and horizon > 0):
        raise ParameterError("gap and horizon must be positive")
    count = int(math.ceil(horizon / gap - 1e-9))
    return SamplingSchedule(gap * np.arange(count + 1, dtype=float), gap)


def _output_grid(schedule, output_step, horizon):
    if not output_step > 0:
        raise ParameterError(f"output_step must be positive, got {output_step}")
    if horizon is None:
        horizon = schedule.horizon
    if horizon > schedule.horizon * (1 + 1e-12):
        raise ParameterError(f"horizon {horizon} extends past the last sampling instant {schedule.horizon}")
    count = int(math.floor(horizon / output_step * (1 + 1e-12)))
    return output_step * np.arange(count + 1, dtype=float)


def modal_states_at_instants(lams, gains, schedule, Y0):
    """Advance every mode exactly from one sampling instant to the next.

    Parameters
    ----------
    lams : numpy.ndarray, shape (n,)
    Y0 : numpy.ndarray, shape (n, 2)
        Initial mode states ``(z_i, z_i')``.

    Returns
    -------
    numpy.ndarray, shape (len(schedule), n, 2)
    """
    lams = np.asarray(lams, dtype=float)
    E, GB = _flow_terms(gains, schedule.gaps)
    Y = np.empty((len(schedule),) + np.shape(Y0))
    Y[0] = Y0
    for k in range(len(schedule) - 1):
        y = Y[k]
        Y[k + 1] = y @ E[k].T + lams[:, None] * (y @ GB[k].T)
    return Y


def _modal_outputs(lams, gains, schedule, Y0, times):
    held = modal_states_at_instants(lams, gains, schedule, Y0)
    idx = np.searchsorted(schedule.instants, times, side="right") - 1
    E, GB = _flow_terms(gains, times - schedule.instants[idx])
    Yk = held[idx]
    # Y(t) = Phi(t - t_k) Y(t_k), per mode
    return np.einsum("mij,mnj->mni", E, Yk) + lams[None, :, None] * np.einsum("mij,mnj->mni", GB, Yk)


def simulate_modal(basis: ModalBasis, gains: ProtocolGains, schedule: SamplingSchedule,
                   initial: NetworkState, output_step: float, horizon=None) -> Trajectory:
    """Exact simulation in modal coordinates, mapped back to agent states.

    Output times form the uniform grid ``0, output_step, ...`` up to
    ``horizon`` (default: last sampling instant).  Each output is propagated
    from the most recent sampling instant, so no value is ever interpolated
    across an instant.  The state at ``t = 0`` is the initial state verbatim.
    """
    if initial.n != basis.n:
        raise DimensionError(f"initial state has {initial.n} agents, basis has {basis.n}")
    times = _output_grid(schedule, output_step, horizon)
    Y0 = np.column_stack((basis.T_inv @ initial.x, basis.T_inv @ initial.v))
    Y = _modal_outputs(basis.spectrum, gains, schedule, Y0, times)
    x = Y[:, :, 0] @ basis.T.T
    v = Y[:, :, 1] @ basis.T.T
    x[0], v[0] = initial.x, initial.v
    meta = {"method": "modal", "kp": gains.kp, "kd": gains.kd, "tau_bar": schedule.tau_bar}
    return Trajectory(times, x, v, meta)


def sampled_states(basis: ModalBasis, gains: ProtocolGains, schedule: SamplingSchedule,
                   initial: NetworkState) -> Trajectory:
    """Agent states at the sampling instants, i.e. the values transmitted to neighbours."""
    if initial.n != basis.n:
        raise DimensionError(f"initial state has {initial.n} agents, basis has {basis.n}")
    Y0 = np.column_stack((basis.T_inv @ initial.x, basis.T_inv @ initial.v))
    Y = modal_states_at_instants(basis.spectrum, gains, schedule, Y0)
    x = Y[:, :, 0] @ basis.T.T
    v = Y[:, :, 1] @ basis.T.T
    x[0], v[0] = initial.x, initial.v
    return Trajectory(schedule.instants.copy(), x, v, {"method": "sampled"})


def simulate_mode(gains: ProtocolGains, lam: float, schedule: SamplingSchedule, y0,
                  output_step: float, horizon=None) -> Trajectory:
    """Exact trajectory of one mode ``y' = A y + lam B y(t_k)`` (stored with ``n = 1``)."""
    times = _output_grid(schedule, output_step, horizon)
    Y0 = np.asarray(y0, dtype=float).reshape(1, 2)
    Y = _modal_outputs(np.array([lam]), gains, schedule, Y0, times)
    return Trajectory(times, Y[:, :, 0].copy(), Y[:, :, 1].copy(), {"method": "mode", "lambda": lam})


def rk4_step(f, y, h):
    """One classical fourth-order Runge-Kutta step of ``y' = f(y)``."""
    k1 = f(y)
    k2 = f(y + 0.5 * h * k1)
    k3 = f(y + 0.5 * h * k2)
    k4 = f(y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def simulate_rk4(g: Graph, gains: ProtocolGains, schedule: SamplingSchedule, initial: NetworkState,
                 dt: float, output_step=None, horizon=None) -> Trajectory:
    """Fixed-step RK4 integration of the coupled network with held neighbour terms.

    The integrated state is ``[x, v, W x(t_k), W v(t_k)]``; the last two blocks
    have zero derivative and are refreshed at every sampling instant.  Because
    the right-hand side is linear, one RK4 step is the same linear map for every
    state, so the step is applied to the identity once per distinct step size
    and then reused.  Steps are clipped at sampling instants and output times.
    """
    if initial.n != g.n:
        raise DimensionError(f"initial state has {initial.n} agents, graph has {g.n}")
    if not dt > 0:
        raise ParameterError("dt must be positive")
    n = g.n
    W = weighted_adjacency(g)
    kp, kd = gains.kp, gains.kd
    L = np.zeros((4 * n, 4 * n))
    I = np.eye(n)
    L[:n, n:2 * n] = I
    L[n:2 * n, :n] = -kp * I
    L[n:2 * n, n:2 * n] = -kd * I
    L[n:2 * n, 2 * n:3 * n] = kp * I
    L[n:2 * n, 3 * n:] = kd * I

    def f(Y):
        return L @ Y

    cache = {}

    def step_map(h):
        if h not in cache:
            cache[h] = rk4_step(f, np.eye(4 * n), h)
        return cache[h]

    if output_step is None:
        output_step = dt
    times = _output_grid(schedule, output_step, horizon)
    t_end = times[-1]
    inst = schedule.instants[schedule.instants < t_end]
    breaks = np.union1d(inst, times)

    s = np.concatenate((initial.x, initial.v, np.zeros(2 * n)))
    xs = np.empty((times.size, n))
    vs = np.empty((times.size, n))
    xs[0], vs[0] = initial.x, initial.v
    out = 1
    inst_set = set(inst.tolist())
    full = step_map(dt)
    for a, b in zip(breaks[:-1], breaks[1:]):
        if a in inst_set:
            s[2 * n:3 * n] = W @ s[:n]
            s[3 * n:] = W @ s[n:2 * n]
        span = b - a
        m = int(math.floor(span / dt))
        rem = span - m * dt
        if rem <= 1e-9 * dt:
            rem = 0.0
        for _ in range(m):
            s = full @ s
        if rem > 0.0:
            s = step_map(rem) @ s
        if out < times.size and b == times[out]:
            xs[out], vs[out] = s[:n], s[n:2 * n]
            out += 1
    meta = {"method": "rk4", "dt": dt, "kp": kp, "kd": kd, "tau_bar": schedule.tau_bar}
    return Trajectory(times, xs, vs, meta)


@dataclass(frozen=True)
class ConsensusMetrics:
    """Per-output-time disagreement series.

    ``position_spread`` and ``velocity_spread`` are the largest pairwise
    differences ``max|x_i - x_j|`` and ``max|v_i - v_j|``; ``max_speed`` is
    ``max|v_i|``; ``gamma_hat`` is the mean position at the last sample.
    """

    times: np.ndarray
    position_spread: np.ndarray
    velocity_spread: np.ndarray
    max_speed: np.ndarray
    gamma_hat: float


def consensus_metrics(traj: Trajectory) -> ConsensusMetrics:
    if len(traj) == 0:
        raise ParameterError("empty trajectory")
    x, v = traj.positions, traj.velocities
    if traj.n < 2:
        zeros = np.zeros(len(traj))
        spread_x, spread_v = zeros, zeros.copy()
    else:
        spread_x = x.max(axis=1) - x.min(axis=1)
        spread_v = v.max(axis=1) - v.min(axis=1)
    return ConsensusMetrics(
        times=traj.times.copy(),
        position_spread=spread_x,
        velocity_spread=spread_v,
        max_speed=np.abs(v).max(axis=1),
        gamma_hat=float(x[-1].mean()),
    )


@dataclass(frozen=True)
class UEMLimit:
    gamma: float
    residual: float
    samples: int


def uem_fixed_point(gains: ProtocolGains, schedule: SamplingSchedule, y0, tol=1e-9) -> UEMLimit:
    """Propagate the unitary eigenvalue mode over the schedule and read off its limit.

    Raises
    ------
    ConvergenceError
        When ``|z(t_K) - z(t_{K-1})|`` at the final instant exceeds ``tol``.
    """
    Y = modal_states_at_instants(np.array([1.0]), gains, schedule, np.asarray(y0, dtype=float).reshape(1, 2))
    z = Y[:, 0, 0]
    residual = float(abs(z[-1] - z[-2])) if z.size > 1 else 0.0
    if not residual <= tol:
        raise ConvergenceError(
            f"UEM not settled by t={schedule.horizon}: residual {residual:.3e} > {tol:.1e}",
            residual=residual, horizon=schedule.horizon,
        )
    return UEMLimit(gamma=float(z[-1]), residual=residual, samples=z.size)


def uem_limit(basis: ModalBasis, gains: ProtocolGains, schedule: SamplingSchedule,
              initial: NetworkState, tol=1e-9) -> UEMLimit:
    """Consensus value predicted by the unitary eigenvalue mode alone."""
    if initial.n != basis.n:
        raise DimensionError(f"initial state has {initial.n} agents, basis has {basis.n}")
    y0 = (basis.T_inv[0] @ initial.x, basis.T_inv[0] @ initial.v)
    return uem_fixed_point(gains, schedule, y0, tol)
