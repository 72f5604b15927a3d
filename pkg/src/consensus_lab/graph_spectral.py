"""Communication topology, weighted adjacency and modal decomposition.

The weighted adjacency ``W = D^-1 A`` of an undirected graph is not symmetric,
but it is similar to the symmetric matrix ``S = D^-1/2 A D^-1/2``.  The
eigenvectors are therefore computed on ``S`` with a cyclic Jacobi sweep and
mapped back, which keeps the modal transform well conditioned.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateGraphError, NumericalError, PreconditionError

# structural checks (diagonalisation residual, T_inv @ T)
STRUCTURAL_TOL = 1e-10
# spectral checks (eigenvalue range, spectral gap)
SPECTRAL_TOL = 1e-9
# Jacobi stops once the off-diagonal Frobenius norm falls below this times ||S||_F
JACOBI_TOL = 1e-15
JACOBI_MAX_SWEEPS = 100


def _frozen(a):
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph on ``n`` nodes.

    Parameters
    ----------
    adjacency : array_like
        Symmetric 0/1 matrix with zero diagonal.
    """

    adjacency: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.adjacency, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise PreconditionError(f"adjacency must be a square matrix, got shape {a.shape}")
        if not np.all((a == 0) | (a == 1)):
            raise PreconditionError("adjacency entries must be 0 or 1")
        if not np.array_equal(a, a.T):
            raise PreconditionError("adjacency must be symmetric")
        if np.any(np.diag(a) != 0):
            raise PreconditionError("self loops are not allowed")
        object.__setattr__(self, "adjacency", _frozen(a))

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)

    def __eq__(self, other):
        return isinstance(other, Graph) and np.array_equal(self.adjacency, other.adjacency)

    def __hash__(self):
        return hash(self.adjacency.tobytes())


@dataclass(frozen=True)
class ModalBasis:
    """Eigen-decomposition ``T_inv @ W @ T = diag(spectrum)``.

    ``spectrum`` is sorted non-increasing and ``T[:, 0]`` is the all-ones
    vector, so the first modal coordinate is the unitary eigenvalue mode.
    """

    spectrum: np.ndarray
    T: np.ndarray
    T_inv: np.ndarray

    def __post_init__(self):
        for name in ("spectrum", "T", "T_inv"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    @property
    def n(self) -> int:
        return self.spectrum.shape[0]

    @property
    def second_eigenvalue(self) -> float:
        """Connectivity of the graph, i.e. the largest non-unitary eigenvalue."""
        return float(self.spectrum[1]) if self.n > 1 else -1.0


def weighted_adjacency(g: Graph) -> np.ndarray:
    """Row-normalised adjacency ``W[i, j] = A[i, j] / deg(i)``."""
    deg = g.degrees
    if np.any(deg == 0):
        isolated = np.flatnonzero(deg == 0).tolist()
        raise DegenerateGraphError(f"isolated node(s) {isolated}: weighted adjacency undefined")
    return g.adjacency / deg[:, None]


def is_connected(g: Graph) -> bool:
    """Breadth-first search from node 0."""
    seen = np.zeros(g.n, dtype=bool)
    seen[0] = True
    queue = deque([0])
    while queue:
        i = queue.popleft()
        for j in np.flatnonzero(g.adjacency[i]):
            if not seen[j]:
                seen[j] = True
                queue.append(j)
    return bool(seen.all())


def _components(adj: np.ndarray) -> list[list[int]]:
    n = adj.shape[0]
    label = -np.ones(n, dtype=int)
    comps = []
    for start in range(n):
        if label[start] >= 0:
            continue
        label[start] = len(comps)
        members, queue = [start], deque([start])
        while queue:
            i = queue.popleft()
            for j in np.flatnonzero(adj[i]):
                if label[j] < 0:
                    label[j] = len(comps)
                    members.append(int(j))
                    queue.append(j)
        comps.append(sorted(members))
    return comps


def jacobi_eigh(S, tol=JACOBI_TOL, max_sweeps=JACOBI_MAX_SWEEPS):
    """Cyclic Jacobi eigensolver for a real symmetric matrix.

    Returns
    -------
    w : numpy.ndarray
        Eigenvalues in no particular order.
    V : numpy.ndarray
        Orthogonal matrix whose columns are the matching eigenvectors.

    Raises
    ------
    NumericalError
        If the off-diagonal mass is still above ``tol * ||S||_F`` after
        ``max_sweeps`` sweeps.
    """
    a = np.array(S, dtype=float, copy=True)
    n = a.shape[0]
    v = np.eye(n)
    scale = np.linalg.norm(a)
    if n == 1 or scale == 0.0:
        return np.diag(a).copy(), v
    off = 0.0
    for sweep in range(max_sweeps):
        off = np.sqrt(np.sum(np.tril(a, -1) ** 2))
        if off <= tol * scale:
            return np.diag(a).copy(), v
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.copysign(1.0, theta) / (abs(theta) + np.hypot(1.0, theta))
                c = 1.0 / np.hypot(1.0, t)
                s = t * c
                # A <- J^T A J with J the (p, q) rotation
                ap, aq = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap, aq = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                a[p, q] = a[q, p] = 0.0
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    raise NumericalError(
        "Jacobi eigensolver did not converge",
        sweeps=max_sweeps,
        off_diagonal_norm=float(off),
        matrix_norm=float(scale),
    )


def _fix_signs(U):
    U = U.copy()
    for k in range(U.shape[1]):
        col = U[:, k]
        nz = np.flatnonzero(np.abs(col) > 1e-12 * np.abs(col).max())
        if nz.size and col[nz[0]] < 0:
            U[:, k] = -col
    return U


def modal_decomposition(g: Graph) -> ModalBasis:
    """Diagonalise the weighted adjacency of a connected graph.

    Eigenvalues are sorted non-increasing (stable on ties); each eigenvector of
    the symmetric similar matrix has its first nonzero entry positive.  The
    first column of ``T`` is exactly the all-ones vector and the first row of
    ``T_inv`` is the degree vector divided by its sum.
    """
    if not is_connected(g):
        raise PreconditionError("modal decomposition requires a connected graph")
    deg = g.degrees
    if g.n == 1:
        raise DegenerateGraphError("a single node has no neighbours")
    d_isqrt = 1.0 / np.sqrt(deg)
    S = d_isqrt[:, None] * g.adjacency * d_isqrt[None, :]
    w, U = jacobi_eigh(S)
    order = np.argsort(-w, kind="stable")
    w, U = w[order], _fix_signs(U[:, order])

    T = d_isqrt[:, None] * U
    T_inv = U.T * np.sqrt(deg)[None, :]
    T[:, 0] = 1.0
    T_inv[0, :] = deg / deg.sum()
    return ModalBasis(spectrum=w, T=T, T_inv=T_inv)


def random_connected_graph(n: int, edge_prob: float, seed: int) -> Graph:
    """Erdős–Rényi sample made connected by joining components.

    Each upper-triangular pair is an edge with probability ``edge_prob``.  While
    the graph is disconnected, a uniformly random node of the first component is
    linked to a uniformly random node outside it.
    """
    if n < 2:
        raise PreconditionError("need at least two nodes")
    if not 0.0 < edge_prob <= 1.0:
        raise PreconditionError(f"edge_prob must lie in (0, 1], got {edge_prob}")
    rng = np.random.default_rng(seed)
    upper = np.triu(rng.random((n, n)) < edge_prob, k=1)
    adj = (upper | upper.T).astype(float)
    comps = _components(adj)
    while len(comps) > 1:
        inside = comps[0]
        outside = [i for c in comps[1:] for i in c]
        u = inside[rng.integers(len(inside))]
        v = outside[rng.integers(len(outside))]
        adj[u, v] = adj[v, u] = 1.0
        comps = _components(adj)
    return Graph(adj)


# Adjacency of the 8-agent network used in the demo scenario.
DEMO_ADJACENCY = np.array(
    [
        [0, 0, 0, 1, 0, 0, 0, 1],
        [0, 0, 1, 1, 0, 0, 0, 0],
        [0, 1, 0, 1, 0, 0, 0, 0],
        [1, 1, 1, 0, 1, 0, 0, 1],
        [0, 0, 0, 1, 0, 1, 1, 0],
        [0, 0, 0, 0, 1, 0, 1, 0],
        [0, 0, 0, 0, 1, 1, 0, 0],
        [1, 0, 0, 1, 0, 0, 0, 0],
    ],
    dtype=float,
)


def demo_graph() -> Graph:
    return Graph(DEMO_ADJACENCY)
