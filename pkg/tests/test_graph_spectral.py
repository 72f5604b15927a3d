import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from consensus_lab.exceptions import DegenerateGraphError, NumericalError, PreconditionError
from consensus_lab.graph_spectral import (Graph, demo_graph, is_connected, jacobi_eigh, modal_decomposition,
                                          random_connected_graph, weighted_adjacency)

PATH2 = Graph([[0, 1], [1, 0]])
K3 = Graph(np.ones((3, 3)) - np.eye(3))
TWO_EDGES = Graph([[0, 1, 0, 0], [1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]])

# second eigenvalue of the demo network, from numpy.linalg.eigvals on W
DEMO_LAMBDA2 = 0.8309082954215707


def test_graph_validation():
    with pytest.raises(PreconditionError):
        Graph([[0, 1], [0, 0]])
    with pytest.raises(PreconditionError):
        Graph([[1, 0], [0, 0]])
    with pytest.raises(PreconditionError):
        Graph([[0, 2], [2, 0]])


def test_weighted_adjacency_path_and_triangle():
    np.testing.assert_array_equal(weighted_adjacency(PATH2), [[0, 1], [1, 0]])
    W = weighted_adjacency(K3)
    assert all(sorted(row) == [0, 0.5, 0.5] for row in W.tolist())


def test_weighted_adjacency_demo_row4():
    W = weighted_adjacency(demo_graph())
    assert np.count_nonzero(W[3]) == 5
    np.testing.assert_array_equal(np.flatnonzero(W[3]), [0, 1, 2, 4, 7])
    assert np.all(W[3, [0, 1, 2, 4, 7]] == 1 / 5)


def test_weighted_adjacency_isolated_node():
    g = Graph([[0, 1, 0], [1, 0, 0], [0, 0, 0]])
    with pytest.raises(DegenerateGraphError):
        weighted_adjacency(g)


def test_row_stochastic():
    for seed in range(20):
        W = weighted_adjacency(random_connected_graph(9, 0.3, seed))
        assert np.abs(W.sum(axis=1) - 1).max() <= 1e-14


def test_is_connected():
    assert is_connected(PATH2)
    assert not is_connected(TWO_EDGES)
    assert is_connected(demo_graph())


@pytest.mark.parametrize("g, expected", [(PATH2, [1, -1]), (K3, [1, -0.5, -0.5])])
def test_small_spectra(g, expected):
    np.testing.assert_allclose(modal_decomposition(g).spectrum, expected, atol=1e-12)


def test_demo_spectrum_against_dense_solver():
    basis = modal_decomposition(demo_graph())
    oracle = np.sort(np.linalg.eigvals(weighted_adjacency(demo_graph())).real)[::-1]
    np.testing.assert_allclose(basis.spectrum, oracle, atol=1e-12)
    assert basis.spectrum[0] == pytest.approx(1.0, abs=1e-10)
    assert basis.spectrum[1] == pytest.approx(DEMO_LAMBDA2, abs=1e-12)
    assert basis.spectrum[1] < 1


def test_disconnected_rejected():
    with pytest.raises(PreconditionError):
        modal_decomposition(TWO_EDGES)


def _check_basis(g):
    basis = modal_decomposition(g)
    W = weighted_adjacency(g)
    lam = basis.spectrum
    D = basis.T_inv @ W @ basis.T
    assert np.abs(D - np.diag(lam)).max() <= 1e-10 * max(1.0, np.abs(lam).max())
    assert np.abs(basis.T_inv @ basis.T - np.eye(g.n)).max() <= 1e-10
    assert np.all(basis.T[:, 0] == 1.0)
    assert np.all(np.diff(lam) <= 0)
    assert abs(lam[0] - 1) <= 1e-10
    assert lam.min() >= -1 - 1e-10 and lam.max() <= 1 + 1e-10
    return basis


def test_basis_invariants_demo():
    _check_basis(demo_graph())


@settings(max_examples=60, deadline=None)
@given(n=st.integers(2, 12), p=st.floats(0.05, 1.0), seed=st.integers(0, 2**31))
def test_lemma1_property(n, p, seed):
    basis = _check_basis(random_connected_graph(n, p, seed))
    lam = basis.spectrum
    assert lam.min() >= -1 - 1e-9
    assert lam[0] - lam[1] > 1e-9


def test_repeated_eigenvalues_supported():
    # K5 has -1/4 with multiplicity four
    g = Graph(np.ones((5, 5)) - np.eye(5))
    basis = _check_basis(g)
    np.testing.assert_allclose(basis.spectrum[1:], -0.25, atol=1e-12)


def test_decomposition_deterministic():
    g = random_connected_graph(10, 0.4, 3)
    a, b = modal_decomposition(g), modal_decomposition(g)
    assert np.array_equal(a.T, b.T) and np.array_equal(a.spectrum, b.spectrum)


def test_sign_convention():
    g = random_connected_graph(7, 0.5, 11)
    basis = modal_decomposition(g)
    # columns of U = D^1/2 T (up to the rescaled first column) start positive
    U = np.sqrt(g.degrees)[:, None] * basis.T
    for k in range(1, g.n):
        col = U[:, k]
        first = col[np.flatnonzero(np.abs(col) > 1e-12 * np.abs(col).max())[0]]
        assert first > 0


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 9), seed=st.integers(0, 10_000))
def test_jacobi_matches_numpy(n, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, n))
    S = X + X.T
    w, V = jacobi_eigh(S)
    np.testing.assert_allclose(np.sort(w), np.linalg.eigvalsh(S), atol=1e-12 * max(1, np.abs(S).max()))
    np.testing.assert_allclose(V.T @ V, np.eye(n), atol=1e-12)
    np.testing.assert_allclose(S @ V, V * w, atol=1e-11 * max(1, np.abs(S).max()))


def test_jacobi_reports_nonconvergence():
    S = np.array([[1.0, 2.0, 3.0], [2.0, 0.0, 1.0], [3.0, 1.0, 5.0]])
    with pytest.raises(NumericalError) as info:
        jacobi_eigh(S, max_sweeps=1)
    assert info.value.diagnostics["sweeps"] == 1


def test_random_graph_two_nodes():
    for seed in range(5):
        for p in (0.01, 0.5, 1.0):
            np.testing.assert_array_equal(random_connected_graph(2, p, seed).adjacency, [[0, 1], [1, 0]])


def test_random_graph_connected_and_deterministic():
    g1 = random_connected_graph(8, 0.3, 7)
    g2 = random_connected_graph(8, 0.3, 7)
    assert is_connected(g1)
    assert g1 == g2


def test_random_graph_bad_args():
    with pytest.raises(PreconditionError):
        random_connected_graph(1, 0.5, 0)
    with pytest.raises(PreconditionError):
        random_connected_graph(4, 0.0, 0)
