"""test proximal operators and projections."""

import numpy as np
import pytest

from noncoherent.doa.errors import ArgumentError
from noncoherent.doa.prox import (
    group_shrink,
    project_diag_ones,
    project_psd,
    prox_group_l12,
    prox_nuclear,
    soft_threshold,
)

from .conftest import hermitian_psd


def _complex(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def test_prox_group_l12_rows(rng):
    """test row-wise threshold at beta / 2."""
    Z = np.array([[3.0, 4.0], [0.3, 0.4], [0.0, 0.0]], dtype=complex)
    out = prox_group_l12(Z, 2.0)
    # row norm 5 shrinks by 1
    np.testing.assert_allclose(out[0], Z[0] * 0.8)
    # row norm 0.5 <= beta / 2
    np.testing.assert_array_equal(out[1:], 0)

    np.testing.assert_allclose(prox_group_l12(Z, 0.0), Z)

    with pytest.raises(ArgumentError):
        prox_group_l12(Z, -1.0)


def test_prox_group_l12_optimality(rng):
    """test the prox minimizes beta ||G||_{1,2} + ||G - Z||^2."""

    def objective(G, Z, beta):
        return beta * np.sum(np.linalg.norm(G, axis=1)) + np.linalg.norm(G - Z) ** 2

    for _ in range(200):
        Z = _complex(rng, 5, 3)
        beta = rng.uniform(0, 6)
        G = prox_group_l12(Z, beta)
        best = objective(G, Z, beta)
        for _ in range(5):
            candidate = G + 1e-3 * _complex(rng, 5, 3)
            assert objective(candidate, Z, beta) >= best - 1e-12


def test_prox_group_l12_properties(rng):
    """test non-expansiveness and the shrink identity."""
    for _ in range(200):
        A, B = _complex(rng, 6, 2), _complex(rng, 6, 2)
        beta = rng.uniform(0, 4)
        PA, PB = prox_group_l12(A, beta), prox_group_l12(B, beta)
        assert np.linalg.norm(PA - PB) <= np.linalg.norm(A - B) + 1e-12
        np.testing.assert_allclose(PA, group_shrink(A, beta / 2))


def test_soft_threshold():
    """test complex soft threshold."""
    z = np.array([3 + 4j, 0.1j, -2.0])
    np.testing.assert_allclose(soft_threshold(z, 1.0), [2.4 + 3.2j, 0, -1.0])


def test_prox_nuclear_oracle(rng):
    """test singular value shrinkage against a full SVD."""
    for shape in [(16, 2), (16, 4), (3, 7), (5, 5)]:
        for _ in range(100):
            G = _complex(rng, *shape)
            mu = rng.uniform(0, 4)
            U, s, Vh = np.linalg.svd(G, full_matrices=False)
            expected = (U * np.maximum(s - mu / 2, 0)) @ Vh
            np.testing.assert_allclose(prox_nuclear(G, mu), expected, atol=1e-9)


def test_prox_nuclear_properties(rng):
    """test rank reduction and non-expansiveness."""
    G = _complex(rng, 16, 4)
    s = np.linalg.svd(G, compute_uv=False)

    # threshold between the 2nd and 3rd singular values
    mu = s[1] + s[2]
    assert np.linalg.matrix_rank(prox_nuclear(G, mu), tol=1e-8) == 2

    np.testing.assert_array_equal(prox_nuclear(G, 2 * s[0] + 1), 0)
    np.testing.assert_allclose(prox_nuclear(G, 0.0), G)

    for _ in range(200):
        A, B = _complex(rng, 8, 3), _complex(rng, 8, 3)
        mu = rng.uniform(0, 4)
        moved = np.linalg.norm(prox_nuclear(A, mu) - prox_nuclear(B, mu))
        assert moved <= np.linalg.norm(A - B) + 1e-9


def test_project_diag_ones(rng):
    """test diagonal projection."""
    V = _complex(rng, 4, 4)
    P = project_diag_ones(V)
    np.testing.assert_array_equal(np.diag(P), 1)
    off = ~np.eye(4, dtype=bool)
    np.testing.assert_array_equal(P[off], V[off])
    # idempotent, input untouched
    np.testing.assert_array_equal(project_diag_ones(P), P)
    assert not np.allclose(np.diag(V), 1)

    with pytest.raises(ArgumentError):
        project_diag_ones(np.ones((2, 3)))


def test_project_psd(rng):
    """test PSD projection against the eigendecomposition."""
    for _ in range(200):
        V = _complex(rng, 5, 5)
        P = project_psd(V)
        np.testing.assert_allclose(P, P.conj().T, atol=1e-12)
        assert np.linalg.eigvalsh(P).min() >= -1e-10
        # idempotent
        np.testing.assert_allclose(project_psd(P), P, atol=1e-10)

        H = (V + V.conj().T) / 2
        w, U = np.linalg.eigh(H)
        np.testing.assert_allclose(P, (U * np.maximum(w, 0)) @ U.conj().T, atol=1e-10)

    psd = hermitian_psd(rng, 4, rank=2)
    np.testing.assert_allclose(project_psd(psd), psd, atol=1e-9)

    with pytest.raises(ArgumentError):
        project_psd(np.ones((3, 2)))
