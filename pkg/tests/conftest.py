"""noncoherent.doa tests configuration."""

import numpy as np
import pytest

from noncoherent.doa.array import ArrayGeometry, DoaGrid, build_dictionary
from noncoherent.doa.sim import Scenario, simulate


def pytest_addoption(parser):
    """Add --runslow."""
    parser.addoption(
        "--runslow", action="store_true", default=False, help="run slow tests"
    )


def pytest_collection_modifyitems(config, items):
    """Skip slow tests unless --runslow is given."""
    if config.getoption("--runslow"):
        return

    skip_slow = pytest.mark.skip(reason="need --runslow option to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    """Seeded generator."""
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_geometry():
    """8-element half-wavelength ULA split in two halves."""
    return ArrayGeometry.ula(8, 0.5, partition=[4, 4])


@pytest.fixture
def tiny_grid():
    """16-point grid, 5 degree step."""
    return DoaGrid(-30, 45, 5)


@pytest.fixture
def tiny_dictionary(tiny_geometry, tiny_grid):
    """Dictionary of the tiny array."""
    return build_dictionary(tiny_geometry, tiny_grid)


@pytest.fixture
def tiny_scenario(tiny_geometry, tiny_grid):
    """Two on-grid sources, one snapshot."""
    return Scenario(
        geometry=tiny_geometry,
        grid=tiny_grid,
        doas=[-15.0, 20.0],
        n_snapshots=1,
        snr_db=20.0,
        perturbation=0.0,
    )


@pytest.fixture
def tiny_snapshots(tiny_scenario):
    """One realization of the tiny scenario."""
    snapshots, _ = simulate(tiny_scenario, np.random.default_rng(7))
    return snapshots


@pytest.fixture
def medium_scenario():
    """16 elements in two 8-element sub-arrays, 1 degree grid."""
    geometry = ArrayGeometry.ula(16, 0.5, partition=[8, 8])
    return Scenario(
        geometry=geometry,
        grid=DoaGrid(-45, 45, 1),
        doas=[-20.0, 20.0],
        n_snapshots=1,
        snr_db=30.0,
        perturbation=0.0,
    )


def hermitian_psd(rng, n, rank=None):
    """Random Hermitian PSD matrix."""
    rank = rank or n
    B = rng.standard_normal((n, rank)) + 1j * rng.standard_normal((n, rank))
    return B @ B.conj().T


def three_operator_oracle(snapshots, dictionary, beta, mu, lam, n_iter):
    """Minimize the penalized lifted objective by three-operator splitting.

    f = lam * data misfit (smooth), g = beta * ||.||_{1,2},
    h = mu * sum of per-snapshot nuclear norms. Proximal maps use the
    1/2 ||.||^2 convention and are written out here independently of the
    package.
    """
    L = snapshots.n_subarrays
    N = snapshots.n_snapshots
    matrices = dictionary.matrices
    n_grid = matrices[0].shape[1]
    X = [snapshots.subarray(index) for index in range(L)]

    def grad(G):
        # real gradient, packed as a complex matrix
        cube = G.reshape(n_grid, N, L)
        out = np.empty_like(cube)
        for index, A in enumerate(matrices):
            out[:, :, index] = 2 * lam * A.conj().T @ (A @ cube[:, :, index] - X[index])
        return out.reshape(G.shape)

    def prox_rows(V, tau):
        norms = np.linalg.norm(V, axis=1, keepdims=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            scale = np.where(norms > tau, 1 - tau / norms, 0.0)
        return V * scale

    def prox_blocks(V, tau):
        out = np.empty_like(V)
        for start in range(0, V.shape[1], L):
            U, s, Vh = np.linalg.svd(V[:, start : start + L], full_matrices=False)
            out[:, start : start + L] = (U * np.maximum(s - tau, 0)) @ Vh
        return out

    lipschitz = 2 * lam * max(
        np.linalg.eigvalsh(A @ A.conj().T).max() for A in matrices
    )
    step = 1.0 / lipschitz
    z = np.zeros((n_grid, N * L), dtype=complex)
    x_g = z
    for _ in range(n_iter):
        x_g = prox_rows(z, step * beta)
        x_h = prox_blocks(2 * x_g - z - step * grad(x_g), step * mu)
        z = z + x_h - x_g

    return x_g


def penalized_value(Z, snapshots, dictionary, beta, mu, lam):
    """Objective value computed from scratch."""
    L = snapshots.n_subarrays
    rows = np.sum(np.linalg.norm(Z, axis=1))
    nuclear = sum(
        np.sum(np.linalg.svd(Z[:, s : s + L], compute_uv=False))
        for s in range(0, Z.shape[1], L)
    )
    misfit = 0.0
    for index, A in enumerate(dictionary.matrices):
        columns = Z[:, index::L]
        misfit += np.linalg.norm(snapshots.subarray(index) - A @ columns) ** 2
    return beta * rows + mu * nuclear + lam * misfit
