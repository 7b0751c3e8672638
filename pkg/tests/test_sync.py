"""test SDP phase synchronization."""

import attr
import numpy as np
import pytest

from noncoherent.doa.array import array_manifold, build_dictionary
from noncoherent.doa.enums import ExitReason
from noncoherent.doa.errors import ArgumentError
from noncoherent.doa.estimators import coherent_spectrum
from noncoherent.doa.sim import simulate
from noncoherent.doa.solver import solve_lifted
from noncoherent.doa.sync import (
    SyncResult,
    dominant_pair,
    estimate_phases,
    extract_phases,
    phase_correct,
    sdp_objective,
    solve_phase_sdp,
)
from noncoherent.doa.utils import wrap_phase

from .conftest import hermitian_psd


def _aligned(estimate, truth):
    """Phase error after removing the common offset."""
    diff = np.asarray(estimate) - np.asarray(truth)
    shift = np.angle(np.sum(np.exp(1j * diff)))
    return wrap_phase(diff - shift)


def _bm_oracle(Z, sweeps=5000):
    """Maximize Tr(Z^H Z V) over V = W W^H with unit-norm rows of W (L x L).

    Block coordinate ascent; with full-rank factors its fixed points are
    global maximizers of the unit-diagonal SDP.
    """
    H = Z.conj().T @ Z
    L = H.shape[0]
    gen = np.random.default_rng(99)
    W = gen.standard_normal((L, L)) + 1j * gen.standard_normal((L, L))
    W /= np.linalg.norm(W, axis=1, keepdims=True)
    for _ in range(sweeps):
        for i in range(L):
            c = H[:, i] @ W.conj() - H[i, i] * W[i].conj()
            norm = np.linalg.norm(c)
            if norm > 0:
                W[i] = c.conj() / norm

    return W @ W.conj().T


@pytest.mark.parametrize("L", [2, 3, 4, 6])
def test_rank_one_recovery(rng, L):
    """test exact recovery of phases from a rank-one lifted block."""
    for _ in range(5):
        phases = rng.uniform(0, 2 * np.pi, L)
        u = np.zeros(16, complex)
        u[[3, 9]] = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        Z = np.outer(u, np.exp(-1j * phases))

        result = solve_phase_sdp(Z, rng=rng)
        assert result.tight
        assert result.ratio <= 1e-6
        aligned = _aligned(extract_phases(result), phases)
        np.testing.assert_allclose(aligned, 0, atol=1e-4)


def test_feasibility(rng):
    """test the returned V has a unit diagonal and is PSD."""
    for _ in range(20):
        Z = rng.standard_normal((16, 4)) + 1j * rng.standard_normal((16, 4))
        result = solve_phase_sdp(Z, rng=rng)
        np.testing.assert_allclose(np.diag(result.V).real, 1.0, atol=1e-6)
        np.testing.assert_allclose(result.V, result.V.conj().T, atol=1e-10)
        assert np.linalg.eigvalsh(result.V).min() >= -1e-6
        assert 0.0 <= result.ratio <= 1.0


def test_objective_scale_invariant(rng):
    """test the maximizer does not depend on the scale of Z."""
    Z = rng.standard_normal((16, 3)) + 1j * rng.standard_normal((16, 3))
    a = extract_phases(solve_phase_sdp(Z, rng=np.random.default_rng(0)))
    b = extract_phases(solve_phase_sdp(1e3 * Z, rng=np.random.default_rng(0)))
    np.testing.assert_allclose(_aligned(a, b), 0, atol=1e-5)

    V = np.eye(3)
    assert sdp_objective(Z, V) == pytest.approx(np.linalg.norm(Z) ** 2)


def test_single_subarray():
    """test L = 1 is trivially tight."""
    result = solve_phase_sdp(np.ones((16, 1)))
    assert result.tight
    np.testing.assert_allclose(result.V, [[1.0]])
    np.testing.assert_allclose(extract_phases(result), [0.0])


def test_sdp_errors():
    """test input checks."""
    with pytest.raises(ArgumentError):
        solve_phase_sdp(np.ones(16))

    with pytest.raises(ArgumentError):
        solve_phase_sdp(np.ones((16, 2)), rho=0.0)


def test_dominant_pair(rng):
    """test eigen ratio against eigh."""
    v = np.exp(1j * rng.uniform(0, 2 * np.pi, 4))
    value, vector, ratio = dominant_pair(np.outer(v, v.conj()))
    assert value == pytest.approx(4.0)
    assert ratio <= 1e-10
    assert abs(np.vdot(vector, v)) == pytest.approx(2.0)

    H = hermitian_psd(rng, 5)
    w = np.linalg.eigvalsh(H)
    _, _, ratio = dominant_pair(H)
    assert ratio == pytest.approx(w[-2] / w[-1], rel=1e-4)


def test_non_tight_warning(caplog):
    """test a non-tight relaxation logs a warning."""
    result = SyncResult(
        V=np.eye(2),
        eigenvalue=1.0,
        vector=np.array([1.0, 1.0j]) / np.sqrt(2),
        ratio=1.0,
    )
    assert not result.tight
    with caplog.at_level("WARNING", logger="noncoherent-doa"):
        phases = extract_phases(result)

    assert "not tight" in caplog.text
    np.testing.assert_allclose(phases, [0.0, np.pi / 2])


def test_phase_correct(tiny_scenario, rng):
    """test the correction undoes the sub-array phases."""
    scenario = attr.evolve(tiny_scenario, snr_db=np.inf, n_snapshots=3)
    snapshots, truth = simulate(scenario, rng)
    corrected = phase_correct(snapshots, truth.phases)
    for index, s in enumerate(snapshots.slices):
        A = array_manifold(scenario.geometry, index, truth.doas)
        np.testing.assert_allclose(corrected[s], A @ truth.signals, atol=1e-12)

    with pytest.raises(ArgumentError):
        phase_correct(snapshots, np.zeros((2, 2)))


def test_estimate_phases(medium_scenario):
    """test phases from a solved lifted problem."""
    scenario = attr.evolve(medium_scenario, n_snapshots=2)
    snapshots, truth = simulate(scenario, np.random.default_rng(5))
    dictionary = build_dictionary(scenario.geometry, scenario.grid)
    lifted = solve_lifted(snapshots, dictionary)

    phases, results = estimate_phases(lifted, rng=np.random.default_rng(0))
    assert phases.shape == (2, 2)
    assert len(results) == 2
    for n in range(2):
        assert np.max(np.abs(_aligned(phases[n], truth.phases[n]))) < 0.1


@pytest.mark.parametrize("L", [2, 3])
def test_rank_one_optimal(L):
    """test s p^H blocks give V = p p^H at the optimum for every seed."""
    for seed in range(50):
        gen = np.random.default_rng(seed)
        p = np.exp(1j * gen.uniform(0, 2 * np.pi, L))
        s = np.zeros(16, complex)
        s[gen.choice(16, 2, replace=False)] = gen.standard_normal(2) + 1j
        Z = np.outer(s, p.conj())

        result = solve_phase_sdp(Z, rng=gen)
        optimum = np.linalg.norm(s) ** 2 * L**2
        assert sdp_objective(Z, result.V) >= (1 - 1e-5) * optimum
        assert result.tight
        np.testing.assert_allclose(result.V, np.outer(p, p.conj()), atol=1e-3)


def test_two_subarray_optimum(rng):
    """test L = 2 against the closed form H11 + H22 + 2 |H12|."""
    for _ in range(20):
        Z = rng.standard_normal((16, 2)) + 1j * rng.standard_normal((16, 2))
        H = Z.conj().T @ Z
        optimum = np.real(H[0, 0] + H[1, 1]) + 2 * abs(H[0, 1])

        result = solve_phase_sdp(Z, rng=rng)
        assert sdp_objective(Z, result.V) == pytest.approx(optimum, rel=1e-4)
        assert result.tight


def test_objective_lower_bound(rng):
    """test V is no worse than any rank-one unit-modulus candidate."""
    for _ in range(10):
        Z = rng.standard_normal((16, 4)) + 1j * rng.standard_normal((16, 4))
        result = solve_phase_sdp(Z, rng=rng)
        value = sdp_objective(Z, result.V)

        H = Z.conj().T @ Z
        assert value <= 4 * np.linalg.eigvalsh(H)[-1] * (1 + 1e-9)
        for _ in range(100):
            p = np.exp(1j * rng.uniform(0, 2 * np.pi, 4))
            assert value >= sdp_objective(Z, np.outer(p, p.conj())) * (1 - 1e-4)

        # rounding the top eigenvector of H is feasible too
        _, U = np.linalg.eigh(H)
        p = np.exp(1j * np.angle(U[:, -1]))
        assert value >= sdp_objective(Z, np.outer(p, p.conj())) * (1 - 1e-4)


def test_objective_oracle(rng):
    """test the objective against a long coordinate-ascent run on 4 x 4 blocks."""
    for _ in range(5):
        Z = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        result = solve_phase_sdp(
            Z, rng=rng, max_outer=20000, max_inner=5000, tol=1e-10
        )
        expected = sdp_objective(Z, _bm_oracle(Z))
        assert sdp_objective(Z, result.V) == pytest.approx(expected, rel=1e-6)


def test_converged_iterate_is_stationary(rng):
    """test a converged run does not stop on its first feasible iterate."""
    Z = np.outer(rng.standard_normal(16) + 1j, np.exp(1j * np.array([0.3, 2.1])))
    for seed in range(20):
        result = solve_phase_sdp(Z, rng=np.random.default_rng(seed))
        if result.exit_reason == ExitReason.converged:
            assert result.iterations > 1

        assert result.tight


def test_extract_phases_global_rotation(rng):
    """test a global phase on the eigenvector shifts every phase by alpha."""
    vector = np.exp(1j * rng.uniform(-np.pi, np.pi, 4))
    base = SyncResult(V=np.eye(4), eigenvalue=4.0, vector=vector, ratio=0.0)
    alpha = 1.234
    rotated = attr.evolve(base, vector=np.exp(1j * alpha) * vector)
    shift = wrap_phase(extract_phases(rotated) - extract_phases(base) - alpha)
    np.testing.assert_allclose(shift, 0, atol=1e-12)

    v = SyncResult(
        V=np.eye(3), eigenvalue=3.0, vector=np.array([1, 1j, -1]), ratio=0.0
    )
    np.testing.assert_allclose(extract_phases(v), [0.0, np.pi / 2, np.pi])


def test_snapshot_phase_shift_invariance(medium_scenario):
    """test a common phase on one snapshot leaves the coherent spectrum unchanged."""
    scenario = attr.evolve(medium_scenario, n_snapshots=2)
    snapshots, truth = simulate(scenario, np.random.default_rng(8))
    dictionary = build_dictionary(scenario.geometry, scenario.grid)

    shifted = truth.phases.copy()
    shifted[1] += 0.7
    base = coherent_spectrum(
        phase_correct(snapshots, truth.phases), dictionary, 2, snapshots.noise_var
    )
    moved = coherent_spectrum(
        phase_correct(snapshots, shifted), dictionary, 2, snapshots.noise_var
    )
    np.testing.assert_allclose(
        moved.scores, base.scores, rtol=0, atol=1e-8 * base.scores.max()
    )

    corrected = phase_correct(snapshots, np.zeros((2, 2)))
    np.testing.assert_array_equal(corrected, snapshots.data)
