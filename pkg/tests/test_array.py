"""test array geometry and dictionaries."""

import numpy as np
import pytest

from noncoherent.doa.array import (
    ArrayGeometry,
    DoaGrid,
    array_manifold,
    build_dictionary,
    power_iteration,
    spectral_norm,
    steering_vector,
)
from noncoherent.doa.errors import ArgumentError

from .conftest import hermitian_psd


def test_ula():
    """test ULA shorthand."""
    geometry = ArrayGeometry.ula(6, 0.5, partition=[2, 4], wavelength=2.0)
    assert geometry.n_elements == 6
    assert geometry.n_subarrays == 2
    assert geometry.slices == [slice(0, 2), slice(2, 6)]

    x = np.asarray(geometry.positions)[:, 0]
    np.testing.assert_allclose(np.diff(x), 1.0)
    assert x.sum() == pytest.approx(0.0)

    positions = np.asarray(geometry.positions)
    np.testing.assert_allclose(geometry.subarray_positions(1), positions[2:])

    # single sub-array by default
    assert ArrayGeometry.ula(4).partition == (4,)


def test_geometry_errors():
    """test invalid geometries."""
    with pytest.raises(ArgumentError):
        ArrayGeometry.ula(6, partition=[2, 2])

    with pytest.raises(ArgumentError):
        ArrayGeometry.ula(6, partition=[6, 0])

    with pytest.raises(ArgumentError):
        ArrayGeometry(wavelength=0, positions=[(0, 0)], partition=[1])

    geometry = ArrayGeometry.ula(4, partition=[2, 2])
    with pytest.raises(ArgumentError):
        geometry.subarray_positions(2)


def test_grid():
    """test DOA grid."""
    grid = DoaGrid(-45, 45, 0.1)
    assert len(grid) == 901
    assert grid.angles[0] == -45.0
    assert grid.angles[-1] == 45.0
    assert grid.angles[450] == pytest.approx(0.0, abs=1e-12)

    with pytest.raises(ValueError):
        grid.angles[0] = 1.0

    np.testing.assert_array_equal(
        grid.nearest([-50.0, 0.04, 0.06, 60.0]), [0, 450, 451, 900]
    )

    assert DoaGrid.from_angles([0.0, 1.0, 2.0]) == DoaGrid(0, 2, 1)

    with pytest.raises(ArgumentError):
        DoaGrid(0, 1, 0)

    with pytest.raises(ArgumentError):
        DoaGrid(0, 1, 0.3)

    with pytest.raises(ArgumentError):
        DoaGrid.from_angles([0.0, 1.0, 3.0])


def test_steering_vector():
    """test steering vectors."""
    geometry = ArrayGeometry.ula(4, 0.5, partition=[4])

    # broadside: all elements in phase
    np.testing.assert_allclose(steering_vector(geometry, 0, 0.0), np.ones(4))

    # half-wavelength spacing: consecutive elements differ by pi sin(theta)
    a = steering_vector(geometry, 0, 30.0)
    np.testing.assert_allclose(np.abs(a), 1.0)
    np.testing.assert_allclose(a[1:] / a[:-1], np.exp(1j * np.pi * 0.5))

    np.testing.assert_allclose(array_manifold(geometry, 0, [30.0])[:, 0], a)

    with pytest.raises(ArgumentError):
        steering_vector(geometry, 0, np.nan)


def test_element_patterns():
    """test per-element gains."""
    patterns = [lambda t: np.cos(np.deg2rad(t))] * 2
    patterns += [lambda t: 2 * np.ones_like(t)] * 2
    geometry = ArrayGeometry(
        wavelength=1.0,
        positions=[(0, 0), (0.5, 0), (1.0, 0), (1.5, 0)],
        partition=[2, 2],
        patterns=patterns,
    )
    np.testing.assert_allclose(np.abs(steering_vector(geometry, 0, 60.0)), 0.5)
    np.testing.assert_allclose(np.abs(steering_vector(geometry, 1, 60.0)), 2.0)


def test_power_iteration(rng):
    """test dominant eigenpair against eigh."""
    for _ in range(20):
        H = hermitian_psd(rng, 6)
        value, vector = power_iteration(H)
        expected = np.linalg.eigvalsh(H)[-1]
        assert value == pytest.approx(expected, rel=1e-8)
        np.testing.assert_allclose(H @ vector, value * vector, atol=1e-6 * expected)

    assert spectral_norm(np.zeros((3, 3))) == 0.0

    with pytest.raises(ArgumentError):
        power_iteration(np.ones((2, 3)))


def test_dictionary(tiny_geometry, tiny_grid):
    """test dictionary construction and caching."""
    dictionary = build_dictionary(tiny_geometry, tiny_grid)
    assert len(dictionary) == 2
    assert dictionary.matrices[0].shape == (4, 16)
    assert dictionary.stacked.shape == (8, 16)

    np.testing.assert_allclose(
        dictionary.matrices[1][:, 3],
        steering_vector(tiny_geometry, 1, tiny_grid.angles[3]),
    )

    for A, norm in zip(dictionary.matrices, dictionary.norms):
        assert norm == pytest.approx(np.linalg.norm(A.conj().T @ A, 2), rel=1e-8)

    expected = np.linalg.norm(dictionary.stacked, 2) ** 2
    assert dictionary.stacked_norm == pytest.approx(expected, rel=1e-8)
    assert dictionary.max_norm == max(dictionary.norms)

    # same (geometry, grid) returns the cached object
    assert build_dictionary(tiny_geometry, tiny_grid) is dictionary
    geometry = ArrayGeometry.ula(8, 0.5, partition=[4, 4])
    assert build_dictionary(geometry, DoaGrid(-30, 45, 5)) is dictionary

    with pytest.raises(ValueError):
        dictionary.matrices[0][0, 0] = 0


def test_translation_common_phase(tiny_grid):
    """test translating the array changes each column by a unit phase only."""
    base = ArrayGeometry.ula(8, 0.5, partition=[4, 4])
    shift = np.array([0.37, -1.2])
    moved = ArrayGeometry(
        wavelength=base.wavelength,
        positions=np.asarray(base.positions) + shift,
        partition=base.partition,
    )
    A = build_dictionary(base, tiny_grid)
    B = build_dictionary(moved, tiny_grid)
    for index in range(2):
        inner = np.sum(A.matrices[index].conj() * B.matrices[index], axis=0)
        np.testing.assert_allclose(np.abs(inner), 4.0, rtol=1e-12)

    np.testing.assert_allclose(A.norms, B.norms, rtol=1e-6)
