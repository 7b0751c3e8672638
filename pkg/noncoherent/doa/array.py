"""Array geometry, steering vectors and DOA-grid dictionaries."""

import threading
from typing import Callable, List, Optional, Sequence, Tuple

import attr
import numpy as np
from cachetools import LRUCache, cached
from cachetools.keys import hashkey

from noncoherent.doa.errors import ArgumentError
from noncoherent.doa.settings import CacheSettings

cache_config = CacheSettings()

# element gain as a function of the angle (degrees)
Pattern = Callable[[np.ndarray], np.ndarray]


def omnidirectional(theta: np.ndarray) -> np.ndarray:
    """Unit gain in every direction."""
    return np.ones_like(np.asarray(theta, dtype=float))


def _to_positions(value: Sequence[Sequence[float]]) -> Tuple[Tuple[float, float], ...]:
    return tuple((float(x), float(y)) for x, y in value)


def _check_partition(instance, attribute, value):
    if len(value) < 1:
        raise ArgumentError("partition must hold at least one sub-array")

    if any(size < 1 for size in value):
        raise ArgumentError(f"sub-array sizes must be >= 1, got {value}")

    if sum(value) != len(instance.positions):
        raise ArgumentError(
            f"partition {value} does not cover the {len(instance.positions)} elements"
        )


@attr.s(frozen=True)
class ArrayGeometry:
    """Planar array split into contiguous sub-arrays.

    Positions are in meters; the reference point is the origin. The
    partition lists the sub-array sizes M_1..M_L in element order.
    """

    wavelength: float = attr.ib(converter=float)
    positions: Tuple[Tuple[float, float], ...] = attr.ib(converter=_to_positions)
    partition: Tuple[int, ...] = attr.ib(
        converter=lambda v: tuple(int(s) for s in v), validator=_check_partition
    )
    patterns: Optional[Tuple[Pattern, ...]] = attr.ib(
        default=None, converter=attr.converters.optional(tuple)
    )

    @wavelength.validator
    def _check_wavelength(self, attribute, value):
        if not np.isfinite(value) or value <= 0:
            raise ArgumentError(f"wavelength must be positive, got {value}")

    @patterns.validator
    def _check_patterns(self, attribute, value):
        if value is not None and len(value) != len(self.positions):
            raise ArgumentError("one pattern per element is required")

    @classmethod
    def ula(
        cls,
        count: int,
        spacing: float = 0.5,
        partition: Optional[Sequence[int]] = None,
        wavelength: float = 1.0,
    ) -> "ArrayGeometry":
        """Uniform linear array on the x-axis, centered at the origin.

        `spacing` is given in wavelengths.
        """
        offsets = (np.arange(count) - (count - 1) / 2) * spacing * wavelength
        return cls(
            wavelength=wavelength,
            positions=[(x, 0.0) for x in offsets],
            partition=partition or (count,),
        )

    @property
    def n_elements(self) -> int:
        """Total number of elements M."""
        return len(self.positions)

    @property
    def n_subarrays(self) -> int:
        """Number of sub-arrays L."""
        return len(self.partition)

    @property
    def slices(self) -> List[slice]:
        """Element index range of each sub-array."""
        bounds = np.concatenate([[0], np.cumsum(self.partition)])
        return [slice(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]

    def subarray_positions(self, subarray: int) -> np.ndarray:
        """(M_l, 2) positions of one sub-array."""
        self._check_subarray(subarray)
        return np.asarray(self.positions)[self.slices[subarray]]

    def subarray_patterns(self, subarray: int) -> Tuple[Pattern, ...]:
        """Element patterns of one sub-array."""
        self._check_subarray(subarray)
        s = self.slices[subarray]
        if self.patterns is None:
            return (omnidirectional,) * (s.stop - s.start)

        return self.patterns[s]

    def _check_subarray(self, subarray: int) -> None:
        if not 0 <= subarray < self.n_subarrays:
            raise ArgumentError(
                f"sub-array index {subarray} out of range [0, {self.n_subarrays})"
            )


def _check_step(instance, attribute, value):
    if not np.isfinite(value) or value <= 0:
        raise ArgumentError(f"grid step must be positive, got {value}")


@attr.s(frozen=True)
class DoaGrid:
    """Uniform DOA grid in degrees, both ends included."""

    start: float = attr.ib(converter=float)
    stop: float = attr.ib(converter=float)
    step: float = attr.ib(converter=float, validator=_check_step)
    angles: np.ndarray = attr.ib(init=False, eq=False, repr=False)

    def __attrs_post_init__(self):
        """Materialize the grid."""
        count = int(round((self.stop - self.start) / self.step)) + 1
        if count < 2:
            raise ArgumentError("a DOA grid needs at least two points")

        if not np.isclose(self.start + (count - 1) * self.step, self.stop, atol=1e-9):
            raise ArgumentError(
                f"[{self.start}, {self.stop}] is not a multiple of step {self.step}"
            )

        angles = np.linspace(self.start, self.stop, count)
        angles.setflags(write=False)
        object.__setattr__(self, "angles", angles)

    @classmethod
    def from_angles(cls, angles: Sequence[float]) -> "DoaGrid":
        """Build a grid from explicit, uniformly spaced angles."""
        angles = np.asarray(angles, dtype=float)
        if angles.ndim != 1 or angles.size < 2:
            raise ArgumentError("a DOA grid needs at least two points")

        steps = np.diff(angles)
        if np.any(steps <= 0):
            raise ArgumentError("grid angles must be strictly increasing")

        spread = np.max(np.abs(steps - steps.mean()))
        if spread > 1e-12 * abs(steps.mean()) * angles.size:
            raise ArgumentError("grid angles must be uniformly spaced")

        return cls(angles[0], angles[-1], (angles[-1] - angles[0]) / (angles.size - 1))

    def __len__(self) -> int:
        """Number of grid points."""
        return self.angles.size

    def nearest(self, theta: np.ndarray) -> np.ndarray:
        """Index of the grid point closest to each angle."""
        idx = np.rint((np.asarray(theta, dtype=float) - self.start) / self.step)
        return np.clip(idx, 0, len(self) - 1).astype(int)


def _response(
    positions: np.ndarray,
    patterns: Sequence[Pattern],
    wavelength: float,
    theta: np.ndarray,
) -> np.ndarray:
    """(elements, angles) matrix of element responses."""
    rad = np.deg2rad(theta)
    k = 2 * np.pi / wavelength
    phase = k * (
        positions[:, 0:1] * np.sin(rad)[None, :]
        + positions[:, 1:2] * np.cos(rad)[None, :]
    )
    gain = np.stack([np.asarray(p(theta), dtype=float) for p in patterns])
    return gain * np.exp(1j * phase)


def steering_vector(geometry: ArrayGeometry, subarray: int, theta: float) -> np.ndarray:
    """Sub-array response to a plane wave from `theta` (degrees)."""
    if not np.isfinite(theta):
        raise ArgumentError(f"angle must be finite, got {theta}")

    return _response(
        geometry.subarray_positions(subarray),
        geometry.subarray_patterns(subarray),
        geometry.wavelength,
        np.array([float(theta)]),
    )[:, 0]


def array_manifold(
    geometry: ArrayGeometry, subarray: int, thetas: Sequence[float]
) -> np.ndarray:
    """(M_l, len(thetas)) sub-array manifold at arbitrary, off-grid angles."""
    return _response(
        geometry.subarray_positions(subarray),
        geometry.subarray_patterns(subarray),
        geometry.wavelength,
        np.asarray(thetas, dtype=float),
    )


def power_iteration(
    H: np.ndarray, tol: float = 1e-12, max_iter: int = 10000, atol: float = 0.0
) -> Tuple[float, np.ndarray]:
    """Dominant eigenpair of a Hermitian PSD matrix.

    Starts from the all-ones vector with a fixed small ramp added and stops
    once the residual ||Hv - lambda v|| falls below max(tol * lambda, atol).
    """
    H = np.asarray(H)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ArgumentError(f"expected a square matrix, got shape {H.shape}")

    n = H.shape[0]
    dtype = np.result_type(H.dtype, float)
    v = np.ones(n, dtype=dtype) + 1e-3 * np.arange(n) / max(n, 1)
    v = v / np.linalg.norm(v)

    value = 0.0
    for _ in range(max_iter):
        w = H @ v
        value = float(np.real(np.vdot(v, w)))
        norm = np.linalg.norm(w)
        if norm == 0:
            return 0.0, v

        if np.linalg.norm(w - value * v) <= max(tol * abs(value), atol):
            break

        v = w / norm

    return value, v


def spectral_norm(H: np.ndarray) -> float:
    """Largest eigenvalue of a Hermitian PSD matrix (power method)."""
    value, _ = power_iteration(H)
    return max(value, 0.0)


@attr.s(frozen=True)
class Dictionary:
    """Per sub-array measurement matrices A_l over a DOA grid."""

    geometry: ArrayGeometry = attr.ib()
    grid: DoaGrid = attr.ib()
    matrices: Tuple[np.ndarray, ...] = attr.ib(converter=tuple, eq=False, repr=False)
    # ||A_l^H A_l|| per sub-array
    norms: np.ndarray = attr.ib(eq=False, repr=False)
    stacked: np.ndarray = attr.ib(init=False, eq=False, repr=False)
    stacked_norm: float = attr.ib(init=False, eq=False, repr=False)

    def __attrs_post_init__(self):
        """Stack the full-array matrix."""
        stacked = np.vstack(self.matrices)
        object.__setattr__(self, "stacked", stacked)
        norm = spectral_norm(stacked @ stacked.conj().T)
        object.__setattr__(self, "stacked_norm", norm)

    @property
    def max_norm(self) -> float:
        """max_l ||A_l^H A_l||."""
        return float(np.max(self.norms))

    def __len__(self) -> int:
        """Number of sub-arrays."""
        return len(self.matrices)


@cached(  # type: ignore
    LRUCache(maxsize=cache_config.maxsize),
    key=lambda geometry, grid: hashkey(geometry, grid),
    lock=threading.Lock(),
)
def build_dictionary(geometry: ArrayGeometry, grid: DoaGrid) -> Dictionary:
    """Build A_l (M_l x N_theta) for every sub-array.

    ||A_l^H A_l|| is evaluated on the small M_l x M_l matrix A_l A_l^H,
    which shares its non-zero eigenvalues.
    """
    matrices = []
    for subarray in range(geometry.n_subarrays):
        A = array_manifold(geometry, subarray, grid.angles)
        A.setflags(write=False)
        matrices.append(A)

    norms = np.array([spectral_norm(A @ A.conj().T) for A in matrices])
    return Dictionary(geometry=geometry, grid=grid, matrices=matrices, norms=norms)
