"""Scenario generation and synthetic snapshots."""

from pathlib import Path
from typing import Any, List, Optional, Sequence, Tuple, Union

import attr
import numpy as np

from noncoherent.doa.array import ArrayGeometry, DoaGrid, array_manifold
from noncoherent.doa.enums import SnrConvention
from noncoherent.doa.errors import ArgumentError
from noncoherent.doa.settings import BenchSettings
from noncoherent.doa.utils import (
    comment_header,
    dumps,
    read_comment_header,
    read_csv,
    write_csv,
)

bench_config = BenchSettings()

SNAPSHOT_COLUMNS = ("subarray", "element", "snapshot", "real", "imag")


def _as_angles(value: Sequence[float]) -> Tuple[float, ...]:
    return tuple(float(v) for v in np.atleast_1d(value))


@attr.s(frozen=True)
class Scenario:
    """Sources, snapshot count and SNR for one experiment.

    `perturbation` is the width of the uniform jitter applied to the base
    DOAs in every trial; it defaults to the grid step.
    """

    geometry: ArrayGeometry = attr.ib()
    grid: DoaGrid = attr.ib()
    doas: Tuple[float, ...] = attr.ib(converter=_as_angles)
    n_snapshots: int = attr.ib(default=1, converter=int)
    snr_db: float = attr.ib(default=20.0, converter=float)
    perturbation: Optional[float] = attr.ib(default=None)
    snr_convention: SnrConvention = attr.ib(
        default=bench_config.snr_convention, converter=SnrConvention
    )

    @doas.validator
    def _check_doas(self, attribute, value):
        if len(value) < 1:
            raise ArgumentError("a scenario needs at least one source")

        lo, hi = self.grid.start, self.grid.stop
        if any(not lo <= theta <= hi for theta in value):
            raise ArgumentError(f"source DOAs {value} outside of the grid [{lo}, {hi}]")

    @n_snapshots.validator
    def _check_snapshots(self, attribute, value):
        if value < 1:
            raise ArgumentError(f"n_snapshots must be >= 1, got {value}")

    @snr_db.validator
    def _check_snr(self, attribute, value):
        if np.isnan(value) or value == -np.inf:
            raise ArgumentError(f"invalid SNR {value}")

    @perturbation.validator
    def _check_perturbation(self, attribute, value):
        if value is not None and not value >= 0:
            raise ArgumentError(f"perturbation must be >= 0, got {value}")

    @property
    def n_sources(self) -> int:
        """Number of sources Q."""
        return len(self.doas)

    @property
    def delta(self) -> float:
        """Perturbation width in degrees."""
        return self.grid.step if self.perturbation is None else float(self.perturbation)

    @property
    def noise_var(self) -> float:
        """Noise variance for unit-power sources."""
        sigma2 = 10.0 ** (-self.snr_db / 10.0)
        if self.snr_convention == SnrConvention.total:
            sigma2 *= self.n_sources

        return float(sigma2)


@attr.s(frozen=True)
class GroundTruth:
    """What the simulator drew: DOAs, signals (Q x N), phases (N x L)."""

    doas: np.ndarray = attr.ib(eq=False)
    signals: np.ndarray = attr.ib(eq=False, repr=False)
    phases: np.ndarray = attr.ib(eq=False, repr=False)
    noise_var: float = attr.ib(converter=float)


@attr.s(frozen=True)
class SnapshotSet:
    """Stacked sub-array snapshots, (M x N) complex."""

    data: np.ndarray = attr.ib(eq=False, repr=False)
    partition: Tuple[int, ...] = attr.ib(converter=lambda v: tuple(int(s) for s in v))
    noise_var: float = attr.ib(converter=float)

    @data.validator
    def _check_data(self, attribute, value):
        if value.ndim != 2:
            raise ArgumentError(f"snapshots must be 2-D (M x N), got {value.shape}")

    @partition.validator
    def _check_partition(self, attribute, value):
        if sum(value) != self.data.shape[0]:
            raise ArgumentError(
                f"partition {value} does not match {self.data.shape[0]} elements"
            )

    @property
    def n_elements(self) -> int:
        """M."""
        return self.data.shape[0]

    @property
    def n_subarrays(self) -> int:
        """L."""
        return len(self.partition)

    @property
    def n_snapshots(self) -> int:
        """N."""
        return self.data.shape[1]

    @property
    def slices(self) -> List[slice]:
        """Row range of each sub-array."""
        bounds = np.concatenate([[0], np.cumsum(self.partition)])
        return [slice(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]

    def subarray(self, index: int) -> np.ndarray:
        """(M_l x N) observations of one sub-array."""
        if not 0 <= index < self.n_subarrays:
            raise ArgumentError(f"sub-array index {index} out of range")

        return self.data[self.slices[index]]

    def with_data(self, data: np.ndarray) -> "SnapshotSet":
        """Same layout, new observations."""
        return attr.evolve(self, data=np.asarray(data, dtype=complex))


def perturb_doas(
    base: Sequence[float], delta: float, rng: np.random.Generator
) -> np.ndarray:
    """Draw each DOA from U[base - delta/2, base + delta/2]."""
    if not delta >= 0:
        raise ArgumentError(f"perturbation must be >= 0, got {delta}")

    base = np.asarray(base, dtype=float)
    if delta == 0:
        return base.copy()

    return base + rng.uniform(-delta / 2, delta / 2, size=base.shape)


def complex_normal(
    rng: np.random.Generator, shape: Tuple[int, ...], variance: float = 1.0
) -> np.ndarray:
    """Circular complex Gaussian, E|z|^2 = variance."""
    scale = np.sqrt(variance / 2)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def simulate(
    scenario: Scenario,
    rng: np.random.Generator,
    phases: Optional[np.ndarray] = None,
    signals: Optional[np.ndarray] = None,
) -> Tuple[SnapshotSet, GroundTruth]:
    """Draw one Monte Carlo realization.

    Draw order: DOAs, phases (N x L), signals (Q x N), noise (M x N).
    Passing `phases` or `signals` skips their draw.
    """
    geometry = scenario.geometry
    N, L, Q = scenario.n_snapshots, geometry.n_subarrays, scenario.n_sources
    sigma2 = scenario.noise_var

    doas = perturb_doas(scenario.doas, scenario.delta, rng)

    if phases is None:
        phases = rng.uniform(0.0, 2 * np.pi, size=(N, L))
    else:
        phases = np.asarray(phases, dtype=float)
        if phases.shape != (N, L):
            raise ArgumentError(f"phases must have shape {(N, L)}, got {phases.shape}")

    if signals is None:
        signals = complex_normal(rng, (Q, N))
    else:
        signals = np.asarray(signals, dtype=complex)
        if signals.shape != (Q, N):
            raise ArgumentError(
                f"signals must have shape {(Q, N)}, got {signals.shape}"
            )

    blocks = []
    for index in range(L):
        A = array_manifold(geometry, index, doas)
        blocks.append(np.exp(-1j * phases[:, index])[None, :] * (A @ signals))

    data = np.vstack(blocks)
    if sigma2 > 0:
        data = data + complex_normal(rng, data.shape, sigma2)

    snapshots = SnapshotSet(data=data, partition=geometry.partition, noise_var=sigma2)
    truth = GroundTruth(doas=doas, signals=signals, phases=phases, noise_var=sigma2)
    return snapshots, truth


def snapshot_metadata(snapshots: SnapshotSet) -> dict:
    """Header fields describing a snapshot set."""
    return {
        "noise_var": repr(snapshots.noise_var),
        "n_elements": snapshots.n_elements,
        "n_subarrays": snapshots.n_subarrays,
        "n_snapshots": snapshots.n_snapshots,
        "partition": " ".join(str(s) for s in snapshots.partition),
    }


def dump_snapshots(
    path: Union[str, Path], snapshots: SnapshotSet, **metadata: Any
) -> Path:
    """Write snapshots as CSV, one row per (sub-array, element, snapshot).

    Values are written with `repr` so a reload is exact.
    """
    header = comment_header(**{**metadata, **snapshot_metadata(snapshots)})

    def rows():
        for index, s in enumerate(snapshots.slices):
            block = snapshots.data[s]
            for element in range(block.shape[0]):
                for n in range(block.shape[1]):
                    value = block[element, n]
                    real, imag = repr(float(value.real)), repr(float(value.imag))
                    yield (index, element, n, real, imag)

    return write_csv(path, header, SNAPSHOT_COLUMNS, rows())


def load_snapshots(path: Union[str, Path]) -> SnapshotSet:
    """Read a file written by `dump_snapshots`."""
    metadata = read_comment_header(path)
    try:
        partition = tuple(int(s) for s in metadata["partition"].split())
        noise_var = float(metadata["noise_var"])
        n_snapshots = int(metadata["n_snapshots"])
    except KeyError as e:
        raise ArgumentError(f"{path}: missing header field {e}") from e

    offsets = np.concatenate([[0], np.cumsum(partition)])
    data = np.zeros((int(offsets[-1]), n_snapshots), dtype=complex)
    for row in read_csv(path):
        m = offsets[int(row["subarray"])] + int(row["element"])
        data[m, int(row["snapshot"])] = complex(float(row["real"]), float(row["imag"]))

    return SnapshotSet(data=data, partition=partition, noise_var=noise_var)


def dump_ground_truth(
    path: Union[str, Path], truth: GroundTruth, **metadata: Any
) -> Path:
    """Write the ground truth as JSON."""
    path = Path(path)
    signals = np.asarray(truth.signals)
    content = {
        "doas_deg": np.asarray(truth.doas),
        "phases_rad": np.asarray(truth.phases),
        "signals_real": np.ascontiguousarray(signals.real),
        "signals_imag": np.ascontiguousarray(signals.imag),
        "noise_var": truth.noise_var,
        "metadata": metadata,
    }
    path.write_bytes(dumps(content))
    return path
