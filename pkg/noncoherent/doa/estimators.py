"""DOA estimators: spectra, peak picking and method pipelines."""

from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import attr
import numpy as np

from noncoherent.doa.array import ArrayGeometry, Dictionary, DoaGrid, build_dictionary
from noncoherent.doa.enums import Method
from noncoherent.doa.errors import (
    ArgumentError,
    NumericFailureError,
    UnsupportedConfigurationError,
)
from noncoherent.doa.logger import logger
from noncoherent.doa.settings import SparseSettings
from noncoherent.doa.sim import SnapshotSet
from noncoherent.doa.solver import (
    LiftedEstimate,
    SolverConfig,
    accelerated_prox_gradient,
    default_lambda,
    solve_lifted,
)
from noncoherent.doa.sync import SyncResult, estimate_phases, phase_correct
from noncoherent.doa.utils import Timer, write_csv

sparse_config = SparseSettings()

SPECTRUM_COLUMNS = ("angle_deg", "score")


@attr.s(frozen=True)
class Spectrum:
    """Non-negative score per grid angle."""

    grid: DoaGrid = attr.ib()
    scores: np.ndarray = attr.ib(eq=False, repr=False)
    method: str = attr.ib(default="")

    @scores.validator
    def _check_scores(self, attribute, value):
        if value.shape != (len(self.grid),):
            raise ArgumentError(
                f"expected {len(self.grid)} scores, got shape {value.shape}"
            )

        if not np.all(np.isfinite(value)):
            raise NumericFailureError(
                f"non-finite {self.method} spectrum", stage="spectrum"
            )

    def to_csv(self, path: Union[str, Path], header: Sequence[str] = ()) -> Path:
        """Write (angle, score) rows."""
        rows = (
            (repr(float(a)), repr(float(s)))
            for a, s in zip(self.grid.angles, self.scores)
        )
        return write_csv(path, header, SPECTRUM_COLUMNS, rows)


@attr.s(frozen=True)
class DoaEstimate:
    """Q grid angles ranked by spectrum score."""

    angles: np.ndarray = attr.ib(eq=False)
    indices: np.ndarray = attr.ib(eq=False)
    method: str = attr.ib(default="")
    # slots filled from the largest non-peak values
    n_fallback: int = attr.ib(default=0)

    @property
    def fallback(self) -> bool:
        """Whether fewer than Q local maxima were found."""
        return self.n_fallback > 0


def rank1_approx(Z: np.ndarray) -> np.ndarray:
    """Frobenius-nearest rank-one matrix (leading singular triplet)."""
    Z = np.asarray(Z)
    if not np.any(Z):
        return np.zeros_like(Z)

    U, s, Vh = np.linalg.svd(Z, full_matrices=False)
    return s[0] * np.outer(U[:, 0], Vh[0])


def spectrum_proposed1(
    estimate: Union[LiftedEstimate, Sequence[np.ndarray]],
    grid: DoaGrid,
    use_rank1: bool = True,
    method: str = Method.proposed1.value,
) -> Spectrum:
    """Row-wise l2 norm over all (rank-one approximated) lifted blocks."""
    if isinstance(estimate, LiftedEstimate):
        blocks = estimate.blocks()
    else:
        blocks = list(estimate)

    energy = np.zeros(len(grid))
    for block in blocks:
        if use_rank1:
            block = rank1_approx(block)

        energy += np.sum(np.abs(block) ** 2, axis=1)

    return Spectrum(grid=grid, scores=np.sqrt(energy), method=method)


def pick_peaks(spectrum: Spectrum, n_sources: int) -> DoaEstimate:
    """Take the Q highest local maxima of a spectrum.

    A point is a local maximum when it is strictly greater than both
    neighbors (endpoints: their single neighbor). Ties in score go to the
    lowest index. Missing peaks are filled with the largest remaining values.
    """
    scores = np.asarray(spectrum.scores, dtype=float)
    size = scores.size
    if n_sources < 1:
        raise ArgumentError(f"number of sources must be >= 1, got {n_sources}")

    if n_sources > size:
        raise ArgumentError(f"cannot pick {n_sources} peaks on a {size}-point grid")

    left = np.concatenate([[True], scores[1:] > scores[:-1]])
    right = np.concatenate([scores[:-1] > scores[1:], [True]])
    peaks = np.flatnonzero(left & right)

    order = np.lexsort((np.arange(size), -scores))
    is_peak = set(peaks.tolist())
    ranked_peaks = [int(i) for i in order if i in is_peak]
    selected = ranked_peaks[:n_sources]
    n_fallback = n_sources - len(selected)
    if n_fallback:
        chosen = set(selected)
        selected += [int(i) for i in order if i not in chosen][:n_fallback]

    indices = np.asarray(selected, dtype=int)
    return DoaEstimate(
        angles=spectrum.grid.angles[indices],
        indices=indices,
        method=spectrum.method,
        n_fallback=n_fallback,
    )


def forward_backward(R: np.ndarray) -> np.ndarray:
    """(R + J conj(R) J) / 2 with J the exchange matrix."""
    return 0.5 * (R + np.flip(R.conj()))


def sample_covariance(X: np.ndarray, fb: bool = True) -> np.ndarray:
    """(1/N) X X^H, optionally forward-backward averaged."""
    X = np.asarray(X)
    R = X @ X.conj().T / X.shape[1]
    return forward_backward(R) if fb else R


def _music_scores(R: np.ndarray, A: np.ndarray, n_sources: int) -> np.ndarray:
    M = R.shape[0]
    if n_sources < 0 or n_sources >= M:
        raise ArgumentError(f"MUSIC needs 0 <= Q < M, got Q={n_sources}, M={M}")

    _, U = np.linalg.eigh(R)
    noise = U[:, : M - n_sources]
    projection = np.sum(np.abs(noise.conj().T @ A) ** 2, axis=0)
    floor = np.finfo(float).eps ** 2 * np.sum(np.abs(A) ** 2, axis=0)
    return 1.0 / np.maximum(projection, floor)


def music_spectrum(
    X: np.ndarray,
    geometry: ArrayGeometry,
    grid: DoaGrid,
    n_sources: int,
    fb: bool = True,
) -> Spectrum:
    """MUSIC pseudo-spectrum of coherent full-array snapshots (M x N)."""
    X = np.asarray(X)
    if X.ndim == 1:
        X = X[:, None]

    if X.ndim != 2 or X.shape[0] != geometry.n_elements:
        raise ArgumentError(f"expected {geometry.n_elements} rows, got shape {X.shape}")

    A = build_dictionary(geometry, grid).stacked
    scores = _music_scores(sample_covariance(X, fb), A, n_sources)
    return Spectrum(grid=grid, scores=scores, method="MUSIC")


def _same_configuration(geometry: ArrayGeometry) -> bool:
    reference = geometry.subarray_positions(0)
    reference = reference - reference[0]
    patterns = geometry.subarray_patterns(0)
    scale = geometry.wavelength * 1e-9
    for index in range(1, geometry.n_subarrays):
        positions = geometry.subarray_positions(index)
        if positions.shape != reference.shape:
            return False

        if not np.allclose(positions - positions[0], reference, rtol=0, atol=scale):
            return False

        if geometry.subarray_patterns(index) != patterns:
            return False

    return True


def noncoherent_music(
    snapshots: SnapshotSet,
    geometry: ArrayGeometry,
    grid: DoaGrid,
    n_sources: int,
    fb: bool = True,
) -> Spectrum:
    """MUSIC on the N*L sub-array snapshots pooled as one small array."""
    if not _same_configuration(geometry):
        raise UnsupportedConfigurationError(
            "non-coherent MUSIC needs sub-arrays with identical element configuration"
        )

    pooled = np.hstack(
        [snapshots.subarray(index) for index in range(snapshots.n_subarrays)]
    )
    A = build_dictionary(geometry, grid).matrices[0]
    scores = _music_scores(sample_covariance(pooled, fb), A, n_sources)
    return Spectrum(grid=grid, scores=scores, method=Method.noncoherent_music.value)


class _CoherentSmooth:
    """lambda * ||X - A S||_F^2 for the coherent sparse stage."""

    def __init__(self, A: np.ndarray, X: np.ndarray, lam: float):
        """Precompute A^H X."""
        self.A = A
        self.lam = lam
        self.back_projection = A.conj().T @ X

    def gradient(self, S: np.ndarray) -> np.ndarray:
        """Wirtinger gradient with respect to conj(S)."""
        return self.lam * (self.A.conj().T @ (self.A @ S) - self.back_projection)


def sparse_spectrum(
    X: np.ndarray,
    dictionary: Dictionary,
    noise_var: float,
    lam: Optional[float] = None,
    tol: float = sparse_config.tol,
    max_iter: int = sparse_config.max_iter,
) -> Spectrum:
    """Joint-sparse recovery on coherent snapshots (M x N).

    Minimizes lambda * ||X - A S||_F^2 + ||S||_{1,2} by FISTA with step
    1 / (lambda * ||A^H A||); with one snapshot this is the complex l1
    problem. The spectrum is the row norm of S.
    """
    X = np.asarray(X, dtype=complex)
    if X.ndim == 1:
        X = X[:, None]

    A = dictionary.stacked
    if X.shape[0] != A.shape[0]:
        raise ArgumentError(f"expected {A.shape[0]} rows, got shape {X.shape}")

    if lam is None:
        lam = default_lambda(noise_var, A.shape[0])

    scores = np.zeros(A.shape[1])
    if lam > 0 and np.any(X):
        gamma = 1.0 / (lam * dictionary.stacked_norm)
        smooth = _CoherentSmooth(A, X, lam)
        S0 = np.zeros((A.shape[1], X.shape[1]), dtype=complex)
        S, iterations, _ = accelerated_prox_gradient(
            smooth, S0, 1.0, gamma, max_iter, tol
        )
        logger.debug(f"coherent sparse stage: {iterations} iterations")
        scores = np.linalg.norm(S, axis=1)

    return Spectrum(grid=dictionary.grid, scores=scores, method="L1")


def l1_single_snapshot(
    x: np.ndarray,
    dictionary: Dictionary,
    noise_var: float,
    lam: Optional[float] = None,
) -> Spectrum:
    """|s| of the penalized l1 fit of one coherent snapshot."""
    x = np.asarray(x)
    if x.ndim != 1 and not (x.ndim == 2 and x.shape[1] == 1):
        raise ArgumentError(f"expected a single snapshot, got shape {x.shape}")

    return sparse_spectrum(x.reshape(-1), dictionary, noise_var, lam=lam)


def coherent_spectrum(
    X: np.ndarray,
    dictionary: Dictionary,
    n_sources: int,
    noise_var: float,
    lam: Optional[float] = None,
) -> Spectrum:
    """Second stage on phase-corrected snapshots.

    One snapshot goes through l1, more snapshots than sources through
    forward-backward MUSIC, anything in between through l1,2.
    """
    X = np.asarray(X)
    n_snapshots = X.shape[1]
    if n_snapshots == 1:
        return l1_single_snapshot(X[:, 0], dictionary, noise_var, lam=lam)

    if n_snapshots > n_sources:
        R = sample_covariance(X, fb=True)
        scores = _music_scores(R, dictionary.stacked, n_sources)
        return Spectrum(grid=dictionary.grid, scores=scores, method="MUSIC")

    return sparse_spectrum(X, dictionary, noise_var, lam=lam)


@attr.s
class MethodResult:
    """Everything a method produced on one snapshot set."""

    method: Method = attr.ib()
    spectrum: Spectrum = attr.ib()
    estimate: DoaEstimate = attr.ib()
    phases: Optional[np.ndarray] = attr.ib(default=None, repr=False)
    sync: List[SyncResult] = attr.ib(factory=list, repr=False)
    lifted: Optional[LiftedEstimate] = attr.ib(default=None, repr=False)
    elapsed: float = attr.ib(default=0.0)

    @property
    def max_ratio(self) -> Optional[float]:
        """Largest SDP tightness ratio, None when no SDP was solved."""
        return max(r.ratio for r in self.sync) if self.sync else None

    @property
    def n_non_tight(self) -> int:
        """Number of snapshots with a non-tight relaxation."""
        return sum(not r.tight for r in self.sync)


def method_config(method: Method, config: SolverConfig) -> SolverConfig:
    """Solver weights used by a method."""
    if method == Method.sparsity_only:
        return attr.evolve(config, beta=1.0, mu=0.0)

    if method == Method.low_rank_only:
        return attr.evolve(config, beta=0.0, mu=1.0)

    return config


def run_method(
    method: Union[Method, str],
    snapshots: SnapshotSet,
    dictionary: Dictionary,
    n_sources: int,
    config: Optional[SolverConfig] = None,
    rng: Optional[np.random.Generator] = None,
    true_phases: Optional[np.ndarray] = None,
) -> MethodResult:
    """Run one estimator end to end."""
    method = Method(method)
    config = method_config(method, config or SolverConfig())
    geometry, grid = dictionary.geometry, dictionary.grid

    phases: Optional[np.ndarray] = None
    sync: List[SyncResult] = []
    lifted: Optional[LiftedEstimate] = None
    with Timer() as t:
        if method == Method.noncoherent_music:
            spectrum = noncoherent_music(snapshots, geometry, grid, n_sources)

        elif method == Method.genie_phase:
            if true_phases is None:
                raise ArgumentError(f"{method.value} needs the true phases")

            phases = np.asarray(true_phases, dtype=float)
            corrected = phase_correct(snapshots, phases)
            spectrum = coherent_spectrum(
                corrected, dictionary, n_sources, snapshots.noise_var, lam=config.lam
            )

        else:
            lifted = solve_lifted(snapshots, dictionary, config)
            if method == Method.proposed2:
                phases, sync = estimate_phases(lifted, rng=rng)
                corrected = phase_correct(snapshots, phases)
                spectrum = coherent_spectrum(
                    corrected,
                    dictionary,
                    n_sources,
                    snapshots.noise_var,
                    lam=config.lam,
                )

            else:
                use_rank1 = method != Method.proposed1_no_r1
                spectrum = spectrum_proposed1(lifted, grid, use_rank1=use_rank1)

        spectrum = attr.evolve(spectrum, method=method.value)
        estimate = pick_peaks(spectrum, n_sources)

    return MethodResult(
        method=method,
        spectrum=spectrum,
        estimate=estimate,
        phases=phases,
        sync=sync,
        lifted=lifted,
        elapsed=t.elapsed,
    )


def estimate(
    method: Union[Method, str],
    snapshots: SnapshotSet,
    geometry: ArrayGeometry,
    grid: DoaGrid,
    n_sources: int,
    config: Optional[SolverConfig] = None,
    rng: Optional[np.random.Generator] = None,
    true_phases: Optional[np.ndarray] = None,
) -> Tuple[DoaEstimate, Optional[np.ndarray]]:
    """DOA estimate and, for phase-synchronizing methods, the phases (N x L)."""
    result = run_method(
        method,
        snapshots,
        build_dictionary(geometry, grid),
        n_sources,
        config=config,
        rng=rng,
        true_phases=true_phases,
    )
    return result.estimate, result.phases
