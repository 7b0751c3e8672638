"""Sub-array phase synchronization through a semidefinite relaxation.

For every snapshot, maximize Tr(Z^H Z V) over {diag(V) = 1, V >= 0} with an
ADMM that alternates a projected gradient step on the unit-diagonal set
and a projection onto the PSD cone. The phases are read from the dominant
eigenvector of the solution.
"""

from typing import List, Optional, Tuple

import attr
import numpy as np

from noncoherent.doa.array import power_iteration
from noncoherent.doa.enums import ExitReason
from noncoherent.doa.errors import ArgumentError, NumericFailureError
from noncoherent.doa.logger import logger
from noncoherent.doa.prox import project_diag_ones, project_psd
from noncoherent.doa.settings import SyncSettings
from noncoherent.doa.sim import SnapshotSet
from noncoherent.doa.solver import LiftedEstimate
from noncoherent.doa.utils import relative_change, wrap_phase

sync_config = SyncSettings()


@attr.s(frozen=True)
class SyncResult:
    """SDP solution and its dominant eigenpair."""

    V: np.ndarray = attr.ib(eq=False, repr=False)
    eigenvalue: float = attr.ib()
    vector: np.ndarray = attr.ib(eq=False, repr=False)
    # second-to-first eigenvalue ratio
    ratio: float = attr.ib()
    iterations: int = attr.ib(default=0)
    exit_reason: ExitReason = attr.ib(default=ExitReason.converged)
    threshold: float = attr.ib(default=sync_config.tightness)

    @property
    def tight(self) -> bool:
        """Whether the solution is numerically rank one."""
        return self.ratio <= self.threshold


def sdp_objective(Z: np.ndarray, V: np.ndarray) -> float:
    """Tr(Z^H Z V)."""
    Z = np.asarray(Z)
    return float(np.real(np.trace(Z.conj().T @ Z @ V)))


def _unit_diagonal(V: np.ndarray) -> np.ndarray:
    """D^-1/2 V D^-1/2 with D = diag(V); keeps PSD-ness and rank."""
    d = np.real(np.diag(V))
    if np.any(d <= 0):
        return V

    scale = 1.0 / np.sqrt(d)
    V = V * scale[:, None] * scale[None, :]
    np.fill_diagonal(V, 1.0)
    return V


def dominant_pair(V: np.ndarray) -> Tuple[float, np.ndarray, float]:
    """(lambda_1, v_1, lambda_2 / lambda_1) by power iteration and deflation."""
    value, vector = power_iteration(V)
    vector = vector / np.linalg.norm(vector)
    if V.shape[0] == 1 or value <= 0:
        return value, vector, 0.0

    deflated = V - value * np.outer(vector, vector.conj())
    second, _ = power_iteration(deflated, atol=1e-12 * value)
    ratio = float(np.clip(max(second, 0.0) / value, 0.0, 1.0))
    return value, vector, ratio


def solve_phase_sdp(
    Z: np.ndarray,
    rho: float = sync_config.rho,
    rng: Optional[np.random.Generator] = None,
    max_outer: int = sync_config.max_outer,
    max_inner: int = sync_config.max_inner,
    tol: float = sync_config.tol,
    tightness: float = sync_config.tightness,
) -> SyncResult:
    """Solve the phase-synchronization SDP for one lifted block Z (N_theta x L).

    Z^H Z is rescaled to have trace rho * L, which leaves the maximizer
    unchanged. The initial point is g g^T with g standard normal drawn from
    `rng`. The ADMM stops once ||V - V_psd|| and the change of V_psd are both
    below `tol` relative. The returned V is the final PSD iterate rescaled
    to an exact unit diagonal.
    """
    Z = np.asarray(Z)
    if Z.ndim != 2 or Z.shape[1] < 1:
        raise ArgumentError(f"expected a (N_theta x L) block, got shape {Z.shape}")

    if not rho > 0:
        raise ArgumentError(f"rho must be > 0, got {rho}")

    L = Z.shape[1]
    if L == 1:
        one = np.ones((1, 1), dtype=complex)
        return SyncResult(
            V=one,
            eigenvalue=1.0,
            vector=np.ones(1, complex),
            ratio=0.0,
            threshold=tightness,
        )

    H = Z.conj().T @ Z
    H = (H + H.conj().T) / 2
    trace = float(np.real(np.trace(H)))
    if not np.isfinite(trace):
        raise NumericFailureError("non-finite lifted block", stage="sdp")

    if trace > 0:
        H = H * (rho * L / trace)

    rng = rng if rng is not None else np.random.default_rng(0)
    g = rng.standard_normal(L)
    V = np.outer(g, g).astype(complex)
    V_psd = V.copy()
    Y = np.zeros_like(V)

    gamma = 1.0 / rho
    exit_reason = ExitReason.max_iterations
    k = 0
    while k < max_outer:
        k += 1

        # projected gradient on the unit-diagonal set
        anchor = V_psd - Y
        q = 0
        while q < max_inner:
            q += 1
            step = V - gamma * (-H + rho * (V - anchor))
            V_next = project_diag_ones(step)
            r_in = relative_change(V_next, V)
            V = V_next
            if r_in <= tol:
                break

        V_prev = V_psd
        V_psd = project_psd(V + Y)
        Y = Y + V - V_psd
        if not np.isfinite(np.linalg.norm(Y)):
            raise NumericFailureError(
                "non-finite SDP iterate", iteration=k, stage="sdp"
            )

        # primal and dual residuals
        r_primal = relative_change(V, V_psd)
        r_dual = relative_change(V_psd, V_prev)
        if r_primal <= tol and r_dual <= tol:
            exit_reason = ExitReason.converged
            break

    V_hat = _unit_diagonal(V_psd)
    value, vector, ratio = dominant_pair(V_hat)
    logger.debug(
        f"phase SDP: {exit_reason.value} after {k} iterations, ratio={ratio:.3g}"
    )
    return SyncResult(
        V=V_hat,
        eigenvalue=value,
        vector=vector,
        ratio=ratio,
        iterations=k,
        exit_reason=exit_reason,
        threshold=tightness,
    )


def extract_phases(sync: SyncResult) -> np.ndarray:
    """Phases of the dominant eigenvector, wrapped to (-pi, pi].

    A non-tight relaxation still yields the phases of its best rank-one
    approximation.
    """
    if not sync.tight:
        logger.warning(
            f"SDP relaxation is not tight "
            f"(ratio {sync.ratio:.3g} > {sync.threshold:.3g}), "
            "using the rank-one approximation"
        )

    return wrap_phase(np.angle(np.asarray(sync.vector)))


def estimate_phases(
    estimate: LiftedEstimate,
    rng: Optional[np.random.Generator] = None,
    rho: float = sync_config.rho,
    tightness: float = sync_config.tightness,
) -> Tuple[np.ndarray, List[SyncResult]]:
    """Phases (N x L) for every snapshot of a lifted estimate."""
    results = [
        solve_phase_sdp(block, rho=rho, rng=rng, tightness=tightness)
        for block in estimate.blocks()
    ]
    phases = np.stack([extract_phases(result) for result in results])
    return phases, results


def phase_correct(snapshots: SnapshotSet, phases: np.ndarray) -> np.ndarray:
    """Undo the sub-array phases: block l of column n gets exp(+j phi_l(n)).

    Returns the (M x N) coherent observations.
    """
    phases = np.atleast_2d(np.asarray(phases, dtype=float))
    expected = (snapshots.n_snapshots, snapshots.n_subarrays)
    if phases.shape != expected:
        raise ArgumentError(f"phases must have shape {expected}, got {phases.shape}")

    corrected = np.empty_like(snapshots.data, dtype=complex)
    for index, s in enumerate(snapshots.slices):
        corrected[s] = snapshots.data[s] * np.exp(1j * phases[:, index])[None, :]

    return corrected
