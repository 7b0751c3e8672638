"""Joint row-sparse and low-rank lifted solver (ADMM with FISTA inner loop).

The unknowns are stored side by side in a (N_theta x N*L) matrix whose
column n*L + l holds the lifted vector of sub-array l at snapshot n, so
`Z[:, n*L:(n+1)*L]` is the block Z_n of snapshot n.
"""

from pathlib import Path
from typing import Any, List, Optional, Sequence, Tuple, Union

import attr
import numpy as np

from noncoherent.doa.array import Dictionary
from noncoherent.doa.enums import ExitReason
from noncoherent.doa.errors import ArgumentError, NumericFailureError
from noncoherent.doa.logger import logger
from noncoherent.doa.prox import prox_group_l12, prox_nuclear
from noncoherent.doa.settings import SolverSettings
from noncoherent.doa.sim import SnapshotSet
from noncoherent.doa.utils import relative_change, write_csv

solver_config = SolverSettings()

TRACE_COLUMNS = ("iteration", "objective", "inner_iterations", "r_in", "r_out")


def default_lambda(noise_var: float, n_elements: int) -> float:
    """Data-fit weight 1 / (M * sqrt(2 sigma^2 ln(5M)))."""
    if not noise_var > 0:
        raise ArgumentError(
            f"noise variance must be positive to derive lambda, got {noise_var}; "
            "set lambda explicitly for noiseless runs"
        )

    if n_elements < 1:
        raise ArgumentError(f"element count must be >= 1, got {n_elements}")

    return 1.0 / (n_elements * np.sqrt(2 * noise_var * np.log(5 * n_elements)))


def default_gamma(lam: float, rho: float, dictionary: Dictionary) -> float:
    """FISTA step 1 / (lambda * max_l ||A_l^H A_l|| + rho)."""
    return 1.0 / (lam * dictionary.max_norm + rho)


def _non_negative(instance, attribute, value):
    if value is not None and not value >= 0:
        raise ArgumentError(f"{attribute.name} must be >= 0, got {value}")


def _positive(instance, attribute, value):
    if value is not None and not value > 0:
        raise ArgumentError(f"{attribute.name} must be > 0, got {value}")


@attr.s(frozen=True)
class SolverConfig:
    """Hyper-parameters of the lifted solver.

    `lam` and `gamma` are derived from the noise level and the dictionary
    when left to None.
    """

    beta: float = attr.ib(default=solver_config.beta, validator=_non_negative)
    mu: float = attr.ib(default=solver_config.mu, validator=_non_negative)
    rho: float = attr.ib(default=solver_config.rho, validator=_positive)
    lam: Optional[float] = attr.ib(default=None, validator=_non_negative)
    gamma: Optional[float] = attr.ib(default=None, validator=_positive)
    max_outer: int = attr.ib(default=solver_config.max_outer, validator=_positive)
    max_inner: int = attr.ib(default=solver_config.max_inner, validator=_positive)
    tol_outer: float = attr.ib(default=solver_config.tol_outer, validator=_positive)
    tol_inner: float = attr.ib(default=solver_config.tol_inner, validator=_positive)
    feasibility_c: float = attr.ib(
        default=solver_config.feasibility_c, validator=_positive
    )
    trace: bool = attr.ib(default=False)

    def resolve(
        self, snapshots: SnapshotSet, dictionary: Dictionary
    ) -> Tuple[float, float]:
        """Return (lambda, gamma) for a given problem."""
        lam = self.lam
        if lam is None:
            lam = default_lambda(snapshots.noise_var, snapshots.n_elements)

        bound = default_gamma(lam, self.rho, dictionary)
        gamma = bound if self.gamma is None else self.gamma
        if gamma > bound * (1 + 1e-12):
            raise ArgumentError(f"step {gamma} exceeds the stable bound {bound}")

        return float(lam), float(gamma)


@attr.s
class TraceRecord:
    """One outer iteration."""

    iteration: int = attr.ib()
    objective: float = attr.ib()
    inner_iterations: int = attr.ib()
    r_in: float = attr.ib()
    r_out: float = attr.ib()


@attr.s
class LiftedEstimate:
    """Final ADMM iterate and its bookkeeping."""

    Z: np.ndarray = attr.ib(repr=False)
    G: np.ndarray = attr.ib(repr=False)
    Y: np.ndarray = attr.ib(repr=False)
    n_subarrays: int = attr.ib()
    r_out: float = attr.ib()
    r_in: float = attr.ib()
    # ||Z_k - Z_{k-1}|| / ||Z_{k-1}||
    r_dual: float = attr.ib()
    outer_iterations: int = attr.ib()
    inner_iterations: int = attr.ib()
    exit_reason: ExitReason = attr.ib()
    objective: float = attr.ib()
    lam: float = attr.ib()
    gamma: float = attr.ib()
    # C N M sigma^2 minus the misfit of Z, negative when infeasible
    slack: float = attr.ib(default=np.nan)
    trace: List[TraceRecord] = attr.ib(factory=list, repr=False)

    @property
    def n_snapshots(self) -> int:
        """N."""
        return self.Z.shape[1] // self.n_subarrays

    def block(self, n: int) -> np.ndarray:
        """Z_n, the (N_theta x L) block of snapshot n."""
        if not 0 <= n < self.n_snapshots:
            raise ArgumentError(f"snapshot index {n} out of range")

        L = self.n_subarrays
        return self.Z[:, n * L : (n + 1) * L]

    def blocks(self) -> List[np.ndarray]:
        """All Z_n."""
        return [self.block(n) for n in range(self.n_snapshots)]

    def primal_residual(self) -> float:
        """||G - Z|| / ||Z|| recomputed from the stored iterate."""
        return relative_change(self.G, self.Z)


def _check_problem(snapshots: SnapshotSet, dictionary: Dictionary) -> None:
    if tuple(snapshots.partition) != tuple(dictionary.geometry.partition):
        raise ArgumentError(
            f"snapshot partition {snapshots.partition} does not match "
            f"the dictionary partition {dictionary.geometry.partition}"
        )


def _check_lifted(name: str, value: np.ndarray, shape: Tuple[int, int]) -> None:
    if value.shape != shape:
        raise ArgumentError(f"{name} must have shape {shape}, got {value.shape}")


class SmoothPart:
    """lambda * sum ||x_l(n) - A_l g_ln||^2 + rho * ||G - Z + Y||^2.

    A_l^H x_l(n) is computed once; the anchor Z - Y is updated every outer
    iteration.
    """

    def __init__(
        self,
        snapshots: SnapshotSet,
        dictionary: Dictionary,
        lam: float,
        rho: float,
    ):
        """Precompute the back-projected observations."""
        _check_problem(snapshots, dictionary)
        self.snapshots = snapshots
        self.matrices = dictionary.matrices
        self.lam = lam
        self.rho = rho
        self.n_grid = len(dictionary.grid)
        self.n_snapshots = snapshots.n_snapshots
        self.n_subarrays = snapshots.n_subarrays
        self.shape = (self.n_grid, self.n_snapshots * self.n_subarrays)
        self.back_projection = np.empty(
            (self.n_grid, self.n_snapshots, self.n_subarrays), complex
        )
        for index, A in enumerate(self.matrices):
            self.back_projection[:, :, index] = A.conj().T @ snapshots.subarray(index)

        self.anchor = np.zeros(self.shape, dtype=complex)

    def set_anchor(self, Z: np.ndarray, Y: np.ndarray) -> None:
        """Store Z - Y."""
        self.anchor = Z - Y

    def _cube(self, G: np.ndarray) -> np.ndarray:
        return G.reshape(self.n_grid, self.n_snapshots, self.n_subarrays)

    def gradient(self, G: np.ndarray) -> np.ndarray:
        """Wirtinger gradient with respect to conj(G)."""
        cube = self._cube(G)
        out = np.empty_like(cube, dtype=complex)
        for index, A in enumerate(self.matrices):
            out[:, :, index] = A.conj().T @ (A @ cube[:, :, index])

        out -= self.back_projection
        out *= self.lam
        return out.reshape(self.shape) + self.rho * (G - self.anchor)

    def misfit(self, G: np.ndarray) -> float:
        """sum ||x_l(n) - A_l g_ln||^2."""
        cube = self._cube(G)
        total = 0.0
        for index, A in enumerate(self.matrices):
            residual = self.snapshots.subarray(index) - A @ cube[:, :, index]
            total += float(np.vdot(residual, residual).real)

        return total

    def value(self, G: np.ndarray) -> float:
        """Smooth objective at G."""
        diff = G - self.anchor
        return self.lam * self.misfit(G) + self.rho * float(np.vdot(diff, diff).real)


def _row_norm_sum(G: np.ndarray) -> float:
    return float(np.sum(np.linalg.norm(G, axis=1)))


def accelerated_prox_gradient(
    smooth: Any,
    G_init: np.ndarray,
    beta: float,
    gamma: float,
    max_iter: int,
    tol: float,
) -> Tuple[np.ndarray, int, float]:
    """FISTA on `smooth + beta * ||G||_{1,2}` with constant step gamma.

    `smooth.gradient` returns the Wirtinger gradient; rows of G are the
    groups. Returns the last iterate, the iteration count and the last
    relative change.
    """
    previous = G_init
    extrapolated = G_init
    t = 1.0
    r_in = np.inf
    q = 0
    while q < max_iter:
        q += 1
        step = extrapolated - gamma * smooth.gradient(extrapolated)
        current = prox_group_l12(step, beta * gamma)
        if not np.isfinite(np.linalg.norm(current)):
            raise NumericFailureError(
                "non-finite values in the G update", iteration=q, stage="fista"
            )

        t_next = (1 + np.sqrt(1 + 4 * t**2)) / 2
        extrapolated = current + ((t - 1) / t_next) * (current - previous)
        r_in = relative_change(current, previous)
        previous, t = current, t_next
        if r_in <= tol:
            break

    return previous, q, r_in


def wirtinger_gradient(
    G_bar: np.ndarray,
    Z_prev: np.ndarray,
    Y_prev: np.ndarray,
    snapshots: SnapshotSet,
    dictionary: Dictionary,
    lam: float,
    rho: float,
) -> np.ndarray:
    """Gradient of the smooth part of the G sub-problem with respect to conj(G).

    The gradient over the real and imaginary parts is twice this value.
    """
    smooth = SmoothPart(snapshots, dictionary, lam, rho)
    for name, value in (("G", G_bar), ("Z", Z_prev), ("Y", Y_prev)):
        _check_lifted(name, np.asarray(value), smooth.shape)

    smooth.set_anchor(np.asarray(Z_prev), np.asarray(Y_prev))
    return smooth.gradient(np.asarray(G_bar, dtype=complex))


def fista_inner(
    G_init: np.ndarray,
    Z_prev: np.ndarray,
    Y_prev: np.ndarray,
    snapshots: SnapshotSet,
    dictionary: Dictionary,
    config: Optional[SolverConfig] = None,
) -> np.ndarray:
    """Solve the G sub-problem starting from G_init."""
    config = config or SolverConfig()
    lam, gamma = config.resolve(snapshots, dictionary)
    smooth = SmoothPart(snapshots, dictionary, lam, config.rho)
    for name, value in (("G", G_init), ("Z", Z_prev), ("Y", Y_prev)):
        _check_lifted(name, np.asarray(value), smooth.shape)

    smooth.set_anchor(np.asarray(Z_prev), np.asarray(Y_prev))
    G, _, _ = accelerated_prox_gradient(
        smooth,
        np.asarray(G_init, dtype=complex),
        config.beta,
        gamma,
        config.max_inner,
        config.tol_inner,
    )
    return G


def inner_objective(
    G: np.ndarray,
    Z_prev: np.ndarray,
    Y_prev: np.ndarray,
    snapshots: SnapshotSet,
    dictionary: Dictionary,
    beta: float,
    lam: float,
    rho: float,
) -> float:
    """beta * ||G||_{1,2} plus the smooth part of the G sub-problem."""
    smooth = SmoothPart(snapshots, dictionary, lam, rho)
    smooth.set_anchor(np.asarray(Z_prev), np.asarray(Y_prev))
    return beta * _row_norm_sum(G) + smooth.value(np.asarray(G))


def data_misfit(Z: np.ndarray, snapshots: SnapshotSet, dictionary: Dictionary) -> float:
    """sum_{n,l} ||x_l(n) - A_l Z_n[:, l]||^2."""
    smooth = SmoothPart(snapshots, dictionary, 0.0, 0.0)
    _check_lifted("Z", np.asarray(Z), smooth.shape)
    return smooth.misfit(np.asarray(Z))


def _nuclear_sum(Z: np.ndarray, n_subarrays: int) -> float:
    total = 0.0
    for start in range(0, Z.shape[1], n_subarrays):
        block = Z[:, start : start + n_subarrays]
        total += float(np.sum(np.linalg.svd(block, compute_uv=False)))

    return total


def penalized_objective(
    Z: np.ndarray,
    snapshots: SnapshotSet,
    dictionary: Dictionary,
    beta: float,
    mu: float,
    lam: float,
) -> float:
    """beta ||Z||_{1,2} + mu sum_n ||Z_n||_* + lambda * data misfit."""
    Z = np.asarray(Z)
    return (
        beta * _row_norm_sum(Z)
        + mu * _nuclear_sum(Z, snapshots.n_subarrays)
        + lam * data_misfit(Z, snapshots, dictionary)
    )


def constraint_slack(
    Z: np.ndarray,
    snapshots: SnapshotSet,
    dictionary: Dictionary,
    c: float = solver_config.feasibility_c,
) -> float:
    """C * N * M * sigma^2 minus the data misfit.

    Non-negative when the constrained form is feasible.
    """
    budget = c * snapshots.n_snapshots * snapshots.n_elements * snapshots.noise_var
    return budget - data_misfit(Z, snapshots, dictionary)


def solve_lifted(
    snapshots: SnapshotSet,
    dictionary: Dictionary,
    config: Optional[SolverConfig] = None,
) -> LiftedEstimate:
    """Minimize the penalized joint sparse and low-rank program.

    G, Z and the scaled dual Y start at zero. Every outer iteration runs
    FISTA on G (warm started), shrinks the singular values of each
    G_n + Y_n by mu / (2 rho) and takes a dual step. Stops once both
    ||G - Z|| and the change of Z are below `tol_outer` relative.
    """
    config = config or SolverConfig()
    lam, gamma = config.resolve(snapshots, dictionary)
    smooth = SmoothPart(snapshots, dictionary, lam, config.rho)
    L = snapshots.n_subarrays

    G = np.zeros(smooth.shape, dtype=complex)
    Z = np.zeros_like(G)
    Y = np.zeros_like(G)

    trace: List[TraceRecord] = []
    exit_reason = ExitReason.max_iterations
    r_out = r_in = r_dual = np.inf
    inner_total = 0
    k = 0
    while k < config.max_outer:
        k += 1
        smooth.set_anchor(Z, Y)
        try:
            G, q, r_in = accelerated_prox_gradient(
                smooth, G, config.beta, gamma, config.max_inner, config.tol_inner
            )
        except NumericFailureError as e:
            raise NumericFailureError(str(e), iteration=k, stage="fista") from e

        inner_total += q

        Z_prev = Z
        shifted = G + Y
        Z = np.empty_like(G)
        for start in range(0, G.shape[1], L):
            Z[:, start : start + L] = prox_nuclear(
                shifted[:, start : start + L], config.mu / config.rho
            )

        Y = Y + G - Z
        if not np.isfinite(np.linalg.norm(Y)):
            raise NumericFailureError(
                "non-finite dual variable", iteration=k, stage="admm"
            )

        r_out = relative_change(G, Z)
        r_dual = relative_change(Z, Z_prev)
        if config.trace:
            trace.append(
                TraceRecord(
                    iteration=k,
                    objective=penalized_objective(
                        Z, snapshots, dictionary, config.beta, config.mu, lam
                    ),
                    inner_iterations=q,
                    r_in=r_in,
                    r_out=r_out,
                )
            )

        if r_out <= config.tol_outer and r_dual <= config.tol_outer:
            exit_reason = ExitReason.converged
            break

    objective = penalized_objective(
        Z, snapshots, dictionary, config.beta, config.mu, lam
    )
    slack = constraint_slack(Z, snapshots, dictionary, c=config.feasibility_c)
    logger.debug(
        f"lifted solver: {exit_reason.value} after {k} outer / {inner_total} inner "
        f"iterations, r_out={r_out:.3g}, objective={objective:.6g}, "
        f"slack={slack:.3g}"
    )

    return LiftedEstimate(
        Z=Z,
        G=G,
        Y=Y,
        n_subarrays=L,
        r_out=r_out,
        r_in=r_in,
        r_dual=r_dual,
        outer_iterations=k,
        inner_iterations=inner_total,
        exit_reason=exit_reason,
        objective=objective,
        lam=lam,
        gamma=gamma,
        slack=slack,
        trace=trace,
    )


def write_trace(
    path: Union[str, Path], trace: Sequence[TraceRecord], header: Sequence[str] = ()
) -> Path:
    """Write the per-iteration trace as CSV."""
    rows = (
        (
            r.iteration,
            repr(r.objective),
            r.inner_iterations,
            repr(r.r_in),
            repr(r.r_out),
        )
        for r in trace
    )
    return write_csv(path, header, TRACE_COLUMNS, rows)
