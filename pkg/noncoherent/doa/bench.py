"""Monte Carlo RMSE-vs-SNR experiments."""

from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import attr
import numpy as np
from pydantic import BaseModel, Field
from scipy.optimize import linear_sum_assignment
from typing_extensions import Annotated

from noncoherent.doa.array import build_dictionary
from noncoherent.doa.enums import Method
from noncoherent.doa.errors import ArgumentError, NumericFailureError
from noncoherent.doa.estimators import DoaEstimate, run_method
from noncoherent.doa.logger import logger
from noncoherent.doa.settings import BenchSettings
from noncoherent.doa.sim import Scenario, simulate
from noncoherent.doa.solver import SolverConfig
from noncoherent.doa.utils import wrap_phase, write_csv

bench_config = BenchSettings()

RESULT_COLUMNS = (
    "method",
    "snr_db",
    "rmse_doa_deg",
    "rmse_phase_rad",
    "n_trials",
    "n_failed",
    "mean_time_s",
    "max_tightness_ratio",
    "n_non_tight",
)


def _angles(value: Union[DoaEstimate, Sequence[float], np.ndarray]) -> np.ndarray:
    if isinstance(value, DoaEstimate):
        return np.asarray(value.angles, dtype=float)

    return np.asarray(value, dtype=float).reshape(-1)


def rmse_doa(
    estimates: Sequence[Union[DoaEstimate, Sequence[float]]],
    truths: Sequence[Sequence[float]],
) -> float:
    """DOA RMSE in degrees.

    Estimated and true angles of each trial are paired by the assignment
    that minimizes the total squared error.
    """
    if len(estimates) != len(truths):
        raise ArgumentError(f"{len(estimates)} estimates for {len(truths)} truths")

    if not estimates:
        return float("nan")

    total, count = 0.0, 0
    for estimate, truth in zip(estimates, truths):
        est, ref = _angles(estimate), _angles(truth)
        if est.size != ref.size:
            raise ArgumentError(f"expected {ref.size} estimated angles, got {est.size}")

        cost = (est[:, None] - ref[None, :]) ** 2
        rows, cols = linear_sum_assignment(cost)
        total += float(cost[rows, cols].sum())
        count += ref.size

    return float(np.sqrt(total / count))


def rmse_phase(estimates: Sequence[np.ndarray], truths: Sequence[np.ndarray]) -> float:
    """Phase RMSE in radians, blind to 2 pi and to a per-snapshot common shift.

    Each snapshot's differences lose their circular mean before wrapping.
    """
    if len(estimates) != len(truths):
        raise ArgumentError(f"{len(estimates)} estimates for {len(truths)} truths")

    if not estimates:
        return float("nan")

    squares = []
    for estimate, truth in zip(estimates, truths):
        est = np.atleast_2d(np.asarray(estimate, dtype=float))
        ref = np.atleast_2d(np.asarray(truth, dtype=float))
        if est.shape != ref.shape:
            raise ArgumentError(f"phase shapes differ: {est.shape} vs {ref.shape}")

        diff = est - ref
        shift = np.angle(np.sum(np.exp(1j * diff), axis=1, keepdims=True))
        squares.append(wrap_phase(diff - shift).ravel() ** 2)

    return float(np.sqrt(np.mean(np.concatenate(squares))))


@attr.s(frozen=True)
class ExperimentPlan:
    """SNR sweep of one scenario over a set of methods."""

    scenario: Scenario = attr.ib()
    snrs: Tuple[float, ...] = attr.ib(converter=lambda v: tuple(float(s) for s in v))
    methods: Tuple[Method, ...] = attr.ib(
        converter=lambda v: tuple(Method(m) for m in v)
    )
    n_trials: int = attr.ib(default=bench_config.trials)
    seed: int = attr.ib(default=0)
    parallel: int = attr.ib(default=bench_config.parallel)
    solver: SolverConfig = attr.ib(factory=SolverConfig)

    @snrs.validator
    def _check_snrs(self, attribute, value):
        if not value:
            raise ArgumentError("a plan needs at least one SNR")

        if not all(np.isfinite(value)):
            raise ArgumentError(f"SNRs must be finite, got {value}")

    @methods.validator
    def _check_methods(self, attribute, value):
        if not value:
            raise ArgumentError("a plan needs at least one method")

    @n_trials.validator
    def _check_trials(self, attribute, value):
        if value < 1:
            raise ArgumentError(f"n_trials must be >= 1, got {value}")

    @parallel.validator
    def _check_parallel(self, attribute, value):
        if value < 1:
            raise ArgumentError(f"parallel must be >= 1, got {value}")


class ResultRow(BaseModel):
    """Aggregated outcome of one method at one SNR."""

    method: Method
    snr_db: float
    rmse_doa_deg: Annotated[
        float, Field(description="DOA RMSE over successful trials.")
    ]
    n_trials: Annotated[int, Field(ge=0)]
    rmse_phase_rad: Annotated[
        Optional[float],
        Field(description="Phase RMSE, only for methods estimating the phases."),
    ] = None
    n_failed: Annotated[
        int, Field(ge=0, description="Trials excluded after a numeric failure.")
    ] = 0
    mean_time_s: Annotated[
        float,
        Field(description="Mean wall time per trial, not reproducible."),
    ] = 0.0
    max_tightness_ratio: Optional[float] = None
    n_non_tight: Annotated[int, Field(ge=0)] = 0

    model_config = {"use_enum_values": True}

    def to_record(self) -> Tuple:
        """CSV cells in column order."""

        def cell(value):
            return "" if value is None else repr(float(value))

        return (
            self.method,
            repr(self.snr_db),
            cell(self.rmse_doa_deg),
            cell(self.rmse_phase_rad),
            self.n_trials,
            self.n_failed,
            cell(self.mean_time_s),
            cell(self.max_tightness_ratio),
            self.n_non_tight,
        )


@attr.s
class ResultTable:
    """Rows of a plan, ordered by SNR then method."""

    rows: List[ResultRow] = attr.ib(factory=list)

    @property
    def n_failed(self) -> int:
        """Total excluded trials."""
        return sum(row.n_failed for row in self.rows)

    def to_csv(self, path: Union[str, Path], header: Sequence[str] = ()) -> Path:
        """Write the table."""
        records = (row.to_record() for row in self.rows)
        return write_csv(path, header, RESULT_COLUMNS, records)


@attr.s
class TrialOutcome:
    """One method on one realization."""

    angles: Optional[np.ndarray] = attr.ib(default=None)
    phases: Optional[np.ndarray] = attr.ib(default=None)
    elapsed: float = attr.ib(default=0.0)
    max_ratio: Optional[float] = attr.ib(default=None)
    n_non_tight: int = attr.ib(default=0)
    failed: bool = attr.ib(default=False)


def trial_seeds(
    seed: int, snr_index: int, trial: int
) -> Tuple[np.random.SeedSequence, ...]:
    """Independent (simulation, solver) seed sequences of one trial."""
    root = np.random.SeedSequence(entropy=seed, spawn_key=(snr_index, trial))
    return tuple(root.spawn(2))


def run_trial(
    plan: ExperimentPlan, snr_index: int, trial: int
) -> Tuple[np.ndarray, np.ndarray, Dict[Method, TrialOutcome]]:
    """Simulate one realization and run every method on it."""
    sim_seed, solver_seed = trial_seeds(plan.seed, snr_index, trial)
    scenario = attr.evolve(plan.scenario, snr_db=plan.snrs[snr_index])
    dictionary = build_dictionary(scenario.geometry, scenario.grid)
    snapshots, truth = simulate(scenario, np.random.default_rng(sim_seed))

    outcomes: Dict[Method, TrialOutcome] = {}
    for method in plan.methods:
        try:
            result = run_method(
                method,
                snapshots,
                dictionary,
                scenario.n_sources,
                config=plan.solver,
                rng=np.random.default_rng(solver_seed),
                true_phases=truth.phases,
            )
        except (NumericFailureError, np.linalg.LinAlgError) as e:
            logger.warning(
                f"{method.value} failed at SNR {scenario.snr_db} dB, trial {trial}: {e}"
            )
            outcomes[method] = TrialOutcome(failed=True)
            continue

        outcomes[method] = TrialOutcome(
            angles=result.estimate.angles,
            phases=result.phases if result.sync else None,
            elapsed=result.elapsed,
            max_ratio=result.max_ratio,
            n_non_tight=result.n_non_tight,
        )

    return truth.doas, truth.phases, outcomes


def _aggregate(
    method: Method,
    snr: float,
    trials: List[Tuple[np.ndarray, np.ndarray, Dict[Method, TrialOutcome]]],
) -> ResultRow:
    ok = [
        (doas, phases, out[method])
        for doas, phases, out in trials
        if not out[method].failed
    ]
    n_failed = len(trials) - len(ok)

    rmse = rmse_doa([o.angles for _, _, o in ok], [doas for doas, _, _ in ok])
    with_phases = [(phases, o.phases) for _, phases, o in ok if o.phases is not None]
    rmse_ph = None
    if with_phases:
        rmse_ph = rmse_phase([p for _, p in with_phases], [t for t, _ in with_phases])

    ratios = [o.max_ratio for _, _, o in ok if o.max_ratio is not None]
    mean_time = float(np.mean([o.elapsed for _, _, o in ok])) if ok else float("nan")
    return ResultRow(
        method=method,
        snr_db=snr,
        rmse_doa_deg=rmse,
        rmse_phase_rad=rmse_ph,
        n_trials=len(trials),
        n_failed=n_failed,
        mean_time_s=mean_time,
        max_tightness_ratio=max(ratios) if ratios else None,
        n_non_tight=sum(o.n_non_tight for _, _, o in ok),
    )


def run_plan(plan: ExperimentPlan) -> ResultTable:
    """Run every (SNR, trial) of a plan and aggregate per method and SNR.

    Trial seeds derive from (seed, SNR index, trial index), so results do not
    depend on the degree of parallelism.
    """
    tasks = [(s, t) for s in range(len(plan.snrs)) for t in range(plan.n_trials)]
    total = len(tasks)
    results = []
    with ThreadPoolExecutor(max_workers=plan.parallel) as executor:
        outputs = executor.map(lambda task: run_trial(plan, *task), tasks)
        for done, output in enumerate(outputs, start=1):
            results.append(output)
            logger.info(f"bench: {done}/{total} trials")

    table = ResultTable()
    for snr_index, snr in enumerate(plan.snrs):
        trials = results[snr_index * plan.n_trials : (snr_index + 1) * plan.n_trials]
        for method in plan.methods:
            row = _aggregate(method, snr, trials)
            if row.n_failed:
                logger.warning(
                    f"{method.value} at SNR {snr} dB: "
                    f"{row.n_failed}/{row.n_trials} trials excluded"
                )

            table.rows.append(row)

    return table
