"""noncoherent-doa command line application."""

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import attr
import jinja2
import numpy as np
from pydantic import ValidationError

from noncoherent.doa import __version__
from noncoherent.doa.array import build_dictionary
from noncoherent.doa.bench import ExperimentPlan, run_plan, trial_seeds
from noncoherent.doa.enums import Method
from noncoherent.doa.errors import DoaError, UsageError, exit_code
from noncoherent.doa.estimators import run_method
from noncoherent.doa.logger import logger
from noncoherent.doa.models import (
    PRESET_ALIASES,
    RunConfig,
    list_presets,
    load_config,
    preset_text,
)
from noncoherent.doa.settings import BenchSettings, OutputSettings
from noncoherent.doa.sim import dump_ground_truth, dump_snapshots, simulate
from noncoherent.doa.solver import write_trace
from noncoherent.doa.utils import comment_header, dumps

bench_config = BenchSettings()
output_config = OutputSettings()

jinja2_env = jinja2.Environment(
    loader=jinja2.PackageLoader(__package__, "templates"),
    keep_trailing_newline=True,
)

DEFAULT_CONFIG = "two-sources"


class _Parser(argparse.ArgumentParser):
    """ArgumentParser raising UsageError instead of exiting."""

    def error(self, message: str):  # type: ignore[override]
        """Raise a usage error."""
        raise UsageError(f"{self.prog}: {message}")


def _method(value: str) -> Method:
    try:
        return Method(value)
    except ValueError:
        choices = ", ".join(m.value for m in Method)
        raise argparse.ArgumentTypeError(
            f"unknown method {value!r}, available: {choices}"
        ) from None


def output_dir(args: argparse.Namespace, config: RunConfig) -> Path:
    """Output directory: --out, then the environment, then the config file."""
    if args.out:
        path = Path(args.out)
    elif "output_dir" in output_config.model_fields_set:
        path = Path(output_config.output_dir)
    elif config.output_dir:
        path = Path(config.output_dir)
    else:
        path = Path(output_config.output_dir)

    path.mkdir(parents=True, exist_ok=True)
    return path


def _seed(args: argparse.Namespace, config: RunConfig) -> int:
    return args.seed if args.seed is not None else config.plan.seed


def _header(config: RunConfig, seed: int, **metadata: Any) -> List[str]:
    return comment_header(
        config=config.name or "",
        config_hash=config.digest(),
        seed=seed,
        settings=dumps(config.settings()).decode(),
        **metadata,
    )


def _methods(args: argparse.Namespace, config: RunConfig) -> List[Method]:
    methods = list(args.method) if args.method else list(config.plan.methods)
    if not methods:
        raise UsageError("no method selected")

    return methods


def cmd_simulate(args: argparse.Namespace, config: RunConfig) -> int:
    """Simulate one realization and dump snapshots and ground truth."""
    seed = _seed(args, config)
    scenario = config.build_scenario()
    sim_seed, _ = trial_seeds(seed, 0, 0)
    snapshots, truth = simulate(scenario, np.random.default_rng(sim_seed))

    out = output_dir(args, config)
    header = {
        "config": config.name or "",
        "config_hash": config.digest(),
        "seed": seed,
        "settings": dumps(config.settings()).decode(),
        "snr_db": repr(scenario.snr_db),
    }
    path = dump_snapshots(out / "snapshots.csv", snapshots, **header)
    logger.info(f"wrote {path}")
    path = dump_ground_truth(out / "ground_truth.json", truth, **header)
    logger.info(f"wrote {path}")
    return 0


def cmd_spectrum(args: argparse.Namespace, config: RunConfig) -> int:
    """Compute the spectrum of each method on one realization."""
    seed = _seed(args, config)
    methods = _methods(args, config)
    scenario = config.build_scenario()
    solver = config.solver.build()
    if args.verbose > 1:
        solver = attr.evolve(solver, trace=True)

    sim_seed, solver_seed = trial_seeds(seed, 0, 0)
    snapshots, truth = simulate(scenario, np.random.default_rng(sim_seed))
    dictionary = build_dictionary(scenario.geometry, scenario.grid)

    out = output_dir(args, config)
    spectra = []
    for method in methods:
        result = run_method(
            method,
            snapshots,
            dictionary,
            scenario.n_sources,
            config=solver,
            rng=np.random.default_rng(solver_seed),
            true_phases=truth.phases,
        )
        filename = f"spectrum_{method.value}.csv"
        metadata = {
            "method": method.value,
            "snr_db": repr(scenario.snr_db),
            "estimate_deg": " ".join(repr(a) for a in result.estimate.angles),
        }
        lifted = result.lifted
        if lifted is not None:
            metadata["exit_reason"] = lifted.exit_reason.value
            metadata["constraint_slack"] = repr(lifted.slack)
            if lifted.slack < 0:
                logger.info(
                    f"{method.value}: final iterate misses the noise budget "
                    f"by {-lifted.slack:.3g}"
                )

        header = _header(config, seed, **metadata)
        path = result.spectrum.to_csv(out / filename, header=header)
        logger.info(f"wrote {path}")
        if lifted is not None and solver.trace:
            path = write_trace(
                out / f"trace_{method.value}.csv", lifted.trace, header=header
            )
            logger.info(f"wrote {path}")

        spectra.append((method.value, filename))

    script = "plot_spectrum.py"
    template = jinja2_env.get_template("spectrum.py.jinja")
    (out / script).write_text(
        template.render(
            name=config.name or "scenario",
            seed=seed,
            snr_db=scenario.snr_db,
            version=__version__,
            config_hash=config.digest(),
            script=script,
            spectra=spectra,
            doas=[float(d) for d in truth.doas],
            figure="spectrum.png",
        )
    )
    logger.info(f"wrote {out / script}")
    return 0


def cmd_bench(args: argparse.Namespace, config: RunConfig) -> int:
    """Run the Monte Carlo RMSE-vs-SNR sweep."""
    seed = _seed(args, config)
    methods = _methods(args, config)
    if args.trials is not None:
        n_trials = args.trials
    elif args.full:
        n_trials = bench_config.full_trials
    else:
        n_trials = config.plan.trials or bench_config.trials

    parallel = args.parallel or config.plan.parallel or bench_config.parallel
    plan = ExperimentPlan(
        scenario=config.build_scenario(),
        snrs=config.plan.snrs,
        methods=methods,
        n_trials=n_trials,
        seed=seed,
        parallel=parallel,
        solver=config.solver.build(),
    )
    logger.info(
        f"bench: {len(plan.methods)} methods, {len(plan.snrs)} SNRs, "
        f"{plan.n_trials} trials each"
    )
    table = run_plan(plan)

    out = output_dir(args, config)
    filename = "results.csv"
    path = table.to_csv(out / filename, header=_header(config, seed, trials=n_trials))
    logger.info(f"wrote {path}")

    script = "plot_rmse.py"
    template = jinja2_env.get_template("rmse.py.jinja")
    (out / script).write_text(
        template.render(
            name=config.name or "scenario",
            n_trials=n_trials,
            seed=seed,
            version=__version__,
            config_hash=config.digest(),
            script=script,
            table=filename,
            figure="rmse.png",
        )
    )
    logger.info(f"wrote {out / script}")

    if table.n_failed:
        logger.error(f"{table.n_failed} trials failed and were excluded")
        return 2

    return 0


def cmd_presets(args: argparse.Namespace) -> int:
    """List bundled presets or print one."""
    if args.show:
        sys.stdout.write(preset_text(args.show))
        return 0

    presets = list_presets()
    aliases: Dict[str, List[str]] = {}
    for alias, name in PRESET_ALIASES.items():
        aliases.setdefault(name, []).append(alias)

    width = max((len(name) for name in presets), default=0)
    for name, description in presets.items():
        if name in aliases:
            description = f"{description} (alias: {', '.join(aliases[name])})"

        sys.stdout.write(f"{name:<{width}}  {description}\n")

    return 0


COMMANDS: Dict[str, Any] = {
    "simulate": cmd_simulate,
    "spectrum": cmd_spectrum,
    "bench": cmd_bench,
}


def parser() -> argparse.ArgumentParser:
    """Command line parser."""
    common = _Parser(add_help=False)
    common.add_argument(
        "--config",
        default=DEFAULT_CONFIG,
        help="TOML run configuration, or the name of a bundled preset.",
    )
    common.add_argument("--seed", type=int, help="Override the plan seed.")
    common.add_argument("--out", help="Output directory.")
    common.add_argument(
        "-v", "--verbose", action="count", default=0, help="-v info, -vv debug."
    )

    methods = _Parser(add_help=False)
    methods.add_argument(
        "--method",
        action="append",
        type=_method,
        help="Estimator to run (repeatable), defaults to the plan methods.",
    )

    main_parser = _Parser(
        prog="noncoherent-doa",
        description="DOA estimation with non-coherent sub-arrays.",
    )
    main_parser.add_argument("--version", action="version", version=__version__)
    sub = main_parser.add_subparsers(
        dest="command", required=True, parser_class=_Parser
    )

    sub.add_parser(
        "simulate", parents=[common], help="Dump one simulated realization."
    )
    sub.add_parser(
        "spectrum", parents=[common, methods], help="Spectra of one realization."
    )
    bench = sub.add_parser(
        "bench", parents=[common, methods], help="RMSE vs. SNR Monte Carlo."
    )
    bench.add_argument("--trials", type=int, help="Trials per SNR.")
    bench.add_argument(
        "--full",
        action="store_true",
        help=f"Use {bench_config.full_trials} trials per SNR.",
    )
    bench.add_argument("--parallel", type=int, help="Worker threads.")

    presets = sub.add_parser("presets", help="List bundled presets.")
    presets.add_argument("--show", metavar="NAME", help="Print one preset.")
    presets.add_argument("-v", "--verbose", action="count", default=0)

    return main_parser


def _run(argv: Optional[Sequence[str]]) -> int:
    args = parser().parse_args(argv)

    level = logging.WARNING
    if args.verbose == 1:
        level = logging.INFO
    elif args.verbose > 1:
        level = logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")

    if args.command == "presets":
        return cmd_presets(args)

    if getattr(args, "trials", None) is not None and args.trials < 1:
        raise UsageError(f"--trials must be >= 1, got {args.trials}")

    if getattr(args, "parallel", None) is not None and args.parallel < 1:
        raise UsageError(f"--parallel must be >= 1, got {args.parallel}")

    config = load_config(args.config)
    return COMMANDS[args.command](args, config)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point, returns the process exit code."""
    try:
        return _run(argv)
    except (DoaError, ValidationError, OSError) as e:
        logger.error(str(e))
        return exit_code(e)


if __name__ == "__main__":
    sys.exit(main())
