"""Run configuration models (TOML files and bundled presets)."""

import sys
from importlib.resources import files
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import attr
from pydantic import BaseModel, Field, ValidationError, model_validator
from typing_extensions import Annotated

from noncoherent.doa.array import ArrayGeometry, DoaGrid
from noncoherent.doa.enums import Method, SnrConvention
from noncoherent.doa.errors import UsageError
from noncoherent.doa.estimators import sparse_config
from noncoherent.doa.settings import BenchSettings
from noncoherent.doa.sim import Scenario
from noncoherent.doa.solver import SolverConfig
from noncoherent.doa.sync import sync_config
from noncoherent.doa.utils import config_hash

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

bench_config = BenchSettings()

PRESETS = files(__package__).joinpath("presets")

# numbered names of the published scenarios
PRESET_ALIASES = {
    "fig1": "two-sources",
    "fig2": "four-sources",
    "fig6": "four-sources-n5",
    "fig7": "four-sources-n25",
    "fig8": "dense-n5",
    "fig9": "dense-n25",
}


class GeometryConfig(BaseModel):
    """[geometry] section: explicit positions or a ULA shorthand."""

    wavelength: Annotated[
        float, Field(gt=0, description="Carrier wavelength in meters.")
    ] = 1.0
    count: Annotated[
        Optional[int],
        Field(ge=1, description="Number of elements of a uniform linear array."),
    ] = None
    spacing: Annotated[
        float, Field(gt=0, description="ULA element spacing, in wavelengths.")
    ] = 0.5
    positions: Annotated[
        Optional[List[Tuple[float, float]]],
        Field(description="Element (x, y) positions in meters."),
    ] = None
    partition: Annotated[
        List[Annotated[int, Field(ge=1)]],
        Field(min_length=1, description="Sub-array sizes, in element order."),
    ]

    model_config = {"extra": "forbid"}

    @model_validator(mode="after")
    def check_elements(self):
        """Exactly one way of describing the elements."""
        if (self.count is None) == (self.positions is None):
            raise ValueError("set either `count` (ULA) or `positions`")

        return self

    def build(self) -> ArrayGeometry:
        """Array geometry."""
        if self.count is not None:
            return ArrayGeometry.ula(
                self.count, self.spacing, self.partition, wavelength=self.wavelength
            )

        return ArrayGeometry(
            wavelength=self.wavelength,
            positions=self.positions,
            partition=self.partition,
        )


class ScenarioConfig(BaseModel):
    """[scenario] section."""

    doas: Annotated[
        List[float], Field(min_length=1, description="Base DOAs in degrees.")
    ]
    n_snapshots: Annotated[int, Field(ge=1)] = 1
    snr_db: Annotated[
        float, Field(description="SNR per antenna for single runs.")
    ] = 20.0
    grid_start: float = -45.0
    grid_stop: float = 45.0
    grid_step: Annotated[float, Field(gt=0)] = 0.1
    perturbation: Annotated[
        Optional[float],
        Field(ge=0, description="DOA jitter width in degrees, grid step if unset."),
    ] = None
    snr_convention: SnrConvention = bench_config.snr_convention

    model_config = {"extra": "forbid"}

    def build(self, geometry: ArrayGeometry) -> Scenario:
        """Scenario on a geometry."""
        return Scenario(
            geometry=geometry,
            grid=DoaGrid(self.grid_start, self.grid_stop, self.grid_step),
            doas=self.doas,
            n_snapshots=self.n_snapshots,
            snr_db=self.snr_db,
            perturbation=self.perturbation,
            snr_convention=self.snr_convention,
        )


class PlanConfig(BaseModel):
    """[plan] section."""

    snrs: Annotated[List[float], Field(min_length=1)] = [0.0, 10.0, 20.0, 30.0]
    methods: List[Method] = [
        Method.proposed1,
        Method.proposed2,
        Method.noncoherent_music,
    ]
    trials: Annotated[Optional[int], Field(ge=1)] = None
    seed: int = 0
    parallel: Annotated[Optional[int], Field(ge=1)] = None

    model_config = {"extra": "forbid"}


class SolverOverrides(BaseModel):
    """[solver] section; unset keys keep the library defaults."""

    beta: Annotated[Optional[float], Field(ge=0)] = None
    mu: Annotated[Optional[float], Field(ge=0)] = None
    rho: Annotated[Optional[float], Field(gt=0)] = None
    lam: Annotated[Optional[float], Field(ge=0)] = None
    gamma: Annotated[Optional[float], Field(gt=0)] = None
    max_outer: Annotated[Optional[int], Field(ge=1)] = None
    max_inner: Annotated[Optional[int], Field(ge=1)] = None
    tol_outer: Annotated[Optional[float], Field(gt=0)] = None
    tol_inner: Annotated[Optional[float], Field(gt=0)] = None
    feasibility_c: Annotated[Optional[float], Field(gt=0)] = None
    # per-iteration trace CSV from `spectrum`, also on with -vv
    trace: Optional[bool] = None

    model_config = {"extra": "forbid"}

    def build(self) -> SolverConfig:
        """Solver configuration."""
        return SolverConfig(**self.model_dump(exclude_none=True))


class RunConfig(BaseModel):
    """A complete run configuration."""

    name: Optional[str] = None
    description: Optional[str] = None
    output_dir: Optional[str] = None
    geometry: GeometryConfig
    scenario: ScenarioConfig
    plan: PlanConfig = PlanConfig()
    solver: SolverOverrides = SolverOverrides()

    model_config = {"extra": "forbid"}

    def settings(self) -> Dict[str, Any]:
        """Resolved solver, sync and sparse settings, env overrides included."""
        solver = attr.asdict(
            self.solver.build(), filter=lambda a, _: a.name != "trace"
        )
        return {
            "solver": solver,
            "sync": sync_config.model_dump(),
            "sparse": sparse_config.model_dump(),
        }

    def digest(self) -> str:
        """sha256 of the validated configuration and the resolved settings."""
        return config_hash(
            {"config": self.model_dump(mode="json"), "settings": self.settings()}
        )

    def build_scenario(self) -> Scenario:
        """Scenario with its geometry."""
        return self.scenario.build(self.geometry.build())


def list_presets() -> Dict[str, str]:
    """Bundled preset names and descriptions."""
    presets = {}
    for entry in sorted(PRESETS.iterdir(), key=lambda p: p.name):
        if entry.name.endswith(".toml"):
            data = tomllib.loads(entry.read_text())
            presets[entry.name[: -len(".toml")]] = data.get("description", "")

    return presets


def preset_text(name: str) -> str:
    """Raw TOML of a bundled preset, by name or numbered alias."""
    name = PRESET_ALIASES.get(name, name)
    entry = PRESETS.joinpath(f"{name}.toml")
    if not entry.is_file():
        raise UsageError(
            f"unknown preset {name!r}, available: {', '.join(list_presets())}"
        )

    return entry.read_text()


def parse_config(data: Dict[str, Any]) -> RunConfig:
    """Validate a parsed TOML document."""
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise UsageError(f"invalid configuration:\n{e}") from e


def load_config(source: Union[str, Path]) -> RunConfig:
    """Load a TOML file, or a bundled preset when no such file exists."""
    path = Path(source)
    if path.is_file():
        text = path.read_text()
    else:
        text = preset_text(str(source))

    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise UsageError(f"{source}: {e}") from e

    return parse_config(data)
