"""noncoherent-doa settings."""

from pydantic import Field, model_validator
from pydantic_settings import BaseSettings
from typing_extensions import Annotated

from noncoherent.doa.enums import SnrConvention


class SolverSettings(BaseSettings):
    """Lifted solver (ADMM + FISTA) settings."""

    # row-sparsity and low-rank weights
    beta: Annotated[float, Field(ge=0.0)] = 0.1
    mu: Annotated[float, Field(ge=0.0)] = 0.9

    # ADMM penalty
    rho: Annotated[float, Field(gt=0.0)] = 10.0

    max_outer: Annotated[int, Field(ge=1)] = 250
    max_inner: Annotated[int, Field(ge=1)] = 1000
    tol_outer: Annotated[float, Field(gt=0.0)] = 5e-6
    tol_inner: Annotated[float, Field(gt=0.0)] = 5e-6

    # constant of the constrained form, only used for feasibility reports
    feasibility_c: Annotated[float, Field(gt=0.0)] = 2.0

    model_config = {
        "env_prefix": "NONCOHERENT_DOA_SOLVER_",
        "env_file": ".env",
        "extra": "ignore",
    }


class SyncSettings(BaseSettings):
    """Phase synchronization (SDP) settings."""

    rho: Annotated[float, Field(gt=0.0)] = 10.0
    max_outer: Annotated[int, Field(ge=1)] = 250
    max_inner: Annotated[int, Field(ge=1)] = 1000
    tol: Annotated[float, Field(gt=0.0)] = 5e-6

    # second-to-first eigenvalue ratio above which the relaxation is not tight
    tightness: Annotated[float, Field(gt=0.0)] = 1e-6

    model_config = {
        "env_prefix": "NONCOHERENT_DOA_SYNC_",
        "env_file": ".env",
        "extra": "ignore",
    }


class SparseSettings(BaseSettings):
    """Coherent sparse recovery settings."""

    tol: Annotated[float, Field(gt=0.0)] = 5e-6
    max_iter: Annotated[int, Field(ge=1)] = 10000

    model_config = {
        "env_prefix": "NONCOHERENT_DOA_SPARSE_",
        "env_file": ".env",
        "extra": "ignore",
    }


class CacheSettings(BaseSettings):
    """Cache settings"""

    # Maximum number of dictionaries kept in memory
    maxsize: int = 32

    # Whether or not caching is enabled
    disable: bool = False

    model_config = {
        "env_prefix": "NONCOHERENT_DOA_CACHE_",
        "env_file": ".env",
        "extra": "ignore",
    }

    @model_validator(mode="after")
    def check_enable(self):
        """Check if cache is disabled."""
        if self.disable:
            self.maxsize = 0

        return self


class BenchSettings(BaseSettings):
    """Monte Carlo settings."""

    trials: Annotated[int, Field(ge=1)] = 50
    full_trials: Annotated[int, Field(ge=1)] = 250
    parallel: Annotated[int, Field(ge=1)] = 1
    snr_convention: SnrConvention = SnrConvention.per_source

    model_config = {
        "env_prefix": "NONCOHERENT_DOA_BENCH_",
        "env_file": ".env",
        "extra": "ignore",
    }


class OutputSettings(BaseSettings):
    """Output settings."""

    output_dir: str = "results"

    model_config = {
        "env_prefix": "NONCOHERENT_DOA_",
        "env_file": ".env",
        "extra": "ignore",
    }
