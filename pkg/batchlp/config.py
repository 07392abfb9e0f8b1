from enum import Enum
from functools import lru_cache
from typing import Optional

from pydantic import BaseModel, BaseSettings, confloat, conint, validator


class ReducedCostMode(Enum):
    BARRIER_CONE = "barrier_cone"
    ACTIVE_BOUND = "active_bound"


class SolverConfig(BaseModel):
    """
    Tolerances, restart parameters and limits of the PDHG solvers.

    Both the single instance and the batched solver read the same config so a
    batch of one behaves exactly like a single solve.
    """

    eps_opt: confloat(gt=0) = 1e-4
    eps_infeas: confloat(gt=0) = 1e-8
    eps_dual_residual: Optional[confloat(gt=0)] = None
    theta: confloat(gt=0, le=1) = 0.5
    beta_sufficient: confloat(gt=0, lt=1) = 0.2
    beta_necessary: confloat(gt=0, lt=1) = 0.8
    beta_artificial: confloat(gt=0) = 0.36
    max_iterations: conint(ge=0) = 100_000
    termination_check_period: conint(ge=1) = 64
    w_init: confloat(gt=0) = 1.0
    reduced_cost_mode: ReducedCostMode = ReducedCostMode.BARRIER_CONE
    average_over_all_columns: bool = False
    check_infeasibility: bool = True

    class Config:
        allow_mutation = False

    @validator("beta_necessary")
    def check_betas(cls, v, values):
        beta_s = values.get("beta_sufficient")
        if beta_s is not None and not beta_s < v:
            raise ValueError(
                f"beta_sufficient ({beta_s}) must be smaller than beta_necessary ({v})."
            )
        return v

    @property
    def dual_tolerance(self) -> float:
        """The tolerance applied to the dual residual condition."""
        if self.eps_dual_residual is None:
            return self.eps_opt
        return self.eps_dual_residual


class ObbtConfig(BaseModel):
    eps_opt: confloat(gt=0) = 1e-4
    eps_dual: confloat(gt=0) = 1e-8
    min_improvement: confloat(gt=0) = 1e-4
    max_iterations: conint(ge=0) = 100_000
    termination_check_period: conint(ge=1) = 64
    cutoff: Optional[float] = None
    lenient: bool = False

    class Config:
        allow_mutation = False

    @validator("eps_dual")
    def check_dual_tolerance(cls, v, values):
        eps_opt = values.get("eps_opt")
        if eps_opt is not None and v > eps_opt:
            raise ValueError(f"eps_dual ({v}) cannot be larger than eps_opt ({eps_opt}).")
        return v

    def solver_config(self) -> SolverConfig:
        """The batch solver config with the dual residual tolerance tightened."""
        return SolverConfig(
            eps_opt=self.eps_opt,
            eps_dual_residual=self.eps_dual,
            max_iterations=self.max_iterations,
            termination_check_period=self.termination_check_period,
        )


class Settings(BaseSettings):
    """Process wide settings read from `BATCHLP_*` environment variables."""

    threads: conint(ge=1) = 1
    log_level: str = "WARNING"

    class Config:
        env_prefix = "BATCHLP_"


@lru_cache()
def get_settings() -> Settings:
    return Settings()
