"""Run configuration: the TOML sections read by the CLI commands."""

import logging
try:
  import tomllib
except ModuleNotFoundError:  # Python < 3.11
  import tomli as tomllib
from pathlib import Path
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from diracsea.errors import ConfigError
from diracsea.models.evolution import EvolutionConfig
from diracsea.models.lattice import GaussianPotential, LatticeSpec, RampSchedule

logger = logging.getLogger(__name__)


class SpectrumSettings(BaseModel):
  """Lambda grid for the spectrum command."""
  model_config = ConfigDict(frozen=True, extra="forbid")

  lambda_min: float = Field(..., ge=0, description="First grid point")
  lambda_max: float = Field(..., ge=0, description="Last grid point")
  lambda_steps: int = Field(..., ge=1, description="Number of grid points")
  ipr_threshold: Optional[float] = Field(default=None, gt=0, description="Absolute IPR threshold; adaptive when unset")
  critical_tol: float = Field(default=1e-4, gt=0, description="Bisection tolerance for lambda_cr")
  state_lambdas: list[float] = Field(
    default_factory=list,
    description="Grid points at which the densities of the bound and dived states go to states.csv",
  )

  @model_validator(mode="after")
  def validate_grid(self) -> "SpectrumSettings":
    if self.lambda_max < self.lambda_min:
      raise ValueError("lambda_max must not be below lambda_min")
    if self.lambda_steps == 1 and self.lambda_max != self.lambda_min:
      raise ValueError("A single-point grid needs lambda_min == lambda_max")
    off_grid = [lam for lam in self.state_lambdas if self.grid_index(lam) is None]
    if off_grid:
      raise ValueError(f"state_lambdas {off_grid} are not points of the lambda grid")
    return self

  @property
  def grid(self) -> list[float]:
    if self.lambda_steps == 1:
      return [self.lambda_min]
    step = (self.lambda_max - self.lambda_min) / (self.lambda_steps - 1)
    return [self.lambda_min + k * step for k in range(self.lambda_steps)]

  def grid_index(self, lam: float) -> Optional[int]:
    for index, value in enumerate(self.grid):
      if abs(value - lam) <= 1e-9 * max(1.0, abs(lam)):
        return index
    return None


class DispersionSettings(BaseModel):
  model_config = ConfigDict(frozen=True, extra="forbid")

  resolution: int = Field(..., ge=1, description="Grid points per axis over [-pi/l, pi/l]; 1 samples only k = 0")
  mass: Optional[float] = Field(default=None, ge=0, description="Mass override; 0 shows the gapless Dirac points")


class SweepSettings(BaseModel):
  model_config = ConfigDict(frozen=True, extra="forbid")

  lambda_max_list: list[float] = Field(..., min_length=1, description="Maximal depths to sweep")
  t_tot_list: list[float] = Field(..., min_length=1, description="Total durations in units of 1/M")
  jobs: int = Field(default=1, ge=1, description="Concurrent sweep points")


class SimulationConfig(BaseModel):
  """All resolved parameters of one run."""
  model_config = ConfigDict(frozen=True, extra="forbid")

  lattice: LatticeSpec
  potential: GaussianPotential
  schedule: RampSchedule
  evolution: EvolutionConfig = Field(default_factory=EvolutionConfig)
  spectrum: Optional[SpectrumSettings] = None
  dispersion: Optional[DispersionSettings] = None
  sweep: Optional[SweepSettings] = None

  def require(self, section: str) -> BaseModel:
    """Return an optional section, failing with a config error when the command needs it."""
    value = getattr(self, section)
    if value is None:
      raise ConfigError(f"Missing required section [{section}]")
    return value


def _describe_validation_error(error: ValidationError) -> str:
  lines = []
  for detail in error.errors():
    key = ".".join(str(part) for part in detail["loc"])
    lines.append(f"  [{key}] {detail['msg']}")
  return "\n".join(lines)

def parse_config(text: str, source: str = "<string>") -> SimulationConfig:
  """Parse and validate a TOML configuration document.

  Args:
    text: The TOML document
    source: Name used in diagnostics

  Returns:
    SimulationConfig: The validated configuration

  Raises:
    ConfigError: On syntax errors (with line and column) or invalid keys and values
  """
  try:
    data = tomllib.loads(text)
  except tomllib.TOMLDecodeError as e:
    raise ConfigError(f"{source}: {e}") from e

  try:
    return SimulationConfig.model_validate(data)
  except ValidationError as e:
    raise ConfigError(f"{source}: invalid configuration\n{_describe_validation_error(e)}") from e

def load_config(path: Path) -> SimulationConfig:
  """Read and validate a configuration file."""
  logger.info(f"Loading configuration from {path}")
  try:
    text = path.read_text(encoding="utf-8")
  except OSError as e:
    raise ConfigError(f"Cannot read configuration {path}: {e}") from e
  return parse_config(text, source=str(path))
