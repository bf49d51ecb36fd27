"""Pydantic models for lattice geometry, the binding potential and the ramp schedule."""

from enum import Enum
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator


class Boundary(str, Enum):
  OPEN = "open"
  PERIODIC = "periodic"

class StaggeredCopy(str, Enum):
  """Which of the two decoupled staggered copies is simulated.

  Copy A carries a-amplitudes on sites with (m+n) even and b-amplitudes on (m+n) odd; copy B swaps the roles.
  """
  A = "A"
  B = "B"

class RampShape(str, Enum):
  LINEAR = "linear"
  SIN_SQUARED = "sin_squared"


class LatticeSpec(BaseModel):
  """Geometry, mass and boundary of the single simulated copy. Energies are in units of 1/l."""
  model_config = ConfigDict(frozen=True, extra="forbid", populate_by_name=True)

  nx: int = Field(..., ge=3, description="Number of sites along x")
  ny: int = Field(..., ge=3, description="Number of sites along y")
  mass: float = Field(..., gt=0, description="Mass M in units of 1/l")
  lattice_constant: Literal[1.0] = Field(default=1.0, description="Lattice constant l, fixed to the internal length unit")
  boundary: Boundary = Field(default=Boundary.OPEN, description="Hard-wall (open) or wrapped (periodic) edges")
  staggered_copy: StaggeredCopy = Field(default=StaggeredCopy.A, alias="copy", description="Simulated staggered copy")

  @model_validator(mode="after")
  def validate_periodic_parity(self) -> "LatticeSpec":
    """Wrapping an odd axis would couple the two staggered copies."""
    if self.boundary == Boundary.PERIODIC and (self.nx % 2 or self.ny % 2):
      raise ValueError(f"Periodic boundary requires even nx and ny, got {self.nx}x{self.ny}")
    return self

  @property
  def dimension(self) -> int:
    return self.nx * self.ny


class GaussianPotential(BaseModel):
  """V(x) = V0 exp(-|x - center|^2 / sigma^2). Enters the Hamiltonian as -lambda V(x)."""
  model_config = ConfigDict(frozen=True, extra="forbid")

  v0: float = Field(..., gt=0, description="Base amplitude V0 in units of 1/l")
  sigma: float = Field(..., gt=0, description="Width in units of l")
  center_x: float = Field(..., description="Center x in lattice coordinates")
  center_y: float = Field(..., description="Center y in lattice coordinates")

  @property
  def center(self) -> tuple[float, float]:
    return (self.center_x, self.center_y)


class RampSchedule(BaseModel):
  """Switch-on, static and switch-off phases of lambda(t). Durations are in units of 1/M."""
  model_config = ConfigDict(frozen=True, extra="forbid")

  lambda_max: float = Field(..., ge=0, description="Depth reached at the end of the switch-on")
  lambda_final: float = Field(default=0.0, ge=0, description="Depth left after the switch-off")
  t_on: float = Field(..., gt=0, description="Switch-on duration")
  t_hold: float = Field(..., ge=0, description="Static duration")
  t_off: float = Field(..., gt=0, description="Switch-off duration")
  shape: RampShape = Field(default=RampShape.SIN_SQUARED, description="Interpolation used by both ramps")

  @property
  def t_tot(self) -> float:
    return self.t_on + self.t_hold + self.t_off
