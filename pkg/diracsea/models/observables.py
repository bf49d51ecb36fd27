"""Models for the second-quantized observables."""

from enum import Enum
from typing import NamedTuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field


class FitMode(str, Enum):
  SUBCRITICAL = "subcritical"
  SUPERCRITICAL = "supercritical"


class SpectralProjectors(NamedTuple):
  """Orthonormal bases of the positive (Sigma+) and negative (Sigma-) spectral subspaces of H0."""
  plus_basis: np.ndarray
  minus_basis: np.ndarray
  plus_energies: np.ndarray
  minus_energies: np.ndarray

  @property
  def n_plus(self) -> int:
    return self.plus_basis.shape[1]

  @property
  def n_minus(self) -> int:
    return self.minus_basis.shape[1]

  @property
  def dimension(self) -> int:
    return self.plus_basis.shape[0]


class Occupation(NamedTuple):
  """Occupation of one final single-particle state; energy in units of 1/l."""
  index: int
  energy: float
  occupation: float


class HSBlocks(NamedTuple):
  """Squared Hilbert-Schmidt norms of P-UP+ and P+UP-."""
  minus_plus: float
  plus_minus: float


class PairProductionReport(BaseModel):
  """N(t) series and final energy-resolved occupations of one evolution."""
  model_config = ConfigDict(frozen=True)

  times: list[float] = Field(default_factory=list, description="Checkpoint times in units of 1/M")
  lambdas: list[float] = Field(default_factory=list, description="lambda(t) at each checkpoint")
  n_of_t: list[float] = Field(default_factory=list, description="Pair number N(t) at each checkpoint")
  particle_spectrum: list[Occupation] = Field(default_factory=list, description="Occupations of Sigma+ states")
  antiparticle_spectrum: list[Occupation] = Field(default_factory=list, description="Occupations of Sigma- states")
  n_final: float = Field(..., description="N at the end of the schedule")

  @property
  def particle_total(self) -> float:
    return float(sum(entry.occupation for entry in self.particle_spectrum))

  @property
  def antiparticle_total(self) -> float:
    return float(sum(entry.occupation for entry in self.antiparticle_spectrum))


class ScalingFit(BaseModel):
  """Fit of N(T_tot) to N_spont + c T_tot^-alpha."""
  model_config = ConfigDict(frozen=True)

  mode: FitMode
  alpha: float = Field(..., description="Decay exponent")
  n_spont: float = Field(..., description="Adiabatic asymptote (0 in subcritical mode)")
  amplitude: float = Field(..., description="Prefactor c")
  fit_residual: float = Field(..., ge=0, description="RMS deviation of the fit from the data")
  quality_warning: bool = Field(default=False, description="Residual exceeds 10% of the mean N")
