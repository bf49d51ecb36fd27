"""Models for time propagation."""

from enum import Enum
from typing import NamedTuple, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field


class EvolutionMethod(str, Enum):
  CRANK_NICOLSON = "crank_nicolson"
  EIGEN_STEP = "eigen_step"

class BlockSelection(str, Enum):
  """Which columns of U(t) are carried through the evolution."""
  MINUS = "minus"
  BOTH = "both"
  FULL = "full"

class Representation(str, Enum):
  FULL_MATRIX = "full_matrix"
  COLUMN_BLOCKS = "column_blocks"


class EvolutionConfig(BaseModel):
  """Time-stepping parameters. Times are in units of 1/M."""
  model_config = ConfigDict(frozen=True, extra="forbid")

  dt: Optional[float] = Field(default=None, gt=0, description="Time step; defaults to min(0.02, 0.1 M/||H||)")
  method: EvolutionMethod = Field(default=EvolutionMethod.CRANK_NICOLSON, description="Single-step propagator")
  checkpoint_stride: int = Field(default=500, ge=1, description="Steps between checkpoints")
  snapshot_times: Optional[list[float]] = Field(default=None, description="Times of instantaneous-spectrum snapshots")
  snapshot_count: int = Field(default=200, ge=0, description="Evenly spaced snapshots when snapshot_times is unset")
  blocks: BlockSelection = Field(default=BlockSelection.BOTH, description="Carried representation")
  instantaneous_spectrum: bool = Field(default=False, description="Also measure occupations in the eigenbasis of H(lambda_final)")


class Propagator(NamedTuple):
  """U(t) or its Sigma-restricted column blocks.

  For column blocks, `columns` holds U applied to the Sigma+ basis (first `plus_columns` columns) followed by U applied
  to the Sigma- basis. `plus_columns` is 0 when only the minus block is carried. `time` is in the internal unit l
  (hbar = c = 1); multiply by M for units of 1/M.
  """
  representation: Representation
  columns: np.ndarray
  plus_columns: int
  time: float
  step: int
  unitarity_defect: float

  @property
  def dimension(self) -> int:
    return self.columns.shape[0]

  @property
  def matrix(self) -> np.ndarray:
    assert self.representation == Representation.FULL_MATRIX, "Only a full-matrix propagator exposes U itself"
    return self.columns

  @property
  def plus_block(self) -> Optional[np.ndarray]:
    if self.representation == Representation.FULL_MATRIX or self.plus_columns == 0:
      return None
    return self.columns[:, :self.plus_columns]

  @property
  def minus_block(self) -> Optional[np.ndarray]:
    if self.representation == Representation.FULL_MATRIX:
      return None
    return self.columns[:, self.plus_columns:]


class Snapshot(NamedTuple):
  """Instantaneous spectrum of H(lambda(t)); time in units of l, energies in units of 1/l."""
  time: float
  lam: float
  energies: np.ndarray


class EvolutionResult(NamedTuple):
  """Final propagator, snapshots and the actual (rescaled) time step in units of l."""
  propagator: Propagator
  snapshots: list[Snapshot]
  dt: float
  steps: int
