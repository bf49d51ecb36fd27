"""Typed containers for eigen-decompositions and spectral flows."""

from enum import Enum
from typing import NamedTuple, Optional

import numpy as np

from diracsea.models.lattice import GaussianPotential, LatticeSpec


class StateLabel(str, Enum):
  NEGATIVE_CONTINUUM = "negative_continuum"
  BOUND = "bound"
  POSITIVE_CONTINUUM = "positive_continuum"
  DIVED_BOUND = "dived_bound"


class EigenSystem(NamedTuple):
  """Ascending energies and orthonormal eigenvectors (columns) of one Hamiltonian snapshot."""
  energies: np.ndarray
  states: np.ndarray
  source_lambda: float

  @property
  def dimension(self) -> int:
    return len(self.energies)


class StateClassification(NamedTuple):
  labels: list[StateLabel]
  ipr: np.ndarray
  ipr_threshold: float
  low_confidence: bool

  def count(self, label: StateLabel) -> int:
    return sum(1 for current in self.labels if current == label)


class Branch(NamedTuple):
  """One continued eigenvalue branch. `state_indices[k]` is the level index at grid point `start + k`."""
  branch_id: int
  start: int
  state_indices: list[int]
  energies: list[float]


class BranchBreak(NamedTuple):
  """Continuation between grid points `grid_index - 1` and `grid_index` stayed ambiguous after refinement."""
  grid_index: int
  previous_branch: int
  branch: int
  overlap: float


class SpectralFlow(NamedTuple):
  """Energies (rows ascending) and IPRs per grid point, plus continued branches. Energies are in units of 1/l."""
  lambda_grid: np.ndarray
  energies: np.ndarray
  iprs: np.ndarray
  branches: list[Branch]
  breaks: list[BranchBreak]
  spec: Optional[LatticeSpec] = None
  potential: Optional[GaussianPotential] = None

  def branch_lambdas(self, branch: Branch) -> np.ndarray:
    return self.lambda_grid[branch.start:branch.start + len(branch.energies)]


class CrossingGap(NamedTuple):
  gap: float
  location: float
