"""Exception hierarchy shared by the numerical services and the CLI."""

from typing import Optional


class DiracSeaError(Exception):
  """Base exception for all diracsea errors."""
  pass

class ConfigError(DiracSeaError):
  """Invalid configuration file or violated input contract."""
  pass

class NumericalError(DiracSeaError):
  """Base exception for failures of the numerical pipeline."""
  pass

class ConvergenceError(NumericalError):
  """The dense eigensolver failed or returned an inaccurate decomposition."""
  pass

class LinearSolveError(NumericalError):
  """A Crank-Nicolson factorization or solve failed."""
  pass

class UnitarityError(NumericalError):
  """The propagator drifted away from unitarity."""

  def __init__(self, message: str, step: Optional[int] = None, defect: Optional[float] = None):
    super().__init__(message)
    self.step = step
    self.defect = defect

class BranchBreakError(NumericalError):
  """Eigenvector continuation between two grid points was ambiguous."""

  def __init__(self, message: str, grid_index: Optional[int] = None):
    super().__init__(message)
    self.grid_index = grid_index

class BracketError(NumericalError):
  """The critical depth could not be bracketed."""

  def __init__(self, message: str, bracket: tuple[float, float], energies: tuple[float, float]):
    super().__init__(f"{message} (bracket={bracket}, level energies over M={energies})")
    self.bracket = bracket
    self.energies = energies

class CrossingWindowError(NumericalError):
  """The requested window does not isolate exactly one avoided crossing."""
  pass

class CheckpointError(DiracSeaError):
  """Reading or writing an evolution checkpoint failed."""
  pass
