"""Binary checkpoints of the propagated columns. One `.npz` per checkpoint, written atomically."""

import logging
import os
import zipfile
from pathlib import Path
from typing import NamedTuple

import numpy as np

from diracsea.errors import CheckpointError
from diracsea.models.evolution import Propagator, Representation

logger = logging.getLogger(__name__)


class CheckpointState(NamedTuple):
  propagator: Propagator
  dt: float
  manifest_hash: str


class CheckpointStore:
  """Directory of evolution checkpoints named by step index."""

  def __init__(self, directory: Path):
    self.directory = directory

  def _path(self, step: int) -> Path:
    return self.directory / f"step_{step:09d}.npz"

  def save(self, propagator: Propagator, dt: float, manifest_hash: str) -> Path:
    """Write a checkpoint; the file only appears once completely written."""
    path = self._path(propagator.step)
    partial = path.with_name(path.name + ".partial")
    try:
      self.directory.mkdir(parents=True, exist_ok=True)
      with open(partial, "wb") as handle:
        np.savez(
          handle,
          columns=propagator.columns,
          plus_columns=np.int64(propagator.plus_columns),
          representation=np.str_(propagator.representation.value),
          step=np.int64(propagator.step),
          time=np.float64(propagator.time),
          unitarity_defect=np.float64(propagator.unitarity_defect),
          dt=np.float64(dt),
          manifest_hash=np.str_(manifest_hash),
        )
      os.replace(partial, path)
    except OSError as e:
      raise CheckpointError(f"Failed to write checkpoint {path}: {e}") from e
    logger.debug(f"Checkpoint written: {path}")
    return path

  def load(self, path: Path) -> CheckpointState:
    try:
      with np.load(path, allow_pickle=False) as data:
        propagator = Propagator(
          representation=Representation(str(data["representation"])),
          columns=data["columns"],
          plus_columns=int(data["plus_columns"]),
          time=float(data["time"]),
          step=int(data["step"]),
          unitarity_defect=float(data["unitarity_defect"]),
        )
        return CheckpointState(propagator=propagator, dt=float(data["dt"]), manifest_hash=str(data["manifest_hash"]))
    except (OSError, EOFError, KeyError, ValueError, zipfile.BadZipFile) as e:
      raise CheckpointError(f"Failed to read checkpoint {path}: {e}") from e

  def paths(self) -> list[Path]:
    if not self.directory.exists():
      return []
    return sorted(self.directory.glob("step_*.npz"))

  def history(self) -> list[CheckpointState]:
    return [self.load(path) for path in self.paths()]

  def clear(self) -> None:
    for path in self.paths():
      path.unlink()
