"""Models describing runs, sweeps and their persisted results."""

import hashlib
import itertools
import json
from typing import Any, Optional

from pydantic import BaseModel, ConfigDict, Field

from diracsea.models.general import Status


class RunManifest(BaseModel):
  """Everything needed to reproduce a run, plus wall-clock metadata that does not enter the hash."""
  command: str = Field(..., description="CLI sub-command")
  config: dict[str, Any] = Field(..., description="Resolved configuration snapshot")
  code_version: str = Field(..., description="diracsea version string")
  derived: dict[str, Any] = Field(default_factory=dict, description="Derived quantities (lambda_cr, actual dt, dimension)")
  output_dir: str = Field(..., description="Directory holding the artifacts")
  started_at: Optional[str] = Field(default=None, description="ISO timestamp")
  finished_at: Optional[str] = Field(default=None, description="ISO timestamp")
  status: Status = Field(default=Status.INCOMPLETE, description="Run outcome")

  @property
  def hash(self) -> str:
    """sha256 over command, config and code version."""
    canonical = json.dumps(
      {"command": self.command, "config": self.config, "code_version": self.code_version},
      sort_keys=True,
      separators=(",", ":"),
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class SweepPoint(BaseModel):
  model_config = ConfigDict(frozen=True)

  lambda_max: float
  t_tot: float

  @property
  def key(self) -> str:
    return f"lam_{self.lambda_max:.6g}_T_{self.t_tot:.6g}"


class SweepPlan(BaseModel):
  """Cartesian (lambda_max, T_tot) grid sharing one schedule template."""
  model_config = ConfigDict(frozen=True)

  lambda_max_list: list[float] = Field(..., min_length=1)
  t_tot_list: list[float] = Field(..., min_length=1)
  jobs: int = Field(default=1, ge=1)
  resume: bool = False

  def points(self) -> list[SweepPoint]:
    return [
      SweepPoint(lambda_max=lam, t_tot=t_tot)
      for lam, t_tot in itertools.product(sorted(set(self.lambda_max_list)), sorted(set(self.t_tot_list)))
    ]


class SweepPointResult(BaseModel):
  lambda_max: float
  t_tot: float
  n_final: Optional[float] = None
  dt: Optional[float] = None
  status: Status
  message: str = ""
  manifest_hash: str = Field(default="", description="Hash of the sweep manifest that produced the point")
