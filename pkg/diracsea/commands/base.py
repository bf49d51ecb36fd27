import logging
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Any, NamedTuple, Optional

from diracsea import __version__
from diracsea.models.config import SimulationConfig
from diracsea.models.general import ExitCode, Status
from diracsea.models.run import RunManifest
from diracsea.storage.artifacts import write_manifest
from diracsea.util import utc_timestamp

logger = logging.getLogger(__name__)


class RunContext(NamedTuple):
  """Resolved inputs of one CLI invocation."""
  config: SimulationConfig
  out_dir: Path
  resume: bool = False
  jobs: Optional[int] = None


class CommandOutcome(NamedTuple):
  exit_code: ExitCode
  derived: dict[str, Any]


class BaseCommand(ABC):
  """A CLI sub-command that turns a configuration into CSV artifacts plus a manifest."""

  name: str
  description: str
  required_sections: tuple[str, ...] = ()

  def manifest(self, context: RunContext) -> RunManifest:
    return RunManifest(
      command=self.name,
      config=context.config.model_dump(mode="json", by_alias=True),
      code_version=__version__,
      output_dir=str(context.out_dir),
    )

  def execute(self, context: RunContext) -> ExitCode:
    """Validate the needed sections, run the command and keep manifest.json current.

    The manifest stays `incomplete` if the run raises, so partial outputs are never mistaken for finished ones.
    """
    for section in self.required_sections:
      context.config.require(section)

    manifest = self.manifest(context).model_copy(update={"started_at": utc_timestamp()})
    write_manifest(context.out_dir, manifest)
    logger.info(f"Running {self.name} into {context.out_dir} (manifest {manifest.hash[:12]})")
    try:
      outcome = self.run(context, manifest.hash)
    except Exception as e:
      write_manifest(context.out_dir, manifest.model_copy(update={
        "finished_at": utc_timestamp(),
        "derived": {"error": str(e)},
      }))
      raise

    status = Status.SUCCESS if outcome.exit_code == ExitCode.SUCCESS else Status.INCOMPLETE
    write_manifest(context.out_dir, manifest.model_copy(update={
      "finished_at": utc_timestamp(),
      "derived": outcome.derived,
      "status": status,
    }))
    logger.info(f"Finished {self.name} with status {status.value}")
    return outcome.exit_code

  @abstractmethod
  def run(self, context: RunContext, manifest_hash: str) -> CommandOutcome:
    """Produce the command's artifacts in `context.out_dir`, stamping each CSV with `manifest_hash`."""
    ...
