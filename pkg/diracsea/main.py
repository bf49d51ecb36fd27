import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from diracsea.commands import COMMANDS, get_command_by_name
from diracsea.commands.base import RunContext
from diracsea.env import ENV, Environment
from diracsea.errors import CheckpointError, ConfigError, NumericalError
from diracsea.models.config import load_config
from diracsea.models.general import ExitCode

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
  parser = argparse.ArgumentParser(prog="diracsea", description="Spontaneous pair creation on a 2+1D Dirac lattice.")
  subparsers = parser.add_subparsers(dest="command", required=True)
  for command in COMMANDS:
    sub = subparsers.add_parser(command.name, help=command.description, description=command.description)
    sub.add_argument("--config", type=Path, required=True, help="TOML configuration file")
    sub.add_argument("--out", type=Path, required=True, help="Output directory")
    sub.add_argument("--resume", action="store_true", help="Continue from checkpoints or completed sweep points")
    sub.add_argument("--jobs", type=int, default=None, help="Worker count (overridden by DIRACSEA_JOBS)")
  return parser

def resolve_jobs(cli_jobs: Optional[int], env: Environment = ENV) -> Optional[int]:
  """DIRACSEA_JOBS wins over --jobs; None leaves the choice to the config."""
  jobs = env.DIRACSEA_JOBS if env.DIRACSEA_JOBS is not None else cli_jobs
  if jobs is not None and jobs < 1:
    raise ConfigError(f"Worker count must be at least 1, got {jobs}")
  return jobs


def main(argv: Optional[Sequence[str]] = None) -> int:
  """Run one CLI command and map failures to exit codes."""
  args = build_parser().parse_args(argv)
  logging.basicConfig(
    level=ENV.DIRACSEA_LOG_LEVEL.upper(),
    format="%(asctime)s %(levelname)s %(name)s: %(message)s",
  )

  try:
    context = RunContext(
      config=load_config(args.config),
      out_dir=args.out,
      resume=args.resume,
      jobs=resolve_jobs(args.jobs),
    )
    exit_code = get_command_by_name(args.command).execute(context)
  except ConfigError as e:
    logger.error(f"Configuration error: {e}")
    return int(ExitCode.CONFIG_ERROR)
  except (NumericalError, CheckpointError) as e:
    step = getattr(e, "step", None)
    logger.error(f"{args.command} aborted{f' at step {step}' if step is not None else ''}: {e}")
    return int(ExitCode.NUMERICAL_FAILURE)
  return int(exit_code)

if __name__ == "__main__":
  sys.exit(main())
