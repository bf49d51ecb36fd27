from enum import Enum, IntEnum


class Status(str, Enum):
  """Outcome of a run or of one sweep point."""
  SUCCESS = "success"
  FAILED = "failed"
  INCOMPLETE = "incomplete"


class ExitCode(IntEnum):
  SUCCESS = 0
  CONFIG_ERROR = 2
  NUMERICAL_FAILURE = 3
  PARTIAL_SWEEP = 4
