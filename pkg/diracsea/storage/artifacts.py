"""CSV and JSON artifacts of a run. Every CSV starts with a `# manifest: <hash>` comment line."""

import csv
import json
import logging
from pathlib import Path
from typing import Any, Iterable, NamedTuple, Sequence, Type, TypeVar

from pydantic import BaseModel, ValidationError

from diracsea.errors import CheckpointError
from diracsea.models.run import RunManifest
from diracsea.util import format_float

logger = logging.getLogger(__name__)

MANIFEST_PREFIX = "# manifest: "
MANIFEST_FILE = "manifest.json"

M = TypeVar("M", bound=BaseModel)


class CsvTable(NamedTuple):
  manifest_hash: str
  header: list[str]
  rows: list[dict[str, str]]

  def column(self, name: str) -> list[float]:
    return [float(row[name]) for row in self.rows]


def _cell(value: Any) -> str:
  if isinstance(value, bool):
    return str(value).lower()
  if isinstance(value, float):
    return format_float(value)
  if hasattr(value, "item") and not isinstance(value, (str, bytes)):
    return _cell(value.item())
  return str(value)

def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]], manifest_hash: str) -> Path:
  """Write a CSV artifact with the manifest comment line, a header line and fixed float formatting."""
  path.parent.mkdir(parents=True, exist_ok=True)
  count = 0
  with open(path, "w", newline="", encoding="utf-8") as handle:
    handle.write(f"{MANIFEST_PREFIX}{manifest_hash}\n")
    writer = csv.writer(handle, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
      assert len(row) == len(header), f"Row {row} does not match header {header} of {path.name}"
      writer.writerow([_cell(value) for value in row])
      count += 1
  logger.info(f"Wrote {count} rows to {path}")
  return path

def read_csv(path: Path) -> CsvTable:
  """Parse a CSV artifact written by `write_csv`."""
  with open(path, newline="", encoding="utf-8") as handle:
    first = handle.readline().rstrip("\n")
    if not first.startswith(MANIFEST_PREFIX):
      raise ValueError(f"{path} does not start with a manifest line")
    reader = csv.DictReader(handle)
    rows = list(reader)
    return CsvTable(manifest_hash=first[len(MANIFEST_PREFIX):], header=list(reader.fieldnames or []), rows=rows)


def write_manifest(directory: Path, manifest: RunManifest) -> Path:
  """Write manifest.json, including the run hash."""
  directory.mkdir(parents=True, exist_ok=True)
  path = directory / MANIFEST_FILE
  document = {**manifest.model_dump(mode="json"), "hash": manifest.hash}
  path.write_text(json.dumps(document, indent=2, sort_keys=True) + "\n", encoding="utf-8")
  return path

def read_manifest(directory: Path) -> RunManifest:
  document = json.loads((directory / MANIFEST_FILE).read_text(encoding="utf-8"))
  document.pop("hash", None)
  return RunManifest.model_validate(document)


def write_model(path: Path, model: BaseModel) -> Path:
  path.parent.mkdir(parents=True, exist_ok=True)
  partial = path.with_name(path.name + ".partial")
  partial.write_text(model.model_dump_json(indent=2) + "\n", encoding="utf-8")
  partial.replace(path)
  return path

def read_model(path: Path, model_type: Type[M]) -> M:
  try:
    return model_type.model_validate_json(path.read_text(encoding="utf-8"))
  except (OSError, ValidationError) as e:
    raise CheckpointError(f"Cannot read {model_type.__name__} from {path}: {e}") from e
