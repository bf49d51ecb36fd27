import math

import numpy as np

from diracsea.commands.base import BaseCommand, CommandOutcome, RunContext
from diracsea.models.config import DispersionSettings
from diracsea.models.general import ExitCode
from diracsea.models.lattice import LatticeSpec
from diracsea.services.lattice_model import brillouin_zone_contains, dispersion_relation
from diracsea.storage.artifacts import write_csv

DISPERSION_HEADER = ("kx", "ky", "E_plus", "E_minus")


def zone_grid(spec: LatticeSpec, resolution: int) -> list[tuple[float, float]]:
  """Square grid of `resolution` points per axis over [-pi/l, pi/l], restricted to the diamond zone."""
  if resolution == 1:
    return [(0.0, 0.0)]
  axis = np.linspace(-math.pi, math.pi, resolution) / spec.lattice_constant
  return [
    (float(kx), float(ky))
    for ky in axis
    for kx in axis
    if brillouin_zone_contains(spec, (kx, ky))
  ]


class DispersionCommand(BaseCommand):
  """Analytic band structure E(k) of the free lattice over the first Brillouin zone."""

  name: str = "dispersion"
  description: str = "Write dispersion.csv with both bands over the diamond Brillouin zone."
  required_sections = ("dispersion",)

  def run(self, context: RunContext, manifest_hash: str) -> CommandOutcome:
    spec = context.config.lattice
    settings: DispersionSettings = context.config.require("dispersion")
    mass = settings.mass if settings.mass is not None else spec.mass

    rows = []
    for k in zone_grid(spec, settings.resolution):
      upper, lower = dispersion_relation(k, mass, spec.lattice_constant)
      rows.append((k[0], k[1], upper, lower))
    write_csv(context.out_dir / "dispersion.csv", DISPERSION_HEADER, rows, manifest_hash)
    return CommandOutcome(exit_code=ExitCode.SUCCESS, derived={"k_points": len(rows), "mass": mass})
