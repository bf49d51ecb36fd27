import logging

import numpy as np

from diracsea.commands.base import BaseCommand, CommandOutcome, RunContext
from diracsea.errors import BracketError
from diracsea.models.config import SpectrumSettings
from diracsea.models.general import ExitCode
from diracsea.models.lattice import GaussianPotential, LatticeSpec
from diracsea.models.spectral import StateClassification, StateLabel
from diracsea.services.lattice_model import build_hamiltonian, gaussian_potential_at, site_positions
from diracsea.services.spectral import classify_flow, diagonalize, find_lambda_critical, spectral_flow
from diracsea.storage.artifacts import write_csv

logger = logging.getLogger(__name__)

SPECTRUM_HEADER = ("lambda", "index", "energy_over_M", "ipr", "label")
BRANCHES_HEADER = ("branch_id", "lambda", "energy_over_M")
STATES_HEADER = ("lambda", "level_index", "x", "y", "potential_over_M", "density")

LOCALIZED_LABELS = (StateLabel.BOUND, StateLabel.DIVED_BOUND)


def state_density_rows(spec: LatticeSpec, pot: GaussianPotential, lam: float, classification: StateClassification) -> list[tuple]:
  """|psi|^2 of every bound and dived level at `lam`, site by site, next to the well depth lambda V(x) / M."""
  levels = [index for index, label in enumerate(classification.labels) if label in LOCALIZED_LABELS]
  if not levels:
    logger.info(f"No bound or dived states at lambda={lam}, nothing for states.csv")
    return []
  es = diagonalize(build_hamiltonian(spec, pot, lam))
  positions = site_positions(spec)
  well = lam * gaussian_potential_at(pot, positions) / spec.mass
  density = np.abs(es.states) ** 2
  return [
    (lam, level, float(x), float(y), float(depth), float(density[site, level]))
    for level in levels
    for site, ((x, y), depth) in enumerate(zip(positions, well))
  ]


class SpectrumCommand(BaseCommand):
  """Spectral flow of H(lambda) over the configured grid, with continued branches and lambda_cr."""

  name: str = "spectrum"
  description: str = "Write spectrum.csv, branches.csv and states.csv over the [spectrum] lambda grid and report lambda_cr."
  required_sections = ("spectrum",)

  def run(self, context: RunContext, manifest_hash: str) -> CommandOutcome:
    config = context.config
    settings: SpectrumSettings = config.require("spectrum")
    spec, pot = config.lattice, config.potential
    mass = spec.mass

    flow = spectral_flow(spec, pot, settings.grid, jobs=context.jobs or 1)
    classifications = classify_flow(flow, mass, settings.ipr_threshold)

    rows = []
    for k, lam in enumerate(flow.lambda_grid):
      for index, (energy, weight, label) in enumerate(zip(flow.energies[k], flow.iprs[k], classifications[k].labels)):
        rows.append((float(lam), index, float(energy) / mass, float(weight), label.value))
    write_csv(context.out_dir / "spectrum.csv", SPECTRUM_HEADER, rows, manifest_hash)

    branch_rows = [
      (branch.branch_id, float(lam), energy / mass)
      for branch in flow.branches
      for lam, energy in zip(flow.branch_lambdas(branch), branch.energies)
    ]
    write_csv(context.out_dir / "branches.csv", BRANCHES_HEADER, branch_rows, manifest_hash)

    state_rows = []
    for lam in settings.state_lambdas:
      k = settings.grid_index(lam)
      state_rows.extend(state_density_rows(spec, pot, float(flow.lambda_grid[k]), classifications[k]))
    write_csv(context.out_dir / "states.csv", STATES_HEADER, state_rows, manifest_hash)

    derived = {
      "dimension": spec.dimension,
      "branch_breaks": len(flow.breaks),
      "dived_states": classifications[-1].count(StateLabel.DIVED_BOUND),
    }
    try:
      lambda_cr = find_lambda_critical(spec, pot, tol=settings.critical_tol)
      derived["lambda_cr"] = lambda_cr
      print(f"lambda_cr = {lambda_cr:.6f}")
    except BracketError as e:
      logger.warning(f"lambda_cr not bracketed: {e}")
      print("lambda_cr not bracketed")
    return CommandOutcome(exit_code=ExitCode.SUCCESS, derived=derived)
