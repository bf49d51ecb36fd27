import logging
from pathlib import Path
from typing import NamedTuple, Optional

from diracsea.commands.base import BaseCommand, CommandOutcome, RunContext
from diracsea.models.config import SimulationConfig
from diracsea.models.evolution import BlockSelection, EvolutionResult, Propagator
from diracsea.models.general import ExitCode
from diracsea.models.observables import Occupation, PairProductionReport, SpectralProjectors
from diracsea.services.evolution import evolve
from diracsea.services.lattice_model import build_hamiltonian
from diracsea.services.observables import (
  free_projectors,
  instantaneous_spectrum,
  pair_production_report,
  particle_number,
  resonance_energy,
)
from diracsea.services.spectral import diagonalize
from diracsea.storage.artifacts import write_csv
from diracsea.storage.checkpoints import CheckpointStore

logger = logging.getLogger(__name__)

TIMESERIES_HEADER = ("t", "lambda", "N")
PRODUCTION_HEADER = ("kind", "index", "energy_over_M", "occupation")
SNAPSHOTS_HEADER = ("t", "lambda", "level_index", "instantaneous_energy_over_M")


class EvolutionRun(NamedTuple):
  report: PairProductionReport
  result: EvolutionResult
  projectors: SpectralProjectors


def run_evolution(
  config: SimulationConfig,
  checkpoint_dir: Optional[Path] = None,
  resume: bool = False,
  manifest_hash: str = "",
) -> EvolutionRun:
  """One evolution of the Dirac sea with N(t) recorded at every checkpoint."""
  spec, pot, sched = config.lattice, config.potential, config.schedule
  projectors = free_projectors(diagonalize(build_hamiltonian(spec, pot, 0.0)), spec)
  basis = None if config.evolution.blocks == BlockSelection.FULL else projectors

  store = None
  if checkpoint_dir is not None:
    store = CheckpointStore(checkpoint_dir)
    if not resume:
      store.clear()

  times: list[float] = []
  lambdas: list[float] = []
  counts: list[float] = []

  def record(propagator: Propagator, lam: float) -> None:
    count = particle_number(propagator, projectors, strict=True)
    times.append(propagator.time * spec.mass)
    lambdas.append(lam)
    counts.append(count)
    logger.info(f"t={propagator.time * spec.mass:.3f}/M N={count:.6e}")

  result = evolve(
    spec,
    pot,
    sched,
    config.evolution,
    basis=basis,
    checkpoints=store,
    resume=resume,
    on_checkpoint=record,
    manifest_hash=manifest_hash,
  )
  report = pair_production_report(times, lambdas, counts, result.propagator, projectors)
  return EvolutionRun(report=report, result=result, projectors=projectors)


def _production_rows(particles: list[Occupation], antiparticles: list[Occupation], mass: float) -> list[tuple]:
  return [
    ("particle", entry.index, entry.energy / mass, entry.occupation) for entry in particles
  ] + [
    ("antiparticle", entry.index, entry.energy / mass, entry.occupation) for entry in antiparticles
  ]


class EvolveCommand(BaseCommand):
  """Single evolution through the configured schedule."""

  name: str = "evolve"
  description: str = "Evolve the Dirac sea through [schedule] and write N(t), production spectra and snapshots."

  def run(self, context: RunContext, manifest_hash: str) -> CommandOutcome:
    config = context.config
    spec, pot, sched = config.lattice, config.potential, config.schedule
    mass = spec.mass
    out = context.out_dir

    run = run_evolution(config, out / "checkpoints", context.resume, manifest_hash)
    report, result = run.report, run.result

    write_csv(
      out / "timeseries.csv",
      TIMESERIES_HEADER,
      zip(report.times, report.lambdas, report.n_of_t),
      manifest_hash,
    )

    derived = {
      "dimension": spec.dimension,
      "dt": result.dt * mass,
      "steps": result.steps,
      "n_final": report.n_final,
    }
    if report.particle_spectrum or report.antiparticle_spectrum:
      write_csv(
        out / "production.csv",
        PRODUCTION_HEADER,
        _production_rows(report.particle_spectrum, report.antiparticle_spectrum, mass),
        manifest_hash,
      )
      try:
        derived["resonance_energy_over_M"] = resonance_energy(report.antiparticle_spectrum, mass) / mass
      except ValueError:
        pass
    else:
      logger.warning("Only the Sigma- block was evolved, skipping production.csv")

    snapshot_rows = [
      (snapshot.time * mass, snapshot.lam, index, float(energy) / mass)
      for snapshot in result.snapshots
      for index, energy in enumerate(snapshot.energies)
    ]
    write_csv(out / "snapshots.csv", SNAPSHOTS_HEADER, snapshot_rows, manifest_hash)

    if config.evolution.instantaneous_spectrum:
      if result.propagator.plus_block is None and config.evolution.blocks != BlockSelection.FULL:
        logger.warning("Only the Sigma- block was evolved, skipping production_instantaneous.csv")
      else:
        es_final = diagonalize(build_hamiltonian(spec, pot, sched.lambda_final))
        filled, holes = instantaneous_spectrum(result.propagator, es_final, run.projectors)
        write_csv(
          out / "production_instantaneous.csv",
          PRODUCTION_HEADER,
          _production_rows(filled, holes, mass),
          manifest_hash,
        )

    print(f"N_final = {report.n_final:.10g}")
    return CommandOutcome(exit_code=ExitCode.SUCCESS, derived=derived)
