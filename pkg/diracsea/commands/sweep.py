import logging
from multiprocessing import Pool
from pathlib import Path
from typing import Iterator, Optional

from diracsea.commands.base import BaseCommand, CommandOutcome, RunContext
from diracsea.commands.evolve import run_evolution
from diracsea.errors import NumericalError
from diracsea.models.config import SimulationConfig, SweepSettings
from diracsea.models.general import ExitCode, Status
from diracsea.models.observables import FitMode, ScalingFit
from diracsea.models.run import SweepPlan, SweepPoint, SweepPointResult
from diracsea.services.lattice_model import scaled_schedule
from diracsea.services.observables import MIN_FIT_POINTS, split_spontaneous
from diracsea.services.spectral import count_dived_states
from diracsea.storage.artifacts import read_model, write_csv, write_model
from diracsea.util import partition

logger = logging.getLogger(__name__)

SWEEP_HEADER = ("lambda_max", "T_tot", "N_final", "status")
SCALING_HEADER = ("lambda_max", "T_tot", "N_final", "alpha_fit", "N_spont_fit", "residual")


def point_config(config: SimulationConfig, point: SweepPoint) -> SimulationConfig:
  """The schedule template retargeted to one sweep point. Snapshots are not needed for N_final."""
  return config.model_copy(update={
    "schedule": scaled_schedule(config.schedule, point.t_tot, point.lambda_max),
    "evolution": config.evolution.model_copy(update={"snapshot_times": None, "snapshot_count": 0}),
  })

def run_point(task: tuple[SimulationConfig, SweepPoint, str]) -> SweepPointResult:
  """Evolve one sweep point. Failures are returned as results, never raised."""
  config, point, manifest_hash = task
  try:
    run = run_evolution(point_config(config, point))
  except Exception as e:
    logger.exception(f"Sweep point {point.key} failed: {e}")
    return SweepPointResult(
      lambda_max=point.lambda_max,
      t_tot=point.t_tot,
      status=Status.FAILED,
      message=f"{type(e).__name__}: {e}",
      manifest_hash=manifest_hash,
    )
  logger.info(f"Sweep point {point.key} done: N_final={run.report.n_final:.6e}")
  return SweepPointResult(
    lambda_max=point.lambda_max,
    t_tot=point.t_tot,
    n_final=run.report.n_final,
    dt=run.result.dt * config.lattice.mass,
    status=Status.SUCCESS,
    manifest_hash=manifest_hash,
  )


def completed_points(points_dir: Path, points: list[SweepPoint], manifest_hash: str) -> dict[str, SweepPointResult]:
  """Successful results already persisted under `points_dir` by a run with the same manifest hash."""
  done = {}
  for point in points:
    path = points_dir / f"{point.key}.json"
    if not path.exists():
      continue
    result = read_model(path, SweepPointResult)
    if result.manifest_hash != manifest_hash:
      logger.warning(f"Sweep point {point.key} on disk belongs to manifest {result.manifest_hash or 'unknown'}, recomputing")
      continue
    if result.status == Status.SUCCESS:
      done[point.key] = result
  return done

def _execute(tasks: list[tuple[SimulationConfig, SweepPoint, str]], jobs: int) -> Iterator[SweepPointResult]:
  if jobs > 1 and len(tasks) > 1:
    with Pool(processes=min(jobs, len(tasks))) as pool:
      yield from pool.imap_unordered(run_point, tasks)
  else:
    yield from map(run_point, tasks)


def fit_mode(config: SimulationConfig, lambda_max: float) -> Optional[FitMode]:
  """Supercritical when a former gap state has dived below -M at lambda_max; None if continuation is ambiguous."""
  try:
    dived = count_dived_states(config.lattice, config.potential, lambda_max)
  except NumericalError as e:
    logger.warning(f"Cannot count dived states at lambda_max={lambda_max}: {e}")
    return None
  return FitMode.SUPERCRITICAL if dived > 0 else FitMode.SUBCRITICAL

def scaling_fits(config: SimulationConfig, results: list[SweepPointResult]) -> dict[float, ScalingFit]:
  """split_spontaneous for every lambda_max column with enough successful T_tot values."""
  fits = {}
  for lambda_max in sorted({result.lambda_max for result in results}):
    series = [(r.t_tot, r.n_final) for r in results if r.lambda_max == lambda_max and r.status == Status.SUCCESS]
    if len({t_tot for t_tot, _ in series}) < MIN_FIT_POINTS:
      logger.info(f"lambda_max={lambda_max}: fewer than {MIN_FIT_POINTS} T_tot values, not fitted")
      continue
    mode = fit_mode(config, lambda_max)
    if mode is None:
      continue
    try:
      fits[lambda_max] = split_spontaneous(series, mode)
    except (ValueError, NumericalError) as e:
      logger.warning(f"Scaling fit at lambda_max={lambda_max} failed: {e}")
  return fits


class SweepCommand(BaseCommand):
  """Grid of evolutions over (lambda_max, T_tot) with resumable per-point results."""

  name: str = "sweep"
  description: str = "Run every (lambda_max, T_tot) point of [sweep] and write sweep.csv and scaling.csv."
  required_sections = ("sweep",)

  def run(self, context: RunContext, manifest_hash: str) -> CommandOutcome:
    config = context.config
    settings: SweepSettings = config.require("sweep")
    plan = SweepPlan(
      lambda_max_list=settings.lambda_max_list,
      t_tot_list=settings.t_tot_list,
      jobs=context.jobs or settings.jobs,
      resume=context.resume,
    )
    points = plan.points()
    points_dir = context.out_dir / "points"

    done = completed_points(points_dir, points, manifest_hash) if plan.resume else {}
    skipped, pending = partition(lambda point: point.key in done, points)
    logger.info(f"Sweep of {len(points)} points: {len(skipped)} already complete, {len(pending)} to run on {plan.jobs} workers")

    results = dict(done)
    for result in _execute([(config, point, manifest_hash) for point in pending], plan.jobs):
      key = SweepPoint(lambda_max=result.lambda_max, t_tot=result.t_tot).key
      write_model(points_dir / f"{key}.json", result)
      results[key] = result

    ordered = [results[point.key] for point in points]
    write_csv(
      context.out_dir / "sweep.csv",
      SWEEP_HEADER,
      [(r.lambda_max, r.t_tot, "" if r.n_final is None else r.n_final, r.status.value) for r in ordered],
      manifest_hash,
    )

    fits = scaling_fits(config, ordered)
    scaling_rows = [
      (r.lambda_max, r.t_tot, r.n_final, fits[r.lambda_max].alpha, fits[r.lambda_max].n_spont, fits[r.lambda_max].fit_residual)
      for r in ordered
      if r.lambda_max in fits and r.status == Status.SUCCESS
    ]
    write_csv(context.out_dir / "scaling.csv", SCALING_HEADER, scaling_rows, manifest_hash)

    failed = [r for r in ordered if r.status != Status.SUCCESS]
    derived = {
      "points": len(points),
      "failed": len(failed),
      "fits": {str(lam): fit.model_dump(mode="json") for lam, fit in fits.items()},
    }
    if failed:
      logger.error(f"{len(failed)} of {len(points)} sweep points failed")
      return CommandOutcome(exit_code=ExitCode.PARTIAL_SWEEP, derived=derived)
    return CommandOutcome(exit_code=ExitCode.SUCCESS, derived=derived)
