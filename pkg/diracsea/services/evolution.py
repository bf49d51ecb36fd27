"""Unitary propagation of the single-particle evolution operator through a ramp schedule."""

import logging
import math
from typing import Callable, NamedTuple, Optional

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from diracsea.errors import CheckpointError, ConfigError, LinearSolveError, UnitarityError
from diracsea.models.evolution import (
  BlockSelection,
  EvolutionConfig,
  EvolutionMethod,
  EvolutionResult,
  Propagator,
  Representation,
  Snapshot,
)
from diracsea.models.lattice import GaussianPotential, LatticeSpec, RampSchedule
from diracsea.models.observables import SpectralProjectors
from diracsea.models.operator import HermitianOperator
from diracsea.services.lattice_model import build_hamiltonian, schedule_lambda, spectral_radius_bound
from diracsea.storage.checkpoints import CheckpointStore

logger = logging.getLogger(__name__)

UNITARITY_TOL = 1e-8
# Accuracy guard on dt * ||H||.
MAX_PHASE_PER_STEP = 0.5

CheckpointCallback = Callable[[Propagator, float], None]


class StepOperator(NamedTuple):
  """Reusable single-step map for a fixed Hamiltonian and dt."""
  method: EvolutionMethod
  solver: Optional[spla.SuperLU]
  explicit: Optional[sp.csc_matrix]
  dense: Optional[np.ndarray]

  def apply(self, columns: np.ndarray) -> np.ndarray:
    if self.method == EvolutionMethod.CRANK_NICOLSON:
      return self.solver.solve(self.explicit @ columns)
    return self.dense @ columns


def step_operator(operator: HermitianOperator, dt: float, method: EvolutionMethod) -> StepOperator:
  """Prepare the Crank-Nicolson factorization or the exact exponential for one step of length dt.

  Raises:
    LinearSolveError: If (I + i H dt/2) cannot be factorized
  """
  if method == EvolutionMethod.CRANK_NICOLSON:
    identity = sp.identity(operator.dimension, dtype=complex, format="csc")
    half = 0.5j * dt * operator.matrix.tocsc()
    try:
      solver = spla.splu((identity + half).tocsc())
    except RuntimeError as e:
      raise LinearSolveError(f"Crank-Nicolson factorization failed at lambda={operator.potential_amplitude}: {e}") from e
    return StepOperator(method=method, solver=solver, explicit=(identity - half).tocsc(), dense=None)

  energies, states = la.eigh(operator.to_dense())
  return StepOperator(method=method, solver=None, explicit=None, dense=(states * np.exp(-1j * energies * dt)) @ states.conj().T)


def unitarity_defect(columns: np.ndarray) -> float:
  """max |C^H C - I| over the carried columns; for a full matrix this is the unitarity defect of U."""
  gram = columns.conj().T @ columns
  return float(np.max(np.abs(gram - np.eye(gram.shape[0])), initial=0.0))


def propagate_step(
  H_mid: HermitianOperator,
  U: Propagator,
  dt: float,
  method: EvolutionMethod = EvolutionMethod.CRANK_NICOLSON,
  check_unitarity: bool = True,
) -> Propagator:
  """Advance U by one step with the Hamiltonian sampled at the step midpoint.

  Crank-Nicolson: U <- (I + i H dt/2)^-1 (I - i H dt/2) U. EigenStep: U <- exp(-i H dt) U. A negative dt steps
  backwards.

  Args:
    H_mid: Hamiltonian at the midpoint of the step
    U: The current propagator
    dt: Step length in units of l
    method: Single-step propagator
    check_unitarity: Measure the defect of the result

  Returns:
    Propagator: The advanced propagator

  Raises:
    UnitarityError: If the defect exceeds 1e-8, with the index of the offending step
  """
  if not math.isfinite(dt) or dt == 0:
    raise ValueError(f"dt must be finite and non-zero, got {dt}")
  if H_mid.dimension != U.dimension:
    raise ValueError(f"Dimension mismatch: H is {H_mid.dimension}, U is {U.dimension}")

  columns = step_operator(H_mid, dt, method).apply(U.columns)
  defect = unitarity_defect(columns) if check_unitarity else U.unitarity_defect
  step = U.step + 1
  if defect > UNITARITY_TOL:
    raise UnitarityError(f"Unitarity defect {defect:.3e} after step {step}", step=step, defect=defect)
  return U._replace(columns=columns, time=U.time + dt, step=step, unitarity_defect=defect)


def identity_propagator(dimension: int) -> Propagator:
  return Propagator(
    representation=Representation.FULL_MATRIX,
    columns=np.eye(dimension, dtype=complex),
    plus_columns=0,
    time=0.0,
    step=0,
    unitarity_defect=0.0,
  )

def initial_propagator(dimension: int, basis: Optional[SpectralProjectors], blocks: BlockSelection) -> Propagator:
  """U(0) = I, or the Sigma+- basis columns when a basis is given."""
  if basis is None or blocks == BlockSelection.FULL:
    return identity_propagator(dimension)
  assert basis.dimension == dimension, "Basis and lattice dimension differ"
  if blocks == BlockSelection.BOTH:
    columns = np.hstack((basis.plus_basis, basis.minus_basis)).astype(complex)
    plus_columns = basis.n_plus
  else:
    columns = basis.minus_basis.astype(complex)
    plus_columns = 0
  return Propagator(
    representation=Representation.COLUMN_BLOCKS,
    columns=columns,
    plus_columns=plus_columns,
    time=0.0,
    step=0,
    unitarity_defect=unitarity_defect(columns),
  )


def resolve_time_step(spec: LatticeSpec, pot: GaussianPotential, sched: RampSchedule, cfg: EvolutionConfig) -> tuple[float, int]:
  """Actual dt (units of l) and step count: T_tot / dt rounded up, dt rescaled to fit exactly.

  Raises:
    ConfigError: If the requested dt violates dt * ||H|| <= 0.5
  """
  mass = spec.mass
  deepest = build_hamiltonian(spec, pot, max(sched.lambda_max, sched.lambda_final))
  norm_bound = max(spectral_radius_bound(deepest), spectral_radius_bound(build_hamiltonian(spec, pot, 0.0)))
  if cfg.dt is not None:
    requested = cfg.dt / mass
  else:
    requested = min(0.02 / mass, 0.1 / norm_bound)
  if requested * norm_bound > MAX_PHASE_PER_STEP:
    raise ConfigError(
      f"dt={requested * mass} (1/M) gives dt*||H|| = {requested * norm_bound:.3f} > {MAX_PHASE_PER_STEP}"
    )
  t_tot = sched.t_tot / mass
  steps = max(int(math.ceil(t_tot / requested - 1e-9)), 1)
  return t_tot / steps, steps


def snapshot_times(sched: RampSchedule, cfg: EvolutionConfig) -> list[float]:
  """Snapshot times in units of 1/M."""
  if cfg.snapshot_times is not None:
    return sorted(t for t in cfg.snapshot_times if 0.0 <= t <= sched.t_tot)
  if cfg.snapshot_count == 0:
    return []
  if cfg.snapshot_count == 1:
    return [0.0]
  return [float(t) for t in np.linspace(0.0, sched.t_tot, cfg.snapshot_count)]

def instantaneous_snapshots(spec: LatticeSpec, pot: GaussianPotential, sched: RampSchedule, cfg: EvolutionConfig) -> list[Snapshot]:
  """Spectra of H(lambda(t)) at the snapshot times, independent of the propagated state."""
  snapshots = []
  for t in snapshot_times(sched, cfg):
    lam = schedule_lambda(sched, t)
    energies = la.eigvalsh(build_hamiltonian(spec, pot, lam).to_dense())
    snapshots.append(Snapshot(time=t / spec.mass, lam=lam, energies=energies))
  return snapshots


def _resume_point(
  store: CheckpointStore,
  initial: Propagator,
  dt: float,
  manifest_hash: str,
  on_checkpoint: Optional[CheckpointCallback],
  sched: RampSchedule,
  mass: float,
) -> Propagator:
  """Replay stored checkpoints through the callback and return the latest one."""
  history = store.history()
  if not history:
    logger.info("No checkpoint found, starting from t=0")
    return initial
  for state in history:
    if state.manifest_hash != manifest_hash:
      raise CheckpointError(f"Checkpoint at step {state.propagator.step} belongs to another run ({state.manifest_hash})")
    if state.dt != dt or state.propagator.columns.shape != initial.columns.shape:
      raise CheckpointError(f"Checkpoint at step {state.propagator.step} does not match the configured evolution")
    if on_checkpoint is not None:
      on_checkpoint(state.propagator, schedule_lambda(sched, state.propagator.time * mass))
  latest = history[-1].propagator
  logger.info(f"Resuming from checkpoint at step {latest.step}, t={latest.time * mass:.4f}/M")
  return latest


def evolve(
  spec: LatticeSpec,
  pot: GaussianPotential,
  sched: RampSchedule,
  cfg: EvolutionConfig,
  basis: Optional[SpectralProjectors] = None,
  checkpoints: Optional[CheckpointStore] = None,
  resume: bool = False,
  on_checkpoint: Optional[CheckpointCallback] = None,
  manifest_hash: str = "",
) -> EvolutionResult:
  """Propagate from t = 0 to T_tot with lambda(t) sampled at step midpoints.

  Without a basis the full matrix U(t) is carried. With a basis only the Sigma- columns (blocks = minus) or both
  Sigma+ and Sigma- columns (blocks = both) are carried. The factorization is reused while lambda stays constant, so the
  hold phase costs one factorization.

  Args:
    spec: The lattice
    pot: The binding potential
    sched: The ramp schedule (durations in 1/M)
    cfg: Time-stepping parameters
    basis: Sigma+- bases of H0
    checkpoints: Where checkpoints go every `cfg.checkpoint_stride` steps
    resume: Continue from the latest checkpoint in `checkpoints`
    on_checkpoint: Called with (propagator, lambda) at t = 0 and at every checkpoint, replayed on resume
    manifest_hash: Run identity stamped into checkpoints

  Returns:
    EvolutionResult: Final propagator, instantaneous-spectrum snapshots and the actual dt

  Raises:
    UnitarityError: If a checkpoint shows a defect above 1e-8
    CheckpointError: If a checkpoint cannot be written or read
  """
  mass = spec.mass
  dt, steps = resolve_time_step(spec, pot, sched, cfg)
  propagator = initial_propagator(spec.dimension, basis, cfg.blocks)
  logger.info(
    f"Evolving {propagator.columns.shape[1]} columns of a {spec.dimension}-site lattice over T={sched.t_tot}/M "
    f"in {steps} steps (dt={dt * mass:.5f}/M, {cfg.method.value})"
  )

  if on_checkpoint is not None:
    on_checkpoint(propagator, 0.0)
  if resume and checkpoints is not None:
    propagator = _resume_point(checkpoints, propagator, dt, manifest_hash, on_checkpoint, sched, mass)

  columns = propagator.columns
  cached_lambda: Optional[float] = None
  cached_step: Optional[StepOperator] = None
  for step in range(propagator.step, steps):
    lam_mid = schedule_lambda(sched, (step + 0.5) * dt * mass)
    if lam_mid != cached_lambda:
      cached_step = step_operator(build_hamiltonian(spec, pot, lam_mid), dt, cfg.method)
      cached_lambda = lam_mid
    columns = cached_step.apply(columns)

    done = step + 1
    if done % cfg.checkpoint_stride != 0 and done != steps:
      continue
    defect = unitarity_defect(columns)
    if defect > UNITARITY_TOL:
      raise UnitarityError(f"Unitarity defect {defect:.3e} at step {done}", step=done, defect=defect)
    propagator = propagator._replace(columns=columns, time=done * dt, step=done, unitarity_defect=defect)
    lam_now = schedule_lambda(sched, done * dt * mass)
    logger.info(f"step {done}/{steps} t={done * dt * mass:.3f}/M lambda={lam_now:.4f} defect={defect:.2e}")
    if checkpoints is not None:
      checkpoints.save(propagator, dt, manifest_hash)
    if on_checkpoint is not None:
      on_checkpoint(propagator, lam_now)

  return EvolutionResult(
    propagator=propagator,
    snapshots=instantaneous_snapshots(spec, pot, sched, cfg),
    dt=dt,
    steps=steps,
  )
