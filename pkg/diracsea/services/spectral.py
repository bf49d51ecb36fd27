"""Diagonalization of Hamiltonian snapshots, state classification and spectral flow over lambda."""

import logging
import math
from multiprocessing.pool import ThreadPool
from typing import Optional, Sequence

import numpy as np
import scipy.linalg as la

from diracsea.errors import BracketError, BranchBreakError, ConvergenceError, CrossingWindowError
from diracsea.models.lattice import GaussianPotential, LatticeSpec
from diracsea.models.operator import HermitianOperator
from diracsea.models.spectral import (
  Branch,
  BranchBreak,
  CrossingGap,
  EigenSystem,
  SpectralFlow,
  StateClassification,
  StateLabel,
)
from diracsea.services.lattice_model import build_hamiltonian

logger = logging.getLogger(__name__)

ORTHONORMALITY_TOL = 1e-10
RESIDUAL_TOL = 1e-8
# Energies closer than this to +-M count as continuum edge, not gap.
EDGE_TOL = 1e-9
IPR_SEPARATION = 5.0
AMBIGUOUS_OVERLAP = 0.5
MAX_REFINEMENT_DEPTH = 6
DEGENERACY_TOL = 1e-8


def diagonalize(operator: HermitianOperator, verify: bool = True) -> EigenSystem:
  """Full dense spectral decomposition of a Hamiltonian snapshot.

  Args:
    operator: The Hamiltonian
    verify: Check orthonormality (1e-10) and residuals (1e-8 of the spectral radius)

  Returns:
    EigenSystem: Ascending energies and eigenvector columns

  Raises:
    ConvergenceError: If LAPACK fails or the decomposition is inaccurate
  """
  dense = operator.to_dense()
  try:
    energies, states = la.eigh(dense, check_finite=True)
  except (la.LinAlgError, ValueError) as e:
    raise ConvergenceError(
      f"eigh failed for n={operator.dimension} at lambda={operator.potential_amplitude}: {e}"
    ) from e

  if verify:
    orthonormality = float(np.max(np.abs(states.conj().T @ states - np.eye(len(energies))), initial=0.0))
    residual = float(np.max(np.linalg.norm(operator.matrix @ states - states * energies, axis=0), initial=0.0))
    radius = max(float(np.max(np.abs(energies), initial=0.0)), 1.0)
    if orthonormality > ORTHONORMALITY_TOL or residual > RESIDUAL_TOL * radius:
      raise ConvergenceError(
        f"Inaccurate decomposition at lambda={operator.potential_amplitude}: "
        f"max|S^H S - I|={orthonormality:.3e}, max|Hv - Ev|={residual:.3e}, spectral radius={radius:.3e}"
      )

  return EigenSystem(energies=energies, states=states, source_lambda=operator.potential_amplitude)


def ipr(state: np.ndarray) -> float:
  """Inverse participation ratio sum_i |v_i|^4 of a normalized state.

  Raises:
    ValueError: If the state is not normalized to 1e-10
  """
  vector = np.asarray(state)
  norm = float(np.linalg.norm(vector))
  if abs(norm - 1.0) > 1e-10:
    raise ValueError(f"IPR needs a normalized state, got norm {norm}")
  return float(np.sum(np.abs(vector) ** 4))

def state_iprs(es: EigenSystem) -> np.ndarray:
  return np.sum(np.abs(es.states) ** 4, axis=0)


def classify_states(es: EigenSystem, spec: LatticeSpec, ipr_threshold: Optional[float] = None) -> StateClassification:
  """Label every state as negative continuum, bound (gap), positive continuum or dived bound.

  Args:
    es: The eigen-decomposition
    spec: The lattice (provides M)
    ipr_threshold: Absolute IPR above which a sub-(-M) state counts as dived; 5x the median continuum IPR when unset

  Returns:
    StateClassification: Labels, IPRs, the threshold used and a low-confidence flag
  """
  return classify_levels(es.energies, state_iprs(es), spec.mass, ipr_threshold, es.source_lambda)

def classify_levels(
  energies: np.ndarray,
  iprs: np.ndarray,
  mass: float,
  ipr_threshold: Optional[float] = None,
  source_lambda: float = float("nan"),
  former_gap: Optional[np.ndarray] = None,
) -> StateClassification:
  """`classify_states` from precomputed energies and IPRs, e.g. one row of a SpectralFlow.

  With `former_gap` (per-level mask of continued gap branches) a level below -M is dived bound exactly when it
  carries a former gap state, whatever its IPR. Without it the IPR threshold decides.
  """
  in_gap = (energies > -mass + EDGE_TOL) & (energies < mass - EDGE_TOL)
  median_continuum = float(np.median(iprs[~in_gap])) if np.any(~in_gap) else 0.0
  threshold = ipr_threshold if ipr_threshold is not None else IPR_SEPARATION * median_continuum

  if former_gap is None:
    dived = iprs > threshold
  else:
    dived = np.asarray(former_gap, dtype=bool) & (energies < -mass)

  labels: list[StateLabel] = []
  for energy, is_dived, gap in zip(energies, dived, in_gap):
    if gap:
      labels.append(StateLabel.BOUND)
    elif energy >= mass - EDGE_TOL:
      labels.append(StateLabel.POSITIVE_CONTINUUM)
    elif is_dived:
      labels.append(StateLabel.DIVED_BOUND)
    else:
      labels.append(StateLabel.NEGATIVE_CONTINUUM)

  low_confidence = bool(np.any(in_gap)) and float(np.min(iprs[in_gap])) < IPR_SEPARATION * median_continuum
  if low_confidence:
    logger.warning(
      f"Bound states at lambda={source_lambda} are not well separated from the continuum by IPR "
      f"(min bound {float(np.min(iprs[in_gap])):.3e} vs median continuum {median_continuum:.3e})"
    )
  return StateClassification(labels=labels, ipr=iprs, ipr_threshold=threshold, low_confidence=low_confidence)


def _cluster_labels(energies: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
  """Group ascending energies into degenerate clusters. Returns per-level cluster ids and cluster sizes."""
  breaks = np.diff(energies) > DEGENERACY_TOL * np.maximum(1.0, np.abs(energies[1:]))
  labels = np.concatenate(([0], np.cumsum(breaks)))
  return labels, np.bincount(labels)

def _effective_overlaps(before: EigenSystem, after: EigenSystem) -> np.ndarray:
  """|<v_i|w_j>| with degenerate clusters replaced by their mean squared principal cosine."""
  weights = np.abs(before.states.conj().T @ after.states) ** 2
  before_labels, before_sizes = _cluster_labels(before.energies)
  after_labels, after_sizes = _cluster_labels(after.energies)
  if len(before_sizes) == len(before_labels) and len(after_sizes) == len(after_labels):
    return np.sqrt(weights)

  n = len(before_labels)
  before_indicator = np.zeros((n, len(before_sizes)))
  before_indicator[np.arange(n), before_labels] = 1.0
  after_indicator = np.zeros((n, len(after_sizes)))
  after_indicator[np.arange(n), after_labels] = 1.0
  summed = before_indicator.T @ weights @ after_indicator
  sizes = np.minimum.outer(before_sizes[before_labels], after_sizes[after_labels])
  return np.sqrt(summed[before_labels][:, after_labels] / sizes)

def _greedy_match(overlaps: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
  """One-to-one matching by descending overlap; ties go to the closest level index."""
  n = overlaps.shape[0]
  rows, cols = np.indices(overlaps.shape)
  order = np.lexsort((np.abs(rows - cols).ravel(), -overlaps.ravel()))
  matched = np.full(n, -1)
  scores = np.zeros(n)
  taken = np.zeros(n, dtype=bool)
  remaining = n
  for flat in order:
    i, j = divmod(int(flat), n)
    if matched[i] >= 0 or taken[j]:
      continue
    matched[i] = j
    scores[i] = overlaps[i, j]
    taken[j] = True
    remaining -= 1
    if remaining == 0:
      break
  return matched, scores

def _continue_levels(
  spec: Optional[LatticeSpec],
  pot: Optional[GaussianPotential],
  before: EigenSystem,
  after: EigenSystem,
  depth: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
  """Match levels of two snapshots, bisecting the lambda step while any match stays ambiguous."""
  matched, scores = _greedy_match(_effective_overlaps(before, after))
  if scores.min() >= AMBIGUOUS_OVERLAP or depth >= MAX_REFINEMENT_DEPTH or spec is None or pot is None:
    return matched, scores

  middle_lambda = 0.5 * (before.source_lambda + after.source_lambda)
  middle = diagonalize(build_hamiltonian(spec, pot, middle_lambda), verify=False)
  first, first_scores = _continue_levels(spec, pot, before, middle, depth + 1)
  second, second_scores = _continue_levels(spec, pot, middle, after, depth + 1)
  return second[first], np.minimum(first_scores, second_scores[first])


def _diagonalize_at(args: tuple[LatticeSpec, GaussianPotential, float]) -> EigenSystem:
  spec, pot, lam = args
  return diagonalize(build_hamiltonian(spec, pot, lam))

def spectral_flow(
  spec: LatticeSpec,
  pot: GaussianPotential,
  lambda_grid: Sequence[float],
  jobs: int = 1,
  strict: bool = False,
) -> SpectralFlow:
  """Spectra over a lambda grid with eigenvector-overlap branch continuation.

  Snapshots are diagonalized concurrently; continuation is a sequential pass. A step whose best overlap stays below
  0.5 after bisection refinement ends the affected branch and starts a new one, recorded in `breaks`.

  Args:
    spec: The lattice
    pot: The binding potential
    lambda_grid: Ascending depths
    jobs: Concurrent diagonalizations
    strict: Raise instead of recording a break

  Returns:
    SpectralFlow: Energies, IPRs, branches and breaks

  Raises:
    BranchBreakError: On an ambiguous continuation when `strict` is set
  """
  grid = np.asarray(lambda_grid, dtype=float)
  if grid.ndim != 1 or len(grid) == 0:
    raise ValueError("lambda_grid must be a non-empty list")
  if np.any(np.diff(grid) <= 0):
    raise ValueError("lambda_grid must be strictly ascending")

  logger.info(f"Spectral flow over {len(grid)} lambda points on a {spec.nx}x{spec.ny} lattice")
  tasks = [(spec, pot, float(lam)) for lam in grid]
  if jobs > 1:
    with ThreadPool(processes=jobs) as pool:
      snapshots = pool.map(_diagonalize_at, tasks)
  else:
    snapshots = [_diagonalize_at(task) for task in tasks]

  n = spec.dimension
  branches = [Branch(branch_id=k, start=0, state_indices=[k], energies=[float(snapshots[0].energies[k])]) for k in range(n)]
  level_owner = list(range(n))
  breaks: list[BranchBreak] = []

  for index in range(1, len(grid)):
    before, after = snapshots[index - 1], snapshots[index]
    matched, scores = _continue_levels(spec, pot, before, after)
    owner_after = [-1] * n
    for level, target in enumerate(matched):
      branch_id = level_owner[level]
      if scores[level] < AMBIGUOUS_OVERLAP:
        if strict:
          raise BranchBreakError(
            f"Ambiguous continuation of level {level} between lambda={grid[index - 1]} and {grid[index]} "
            f"(overlap {scores[level]:.3f})",
            grid_index=index,
          )
        new_id = len(branches)
        branches.append(Branch(branch_id=new_id, start=index, state_indices=[], energies=[]))
        breaks.append(BranchBreak(grid_index=index, previous_branch=branch_id, branch=new_id, overlap=float(scores[level])))
        logger.warning(f"Branch {branch_id} broken at lambda={grid[index]} (overlap {scores[level]:.3f})")
        branch_id = new_id
      branches[branch_id].state_indices.append(int(target))
      branches[branch_id].energies.append(float(after.energies[target]))
      owner_after[target] = branch_id
    level_owner = owner_after

  return SpectralFlow(
    lambda_grid=grid,
    energies=np.vstack([snapshot.energies for snapshot in snapshots]),
    iprs=np.vstack([state_iprs(snapshot) for snapshot in snapshots]),
    branches=branches,
    breaks=breaks,
    spec=spec,
    potential=pot,
  )


def gap_branches(flow: SpectralFlow, mass: float) -> list[int]:
  """Ids of branches that sit strictly inside the gap at some grid point, following breaks forward."""
  in_gap = {
    branch.branch_id
    for branch in flow.branches
    if any(-mass + EDGE_TOL < energy < mass - EDGE_TOL for energy in branch.energies)
  }
  for current in sorted(flow.breaks, key=lambda entry: entry.grid_index):
    if current.previous_branch in in_gap:
      in_gap.add(current.branch)
  return sorted(in_gap)

def gap_level_mask(flow: SpectralFlow, mass: float) -> np.ndarray:
  """(grid point, level) mask of the levels carried by a branch from `gap_branches`."""
  mask = np.zeros(flow.energies.shape, dtype=bool)
  for branch_id in gap_branches(flow, mass):
    branch = flow.branches[branch_id]
    for offset, level in enumerate(branch.state_indices):
      mask[branch.start + offset, level] = True
  return mask

def classify_flow(flow: SpectralFlow, mass: float, ipr_threshold: Optional[float] = None) -> list[StateClassification]:
  """Per-grid-point classification where dived bound states are the continued former gap states."""
  mask = gap_level_mask(flow, mass)
  return [
    classify_levels(flow.energies[k], flow.iprs[k], mass, ipr_threshold, float(lam), former_gap=mask[k])
    for k, lam in enumerate(flow.lambda_grid)
  ]


def _level_energy(spec: LatticeSpec, pot: GaussianPotential, lam: float, level: int) -> float:
  dense = build_hamiltonian(spec, pot, lam).to_dense()
  return float(la.eigvalsh(dense, subset_by_index=[level, level])[0])

def deepest_gap_level(spec: LatticeSpec, pot: GaussianPotential) -> int:
  """Level index of the state that becomes the deepest bound state: the number of levels at or below -M at lambda=0."""
  energies = la.eigvalsh(build_hamiltonian(spec, pot, 0.0).to_dense())
  return int(np.count_nonzero(energies <= -spec.mass + EDGE_TOL))

def find_lambda_critical(
  spec: LatticeSpec,
  pot: GaussianPotential,
  tol: float = 1e-4,
  bracket: Optional[tuple[float, float]] = None,
  order: int = 1,
) -> float:
  """Bisect the depth at which the `order`-th gap level first passes E = -M.

  The tracked level is the deepest gap level (order 1) or the one `order - 1` above it, followed by level index; all
  levels are non-increasing in lambda, so the crossing is unique.

  Args:
    spec: The lattice
    pot: The binding potential
    tol: Final bracket width
    bracket: (lambda_lo, lambda_hi); defaults to (0, 10 M / V0)
    order: 1 for the first diving, 2 for the second, ...

  Returns:
    float: The upper end of the final bracket, so any larger lambda is supercritical

  Raises:
    BracketError: If no bound state exists in the bracket, or it never reaches -M, or the bracket starts supercritical
  """
  if tol <= 0:
    raise ValueError("tol must be positive")
  if order < 1:
    raise ValueError("order must be at least 1")
  lo, hi = bracket if bracket is not None else (0.0, 10.0 * spec.mass / pot.v0)
  level = deepest_gap_level(spec, pot) + order - 1
  mass = spec.mass

  energy_lo = _level_energy(spec, pot, lo, level)
  energy_hi = _level_energy(spec, pot, hi, level)
  report = (energy_lo / mass, energy_hi / mass)
  if energy_hi >= mass - EDGE_TOL:
    raise BracketError("No bound state in bracket", (lo, hi), report)
  if energy_hi >= -mass:
    raise BracketError("Bound state not reached -M in bracket", (lo, hi), report)
  if energy_lo < -mass:
    raise BracketError("Bracket starts supercritical", (lo, hi), report)

  while hi - lo > tol:
    middle = 0.5 * (lo + hi)
    if _level_energy(spec, pot, middle, level) < -mass:
      hi = middle
    else:
      lo = middle
  logger.info(f"lambda_cr (order {order}) = {hi:.6f} on a {spec.nx}x{spec.ny} lattice")
  return hi


def count_dived_states(spec: LatticeSpec, pot: GaussianPotential, lam: float, step: float = 0.05) -> int:
  """Number of former gap branches below -M at depth `lam`, continued from lambda = 0.

  Raises:
    BranchBreakError: If continuation along the path stays ambiguous
  """
  if lam < 0:
    raise ValueError(f"lambda must be non-negative, got {lam}")
  if lam == 0:
    return 0
  points = max(int(math.ceil(lam / step)), 1) + 1
  flow = spectral_flow(spec, pot, np.linspace(0.0, lam, points), strict=True)
  carried = gap_level_mask(flow, spec.mass)[-1]
  return int(np.count_nonzero(carried & (flow.energies[-1] < -spec.mass)))


def level_spacing(es: EigenSystem, spec: LatticeSpec, width: float) -> float:
  """Mean spacing of the negative pseudo-continuum in [-M - width, -M).

  Raises:
    ValueError: If fewer than two levels fall into the window
  """
  energies = es.energies
  selected = np.sort(energies[(energies >= -spec.mass - width) & (energies < -spec.mass - EDGE_TOL)])
  if len(selected) < 2:
    raise ValueError(f"Fewer than two levels within {width} below -M")
  return float(np.mean(np.diff(selected)))


def _crossing_candidates(flow: SpectralFlow, window: tuple[float, float, float, float]) -> list[tuple[int, int]]:
  """(grid index, lower level) of interior local minima of adjacent-level gaps that dip below half the pair's window maximum."""
  lambda_lo, lambda_hi, energy_lo, energy_hi = window
  rows = np.flatnonzero((flow.lambda_grid >= lambda_lo) & (flow.lambda_grid <= lambda_hi))
  if len(rows) < 3:
    raise CrossingWindowError(f"Window {window} holds fewer than three grid points")

  energies = flow.energies[rows]
  gaps = np.diff(energies, axis=1)
  inside = (energies[:, :-1] >= energy_lo) & (energies[:, 1:] <= energy_hi)
  candidates = []
  for pair in range(gaps.shape[1]):
    if not np.any(inside[:, pair]):
      continue
    series = gaps[:, pair]
    ceiling = float(np.max(series[inside[:, pair]]))
    for k in range(1, len(rows) - 1):
      if not inside[k, pair]:
        continue
      if series[k] < series[k - 1] and series[k] <= series[k + 1] and series[k] < 0.5 * ceiling:
        candidates.append((int(rows[k]), pair))
  return candidates

def avoided_crossing_gap(
  flow: SpectralFlow,
  window: tuple[float, float, float, float],
  refine: bool = True,
  rel_tol: float = 0.01,
) -> CrossingGap:
  """Minimal separation of the two levels forming the single near-degeneracy in `window`.

  Args:
    flow: The spectral flow
    window: (lambda_lo, lambda_hi, E_lo, E_hi), energies in units of 1/l
    refine: Refine the grid locally until the gap changes by less than `rel_tol`
    rel_tol: Relative convergence threshold of the refinement

  Returns:
    CrossingGap: The gap g and the depth lambda* attaining it

  Raises:
    CrossingWindowError: If the window holds zero or several candidate crossings
  """
  candidates = _crossing_candidates(flow, window)
  if len(candidates) != 1:
    raise CrossingWindowError(
      f"Expected exactly one near-degeneracy in window {window}, found {len(candidates)}; narrow the window"
    )
  row, pair = candidates[0]
  gap = float(flow.energies[row, pair + 1] - flow.energies[row, pair])
  location = float(flow.lambda_grid[row])
  if not refine or flow.spec is None or flow.potential is None or gap == 0.0:
    return CrossingGap(gap=gap, location=location)

  lambda_lo, lambda_hi = window[0], window[1]
  half_width = float(max(flow.lambda_grid[row] - flow.lambda_grid[row - 1], flow.lambda_grid[row + 1] - flow.lambda_grid[row]))
  for _ in range(40):
    samples = np.linspace(max(location - half_width, lambda_lo), min(location + half_width, lambda_hi), 9)
    sampled_gaps = []
    for lam in samples:
      dense = build_hamiltonian(flow.spec, flow.potential, float(lam)).to_dense()
      lower, upper = la.eigvalsh(dense, subset_by_index=[pair, pair + 1])
      sampled_gaps.append(float(upper - lower))
    best = int(np.argmin(sampled_gaps))
    improvement = gap - sampled_gaps[best]
    if improvement > 0:
      gap, location = sampled_gaps[best], float(samples[best])
    if gap == 0.0 or improvement <= rel_tol * (gap + max(improvement, 0.0)):
      break
    half_width /= 4.0
  return CrossingGap(gap=gap, location=location)
