"""Lattice geometry, potential, ramp schedules and assembly of the staggered Hamiltonian."""

import logging
import math
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from diracsea.models.lattice import (
  Boundary,
  GaussianPotential,
  LatticeSpec,
  RampSchedule,
  RampShape,
  StaggeredCopy,
)
from diracsea.models.operator import HermitianOperator

logger = logging.getLogger(__name__)

# Hopping from an a-amplitude at (m, n) to the b-amplitude at (m + dm, n + dn), in units of 1/(2l).
A_TO_B_HOPPINGS: tuple[tuple[tuple[int, int], complex], ...] = (
  ((1, 0), 1j),
  ((-1, 0), -1j),
  ((0, 1), 1.0),
  ((0, -1), -1.0),
)

# Direction index d of `tunneling_phase` -> lattice step (dm, dn): 0 = +y, 1 = +x, 2 = -y, 3 = -x.
DIRECTION_STEPS: dict[int, tuple[int, int]] = {0: (0, 1), 1: (1, 0), 2: (0, -1), 3: (-1, 0)}

_QUARTER_TURNS = (1 + 0j, 1j, -1 + 0j, -1j)


def site_coordinates(spec: LatticeSpec) -> tuple[np.ndarray, np.ndarray]:
  """Integer (m, n) coordinates of every site, indexed n * nx + m."""
  m, n = np.meshgrid(np.arange(spec.nx), np.arange(spec.ny), indexing="xy")
  return m.ravel(), n.ravel()

def site_positions(spec: LatticeSpec) -> np.ndarray:
  """(nx*ny, 2) array of site positions in units of l."""
  m, n = site_coordinates(spec)
  return np.column_stack((m, n)).astype(float) * spec.lattice_constant

def site_classes(spec: LatticeSpec) -> np.ndarray:
  """Boolean mask of a-class sites (those carrying an a-amplitude) for the simulated copy."""
  m, n = site_coordinates(spec)
  even = (m + n) % 2 == 0
  return even if spec.staggered_copy == StaggeredCopy.A else ~even


def gaussian_potential_at(pot: GaussianPotential, x: Sequence[float] | np.ndarray) -> float | np.ndarray:
  """Evaluate V(x) = V0 exp(-|x - center|^2 / sigma^2).

  Args:
    pot: The potential
    x: A single position (x, y) or an (..., 2) array of positions, in units of l

  Returns:
    The potential, a float for a single position
  """
  positions = np.asarray(x, dtype=float)
  distance_squared = np.sum((positions - np.asarray(pot.center)) ** 2, axis=-1)
  values = pot.v0 * np.exp(-distance_squared / pot.sigma**2)
  if np.ndim(values) == 0:
    return float(values)
  return values


def _neighbour_pairs(spec: LatticeSpec, sources: np.ndarray, dm: int, dn: int) -> tuple[np.ndarray, np.ndarray]:
  """Indices of (source, target) pairs one step (dm, dn) apart; open edges drop missing neighbours."""
  m = sources % spec.nx
  n = sources // spec.nx
  target_m = m + dm
  target_n = n + dn
  if spec.boundary == Boundary.PERIODIC:
    target_m %= spec.nx
    target_n %= spec.ny
    keep = np.ones_like(sources, dtype=bool)
  else:
    keep = (target_m >= 0) & (target_m < spec.nx) & (target_n >= 0) & (target_n < spec.ny)
  return sources[keep], (target_n * spec.nx + target_m)[keep]

def build_hamiltonian(spec: LatticeSpec, pot: GaussianPotential, lam: float) -> HermitianOperator:
  """Assemble H(lambda) for the simulated staggered copy.

  Diagonal: -lambda V(x) + M on a-class sites and -lambda V(x) - M on b-class sites. Off-diagonal: nearest-neighbour
  tunneling i/(2l) towards +x, -i/(2l) towards -x, 1/(2l) towards +y and -1/(2l) towards -y from every a-amplitude,
  plus Hermitian conjugates.

  Args:
    spec: The lattice
    pot: The binding potential
    lam: Dimensionless depth lambda

  Returns:
    HermitianOperator: The sparse Hamiltonian
  """
  if not math.isfinite(lam):
    raise ValueError(f"lambda must be finite, got {lam}")

  dimension = spec.dimension
  a_mask = site_classes(spec)
  diagonal = -lam * gaussian_potential_at(pot, site_positions(spec)) + np.where(a_mask, spec.mass, -spec.mass)

  index = np.arange(dimension)
  rows = [index]
  cols = [index]
  values = [diagonal.astype(complex)]

  hop = 1.0 / (2.0 * spec.lattice_constant)
  a_sites = index[a_mask]
  for (dm, dn), amplitude in A_TO_B_HOPPINGS:
    sources, targets = _neighbour_pairs(spec, a_sites, dm, dn)
    forward = np.full(len(sources), amplitude * hop, dtype=complex)
    rows.extend([targets, sources])
    cols.extend([sources, targets])
    values.extend([forward, forward.conj()])

  matrix = sp.coo_matrix(
    (np.concatenate(values), (np.concatenate(rows), np.concatenate(cols))),
    shape=(dimension, dimension),
  ).tocsr()

  is_hermitian = (matrix - matrix.conj().T).count_nonzero() == 0
  assert is_hermitian, "Assembled Hamiltonian is not Hermitian, the hopping table is inconsistent"
  return HermitianOperator(matrix=matrix, potential_amplitude=float(lam), is_hermitian=is_hermitian)


def spectral_radius_bound(operator: HermitianOperator) -> float:
  """Gershgorin upper bound on the spectral radius (max absolute row sum)."""
  return float(spla.norm(operator.matrix, np.inf))


def total_duration(sched: RampSchedule) -> float:
  return sched.t_tot

def _ramp(fraction: float, shape: RampShape) -> float:
  if shape == RampShape.LINEAR:
    return fraction
  return math.sin(math.pi * fraction / 2.0) ** 2

def schedule_lambda(sched: RampSchedule, t: float) -> float:
  """lambda(t) for 0 <= t <= T_tot, in units of 1/M.

  Raises:
    ValueError: If t lies outside the schedule
  """
  t_tot = sched.t_tot
  slack = 1e-12 * max(t_tot, 1.0)
  if t < -slack or t > t_tot + slack:
    raise ValueError(f"t={t} outside the schedule [0, {t_tot}]")
  t = min(max(t, 0.0), t_tot)

  if t <= sched.t_on:
    return sched.lambda_max * _ramp(t / sched.t_on, sched.shape)
  if t <= sched.t_on + sched.t_hold:
    return sched.lambda_max
  fraction = min((t - sched.t_on - sched.t_hold) / sched.t_off, 1.0)
  return sched.lambda_max + (sched.lambda_final - sched.lambda_max) * _ramp(fraction, sched.shape)

def scaled_schedule(sched: RampSchedule, t_tot: float, lambda_max: float) -> RampSchedule:
  """Retarget a schedule template: phases rescaled proportionally to `t_tot`, depth replaced by `lambda_max`."""
  if t_tot <= 0:
    raise ValueError(f"t_tot must be positive, got {t_tot}")
  factor = t_tot / total_duration(sched)
  return RampSchedule.model_validate({
    **sched.model_dump(),
    "lambda_max": lambda_max,
    "t_on": sched.t_on * factor,
    "t_hold": sched.t_hold * factor,
    "t_off": sched.t_off * factor,
  })


def brillouin_zone_contains(spec: LatticeSpec, k: Sequence[float]) -> bool:
  """Whether k lies in the diamond |k_x| + |k_y| <= pi/l (boundary included)."""
  limit = math.pi / spec.lattice_constant
  return abs(k[0]) + abs(k[1]) <= limit * (1 + 1e-12)

def dispersion_relation(k: Sequence[float], mass: float, lattice_constant: float = 1.0) -> tuple[float, float]:
  """+-sqrt(M^2 + (sin^2 k_x l + sin^2 k_y l) / l^2) without any domain check. Allows M = 0."""
  l = lattice_constant
  energy = math.sqrt(mass**2 + (math.sin(k[0] * l) ** 2 + math.sin(k[1] * l) ** 2) / l**2)
  return energy, -energy

def free_dispersion(spec: LatticeSpec, k: Sequence[float]) -> tuple[float, float]:
  """Upper and lower band energies of the free lattice at quasi-momentum k.

  Raises:
    ValueError: If k lies outside the first Brillouin zone
  """
  if not brillouin_zone_contains(spec, k):
    raise ValueError(f"k={tuple(k)} lies outside the Brillouin zone |kx| + |ky| <= pi/l")
  return dispersion_relation(k, spec.mass, spec.lattice_constant)

def _fold_into_zone(kx: float, ky: float) -> tuple[float, float]:
  kx = (kx + math.pi) % (2 * math.pi) - math.pi
  ky = (ky + math.pi) % (2 * math.pi) - math.pi
  if abs(kx) + abs(ky) > math.pi:
    kx -= math.copysign(math.pi, kx)
    ky -= math.copysign(math.pi, ky)
  return kx, ky

def momentum_grid(spec: LatticeSpec) -> list[tuple[float, float]]:
  """Allowed quasi-momenta of a periodic single-copy lattice, folded into the diamond zone.

  k = (2 pi j / nx, 2 pi j' / ny) modulo the copy's reciprocal lattice spanned by (pi, pi) and (pi, -pi), which
  leaves nx * ny / 2 points. Each carries one particle and one antiparticle band energy.
  """
  if spec.boundary != Boundary.PERIODIC:
    raise ValueError("Quasi-momentum is only a good quantum number for periodic boundaries")
  l = spec.lattice_constant
  grid = []
  for j in range(spec.nx // 2):
    for j_prime in range(spec.ny):
      kx, ky = _fold_into_zone(2 * math.pi * j / spec.nx, 2 * math.pi * j_prime / spec.ny)
      grid.append((kx / l, ky / l))
  return grid


def tunneling_phase(n: int, m: int, d: int) -> complex:
  """Tunneling amplitude exp(i pi [(n + m)(d - 1) + d/2]) leaving site (n, m) in direction d.

  The exponent is always a multiple of pi/2, so the value is returned exactly from the quarter turns. Directions
  follow DIRECTION_STEPS. With this mapping the phases reproduce the copy-A hoppings of `build_hamiltonian` exactly;
  copy B agrees up to the gauge transformation psi(m, n) -> (-1)^n psi(m, n).
  """
  if d not in DIRECTION_STEPS:
    raise ValueError(f"Direction must be one of 0..3, got {d}")
  quarter_turns = (2 * (n + m) * (d - 1) + d) % 4
  return _QUARTER_TURNS[quarter_turns]

def phase_hopping_operator(spec: LatticeSpec) -> sp.csr_matrix:
  """Hopping part of the Hamiltonian assembled from `tunneling_phase` alone (no mass, no potential)."""
  m, n = site_coordinates(spec)
  sources = np.arange(spec.dimension)
  hop = 1.0 / (2.0 * spec.lattice_constant)
  rows, cols, values = [], [], []
  for d, (dm, dn) in DIRECTION_STEPS.items():
    kept, targets = _neighbour_pairs(spec, sources, dm, dn)
    rows.append(targets)
    cols.append(kept)
    values.append(np.array([tunneling_phase(int(n[s]), int(m[s]), d) * hop for s in kept], dtype=complex))
  return sp.coo_matrix(
    (np.concatenate(values), (np.concatenate(rows), np.concatenate(cols))),
    shape=(spec.dimension, spec.dimension),
  ).tocsr()
