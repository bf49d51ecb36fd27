"""Second-quantized observables of the evolved Dirac sea: pair number, production spectra and adiabatic scaling fits."""

import logging
import math
from typing import Optional, Sequence

import numpy as np
import scipy.optimize as opt

from diracsea.errors import ConvergenceError, NumericalError, UnitarityError
from diracsea.models.evolution import Propagator, Representation
from diracsea.models.lattice import LatticeSpec
from diracsea.models.observables import (
  FitMode,
  HSBlocks,
  Occupation,
  PairProductionReport,
  ScalingFit,
  SpectralProjectors,
)
from diracsea.models.spectral import EigenSystem

logger = logging.getLogger(__name__)

UNITARITY_TOL = 1e-8
GAP_TOL = 1e-9
CHARGE_BALANCE_TOL = 1e-9
PAULI_TOL = 1e-9
VACUUM_TOL = 1e-10
MIN_FIT_POINTS = 4
FIT_QUALITY_RATIO = 0.1


def free_projectors(es0: EigenSystem, spec: LatticeSpec) -> SpectralProjectors:
  """Split the lambda = 0 eigenstates into the positive (Sigma+) and negative (Sigma-) spectral subspaces of H0.

  Raises:
    ValueError: If `es0` was not computed at lambda = 0
  """
  if es0.source_lambda != 0.0:
    raise ValueError(f"Free projectors need the lambda=0 spectrum, got lambda={es0.source_lambda}")
  smallest = float(np.min(np.abs(es0.energies)))
  assert smallest >= spec.mass - GAP_TOL, f"H0 has a level at |E|={smallest} inside the gap, the Hamiltonian is broken"

  plus = es0.energies > 0
  return SpectralProjectors(
    plus_basis=es0.states[:, plus],
    minus_basis=es0.states[:, ~plus],
    plus_energies=es0.energies[plus],
    minus_energies=es0.energies[~plus],
  )


def _evolved_blocks(U: Propagator, proj: SpectralProjectors) -> tuple[Optional[np.ndarray], np.ndarray]:
  """U F and U G (images of the Sigma+ and Sigma- bases); U F is None when only the minus block was carried."""
  if U.dimension != proj.dimension:
    raise ValueError(f"Dimension mismatch: propagator {U.dimension}, projectors {proj.dimension}")
  if U.representation == Representation.FULL_MATRIX:
    return U.matrix @ proj.plus_basis, U.matrix @ proj.minus_basis
  minus = U.minus_block
  if minus.shape[1] != proj.n_minus:
    raise ValueError(f"Propagator carries {minus.shape[1]} minus columns, projectors have {proj.n_minus}")
  plus = U.plus_block
  if plus is not None and plus.shape[1] != proj.n_plus:
    raise ValueError(f"Propagator carries {plus.shape[1]} plus columns, projectors have {proj.n_plus}")
  return plus, minus

def _check_unitarity(U: Propagator, strict: bool) -> None:
  if U.unitarity_defect <= UNITARITY_TOL:
    return
  message = f"Propagator at step {U.step} has unitarity defect {U.unitarity_defect:.3e}; the pair number is tainted"
  if strict:
    raise UnitarityError(message, step=U.step, defect=U.unitarity_defect)
  logger.warning(message)


def hs_blocks(U: Propagator, proj: SpectralProjectors) -> HSBlocks:
  """||P-UP+||^2_HS and ||P+UP-||^2_HS from the basis-projected blocks.

  When only the minus block was carried, the first equals the second by unitarity.
  """
  evolved_plus, evolved_minus = _evolved_blocks(U, proj)
  plus_minus = float(np.linalg.norm(proj.plus_basis.conj().T @ evolved_minus) ** 2)
  if evolved_plus is None:
    return HSBlocks(minus_plus=plus_minus, plus_minus=plus_minus)
  minus_plus = float(np.linalg.norm(proj.minus_basis.conj().T @ evolved_plus) ** 2)
  return HSBlocks(minus_plus=minus_plus, plus_minus=plus_minus)

def particle_number(U: Propagator, proj: SpectralProjectors, strict: bool = False) -> float:
  """Total number N(t) of created particles and antiparticles.

  Args:
    U: The propagator (full matrix or column blocks)
    proj: Sigma+- bases of H0
    strict: Raise instead of warning when U is not unitary to 1e-8

  Returns:
    float: ||P-UP+||^2_HS + ||P+UP-||^2_HS
  """
  _check_unitarity(U, strict)
  blocks = hs_blocks(U, proj)
  return blocks.minus_plus + blocks.plus_minus


def _occupations(weights: np.ndarray, energies: np.ndarray, offset: int) -> list[Occupation]:
  return [
    Occupation(index=offset + k, energy=float(energy), occupation=float(weight))
    for k, (energy, weight) in enumerate(zip(energies, weights))
  ]

def production_spectrum(U: Propagator, proj: SpectralProjectors) -> tuple[list[Occupation], list[Occupation]]:
  """Energy-resolved occupations of the free single-particle states after the evolution.

  n_p = sum_q |<f_p|U|g_q>|^2 for every positive-energy state p and n_q = sum_p |<g_q|U|f_p>|^2 for every negative-energy
  state q. Indices are level indices of the ascending H0 spectrum.

  Raises:
    ValueError: If the plus block was not carried
  """
  evolved_plus, evolved_minus = _evolved_blocks(U, proj)
  if evolved_plus is None:
    raise ValueError("The production spectrum needs both Sigma+ and Sigma- blocks")
  particles = np.sum(np.abs(proj.plus_basis.conj().T @ evolved_minus) ** 2, axis=1)
  antiparticles = np.sum(np.abs(proj.minus_basis.conj().T @ evolved_plus) ** 2, axis=1)
  return (
    _occupations(particles, proj.plus_energies, proj.n_minus),
    _occupations(antiparticles, proj.minus_energies, 0),
  )


def instantaneous_spectrum(
  U: Propagator,
  es_final: EigenSystem,
  proj: SpectralProjectors,
  fermi_energy: float = 0.0,
) -> tuple[list[Occupation], list[Occupation]]:
  """Occupations measured in the eigenbasis of H(lambda_final) instead of H0.

  States above `fermi_energy` report the weight of the evolved Dirac sea in them (particles); states below report the
  weight of the evolved Sigma+ in them (holes). This is not the pair number of H0 unless lambda_final = 0.
  """
  evolved_plus, evolved_minus = _evolved_blocks(U, proj)
  if evolved_plus is None:
    raise ValueError("The instantaneous spectrum needs both Sigma+ and Sigma- blocks")
  if es_final.dimension != proj.dimension:
    raise ValueError(f"Dimension mismatch: final spectrum {es_final.dimension}, projectors {proj.dimension}")

  above = es_final.energies > fermi_energy
  filled = np.sum(np.abs(es_final.states[:, above].conj().T @ evolved_minus) ** 2, axis=1)
  holes = np.sum(np.abs(es_final.states[:, ~above].conj().T @ evolved_plus) ** 2, axis=1)
  below_count = int(np.count_nonzero(~above))
  return (
    _occupations(filled, es_final.energies[above], below_count),
    _occupations(holes, es_final.energies[~above], 0),
  )


def resonance_energy(antiparticle_spectrum: Sequence[Occupation], mass: float) -> float:
  """Occupation-weighted mean energy of antiparticle occupations below -M.

  Raises:
    ValueError: If nothing is occupied below -M
  """
  below = [entry for entry in antiparticle_spectrum if entry.energy < -mass]
  weight = sum(entry.occupation for entry in below)
  if weight <= 0:
    raise ValueError("No antiparticle occupation below -M")
  return sum(entry.energy * entry.occupation for entry in below) / weight


def pair_production_report(
  times: Sequence[float],
  lambdas: Sequence[float],
  n_of_t: Sequence[float],
  U: Propagator,
  proj: SpectralProjectors,
  strict: bool = True,
) -> PairProductionReport:
  """Assemble the report of one evolution and check vacuum stability, charge balance and the Pauli bound.

  Raises:
    NumericalError: If any of the invariants fails
  """
  if n_of_t and times and times[0] == 0.0 and abs(n_of_t[0]) > VACUUM_TOL:
    raise NumericalError(f"N(0) = {n_of_t[0]:.3e}, the initial state is not the vacuum")

  n_final = particle_number(U, proj, strict=strict)
  blocks = hs_blocks(U, proj)
  if abs(blocks.minus_plus - blocks.plus_minus) > CHARGE_BALANCE_TOL:
    raise NumericalError(f"Charge balance violated: {blocks.minus_plus:.12f} vs {blocks.plus_minus:.12f}")

  particles: list[Occupation] = []
  antiparticles: list[Occupation] = []
  if U.representation == Representation.FULL_MATRIX or U.plus_block is not None:
    particles, antiparticles = production_spectrum(U, proj)
    for entry in particles + antiparticles:
      if not -PAULI_TOL <= entry.occupation <= 1.0 + PAULI_TOL:
        raise NumericalError(f"Occupation {entry.occupation} of level {entry.index} violates the Pauli bound")

  return PairProductionReport(
    times=list(times),
    lambdas=list(lambdas),
    n_of_t=list(n_of_t),
    particle_spectrum=particles,
    antiparticle_spectrum=antiparticles,
    n_final=n_final,
  )


def _power_law(t_tot: np.ndarray, n_spont: float, amplitude: float, alpha: float) -> np.ndarray:
  return n_spont + amplitude * t_tot ** (-alpha)

def split_spontaneous(series: Sequence[tuple[float, float]], mode: FitMode) -> ScalingFit:
  """Fit N(T_tot) = N_spont + c T_tot^-alpha over a sweep column.

  Subcritical mode forces N_spont = 0 and fits a straight line in log-log space. Supercritical mode fits all three
  parameters by nonlinear least squares.

  Args:
    series: (T_tot, N_final) pairs from one schedule shape and lambda_max
    mode: Fit model

  Returns:
    ScalingFit: Parameters, RMS residual and a quality flag

  Raises:
    ValueError: If fewer than four distinct T_tot values are given, or N <= 0 in subcritical mode
    ConvergenceError: If the nonlinear fit does not converge
  """
  by_duration = dict(sorted(series))
  if len(by_duration) < MIN_FIT_POINTS:
    raise ValueError(f"Need at least {MIN_FIT_POINTS} distinct T_tot values, got {len(by_duration)}")
  t_tot = np.array(list(by_duration.keys()), dtype=float)
  counts = np.array(list(by_duration.values()), dtype=float)
  if np.any(t_tot <= 0):
    raise ValueError("T_tot values must be positive")

  if mode == FitMode.SUBCRITICAL:
    if np.any(counts <= 0):
      raise ValueError("Subcritical fits need N > 0 at every T_tot")
    slope, intercept = np.polyfit(np.log(t_tot), np.log(counts), 1)
    n_spont, amplitude, alpha = 0.0, float(math.exp(intercept)), float(-slope)
  else:
    guess_amplitude = (counts[0] - counts[-1]) * t_tot[0]
    try:
      parameters, _ = opt.curve_fit(
        _power_law,
        t_tot,
        counts,
        p0=(float(counts[-1]), float(guess_amplitude) or 1.0, 1.0),
        maxfev=20000,
      )
    except (RuntimeError, opt.OptimizeWarning) as e:
      raise ConvergenceError(f"Supercritical scaling fit did not converge: {e}") from e
    n_spont, amplitude, alpha = (float(value) for value in parameters)

  residual = float(np.sqrt(np.mean((_power_law(t_tot, n_spont, amplitude, alpha) - counts) ** 2)))
  quality_warning = residual > FIT_QUALITY_RATIO * float(np.mean(np.abs(counts)))
  if quality_warning:
    logger.warning(f"{mode.value} scaling fit residual {residual:.3e} exceeds 10% of the mean N")
  return ScalingFit(
    mode=mode,
    alpha=alpha,
    n_spont=n_spont,
    amplitude=amplitude,
    fit_residual=residual,
    quality_warning=quality_warning,
  )
