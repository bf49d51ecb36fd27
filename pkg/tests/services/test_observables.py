import numpy as np
import pytest
import scipy.linalg as la
from scipy.stats import unitary_group

from diracsea.errors import NumericalError, UnitarityError
from diracsea.models.evolution import EvolutionConfig, Propagator, Representation
from diracsea.models.lattice import GaussianPotential, LatticeSpec, RampSchedule
from diracsea.models.observables import FitMode, Occupation, SpectralProjectors
from diracsea.models.spectral import EigenSystem
from diracsea.services.evolution import evolve, identity_propagator
from diracsea.services.lattice_model import build_hamiltonian
from diracsea.services.observables import (
  free_projectors,
  hs_blocks,
  instantaneous_spectrum,
  pair_production_report,
  particle_number,
  production_spectrum,
  resonance_energy,
  split_spontaneous,
)
from diracsea.services.spectral import diagonalize


def two_site_toy() -> tuple[LatticeSpec, EigenSystem]:
  """One a and one b amplitude without hopping: energies -M and +M."""
  spec = LatticeSpec(nx=3, ny=3, mass=1.0)
  return spec, EigenSystem(energies=np.array([-1.0, 1.0]), states=np.eye(2), source_lambda=0.0)

def full_propagator(matrix: np.ndarray) -> Propagator:
  return identity_propagator(matrix.shape[0])._replace(columns=matrix.astype(complex))

def lattice(size: int) -> tuple[LatticeSpec, GaussianPotential]:
  spec = LatticeSpec(nx=size, ny=size, mass=0.5)
  center = (size - 1) / 2
  return spec, GaussianPotential(v0=0.5, sigma=2.0, center_x=center, center_y=center)

def exact_propagator(spec: LatticeSpec, pot: GaussianPotential, lam: float, t: float) -> Propagator:
  return full_propagator(la.expm(-1j * build_hamiltonian(spec, pot, lam).to_dense() * t))


def test_free_projectors_of_two_site_toy():
  """Test that the toy splits into one particle and one antiparticle state."""
  spec, es = two_site_toy()
  projectors = free_projectors(es, spec)
  assert (projectors.n_plus, projectors.n_minus) == (1, 1)
  assert projectors.plus_energies.tolist() == [1.0]

def test_free_projectors_of_free_lattice():
  """Test the sublattice imbalance and completeness on the free 21x21 lattice."""
  spec, pot = lattice(21)
  projectors = free_projectors(diagonalize(build_hamiltonian(spec, pot, 0.0)), spec)
  assert abs(projectors.n_plus - projectors.n_minus) <= 1
  assert projectors.n_plus + projectors.n_minus == 441
  F, G = projectors.plus_basis, projectors.minus_basis
  np.testing.assert_allclose(F @ F.conj().T + G @ G.conj().T, np.eye(441), atol=1e-10)
  np.testing.assert_allclose(G.conj().T @ F, 0.0, atol=1e-10)

def test_free_projectors_need_free_spectrum():
  """Test that a spectrum at lambda != 0 is rejected and a gap state is a hard error."""
  spec, es = two_site_toy()
  with pytest.raises(ValueError):
    free_projectors(es._replace(source_lambda=1.0), spec)
  with pytest.raises(AssertionError):
    free_projectors(es._replace(energies=np.array([-1.0, 0.2])), spec)


def test_particle_number_of_identity_is_zero():
  """Test that no pairs exist without evolution."""
  spec, pot = lattice(5)
  projectors = free_projectors(diagonalize(build_hamiltonian(spec, pot, 0.0)), spec)
  assert particle_number(identity_propagator(25), projectors) == pytest.approx(0.0, abs=1e-20)

def test_particle_number_of_swap_is_two():
  """Test that exchanging one Sigma+ and one Sigma- state creates one pair."""
  spec, es = two_site_toy()
  projectors = free_projectors(es, spec)
  swap = np.array([[0.0, 1.0], [1.0, 0.0]])
  assert particle_number(full_propagator(swap), projectors) == pytest.approx(2.0)

  minus_only = Propagator(
    representation=Representation.COLUMN_BLOCKS,
    columns=swap @ projectors.minus_basis,
    plus_columns=0,
    time=0.0,
    step=0,
    unitarity_defect=0.0,
  )
  assert particle_number(minus_only, projectors) == pytest.approx(2.0)
  assert hs_blocks(minus_only, projectors).minus_plus == pytest.approx(1.0)

def test_particle_number_flags_non_unitary_propagator():
  """Test that a tainted propagator raises in strict mode."""
  spec, es = two_site_toy()
  projectors = free_projectors(es, spec)
  tainted = full_propagator(np.eye(2))._replace(unitarity_defect=1e-6, step=7)
  with pytest.raises(UnitarityError):
    particle_number(tainted, projectors, strict=True)
  assert particle_number(tainted, projectors) == pytest.approx(0.0)

def test_particle_number_rejects_dimension_mismatch():
  """Test that U and the projectors must share a dimension."""
  spec, es = two_site_toy()
  with pytest.raises(ValueError):
    particle_number(identity_propagator(3), free_projectors(es, spec))

def test_particle_number_is_basis_covariant():
  """Test invariance under unitary rotations inside Sigma+ and inside Sigma-."""
  spec, pot = lattice(10)
  projectors = free_projectors(diagonalize(build_hamiltonian(spec, pot, 0.0)), spec)
  U = exact_propagator(spec, pot, 4.0, 3.0)
  rotated = SpectralProjectors(
    plus_basis=projectors.plus_basis @ unitary_group.rvs(projectors.n_plus, random_state=1),
    minus_basis=projectors.minus_basis @ unitary_group.rvs(projectors.n_minus, random_state=2),
    plus_energies=projectors.plus_energies,
    minus_energies=projectors.minus_energies,
  )
  assert particle_number(U, rotated) == pytest.approx(particle_number(U, projectors), abs=1e-9)
  assert particle_number(U, projectors) > 1e-3


def test_production_spectrum_of_identity_is_empty():
  """Test that every occupation vanishes without evolution."""
  spec, pot = lattice(5)
  projectors = free_projectors(diagonalize(build_hamiltonian(spec, pot, 0.0)), spec)
  particles, antiparticles = production_spectrum(identity_propagator(25), projectors)
  assert len(particles) == projectors.n_plus
  assert len(antiparticles) == projectors.n_minus
  assert max(entry.occupation for entry in particles + antiparticles) < 1e-25
  assert [entry.index for entry in antiparticles] == list(range(projectors.n_minus))
  assert particles[0].index == projectors.n_minus

def test_production_spectrum_needs_both_blocks():
  """Test that a minus-only propagator has no particle spectrum."""
  spec, es = two_site_toy()
  projectors = free_projectors(es, spec)
  minus_only = Propagator(Representation.COLUMN_BLOCKS, projectors.minus_basis.astype(complex), 0, 0.0, 0, 0.0)
  with pytest.raises(ValueError):
    production_spectrum(minus_only, projectors)

def test_report_invariants_on_supercritical_run():
  """Test charge balance, the Pauli bound and the occupation sums on a deep fast ramp."""
  spec, pot = lattice(7)
  sched = RampSchedule(lambda_max=8.0, t_on=2.0, t_hold=2.0, t_off=2.0)
  projectors = free_projectors(diagonalize(build_hamiltonian(spec, pot, 0.0)), spec)
  times, lambdas, counts = [], [], []

  def record(U: Propagator, lam: float) -> None:
    times.append(U.time * spec.mass)
    lambdas.append(lam)
    counts.append(particle_number(U, projectors, strict=True))

  result = evolve(spec, pot, sched, EvolutionConfig(checkpoint_stride=100, snapshot_count=0), basis=projectors, on_checkpoint=record)
  report = pair_production_report(times, lambdas, counts, result.propagator, projectors)

  blocks = hs_blocks(result.propagator, projectors)
  assert blocks.minus_plus == pytest.approx(blocks.plus_minus, abs=1e-9)
  assert report.n_final > 1e-3
  assert report.particle_total == pytest.approx(report.antiparticle_total, abs=1e-8)
  assert report.n_final == pytest.approx(report.particle_total + report.antiparticle_total, abs=1e-8)
  for entry in report.particle_spectrum + report.antiparticle_spectrum:
    assert -1e-9 <= entry.occupation <= 1.0 + 1e-9
  assert report.times[0] == 0.0
  assert report.n_of_t[0] == pytest.approx(0.0, abs=1e-10)

def test_report_rejects_non_vacuum_start():
  """Test that a non-zero N(0) is reported as a numerical failure."""
  spec, es = two_site_toy()
  projectors = free_projectors(es, spec)
  with pytest.raises(NumericalError):
    pair_production_report([0.0], [0.0], [0.5], full_propagator(np.eye(2)), projectors)


def test_instantaneous_spectrum_equals_free_spectrum_when_switched_off():
  """Test that measuring in the H0 eigenbasis reproduces the production spectrum."""
  spec, pot = lattice(5)
  es0 = diagonalize(build_hamiltonian(spec, pot, 0.0))
  projectors = free_projectors(es0, spec)
  U = exact_propagator(spec, pot, 3.0, 2.0)
  particles, antiparticles = production_spectrum(U, projectors)
  filled, holes = instantaneous_spectrum(U, es0, projectors)
  assert [entry.index for entry in filled] == [entry.index for entry in particles]
  np.testing.assert_allclose([e.occupation for e in filled], [e.occupation for e in particles], atol=1e-12)
  np.testing.assert_allclose([e.occupation for e in holes], [e.occupation for e in antiparticles], atol=1e-12)

def test_resonance_energy_weights_occupations_below_edge():
  """Test the occupation-weighted mean below -M."""
  spectrum = [
    Occupation(index=0, energy=-2.0, occupation=0.2),
    Occupation(index=1, energy=-1.5, occupation=0.6),
    Occupation(index=2, energy=-0.5, occupation=0.9),
  ]
  assert resonance_energy(spectrum, 1.0) == pytest.approx((-2.0 * 0.2 - 1.5 * 0.6) / 0.8)
  with pytest.raises(ValueError):
    resonance_energy(spectrum[2:], 1.0)


def test_split_spontaneous_subcritical_power_law():
  """Test the log-log fit on N = 4 / T."""
  series = [(t, 4.0 / t) for t in (25.0, 50.0, 100.0, 200.0)]
  fit = split_spontaneous(series, FitMode.SUBCRITICAL)
  assert fit.alpha == pytest.approx(1.0, abs=1e-9)
  assert fit.n_spont == 0.0
  assert fit.amplitude == pytest.approx(4.0, rel=1e-9)
  assert fit.fit_residual < 1e-12
  assert not fit.quality_warning

def test_split_spontaneous_supercritical_asymptote():
  """Test the nonlinear fit on N = 2 + 4 / T."""
  series = [(t, 2.0 + 4.0 / t) for t in (10.0, 20.0, 40.0, 80.0, 160.0)]
  fit = split_spontaneous(series, FitMode.SUPERCRITICAL)
  assert fit.n_spont == pytest.approx(2.0, abs=1e-6)
  assert fit.alpha == pytest.approx(1.0, abs=1e-4)
  assert fit.fit_residual < 1e-8

def test_split_spontaneous_input_contract():
  """Test the minimum number of durations and the quality flag on noisy data."""
  with pytest.raises(ValueError):
    split_spontaneous([(25.0, 1.0), (50.0, 0.5), (100.0, 0.25)], FitMode.SUBCRITICAL)
  with pytest.raises(ValueError):
    split_spontaneous([(25.0, 1.0), (50.0, 0.0), (100.0, 0.25), (200.0, 0.1)], FitMode.SUBCRITICAL)
  noisy = split_spontaneous([(25.0, 1.0), (50.0, 0.05), (100.0, 1.0), (200.0, 0.05)], FitMode.SUBCRITICAL)
  assert noisy.quality_warning
  assert noisy.fit_residual > 0
