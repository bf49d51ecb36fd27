import numpy as np
import pytest
import scipy.linalg as la
import scipy.sparse as sp

from diracsea.errors import BracketError, CrossingWindowError
from diracsea.models.lattice import GaussianPotential, LatticeSpec
from diracsea.models.spectral import EigenSystem, SpectralFlow, StateLabel
from diracsea.services.lattice_model import build_hamiltonian
from diracsea.services.spectral import (
  avoided_crossing_gap,
  classify_flow,
  classify_states,
  count_dived_states,
  deepest_gap_level,
  diagonalize,
  find_lambda_critical,
  ipr,
  level_spacing,
  spectral_flow,
)


def make_lattice(size: int = 9, mass: float = 0.5, sigma: float = 2.5) -> tuple[LatticeSpec, GaussianPotential]:
  spec = LatticeSpec(nx=size, ny=size, mass=mass)
  center = (size - 1) / 2
  return spec, GaussianPotential(v0=0.5, sigma=sigma, center_x=center, center_y=center)

def level_energy(spec: LatticeSpec, pot: GaussianPotential, lam: float, level: int) -> float:
  return float(la.eigvalsh(build_hamiltonian(spec, pot, lam).to_dense())[level])

def synthetic_flow(lambda_grid: np.ndarray, energies: np.ndarray) -> SpectralFlow:
  return SpectralFlow(
    lambda_grid=lambda_grid,
    energies=energies,
    iprs=np.zeros_like(energies),
    branches=[],
    breaks=[],
  )


def test_diagonalize_returns_orthonormal_eigensystem():
  """Test that the decomposition is ascending, orthonormal and solves H v = E v."""
  spec, pot = make_lattice(5)
  H = build_hamiltonian(spec, pot, 1.5)
  es = diagonalize(H)
  assert es.dimension == 25
  assert es.source_lambda == 1.5
  assert np.all(np.diff(es.energies) >= 0)
  np.testing.assert_allclose(es.states.conj().T @ es.states, np.eye(25), atol=1e-12)
  np.testing.assert_allclose(H.matrix @ es.states, es.states * es.energies, atol=1e-10)

def test_ipr_limits():
  """Test IPR of a localized and a fully extended state."""
  localized = np.zeros(16)
  localized[3] = 1.0
  assert ipr(localized) == pytest.approx(1.0)
  assert ipr(np.full(16, 0.25)) == pytest.approx(1.0 / 16)
  with pytest.raises(ValueError):
    ipr(np.ones(16))

def test_classify_free_lattice_has_no_bound_states():
  """Test that the free open 9x9 lattice has no gap states and a half-filled Dirac sea of 40 levels."""
  spec, pot = make_lattice(9)
  es = diagonalize(build_hamiltonian(spec, pot, 0.0))
  classification = classify_states(es, spec)
  assert classification.count(StateLabel.BOUND) == 0
  assert len(classification.labels) == 81
  assert int(np.count_nonzero(es.energies < 0)) == 40
  assert classification.count(StateLabel.POSITIVE_CONTINUUM) == 41

def test_classify_finds_bound_state_in_well():
  """Test that a moderate well pulls a localized state into the gap."""
  spec, pot = make_lattice(11, sigma=3.0)
  es = diagonalize(build_hamiltonian(spec, pot, 1.5))
  classification = classify_states(es, spec)
  assert classification.count(StateLabel.BOUND) >= 1
  bound = [k for k, label in enumerate(classification.labels) if label == StateLabel.BOUND]
  assert all(-spec.mass < es.energies[k] < spec.mass for k in bound)


def test_spectral_flow_levels_never_rise():
  """Test that every level energy is non-increasing in lambda for an attractive well."""
  spec, pot = make_lattice(7)
  flow = spectral_flow(spec, pot, np.linspace(0.0, 3.0, 16))
  assert flow.energies.shape == (16, 49)
  assert np.all(np.diff(flow.energies, axis=0) <= 1e-9)

def test_spectral_flow_branches_cover_every_level():
  """Test that continued branches account for every level at every grid point."""
  spec, pot = make_lattice(7)
  grid = np.linspace(0.0, 2.0, 11)
  flow = spectral_flow(spec, pot, grid, jobs=2)
  for k in range(len(grid)):
    owners = [
      branch.state_indices[k - branch.start]
      for branch in flow.branches
      if branch.start <= k < branch.start + len(branch.state_indices)
    ]
    assert sorted(owners) == list(range(49))
  for branch in flow.branches:
    assert len(flow.branch_lambdas(branch)) == len(branch.energies)

def test_spectral_flow_rejects_unsorted_grid():
  """Test that the lambda grid must ascend."""
  spec, pot = make_lattice(5)
  with pytest.raises(ValueError):
    spectral_flow(spec, pot, [0.0, 1.0, 0.5])
  with pytest.raises(ValueError):
    spectral_flow(spec, pot, [])


def test_find_lambda_critical_brackets_the_diving():
  """Test that the returned depth is supercritical and one tolerance below it is not."""
  spec, pot = make_lattice(9)
  level = deepest_gap_level(spec, pot)
  assert level == 40

  lambda_cr = find_lambda_critical(spec, pot, tol=1e-3)
  assert 0 < lambda_cr < 10 * spec.mass / pot.v0
  assert level_energy(spec, pot, lambda_cr, level) < -spec.mass
  assert level_energy(spec, pot, lambda_cr - 1e-3, level) >= -spec.mass

def test_find_lambda_critical_second_diving_is_deeper():
  """Test that the second diving happens after the first."""
  spec, pot = make_lattice(9)
  first = find_lambda_critical(spec, pot, tol=1e-3)
  second = find_lambda_critical(spec, pot, tol=1e-3, order=2)
  assert second > first

def test_find_lambda_critical_bracket_errors():
  """Test the bracket diagnostics."""
  spec, pot = make_lattice(9)
  with pytest.raises(BracketError, match="not reached"):
    find_lambda_critical(spec, pot, bracket=(0.0, 0.01))
  with pytest.raises(BracketError, match="starts supercritical"):
    find_lambda_critical(spec, pot, bracket=(9.0, 10.0))

def test_count_dived_states_at_zero_and_shallow_depth():
  """Test that nothing has dived without a deep potential."""
  spec, pot = make_lattice(7)
  assert count_dived_states(spec, pot, 0.0) == 0
  assert count_dived_states(spec, pot, 0.2) == 0
  with pytest.raises(ValueError):
    count_dived_states(spec, pot, -1.0)


def test_level_spacing_window():
  """Test the mean spacing of levels just below -M."""
  energies = np.array([-3.0, -2.0, -1.5, -1.2, -1.1, 0.5, 1.0])
  es = EigenSystem(energies=energies, states=np.eye(7), source_lambda=0.0)
  spec = LatticeSpec(nx=3, ny=3, mass=1.0)
  assert level_spacing(es, spec, 1.0) == pytest.approx(0.3)
  with pytest.raises(ValueError):
    level_spacing(es, spec, 0.05)


def two_level_energies(grid: np.ndarray, center: float, gap: float, offset: float = 0.0) -> np.ndarray:
  half = np.sqrt((grid - center) ** 2 + gap**2 / 4)
  return np.column_stack((offset - half, offset + half))

def test_avoided_crossing_gap_of_two_level_model():
  """Test that the minimum separation and its location are recovered on the grid."""
  grid = np.linspace(0.0, 2.0, 21)
  flow = synthetic_flow(grid, two_level_energies(grid, 1.0, 0.1))
  crossing = avoided_crossing_gap(flow, (0.0, 2.0, -10.0, 10.0))
  assert crossing.gap == pytest.approx(0.1)
  assert crossing.location == pytest.approx(1.0)

def test_avoided_crossing_gap_needs_a_single_candidate():
  """Test that a window holding two crossings is rejected and narrowing it resolves the ambiguity."""
  grid = np.linspace(0.0, 2.0, 21)
  energies = np.hstack((
    two_level_energies(grid, 0.5, 0.05, offset=-5.0),
    two_level_energies(grid, 1.5, 0.2, offset=5.0),
  ))
  flow = synthetic_flow(grid, energies)
  with pytest.raises(CrossingWindowError):
    avoided_crossing_gap(flow, (0.0, 2.0, -10.0, 10.0))

  crossing = avoided_crossing_gap(flow, (0.0, 2.0, -10.0, 0.0))
  assert crossing.gap == pytest.approx(0.05)
  assert crossing.location == pytest.approx(0.5)

def test_avoided_crossing_gap_on_lattice_refines():
  """Test that refinement on a real flow never reports a wider gap than the grid value."""
  spec, pot = make_lattice(7)
  grid = np.linspace(0.0, 6.0, 31)
  flow = spectral_flow(spec, pot, grid)
  coarse = None
  mass = spec.mass
  for lo in range(0, 25, 3):
    window = (float(grid[lo]), float(grid[lo + 6]), -6.0 * mass, -mass)
    try:
      coarse = avoided_crossing_gap(flow, window, refine=False)
    except CrossingWindowError:
      continue
    refined = avoided_crossing_gap(flow, window)
    assert refined.gap <= coarse.gap + 1e-12
    assert window[0] <= refined.location <= window[1]
    break
  if coarse is None:
    pytest.skip("no isolated crossing on this small lattice")


def test_free_spectrum_is_symmetric_about_zero():
  """Test {E} = {-E} at lambda = 0 once the unpaired levels at |E| = M are removed."""
  for size in (5, 6, 9):
    spec, pot = make_lattice(size)
    energies = diagonalize(build_hamiltonian(spec, pot, 0.0)).energies
    paired = np.sort(energies[np.abs(np.abs(energies) - spec.mass) > 1e-9])
    np.testing.assert_allclose(paired, -paired[::-1], atol=1e-9)

def test_constant_shift_moves_energies_and_keeps_states():
  """Test that H + cI has the eigenvectors of H with every energy shifted by c."""
  spec, pot = make_lattice(7)
  H = build_hamiltonian(spec, pot, 1.2)
  shift = 0.37
  shifted = diagonalize(H._replace(matrix=H.matrix + shift * sp.identity(spec.dimension, format="csr")))
  es = diagonalize(H)
  np.testing.assert_allclose(shifted.energies, es.energies + shift, atol=1e-12)
  np.testing.assert_allclose(H.matrix @ shifted.states, shifted.states * es.energies, atol=1e-10)

def test_deep_snapshot_has_localized_dived_state():
  """Test that a well far below the negative band holds a dived state with IPR far above the continuum median."""
  spec = LatticeSpec(nx=9, ny=9, mass=0.5)
  pot = GaussianPotential(v0=1.0, sigma=1.0, center_x=4.0, center_y=4.0)
  es = diagonalize(build_hamiltonian(spec, pot, 4.0))
  classification = classify_states(es, spec)
  assert classification.count(StateLabel.DIVED_BOUND) >= 1
  assert classification.labels[0] == StateLabel.DIVED_BOUND
  continuum = [w for w, label in zip(classification.ipr, classification.labels) if label == StateLabel.NEGATIVE_CONTINUUM]
  assert classification.ipr[0] > 5 * np.median(continuum)

def test_flow_classification_marks_only_continued_gap_states():
  """Test that dived labels along a flow equal count_dived_states and never reach the plain continuum."""
  spec, pot = make_lattice(7)
  lambda_cr = find_lambda_critical(spec, pot, tol=1e-3)
  top = lambda_cr + 0.2
  flow = spectral_flow(spec, pot, np.linspace(0.0, top, int(np.ceil(top / 0.05)) + 1))
  classifications = classify_flow(flow, spec.mass)
  assert classifications[-1].count(StateLabel.DIVED_BOUND) == count_dived_states(spec, pot, top) >= 1
  assert all(c.count(StateLabel.DIVED_BOUND) == 0 for c, lam in zip(classifications, flow.lambda_grid) if lam < lambda_cr - 1e-3)

def test_critical_depth_falls_with_well_width():
  """Test that wider wells dive earlier."""
  depths = []
  for sigma in (3.0, 5.0, 7.0):
    spec, pot = make_lattice(15, sigma=sigma)
    depths.append(find_lambda_critical(spec, pot, tol=1e-3))
  assert depths[0] > depths[1] > depths[2]
