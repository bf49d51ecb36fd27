import math

import pytest

from diracsea.main import main
from diracsea.storage.artifacts import read_csv, read_manifest

CONFIG = """
[lattice]
nx = 9
ny = 9
mass = 0.5

[potential]
v0 = 0.5
sigma = 2.0
center_x = 4.0
center_y = 4.0

[schedule]
lambda_max = 1.0
t_on = 1.0
t_hold = 0.0
t_off = 1.0

[dispersion]
resolution = {resolution}
{extra}
"""


def run_dispersion(tmp_path, resolution: int, extra: str = ""):
  config = tmp_path / "dispersion.toml"
  config.write_text(CONFIG.format(resolution=resolution, extra=extra))
  out = tmp_path / "out"
  assert main(["dispersion", "--config", str(config), "--out", str(out)]) == 0
  return read_csv(out / "dispersion.csv"), out


def test_single_point_is_the_zone_center(tmp_path):
  """Test that resolution 1 samples k = 0 with E = +-M."""
  table, out = run_dispersion(tmp_path, 1)
  assert table.header == ["kx", "ky", "E_plus", "E_minus"]
  assert len(table.rows) == 1
  assert table.column("E_plus") == [0.5]
  assert table.column("E_minus") == [-0.5]
  assert table.manifest_hash == read_manifest(out).hash

def test_band_maximum_on_coarse_grid(tmp_path):
  """Test that the upper band peaks at sqrt(M^2 + 2) at (+-pi/2, +-pi/2)."""
  table, _ = run_dispersion(tmp_path, 5)
  assert max(table.column("E_plus")) == pytest.approx(math.sqrt(0.25 + 2.0), abs=1e-12)
  assert all(abs(kx) + abs(ky) <= math.pi + 1e-9 for kx, ky in zip(table.column("kx"), table.column("ky")))
  for upper, lower in zip(table.column("E_plus"), table.column("E_minus")):
    assert upper == -lower
    assert upper >= 0.5

def test_massless_override_shows_dirac_points(tmp_path):
  """Test that M = 0 closes the gap at the zone center and at the four zone corners."""
  table, out = run_dispersion(tmp_path, 5, extra="mass = 0.0")
  gapless = [energy for energy in table.column("E_plus") if energy < 1e-12]
  assert len(gapless) == 5
  assert read_manifest(out).derived["mass"] == 0.0
