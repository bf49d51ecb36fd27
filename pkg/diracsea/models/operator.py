"""Typed container for a lattice Hamiltonian snapshot."""

from typing import NamedTuple

import numpy as np
import scipy.sparse as sp


class HermitianOperator(NamedTuple):
  """Sparse single-particle Hamiltonian H(lambda) of one staggered copy.

  Rows and columns are ordered with x running fastest, i.e. site (m, n) has index n * nx + m.
  """
  matrix: sp.csr_matrix
  potential_amplitude: float
  is_hermitian: bool

  @property
  def dimension(self) -> int:
    return self.matrix.shape[0]

  def to_dense(self) -> np.ndarray:
    return self.matrix.toarray()

  def entries(self) -> list[tuple[int, int, complex]]:
    """All stored (row, col, value) triples in row-major order."""
    coo = self.matrix.tocoo()
    order = np.lexsort((coo.col, coo.row))
    return [(int(coo.row[k]), int(coo.col[k]), complex(coo.data[k])) for k in order]
