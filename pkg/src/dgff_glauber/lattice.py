"""Geometry of the square box, its outer boundary, and harmonic utilities.

The domain is the set of interior sites ``{1, ..., n-1}^2`` in ``Z^2``
together with the 4(n-1) outer-boundary sites at graph distance 1 from
it.  The four corner sites such as ``(0, 0)`` are excluded: they are
never edge-adjacent to an interior site, so they cannot influence any
update.

Fields on the closed box live in a single flat "padded" array: interior
sites first (row-major by ``(x2, x1)``), then boundary sites in the same
order.  All event-driven code works on padded arrays so that a site
update never needs to distinguish interior from boundary neighbours.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg, spsolve

__all__ = [
    "LatticeBox",
    "HeightField",
    "build_box",
    "neighbors",
    "harmonic_extension",
]

# Neighbour order used everywhere: +e1, -e1, +e2, -e2.
_STEPS = ((1, 0), (-1, 0), (0, 1), (0, -1))


@dataclass(frozen=True)
class LatticeBox:
    """Immutable geometry of the box with side parameter ``n``.

    Attributes
    ----------
    n : side parameter; the interior is ``{1, ..., n-1}^2``.
    interior : ``(N, 2)`` int array of interior coordinates, row-major
        by ``(x2, x1)``.
    boundary : ``(B, 2)`` int array of edge-adjacent boundary
        coordinates, sorted by ``(x2, x1)``.
    nbr : ``(N, 4)`` int array; ``nbr[i]`` are the padded indices of the
        four lattice neighbours of interior site ``i`` in the order
        ``+e1, -e1, +e2, -e2``.
    nbr_interior : ``(N, 4)`` bool array; True where the neighbour is
        itself interior.
    """

    n: int
    interior: np.ndarray
    boundary: np.ndarray
    nbr: np.ndarray
    nbr_interior: np.ndarray
    _index: dict = field(repr=False)

    @property
    def n_interior(self) -> int:
        return self.interior.shape[0]

    @property
    def n_boundary(self) -> int:
        return self.boundary.shape[0]

    @property
    def n_padded(self) -> int:
        return self.n_interior + self.n_boundary

    def index_of(self, site) -> int:
        """Padded index of a site (interior or boundary) given as (x1, x2)."""
        try:
            return self._index[tuple(int(c) for c in site)]
        except KeyError:
            raise ValueError(f"site {tuple(site)} is not in the box or its boundary") from None

    def site_of(self, index: int):
        """Coordinates of a padded index."""
        ni = self.n_interior
        if 0 <= index < ni:
            return (int(self.interior[index, 0]), int(self.interior[index, 1]))
        if ni <= index < self.n_padded:
            return (int(self.boundary[index - ni, 0]), int(self.boundary[index - ni, 1]))
        raise ValueError(f"padded index {index} out of range")

    def is_interior(self, site) -> bool:
        x1, x2 = site
        return 1 <= x1 <= self.n - 1 and 1 <= x2 <= self.n - 1

    def pad(self, values, boundary_values=None) -> np.ndarray:
        """Assemble a padded field from interior values and boundary data."""
        out = np.zeros(self.n_padded)
        out[: self.n_interior] = values
        if boundary_values is not None:
            out[self.n_interior:] = boundary_values
        return out


def build_box(n: int) -> LatticeBox:
    """Construct the box with interior ``{1, ..., n-1}^2``.

    Raises ``ValueError`` for ``n < 2`` (no interior site).
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    m = n - 1
    # Interior, row-major by (x2, x1).
    x2, x1 = np.mgrid[1:n, 1:n]
    interior = np.column_stack([x1.ravel(), x2.ravel()]).astype(np.int64)
    # Edge-adjacent boundary sites, sorted by (x2, x1).  Corners excluded.
    bnd = []
    for k in range(1, n):
        bnd.append((k, 0))
        bnd.append((0, k))
        bnd.append((n, k))
        bnd.append((k, n))
    bnd.sort(key=lambda s: (s[1], s[0]))
    boundary = np.asarray(bnd, dtype=np.int64)

    index = {}
    for i, (a, b) in enumerate(interior):
        index[(int(a), int(b))] = i
    for j, (a, b) in enumerate(boundary):
        index[(int(a), int(b))] = m * m + j

    nbr = np.empty((m * m, 4), dtype=np.int64)
    nbr_interior = np.empty((m * m, 4), dtype=bool)
    for i, (a, b) in enumerate(interior):
        for k, (da, db) in enumerate(_STEPS):
            j = index[(int(a) + da, int(b) + db)]
            nbr[i, k] = j
            nbr_interior[i, k] = j < m * m

    return LatticeBox(
        n=n,
        interior=interior,
        boundary=boundary,
        nbr=nbr,
        nbr_interior=nbr_interior,
        _index=index,
    )


def neighbors(box: LatticeBox, x) -> list:
    """The 4 lattice neighbours of interior site ``x``, in the order
    ``+e1, -e1, +e2, -e2``.  Rejects non-interior sites."""
    if not box.is_interior(x):
        raise ValueError(f"site {tuple(x)} is not interior")
    i = box.index_of(x)
    return [box.site_of(j) for j in box.nbr[i]]


@dataclass
class HeightField:
    """Real-valued surface on the interior with fixed boundary data.

    ``values`` has one entry per interior site (box ordering);
    ``boundary`` defaults to identically zero.
    """

    box: LatticeBox
    values: np.ndarray
    boundary: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.box.n_interior,):
            raise ValueError(
                f"values must have length {self.box.n_interior}, got {self.values.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("height values must be finite")
        if self.boundary is None:
            self.boundary = np.zeros(self.box.n_boundary)
        else:
            self.boundary = np.asarray(self.boundary, dtype=np.float64)
            if self.boundary.shape != (self.box.n_boundary,):
                raise ValueError("boundary data has wrong length")
            if not np.all(np.isfinite(self.boundary)):
                raise ValueError("boundary data must be finite")

    @classmethod
    def constant(cls, box: LatticeBox, c: float) -> "HeightField":
        return cls(box, np.full(box.n_interior, float(c)))

    def padded(self) -> np.ndarray:
        return self.box.pad(self.values, self.boundary)

    def copy(self) -> "HeightField":
        return HeightField(self.box, self.values.copy(), self.boundary.copy())

    def at(self, site) -> float:
        return float(self.padded()[self.box.index_of(site)])


def _interior_system(box: LatticeBox):
    """Sparse ``I - P`` on the interior plus the boundary-coupling matrix.

    ``P`` is the transition matrix of the simple random walk killed on
    the boundary; the second return value maps boundary data to the
    source term ``(1/4) * sum of boundary neighbours``.
    """
    ni, nb = box.n_interior, box.n_boundary
    rows_i, cols_i, rows_b, cols_b = [], [], [], []
    for i in range(ni):
        for k in range(4):
            j = box.nbr[i, k]
            if box.nbr_interior[i, k]:
                rows_i.append(i)
                cols_i.append(j)
            else:
                rows_b.append(i)
                cols_b.append(j - ni)
    P = sp.csr_matrix(
        (np.full(len(rows_i), 0.25), (rows_i, cols_i)), shape=(ni, ni)
    )
    Bc = sp.csr_matrix(
        (np.full(len(rows_b), 0.25), (rows_b, cols_b)), shape=(ni, nb)
    )
    A = sp.identity(ni, format="csr") - P
    return A, Bc


def harmonic_extension(box: LatticeBox, eta) -> np.ndarray:
    """Discrete harmonic extension of boundary data ``eta``.

    Returns a padded field equal to ``eta`` on the boundary and
    satisfying ``f(x) = (1/4) sum_{y ~ x} f(y)`` at every interior site.
    Solved by conjugate gradients on the symmetric positive definite
    system ``(I - P) f = (1/4) sum of boundary neighbours``, to residual
    tolerance 1e-12.
    """
    eta = np.broadcast_to(np.asarray(eta, dtype=np.float64), (box.n_boundary,)).copy()
    if not np.all(np.isfinite(eta)):
        raise ValueError("boundary data must be finite")
    A, Bc = _interior_system(box)
    rhs = Bc @ eta
    x, info = cg(A, rhs, rtol=1e-14, atol=1e-14 * (1.0 + np.abs(rhs).max()))
    if info != 0:  # tiny systems; direct solve as fallback
        x = spsolve(A.tocsc(), rhs)
    residual = np.abs(A @ x - rhs).max()
    if residual > 1e-12 * (1.0 + np.abs(eta).max()):
        x = spsolve(A.tocsc(), rhs)
    return box.pad(x, eta)
