"""Closed-form spectral data of the Dirichlet Laplacian on the box.

The normalized Laplacian is the matrix ``-Delta = I - P`` where ``P`` is
the transition matrix of the simple random walk killed on the boundary.
Its eigenvectors are products of 1D sine modes,

    phi_{i1,i2}(x1, x2) = (2/n) sin(x1 i1 pi / n) sin(x2 i2 pi / n),

with eigenvalues ``lambda_{i1,i2} = (lambda_{i1} + lambda_{i2}) / 2``
where ``lambda_i = 1 - cos(i pi / n)``.  The Green's function
``G = (I - P)^{-1}`` is both the expected-visit-count matrix of the
killed walk and the covariance of the equilibrium field; it is computed
here either by direct linear solve or from the eigenbasis, and the two
routes are required to agree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .lattice import LatticeBox, build_box

__all__ = [
    "SpectralData",
    "GreensMatrix",
    "lambda_1",
    "eigenpair",
    "eigenbasis",
    "phi_1",
    "phi_1_sum",
    "phi_hat_1",
    "greens_matrix",
    "greens_column",
    "transition_matrix",
    "dirichlet_laplacian",
    "survival_prediction",
    "t_star",
]


def _interior_coords(n: int):
    """Interior coordinate arrays (x1, x2) in box order."""
    m = n - 1
    idx = np.arange(m * m)
    x1 = 1 + idx % m
    x2 = 1 + idx // m
    return x1, x2


def lambda_1(n: int) -> float:
    """Smallest eigenvalue of ``-Delta``: exactly ``1 - cos(pi/n)``."""
    return 1.0 - math.cos(math.pi / n)


def eigenpair(n: int, i) -> tuple[float, np.ndarray]:
    """Closed-form eigenvalue and unit-norm eigenvector for mode ``i=(i1,i2)``."""
    i1, i2 = (int(c) for c in i)
    if not (1 <= i1 <= n - 1 and 1 <= i2 <= n - 1):
        raise ValueError(f"mode index {(i1, i2)} out of range for n={n}")
    lam = 0.5 * ((1.0 - math.cos(i1 * math.pi / n)) + (1.0 - math.cos(i2 * math.pi / n)))
    x1, x2 = _interior_coords(n)
    phi = (2.0 / n) * np.sin(x1 * i1 * math.pi / n) * np.sin(x2 * i2 * math.pi / n)
    return lam, phi


def phi_1(n: int) -> np.ndarray:
    """Principal eigenvector (positive, unit l2 norm)."""
    return eigenpair(n, (1, 1))[1]


def phi_1_sum(n: int) -> float:
    """Inner product of the principal eigenvector with the all-ones field.

    Equals ``(2/n) cot^2(pi/(2n))``, which is ``8n/pi^2 (1 + o(1))``.
    """
    return float(phi_1(n).sum())


def phi_hat_1(n: int) -> np.ndarray:
    """Survival-normalized principal mode ``phi_1 * <phi_1, 1>``.

    Strictly positive; its maximum (at the center) tends to ``16/pi^2``.
    """
    p = phi_1(n)
    return p * p.sum()


@dataclass(frozen=True)
class SpectralData:
    """Full eigenbasis: ``modes[k] = (i1, i2)`` with eigenvalue
    ``lambdas[k]`` and eigenvector ``vectors[:, k]`` (unit norm)."""

    n: int
    modes: np.ndarray     # (N, 2)
    lambdas: np.ndarray   # (N,)
    vectors: np.ndarray   # (N_sites, N_modes)

    @property
    def lambda_1(self) -> float:
        return float(self.lambdas[0])


def eigenbasis(n: int) -> SpectralData:
    """All ``(n-1)^2`` eigenpairs, modes ordered row-major by ``(i2, i1)``
    except that the principal mode ``(1, 1)`` is placed first."""
    m = n - 1
    i1g, i2g = _interior_coords(n)  # same grid shape works for mode indices
    lam1d = 1.0 - np.cos(np.arange(1, n) * math.pi / n)
    lambdas = 0.5 * (lam1d[i1g - 1] + lam1d[i2g - 1])
    x1, x2 = _interior_coords(n)
    s1 = np.sin(np.outer(x1, np.arange(1, n)) * math.pi / n)  # (sites, i1)
    s2 = np.sin(np.outer(x2, np.arange(1, n)) * math.pi / n)
    vectors = (2.0 / n) * s1[:, i1g - 1] * s2[:, i2g - 1]
    modes = np.column_stack([i1g, i2g])
    # principal mode first
    k0 = int(np.nonzero((i1g == 1) & (i2g == 1))[0][0])
    order = np.concatenate([[k0], np.delete(np.arange(m * m), k0)])
    return SpectralData(n=n, modes=modes[order], lambdas=lambdas[order],
                        vectors=vectors[:, order])


def transition_matrix(box: LatticeBox, sparse: bool = True):
    """Transition matrix of the walk killed on the boundary (interior block)."""
    ni = box.n_interior
    rows, cols = [], []
    for i in range(ni):
        for k in range(4):
            if box.nbr_interior[i, k]:
                rows.append(i)
                cols.append(box.nbr[i, k])
    P = sp.csr_matrix((np.full(len(rows), 0.25), (rows, cols)), shape=(ni, ni))
    return P if sparse else P.toarray()


def dirichlet_laplacian(box: LatticeBox, sparse: bool = True):
    """``-Delta = I - P`` on the interior."""
    P = transition_matrix(box, sparse=True)
    A = sp.identity(box.n_interior, format="csr") - P
    return A if sparse else A.toarray()


@dataclass
class GreensMatrix:
    """Dense Green's function ``G = (I - P)^{-1}`` over interior sites."""

    n: int
    matrix: np.ndarray
    _chol: np.ndarray | None = field(default=None, repr=False)

    def cholesky(self) -> np.ndarray:
        """Lower-triangular factor ``L`` with ``G = L L^T`` (cached)."""
        if self._chol is None:
            self._chol = np.linalg.cholesky(self.matrix)
        return self._chol

    def diagonal(self) -> np.ndarray:
        return np.diag(self.matrix)


def greens_matrix(n: int, method: str = "solve") -> GreensMatrix:
    """Green's function of the killed walk, dense.

    ``method="solve"`` inverts ``I - P`` directly; ``method="fourier"``
    assembles ``sum_i lambda_i^{-1} phi_i phi_i^T`` from the closed-form
    eigenbasis.  Both are exact up to dense-linear-algebra roundoff and
    are tested to agree entrywise.
    """
    box = build_box(n)
    if method == "solve":
        A = dirichlet_laplacian(box, sparse=False)
        G = scipy.linalg.solve(A, np.eye(box.n_interior), assume_a="pos")
        G = 0.5 * (G + G.T)
    elif method == "fourier":
        sd = eigenbasis(n)
        G = (sd.vectors / sd.lambdas) @ sd.vectors.T
        G = 0.5 * (G + G.T)
    else:
        raise ValueError(f"unknown method {method!r}")
    return GreensMatrix(n=n, matrix=G)


def greens_column(box: LatticeBox, x) -> np.ndarray:
    """Single column ``G(., x)`` by sparse solve; usable when the dense
    matrix would be too large."""
    i = box.index_of(x)
    if i >= box.n_interior:
        raise ValueError("x must be interior")
    A = dirichlet_laplacian(box, sparse=True)
    e = np.zeros(box.n_interior)
    e[i] = 1.0
    return sp.linalg.spsolve(A.tocsc(), e)


def survival_prediction(n: int, x, t: float) -> float:
    """Asymptotic no-absorption probability for the walk from ``x``.

    Returns ``phi_hat_1(x) exp(-lambda_1 t)`` clamped to [0, 1].  The
    formula is an asymptotic statement: it is only accurate once
    ``t >> n^2``, and the clamp matters near ``t = 0`` where the
    principal-mode amplitude exceeds 1 at central sites.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    box = build_box(n)
    i = box.index_of(x)
    if i >= box.n_interior:
        raise ValueError("x must be interior")
    val = phi_hat_1(n)[i] * math.exp(-lambda_1(n) * t)
    return float(min(max(val, 0.0), 1.0))


def t_star(n: int, a: float) -> float:
    """Cutoff center ``(2/pi^2) n^2 log a`` for initial height scale ``a``."""
    if a <= 1:
        raise ValueError("a must be > 1")
    return (2.0 / math.pi**2) * n * n * math.log(a)
