"""Per-realization spectral computations on assembled Hamiltonians.

Resolvent blocks chi_x (H - z)^{-1} chi_y are obtained from sparse
complex-shifted solves, one right-hand side per node of the y cell.
Spectral projectors and smooth operator functions f(H) use eigenpairs
(exact diagonalization at desk scale).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.interpolate import BSpline

from .geometry import CellIndex, cell_indicator
from .model import SparseOperator

__all__ = [
    "SpectralError",
    "EnergyWindow",
    "EigenSet",
    "CutoffFunction",
    "ResolventSolver",
    "ground_energy",
    "eigenpairs_in_window",
    "full_decomposition",
    "resolvent_block_norm",
    "projector_block_norm",
    "gevrey_cutoff",
    "cutoff_order_for_distance",
    "restricted_resolvent_block_norm",
    "spectrum_gap",
]

log = logging.getLogger(__name__)

DENSE_LIMIT = 2000
DIRECT_LIMIT = 50_000
MAX_CELL = 64
MAX_PAIRS = 2000
MAX_CUTOFF_ORDER = 40


class SpectralError(RuntimeError):
    """Solver failure, budget overflow, or an unusable cell."""


@dataclass(frozen=True)
class EnergyWindow:
    lo: float
    hi: float
    label: str = ""

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ValueError(f"empty energy window [{self.lo}, {self.hi}]")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def center(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def contains(self, E) -> np.ndarray:
        E = np.asarray(E)
        return (E >= self.lo) & (E <= self.hi)

    def distance(self, E) -> np.ndarray:
        E = np.asarray(E, dtype=float)
        return np.maximum(np.maximum(self.lo - E, E - self.hi), 0.0)


@dataclass
class EigenSet:
    """Eigenpairs (columns of ``vectors``) sorted by eigenvalue."""

    values: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray = field(default_factory=lambda: np.empty(0))
    method: str = "dense"

    def __len__(self):
        return len(self.values)

    def restrict(self, window: EnergyWindow) -> "EigenSet":
        sel = window.contains(self.values)
        res = self.residuals[sel] if self.residuals.size else self.residuals
        return EigenSet(self.values[sel], self.vectors[:, sel], res, self.method)


def _residuals(H: SparseOperator, vals, vecs) -> np.ndarray:
    if len(vals) == 0:
        return np.empty(0)
    return np.linalg.norm(H.matrix @ vecs - vecs * vals, axis=0)


def _check_residuals(vals, res, what: str):
    bad = res > 1e-8 * (1.0 + np.abs(vals))
    if np.any(bad):
        raise SpectralError(f"{what}: eigenpair residual {res.max():.2e} above tolerance")


def _lower_bound(H: SparseOperator) -> float:
    # Gershgorin
    A = H.matrix
    diag = A.diagonal()
    off = np.asarray(abs(A).sum(axis=1)).ravel() - np.abs(diag)
    return float(np.min(diag - off))


def full_decomposition(H: SparseOperator) -> EigenSet:
    """Every eigenpair by dense diagonalization."""
    if H.dimension > DENSE_LIMIT:
        raise SpectralError(f"dimension {H.dimension} too large for dense decomposition")
    vals, vecs = np.linalg.eigh(H.dense())
    return EigenSet(vals, vecs, _residuals(H, vals, vecs), "dense")


def ground_energy(H: SparseOperator) -> float:
    """Smallest eigenvalue of H."""
    if H.dimension <= DENSE_LIMIT:
        return float(sla.eigh(H.dense(), eigvals_only=True, subset_by_index=(0, 0))[0])
    sigma = _lower_bound(H) - 1.0
    try:
        vals, vecs = spla.eigsh(H.matrix, k=1, sigma=sigma, which="LM", tol=1e-12)
    except spla.ArpackNoConvergence as exc:
        raise SpectralError(f"ground state did not converge: {exc}") from exc
    res = _residuals(H, vals, vecs)
    _check_residuals(vals, res, "ground_energy")
    return float(vals[0])


def eigenpairs_in_window(H: SparseOperator, window: EnergyWindow,
                         max_pairs: int = MAX_PAIRS) -> EigenSet:
    """All eigenpairs with eigenvalue in the closed window.

    Large operators use shift-invert Lanczos about the window center; the
    number of requested pairs grows until the farthest returned eigenvalue
    lies outside the window on the far side, which certifies completeness.
    """
    if H.dimension <= DENSE_LIMIT:
        vals, vecs = sla.eigh(H.dense(), subset_by_value=(window.lo - 1e-12, window.hi + 1e-12))
        vals, vecs = vals, vecs
        keep = window.contains(vals)
        vals, vecs = vals[keep], vecs[:, keep]
        if len(vals) > max_pairs:
            raise SpectralError(f"{len(vals)} eigenpairs in window exceed budget {max_pairs}")
        return EigenSet(vals, vecs, _residuals(H, vals, vecs), "dense")
    sigma = window.center
    radius = 0.5 * window.width
    k = 16
    dim = H.dimension
    while True:
        k = min(k, dim - 2)
        try:
            vals, vecs = spla.eigsh(H.matrix, k=k, sigma=sigma, which="LM", tol=1e-12)
        except spla.ArpackNoConvergence as exc:
            raise SpectralError(f"shift-invert did not converge: {exc}") from exc
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
        if np.abs(vals - sigma).max() > radius or k >= dim - 2:
            break
        if k >= max_pairs:
            raise SpectralError(f"more than {max_pairs} eigenpairs in window")
        k = min(2 * k, max_pairs + 1)
    keep = window.contains(vals)
    vals, vecs = vals[keep], vecs[:, keep]
    if len(vals) > max_pairs:
        raise SpectralError(f"{len(vals)} eigenpairs in window exceed budget {max_pairs}")
    res = _residuals(H, vals, vecs)
    _check_residuals(vals, res, "eigenpairs_in_window")
    return EigenSet(vals, vecs, res, "shift-invert")


def _cell(H: SparseOperator, x, max_cell: int = MAX_CELL) -> np.ndarray:
    cell = x if isinstance(x, CellIndex) else cell_indicator(x, H.grid)
    if cell.empty:
        raise SpectralError(f"empty cell at {cell.center}")
    if len(cell) > max_cell:
        raise SpectralError(f"cell with {len(cell)} nodes exceeds cap {max_cell}")
    return cell.rows


class ResolventSolver:
    """Factorization of H - z reused for many resolvent blocks."""

    def __init__(self, H: SparseOperator, z: complex, tol: float = 1e-10):
        self.H = H
        self.z = complex(z)
        self.tol = tol
        A = (H.matrix - self.z * sp.identity(H.dimension, format="csr")).tocsc()
        if H.dimension <= DIRECT_LIMIT:
            try:
                self._lu = spla.splu(A.astype(np.complex128))
            except RuntimeError as exc:
                raise SpectralError(f"factorization of H - z failed: {exc}") from exc
            self._A = None
        else:
            self._lu = None
            self._A = A
            self._dinv = 1.0 / A.diagonal()

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=np.complex128)
        if self._lu is not None:
            return self._lu.solve(rhs)
        M = spla.LinearOperator(self._A.shape, matvec=lambda v: self._dinv * v,
                                dtype=np.complex128)
        cols = np.atleast_2d(rhs.T).T
        out = np.empty_like(cols)
        for j in range(cols.shape[1]):
            sol, info = spla.gmres(self._A, cols[:, j], M=M, rtol=self.tol, atol=0.0,
                                   restart=200, maxiter=2000)
            if info != 0:
                raise SpectralError(f"GMRES breakdown (info={info}) at z={self.z}")
            out[:, j] = sol
        return out.reshape(rhs.shape)

    def block(self, x, y, max_cell: int = MAX_CELL) -> np.ndarray:
        rows = _cell(self.H, x, max_cell)
        cols = _cell(self.H, y, max_cell)
        rhs = np.zeros((self.H.dimension, len(cols)), dtype=np.complex128)
        rhs[cols, np.arange(len(cols))] = 1.0
        return self.solve(rhs)[rows, :]

    def block_norm(self, x, y, max_cell: int = MAX_CELL) -> float:
        B = self.block(x, y, max_cell)
        return float(np.linalg.norm(B, 2))


def resolvent_block_norm(H: SparseOperator, z: complex, x, y, max_cell: int = MAX_CELL) -> float:
    """Spectral norm of chi_x (H - z)^{-1} chi_y."""
    return ResolventSolver(H, z).block_norm(x, y, max_cell)


def _projector_blocks(vecs: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    # ||chi_x P_E chi_y|| for rank-one P_E is ||chi_x v|| ||chi_y v||
    return np.linalg.norm(vecs[rows], axis=0) * np.linalg.norm(vecs[cols], axis=0)


@dataclass
class ProjectorBlocks:
    energies: np.ndarray
    per_energy: np.ndarray
    total: float
    window_norm: float


def projector_block_norm(H: SparseOperator, window, x, y, eigs: EigenSet | None = None,
                         max_cell: int = MAX_CELL):
    """Norms of chi_x P chi_y for spectral projections.

    ``window`` is either a single eigenvalue (float) or an EnergyWindow.
    For a float, returns ||chi_x P_E chi_y|| where P_E projects onto the
    eigenspace of the eigenvalue closest to it. For a window, returns a
    :class:`ProjectorBlocks` with the per-eigenvalue norms, their sum and
    the norm of chi_x P_I chi_y for the whole window.
    """
    rows = _cell(H, x, max_cell)
    cols = _cell(H, y, max_cell)
    if isinstance(window, EnergyWindow):
        es = eigs.restrict(window) if eigs is not None else eigenpairs_in_window(H, window)
        vals, vecs = es.values, es.vectors
        per = _eigenspace_norms(vals, vecs, rows, cols)
        whole = float(np.linalg.norm(vecs[rows] @ vecs[cols].T, 2)) if len(vals) else 0.0
        return ProjectorBlocks(vals, per, float(per.sum()), whole)
    es = eigs if eigs is not None else full_decomposition(H)
    E = float(window)
    j = int(np.argmin(np.abs(es.values - E)))
    grp = np.abs(es.values - es.values[j]) <= 1e-10 * (1 + abs(es.values[j]))
    V = es.vectors[:, grp]
    return float(np.linalg.norm(V[rows] @ V[cols].T, 2))


def _eigenspace_norms(vals, vecs, rows, cols) -> np.ndarray:
    """Per-eigenvalue block norms; degenerate clusters share one projector."""
    if len(vals) == 0:
        return np.empty(0)
    out = _projector_blocks(vecs, rows, cols)
    gaps = np.diff(vals) > 1e-10 * (1 + np.abs(vals[:-1]))
    if np.all(gaps):
        return out
    starts = np.concatenate([[0], np.flatnonzero(gaps) + 1])
    ends = np.concatenate([starts[1:], [len(vals)]])
    merged = np.zeros_like(out)
    for a, b in zip(starts, ends):
        if b - a == 1:
            merged[a] = out[a]
        else:
            V = vecs[:, a:b]
            merged[a] = np.linalg.norm(V[rows] @ V[cols].T, 2)
    return merged


class CutoffFunction:
    """Smooth energy cutoff vanishing near a window J and equal to 1 far away.

    chi = 0 on {dist(E, J) <= r}, chi = 1 on {dist(E, J) >= 2r}. Each
    transition is a step smoothed by N box mollifiers of width r/N, i.e.
    the antiderivative of a cardinal B-spline of degree N - 1, so chi is
    C^{N-1} and piecewise polynomial. Derivatives obey
    |chi^{(k)}| <= c (A N / r)^k for k <= N with c = 1, A = 2.
    """

    c = 1.0
    A = 2.0

    def __init__(self, window: EnergyWindow, r: float, N: int):
        if r <= 0:
            raise ValueError("cutoff margin r must be positive")
        if N < 2:
            raise ValueError("cutoff order N must be at least 2")
        if N > MAX_CUTOFF_ORDER:
            raise ValueError(f"cutoff order {N} exceeds polynomial-degree budget "
                             f"{MAX_CUTOFF_ORDER}")
        self.window, self.r, self.N = window, float(r), int(N)
        width = self.r / self.N
        knots = width * np.arange(self.N + 1)
        # normalized B-spline (integral one), then its antiderivative is the ramp
        bump = BSpline.basis_element(knots, extrapolate=False)
        bump = BSpline(bump.t, bump.c / width, bump.k, extrapolate=False)
        self._ramp = bump.antiderivative()
        self._total = float(self._ramp(knots[-1]))

    def _ramp_eval(self, t: np.ndarray, nu: int) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        # snap rounding noise at the transition ends so that the collar and
        # the far region take exactly 0 and 1
        tol = 1e-12 * self.r
        inside = (t > tol) & (t < self.r - tol)
        if nu == 0:
            out[t >= self.r - tol] = 1.0
        if np.any(inside):
            f = self._ramp if nu == 0 else self._ramp.derivative(nu)
            val = f(t[inside])
            out[inside] = val / self._total if nu == 0 else val
        return out

    def __call__(self, E, nu: int = 0) -> np.ndarray:
        """Value (nu = 0) or nu-th derivative at energies E."""
        if nu > self.N:
            raise ValueError(f"derivative order {nu} above N={self.N}")
        E = np.asarray(E, dtype=float)
        right = E - (self.window.hi + self.r)
        left = (self.window.lo - self.r) - E
        out = self._ramp_eval(right, nu) + (-1.0) ** nu * self._ramp_eval(left, nu)
        if nu == 0:
            out = np.clip(out, 0.0, 1.0)
        return out

    def derivative_bound(self, k: int) -> float:
        return self.c * (self.A * self.N / self.r) ** k


def gevrey_cutoff(window: EnergyWindow, r: float, N: int) -> CutoffFunction:
    return CutoffFunction(window, r, N)


def cutoff_order_for_distance(dist: float, delta: float) -> int:
    """N with delta * dist in [N - 2, N - 1)."""
    return max(2, int(math.floor(delta * dist)) + 2)


def restricted_resolvent_block_norm(H: SparseOperator, z: complex, cutoff: CutoffFunction, x, y,
                                    eigs: EigenSet | None = None,
                                    max_cell: int = MAX_CELL) -> float:
    """Norm of chi_x cutoff(H) (H - z)^{-1} chi_y from the full spectral decomposition."""
    es = eigs if eigs is not None else full_decomposition(H)
    rows = _cell(H, x, max_cell)
    cols = _cell(H, y, max_cell)
    f = cutoff(es.values) / (es.values - complex(z))
    B = (es.vectors[rows] * f) @ es.vectors[cols].T
    return float(np.linalg.norm(B, 2))


def spectrum_gap(E: float, eigs: EigenSet) -> float:
    """Distance from a real energy to the spectrum."""
    return float(np.min(np.abs(eigs.values - E)))
