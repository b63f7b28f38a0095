"""Independent reference computations.

Nothing here calls into the numerical kernels of ``geometry`` or
``spectral``: distances are literal loops, cells are found by scanning
node coordinates, spectra come straight from LAPACK, and the Lyapunov
exponent is a transfer-matrix product.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .model import DisorderDistribution, SparseOperator


def numba_decorator(func):
    try:
        import numba
    except ImportError:  # pragma: no cover - numba is optional
        return func
    return numba.njit(cache=True)(func)


@dataclass
class TransferMatrixResult:
    energy: float
    gamma: float
    stderr: float
    length: int
    replicas: int
    eta_max: float
    per_replica: np.ndarray


@numba_decorator
def _lyapunov_chain(potential, energy):
    cur = 1.0
    old = 0.3
    log_growth = 0.0
    for k in range(potential.shape[0]):
        new = (2.0 + potential[k] - energy) * cur - old
        old = cur
        cur = new
        if (k & 7) == 7:
            norm = math.sqrt(cur * cur + old * old)
            log_growth += math.log(norm)
            cur /= norm
            old /= norm
    norm = math.sqrt(cur * cur + old * old)
    log_growth += math.log(norm)
    return log_growth / potential.shape[0]


def transfer_matrix_lyapunov(disorder: DisorderDistribution, energy: float, length: int,
                             replicas: int = 8, seed: int = 0) -> TransferMatrixResult:
    """Lyapunov exponent of the 1-d Anderson chain at ``energy``.

    The chain is H psi(k) = 2 psi(k) - psi(k+1) - psi(k-1) + eta_k psi(k)
    with i.i.d. eta_k drawn from ``disorder``. Each replica propagates the
    2x2 transfer matrices with renormalization every 8 sites; the standard
    error comes from the spread across replicas.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x7A11]))
    per = np.empty(replicas)
    for i in range(replicas):
        pot = disorder.transform(rng.random(length))
        per[i] = _lyapunov_chain(pot, float(energy))
    stderr = float(per.std(ddof=1) / math.sqrt(replicas)) if replicas > 1 else float("nan")
    return TransferMatrixResult(float(energy), float(per.mean()), stderr, length, replicas,
                                disorder.eta_max, per)


def free_lyapunov(energy: float) -> float:
    """log of the larger root of t^2 - (2 - E) t + 1 = 0 (zero for E in [0, 4])."""
    b = 2.0 - energy
    disc = b * b - 4.0
    if disc <= 0:
        return 0.0
    return math.log(max(abs((b + math.sqrt(disc)) / 2), abs((b - math.sqrt(disc)) / 2)))


def free_chain_eigenvalues(m: int, h: float = 1.0) -> np.ndarray:
    """Dirichlet Laplacian on m interior nodes of spacing h."""
    k = np.arange(1, m + 1)
    return (2.0 - 2.0 * np.cos(k * np.pi / (m + 1))) / (h * h)


def dense_brute_force(H: SparseOperator):
    """(eigenvalues, eigenvectors) of a small operator by dense LAPACK."""
    if H.dimension > 2000:
        raise ValueError(f"dimension {H.dimension} exceeds dense oracle limit 2000")
    return np.linalg.eigh(H.matrix.toarray())


def cell_rows_brute(coords: np.ndarray, x) -> np.ndarray:
    """Rows whose coordinates lie strictly within 1/2 of x in max-norm (scan)."""
    flat = np.asarray(x, dtype=float).reshape(-1)
    rows = []
    for i, c in enumerate(coords):
        if max(abs(a - b) for a, b in zip(c, flat)) < 0.5 - 1e-12:
            rows.append(i)
    return np.array(rows, dtype=np.int64)


def resolvent_block_spectral_sum(vals, vecs, z: complex, rows, cols) -> np.ndarray:
    """sum_E (chi_x v_E)(chi_y v_E)^T / (E - z)."""
    weights = 1.0 / (vals - z)
    return (vecs[rows] * weights) @ vecs[cols].T


def inertia_count(A: np.ndarray, lo: float, hi: float) -> int:
    """Number of eigenvalues in [lo, hi) by Sylvester inertia of LDL^T factors."""

    def below(sigma):
        _, D, _ = sla.ldl(A - sigma * np.eye(A.shape[0]))
        return int(np.sum(np.linalg.eigvalsh(D) < 0))

    return below(hi) - below(lo)


def hausdorff_brute(x, y) -> float:
    """Literal double loop over the max-min definition."""
    xs = [list(map(float, np.atleast_1d(p))) for p in x]
    ys = [list(map(float, np.atleast_1d(p))) for p in y]

    def norm(a, b):
        return max(abs(u - v) for u, v in zip(a, b))

    forward = max(min(norm(a, b) for b in ys) for a in xs)
    backward = max(min(norm(a, b) for a in xs) for b in ys)
    return max(forward, backward)


def partition_dist_brute(x, y, J, K) -> float:
    xs, ys = list(x), list(y)
    return max(
        hausdorff_brute([xs[j] for j in J], [ys[j] for j in J]),
        hausdorff_brute([xs[k] for k in K], [ys[k] for k in K]),
    )
