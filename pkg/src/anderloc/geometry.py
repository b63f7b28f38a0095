"""Configuration-space geometry for n-particle systems.

All distances use the max-norm on R^d. A configuration is an ordered
tuple of n points in R^d; the Hausdorff pseudo-metric only sees the
underlying point set, while partitions keep track of particle labels.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "Configuration",
    "Partition",
    "CellIndex",
    "hausdorff_dist",
    "partition_dist",
    "diameter",
    "find_cluster_partition",
    "cell_indicator",
    "all_partitions",
]


class Configuration:
    """n particle positions in R^d, stored as an (n, d) float array."""

    __slots__ = ("points",)

    def __init__(self, points):
        pts = np.array(points, dtype=float)
        if pts.ndim == 1:
            # a flat list is read as n one-dimensional particles
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ValueError(f"configuration must have shape (n, d), got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("configuration coordinates must be finite")
        pts.setflags(write=False)
        self.points = pts

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def flat(self) -> np.ndarray:
        """Point of R^{dn}, particle-major ordering."""
        return self.points.reshape(-1)

    def subset(self, idx: Iterable[int]) -> "Configuration":
        return Configuration(self.points[list(idx)])

    def to_json(self) -> str:
        return json.dumps(self.points.tolist())

    @classmethod
    def from_json(cls, text: str) -> "Configuration":
        return cls(json.loads(text))

    def __eq__(self, other):
        return isinstance(other, Configuration) and np.array_equal(self.points, other.points)

    def __hash__(self):
        return hash(self.points.tobytes())

    def __repr__(self):
        return f"Configuration({self.points.tolist()})"


def _as_config(x) -> Configuration:
    return x if isinstance(x, Configuration) else Configuration(x)


def _check_compatible(x: Configuration, y: Configuration):
    if x.n != y.n or x.d != y.d:
        raise ValueError(
            f"incompatible configurations: (n={x.n}, d={x.d}) vs (n={y.n}, d={y.d})"
        )


def _hausdorff_points(a: np.ndarray, b: np.ndarray) -> float:
    # pairwise max-norm distances, shape (len(a), len(b))
    dist = np.abs(a[:, None, :] - b[None, :, :]).max(axis=2)
    return float(max(dist.min(axis=1).max(), dist.min(axis=0).max()))


def hausdorff_dist(x, y) -> float:
    """Hausdorff distance of the point sets {x_j} and {y_k} in max-norm.

    Examples
    --------
    >>> hausdorff_dist([[0.0], [5.0]], [[5.0], [0.0]])
    0.0
    >>> hausdorff_dist([[0.0], [0.0]], [[3.0], [4.0]])
    4.0
    """
    x, y = _as_config(x), _as_config(y)
    _check_compatible(x, y)
    return _hausdorff_points(x.points, y.points)


@dataclass(frozen=True)
class Partition:
    """Split of particle labels {0..n-1} into two nonempty blocks J and K.

    Labels are zero-based here, unlike the one-based labels used in the
    mathematical literature.
    """

    J: tuple
    K: tuple

    def __post_init__(self):
        J, K = tuple(sorted(self.J)), tuple(sorted(self.K))
        object.__setattr__(self, "J", J)
        object.__setattr__(self, "K", K)
        if not J or not K:
            raise ValueError("both blocks of a partition must be nonempty")
        if set(J) & set(K):
            raise ValueError("partition blocks must be disjoint")
        if set(J) | set(K) != set(range(len(J) + len(K))):
            raise ValueError("partition blocks must cover 0..n-1")

    @property
    def n(self) -> int:
        return len(self.J) + len(self.K)

    @classmethod
    def from_block(cls, J: Iterable[int], n: int) -> "Partition":
        J = tuple(sorted(set(J)))
        return cls(J, tuple(k for k in range(n) if k not in J))

    def same_block(self, j: int, k: int) -> bool:
        return (j in self.J) == (k in self.J)


def all_partitions(n: int) -> list:
    """Every partition {J, K} of range(n), each listed once with 0 in J."""
    out = []
    rest = list(range(1, n))
    for size in range(0, n - 1):
        for extra in itertools.combinations(rest, size):
            out.append(Partition.from_block((0,) + extra, n))
    return out


def partition_dist(x, y, p: Partition) -> float:
    """max of the Hausdorff distances within the two blocks of ``p``."""
    x, y = _as_config(x), _as_config(y)
    _check_compatible(x, y)
    if p.n != x.n:
        raise ValueError(f"partition is for n={p.n}, configuration has n={x.n}")
    J, K = list(p.J), list(p.K)
    return max(
        _hausdorff_points(x.points[J], y.points[J]),
        _hausdorff_points(x.points[K], y.points[K]),
    )


def diameter(x) -> float:
    """max_{j,k} |x_j - x_k| in max-norm."""
    pts = _as_config(x).points
    return float(np.abs(pts[:, None, :] - pts[None, :, :]).max())


def _cross_separation(pts: np.ndarray, J: Sequence[int], K: Sequence[int]) -> float:
    a, b = pts[list(J)], pts[list(K)]
    return float(np.abs(a[:, None, :] - b[None, :, :]).max(axis=2).min())


def find_cluster_partition(x, threshold: float):
    """Split a spread-out configuration into two well-separated clusters.

    Candidates come from the largest gap along each coordinate axis after
    sorting; the candidate with the largest cross separation wins, ties
    going to the lexicographically smallest J. If ``diameter(x) >=
    threshold`` the returned partition has cross separation at least
    ``threshold / n``. Returns None when no candidate reaches that
    separation (which only happens for ``diameter(x) < threshold``).
    """
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    x = _as_config(x)
    pts, n = x.points, x.n
    if n < 2:
        return None
    candidates = set()
    for axis in range(x.d):
        coords = pts[:, axis]
        order = np.argsort(coords, kind="stable")
        gaps = np.diff(coords[order])
        for cut in np.flatnonzero(gaps == gaps.max()):
            left = frozenset(order[: cut + 1].tolist())
            right = frozenset(order[cut + 1 :].tolist())
            if left and right:
                candidates.add(left if 0 in left else right)
    best = None
    for J in candidates:
        p = Partition.from_block(J, n)
        sep = _cross_separation(pts, p.J, p.K)
        key = (-sep, p.J)
        if best is None or key < best[0]:
            best = (key, p, sep)
    if best is None or best[2] < threshold / n:
        return None
    return best[1]


@dataclass(frozen=True)
class GridSpec:
    """Grid nodes of a box in R^{dn}, optionally masked.

    ``axes`` holds the sorted node coordinates along each of the dn
    coordinate directions; the node set is their Cartesian product (C
    order) restricted to ``mask``. ``index`` maps the flat product index
    to the operator row, or -1 for removed nodes.
    """

    axes: tuple
    h: float
    n: int
    d: int
    mask: np.ndarray | None = None

    def __post_init__(self):
        if len(self.axes) != self.n * self.d:
            raise ValueError("need one axis per coordinate of R^{dn}")
        full = int(np.prod([len(a) for a in self.axes]))
        if self.mask is None:
            idx = np.arange(full)
        else:
            m = np.asarray(self.mask, dtype=bool).reshape(-1)
            if m.size != full:
                raise ValueError("mask size does not match the product grid")
            idx = np.full(full, -1, dtype=np.int64)
            idx[m] = np.arange(int(m.sum()))
        object.__setattr__(self, "_index", idx)

    @property
    def shape(self) -> tuple:
        return tuple(len(a) for a in self.axes)

    @property
    def size(self) -> int:
        if self.mask is None:
            return int(np.prod(self.shape))
        return int(np.count_nonzero(self.mask))

    @property
    def index(self) -> np.ndarray:
        return self._index

    def kept_flat(self) -> np.ndarray:
        """Flat product indices of the nodes that are operator rows."""
        return np.flatnonzero(self._index >= 0)

    def coordinates(self) -> np.ndarray:
        """(size, dn) array of node coordinates in operator-row order."""
        grids = np.meshgrid(*self.axes, indexing="ij")
        coords = np.stack([g.reshape(-1) for g in grids], axis=1)
        return coords[self.kept_flat()]


@dataclass(frozen=True)
class CellIndex:
    """Operator rows of the grid nodes inside the unit max-norm cell of x."""

    rows: np.ndarray
    center: tuple

    @property
    def empty(self) -> bool:
        return self.rows.size == 0

    def __len__(self):
        return int(self.rows.size)


def cell_indicator(x, grid: GridSpec) -> CellIndex:
    """Nodes with max-norm distance strictly below 1/2 from x in R^{dn}.

    An empty result is allowed (x outside the grid); callers that need a
    nonempty cell check ``CellIndex.empty``.
    """
    x = _as_config(x)
    if x.n != grid.n or x.d != grid.d:
        raise ValueError("configuration does not match the grid's (n, d)")
    flat = x.flat()
    per_axis = []
    for a, c in zip(grid.axes, flat):
        sel = np.flatnonzero(np.abs(np.asarray(a) - c) < 0.5 - 1e-12)
        if sel.size == 0:
            return CellIndex(np.empty(0, dtype=np.int64), tuple(flat.tolist()))
        per_axis.append(sel)
    mesh = np.meshgrid(*per_axis, indexing="ij")
    flat_idx = np.ravel_multi_index([m.reshape(-1) for m in mesh], grid.shape)
    rows = grid.index[flat_idx]
    rows = np.sort(rows[rows >= 0])
    return CellIndex(rows, tuple(flat.tolist()))
