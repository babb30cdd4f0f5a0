"""Grid data model and quadrant algebra for 2d change point analysis.

The observation model is a dense ``T_w x T_h`` grid of p-dimensional vectors
whose mean field is piecewise constant over the four quadrants induced by a
change point ``tau = (tau_w, tau_h)``:

    Q1 = {w > tau_w, h > tau_h}   (top right)
    Q2 = {w <= tau_w, h > tau_h}  (top left)
    Q3 = {w <= tau_w, h <= tau_h} (bottom left)
    Q4 = {w > tau_w, h <= tau_h}  (bottom right)

Grid coordinates are 1-based: ``w`` runs over ``1..T_w`` and ``h`` over
``1..T_h``.  The boundary values ``tau_w == T_w`` / ``tau_h == T_h`` encode
"no split" on that axis, in which case two (or three) quadrants are empty;
at ``tau = (T_w, T_h)`` quadrant 3 is the whole grid.

Component indices of the p-dimensional vectors are plain 0-based numpy
indices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ChangePoint:
    """A candidate 2d change location ``(tau_w, tau_h)`` on the integer grid.

    ``tau_w == T_w`` means no split along the width axis, and likewise for
    height.  Instances are plain value objects; bounds are validated against
    a concrete grid by the operations that consume them.
    """

    tau_w: int
    tau_h: int

    def __post_init__(self):
        if self.tau_w < 1 or self.tau_h < 1:
            raise ValueError(f"change point must have positive coordinates, got {self}")

    def is_boundary(self, t_w: int, t_h: int) -> bool:
        """True if either coordinate sits on its sampling-period boundary."""
        return self.tau_w == t_w or self.tau_h == t_h

    def is_double_boundary(self, t_w: int, t_h: int) -> bool:
        """True for the "no split at all" point ``(T_w, T_h)``."""
        return self.tau_w == t_w and self.tau_h == t_h


class DataGrid:
    """Dense ``T_w x T_h`` grid of p-dimensional observation vectors.

    Values are stored as a read-only float array of shape ``(T_w, T_h, p)``.
    Cell access is 1-based to match the ``(w, h)`` convention above; indices
    outside ``1..T_w x 1..T_h`` are a hard error.
    """

    def __init__(self, values):
        arr = np.asarray(values, dtype=float)
        if arr.ndim != 3:
            raise ValueError(f"expected a (T_w, T_h, p) array, got shape {arr.shape}")
        if min(arr.shape) < 1:
            raise ValueError(f"grid dimensions must be positive, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("grid values must be finite")
        arr = arr.copy()
        arr.setflags(write=False)
        self._values = arr

    @property
    def t_w(self) -> int:
        return self._values.shape[0]

    @property
    def t_h(self) -> int:
        return self._values.shape[1]

    @property
    def p(self) -> int:
        return self._values.shape[2]

    @property
    def dims(self) -> tuple[int, int]:
        return self._values.shape[0], self._values.shape[1]

    @property
    def values(self) -> np.ndarray:
        """Read-only backing array of shape ``(T_w, T_h, p)``."""
        return self._values

    @property
    def n_cells(self) -> int:
        return self._values.shape[0] * self._values.shape[1]

    def cell(self, w: int, h: int) -> np.ndarray:
        """Observation vector at 1-based coordinates ``(w, h)``."""
        if not (1 <= w <= self.t_w and 1 <= h <= self.t_h):
            raise IndexError(
                f"cell ({w}, {h}) outside 1..{self.t_w} x 1..{self.t_h}"
            )
        return self._values[w - 1, h - 1]

    def check_tau(self, tau: ChangePoint) -> None:
        if not (1 <= tau.tau_w <= self.t_w and 1 <= tau.tau_h <= self.t_h):
            raise ValueError(
                f"change point {tau} outside grid 1..{self.t_w} x 1..{self.t_h}"
            )

    def subgrid(self, w_lo: int, w_hi: int, h_lo: int, h_hi: int) -> "DataGrid":
        """Rectangular sub-grid over inclusive 1-based bounds."""
        if not (1 <= w_lo <= w_hi <= self.t_w and 1 <= h_lo <= h_hi <= self.t_h):
            raise ValueError(
                f"invalid sub-rectangle ({w_lo},{w_hi},{h_lo},{h_hi}) "
                f"on {self.t_w} x {self.t_h} grid"
            )
        return DataGrid(self._values[w_lo - 1 : w_hi, h_lo - 1 : h_hi])

    def __repr__(self):
        return f"DataGrid(T_w={self.t_w}, T_h={self.t_h}, p={self.p})"


@dataclass(frozen=True)
class QuadrantPartition:
    """The four quadrant index sets of a grid relative to a change point.

    ``index_sets[j]`` holds the (w, h) pairs of quadrant ``j+1`` in the
    ordering Q1..Q4 above; empty quadrants are empty sets.  The sets are
    pairwise disjoint and cover the grid.
    """

    index_sets: tuple[frozenset, frozenset, frozenset, frozenset]
    counts: tuple[int, int, int, int]


@dataclass(frozen=True)
class QuadrantEstimate:
    """Four p-dimensional quadrant mean vectors with their support sets.

    ``theta[j]`` is the mean vector of quadrant ``j+1`` or ``None`` when that
    quadrant is empty under the change point the estimate was computed at.
    ``supports[j]`` is exactly the set of (0-based) nonzero components of
    ``theta[j]`` (empty for absent quadrants).
    """

    theta: tuple
    supports: tuple[frozenset, frozenset, frozenset, frozenset]

    @property
    def union_support(self) -> frozenset:
        out: frozenset = frozenset()
        for s in self.supports:
            out = out | s
        return out

    @property
    def sparsity(self) -> int:
        """Largest per-quadrant support size."""
        return max(len(s) for s in self.supports)

    @staticmethod
    def from_theta(theta) -> "QuadrantEstimate":
        """Build an estimate from four vectors (or ``None`` markers)."""
        vecs = []
        supports = []
        for th in theta:
            if th is None:
                vecs.append(None)
                supports.append(frozenset())
            else:
                v = np.asarray(th, dtype=float)
                vecs.append(v)
                supports.append(frozenset(np.flatnonzero(v != 0.0).tolist()))
        return QuadrantEstimate(theta=tuple(vecs), supports=tuple(supports))


def quadrant_rects(dims: tuple[int, int], tau: ChangePoint):
    """Quadrant sub-rectangles ``(w_lo, w_hi, h_lo, h_hi)`` for a change point.

    Returns a list with one entry per quadrant Q1..Q4; empty quadrants are
    ``None``.  Bounds are 1-based inclusive.
    """
    t_w, t_h = dims
    if not (1 <= tau.tau_w <= t_w and 1 <= tau.tau_h <= t_h):
        raise ValueError(f"change point {tau} outside grid 1..{t_w} x 1..{t_h}")
    right = tau.tau_w < t_w
    top = tau.tau_h < t_h
    return [
        (tau.tau_w + 1, t_w, tau.tau_h + 1, t_h) if (right and top) else None,
        (1, tau.tau_w, tau.tau_h + 1, t_h) if top else None,
        (1, tau.tau_w, 1, tau.tau_h),
        (tau.tau_w + 1, t_w, 1, tau.tau_h) if right else None,
    ]


def rect_count(rect) -> int:
    if rect is None:
        return 0
    w_lo, w_hi, h_lo, h_hi = rect
    return (w_hi - w_lo + 1) * (h_hi - h_lo + 1)


def rect_block(grid: DataGrid, rect) -> np.ndarray:
    """View of the grid values over a quadrant rectangle."""
    w_lo, w_hi, h_lo, h_hi = rect
    return grid.values[w_lo - 1 : w_hi, h_lo - 1 : h_hi]


def quadrant_partition(dims: tuple[int, int], tau: ChangePoint) -> QuadrantPartition:
    """Partition the full index grid into the four quadrants of ``tau``."""
    rects = quadrant_rects(dims, tau)
    sets = []
    for rect in rects:
        if rect is None:
            sets.append(frozenset())
            continue
        w_lo, w_hi, h_lo, h_hi = rect
        sets.append(
            frozenset(
                (w, h)
                for w in range(w_lo, w_hi + 1)
                for h in range(h_lo, h_hi + 1)
            )
        )
    return QuadrantPartition(
        index_sets=tuple(sets), counts=tuple(len(s) for s in sets)
    )


def quadrant_means(grid: DataGrid, tau: ChangePoint):
    """Quadrant-wise sample means of the grid relative to ``tau``.

    Returns a list of four length-p vectors; empty quadrants are reported as
    ``None`` (never NaN).  Accumulation uses numpy's pairwise summation.
    """
    grid.check_tau(tau)
    out = []
    for rect in quadrant_rects(grid.dims, tau):
        if rect is None:
            out.append(None)
        else:
            block = rect_block(grid, rect)
            out.append(block.mean(axis=(0, 1)))
    return out


def squared_loss(grid: DataGrid, tau: ChangePoint, est: QuadrantEstimate) -> float:
    """Mean squared residual of the grid under quadrant means ``est`` at ``tau``.

    Computes ``(1 / (T_w T_h)) * sum_j sum_{(w,h) in Q_j(tau)}
    ||x_(w,h) - theta_(j)||^2``.  Empty quadrants contribute nothing and
    their (absent) mean is ignored; a nonempty quadrant with no mean vector
    is an error, as is a dimension mismatch.
    """
    grid.check_tau(tau)
    total = 0.0
    for j, rect in enumerate(quadrant_rects(grid.dims, tau)):
        if rect is None:
            continue
        theta = est.theta[j]
        if theta is None:
            raise ValueError(f"quadrant {j + 1} is nonempty but has no mean vector")
        if theta.shape != (grid.p,):
            raise ValueError(
                f"mean vector for quadrant {j + 1} has shape {theta.shape}, "
                f"expected ({grid.p},)"
            )
        resid = rect_block(grid, rect) - theta
        total += float(np.sum(resid * resid))
    return total / grid.n_cells


def center_grid(grid: DataGrid) -> DataGrid:
    """Subtract the component-wise global mean from every cell.

    The output grid has component-wise global mean zero up to accumulation
    tolerance; centering transfers sparsity of the jump vectors onto the
    mean vectors.
    """
    global_mean = grid.values.mean(axis=(0, 1))
    return DataGrid(grid.values - global_mean)


def bin_scatter_to_grid(
    coords,
    obs,
    grid_dims: tuple[int, int],
    k_neighbors: int,
) -> DataGrid:
    """Bin scattered observations onto a uniform grid by k-nearest-neighbor means.

    ``coords`` is an ``(n, 2)`` array of (x, y) locations and ``obs`` an
    ``(n, p)`` array of observation vectors.  A ``T_w x T_h`` uniform grid is
    laid over the bounding box of the points; both coordinates are rescaled
    so the bounding box maps to the unit square, making the Euclidean metric
    unit free.  Each cell receives the mean of the ``k_neighbors``
    observations nearest to its center, with distance ties broken by input
    order.
    """
    coords = np.asarray(coords, dtype=float)
    obs = np.asarray(obs, dtype=float)
    if coords.ndim != 2 or coords.shape[1] != 2:
        raise ValueError(f"coords must be (n, 2), got {coords.shape}")
    if obs.ndim != 2 or obs.shape[0] != coords.shape[0]:
        raise ValueError("obs must be (n, p) aligned with coords")
    n = coords.shape[0]
    if n == 0:
        raise ValueError("no scatter points supplied")
    if k_neighbors < 1:
        raise ValueError("k_neighbors must be positive")
    if n < k_neighbors:
        raise ValueError(f"need at least {k_neighbors} points, got {n}")
    t_w, t_h = grid_dims
    if t_w < 1 or t_h < 1:
        raise ValueError(f"grid dims must be positive, got {grid_dims}")

    lo = coords.min(axis=0)
    hi = coords.max(axis=0)
    span = hi - lo
    if span[0] <= 0 or span[1] <= 0:
        raise ValueError("degenerate bounding box: points must span both axes")
    unit = (coords - lo) / span

    centers_w = (np.arange(1, t_w + 1) - 0.5) / t_w
    centers_h = (np.arange(1, t_h + 1) - 0.5) / t_h

    values = np.empty((t_w, t_h, obs.shape[1]))
    for wi in range(t_w):
        dx2 = (unit[:, 0] - centers_w[wi]) ** 2
        for hi_ in range(t_h):
            d2 = dx2 + (unit[:, 1] - centers_h[hi_]) ** 2
            # stable sort keeps input order among exact distance ties
            nearest = np.argsort(d2, kind="stable")[:k_neighbors]
            values[wi, hi_] = obs[nearest].mean(axis=0)
    return DataGrid(values)
