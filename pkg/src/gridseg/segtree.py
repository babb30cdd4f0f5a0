"""Hierarchical quadrant segmentation of a grid into a rectangle tree.

Recursive application of boundary-selecting change point detection splits
the sampling rectangle into at most four children per node, the 2d analogue
of binary segmentation.  Nodes are addressed by digit strings over
``{1,2,3,4}``: the root is the empty string and digit ``d`` selects the
quadrant-``d`` child, so a node at hierarchical level ``l`` carries ``l``
digits.  Leaf domains always partition the grid; a detected change point
equal to the local double boundary ``(T_w, T_h)`` means "no split" and
terminates the branch.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .estimator import ThresholdConfig, coarse_init, detect_change_point
from .grid import ChangePoint, DataGrid, quadrant_rects

Rect = tuple[int, int, int, int]  # (w_lo, w_hi, h_lo, h_hi), 1-based inclusive

# smallest axis length on which the 3x3 coarse initializer is well defined
_MIN_AXIS = 4


def node_digits(level: int, m: int) -> tuple[int, ...]:
    """Digits ``(i_1, ..., i_level)`` of the ``m``-th node at a level.

    The bijection between ``1..4**level`` and digit strings is the
    big-endian base-4 expansion of ``m - 1`` with digits shifted to 1..4.
    """
    if level < 0:
        raise ValueError("level must be >= 0")
    if not (1 <= m <= 4**level):
        raise ValueError(f"m={m} outside 1..4**{level}")
    rem = m - 1
    digits = []
    for k in range(level - 1, -1, -1):
        q, rem = divmod(rem, 4**k)
        digits.append(q + 1)
    return tuple(digits)


def node_rank(digits) -> int:
    """Inverse of :func:`node_digits`: digit string back to ``1..4**level``."""
    rank = 0
    for d in digits:
        if d not in (1, 2, 3, 4):
            raise ValueError(f"digit {d} outside 1..4")
        rank = rank * 4 + (d - 1)
    return rank + 1


def child_domains(domain: Rect, cp: ChangePoint):
    """Quadrant split of a rectangle at a change point in local coordinates.

    Returns four optional rectangles in global coordinates, ordered Q1..Q4;
    quadrants emptied by boundary coordinates are ``None``.  At the double
    boundary the third child equals the whole domain.
    """
    w_lo, w_hi, h_lo, h_hi = domain
    local_dims = (w_hi - w_lo + 1, h_hi - h_lo + 1)
    rects = quadrant_rects(local_dims, cp)
    out = []
    for rect in rects:
        if rect is None:
            out.append(None)
        else:
            a, b, c, d = rect
            out.append((w_lo - 1 + a, w_lo - 1 + b, h_lo - 1 + c, h_lo - 1 + d))
    return out


@dataclass
class SegNode:
    """One tree node: a rectangle, its local change point, and its children.

    ``cp`` is in coordinates local to the domain; the double boundary marks
    a leaf.  ``detected`` records whether the change point came from an
    actual detection run (small or depth-capped rectangles become leaves
    without one).
    """

    index: tuple[int, ...]
    domain: Rect
    cp: ChangePoint
    children: list = field(default_factory=list)
    detected: bool = True

    @property
    def local_dims(self) -> tuple[int, int]:
        w_lo, w_hi, h_lo, h_hi = self.domain
        return (w_hi - w_lo + 1, h_hi - h_lo + 1)

    @property
    def is_leaf(self) -> bool:
        return self.cp.is_double_boundary(*self.local_dims)

    @property
    def is_change_point(self) -> bool:
        """True when at least one axis splits (the node contributes a cp)."""
        return self.detected and not self.is_leaf

    @property
    def cp_global(self) -> ChangePoint:
        w_lo, _, h_lo, _ = self.domain
        return ChangePoint(w_lo - 1 + self.cp.tau_w, h_lo - 1 + self.cp.tau_h)

    def n_cells(self) -> int:
        w_lo, w_hi, h_lo, h_hi = self.domain
        return (w_hi - w_lo + 1) * (h_hi - h_lo + 1)


@dataclass
class SegTree:
    """Segmentation tree over base-4 node indices."""

    nodes: dict

    @property
    def root(self) -> SegNode:
        return self.nodes[()]

    def leaves(self):
        return [n for n in self.nodes.values() if n.is_leaf]

    def change_points(self):
        """Detected nodes that split at least one axis, in index order."""
        return [
            n
            for n in sorted(self.nodes.values(), key=lambda n: (len(n.index), n.index))
            if n.is_change_point
        ]

    @property
    def levels_used(self) -> int:
        """Number of hierarchy levels that added a change point.

        A single root split counts as one level; a constant grid uses zero.
        """
        cps = self.change_points()
        if not cps:
            return 0
        return max(len(n.index) for n in cps) + 1


@dataclass
class TreeReport:
    levels: int
    n_change_points: int
    n_leaves: int
    change_points: list  # (digit string, global (tau_w, tau_h)) pairs


def _detect_on_domain(grid, domain, config, c_bic):
    sub = grid.subgrid(*domain)
    init = coarse_init(sub, config)
    trace = detect_change_point(sub, init, config, c_bic)
    return trace.final_cp


def build_segmentation_tree(
    grid: DataGrid,
    config: ThresholdConfig | None = None,
    c_bic: float = 1.0,
    min_cells: int = 16,
    max_level: int = 20,
    n_workers: int = 1,
) -> SegTree:
    """Recursively segment the grid into a tree of mean-homogeneous rectangles.

    Detection runs on the root and then, level by level, on every nonempty
    child rectangle of a node that split, for as long as new change points
    keep appearing.  Rectangles with fewer than ``min_cells`` cells (or an
    axis too short for the coarse initializer) become leaves without a
    detection run, as do rectangles beyond ``max_level``.  Sibling
    rectangles are independent; with ``n_workers > 1`` each level is
    processed in a thread pool, with results keyed by node index so the
    tree does not depend on scheduling.

    The returned tree's leaf domains always partition the grid.
    """
    config = config or ThresholdConfig()
    if max_level < 1:
        raise ValueError("max_level must be >= 1")
    if min_cells < 1:
        raise ValueError("min_cells must be >= 1")

    nodes: dict = {}
    full: Rect = (1, grid.t_w, 1, grid.t_h)
    frontier = [((), full)]
    level = 0
    while frontier:
        todo = []
        leaves = []
        for index, domain in frontier:
            w_lo, w_hi, h_lo, h_hi = domain
            dims = (w_hi - w_lo + 1, h_hi - h_lo + 1)
            cells = dims[0] * dims[1]
            if (
                level > max_level
                or cells < min_cells
                or dims[0] < _MIN_AXIS
                or dims[1] < _MIN_AXIS
            ):
                leaves.append((index, domain, dims))
            else:
                todo.append((index, domain))

        for index, domain, dims in leaves:
            nodes[index] = SegNode(
                index=index,
                domain=domain,
                cp=ChangePoint(*dims),
                detected=False,
            )

        if n_workers > 1 and len(todo) > 1:
            with ThreadPoolExecutor(max_workers=n_workers) as pool:
                cps = list(
                    pool.map(
                        lambda item: _detect_on_domain(grid, item[1], config, c_bic),
                        todo,
                    )
                )
        else:
            cps = [_detect_on_domain(grid, domain, config, c_bic) for _, domain in todo]

        next_frontier = []
        for (index, domain), cp in zip(todo, cps):
            node = SegNode(index=index, domain=domain, cp=cp)
            nodes[index] = node
            if node.is_leaf:
                continue
            for digit, child in enumerate(child_domains(domain, cp), start=1):
                if child is None:
                    continue
                child_index = index + (digit,)
                node.children.append(child_index)
                next_frontier.append((child_index, child))
        frontier = next_frontier
        level += 1

    return SegTree(nodes=nodes)


def leaf_partition_check(tree: SegTree, dims: tuple[int, int]) -> None:
    """Raise unless the leaf domains tile the full grid exactly once."""
    t_w, t_h = dims
    cover = np.zeros((t_w, t_h), dtype=int)
    for leaf in tree.leaves():
        w_lo, w_hi, h_lo, h_hi = leaf.domain
        cover[w_lo - 1 : w_hi, h_lo - 1 : h_hi] += 1
    if not np.all(cover == 1):
        raise ValueError("leaf domains do not partition the grid")


def reconstruct_means(grid: DataGrid, tree: SegTree) -> DataGrid:
    """Replace every cell by the sample mean of the leaf domain containing it."""
    leaf_partition_check(tree, grid.dims)
    out = np.empty_like(grid.values)
    for leaf in tree.leaves():
        w_lo, w_hi, h_lo, h_hi = leaf.domain
        block = grid.values[w_lo - 1 : w_hi, h_lo - 1 : h_hi]
        out[w_lo - 1 : w_hi, h_lo - 1 : h_hi] = block.mean(axis=(0, 1))
    return DataGrid(out)


def tree_report(tree: SegTree) -> TreeReport:
    """Summary counts and the detected change points in global coordinates."""
    cps = tree.change_points()
    return TreeReport(
        levels=tree.levels_used,
        n_change_points=len(cps),
        n_leaves=len(tree.leaves()),
        change_points=[
            ("".join(str(d) for d in n.index), (n.cp_global.tau_w, n.cp_global.tau_h))
            for n in cps
        ],
    )
