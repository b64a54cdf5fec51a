"""Tensor grids over a chart box and multilinear interpolation.

Grids are the discretization on which ranks, residuals, connection
coefficients, and feedback values are computed.  Leaf axes always carry the
node 0 so that the zero slice is part of the grid; on a leaf interval
[a, b] with a < 0 < b the axis is built from two uniform runs meeting at 0
(for a symmetric interval and an odd node count this is the plain uniform
grid).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .geometry import ChartSpec

__all__ = ["GridSpec", "MultilinearGrid", "GridVectorField"]


def _leaf_axis(lo: float, hi: float, count: int) -> np.ndarray:
    if lo == 0.0 or hi == 0.0:
        return np.linspace(lo, hi, count)
    if count < 3:
        raise ValueError(
            f"a leaf interval [{lo}, {hi}] with 0 in its interior needs at least 3 nodes"
        )
    n_lo = int(round((count - 1) * (0.0 - lo) / (hi - lo)))
    n_lo = min(max(n_lo, 1), count - 2)
    lower = np.linspace(lo, 0.0, n_lo + 1)
    upper = np.linspace(0.0, hi, count - n_lo)
    return np.concatenate([lower, upper[1:]])


@dataclass(frozen=True)
class GridSpec:
    """Tensor grid: one sorted node array per axis."""

    chart: ChartSpec
    axes: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        axes = tuple(tuple(float(v) for v in axis) for axis in self.axes)
        if len(axes) != self.chart.n:
            raise ValueError(f"{len(axes)} axes for dimension {self.chart.n}")
        for i, axis in enumerate(axes, start=1):
            arr = np.asarray(axis)
            if arr.size < 2 or np.any(np.diff(arr) <= 0):
                raise ValueError(f"axis {i} nodes must be sorted and at least 2")
            lo, hi = self.chart.box[i - 1]
            if arr[0] < lo - 1e-12 or arr[-1] > hi + 1e-12:
                raise ValueError(f"axis {i} nodes leave the box [{lo}, {hi}]")
            if i <= self.chart.k and not np.any(arr == 0.0):
                raise ValueError(f"leaf axis {i} must contain the node 0")
        object.__setattr__(self, "axes", axes)

    @classmethod
    def uniform(cls, chart: ChartSpec, nodes_per_axis=9) -> "GridSpec":
        if np.isscalar(nodes_per_axis):
            counts = [int(nodes_per_axis)] * chart.n
        else:
            counts = [int(c) for c in nodes_per_axis]
            if len(counts) != chart.n:
                raise ValueError(f"{len(counts)} node counts for dimension {chart.n}")
        if any(c < 2 for c in counts):
            raise ValueError("need at least 2 nodes per axis")
        axes = []
        for i, ((lo, hi), count) in enumerate(zip(chart.box, counts), start=1):
            if i <= chart.k:
                axes.append(tuple(_leaf_axis(lo, hi, count)))
            else:
                axes.append(tuple(np.linspace(lo, hi, count)))
        return cls(chart=chart, axes=tuple(axes))

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(axis) for axis in self.axes)

    @property
    def num_nodes(self) -> int:
        return int(np.prod(self.shape))

    def axis_array(self, i: int) -> np.ndarray:
        """Nodes of axis i (1-based)."""
        return np.asarray(self.axes[i - 1])

    def nodes(self) -> np.ndarray:
        """All nodes as an (num_nodes, n) array in C order."""
        mesh = np.meshgrid(*[np.asarray(a) for a in self.axes], indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def zero_index(self, i: int) -> int:
        """Index of the node 0 on leaf axis i."""
        arr = self.axis_array(i)
        hits = np.nonzero(arr == 0.0)[0]
        if hits.size == 0:
            raise ValueError(f"axis {i} has no zero node")
        return int(hits[0])

    def node_multi_index(self, flat_index: int) -> tuple[int, ...]:
        return tuple(int(v) for v in np.unravel_index(flat_index, self.shape))

    def flat_index(self, multi_index) -> int:
        return int(np.ravel_multi_index(tuple(multi_index), self.shape))

    def node_point(self, flat_index: int) -> np.ndarray:
        multi = self.node_multi_index(flat_index)
        return np.array([self.axes[d][multi[d]] for d in range(self.chart.n)])

    def nearest_node_multi_index(self, q) -> tuple[int, ...]:
        out = []
        for d in range(self.chart.n):
            arr = self.axis_array(d + 1)
            out.append(int(np.argmin(np.abs(arr - float(q[d])))))
        return tuple(out)

    def refined(self) -> "GridSpec":
        """Double the resolution (N nodes -> 2N-1, keeping existing nodes)."""
        counts = [2 * (len(axis) - 1) + 1 for axis in self.axes]
        return GridSpec.uniform(self.chart, counts)


class MultilinearGrid:
    """Multilinear interpolation of node values over a GridSpec.

    ``values`` has shape ``grid.shape + value_shape``.  Points outside the
    grid are clamped to the boundary cell (constant extrapolation of the
    boundary face).
    """

    def __init__(self, grid: GridSpec, values: np.ndarray):
        values = np.asarray(values, dtype=float)
        if values.shape[: len(grid.shape)] != grid.shape:
            raise ValueError(f"values shape {values.shape} does not start with grid shape {grid.shape}")
        self.grid = grid
        self.values = values
        self.value_shape = values.shape[len(grid.shape) :]

    def at_many(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        ndim = len(self.grid.shape)
        idxs, wts = [], []
        for d in range(ndim):
            axis = self.grid.axis_array(d + 1)
            x = np.clip(pts[:, d], axis[0], axis[-1])
            i = np.searchsorted(axis, x, side="right") - 1
            i = np.clip(i, 0, len(axis) - 2)
            w = (x - axis[i]) / (axis[i + 1] - axis[i])
            idxs.append(i)
            wts.append(w)
        out = np.zeros((pts.shape[0],) + self.value_shape)
        extra = (1,) * len(self.value_shape)
        for corner in itertools.product((0, 1), repeat=ndim):
            weight = np.ones(pts.shape[0])
            index = []
            for d, bit in enumerate(corner):
                weight = weight * (wts[d] if bit else 1.0 - wts[d])
                index.append(idxs[d] + bit)
            out += weight.reshape((-1,) + extra) * self.values[tuple(index)]
        return out

    def at(self, point) -> np.ndarray:
        return self.at_many(np.asarray(point, dtype=float)[None, :])[0]


class GridVectorField:
    """A vector field known by its values on grid nodes.

    Provides the same evaluation protocol as a symbolic field (``n``,
    ``eval_at``, ``values_on``) so downstream verification does not care how
    the field is represented.
    """

    def __init__(self, grid: GridSpec, node_values: np.ndarray):
        node_values = np.asarray(node_values, dtype=float)
        n = grid.chart.n
        if node_values.shape == (grid.num_nodes, n):
            node_values = node_values.reshape(grid.shape + (n,))
        if node_values.shape != grid.shape + (n,):
            raise ValueError(f"node values shape {node_values.shape} does not match grid {grid.shape}")
        self.grid = grid
        self._interp = MultilinearGrid(grid, node_values)

    @classmethod
    def tabulate(cls, grid: GridSpec, field) -> "GridVectorField":
        values = field.values_on(grid.nodes())
        return cls(grid, values.reshape(grid.shape + (grid.chart.n,)))

    @classmethod
    def from_callable(cls, grid: GridSpec, func) -> "GridVectorField":
        pts = grid.nodes()
        values = np.stack([np.asarray(func(p), dtype=float) for p in pts])
        return cls(grid, values.reshape(grid.shape + (grid.chart.n,)))

    @property
    def n(self) -> int:
        return self.grid.chart.n

    @property
    def node_values(self) -> np.ndarray:
        return self._interp.values

    def eval_at(self, q) -> np.ndarray:
        return self._interp.at(q)

    def values_on(self, points: np.ndarray) -> np.ndarray:
        return self._interp.at_many(points)
