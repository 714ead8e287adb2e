"""Regular Cartesian grids with row-major linear indexing.

A grid is the discretization substrate for mass distributions: every
distribution handled by the solvers is a vector of cell masses indexed
linearly over the Cartesian product of per-axis point sets.  Linear
indexing is row-major (C order) with the *first* axis slowest; the
Kronecker factor order of separable kernels depends on this convention,
so it is fixed here and tested.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Grid:
    """Regular grid over a box, one (min, max, count) triple per axis.

    Parameters
    ----------
    axes : tuple of (float, float, int)
        Per-axis lower bound, upper bound, and point count.  Each axis is
        sampled uniformly with ``count`` points including both endpoints
        (a single-point axis sits at its lower bound).
    """

    axes: tuple[tuple[float, float, int], ...]
    _coords: tuple[np.ndarray, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        axes = tuple((float(a), float(b), int(n)) for a, b, n in self.axes)
        if not axes:
            raise ValueError("grid needs at least one axis")
        for k, (lo, hi, n) in enumerate(axes):
            if n < 1:
                raise ValueError(f"axis {k}: count must be >= 1, got {n}")
            if n > 1 and not lo < hi:
                raise ValueError(f"axis {k}: need min < max when count > 1")
        object.__setattr__(self, "axes", axes)
        coords = tuple(np.linspace(lo, hi, n) for lo, hi, n in axes)
        object.__setattr__(self, "_coords", coords)

    @property
    def ndim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(n for _, _, n in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def coordinates(self, axis: int) -> np.ndarray:
        """Point coordinates along one axis."""
        return self._coords[axis].copy()

    def spacing(self, axis: int) -> float:
        """Cell width along one axis (0.0 for single-point axes)."""
        lo, hi, n = self.axes[axis]
        return (hi - lo) / (n - 1) if n > 1 else 0.0

    def points(self) -> np.ndarray:
        """All grid points as a (size, ndim) array in linear-index order."""
        mesh = np.meshgrid(*self._coords, indexing="ij")
        return np.stack([m.ravel(order="C") for m in mesh], axis=-1)

    def ravel_index(self, multi) -> np.ndarray:
        """Multi-index -> linear index (first axis slowest)."""
        multi = np.asarray(multi)
        return np.ravel_multi_index(tuple(multi.T), self.shape, order="C")

    def unravel_index(self, linear) -> np.ndarray:
        """Linear index -> multi-index, one row per input index."""
        return np.stack(np.unravel_index(np.asarray(linear), self.shape, order="C"), axis=-1)

    def point(self, linear: int) -> np.ndarray:
        """Coordinates of a single linearly indexed point."""
        multi = np.unravel_index(int(linear), self.shape, order="C")
        return np.array([self._coords[a][i] for a, i in enumerate(multi)])


def grid_1d(lo: float, hi: float, n: int) -> Grid:
    """Convenience constructor for a one-axis grid."""
    return Grid(((lo, hi, n),))
