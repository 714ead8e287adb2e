"""Peak extraction and track association for estimated spectra."""

from __future__ import annotations

import numpy as np
from scipy.ndimage import maximum_filter

from .grids import Grid


def peak_extract(spectrum, grid: Grid, k: int, min_separation: int = 1
                 ) -> list[tuple[np.ndarray, float]]:
    """Top-k local maxima of a gridded spectrum with non-maximum suppression.

    A cell is a candidate when its mass is >= all neighbors (Chebyshev
    radius 1).  Candidates are taken greedily by decreasing mass, ties
    broken by the lower linear index; a candidate within ``min_separation``
    cells (Chebyshev) of an already accepted peak is suppressed.

    Returns (point coordinates, mass) pairs, at most k of them.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    values = np.asarray(spectrum, dtype=float).reshape(grid.shape)
    local_max = values >= maximum_filter(values, size=3, mode="constant", cval=-np.inf)
    cand = np.nonzero(local_max.reshape(-1))[0]
    if cand.size == 0:
        return []
    order = np.lexsort((cand, -values.reshape(-1)[cand]))
    cand = cand[order]
    accepted: list[np.ndarray] = []
    out = []
    flat = values.reshape(-1)
    for lin in cand:
        multi = grid.unravel_index(int(lin))
        if any(np.max(np.abs(multi - a)) <= min_separation for a in accepted):
            continue
        accepted.append(multi)
        out.append((grid.point(int(lin)), float(flat[lin])))
        if len(out) == k:
            break
    return out


def peak_cells(spectrum, grid: Grid, k: int, min_separation: int = 1) -> np.ndarray:
    """Like :func:`peak_extract` but returning multi-indices, shape (k, ndim)."""
    points = peak_extract(spectrum, grid, k, min_separation)
    if not points:
        return np.zeros((0, grid.ndim), dtype=int)
    cells = []
    for pt, _ in points:
        idx = [int(round((pt[a] - grid.axes[a][0]) / grid.spacing(a)))
               if grid.axes[a][2] > 1 else 0 for a in range(grid.ndim)]
        cells.append(idx)
    return np.asarray(cells, dtype=int)


def associate_tracks(peaks_per_time: list[np.ndarray], cell_sizes: np.ndarray
                     ) -> list[list[np.ndarray]]:
    """Greedy nearest-peak continuation of per-time peak sets into tracks.

    ``peaks_per_time[t]`` holds the peak coordinates at time t (one row per
    peak, in the marginal's native state space).  Distances are measured in
    cell units (coordinates divided by ``cell_sizes``), so axes with very
    different physical scales contribute comparably.  Tracks start from the
    first time's peaks; at each step every track claims its nearest
    unclaimed peak, shortest distances first.
    """
    cell_sizes = np.where(np.asarray(cell_sizes, dtype=float) > 0, cell_sizes, 1.0)
    tracks = [[p] for p in peaks_per_time[0]]
    for peaks in peaks_per_time[1:]:
        if len(peaks) == 0:
            continue
        pairs = []
        for i, tr in enumerate(tracks):
            for j, p in enumerate(peaks):
                d = np.linalg.norm((tr[-1] - p) / cell_sizes)
                pairs.append((d, i, j))
        pairs.sort(key=lambda x: (x[0], x[1], x[2]))
        used_tracks, used_peaks = set(), set()
        for _, i, j in pairs:
            if i in used_tracks or j in used_peaks:
                continue
            tracks[i].append(peaks[j])
            used_tracks.add(i)
            used_peaks.add(j)
            if len(used_tracks) == len(tracks) or len(used_peaks) == len(peaks):
                break
        for i, tr in enumerate(tracks):
            if i not in used_tracks:
                tr.append(tr[-1])
    return tracks
