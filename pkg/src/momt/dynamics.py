"""Linear state-space transport costs and displacement interpolation.

A time-invariant system ``xdot = A x + B u`` with observation ``y = F x``
induces a transport cost between states equal to the minimum input energy
steering one to the other over a unit horizon.  The cost is a quadratic
form in the residual ``x1 - expm(A) x0`` weighted by the inverse
controllability Gramian, and the minimizing trajectory gives a physically
meaningful interpolation of transport plans.  The observation map lifts to
grids as a sparse column-stochastic splatting matrix.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .grids import Grid


@dataclass(frozen=True)
class LinearSystem:
    """Time-invariant state-space model (A, B, F).

    ``A`` is the d x d drift, ``B`` the d x f input map, and ``F`` the
    q x d observation map.
    """

    A: np.ndarray
    B: np.ndarray
    F: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        F = np.atleast_2d(np.asarray(self.F, dtype=float))
        d = A.shape[0]
        if A.shape != (d, d):
            raise ValueError(f"A must be square, got {A.shape}")
        if B.shape[0] != d:
            raise ValueError(f"B must have {d} rows, got {B.shape}")
        if F.shape[1] != d:
            raise ValueError(f"F must have {d} columns, got {F.shape}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "F", F)

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    def __hash__(self):
        return hash((self.A.tobytes(), self.B.tobytes(), self.F.tobytes(),
                     self.A.shape, self.B.shape))

    def __eq__(self, other):
        return (isinstance(other, LinearSystem)
                and self.A.shape == other.A.shape and self.B.shape == other.B.shape
                and np.array_equal(self.A, other.A) and np.array_equal(self.B, other.B)
                and np.array_equal(self.F, other.F))


def static_system(d: int) -> LinearSystem:
    """A = 0, B = I, F = I: transport cost reduces to squared distance."""
    return LinearSystem(np.zeros((d, d)), np.eye(d), np.eye(d))


def state_transition(sys: LinearSystem, dt: float) -> np.ndarray:
    """Matrix exponential ``expm(A dt)`` (Pade scaling-and-squaring)."""
    return sla.expm(sys.A * float(dt))


def controllability_gramian(sys: LinearSystem, s: float, t: float) -> np.ndarray:
    """Gramian of (A, B) over the horizon [s, t].

    Computed in closed form from the augmented-matrix exponential

        expm([[-A, B B^T], [0, A^T]] h) = [[*, E12], [0, E22]],
        W = E22^T @ E12,   h = t - s,

    which is exact for constant (A, B).  The result is symmetrized and
    positive semidefinite.
    """
    if s >= t:
        raise ValueError(f"need s < t, got s={s}, t={t}")
    return _gramian_cached(sys, float(t - s))


@lru_cache(maxsize=256)
def _gramian_cached(sys: LinearSystem, h: float) -> np.ndarray:
    d = sys.dim
    BBt = sys.B @ sys.B.T
    M = np.zeros((2 * d, 2 * d))
    M[:d, :d] = -sys.A
    M[:d, d:] = BBt
    M[d:, d:] = sys.A.T
    E = sla.expm(M * h)
    W = E[d:, d:].T @ E[:d, d:]
    W = 0.5 * (W + W.T)
    W.flags.writeable = False
    return W


@lru_cache(maxsize=64)
def _unit_gramian_inverse(sys: LinearSystem) -> tuple[np.ndarray, np.ndarray]:
    """W(1,0)^{-1} and expm(A), cached per system; fails on rank deficiency."""
    W = _gramian_cached(sys, 1.0)
    eigvals = np.linalg.eigvalsh(W)
    if eigvals[0] <= 0 or eigvals[-1] / eigvals[0] > 1e12:
        rank = int(np.sum(eigvals > 1e-12 * max(eigvals[-1], 1.0)))
        raise ValueError(
            f"system is not controllable over the unit horizon: Gramian rank "
            f"{rank} < {sys.dim} (eigenvalues {eigvals})")
    Winv = np.linalg.inv(W)
    Winv = 0.5 * (Winv + Winv.T)
    Winv.flags.writeable = False
    Phi = sla.expm(sys.A)
    Phi.flags.writeable = False
    return Winv, Phi


def lq_cost(sys: LinearSystem, src: Grid, dst: Grid) -> np.ndarray:
    """Minimum-energy transport cost between all grid-point pairs.

    Entry (i, j) is ``(x_j - expm(A) x_i)^T W(1,0)^{-1} (x_j - expm(A) x_i)``
    for source point x_i and target point x_j.
    """
    if src.ndim != sys.dim or dst.ndim != sys.dim:
        raise ValueError(
            f"grids must match the state dimension {sys.dim}, "
            f"got src {src.ndim}, dst {dst.ndim}")
    Winv, Phi = _unit_gramian_inverse(sys)
    Z = src.points() @ Phi.T
    Y = dst.points()
    zz = np.einsum("id,de,ie->i", Z, Winv, Z)
    yy = np.einsum("jd,de,je->j", Y, Winv, Y)
    cross = Z @ Winv @ Y.T
    C = zz[:, None] + yy[None, :] - 2.0 * cross
    np.maximum(C, 0.0, out=C)
    return C


def _trajectory_matrices(sys: LinearSystem, tau: float) -> tuple[np.ndarray, np.ndarray]:
    """Matrices (M0, M1) with  xhat(tau) = M0 x0 + M1 x1."""
    Winv, _ = _unit_gramian_inverse(sys)
    d = sys.dim
    if tau <= 0.0:
        return np.eye(d), np.zeros((d, d))
    if tau == 1.0:
        return np.zeros((d, d)), np.eye(d)
    if tau > 1.0:
        # unforced extrapolation: state coasts from x1 under the drift alone
        return np.zeros((d, d)), sla.expm(sys.A * (tau - 1.0))
    A_tau_1 = sla.expm(sys.A * (tau - 1.0))
    A_1_tau = sla.expm(sys.A * (1.0 - tau))
    A_1_0 = sla.expm(sys.A)
    W_1_tau = _gramian_cached(sys, 1.0 - tau)
    W_tau_0 = _gramian_cached(sys, tau)
    M0 = A_tau_1 @ W_1_tau @ Winv @ A_1_0
    M1 = W_tau_0 @ A_1_tau.T @ Winv
    return M0, M1


def optimal_trajectory(sys: LinearSystem, x0, x1, tau: float) -> np.ndarray:
    """State at time ``tau`` on the minimum-energy path from x0 to x1.

    The path satisfies x(0) = x0, x(1) = x1; for ``tau > 1`` the state is
    extrapolated with zero input, i.e. ``expm(A (tau-1)) x1``.
    """
    if tau < 0:
        raise ValueError(f"tau must be >= 0, got {tau}")
    M0, M1 = _trajectory_matrices(sys, float(tau))
    x0 = np.asarray(x0, dtype=float)
    x1 = np.asarray(x1, dtype=float)
    return M0 @ x0 + M1 @ x1


def _splat(points: np.ndarray, masses: np.ndarray, grid: Grid) -> tuple[np.ndarray, float]:
    """Multilinear scatter of point masses onto a grid.

    Each mass is distributed over the 2^d corners of its enclosing cell;
    points outside the grid box contribute to the returned out-of-domain
    total instead.  Single-point axes are treated as collapsed: any
    coordinate is accepted along them.
    """
    n_pts = points.shape[0]
    shape = grid.shape
    frac_list = []
    base_list = []
    inside = np.ones(n_pts, dtype=bool)
    for a, (lo, hi, n) in enumerate(grid.axes):
        x = points[:, a]
        if n == 1:
            base_list.append(np.zeros(n_pts, dtype=np.intp))
            frac_list.append(np.zeros(n_pts))
            continue
        h = (hi - lo) / (n - 1)
        t = (x - lo) / h
        inside &= (t >= 0.0) & (t <= n - 1.0)
        i0 = np.clip(np.floor(t).astype(np.intp), 0, n - 2)
        base_list.append(i0)
        frac_list.append(t - i0)
    out = np.zeros(shape)
    idx_in = np.nonzero(inside)[0]
    oob = float(masses[~inside].sum())
    if idx_in.size:
        d = grid.ndim
        for corner in range(1 << d):
            w = masses[idx_in].copy()
            idx = []
            for a in range(d):
                bit = (corner >> a) & 1
                fa = frac_list[a][idx_in]
                w *= fa if bit else (1.0 - fa)
                idx.append(base_list[a][idx_in] + (bit if shape[a] > 1 else 0))
            np.add.at(out, tuple(idx), w)
    return out.reshape(-1), oob


def interpolate_plan(plan, src: Grid, dst: Grid, sys: LinearSystem, tau: float,
                     out: Grid) -> tuple[np.ndarray, float]:
    """Displacement interpolation of a bi-marginal plan at time ``tau``.

    Every plan entry's mass is carried to the state reached at ``tau`` on
    the minimum-energy path between its source and target points, then
    splatted multilinearly onto ``out``.  Returns the interpolated marginal
    together with the mass that fell outside the output grid, so that
    ``sum(marginal) + out_of_domain == sum(plan)``.
    """
    plan = np.asarray(plan, dtype=float)
    if np.any(plan < 0):
        raise ValueError("plan entries must be nonnegative")
    if plan.shape != (src.size, dst.size):
        raise ValueError(f"plan shape {plan.shape} does not match grids "
                         f"({src.size}, {dst.size})")
    M0, M1 = _trajectory_matrices(sys, float(tau))
    P0 = src.points() @ M0.T
    P1 = dst.points() @ M1.T
    # process source rows in chunks to bound the (rows * dst.size) buffers
    chunk = max(1, (1 << 21) // max(1, dst.size))
    total = np.zeros(out.size)
    oob = 0.0
    for lo in range(0, src.size, chunk):
        hi = min(lo + chunk, src.size)
        positions = (P0[lo:hi, None, :] + P1[None, :, :]).reshape(-1, sys.dim)
        part, part_oob = _splat(positions, plan[lo:hi].reshape(-1), out)
        total += part
        oob += part_oob
    return total, oob


def push_forward_matrix(sys: LinearSystem, full: Grid, obs: Grid) -> sp.csr_matrix:
    """Sparse matrix carrying masses on ``full`` to observed masses on ``obs``.

    Column j splats ``F @ x_j`` multilinearly onto the observation grid, so
    every column sums to one and the map preserves total mass.  Points whose
    image leaves the observation box are an error: the observation grid must
    cover the image of the state grid.
    """
    q = sys.F.shape[0]
    if obs.ndim != q:
        raise ValueError(f"observation grid must have {q} axes, got {obs.ndim}")
    if full.ndim != sys.dim:
        raise ValueError(f"state grid must have {sys.dim} axes, got {full.ndim}")
    images = full.points() @ sys.F.T
    outside = np.zeros(full.size, dtype=bool)
    for a, (lo, hi, n) in enumerate(obs.axes):
        if n == 1:
            continue
        outside |= (images[:, a] < lo) | (images[:, a] > hi)
    if np.any(outside):
        bad = np.nonzero(outside)[0][:10]
        raise ValueError(
            "observation map sends state-grid points outside the observation "
            f"grid; first offenders (linear index -> image): "
            + ", ".join(f"{int(i)} -> {images[i]}" for i in bad))

    rows, cols, vals = [], [], []
    shape = obs.shape
    d = obs.ndim
    base = np.empty((full.size, d), dtype=np.intp)
    frac = np.empty((full.size, d))
    for a, (lo, hi, n) in enumerate(obs.axes):
        if n == 1:
            base[:, a] = 0
            frac[:, a] = 0.0
            continue
        h = (hi - lo) / (n - 1)
        t = (images[:, a] - lo) / h
        i0 = np.clip(np.floor(t).astype(np.intp), 0, n - 2)
        base[:, a] = i0
        frac[:, a] = t - i0
    cols_idx = np.arange(full.size)
    for corner in range(1 << d):
        w = np.ones(full.size)
        idx = []
        for a in range(d):
            bit = (corner >> a) & 1
            w = w * (frac[:, a] if bit else (1.0 - frac[:, a]))
            idx.append(base[:, a] + (bit if shape[a] > 1 else 0))
        keep = w > 0
        if not np.any(keep):
            continue
        lin = np.ravel_multi_index(tuple(i[keep] for i in idx), shape, order="C")
        rows.append(lin)
        cols.append(cols_idx[keep])
        vals.append(w[keep])
    P = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(obs.size, full.size))
    return P
