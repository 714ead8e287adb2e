"""Cost matrices and Gibbs kernel operators.

The solvers never need the regularized kernel as an abstract object: they
only multiply vectors by ``K = exp(-C / epsilon)`` and its transpose.  The
:class:`KernelOperator` wraps either a dense matrix or an ordered list of
Kronecker factors; in the factored case a product with a vector is computed
one tensor mode at a time, which turns an O(n^2) multiply into
O(n * sum_i n_i) and avoids ever storing the full matrix.

Factor order follows the row-major grid convention of :mod:`momt.grids`:
the first factor acts on the slowest axis, so the dense equivalent is
``kron(K_1, kron(K_2, ...))``.
"""

from __future__ import annotations

import numpy as np

from .grids import Grid


def squared_distance_cost(src: Grid, dst: Grid) -> np.ndarray:
    """Pairwise squared Euclidean distances between two grids.

    Entry (i, j) is the cost of moving a unit mass from source point i to
    target point j.

    Raises
    ------
    ValueError
        If the grids do not have the same dimensionality.
    """
    if src.ndim != dst.ndim:
        raise ValueError(f"dimension mismatch: src has {src.ndim} axes, dst has {dst.ndim}")
    a = src.points()
    b = dst.points()
    diff = a[:, None, :] - b[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _check_cost(C: np.ndarray) -> np.ndarray:
    C = np.asarray(C, dtype=float)
    if C.ndim != 2:
        raise ValueError("cost must be a 2-D matrix")
    if not np.all(np.isfinite(C)):
        raise ValueError("cost entries must be finite")
    if np.any(C < 0):
        raise ValueError("cost entries must be nonnegative")
    return C


class KernelOperator:
    """The matrix ``exp(-(C - shift) / epsilon)``, dense or Kronecker-factored.

    Parameters
    ----------
    matrix : ndarray, optional
        Dense kernel matrix (mutually exclusive with ``factors``).
    factors : list of ndarray, optional
        Kronecker factors, slowest axis first.
    epsilon : float
        Regularization constant the kernel was built with.
    shift : float
        Constant subtracted from the cost before exponentiation.  The true
        kernel is ``exp(-shift/epsilon)`` times the stored one; Sinkhorn
        scalings absorb the factor, so applies work on the stored matrix.
    cost : ndarray or list of ndarray, optional
        The cost matrix (dense) or per-factor cost matrices that generated
        this kernel.  Needed only for transport-cost evaluation.
    """

    def __init__(self, *, matrix=None, factors=None, epsilon, shift=0.0, cost=None):
        if (matrix is None) == (factors is None):
            raise ValueError("exactly one of matrix/factors must be given")
        if epsilon <= 0:
            raise ValueError(f"epsilon must be positive, got {epsilon}")
        self.epsilon = float(epsilon)
        self.shift = float(shift)
        self.cost = cost
        if matrix is not None:
            self.matrix = np.asarray(matrix, dtype=float)
            self.factors = None
            self._shape = self.matrix.shape
        else:
            self.factors = [np.asarray(f, dtype=float) for f in factors]
            self.matrix = None
            rows = int(np.prod([f.shape[0] for f in self.factors]))
            cols = int(np.prod([f.shape[1] for f in self.factors]))
            self._shape = (rows, cols)

    @property
    def shape(self) -> tuple[int, int]:
        return self._shape

    @property
    def is_factored(self) -> bool:
        return self.factors is not None

    def dense(self) -> np.ndarray:
        """Materialize the stored kernel as a dense matrix."""
        if self.matrix is not None:
            return self.matrix
        out = self.factors[0]
        for f in self.factors[1:]:
            out = np.kron(out, f)
        return out

    def apply(self, v: np.ndarray, transpose: bool = False) -> np.ndarray:
        """Multiply ``K v`` (or ``K^T v``), mode by mode when factored."""
        v = np.asarray(v, dtype=float)
        n_in = self._shape[0] if transpose else self._shape[1]
        if v.shape != (n_in,):
            raise ValueError(f"length mismatch: kernel takes vectors of length {n_in}, got {v.shape}")
        if self.matrix is not None:
            return self.matrix.T @ v if transpose else self.matrix @ v
        return _mode_apply(self.factors, v, transpose)

    def cost_weighted_apply(self, v: np.ndarray, transpose: bool = False) -> np.ndarray:
        """Multiply ``(C_true .* K) v``, where C_true includes the shift.

        For factored kernels the cost decouples as a sum over axes, so
        ``C .* K`` is a sum of Kronecker products with a single factor
        replaced by its cost-weighted version.
        """
        if self.cost is None:
            raise ValueError("kernel was built without its cost matrix")
        v = np.asarray(v, dtype=float)
        if self.matrix is not None:
            C = np.asarray(self.cost, dtype=float)
            M = C * self.matrix
            return (M.T @ v if transpose else M @ v) + self.shift * self.apply(v, transpose)
        out = self.shift * self.apply(v, transpose)
        for a in range(len(self.factors)):
            mixed = list(self.factors)
            mixed[a] = self.cost[a] * self.factors[a]
            out = out + _mode_apply(mixed, v, transpose)
        return out

    def elementwise_power(self, w: float) -> "KernelOperator":
        """Kernel of the cost scaled by ``w``: entrywise ``K ** w``."""
        if w <= 0:
            raise ValueError("weight must be positive")
        if self.matrix is not None:
            cost = None if self.cost is None else w * np.asarray(self.cost)
            return KernelOperator(matrix=self.matrix**w, epsilon=self.epsilon,
                                  shift=w * self.shift, cost=cost)
        cost = None if self.cost is None else [w * c for c in self.cost]
        return KernelOperator(factors=[f**w for f in self.factors], epsilon=self.epsilon,
                              shift=w * self.shift, cost=cost)

    def min_entry(self) -> float:
        if self.matrix is not None:
            return float(self.matrix.min())
        out = 1.0
        for f in self.factors:
            out *= float(f.min())
        return out


def _mode_apply(factors: list[np.ndarray], v: np.ndarray, transpose: bool) -> np.ndarray:
    axis_dim = 0 if transpose else 1
    shape_in = tuple(f.shape[axis_dim] for f in factors)
    x = v.reshape(shape_in)
    for a, f in enumerate(factors):
        mat = f.T if transpose else f
        x = np.moveaxis(np.tensordot(mat, x, axes=(1, a)), 0, a)
    return x.reshape(-1)


def build_kernel(C, epsilon: float, factored_axes=None, stabilize: bool = False) -> KernelOperator:
    """Build ``K = exp(-C / epsilon)`` as a kernel operator.

    Parameters
    ----------
    C : ndarray
        Full cost matrix.
    epsilon : float
        Positive regularization constant.
    factored_axes : list of ndarray, optional
        Per-axis cost matrices whose Kronecker sum equals ``C``
        (cost decoupling across axes).  When given, the kernel is
        returned in factored form; the decomposition is checked against
        ``C`` on a sample of entries.
    stabilize : bool
        Subtract ``min(C)`` (per factor, when factored) before
        exponentiation and record the shift on the operator.  Keeps
        small-epsilon kernels inside double-precision range; Sinkhorn
        iterations are invariant to the implied positive rescaling.
    """
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    C = _check_cost(C)
    if factored_axes is None:
        shift = float(C.min()) if stabilize else 0.0
        return KernelOperator(matrix=np.exp(-(C - shift) / epsilon), epsilon=epsilon,
                              shift=shift, cost=C - shift)
    axes = [_check_cost(a) for a in factored_axes]
    _check_factored_consistency(C, axes)
    shifts = [float(a.min()) if stabilize else 0.0 for a in axes]
    factors = [np.exp(-(a - s) / epsilon) for a, s in zip(axes, shifts)]
    return KernelOperator(factors=factors, epsilon=epsilon, shift=sum(shifts),
                          cost=[a - s for a, s in zip(axes, shifts)])


def _check_factored_consistency(C, axes, n_samples=64, tol=1e-10, seed=0):
    shape_r = tuple(a.shape[0] for a in axes)
    shape_c = tuple(a.shape[1] for a in axes)
    if C.shape != (int(np.prod(shape_r)), int(np.prod(shape_c))):
        raise ValueError(
            f"factored axes give shape {(int(np.prod(shape_r)), int(np.prod(shape_c)))}, "
            f"cost matrix is {C.shape}")
    rng = np.random.default_rng(seed)
    rows = rng.integers(0, C.shape[0], size=n_samples)
    cols = rng.integers(0, C.shape[1], size=n_samples)
    ri = np.unravel_index(rows, shape_r)
    ci = np.unravel_index(cols, shape_c)
    total = np.zeros(n_samples)
    for a, axis_cost in enumerate(axes):
        total += axis_cost[ri[a], ci[a]]
    scale = max(1.0, float(np.abs(C).max()))
    bad = np.abs(total - C[rows, cols]) > tol * scale
    if np.any(bad):
        k = int(np.argmax(bad))
        raise ValueError(
            f"per-axis costs disagree with the full cost at entry "
            f"({rows[k]}, {cols[k]}): sum {total[k]!r} vs {C[rows[k], cols[k]]!r}")


def kernel_apply(K: KernelOperator, v, transpose: bool = False) -> np.ndarray:
    """Function form of :meth:`KernelOperator.apply`."""
    return K.apply(v, transpose=transpose)
