import numpy as np
import pytest

from momt.grids import Grid, grid_1d
from momt.kernels import KernelOperator, build_kernel, kernel_apply, squared_distance_cost


class TestSquaredDistanceCost:
    def test_1d_three_points(self):
        g = grid_1d(0, 2, 3)
        C = squared_distance_cost(g, g)
        np.testing.assert_allclose(C, [[0, 1, 4], [1, 0, 1], [4, 1, 0]])

    def test_single_point_zero_self_distance(self):
        g = Grid(((0.7, 0.7, 1),))
        np.testing.assert_array_equal(squared_distance_cost(g, g), [[0.0]])

    def test_2d_corner_pair(self):
        g = Grid(((0, 1, 2), (0, 1, 2)))
        C = squared_distance_cost(g, g)
        i = g.ravel_index(np.array([[0, 0]]))[0]
        j = g.ravel_index(np.array([[1, 1]]))[0]
        assert C[i, j] == pytest.approx(2.0)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension mismatch"):
            squared_distance_cost(grid_1d(0, 1, 2), Grid(((0, 1, 2), (0, 1, 2))))


class TestBuildKernel:
    def test_entrywise_exponential(self):
        K = build_kernel(np.array([[0.0, 1.0], [1.0, 0.0]]), 1.0)
        np.testing.assert_allclose(K.dense(), [[1, np.exp(-1)], [np.exp(-1), 1]])

    def test_zero_cost_gives_all_ones(self):
        for eps in (0.1, 1.0, 7.0):
            K = build_kernel(np.zeros((3, 2)), eps)
            np.testing.assert_array_equal(K.dense(), np.ones((3, 2)))

    def test_nonpositive_epsilon_rejected(self):
        with pytest.raises(ValueError, match="epsilon"):
            build_kernel(np.zeros((2, 2)), 0.0)

    def test_factored_matches_dense_on_2d_grid(self):
        g = Grid(((0, 1, 3), (0, 1, 3)))
        C = squared_distance_cost(g, g)
        ax = grid_1d(0, 1, 3)
        Ca = squared_distance_cost(ax, ax)
        K = build_kernel(C, 0.5, factored_axes=[Ca, Ca])
        Kd = build_kernel(C, 0.5)
        rng = np.random.default_rng(0)
        v = rng.uniform(0.5, 1.5, g.size)
        np.testing.assert_allclose(K.apply(v), Kd.apply(v), rtol=1e-12)
        np.testing.assert_allclose(K.apply(v, transpose=True), Kd.apply(v, transpose=True),
                                   rtol=1e-12)

    def test_inconsistent_factors_rejected(self):
        C = np.ones((4, 4))
        bad = [np.ones((2, 2)), np.zeros((2, 2))]  # sums to 1, C says 1 except sample
        bad[0][0, 0] = 5.0
        with pytest.raises(ValueError, match="disagree"):
            build_kernel(C, 1.0, factored_axes=bad)

    def test_stabilize_records_shift(self):
        C = np.array([[3.0, 4.0], [5.0, 3.5]])
        K = build_kernel(C, 0.25, stabilize=True)
        assert K.shift == 3.0
        np.testing.assert_allclose(K.dense(), np.exp(-(C - 3.0) / 0.25))


class TestKernelApply:
    def test_dense_all_ones(self):
        K = KernelOperator(matrix=np.ones((2, 2)), epsilon=1.0)
        np.testing.assert_array_equal(K.apply(np.ones(2)), [2.0, 2.0])

    def test_identity_factors(self):
        K = KernelOperator(factors=[np.eye(3), np.eye(4)], epsilon=1.0)
        v = np.arange(12.0) + 1.0
        np.testing.assert_array_equal(K.apply(v), v)
        np.testing.assert_array_equal(K.apply(v, transpose=True), v)

    def test_factored_matches_kron_oracle(self):
        rng = np.random.default_rng(1)
        A = rng.uniform(0.1, 1.0, (4, 4))
        B = rng.uniform(0.1, 1.0, (3, 3))
        K = KernelOperator(factors=[A, B], epsilon=1.0)
        dense = np.kron(A, B)
        v = rng.uniform(0.1, 1.0, 12)
        np.testing.assert_allclose(K.apply(v), dense @ v, rtol=1e-12)
        np.testing.assert_allclose(K.apply(v, transpose=True), dense.T @ v, rtol=1e-12)

    def test_rectangular_factored_matches_kron_oracle(self):
        rng = np.random.default_rng(2)
        A = rng.uniform(0.1, 1.0, (4, 2))
        B = rng.uniform(0.1, 1.0, (3, 5))
        K = KernelOperator(factors=[A, B], epsilon=1.0)
        dense = np.kron(A, B)
        v = rng.uniform(0.1, 1.0, 10)
        np.testing.assert_allclose(K.apply(v), dense @ v, rtol=1e-12)
        w = rng.uniform(0.1, 1.0, 12)
        np.testing.assert_allclose(K.apply(w, transpose=True), dense.T @ w, rtol=1e-12)

    def test_length_mismatch(self):
        K = KernelOperator(matrix=np.ones((2, 3)), epsilon=1.0)
        with pytest.raises(ValueError, match="length mismatch"):
            K.apply(np.ones(2))


class TestProperties:
    def test_built_kernels_strictly_positive(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            C = rng.uniform(0, 50, (5, 5))
            K = build_kernel(C, rng.uniform(0.5, 2.0))
            assert K.min_entry() > 0

    def test_factored_equals_dense_random_grids(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            dims = rng.integers(2, 9, size=rng.integers(1, 4))
            if np.prod(dims) > 10_000:
                continue
            axes_costs = [rng.uniform(0, 3, (n, n)) for n in dims]
            # assemble the Kronecker-sum cost explicitly
            full = np.zeros(tuple(dims) * 2)
            for a, Ca in enumerate(axes_costs):
                shape = [1] * (2 * len(dims))
                shape[a] = dims[a]
                shape[len(dims) + a] = dims[a]
                full = full + Ca.reshape(shape)
            n = int(np.prod(dims))
            full = full.reshape(n, n)
            eps = rng.uniform(0.5, 2.0)
            K = build_kernel(full, eps, factored_axes=axes_costs)
            Kd = build_kernel(full, eps)
            v = rng.uniform(0.1, 1.0, n)
            np.testing.assert_allclose(K.apply(v), Kd.apply(v), rtol=1e-12)

    def test_apply_is_linear(self):
        rng = np.random.default_rng(5)
        K = KernelOperator(factors=[rng.uniform(0.1, 1, (3, 3)),
                                    rng.uniform(0.1, 1, (4, 4))], epsilon=1.0)
        v, w = rng.normal(size=12), rng.normal(size=12)
        a, b = 0.7, -1.3
        np.testing.assert_allclose(K.apply(a * v + b * w),
                                   a * K.apply(v) + b * K.apply(w), rtol=1e-12, atol=1e-13)

    def test_cost_weighted_apply_matches_dense(self):
        rng = np.random.default_rng(6)
        Ca = rng.uniform(0, 2, (3, 3))
        Cb = rng.uniform(0, 2, (4, 4))
        full = (Ca.reshape(3, 1, 3, 1) + Cb.reshape(1, 4, 1, 4)).reshape(12, 12)
        K = build_kernel(full, 0.7, factored_axes=[Ca, Cb])
        Kd = build_kernel(full, 0.7)
        v = rng.uniform(0.1, 1, 12)
        expected = (full * Kd.dense()) @ v
        np.testing.assert_allclose(K.cost_weighted_apply(v), expected, rtol=1e-12)
        np.testing.assert_allclose(Kd.cost_weighted_apply(v), expected, rtol=1e-12)

    def test_cost_weighted_apply_with_shift(self):
        C = np.array([[2.0, 3.0], [4.0, 2.5]])
        K = build_kernel(C, 1.0, stabilize=True)
        v = np.array([0.3, 0.9])
        np.testing.assert_allclose(K.cost_weighted_apply(v), (C * np.exp(-(C - 2.0))) @ v,
                                   rtol=1e-12)

    def test_elementwise_power(self):
        C = np.array([[0.0, 1.0], [2.0, 0.5]])
        K = build_kernel(C, 0.5)
        K2 = K.elementwise_power(3.0)
        np.testing.assert_allclose(K2.dense(), np.exp(-3.0 * C / 0.5), rtol=1e-12)
        v = np.array([1.0, 2.0])
        np.testing.assert_allclose(K2.cost_weighted_apply(v),
                                   (3.0 * C * np.exp(-3.0 * C / 0.5)) @ v, rtol=1e-12)
