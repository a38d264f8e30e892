import numpy as np
import pytest

from fedspa import distances
from fedspa.errors import NumericError

from conftest import central_diff, rel_err


def test_sample_slices_one_dim():
    basis = distances.sample_slices(1, 16, seed=0)
    assert set(np.unique(basis.directions)) <= {-1.0, 1.0}


def test_sample_slices_unit_norms_and_determinism():
    a = distances.sample_slices(9, 32, seed=5)
    b = distances.sample_slices(9, 32, seed=5)
    assert np.abs(np.linalg.norm(a.directions, axis=1) - 1).max() < 1e-6
    assert np.array_equal(a.directions, b.directions)


def test_exact_w1_basics():
    assert distances.exact_w1_1d([1.0, 2.0, 5.0], [5.0, 1.0, 2.0]) == 0.0
    assert distances.exact_w1_1d([0.0], [3.0]) == 3.0
    assert rel_err(distances.exact_w1_1d([0.0, 1.0], [1.0, 2.0]), 1.0) < 1e-12
    with pytest.raises(ValueError):
        distances.exact_w1_1d([], [1.0])


def test_exact_w1_unequal_sizes():
    # piecewise integral over the merged quantile grid, by hand:
    # quantile gap is 0 on [0, 1/2), 1 on [1/2, 2/3), 2 on [2/3, 1)
    got = distances.exact_w1_1d([0.0, 1.0], [0.0, 0.0, 3.0])
    assert rel_err(got, 5.0 / 6.0) < 1e-12


def test_sliced_zero_on_equal_multisets():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(12, 5))
    basis = distances.sample_slices(5, 20, seed=1)
    perm = rng.permutation(12)
    assert distances.sliced_wasserstein(a, a[perm], basis) == 0.0


def test_sliced_permutation_invariance_bit_exact():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(10, 4))
    b = rng.normal(size=(10, 4))
    basis = distances.sample_slices(4, 16, seed=2)
    ref = distances.sliced_wasserstein(a, b, basis)
    for seed in range(5):
        p = np.random.default_rng(seed).permutation(10)
        assert distances.sliced_wasserstein(a[p], b, basis) == ref
        assert distances.sliced_wasserstein(a, b[p], basis) == ref


def test_sliced_symmetry_equal_sizes():
    rng = np.random.default_rng(7)
    a = rng.normal(size=(8, 3))
    b = rng.normal(size=(8, 3))
    basis = distances.sample_slices(3, 11, seed=3)
    assert distances.sliced_wasserstein(a, b, basis) == distances.sliced_wasserstein(b, a, basis)


def test_sliced_matches_1d_oracle():
    # 100 random equal-size 1-D instances: squared sliced distance must
    # equal the exact quantile integral for any direction signs
    rng = np.random.default_rng(42)
    for trial in range(100):
        n = int(rng.integers(1, 30))
        a = rng.normal(size=(n, 1)) * rng.uniform(0.5, 3)
        b = rng.normal(size=(n, 1)) + rng.uniform(-2, 2)
        basis = distances.sample_slices(1, int(rng.integers(1, 12)), seed=trial)
        got = distances.sliced_wasserstein(a, b, basis) ** 2
        want = distances.exact_w1_1d(a.ravel(), b.ravel())
        assert abs(got - want) <= 1e-6


def test_sliced_unequal_sizes_midpoint_rule():
    # M = 3 midpoints {1/6, 1/2, 5/6}: quantiles (0,1,1) vs (0,0,3),
    # mean gap 1.0, sliced value sqrt(1.0)
    a = np.array([[0.0], [1.0]])
    b = np.array([[0.0], [0.0], [3.0]])
    basis = distances.SliceBasis(directions=np.array([[1.0]]), seed=0)
    assert rel_err(distances.sliced_wasserstein(a, b, basis), 1.0) < 1e-12


def test_sliced_gradients_match_finite_differences():
    rng = np.random.default_rng(9)
    a = rng.normal(size=(6, 4))
    b = rng.normal(size=(9, 4))
    basis = distances.sample_slices(4, 14, seed=4)
    _, ga, gb = distances.sliced_wasserstein(a, b, basis, grads=True)

    def value_a(flat):
        return distances.sliced_wasserstein(flat.reshape(a.shape), b, basis)

    def value_b(flat):
        return distances.sliced_wasserstein(a, flat.reshape(b.shape), basis)

    for idx in rng.choice(a.size, size=10, replace=False):
        fd = central_diff(value_a, a.ravel(), idx, h=1e-6)
        assert rel_err(ga.flat[idx], fd) < 1e-3
    for idx in rng.choice(b.size, size=10, replace=False):
        fd = central_diff(value_b, b.ravel(), idx, h=1e-6)
        assert rel_err(gb.flat[idx], fd) < 1e-3


def test_sliced_zero_distance_gradient():
    a = np.ones((3, 2))
    basis = distances.sample_slices(2, 8, seed=0)
    value, ga, gb = distances.sliced_wasserstein(a, a.copy(), basis, grads=True)
    assert value == 0.0
    assert (ga == 0).all() and (gb == 0).all()


def test_sliced_dimension_mismatch():
    basis = distances.sample_slices(3, 4, seed=0)
    with pytest.raises(ValueError):
        distances.sliced_wasserstein(np.ones((2, 3)), np.ones((2, 4)), basis)


def test_proj_distance_parallel_and_orthogonal():
    b = np.array([0.3, -1.2, 0.7])
    assert distances.proj_distance(2 * b, b) < 1e-12
    assert rel_err(distances.proj_distance([1.0, 0.0], [0.0, 1.0]), 1.0) < 1e-12


def test_proj_distance_scale_free():
    rng = np.random.default_rng(3)
    a = rng.normal(size=6)
    b = rng.normal(size=6)
    # power-of-two rescale commutes with rounding: bit-exact
    assert distances.proj_distance(a, 4 * b) == distances.proj_distance(a, b)
    assert rel_err(distances.proj_distance(a, 5 * b), distances.proj_distance(a, b)) < 1e-12


def test_proj_distance_bounded_by_norm():
    rng = np.random.default_rng(5)
    for _ in range(50):
        a = rng.normal(size=4)
        b = rng.normal(size=4)
        assert distances.proj_distance(a, b) <= np.linalg.norm(a) + 1e-12


def test_proj_distance_degenerate_reference():
    with pytest.raises(NumericError):
        distances.proj_distance([1.0, 2.0], [0.0, 0.0])


def test_proj_distance_gradients():
    rng = np.random.default_rng(6)
    a = rng.normal(size=5)
    b = rng.normal(size=5)
    _, ga, gb = distances.proj_distance(a, b, grads=True)
    for idx in range(5):
        fd_a = central_diff(lambda v: distances.proj_distance(v, b), a, idx, h=1e-6)
        fd_b = central_diff(lambda v: distances.proj_distance(a, v), b, idx, h=1e-6)
        assert rel_err(ga[idx], fd_a) < 1e-3
        assert rel_err(gb[idx], fd_b) < 1e-3


def test_alt_distance_trivial_cases():
    one = np.array([[1.0, 2.0, 3.0]])
    assert distances.alt_distance("l2", one, one.copy()) == 0.0
    assert abs(distances.alt_distance("cosine", 3 * one, one)) < 1e-12
    two = np.array([[0.0, 1.0], [2.0, 3.0]])
    assert distances.alt_distance("kl", two, two.copy()) == 0.0


def test_alt_distance_kl_needs_two_rows():
    with pytest.raises(ValueError):
        distances.alt_distance("kl", np.ones((1, 3)), np.ones((4, 3)))


def test_alt_distance_unknown_metric():
    with pytest.raises(ValueError):
        distances.alt_distance("manhattan", np.ones((2, 2)), np.ones((2, 2)))


@pytest.mark.parametrize("metric", ["l2", "cosine", "kl"])
def test_alt_distance_gradients(metric):
    rng = np.random.default_rng(8)
    a = rng.normal(size=(5, 3)) + 0.5
    b = rng.normal(size=(6, 3)) - 0.5
    _, ga, gb = distances.alt_distance(metric, a, b, grads=True)

    def value_a(flat):
        return distances.alt_distance(metric, flat.reshape(a.shape), b)

    def value_b(flat):
        return distances.alt_distance(metric, a, flat.reshape(b.shape))

    for idx in rng.choice(a.size, size=8, replace=False):
        fd = central_diff(value_a, a.ravel(), idx, h=1e-6)
        assert rel_err(ga.flat[idx], fd) < 1e-3
    for idx in rng.choice(b.size, size=8, replace=False):
        fd = central_diff(value_b, b.ravel(), idx, h=1e-6)
        assert rel_err(gb.flat[idx], fd) < 1e-3
