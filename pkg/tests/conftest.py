import numpy as np
import pytest

from fedspa import data, net


def rel_err(got, want):
    denom = max(abs(got), abs(want))
    if denom < 1e-6:
        return 0.0
    return abs(got - want) / denom


def central_diff(f, x, idx, h=1e-4):
    """Central finite difference of scalar f at one coordinate of x (float64)."""
    xp = x.astype(np.float64).copy()
    xm = xp.copy()
    xp.flat[idx] += h
    xm.flat[idx] -= h
    return (f(xp) - f(xm)) / (2 * h)


@pytest.fixture(scope="session")
def small_spec():
    return net.NetworkSpec(input_dim=6, hidden_dims=[8, 5], num_classes=4)


@pytest.fixture(scope="session")
def desk_data():
    return data.gen_blobs(classes=8, per_class=150, input_dim=32, separation=3.0, noise_sigma=1.0, seed=0)
