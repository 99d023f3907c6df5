import numpy as np
import pytest

from hchc.nn import build_model

FD_STEP = 1e-6


def central_differences(loss_fn, arrays, step=FD_STEP):
    """Numerical gradient of ``loss_fn()`` w.r.t. every entry of ``arrays``.

    Arrays are perturbed in place and restored.
    """
    grads = []
    for arr in arrays:
        g = np.zeros_like(arr)
        flat, gflat = arr.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = loss_fn()
            flat[i] = orig - step
            down = loss_fn()
            flat[i] = orig
            gflat[i] = (up - down) / (2 * step)
        grads.append(g)
    return grads


def max_relative_error(analytic, numeric):
    """Worst normwise relative error over parameter arrays.

    Per array: ``max|a - n| / max(max|a|, max|n|)``.  Entrywise ratios are
    not used: with a 1e-6 step, central differences carry an absolute
    roundoff of about ``eps * |loss| / step`` which swamps tiny entries.
    """
    worst = 0.0
    for a, n in zip(analytic, numeric):
        scale = max(float(np.max(np.abs(a))), float(np.max(np.abs(n))))
        if scale == 0.0:
            continue
        worst = max(worst, float(np.max(np.abs(a - n))) / scale)
    return worst


def gaussian_blobs(n, dim, k, separation, seed):
    """``k`` unit-variance spherical blobs whose centres are pairwise
    ``separation`` apart (scaled basis vectors)."""
    rng = np.random.default_rng(seed)
    centres = np.zeros((k, dim))
    centres[np.arange(k), np.arange(k)] = separation / np.sqrt(2.0)
    y = np.repeat(np.arange(k), n // k)
    X = centres[y] + rng.normal(size=(len(y), dim))
    return X, y


def random_stochastic(n, c, rng, concentration=1.0):
    return rng.dirichlet(np.full(c, concentration), size=n)


@pytest.fixture
def small_model():
    """The 6-8-5-8-6 autoencoder with a 5->3 head."""
    return build_model(6, 3, hidden_dims=(8,), embedding_dim=5, seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
