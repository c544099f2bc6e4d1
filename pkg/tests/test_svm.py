import numpy as np
import pytest

from fallsense import svm as sv
from fallsense.errors import NonConvergence


def separable_blobs(n=40, seed=0):
    rng = np.random.default_rng(seed)
    a = rng.normal(loc=(-2.0, -2.0), scale=0.4, size=(n // 2, 2))
    b = rng.normal(loc=(2.0, 2.0), scale=0.4, size=(n // 2, 2))
    x = np.vstack([a, b])
    y = np.array([-1.0] * (n // 2) + [1.0] * (n // 2))
    return x, y


def xor_set(n=60, seed=1):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, size=(n, 2))
    x += 0.3 * np.sign(x)  # keep points away from the axes
    y = np.where(np.sign(x[:, 0]) == np.sign(x[:, 1]), 1.0, -1.0)
    return x, y


def test_linear_separable_perfect():
    x, y = separable_blobs()
    model = sv.smo_train(x, y, kernel=sv.KERNEL_LINEAR, seed=2)
    assert model.converged
    assert np.all(model.predict(x) == y)


def test_xor_linear_fails_rbf_succeeds():
    x, y = xor_set()
    lin = sv.smo_train(x, y, kernel=sv.KERNEL_LINEAR, seed=3, max_passes=60)
    assert np.mean(lin.predict(x) == y) <= 0.75
    rbf = sv.smo_train(x, y, kernel=sv.KERNEL_RBF, gamma=1.0, seed=3)
    assert np.mean(rbf.predict(x) == y) == 1.0


def test_kkt_conditions_hold():
    x, y = separable_blobs(seed=4)
    model = sv.smo_train(x, y, kernel=sv.KERNEL_LINEAR, seed=4)
    assert sv.kkt_violation(model, c=1.0, tol=1e-3) <= 1e-3


def test_kkt_conditions_rbf():
    x, y = xor_set(seed=5)
    model = sv.smo_train(x, y, kernel=sv.KERNEL_RBF, gamma=1.0, seed=5)
    assert sv.kkt_violation(model, c=1.0, tol=1e-3) <= 1e-3


def test_nonconvergence_carries_partial_model():
    x, y = xor_set(n=80, seed=6)
    with pytest.raises(NonConvergence) as exc_info:
        sv.smo_train(x, y, kernel=sv.KERNEL_RBF, gamma=1.0, seed=6, max_passes=1)
    model = exc_info.value.model
    assert model is not None and not model.converged
    # partial model is still usable for prediction
    assert set(np.unique(model.predict(x))) <= {-1, 1}


def test_linear_decision_matches_kernel_expansion():
    x, y = separable_blobs(seed=7)
    model = sv.smo_train(x, y, kernel=sv.KERNEL_LINEAR, seed=7)
    expansion = (x @ x.T) @ (model.alphas * model.sv_y) + model.b
    assert np.allclose(model.decision(x), expansion, atol=1e-9)


def test_determinism():
    x, y = xor_set(seed=8)
    m1 = sv.smo_train(x, y, kernel=sv.KERNEL_RBF, gamma=1.0, seed=9)
    m2 = sv.smo_train(x, y, kernel=sv.KERNEL_RBF, gamma=1.0, seed=9)
    assert np.array_equal(m1.alphas, m2.alphas) and m1.b == m2.b
