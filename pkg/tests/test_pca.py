import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from mpmath import mp, matrix, mpf, polyroots

from cwtamc.errors import DegenerateInputError, InvalidInputError
from cwtamc.pca import PcaModel, explained_variance, fit_pca, inverse_transform, jacobi_eigh, transform


def _charpoly_roots(a):
    """Eigenvalues via the Faddeev-LeVerrier characteristic polynomial at 60 digits."""
    mp.dps = 60
    n = a.shape[0]
    A = matrix(a.tolist())
    M = matrix(n, n)
    coeffs = [mpf(1)]
    for k in range(1, n + 1):
        M = A * M + coeffs[-1] * mp.eye(n)
        c = -sum((A * M)[i, i] for i in range(n)) / k
        coeffs.append(c)
    roots = polyroots(coeffs, maxsteps=500, extraprec=400)
    return sorted((float(mp.re(r)) for r in roots), reverse=True)


def _mp_eigsy(a):
    mp.dps = 40
    vals, vecs = mp.eigsy(matrix(a.tolist()))
    order = sorted(range(len(vals)), key=lambda i: -float(vals[i]))
    return [float(vals[i]) for i in order], np.array([[float(vecs[r, i]) for r in range(a.shape[0])] for i in order])


@pytest.mark.parametrize("seed", range(8))
def test_jacobi_matches_characteristic_polynomial(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(2, 7))
    b = rng.standard_normal((d, d))
    a = b @ b.T
    vals, vecs = jacobi_eigh(a)
    assert np.allclose(sorted(vals, reverse=True), _charpoly_roots(a), atol=1e-8, rtol=0)
    assert np.allclose(a @ vecs, vecs * vals, atol=1e-10)
    assert np.allclose(vecs.T @ vecs, np.eye(d), atol=1e-12)


@pytest.mark.parametrize("seed", range(6))
def test_pca_eigenpairs_match_independent_solver(seed):
    rng = np.random.default_rng(100 + seed)
    d = int(rng.integers(2, 7))
    x = rng.standard_normal((40, d)) @ rng.standard_normal((d, d))
    model = fit_pca(x, d)
    cov = np.cov(x.T)
    ref_vals, ref_vecs = _mp_eigsy(cov)
    assert np.allclose(model.eigenvalues, ref_vals, atol=1e-8)
    for comp, ref in zip(model.components, ref_vecs):
        assert min(np.abs(comp - ref).max(), np.abs(comp + ref).max()) < 1e-8


def test_axis_aligned_data():
    rng = np.random.default_rng(0)
    x = np.zeros((1000, 20))
    x[:, 0] = rng.standard_normal(1000)
    x[:, 1] = rng.standard_normal(1000)
    x[:, 0] = (x[:, 0] - x[:, 0].mean()) / x[:, 0].std(ddof=1) * 2
    x[:, 1] -= x[:, 1].mean()
    x[:, 1] -= x[:, 0] * (x[:, 0] @ x[:, 1]) / (x[:, 0] @ x[:, 0])
    x[:, 1] /= x[:, 1].std(ddof=1)
    model = fit_pca(x, 2)
    assert np.allclose(model.eigenvalues, [4, 1], atol=1e-10)
    assert np.allclose(np.abs(model.components[0]), np.eye(20)[0], atol=1e-10)
    assert np.allclose(np.abs(model.components[1]), np.eye(20)[1], atol=1e-10)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=20, deadline=None)
def test_transformed_covariance_is_diagonal(seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((50, 20)) @ rng.standard_normal((20, 20))
    model = fit_pca(x, 20)
    y = transform(model, x)
    cy = np.cov(y.T)
    off = cy - np.diag(np.diag(cy))
    assert np.abs(off).max() < 1e-8 * max(1.0, np.abs(cy).max())
    assert np.allclose(np.diag(cy), model.eigenvalues, rtol=1e-8, atol=1e-8)
    assert np.allclose(model.components @ model.components.T, np.eye(20), atol=1e-10)
    assert np.all(np.diff(model.eigenvalues) <= 0) and np.all(model.eigenvalues >= 0)
    assert np.allclose(np.linalg.norm(y, axis=1), np.linalg.norm(x - model.mean, axis=1), rtol=1e-10)


@given(st.integers(0, 2**32 - 1), st.integers(1, 19))
@settings(max_examples=20, deadline=None)
def test_reconstruction_error_equals_discarded_variance(seed, n):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((60, 20)) * np.linspace(0.2, 3, 20)
    model = fit_pca(x, n)
    back = inverse_transform(model, transform(model, x))
    err = np.sum((x - back) ** 2)
    expected = model.spectrum[n:].sum() * (x.shape[0] - 1)
    assert abs(err - expected) <= 1e-6 * expected


def test_transform_of_mean_is_zero():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((30, 20))
    model = fit_pca(x, 5)
    assert np.allclose(transform(model, model.mean), 0)


def test_sample_order_and_determinism():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((80, 20)) @ rng.standard_normal((20, 20))
    a = fit_pca(x, 12)
    b = fit_pca(x, 12)
    assert np.array_equal(a.components, b.components) and np.array_equal(a.eigenvalues, b.eigenvalues)
    c = fit_pca(x[rng.permutation(80)], 12)
    assert np.allclose(c.components, a.components, atol=1e-9)
    assert np.allclose(c.eigenvalues, a.eigenvalues, rtol=1e-12)


def test_sign_convention():
    rng = np.random.default_rng(5)
    model = fit_pca(rng.standard_normal((40, 20)), 20)
    for comp in model.components:
        assert comp[np.argmax(np.abs(comp))] > 0


def test_explained_variance():
    model = PcaModel(np.zeros(20), np.eye(20)[:2], np.array([3.0, 1.0]), np.array([3.0, 1.0] + [0.0] * 18))
    cum = explained_variance(model)
    assert np.allclose(cum[:3], [0.75, 1.0, 1.0])
    rng = np.random.default_rng(6)
    cum = explained_variance(fit_pca(rng.standard_normal((30, 20)), 4))
    assert abs(cum[-1] - 1) < 1e-12 and np.all(np.diff(cum) >= 0)
    zero = PcaModel(np.zeros(20), np.eye(20)[:1], np.zeros(1), np.zeros(20))
    with pytest.raises(DegenerateInputError):
        explained_variance(zero)


def test_errors():
    with pytest.raises(InvalidInputError):
        fit_pca(np.ones((1, 20)), 1)
    with pytest.raises(InvalidInputError):
        fit_pca(np.random.default_rng(0).standard_normal((5, 20)), 5)
    with pytest.raises(InvalidInputError):
        fit_pca(np.random.default_rng(0).standard_normal((30, 20)), 21)
    with pytest.raises(DegenerateInputError):
        fit_pca(np.ones((30, 20)), 3)


def test_json_round_trip_and_layout_check():
    rng = np.random.default_rng(7)
    model = fit_pca(rng.standard_normal((30, 20)), 4, layout="abc")
    back = PcaModel.from_json(model.to_json(), layout="abc")
    assert np.array_equal(back.components, model.components)
    assert np.array_equal(back.mean, model.mean)
    with pytest.raises(InvalidInputError):
        PcaModel.from_json(model.to_json(), layout="other")
