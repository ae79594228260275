import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from impactsound.clustering import kmeans
from impactsound.features import FeatureMatrix, standardize
from impactsound.pca import (
    PcaModel,
    combine_components,
    covariance,
    fit_pca,
    inverse_transform,
    jacobi_eigh,
    pca_filter,
    transform,
)
from impactsound.synth import SOLID


def random_features(seed, n=200, d=6):
    rng = np.random.default_rng(seed)
    mix = rng.normal(size=(d, d))
    return standardize(rng.normal(size=(n, d)) @ mix)[0]


@settings(max_examples=40)
@given(st.integers(1, 8), st.integers(0, 10_000))
def test_jacobi_against_lapack(n, seed):
    a = np.random.default_rng(seed).normal(size=(n, n))
    a = a + a.T
    w, v = jacobi_eigh(a)
    ref = np.linalg.eigvalsh(a)[::-1]
    np.testing.assert_allclose(w, ref, atol=1e-10 * max(1, np.abs(ref).max()))
    np.testing.assert_allclose(v.T @ v, np.eye(n), atol=1e-12)
    np.testing.assert_allclose(a @ v, v * w, atol=1e-10 * max(1, np.abs(ref).max()))


def test_jacobi_rejects_asymmetric():
    with pytest.raises(ValueError):
        jacobi_eigh([[1.0, 2.0], [0.0, 1.0]])


@pytest.mark.parametrize("seed", range(5))
def test_eigenpair_residuals_and_ratios(seed):
    x = random_features(seed)
    model = fit_pca(x, 6)
    c = covariance(x)
    for lam, v in zip(model.eigenvalues, model.components):
        assert np.linalg.norm(c @ v - lam * v) < 1e-9
    np.testing.assert_allclose(model.components @ model.components.T, np.eye(6), atol=1e-9)
    assert model.explained_variance_ratio.sum() == pytest.approx(1.0, abs=1e-9)
    assert np.all(np.diff(model.eigenvalues) <= 0)


def test_rank_one_line():
    t = np.linspace(-3, 3, 50)
    x = np.column_stack([t, 2 * t + 1])
    model = fit_pca(x, 2)
    assert model.n_components == 1
    assert model.explained_variance_ratio[0] == pytest.approx(1.0, abs=1e-12)
    # every direction orthogonal to the line carries no score
    _, vecs = jacobi_eigh(covariance(x))
    rest = (x - x.mean(axis=0)) @ vecs[:, 1:]
    assert np.abs(rest).max() < 1e-9


def test_rank_one_in_six_dims():
    t = np.random.default_rng(0).normal(size=100)
    direction = np.array([1.0, -2.0, 0.5, 3.0, 0.0, 1.0])
    x = np.outer(t, direction)
    model = fit_pca(x, 6)
    assert model.n_components == 1
    assert model.explained_variance_ratio.sum() == pytest.approx(1.0, abs=1e-12)
    _, vecs = jacobi_eigh(covariance(x))
    assert np.abs((x - x.mean(axis=0)) @ vecs[:, 1:]).max() < 1e-9
    np.testing.assert_allclose(inverse_transform(model, transform(model, x)), x, atol=1e-9)


def test_isotropic_gaussian_ratios():
    x = np.random.default_rng(11).normal(size=(10_000, 6))
    model = fit_pca(x, 6)
    np.testing.assert_allclose(model.explained_variance_ratio, 1 / 6, atol=0.02)
    ref = np.sort(np.linalg.eigvalsh(np.cov(x, rowvar=False)))[::-1]
    np.testing.assert_allclose(model.eigenvalues, ref, rtol=1e-10)


def test_round_trip_and_mean_row():
    x = random_features(3)
    model = fit_pca(x, 6)
    np.testing.assert_allclose(inverse_transform(model, transform(model, x)), x, atol=1e-9)
    assert np.abs(transform(model, model.mean[None, :])).max() == 0


def test_transform_dimension_mismatch():
    model = fit_pca(random_features(1), 3)
    with pytest.raises(ValueError):
        transform(model, np.zeros((4, 5)))


def test_sign_convention_and_determinism():
    x = random_features(4)
    a, b = fit_pca(x, 3), fit_pca(x, 3)
    assert a.components.tobytes() == b.components.tobytes()
    for v in a.components:
        assert v[np.argmax(np.abs(v))] > 0
    flipped = fit_pca(-x, 3)
    np.testing.assert_allclose(flipped.components, a.components, atol=1e-9)


def test_reconstruction_error_monotone():
    x = random_features(5)
    errors = []
    for n in range(1, 7):
        model = fit_pca(x, n)
        errors.append(np.sum((inverse_transform(model, transform(model, x)) - x) ** 2))
    assert all(b <= a + 1e-9 for a, b in zip(errors, errors[1:]))
    assert errors[-1] < 1e-12


def test_n_components_bounds():
    with pytest.raises(ValueError):
        fit_pca(random_features(0), 0)
    with pytest.raises(ValueError):
        fit_pca(random_features(0), 7)


def test_combine_components():
    np.testing.assert_array_equal(combine_components([[1, 2, 3], [0, 0, 0]]), [6, 0])
    with pytest.raises(ValueError):
        combine_components([[1, 2]])


def test_pca_filter_shapes_and_metadata():
    fm = FeatureMatrix(random_features(6), tuple(map(str, range(200))), np.zeros((200, 2)))
    out = pca_filter(fm, 3)
    assert out.values.shape == (200, 3)
    assert out.columns == ("C1", "C2", "C3")
    assert out.ids == fm.ids


def test_full_rotation_preserves_clustering():
    x = random_features(7)
    rotated = pca_filter(x, 6)
    a = kmeans(x, 3, seed=5)
    b = kmeans(rotated, 3, seed=5)
    np.testing.assert_array_equal(a.labels, b.labels)
    assert a.inertia == pytest.approx(b.inertia, rel=1e-9)


def _pairwise(x):
    return np.sqrt(((x[:, None, :] - x[None, :, :]) ** 2).sum(-1))


def test_rank_two_distances_preserved():
    rng = np.random.default_rng(8)
    x = rng.normal(size=(40, 2)) @ rng.normal(size=(2, 6))
    reduced = pca_filter(x, 2)
    np.testing.assert_allclose(_pairwise(reduced), _pairwise(x), atol=1e-9)


def test_json_round_trip():
    model = fit_pca(random_features(9), 3)
    back = PcaModel.from_json(model.to_json())
    for field in ("mean", "components", "eigenvalues", "explained_variance_ratio"):
        np.testing.assert_array_equal(getattr(back, field), getattr(model, field))


def test_combined_map_separates_defects(slab_features):
    fm, truth = slab_features
    x = standardize(fm)[0]
    model = fit_pca(x, 3)
    combined = combine_components(transform(model, x))
    defect, solid = combined[truth != SOLID], combined[truth == SOLID]
    pooled = np.sqrt((defect.var(ddof=1) * (defect.size - 1) + solid.var(ddof=1) * (solid.size - 1))
                     / (defect.size + solid.size - 2))
    assert abs(defect.mean() - solid.mean()) > 2 * pooled
