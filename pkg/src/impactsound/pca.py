"""Principal component analysis by cyclic Jacobi eigendecomposition."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError
from .features import FeatureMatrix

JACOBI_TOL = 1e-12
RANK_TOL = 1e-12


def jacobi_eigh(a, tol=JACOBI_TOL, max_sweeps=100):
    """Eigenpairs of a symmetric matrix, eigenvalues in descending order.

    Sweeps over all off-diagonal pairs until the off-diagonal Frobenius norm
    drops below ``tol`` times the norm of the whole matrix. Eigenvectors are
    returned as columns.
    """
    a = np.array(a, dtype=np.float64)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("matrix must be square")
    if not np.allclose(a, a.T, rtol=0, atol=1e-12 * max(1.0, np.abs(a).max(initial=0.0))):
        raise ValueError("matrix must be symmetric")
    a = 0.5 * (a + a.T)
    v = np.eye(n)
    scale = np.linalg.norm(a)
    threshold = tol * scale if scale > 0 else 0.0

    for _ in range(max_sweeps):
        off = np.linalg.norm(a - np.diag(np.diag(a)))
        if off <= threshold:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.copysign(1.0, theta) / (abs(theta) + np.hypot(theta, 1.0))
                c = 1.0 / np.hypot(t, 1.0)
                s = t * c
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    else:
        raise DegenerateInputError("Jacobi iteration did not converge")

    w = np.diag(a).copy()
    order = np.argsort(-w, kind="stable")
    return w[order], v[:, order]


def orient(vectors):
    """Flip each row so its largest-magnitude entry is positive."""
    vectors = np.array(vectors, dtype=np.float64)
    idx = np.argmax(np.abs(vectors), axis=1)
    signs = np.sign(vectors[np.arange(len(vectors)), idx])
    signs[signs == 0] = 1.0
    return vectors * signs[:, None]


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray
    eigenvalues: np.ndarray
    explained_variance_ratio: np.ndarray
    all_eigenvalues: np.ndarray

    @property
    def n_components(self) -> int:
        return self.components.shape[0]

    def cumulative_ratio(self) -> np.ndarray:
        return np.cumsum(self.explained_variance_ratio)

    def to_json(self) -> str:
        return json.dumps({
            "mean": self.mean.tolist(),
            "components": self.components.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "explained_variance_ratio": self.explained_variance_ratio.tolist(),
            "all_eigenvalues": self.all_eigenvalues.tolist(),
        }, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "PcaModel":
        d = json.loads(text)
        return cls(*(np.array(d[k], dtype=np.float64) for k in (
            "mean", "components", "eigenvalues", "explained_variance_ratio", "all_eigenvalues")))


def _as_array(matrix):
    if isinstance(matrix, FeatureMatrix):
        return matrix.values
    return np.asarray(matrix, dtype=np.float64)


def covariance(x) -> np.ndarray:
    x = _as_array(x)
    centered = x - x.mean(axis=0)
    return centered.T @ centered / (x.shape[0] - 1)


def fit_pca(matrix, n_components: int) -> PcaModel:
    """Fit on an (already standardized) feature matrix.

    Rank-deficient data keeps at most ``rank`` components; explained ratios
    are always fractions of the total variance.
    """
    x = _as_array(matrix)
    n, d = x.shape
    if not 1 <= n_components <= d:
        raise ValueError(f"n_components must be in [1, {d}], got {n_components}")
    if n < 2:
        raise ValueError("PCA needs at least two rows")
    w, v = jacobi_eigh(covariance(x))
    w = np.clip(w, 0.0, None)
    total = w.sum()
    if total <= 0:
        raise DegenerateInputError("all rows are identical; covariance is zero")
    rank = int(np.sum(w > RANK_TOL * w[0]))
    keep = min(n_components, rank)
    components = orient(v[:, :keep].T)
    return PcaModel(
        mean=x.mean(axis=0),
        components=components,
        eigenvalues=w[:keep],
        explained_variance_ratio=w[:keep] / total,
        all_eigenvalues=w,
    )


def transform(model: PcaModel, matrix) -> np.ndarray:
    x = _as_array(matrix)
    if x.ndim != 2 or x.shape[1] != model.mean.size:
        raise ValueError(f"expected {model.mean.size} columns, got shape {x.shape}")
    return (x - model.mean) @ model.components.T


def inverse_transform(model: PcaModel, scores) -> np.ndarray:
    return np.asarray(scores) @ model.components + model.mean


def combine_components(scores) -> np.ndarray:
    """Equal-weight sum of the first three component scores."""
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 2 or s.shape[1] != 3:
        raise ValueError(f"need exactly 3 score columns, got shape {s.shape}")
    return s.sum(axis=1)


def pca_filter(matrix, n_components: int):
    """Replace the features by their first ``n_components`` PCA scores."""
    model = fit_pca(matrix, n_components)
    scores = transform(model, matrix)
    if isinstance(matrix, FeatureMatrix):
        names = tuple(f"C{i + 1}" for i in range(scores.shape[1]))
        return matrix.with_values(scores, names)
    return scores
