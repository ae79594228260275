"""K-means (Lloyd), normalized spectral clustering and silhouette scores."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import DegenerateInputError, NonFiniteError
from .features import FeatureMatrix, enhance, standardize
from .pca import pca_filter

ZERO_ROW_TOL = 1e-8


@dataclass(frozen=True)
class ClusterModel:
    k: int
    labels: np.ndarray
    inertia: float
    silhouette: float
    seed: int
    method: str
    centroids: np.ndarray | None = None
    n_iter: int = 0
    sigma: float | None = None


@dataclass(frozen=True)
class Affinity:
    matrix: np.ndarray
    sigma: float


def _check_input(x, k):
    x = np.asarray(x.values if isinstance(x, FeatureMatrix) else x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if not np.all(np.isfinite(x)):
        raise NonFiniteError("clustering input contains NaN or infinity")
    if not 2 <= k <= x.shape[0]:
        raise ValueError(f"k must satisfy 2 <= k <= N={x.shape[0]}, got {k}")
    return x


def sq_distances(x, centroids) -> np.ndarray:
    """Squared Euclidean distances, shape (N, k)."""
    diff = x[:, None, :] - centroids[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def kmeans_plusplus(x, k, rng) -> np.ndarray:
    n = x.shape[0]
    centers = [int(rng.integers(n))]
    closest = sq_distances(x, x[centers]).min(axis=1)
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            cum = np.cumsum(closest)
            idx = int(np.searchsorted(cum, rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        else:
            idx = int(rng.integers(n))
        centers.append(idx)
        closest = np.minimum(closest, sq_distances(x, x[[idx]])[:, 0])
    return x[centers].copy()


def _repair_empty(x, labels, centroids, k):
    """Give each empty cluster the point farthest from its own centroid."""
    for c in range(k):
        if np.any(labels == c):
            continue
        counts = np.bincount(labels, minlength=k)
        d = np.sum((x - centroids[labels]) ** 2, axis=1)
        d[counts[labels] <= 1] = -1.0
        far = int(np.argmax(d))
        labels[far] = c
        centroids[c] = x[far]
    return labels


def lloyd(x, centroids, max_iter=300):
    """Alternate nearest-centroid assignment and mean update until labels settle."""
    k = centroids.shape[0]
    centroids = centroids.copy()
    labels = None
    for it in range(1, max_iter + 1):
        new = np.argmin(sq_distances(x, centroids), axis=1)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = _repair_empty(x, new, centroids, k)
        for c in range(k):
            centroids[c] = x[labels == c].mean(axis=0)
    inertia = float(np.sum((x - centroids[labels]) ** 2))
    return labels, centroids, inertia, it


def hartigan_refine(x, labels, k, max_passes=100):
    """Single-point transfers that lower the within-cluster squared error.

    Moving ``x`` from cluster ``i`` to ``j`` pays off when
    ``n_j/(n_j+1) |x-m_j|^2 < n_i/(n_i-1) |x-m_i|^2``. Every such state is
    also a fixed point of the nearest-centroid assignment, so Lloyd can
    resume from it.
    """
    labels = labels.copy()
    counts = np.bincount(labels, minlength=k).astype(np.float64)
    sums = np.zeros((k, x.shape[1]))
    np.add.at(sums, labels, x)
    moved_any = False
    for _ in range(max_passes):
        moved = False
        for p in range(x.shape[0]):
            i = labels[p]
            if counts[i] <= 1:
                continue
            means = sums / counts[:, None]
            d2 = np.sum((means - x[p]) ** 2, axis=1)
            remove_gain = counts[i] / (counts[i] - 1.0) * d2[i]
            add_cost = counts / (counts + 1.0) * d2
            add_cost[i] = np.inf
            j = int(np.argmin(add_cost))
            if add_cost[j] < remove_gain * (1.0 - 1e-12):
                labels[p] = j
                counts[i] -= 1
                counts[j] += 1
                sums[i] -= x[p]
                sums[j] += x[p]
                moved = moved_any = True
        if not moved:
            break
    return labels, moved_any


def kmeans(matrix, k: int, seed: int = 0, n_init: int = 10, max_iter: int = 300,
           score=True, refine=True) -> ClusterModel:
    """Best of ``n_init`` k-means++ seeded Lloyd runs, ranked by inertia.

    Restart ``r`` draws from a generator seeded with ``(seed, r)``, so the
    result is a pure function of the inputs. With ``refine`` each converged
    run is polished by Hartigan transfers and handed back to Lloyd, which
    escapes many poor local minima at small N.
    """
    x = _check_input(matrix, k)
    best = None
    for restart in range(n_init):
        rng = np.random.default_rng([seed, restart])
        labels, centroids, inertia, it = lloyd(x, kmeans_plusplus(x, k, rng), max_iter)
        if refine:
            refined, moved = hartigan_refine(x, labels, k)
            if moved:
                means = np.vstack([x[refined == c].mean(axis=0) for c in range(k)])
                labels, centroids, inertia, more = lloyd(x, means, max_iter)
                it += more
        if best is None or inertia < best[2]:
            best = (labels, centroids, inertia, it)
    labels, centroids, inertia, it = best
    sil = silhouette(x, labels) if score and x.shape[0] >= 3 else float("nan")
    return ClusterModel(k, labels, inertia, sil, seed, "kmeans", centroids, it)


def pairwise_distances(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    diff = x[:, None, :] - x[None, :, :]
    return np.sqrt(np.einsum("ijd,ijd->ij", diff, diff))


def gaussian_affinity(x, sigma=None) -> Affinity:
    """``exp(-d^2 / (2 sigma^2))``; sigma defaults to the median positive distance."""
    d = pairwise_distances(x)
    if sigma is None:
        positive = d[np.triu_indices_from(d, k=1)]
        positive = positive[positive > 0]
        if positive.size == 0:
            raise DegenerateInputError("all points are identical; affinity scale undefined")
        sigma = float(np.median(positive))
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    w = np.exp(-(d ** 2) / (2.0 * sigma * sigma))
    w = 0.5 * (w + w.T)
    np.fill_diagonal(w, 1.0)
    return Affinity(w, float(sigma))


def normalized_laplacian(w) -> np.ndarray:
    deg = w.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(deg)
    lap = np.eye(w.shape[0]) - inv_sqrt[:, None] * w * inv_sqrt[None, :]
    return 0.5 * (lap + lap.T)


def spectral_embedding(w, k) -> np.ndarray:
    """Row-normalized eigenvectors of the k smallest Laplacian eigenvalues."""
    vals, vecs = np.linalg.eigh(normalized_laplacian(w))
    emb = vecs[:, :k]
    # fix the arbitrary eigenvector signs: largest-magnitude entry positive
    idx = np.argmax(np.abs(emb), axis=0)
    signs = np.sign(emb[idx, np.arange(k)])
    signs[signs == 0] = 1.0
    emb = emb * signs
    norms = np.linalg.norm(emb, axis=1, keepdims=True)
    # rows at roundoff level (a component missing from the k vectors) stay zero
    nonzero = norms > ZERO_ROW_TOL * norms.max()
    return np.divide(emb, norms, out=np.zeros_like(emb), where=nonzero)


def spectral_cluster(matrix, k: int, seed: int = 0, sigma=None, n_init: int = 10) -> ClusterModel:
    x = _check_input(matrix, k)
    aff = gaussian_affinity(x, sigma)
    emb = spectral_embedding(aff.matrix, k)
    inner = kmeans(emb, k, seed=seed, n_init=n_init, score=False)
    labels = inner.labels
    centroids = np.vstack([x[labels == c].mean(axis=0) for c in range(k)])
    inertia = float(np.sum((x - centroids[labels]) ** 2))
    sil = silhouette(x, labels) if x.shape[0] >= 3 else float("nan")
    return ClusterModel(k, labels, inertia, sil, seed, "spectral", centroids, inner.n_iter, aff.sigma)


def silhouette(matrix, labels) -> float:
    """Mean silhouette width; points in singleton clusters contribute 0."""
    x = np.asarray(matrix.values if isinstance(matrix, FeatureMatrix) else matrix, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    labels = np.asarray(labels)
    uniq, inv = np.unique(labels, return_inverse=True)
    if uniq.size < 2:
        raise ValueError("silhouette needs at least two clusters")
    n = x.shape[0]
    d = pairwise_distances(x)
    onehot = np.zeros((n, uniq.size))
    onehot[np.arange(n), inv] = 1.0
    sums = d @ onehot
    counts = onehot.sum(axis=0)
    own = counts[inv]
    a = np.divide(sums[np.arange(n), inv], own - 1, out=np.zeros(n), where=own > 1)
    mean_other = sums / counts
    mean_other[np.arange(n), inv] = np.inf
    b = mean_other.min(axis=1)
    denom = np.maximum(a, b)
    s = np.divide(b - a, denom, out=np.zeros(n), where=denom > 0)
    s[own <= 1] = 0.0
    return float(s.mean())


# Input x method x k comparison -------------------------------------------------

INPUT_X = "X"
INPUT_PCA = "PCA(X,3)"
INPUT_ENH = "X_enh"
INPUTS = (INPUT_X, INPUT_PCA, INPUT_ENH)


@dataclass(frozen=True)
class ClusterConfig:
    input: str
    method: str
    k: int

    @property
    def column(self) -> str:
        return "Spectral Cls." if self.method == "spectral" else self.input

    @property
    def tag(self) -> str:
        name = {INPUT_X: "X", INPUT_PCA: "PCA3", INPUT_ENH: "Xenh"}[self.input]
        return f"{self.method}_{name}_k{self.k}"


def default_configs(ks=(2, 3), methods=("kmeans", "spectral")) -> list[ClusterConfig]:
    configs = []
    for k in ks:
        if "kmeans" in methods:
            configs += [ClusterConfig(inp, "kmeans", k) for inp in INPUTS]
        if "spectral" in methods:
            configs.append(ClusterConfig(INPUT_X, "spectral", k))
    return configs


def prepare_inputs(raw: FeatureMatrix, pca_components=3) -> dict[str, FeatureMatrix]:
    """Standardized X, its PCA reduction and the standardized enhanced matrix."""
    x = standardize(raw)[0]
    return {
        INPUT_X: x,
        INPUT_PCA: pca_filter(x, pca_components),
        INPUT_ENH: standardize(enhance(raw))[0],
    }


def run_config(inputs: dict, config: ClusterConfig, seed=0, sigma=None) -> ClusterModel:
    x = inputs[config.input]
    if config.method == "kmeans":
        return kmeans(x, config.k, seed=seed)
    if config.method == "spectral":
        return spectral_cluster(x, config.k, seed=seed, sigma=sigma)
    raise ValueError(f"unknown clustering method {config.method!r}")


@dataclass
class ScoreTable:
    rows: list[dict] = field(default_factory=list)

    def add(self, config: ClusterConfig, model: ClusterModel):
        self.rows.append({"column": config.column, "input": config.input,
                          "method": config.method, "k": config.k,
                          "silhouette": model.silhouette})

    def to_json(self) -> str:
        return json.dumps({"silhouette_table": self.rows}, indent=2)

    def format(self) -> str:
        columns = list(dict.fromkeys(r["column"] for r in self.rows))
        ks = sorted({r["k"] for r in self.rows})
        lookup = {(r["column"], r["k"]): r["silhouette"] for r in self.rows}
        lines = ["\t".join(["Clusters"] + columns)]
        for k in ks:
            cells = [f"{lookup[(c, k)]:.4f}" if (c, k) in lookup else "-" for c in columns]
            lines.append("\t".join([str(k)] + cells))
        return "\n".join(lines)


def compare_clusterings(raw: FeatureMatrix, configs: Iterable[ClusterConfig] | None = None,
                        seed=0, sigma=None, pca_components=3):
    """Run each configuration and collect silhouettes in a method-by-input grid.

    Returns ``(table, models)`` where ``models`` maps configs to ClusterModels.
    """
    configs = list(default_configs() if configs is None else configs)
    inputs = prepare_inputs(raw, pca_components)
    table = ScoreTable()
    models = {}
    for cfg in configs:
        model = run_config(inputs, cfg, seed, sigma)
        table.add(cfg, model)
        models[cfg] = model
    return table, models


def labels_to_csv(ids, positions, labels) -> str:
    lines = ["id,x_cm,y_cm,label"]
    for rid, (x, y), lab in zip(ids, positions, labels):
        lines.append(f"{rid},{float(x)!r},{float(y)!r},{int(lab)}")
    return "\n".join(lines) + "\n"
