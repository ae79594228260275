"""Acceptance criteria, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -v`` or ``python tests/test_acceptance.py``.
"""

import hashlib
import itertools
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from oracles import blobs, canonical, optimal_partition, rings  # noqa: E402

from impactsound.clustering import (  # noqa: E402
    INPUT_ENH,
    INPUT_PCA,
    INPUT_X,
    kmeans,
    prepare_inputs,
    silhouette,
    spectral_cluster,
)
from impactsound.features import build_feature_matrix, spectral_moments, standardize  # noqa: E402
from impactsound.pca import covariance, fit_pca, jacobi_eigh, pca_filter  # noqa: E402
from impactsound.pipeline import PipelineConfig, run_pipeline  # noqa: E402
from impactsound.signal_io import grid_dims, load_manifest_file  # noqa: E402
from impactsound.spectral import Spectrum, dft_naive, fft, next_pow2, one_sided_spectrum  # noqa: E402
from impactsound.synth import (  # noqa: E402
    SOLID,
    SlabSpec,
    adjusted_rand_index,
    best_permutation_accuracy,
    generate,
    write_synth,
)

RING_SIGMA = 0.5


def _moments_close(got, want, rtol):
    m1, m2, m3, m4 = want
    scales = [abs(m1) + np.sqrt(m2), m2, m2 ** 1.5 / m2 ** 3, m2 ** 2 / m2 ** 4]
    return all(abs(g - w) <= rtol * s for g, w, s in zip(got, want, scales))


def criterion_1():
    rng = np.random.default_rng(1)
    sizes = np.concatenate([[2, 4096], rng.integers(2, 4097, 48)])
    worst, elapsed = 0.0, 0.0
    for n in sizes:
        x = rng.uniform(-1, 1, int(n))
        t0 = time.perf_counter()
        got = fft(x)
        elapsed += time.perf_counter() - t0
        padded = np.zeros(next_pow2(x.size))
        padded[:x.size] = x
        worst = max(worst, float(np.max(np.abs(got - dft_naive(padded)))))
    ok = worst < 1e-9 and elapsed < 5.0
    return ok, f"50 signals, max |fft - dft| = {worst:.2e}, fft time {elapsed:.3f}s"


def criterion_2():
    two_line = Spectrum(np.array([100.0, 300.0]), np.array([1.0, 1.0]), 1000.0, 2)
    m = spectral_moments(two_line)
    expected = (200.0, 10000.0, 0.0, 1e-8)
    exact = all(abs(g - w) <= 1e-12 * abs(w) if w else g == 0 for g, w in zip(m, expected))

    rng = np.random.default_rng(2)
    shift_ok = scale_ok = True
    for _ in range(100):
        n = int(rng.integers(3, 200))
        freqs = np.sort(rng.uniform(0, 22050, n))
        amps = rng.uniform(0.01, 10.0, n)
        base = spectral_moments(Spectrum(freqs, amps, 44100.0, 2 * n))
        delta = rng.uniform(-500, 5000)
        shifted = spectral_moments(Spectrum(freqs + delta, amps, 44100.0, 2 * n))
        shift_ok &= _moments_close(shifted, (base[0] + delta,) + tuple(base[1:]), 1e-9)
        alpha = rng.uniform(0.01, 100.0)
        scaled = spectral_moments(Spectrum(freqs, alpha * amps, 44100.0, 2 * n))
        scale_ok &= _moments_close(scaled, base, 1e-9)
    ok = exact and shift_ok and scale_ok
    return ok, (f"two-line moments {tuple(float(v) for v in m)}; shift invariance {shift_ok}, "
                f"amplitude scaling {scale_ok} over 100 spectra")


def criterion_3():
    misses = []
    for i in range(20):
        rng = np.random.default_rng([3, i])
        n, d, k = int(rng.integers(4, 11)), int(rng.integers(1, 4)), int(rng.integers(2, 4))
        x = rng.normal(size=(n, d))
        cost, partition = optimal_partition(x, k)
        model = kmeans(x, k, seed=0, n_init=10)
        if canonical(model.labels) != partition or abs(model.inertia - cost) > 1e-12 * max(cost, 1.0):
            misses.append((i, n, d, k, cost, model.inertia))
    return not misses, f"{20 - len(misses)}/20 instances reach the exhaustive optimum {misses or ''}"


def criterion_4():
    x = np.array([[0.0], [1.0], [10.0], [11.0]])
    score = silhouette(x, np.array([0, 0, 1, 1]))
    rng = np.random.default_rng(4)
    pts = rng.normal(size=(40, 3))
    worst = 0.0
    for _ in range(50):
        labels = rng.integers(0, 3, 40)
        labels[:3] = [0, 1, 2]
        base = silhouette(pts, labels)
        perm = rng.permutation(40)
        relabel = rng.permutation(3)
        worst = max(worst, abs(silhouette(pts[perm], relabel[labels[perm]]) - base))
    ok = abs(score - 0.899749) <= 1e-6 and worst < 1e-12
    return ok, f"4-point silhouette {score:.7f}; max change under 50 permutations {worst:.1e}"


def criterion_5(features):
    rng = np.random.default_rng(5)
    residual, ratio_err = 0.0, 0.0
    for _ in range(20):
        x = rng.normal(size=(50, 6)) @ rng.normal(size=(6, 6))
        c = covariance(x)
        w, v = jacobi_eigh(c)
        residual = max(residual, float(np.max(np.abs(c @ v - v * w))))
        ratio_err = max(ratio_err, abs(fit_pca(x, 6).explained_variance_ratio.sum() - 1.0))
    t = rng.normal(size=60)
    line = np.column_stack([t, 2.5 * t - 1.0])
    rank1 = fit_pca(line, 2).explained_variance_ratio[0]

    x_std = standardize(features)[0]
    rotated = pca_filter(x_std, 6)
    same = all(np.array_equal(kmeans(x_std, k, seed=0).labels, kmeans(rotated, k, seed=0).labels)
               for k in (2, 3))
    ok = residual < 1e-9 and ratio_err < 1e-9 and abs(rank1 - 1.0) < 1e-12 and same
    return ok, (f"residual {residual:.1e}, ratio sum error {ratio_err:.1e}, rank-1 ratio {rank1:.15f}, "
                f"PCA(X,6) labels equal X labels {same}")


def criterion_6():
    x, truth = blobs()
    blob_ari = adjusted_rand_index(spectral_cluster(x, 2, seed=0).labels, truth)
    blob_km = adjusted_rand_index(kmeans(x, 2, seed=0).labels, truth)
    r, rtruth = rings()
    ring_spec = adjusted_rand_index(spectral_cluster(r, 2, seed=0, sigma=RING_SIGMA).labels, rtruth)
    ring_km = adjusted_rand_index(kmeans(r, 2, seed=0).labels, rtruth)
    ok = blob_ari == 1.0 and blob_km == 1.0 and ring_spec >= 0.95 and ring_km <= 0.5
    return ok, (f"blobs ARI spectral {blob_ari:.3f} kmeans {blob_km:.3f}; rings (sigma={RING_SIGMA}) "
                f"ARI spectral {ring_spec:.3f} kmeans {ring_km:.3f}")


def criterion_7(features, truth, slab_dir):
    inputs = prepare_inputs(features, 3)
    defect = (truth != SOLID).astype(int)
    acc = {name: best_permutation_accuracy(kmeans(inputs[name], 2, seed=0).labels, defect)
           for name in (INPUT_X, INPUT_ENH, INPUT_PCA)}
    ari3 = adjusted_rand_index(kmeans(inputs[INPUT_X], 3, seed=0).labels, truth)
    with tempfile.TemporaryDirectory() as tmp:
        t0 = time.perf_counter()
        run_pipeline(PipelineConfig(manifest=str(slab_dir / "manifest.csv"), out_dir=tmp + "/out", workers=1))
        elapsed = time.perf_counter() - t0
    ok = min(acc.values()) >= 0.90 and ari3 >= 0.7 and elapsed < 60.0
    accs = ", ".join(f"{k} {v:.3f}" for k, v in acc.items())
    return ok, f"2-cluster accuracy {accs}; 3-cluster ARI {ari3:.3f}; pipeline {elapsed:.1f}s single-threaded"


def criterion_8(slab_dir):
    dataset = load_manifest_file(slab_dir / "manifest.csv")
    nx, ny = grid_dims(dataset.grid())
    ok = (nx, ny) == (82, 11) and len(dataset) == 902 == nx * ny and dataset.spacing_cm == 2.0
    return ok, f"grid {nx}x{ny}, {len(dataset)} recordings, spacing {dataset.spacing_cm} cm"


def _tree(root):
    return {str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(Path(root).rglob("*")) if p.is_file() and p.name != "run_manifest.json"}


def criterion_9(slab_dir):
    with tempfile.TemporaryDirectory() as tmp:
        trees = []
        for name in ("a", "b"):
            run_pipeline(PipelineConfig(manifest=str(slab_dir / "manifest.csv"), out_dir=f"{tmp}/{name}"))
            trees.append(_tree(f"{tmp}/{name}"))
    ok = trees[0] == trees[1] and len(trees[0]) > 0
    return ok, f"{len(trees[0])} output files compared, identical {trees[0] == trees[1]}"


# pytest wiring -----------------------------------------------------------------

@pytest.fixture(scope="module")
def slab():
    dataset, truth = generate(SlabSpec())
    features = build_feature_matrix(dataset, [one_sided_spectrum(r) for r in dataset.recordings])
    with tempfile.TemporaryDirectory() as tmp:
        write_synth(SlabSpec(), tmp)
        yield features, truth, Path(tmp)


def report(capsys, number, result):
    ok, detail = result
    with capsys.disabled():
        print(f"\n{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
    assert ok, detail


def test_criterion_1_fft_matches_dft(capsys):
    report(capsys, 1, criterion_1())


def test_criterion_2_feature_formulas(capsys):
    report(capsys, 2, criterion_2())


def test_criterion_3_kmeans_small_scale_optimum(capsys):
    report(capsys, 3, criterion_3())


def test_criterion_4_silhouette_oracle(capsys):
    report(capsys, 4, criterion_4())


def test_criterion_5_pca_properties(capsys, slab):
    report(capsys, 5, criterion_5(slab[0]))


def test_criterion_6_spectral_sanity(capsys):
    report(capsys, 6, criterion_6())


def test_criterion_7_defect_recovery(capsys, slab):
    report(capsys, 7, criterion_7(*slab))


def test_criterion_8_geometry(capsys, slab):
    report(capsys, 8, criterion_8(slab[2]))


def test_criterion_9_determinism(capsys, slab):
    report(capsys, 9, criterion_9(slab[2]))


if __name__ == "__main__":
    dataset, truth = generate(SlabSpec())
    features = build_feature_matrix(dataset, [one_sided_spectrum(r) for r in dataset.recordings])
    with tempfile.TemporaryDirectory() as tmp:
        slab_dir = Path(tmp)
        write_synth(SlabSpec(), slab_dir)
        results = [criterion_1(), criterion_2(), criterion_3(), criterion_4(), criterion_5(features),
                   criterion_6(), criterion_7(features, truth, slab_dir), criterion_8(slab_dir),
                   criterion_9(slab_dir)]
    for number, (ok, detail) in enumerate(results, start=1):
        print(f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
    sys.exit(0 if all(ok for ok, _ in results) else 1)
