"""End-to-end pipeline: recordings -> features -> PCA / clustering -> maps.

Every stage writes into a staging directory that is moved into place only
when the whole run succeeds, so a failed run leaves no partial outputs.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import platform
import shutil
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .clustering import (ClusterConfig, ScoreTable, default_configs, labels_to_csv, prepare_inputs,
                         run_config)
from .errors import ImpactSoundError
from .features import FEATURE_NAMES, FeatureMatrix, build_feature_matrix, enhance, standardize, to_csv
from .mapping import normalize_map, rasterize, write_map_csv, write_pgm
from .pca import combine_components, fit_pca, transform
from .signal_io import PointGrid, grid_dims, load_manifest_file
from .spectral import one_sided_spectrum

log = logging.getLogger(__name__)

OUTPUT_ENV = "IMPACTSOUND_OUT"


@dataclass
class PipelineConfig:
    manifest: str = ""
    out_dir: str = ""
    band: tuple[float, float] | None = None
    include_dc: bool = False
    window: str | None = None
    trim: int | None = None
    enhance: bool = False
    conventional_moments: bool = False
    pca_components: int = 3
    pca_standardize: bool = True
    methods: tuple[str, ...] = ("kmeans", "spectral")
    ks: tuple[int, ...] = (2, 3)
    seed: int = 0
    gamma: float = 1.0
    sigma: float | None = None
    spacing_cm: float | None = None
    workers: int | None = None

    def validate(self):
        if any(k < 2 for k in self.ks):
            raise ValueError(f"cluster counts must be >= 2, got {list(self.ks)}")
        if not 1 <= self.pca_components <= 6:
            raise ValueError(f"pca_components must be in [1, 6], got {self.pca_components}")
        unknown = set(self.methods) - {"kmeans", "spectral"}
        if unknown:
            raise ValueError(f"unknown clustering methods: {sorted(unknown)}")
        if self.band is not None and self.band[0] > self.band[1]:
            raise ValueError(f"band lower edge exceeds upper edge: {self.band}")

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


_BOOL = {"1": True, "true": True, "yes": True, "on": True,
         "0": False, "false": False, "no": False, "off": False}


def parse_config_value(name: str, text: str):
    """Convert one key=value string to the type of the PipelineConfig field."""
    text = text.strip()
    if name not in {f.name for f in fields(PipelineConfig)}:
        raise ValueError(f"unknown config key {name!r}")
    if text.lower() in ("", "none") and name in ("band", "window", "trim", "sigma", "spacing_cm", "workers"):
        return None
    if name in ("include_dc", "enhance", "conventional_moments", "pca_standardize"):
        try:
            return _BOOL[text.lower()]
        except KeyError:
            raise ValueError(f"{name}: expected a boolean, got {text!r}") from None
    if name == "band":
        lo, hi = (float(v) for v in text.split(","))
        return (lo, hi)
    if name == "methods":
        return tuple(v.strip() for v in text.split(",") if v.strip())
    if name == "ks":
        return tuple(int(v) for v in text.split(",") if v.strip())
    if name in ("pca_components", "seed", "trim", "workers"):
        return int(text)
    if name in ("gamma", "sigma", "spacing_cm"):
        return float(text)
    return text


def read_config_file(path) -> dict:
    values = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value")
        key, value = line.split("=", 1)
        key = key.strip().replace("-", "_")
        values[key] = parse_config_value(key, value)
    return values


class PipelineError(Exception):
    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage {stage!r} failed: {cause}")


# Stages --------------------------------------------------------------------

def compute_features(dataset, config: PipelineConfig) -> FeatureMatrix:
    def spectrum(rec):
        return one_sided_spectrum(rec, include_dc=config.include_dc, band=config.band,
                                  window=config.window)

    workers = config.workers or os.cpu_count() or 1
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            spectra = list(pool.map(spectrum, dataset.recordings))
    else:
        spectra = [spectrum(r) for r in dataset.recordings]
    return build_feature_matrix(dataset, spectra, conventional=config.conventional_moments,
                                trim=config.trim)


def grid_for(matrix: FeatureMatrix, spacing_cm=None) -> PointGrid:
    return PointGrid.from_positions(matrix.ids, matrix.positions, spacing_cm)


class Outputs:
    """Collects files relative to a root directory."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.written: list[str] = []

    def write(self, rel: str, data):
        path = self.root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        if isinstance(data, str):
            data = data.encode("utf-8")
        path.write_bytes(data)
        self.written.append(rel)

    def write_map(self, name: str, grid, values, gamma=1.0):
        gmap = rasterize(grid, values)
        # the CSV keeps raw values; the PGM shows the normalized image
        self.write(f"maps/{name}.csv", write_map_csv(gmap))
        if gmap.kind == "scalar":
            gmap = normalize_map(gmap, gamma)
        self.write(f"maps/{name}.pgm", write_pgm(gmap))


def feature_maps(out: Outputs, raw: FeatureMatrix, grid, config: PipelineConfig):
    values = enhance(raw).values if config.enhance else raw.values
    suffix = "_enh" if config.enhance else ""
    for col, name in enumerate(FEATURE_NAMES):
        out.write_map(f"feature_{name}{suffix}", grid, values[:, col], config.gamma)


def pca_stage(out: Outputs, raw: FeatureMatrix, grid, config: PipelineConfig):
    x = standardize(raw)[0] if config.pca_standardize else raw
    model = fit_pca(x, config.pca_components)
    scores = transform(model, x)
    out.write("pca_model.json", model.to_json())
    for c in range(scores.shape[1]):
        out.write_map(f"pca_C{c + 1}", grid, scores[:, c], config.gamma)
    if scores.shape[1] == 3:
        out.write_map("pca_combined", grid, combine_components(scores), config.gamma)
    return model, scores


def cluster_stage(out: Outputs, raw: FeatureMatrix, grid, config: PipelineConfig,
                  configs: list[ClusterConfig] | None = None):
    configs = configs if configs is not None else default_configs(config.ks, config.methods)
    inputs = prepare_inputs(raw, 3)
    table = ScoreTable()
    models = {}
    for cfg in configs:
        model = run_config(inputs, cfg, seed=config.seed, sigma=config.sigma)
        table.add(cfg, model)
        models[cfg] = model
        out.write(f"labels/{cfg.tag}.csv", labels_to_csv(raw.ids, raw.positions, model.labels))
        out.write_map(f"labels_{cfg.tag}", grid, model.labels.astype(np.int64))
    out.write("silhouette.json", table.to_json())
    return table, models


def scatter_csv(raw: FeatureMatrix, scores, models) -> str:
    """PCA scores with every clustering's labels, for external 3-D scatter plots."""
    tags = [cfg.tag for cfg in models]
    header = ["id"] + [f"C{i + 1}" for i in range(scores.shape[1])] + tags
    lines = [",".join(header)]
    for i, rid in enumerate(raw.ids):
        row = [rid] + [repr(float(v)) for v in scores[i]] + [str(int(m.labels[i])) for m in models.values()]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run_pipeline(config: PipelineConfig) -> dict:
    """Run every stage and return a summary report.

    Raises PipelineError naming the failing stage; nothing is left in the
    output directory from a failed run.
    """
    stage = "config"
    out_dir = Path(config.out_dir or os.environ.get(OUTPUT_ENV, "impactsound_out"))
    staging = None
    try:
        config.validate()
        stage = "load"
        dataset = load_manifest_file(config.manifest, config.spacing_cm)
        grid = dataset.grid()
        out_dir.parent.mkdir(parents=True, exist_ok=True)
        staging = Path(tempfile.mkdtemp(prefix=".impactsound-", dir=out_dir.parent))
        out = Outputs(staging)

        stage = "features"
        t0 = time.perf_counter()
        raw = compute_features(dataset, config)
        out.write("features.csv", to_csv(raw))
        feature_maps(out, raw, grid, config)
        log.info("features for %d recordings in %.2fs", len(raw), time.perf_counter() - t0)

        stage = "pca"
        model, scores = pca_stage(out, raw, grid, config)

        stage = "cluster"
        table, models = cluster_stage(out, raw, grid, config)
        out.write("pca_scores.csv", scatter_csv(raw, scores, models))

        stage = "write"
        report = {
            "n_recordings": len(raw),
            "grid": list(grid_dims(grid)),
            "explained_variance_ratio": model.explained_variance_ratio.tolist(),
            "silhouette_table": table.rows,
            "notes": list(dataset.warnings),
        }
        manifest = {
            "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
            "config": asdict(config),
            "config_hash": config.digest(),
            "versions": {"impactsound": __version__, "python": platform.python_version(),
                         "numpy": np.__version__, "scipy": scipy.__version__},
            "files": {rel: _sha256(staging / rel) for rel in sorted(out.written)},
            "report": report,
        }
        out.write("run_manifest.json", json.dumps(manifest, indent=2, sort_keys=True))
        _commit(staging, out_dir, out.written)
        staging = None
        report["out_dir"] = str(out_dir)
        return report
    except (ImpactSoundError, ValueError, OSError) as exc:
        raise PipelineError(stage, exc) from exc
    finally:
        if staging is not None:
            shutil.rmtree(staging, ignore_errors=True)


def _commit(staging: Path, out_dir: Path, files):
    out_dir.mkdir(parents=True, exist_ok=True)
    for rel in files:
        target = out_dir / rel
        target.parent.mkdir(parents=True, exist_ok=True)
        os.replace(staging / rel, target)
    shutil.rmtree(staging, ignore_errors=True)
