"""Synthetic slab datasets with planted voids and delaminations.

Each lattice point gets a sum of exponentially damped sinusoids plus white
noise. The class templates are test-fixture constants chosen so that defects
ring with less energy than solid concrete:

* solid: one mode at ``solid_freq_hz``, relative amplitude 1.0
* void: the same mode shifted down by ``void_freq_shift``, amplitude x ``void_gain``
* delamination: the solid mode at x ``delam_gain`` plus a low-frequency
  flexural mode of the same relative amplitude
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment

from .signal_io import PCM_SCALE, Dataset, Recording, format_manifest, quantize, write_wav

SOLID, VOID, DELAMINATION = 0, 1, 2
CLASS_NAMES = {SOLID: "solid", VOID: "void", DELAMINATION: "delamination"}
_KINDS = {"void": VOID, "delamination": DELAMINATION}


@dataclass(frozen=True)
class Defect:
    kind: str
    shape: str
    params: tuple[float, ...]

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"defect kind must be void or delamination, got {self.kind!r}")
        expected = {"rect": 4, "circle": 3}.get(self.shape)
        if expected is None:
            raise ValueError(f"defect shape must be rect or circle, got {self.shape!r}")
        if len(self.params) != expected:
            raise ValueError(f"{self.shape} takes {expected} parameters")
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))

    @classmethod
    def rect(cls, kind, x0, y0, x1, y1):
        return cls(kind, "rect", (min(x0, x1), min(y0, y1), max(x0, x1), max(y0, y1)))

    @classmethod
    def circle(cls, kind, cx, cy, radius):
        return cls(kind, "circle", (cx, cy, radius))

    def bounds(self):
        if self.shape == "rect":
            return self.params
        cx, cy, r = self.params
        return cx - r, cy - r, cx + r, cy + r

    def contains(self, x, y, tol=1e-9) -> bool:
        if self.shape == "rect":
            x0, y0, x1, y1 = self.params
            return x0 - tol <= x <= x1 + tol and y0 - tol <= y <= y1 + tol
        cx, cy, r = self.params
        return (x - cx) ** 2 + (y - cy) ** 2 <= r * r + tol


def reference_defects() -> tuple[Defect, ...]:
    return (Defect.rect("void", 30.0, 0.0, 50.0, 20.0),
            Defect.circle("delamination", 116.0, 10.0, 6.0))


@dataclass(frozen=True)
class SlabSpec:
    width_cm: float = 20.0
    length_cm: float = 162.0
    spacing_cm: float = 2.0
    defects: tuple[Defect, ...] = field(default_factory=reference_defects)
    sample_rate_hz: float = 44100.0
    duration_s: float = 0.1
    noise_rms: float = 0.02
    seed: int = 0
    peak_amplitude: float = 0.8
    solid_freq_hz: float = 6000.0
    decay_per_s: float = 150.0
    void_freq_shift: float = 0.3
    void_gain: float = 0.4
    delam_gain: float = 0.6
    flex_freq_hz: float = 1200.0
    flex_decay_per_s: float = 60.0

    def validate(self):
        if min(self.width_cm, self.length_cm) < 0 or self.spacing_cm <= 0:
            raise ValueError("slab dimensions must be non-negative and spacing positive")
        if self.sample_rate_hz <= 0 or self.duration_s <= 0:
            raise ValueError("sample rate and duration must be positive")
        for d in self.defects:
            x0, y0, x1, y1 = d.bounds()
            if x0 < 0 or y0 < 0 or x1 > self.length_cm or y1 > self.width_cm:
                raise ValueError(f"{d.kind} {d.shape} {d.params} extends past the slab boundary")

    def lattice(self) -> list[tuple[float, float]]:
        nx = int(round(self.length_cm / self.spacing_cm)) + 1
        ny = int(round(self.width_cm / self.spacing_cm)) + 1
        return [(i * self.spacing_cm, j * self.spacing_cm) for i in range(nx) for j in range(ny)]

    def modes(self, cls):
        """``(frequency_hz, relative amplitude, decay_per_s)`` for a class."""
        f0, z = self.solid_freq_hz, self.decay_per_s
        if cls == SOLID:
            return [(f0, 1.0, z)]
        if cls == VOID:
            return [(f0 * (1.0 - self.void_freq_shift), self.void_gain, z)]
        return [(f0, self.delam_gain, z), (self.flex_freq_hz, self.delam_gain, self.flex_decay_per_s)]


def classify(spec: SlabSpec, x, y) -> int:
    for d in spec.defects:
        if d.contains(x, y):
            return _KINDS[d.kind]
    return SOLID


def template(spec: SlabSpec, cls: int) -> np.ndarray:
    n = int(round(spec.duration_s * spec.sample_rate_hz))
    t = np.arange(n) / spec.sample_rate_hz
    x = np.zeros(n)
    for f, amp, decay in spec.modes(cls):
        x += amp * np.exp(-decay * t) * np.sin(2 * np.pi * f * t)
    return spec.peak_amplitude * x


def generate(spec: SlabSpec = SlabSpec()):
    """Build the dataset and per-point ground-truth class labels.

    Samples are quantized to 16 bits so the in-memory dataset matches what
    a WAV round trip produces.
    """
    spec.validate()
    templates = {c: template(spec, c) for c in (SOLID, VOID, DELAMINATION)}
    recordings, truth = [], []
    for index, (x, y) in enumerate(spec.lattice()):
        cls = classify(spec, x, y)
        signal = templates[cls]
        if spec.noise_rms > 0:
            rng = np.random.default_rng([spec.seed, index])
            signal = signal + rng.normal(0.0, spec.noise_rms, signal.size)
        samples = quantize(np.clip(signal, -1.0, 1.0)).astype(np.float64) / PCM_SCALE
        recordings.append(Recording(point_id(index), samples, spec.sample_rate_hz, (x, y)))
        truth.append(cls)
    return Dataset.build(recordings, spacing_cm=spec.spacing_cm), np.array(truth, dtype=np.int64)


def point_id(index: int) -> str:
    return f"P{index:04d}"


def write_synth(spec: SlabSpec, out_dir) -> dict[str, Path]:
    """Write ``manifest.csv``, ``truth.csv`` and ``wav/<id>.wav`` under ``out_dir``."""
    dataset, truth = generate(spec)
    out = Path(out_dir)
    (out / "wav").mkdir(parents=True, exist_ok=True)
    rows = []
    for rec in dataset.recordings:
        rel = f"wav/{rec.id}.wav"
        (out / rel).write_bytes(write_wav(rec.samples, rec.sample_rate_hz))
        rows.append((rec.id, rec.position[0], rec.position[1], rel))
    (out / "manifest.csv").write_text(format_manifest(rows), encoding="utf-8")
    (out / "truth.csv").write_text(truth_to_csv(dataset.ids, truth), encoding="utf-8")
    return {"manifest": out / "manifest.csv", "truth": out / "truth.csv", "wav_dir": out / "wav"}


def truth_to_csv(ids, truth) -> str:
    lines = ["id,truth_label"] + [f"{i},{int(t)}" for i, t in zip(ids, truth)]
    return "\n".join(lines) + "\n"


def read_label_csv(text: str, column: str) -> dict[str, int]:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or column not in reader.fieldnames or "id" not in reader.fieldnames:
        raise ValueError(f"CSV lacks 'id' and {column!r} columns")
    return {row["id"]: int(row[column]) for row in reader}


# Scoring -------------------------------------------------------------------

def contingency(labels, truth) -> np.ndarray:
    _, li = np.unique(labels, return_inverse=True)
    _, ti = np.unique(truth, return_inverse=True)
    table = np.zeros((li.max() + 1, ti.max() + 1), dtype=np.int64)
    np.add.at(table, (li, ti), 1)
    return table


def best_permutation_accuracy(labels, truth) -> float:
    """Fraction of points correct under the best one-to-one label matching."""
    table = contingency(labels, truth)
    rows, cols = linear_sum_assignment(table, maximize=True)
    return float(table[rows, cols].sum() / len(truth))


def adjusted_rand_index(labels, truth) -> float:
    table = contingency(labels, truth).astype(np.float64)
    n = table.sum()

    def pairs(v):
        return np.sum(v * (v - 1) / 2.0)

    index = pairs(table)
    a = pairs(table.sum(axis=1))
    b = pairs(table.sum(axis=0))
    total = n * (n - 1) / 2.0
    expected = a * b / total if total else 0.0
    max_index = (a + b) / 2.0
    if max_index == expected:
        return 1.0
    return float((index - expected) / (max_index - expected))


def score_against_truth(labels, truth) -> dict[str, float]:
    labels = np.asarray(labels)
    truth = np.asarray(truth)
    if labels.shape != truth.shape:
        raise ValueError(f"label count {labels.size} differs from truth count {truth.size}")
    return {"accuracy_best_permutation": best_permutation_accuracy(labels, truth),
            "ari": adjusted_rand_index(labels, truth)}
