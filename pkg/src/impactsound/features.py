"""Per-recording features and the feature matrix.

Six features per impact: time-domain energy, spectral power (amplitude sum)
and four amplitude-weighted spectral moments. The third and fourth moments
are normalized by ``P * M2**3`` and ``P * M2**4`` by default; pass
``conventional=True`` for textbook skewness/kurtosis (``M2**1.5``, ``M2**2``).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import EmptyDatasetError, FlatSpectrumError
from .spectral import Spectrum

FEATURE_NAMES = ("E", "P", "M1", "M2", "M3", "M4")
FEATURE_LABELS = {
    "E": "Energy",
    "P": "Power",
    "M1": "First Spectral Moment (Mean)",
    "M2": "Second Spectral Moment (Variance)",
    "M3": "Third Spectral Moment (Skewness)",
    "M4": "Fourth Spectral Moment (Kurtosis)",
}
EPS = 1e-12
CSV_HEADER = ("id", "x_cm", "y_cm") + FEATURE_NAMES


@dataclass(frozen=True)
class FeatureMatrix:
    """Row-aligned feature values with the ids and positions they belong to."""

    values: np.ndarray
    ids: tuple[str, ...]
    positions: np.ndarray
    columns: tuple[str, ...] = FEATURE_NAMES

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] != len(self.ids):
            raise ValueError("values must be an N x d matrix aligned with ids")
        if values.shape[1] != len(self.columns):
            raise ValueError("column names do not match the value matrix")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "positions", np.asarray(self.positions, dtype=np.float64))

    def __len__(self):
        return self.values.shape[0]

    def with_values(self, values, columns=None) -> "FeatureMatrix":
        return replace(self, values=values, columns=tuple(columns or self.columns))

    def column(self, name) -> np.ndarray:
        return self.values[:, self.columns.index(name)]


def energy(samples) -> float:
    x = np.asarray(samples, dtype=np.float64)
    return float(np.dot(x, x))


def power(spectrum: Spectrum) -> float:
    return float(np.sum(spectrum.amps))


def spectral_moments(spectrum: Spectrum, conventional=False):
    """Return ``(m1, m2, m3, m4)`` of the amplitude distribution over frequency."""
    a = np.asarray(spectrum.amps, dtype=np.float64)
    f = np.asarray(spectrum.freqs_hz, dtype=np.float64)
    p = a.sum()
    if p <= EPS:
        raise FlatSpectrumError("spectrum carries no mass (power <= 1e-12)")
    m1 = float(np.dot(a, f) / p)
    dev = f - m1
    m2 = float(np.dot(a, dev ** 2) / p)
    if m2 <= EPS * m1 * m1:
        return m1, m2, 0.0, 0.0
    c3 = float(np.dot(a, dev ** 3) / p)
    c4 = float(np.dot(a, dev ** 4) / p)
    if conventional:
        return m1, m2, c3 / m2 ** 1.5, c4 / m2 ** 2
    return m1, m2, c3 / m2 ** 3, c4 / m2 ** 4


def feature_vector(samples, spectrum: Spectrum, conventional=False) -> np.ndarray:
    return np.array([energy(samples), power(spectrum), *spectral_moments(spectrum, conventional)])


def trim_around_peak(samples, length: int) -> np.ndarray:
    """Window of ``length`` samples centred on the largest absolute sample."""
    x = np.asarray(samples, dtype=np.float64)
    if length >= x.size:
        return x
    peak = int(np.argmax(np.abs(x)))
    start = min(max(0, peak - length // 2), x.size - length)
    return x[start:start + length]


def build_feature_matrix(dataset, spectra: Sequence[Spectrum], conventional=False,
                         trim: int | None = None) -> FeatureMatrix:
    recordings = dataset.recordings
    if len(recordings) == 0:
        raise EmptyDatasetError("empty dataset")
    if len(spectra) != len(recordings):
        raise ValueError(f"{len(spectra)} spectra for {len(recordings)} recordings")
    rows = []
    for rec, spec in zip(recordings, spectra):
        samples = rec.samples if trim is None else trim_around_peak(rec.samples, trim)
        try:
            rows.append(feature_vector(samples, spec, conventional))
        except FlatSpectrumError as exc:
            raise FlatSpectrumError(str(exc), record_id=rec.id) from exc
    positions = np.array([r.position for r in recordings], dtype=np.float64)
    return FeatureMatrix(np.vstack(rows), tuple(r.id for r in recordings), positions)


_ENHANCE_POWERS = np.array([1, 3, 2, 2, 1, 1])


def _values(matrix):
    return matrix.values if isinstance(matrix, FeatureMatrix) else np.asarray(matrix, dtype=np.float64)


def _wrap(template, values, columns=None):
    if isinstance(template, FeatureMatrix):
        return template.with_values(values, columns)
    return values


def enhance(matrix):
    """Raise P to the third power and M1, M2 to the second; other columns unchanged."""
    x = _values(matrix)
    if x.shape[1] != 6:
        raise ValueError("enhancement applies to the six raw feature columns")
    return _wrap(matrix, x ** _ENHANCE_POWERS)


def standardize(matrix):
    """Z-score every column with the population std.

    Returns ``(matrix, means, stds)``. Constant columns become zeros and
    report a std of 0.
    """
    x = _values(matrix)
    if x.shape[0] < 2:
        raise ValueError("standardization needs at least two rows")
    means = x.mean(axis=0)
    stds = x.std(axis=0)
    constant = np.all(x == x[0], axis=0)
    stds = np.where(constant, 0.0, stds)
    out = np.where(constant, 0.0, (x - means) / np.where(constant, 1.0, stds))
    return _wrap(matrix, out), means, stds


def to_csv(matrix: FeatureMatrix) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(("id", "x_cm", "y_cm") + tuple(matrix.columns))
    for rid, (x, y), row in zip(matrix.ids, matrix.positions, matrix.values):
        writer.writerow([rid, repr(float(x)), repr(float(y))] + [repr(float(v)) for v in row])
    return out.getvalue()


def from_csv(text) -> FeatureMatrix:
    stream = io.StringIO(text) if isinstance(text, str) else text
    reader = csv.reader(stream)
    header = next(reader, None)
    if header is None or tuple(header[:3]) != ("id", "x_cm", "y_cm") or len(header) < 4:
        raise ValueError(f"not a feature table header: {header}")
    ids, pos, rows = [], [], []
    for row in reader:
        if not row:
            continue
        ids.append(row[0])
        pos.append((float(row[1]), float(row[2])))
        rows.append([float(v) for v in row[3:]])
    if not rows:
        raise EmptyDatasetError("empty dataset")
    return FeatureMatrix(np.array(rows), tuple(ids), np.array(pos), tuple(header[3:]))
