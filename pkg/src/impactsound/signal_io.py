"""WAV parsing and the position manifest.

Recordings are 16-bit PCM WAV files, one impact per file. Their slab-frame
positions come from a CSV manifest (``id,x_cm,y_cm,wav_path``); every
position must sit on a square lattice ``origin + spacing * (i, j)``.
"""

from __future__ import annotations

import csv
import io
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import (
    EmptyDatasetError,
    EmptySignalError,
    ManifestError,
    UnsupportedFormatError,
    WavFormatError,
)

PCM_SCALE = 32768.0
MANIFEST_HEADER = ("id", "x_cm", "y_cm", "wav_path")
DEFAULT_SPACING_CM = 2.0
LATTICE_TOLERANCE = 0.25  # fraction of the spacing

_WAVE_FORMAT_PCM = 1
_WAVE_FORMAT_EXTENSIBLE = 0xFFFE


class MultiChannelWarning(UserWarning):
    """Raised (as a warning) when a multi-channel file is reduced to channel 0."""


@dataclass(frozen=True)
class Recording:
    id: str
    samples: np.ndarray
    sample_rate_hz: float
    position: tuple[float, float]

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size == 0:
            raise EmptySignalError(f"recording {self.id!r} has no samples")
        if not np.all(np.isfinite(samples)) or np.max(np.abs(samples)) > 1.0:
            raise ValueError(f"recording {self.id!r}: samples must be finite and within [-1, 1]")
        if not self.sample_rate_hz > 0:
            raise ValueError(f"recording {self.id!r}: sample rate must be positive")
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate_hz", float(self.sample_rate_hz))
        object.__setattr__(self, "position", (float(self.position[0]), float(self.position[1])))


@dataclass(frozen=True)
class PointGrid:
    """Position-tagged points on a square lattice, without any audio."""

    ids: tuple[str, ...]
    positions: np.ndarray
    spacing_cm: float
    origin: tuple[float, float]

    @classmethod
    def from_positions(cls, ids, positions, spacing_cm=None, default_spacing_cm=DEFAULT_SPACING_CM):
        ids = tuple(str(i) for i in ids)
        pos = np.asarray(positions, dtype=np.float64).reshape(-1, 2)
        if len(ids) != len(pos):
            raise ValueError("ids and positions differ in length")
        if len(ids) == 0:
            raise EmptyDatasetError("empty dataset")
        _check_unique(ids)
        if spacing_cm is None:
            spacing_cm = infer_spacing(pos, default_spacing_cm)
        origin = (float(pos[:, 0].min()), float(pos[:, 1].min()))
        check_lattice(ids, pos, spacing_cm, origin)
        pos = pos.copy()
        pos.flags.writeable = False
        return cls(ids, pos, float(spacing_cm), origin)


@dataclass(frozen=True)
class Dataset:
    recordings: tuple[Recording, ...]
    spacing_cm: float
    origin: tuple[float, float]
    warnings: tuple[str, ...] = field(default=(), compare=False)

    @classmethod
    def build(cls, recordings: Sequence[Recording], spacing_cm=None,
              default_spacing_cm=DEFAULT_SPACING_CM, notes=()):
        recordings = tuple(recordings)
        if not recordings:
            raise EmptyDatasetError("empty dataset")
        rates = {r.sample_rate_hz for r in recordings}
        if len(rates) > 1:
            raise ManifestError(f"mixed sample rates: {sorted(rates)}")
        grid = PointGrid.from_positions(
            [r.id for r in recordings], [r.position for r in recordings],
            spacing_cm, default_spacing_cm)
        return cls(recordings, grid.spacing_cm, grid.origin, tuple(notes))

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(r.id for r in self.recordings)

    @property
    def positions(self) -> np.ndarray:
        return np.array([r.position for r in self.recordings], dtype=np.float64)

    @property
    def sample_rate_hz(self) -> float:
        return self.recordings[0].sample_rate_hz

    def __len__(self):
        return len(self.recordings)

    def grid(self) -> PointGrid:
        pos = self.positions
        pos.flags.writeable = False
        return PointGrid(self.ids, pos, self.spacing_cm, self.origin)


def _check_unique(ids: Iterable[str]):
    seen = set()
    for i in ids:
        if i in seen:
            raise ManifestError(f"duplicate id {i!r}")
        seen.add(i)


def infer_spacing(positions, default=DEFAULT_SPACING_CM) -> float:
    """Smallest positive coordinate step along either axis, or ``default``."""
    steps = []
    for axis in range(2):
        coords = np.unique(np.asarray(positions)[:, axis])
        diffs = np.diff(coords)
        diffs = diffs[diffs > 1e-9]
        if diffs.size:
            steps.append(diffs.min())
    return float(min(steps)) if steps else float(default)


def check_lattice(ids, positions, spacing_cm, origin):
    if not spacing_cm > 0:
        raise ManifestError(f"grid spacing must be positive, got {spacing_cm}")
    offsets = (np.asarray(positions) - np.asarray(origin)) / spacing_cm
    err = np.abs(offsets - np.round(offsets)).max(axis=1)
    bad = np.flatnonzero(err > LATTICE_TOLERANCE)
    if bad.size:
        i = bad[0]
        raise ManifestError(
            f"point {ids[i]!r} at {tuple(positions[i])} is off the {spacing_cm} cm lattice")


def grid_dims(grid) -> tuple[int, int]:
    """Lattice size ``(nx, ny)`` covering every point of a Dataset or PointGrid."""
    pos = np.asarray(grid.positions)
    extent = pos.max(axis=0) - np.asarray(grid.origin)
    nx, ny = (int(round(e / grid.spacing_cm)) + 1 for e in extent)
    return nx, ny


def cell_indices(grid) -> np.ndarray:
    """Integer lattice coordinates ``(i, j)`` for each point."""
    offsets = (np.asarray(grid.positions) - np.asarray(grid.origin)) / grid.spacing_cm
    return np.round(offsets).astype(np.int64)


# WAV -----------------------------------------------------------------------

def parse_wav(data: bytes, *, with_channels=False):
    """Decode a 16-bit PCM WAV file.

    Returns ``(samples, sample_rate_hz)`` with samples scaled by 1/32768.
    Multi-channel input is reduced to channel 0 with a MultiChannelWarning.
    Chunks after ``data`` are ignored.
    """
    data = bytes(data)
    if len(data) < 12:
        raise WavFormatError("RIFF", "file shorter than the 12-byte RIFF header")
    riff, _size, wave = struct.unpack("<4sI4s", data[:12])
    if riff != b"RIFF":
        raise WavFormatError("RIFF", f"expected 'RIFF' magic, found {riff!r}")
    if wave != b"WAVE":
        raise WavFormatError("RIFF", f"expected 'WAVE' form type, found {wave!r}")

    fmt = None
    pos = 12
    while True:
        if pos + 8 > len(data):
            missing = "fmt " if fmt is None else "data"
            raise WavFormatError(missing, "chunk not found before end of file")
        chunk_id, chunk_size = struct.unpack("<4sI", data[pos:pos + 8])
        name = chunk_id.decode("latin-1")
        body_start = pos + 8
        body_end = body_start + chunk_size
        if chunk_id == b"fmt ":
            if body_end > len(data):
                raise WavFormatError(name, "chunk extends past end of file")
            fmt = _parse_fmt(data[body_start:body_end])
        elif chunk_id == b"data":
            if fmt is None:
                raise WavFormatError("data", "data chunk precedes fmt chunk")
            if body_end > len(data):
                raise WavFormatError(name, "chunk extends past end of file")
            channels, rate = fmt
            frames = chunk_size // (2 * channels)
            if frames == 0:
                raise EmptySignalError("WAV data chunk holds no samples")
            raw = np.frombuffer(data, dtype="<i2", count=frames * channels, offset=body_start)
            raw = raw.reshape(frames, channels)
            if channels > 1:
                warnings.warn(f"{channels}-channel WAV: using channel 0", MultiChannelWarning,
                              stacklevel=2)
            samples = raw[:, 0].astype(np.float64) / PCM_SCALE
            if with_channels:
                return samples, float(rate), channels
            return samples, float(rate)
        elif body_end > len(data):
            raise WavFormatError(name, "chunk extends past end of file")
        pos = body_end + (chunk_size & 1)


def _parse_fmt(body: bytes):
    if len(body) < 16:
        raise WavFormatError("fmt ", f"chunk is {len(body)} bytes, need at least 16")
    tag, channels, rate, _byte_rate, _align, bits = struct.unpack("<HHIIHH", body[:16])
    if tag == _WAVE_FORMAT_EXTENSIBLE and len(body) >= 26:
        # subformat GUID starts at byte 24; its first two bytes are the format code
        tag = struct.unpack("<H", body[24:26])[0]
    if tag != _WAVE_FORMAT_PCM:
        raise UnsupportedFormatError(f"WAV format code {tag} is not PCM")
    if bits != 16:
        raise UnsupportedFormatError(f"{bits}-bit samples are not supported (need 16)")
    if channels < 1:
        raise WavFormatError("fmt ", "channel count is zero")
    if rate == 0:
        raise WavFormatError("fmt ", "sample rate is zero")
    return channels, rate


def quantize(samples) -> np.ndarray:
    """Map [-1, 1] floats to int16 the inverse way parse_wav scales them."""
    q = np.round(np.asarray(samples, dtype=np.float64) * PCM_SCALE)
    return np.clip(q, -32768, 32767).astype("<i2")


def write_wav(samples, sample_rate_hz, extra_chunks: Sequence[tuple[bytes, bytes]] = ()) -> bytes:
    """Encode mono 16-bit PCM. ``extra_chunks`` are placed between fmt and data."""
    pcm = quantize(samples).tobytes()
    rate = int(round(sample_rate_hz))
    fmt = struct.pack("<HHIIHH", _WAVE_FORMAT_PCM, 1, rate, rate * 2, 2, 16)
    body = [b"WAVE", b"fmt ", struct.pack("<I", len(fmt)), fmt]
    for cid, payload in extra_chunks:
        body += [cid, struct.pack("<I", len(payload)), payload, b"\x00" * (len(payload) & 1)]
    body += [b"data", struct.pack("<I", len(pcm)), pcm, b"\x00" * (len(pcm) & 1)]
    content = b"".join(body)
    return b"RIFF" + struct.pack("<I", len(content)) + content


# Manifest ------------------------------------------------------------------

def directory_resolver(base_dir) -> Callable[[str], bytes]:
    base = Path(base_dir)

    def resolve(wav_path: str) -> bytes:
        path = Path(wav_path)
        if not path.is_absolute():
            path = base / path
        return path.read_bytes()

    return resolve


def load_manifest(text, wav_resolver: Callable[[str], bytes], spacing_cm=None,
                  default_spacing_cm=DEFAULT_SPACING_CM) -> Dataset:
    """Read a manifest CSV and the WAV file behind each row.

    ``text`` may be a string or a text stream. ``wav_resolver`` maps the
    ``wav_path`` column to file bytes.
    """
    stream = io.StringIO(text) if isinstance(text, str) else text
    reader = csv.reader(stream)
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != MANIFEST_HEADER:
        raise ManifestError(f"manifest header must be {','.join(MANIFEST_HEADER)}, got {header}")

    recordings = []
    notes = []
    seen = set()
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 4:
            raise ManifestError(f"line {lineno}: expected 4 fields, got {len(row)}")
        rid, xs, ys, wav_path = (c.strip() for c in row)
        if rid in seen:
            raise ManifestError(f"duplicate id {rid!r}")
        seen.add(rid)
        try:
            x, y = float(xs), float(ys)
        except ValueError:
            raise ManifestError(f"line {lineno}: bad coordinates {xs!r}, {ys!r}") from None
        try:
            blob = wav_resolver(wav_path)
        except OSError as exc:
            raise ManifestError(f"{rid}: missing file {wav_path!r} ({exc.strerror or exc})") from exc
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", MultiChannelWarning)
            try:
                samples, rate = parse_wav(blob)
            except (WavFormatError, UnsupportedFormatError, EmptySignalError) as exc:
                raise ManifestError(f"{rid}: {exc}") from exc
        for w in caught:
            notes.append(f"{rid}: {w.message}")
            warnings.warn(f"{rid}: {w.message}", MultiChannelWarning, stacklevel=2)
        recordings.append(Recording(rid, samples, rate, (x, y)))
    return Dataset.build(recordings, spacing_cm, default_spacing_cm, notes)


def load_manifest_file(path, spacing_cm=None) -> Dataset:
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        return load_manifest(fh, directory_resolver(path.parent), spacing_cm)


def format_manifest(rows: Iterable[tuple[str, float, float, str]]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(MANIFEST_HEADER)
    for rid, x, y, wav_path in rows:
        writer.writerow([rid, repr(float(x)), repr(float(y)), wav_path])
    return out.getvalue()
