"""Rasterized slab maps and their PGM / CSV exports.

Cells are stored row-major as ``cells[j, i]``: row ``j`` is the y index
(increasing downward in the image), column ``i`` the x index.
"""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass, replace

import numpy as np

from .errors import GridCollisionError
from .signal_io import cell_indices, grid_dims


@dataclass(frozen=True)
class GridMap:
    nx: int
    ny: int
    spacing_cm: float
    origin: tuple[float, float]
    cells: np.ndarray
    mask: np.ndarray
    kind: str = "scalar"
    n_labels: int = 0

    def __post_init__(self):
        if self.cells.shape != (self.ny, self.nx) or self.mask.shape != (self.ny, self.nx):
            raise ValueError(f"cells and mask must have shape ({self.ny}, {self.nx})")
        if self.kind not in ("scalar", "label"):
            raise ValueError(f"unknown map kind {self.kind!r}")

    def x_coords(self) -> np.ndarray:
        return self.origin[0] + self.spacing_cm * np.arange(self.nx)

    def y_coords(self) -> np.ndarray:
        return self.origin[1] + self.spacing_cm * np.arange(self.ny)


def rasterize(grid, values) -> GridMap:
    """Place one value per point into its lattice cell.

    ``grid`` is a Dataset or PointGrid. Integer ``values`` give a label map.
    """
    values = np.asarray(values)
    if values.shape != (len(grid.ids),):
        raise ValueError(f"expected {len(grid.ids)} values, got shape {values.shape}")
    nx, ny = grid_dims(grid)
    label = np.issubdtype(values.dtype, np.integer)
    cells = np.zeros((ny, nx), dtype=np.int64 if label else np.float64)
    mask = np.zeros((ny, nx), dtype=bool)
    owner = {}
    for rid, (i, j), v in zip(grid.ids, cell_indices(grid), values):
        if (i, j) in owner:
            raise GridCollisionError(owner[(i, j)], rid, (int(i), int(j)))
        owner[(i, j)] = rid
        cells[j, i] = v
        mask[j, i] = True
    n_labels = int(values.max()) + 1 if label and values.size else 0
    return GridMap(nx, ny, float(grid.spacing_cm), tuple(grid.origin), cells, mask,
                   "label" if label else "scalar", n_labels)


def normalize_map(gmap: GridMap, gamma: float = 1.0) -> GridMap:
    """Min-max scale sampled cells to [0, 1], then apply a power-law gamma."""
    if gmap.kind != "scalar":
        raise ValueError("only scalar maps can be normalized")
    vals = gmap.cells[gmap.mask]
    if vals.size == 0:
        raise ValueError("map has no sampled cells")
    lo, hi = vals.min(), vals.max()
    out = np.zeros_like(gmap.cells, dtype=np.float64)
    if hi > lo:
        scaled = (gmap.cells - lo) / (hi - lo)
        out[gmap.mask] = np.clip(scaled[gmap.mask], 0.0, 1.0) ** gamma
    else:
        out[gmap.mask] = 0.5
    return replace(gmap, cells=out)


def gray_levels(gmap: GridMap) -> np.ndarray:
    if gmap.kind == "label":
        k = max(gmap.n_labels, 1)
        g = np.round((gmap.cells + 1) * 255.0 / k)
    else:
        g = np.round(np.clip(gmap.cells, 0.0, 1.0) * 255.0)
    g = np.where(gmap.mask, g, 0)
    return g.astype(np.uint8)


def write_pgm(gmap: GridMap) -> bytes:
    """Binary P5 PGM, maxval 255. Masked cells are black."""
    header = f"P5\n{gmap.nx} {gmap.ny}\n255\n".encode("ascii")
    return header + gray_levels(gmap).tobytes()


_PGM_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n)*(\S+)")


def parse_pgm(data: bytes) -> np.ndarray:
    """Read a P5 PGM into a (height, width) float array scaled to [0, 1]."""
    pos = 0
    tokens = []
    for _ in range(4):
        m = _PGM_TOKEN.match(data, pos)
        if m is None:
            raise ValueError("truncated PGM header")
        tokens.append(m.group(1))
        pos = m.end()
    magic, width, height, maxval = tokens
    if magic != b"P5":
        raise ValueError(f"not a binary PGM (magic {magic!r})")
    width, height, maxval = int(width), int(height), int(maxval)
    if maxval > 255:
        raise ValueError("16-bit PGM not supported")
    pos += 1  # single whitespace byte after maxval
    raw = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=pos)
    return raw.reshape(height, width).astype(np.float64) / maxval


def _fmt(v, kind):
    return str(int(v)) if kind == "label" else repr(float(v))


def write_map_csv(gmap: GridMap) -> str:
    """Header of x coordinates, then one row per y; masked cells are empty."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["y_cm/x_cm"] + [repr(float(x)) for x in gmap.x_coords()])
    for j, y in enumerate(gmap.y_coords()):
        row = [_fmt(v, gmap.kind) if m else "" for v, m in zip(gmap.cells[j], gmap.mask[j])]
        writer.writerow([repr(float(y))] + row)
    return out.getvalue()


def read_map_csv(text: str, kind="scalar") -> GridMap:
    rows = list(csv.reader(io.StringIO(text)))
    xs = np.array([float(v) for v in rows[0][1:]])
    ys = np.array([float(r[0]) for r in rows[1:]])
    nx, ny = xs.size, ys.size
    dtype = np.int64 if kind == "label" else np.float64
    cells = np.zeros((ny, nx), dtype=dtype)
    mask = np.zeros((ny, nx), dtype=bool)
    for j, row in enumerate(rows[1:]):
        for i, field in enumerate(row[1:]):
            if field != "":
                cells[j, i] = int(field) if kind == "label" else float(field)
                mask[j, i] = True
    steps = np.concatenate([np.diff(xs), np.diff(ys)])
    spacing = float(steps.min()) if steps.size else 1.0
    n_labels = int(cells[mask].max()) + 1 if kind == "label" and mask.any() else 0
    return GridMap(nx, ny, spacing, (float(xs[0]), float(ys[0])), cells, mask, kind, n_labels)
