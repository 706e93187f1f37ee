"""Readers for the run artifacts the figures are drawn from.

Everything here parses the planner CLI's documented on-disk formats: CSV
tables with a single comma-separated header line followed by numeric rows,
and the fitted envelope as JSON.  Nothing imports the planner package; the
files are the interface.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

ENVELOPE_SCHEMA_VERSION = 1


class FigureError(ValueError):
    """Raised for malformed specs, inputs, or envelope files."""


@dataclass(frozen=True)
class Table:
    """A parsed CSV: column names plus an (n, k) float array."""

    columns: tuple[str, ...]
    data: np.ndarray

    def __len__(self) -> int:
        return len(self.data)

    def column(self, name: str) -> np.ndarray:
        if name not in self.columns:
            raise FigureError(f"missing column {name!r} "
                              f"(have {', '.join(self.columns)})")
        return self.data[:, self.columns.index(name)]


def read_table(path: str | Path) -> Table:
    """Parse a header-line CSV; rejects files with no data rows."""
    path = Path(path)
    if not path.is_file():
        raise FigureError(f"input file not found: {path}")
    with path.open() as fh:
        header = fh.readline().strip()
        if not header or any(not c.strip() for c in header.split(",")):
            raise FigureError(f"{path}: malformed CSV header {header!r}")
        columns = tuple(c.strip() for c in header.split(","))
        try:
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
        except ValueError as exc:
            raise FigureError(f"{path}: {exc}") from exc
    if data.size == 0:
        raise FigureError(f"{path}: no data rows")
    if data.shape[1] != len(columns):
        raise FigureError(f"{path}: {data.shape[1]} columns of data under "
                          f"{len(columns)} header names")
    return Table(columns, data)


def read_tables(paths: tuple[Path, ...], required: tuple[str, ...]) -> list[Table]:
    tables = [read_table(p) for p in paths]
    for path, table in zip(paths, tables):
        for name in required:
            if name not in table.columns:
                raise FigureError(f"{path}: missing column {name!r}")
    return tables


@dataclass(frozen=True)
class EnvelopeOverlay:
    """Fitted acceleration-set constants loaded from an envelope JSON file.

    Feasibility at zero out-of-plane acceleration is all the overlay needs,
    so only the ellipse and the halfspace rows are kept; the speed-dependent
    longitudinal bounds are exposed as polynomial evaluations for the trend
    figure.
    """

    alpha: float
    beta: float
    a_rows: np.ndarray
    b: np.ndarray
    ax_min_poly: np.ndarray
    ax_max_poly: np.ndarray

    def ax_min(self, v: float | np.ndarray) -> np.ndarray:
        return _poly_eval(self.ax_min_poly, v)

    def ax_max(self, v: float | np.ndarray) -> np.ndarray:
        return _poly_eval(self.ax_max_poly, v)

    def contains(self, accel: np.ndarray) -> np.ndarray:
        """Ellipse-and-rows membership for (..., 3) acceleration points."""
        a = np.asarray(accel, dtype=float)
        inside = (a[..., 0] / self.alpha) ** 2 + (a[..., 1] / self.beta) ** 2 <= 1.0
        return inside & np.all(a @ self.a_rows.T <= self.b, axis=-1)


def _poly_eval(coeffs: np.ndarray, v: float | np.ndarray) -> np.ndarray:
    # Coefficients are stored constant-first.
    v = np.asarray(v, dtype=float)
    return sum(c * v ** k for k, c in enumerate(coeffs))


def read_envelope(path: str | Path) -> EnvelopeOverlay:
    path = Path(path)
    if not path.is_file():
        raise FigureError(f"envelope file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FigureError(f"{path}: not valid JSON ({exc})") from exc
    expected = {"schema_version", "alpha", "beta", "A", "b",
                "ax_min_poly", "ax_max_poly"}
    if not isinstance(raw, dict) or set(raw) != expected:
        raise FigureError(f"{path}: envelope JSON must have exactly the keys "
                          f"{sorted(expected)}")
    if raw["schema_version"] != ENVELOPE_SCHEMA_VERSION:
        raise FigureError(f"{path}: unsupported envelope schema version "
                          f"{raw['schema_version']}")
    a_rows = np.asarray(raw["A"], dtype=float)
    b = np.asarray(raw["b"], dtype=float)
    if a_rows.ndim != 2 or a_rows.shape[1] != 3 or len(b) != len(a_rows):
        raise FigureError(f"{path}: A must be (n, 3) with matching b")
    return EnvelopeOverlay(alpha=float(raw["alpha"]), beta=float(raw["beta"]),
                           a_rows=a_rows, b=b,
                           ax_min_poly=np.asarray(raw["ax_min_poly"], float),
                           ax_max_poly=np.asarray(raw["ax_max_poly"], float))


def convex_hull_2d(points: np.ndarray) -> np.ndarray:
    """Convex hull by monotone chain, counter-clockwise, no repeated endpoint."""
    pts = np.unique(np.asarray(points, dtype=float).reshape(-1, 2), axis=0)
    if len(pts) < 3:
        raise FigureError("need at least 3 distinct points for a hull")

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    def chain(seq):
        out: list[np.ndarray] = []
        for p in seq:
            while len(out) >= 2 and cross(out[-2], out[-1], p) <= 0.0:
                out.pop()
            out.append(p)
        return out

    hull = np.array(chain(pts)[:-1] + chain(pts[::-1])[:-1])
    if len(hull) < 3:
        raise FigureError("points are collinear; hull is degenerate")
    return hull
