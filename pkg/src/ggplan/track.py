"""Track geometry: polyline centerlines with arc-length lookups.

A track is an ordered 2-D centerline with a constant half-width, optionally
closed into a loop.  Closed tracks store the closing segment implicitly, so
the first vertex must not be repeated at the end.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class TrackError(ValueError):
    """Raised for malformed track geometry or track files."""


@dataclass(frozen=True)
class Obstacle:
    """Disc-shaped keep-out region."""

    center: np.ndarray
    radius: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "center",
                           np.asarray(self.center, dtype=float).reshape(2))
        if not self.radius > 0.0:
            raise TrackError("obstacle radius must be positive")


@dataclass
class Track:
    centerline: np.ndarray      # (n, 2) vertices, no duplicate closure point
    half_width: float
    closed: bool = False

    _s: np.ndarray = field(init=False, repr=False)
    _seg: np.ndarray = field(init=False, repr=False)
    _seg_len: np.ndarray = field(init=False, repr=False)
    _tangent: np.ndarray = field(init=False, repr=False)
    _curv: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        pts = np.asarray(self.centerline, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise TrackError("centerline must be an (n >= 2, 2) array")
        if not np.all(np.isfinite(pts)):
            raise TrackError("centerline contains non-finite coordinates")
        if not self.half_width > 0.0:
            raise TrackError("half width must be positive")
        if self.closed and np.allclose(pts[0], pts[-1]):
            raise TrackError("closed track must not repeat its first vertex")
        self.centerline = pts

        seg = np.diff(pts, axis=0)
        if self.closed:
            seg = np.vstack([seg, pts[0] - pts[-1]])
        seg_len = np.linalg.norm(seg, axis=1)
        if np.any(seg_len < 1e-9):
            raise TrackError("centerline has duplicate consecutive vertices")
        self._seg = seg
        self._seg_len = seg_len
        self._s = np.concatenate([[0.0], np.cumsum(seg_len)])
        self._tangent = seg / seg_len[:, None]
        self._curv = self._vertex_curvature()

    def _vertex_curvature(self) -> np.ndarray:
        """Signed turn rate at each vertex (positive for left turns)."""
        t = self._tangent
        n_v = len(self.centerline)
        curv = np.zeros(n_v)
        # Interior vertex j joins segment j-1 to segment j.
        first = 0 if self.closed else 1
        for j in range(first, n_v):
            t_in, t_out = t[j - 1], t[j % len(t)]
            angle = np.arctan2(t_in[0] * t_out[1] - t_in[1] * t_out[0],
                               t_in @ t_out)
            ds = 0.5 * (self._seg_len[j - 1] + self._seg_len[j % len(t)])
            curv[j] = angle / ds
        if not self.closed:
            curv[0] = curv[1]
            curv[-1] = curv[-2]
        return curv

    @property
    def length(self) -> float:
        return float(self._s[-1])

    def _wrap(self, s: np.ndarray) -> np.ndarray:
        if self.closed:
            return np.mod(s, self.length)
        return np.clip(s, 0.0, self.length)

    def _locate(self, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        s = self._wrap(np.asarray(s, dtype=float))
        idx = np.clip(np.searchsorted(self._s, s, side="right") - 1,
                      0, len(self._seg) - 1)
        return idx, s - self._s[idx]

    def point_at(self, s: float | np.ndarray) -> np.ndarray:
        """Centerline position at arc length s (wrapped when closed)."""
        idx, rem = self._locate(s)
        return self.centerline[idx % len(self.centerline)] \
            + self._seg[idx] * (rem / self._seg_len[idx])[..., None]

    def tangent_at(self, s: float | np.ndarray) -> np.ndarray:
        idx, _ = self._locate(s)
        return self._tangent[idx]

    def curvature_at(self, s: float | np.ndarray) -> np.ndarray:
        """Signed curvature, linearly interpolated between vertices."""
        s = self._wrap(np.asarray(s, dtype=float))
        if self.closed:
            fp = np.append(self._curv, self._curv[0])
        else:
            fp = self._curv
        return np.interp(s, self._s[: len(fp)], fp)

    def project(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Arc length and signed lateral offset of the nearest centerline point.

        Offsets are positive to the left of the direction of travel.
        """
        p = np.atleast_2d(np.asarray(points, dtype=float))
        starts = self.centerline[np.arange(len(self._seg)) % len(self.centerline)]
        rel = p[:, None, :] - starts[None, :, :]
        t = np.einsum("kij,ij->ki", rel, self._seg) / self._seg_len ** 2
        t = np.clip(t, 0.0, 1.0)
        closest = starts[None] + t[..., None] * self._seg[None]
        d2 = np.sum((p[:, None, :] - closest) ** 2, axis=-1)
        j = np.argmin(d2, axis=1)
        k = np.arange(len(p))
        s = self._s[j] + t[k, j] * self._seg_len[j]
        offset = p - closest[k, j]
        tang = self._tangent[j]
        lat = tang[:, 0] * offset[:, 1] - tang[:, 1] * offset[:, 0]
        if np.asarray(points).ndim == 1:
            return float(s[0]), float(lat[0])
        return s, lat

    def save(self, path: str | Path) -> None:
        lines = [f"# half_width={self.half_width:.9g} closed={int(self.closed)}",
                 "s,X,Y"]
        for s, (x, y) in zip(self._s, self.centerline):
            lines.append(f"{s:.9g},{x:.9g},{y:.9g}")
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "Track":
        text = Path(path).read_text().strip().splitlines()
        if len(text) < 4 or not text[0].startswith("#"):
            raise TrackError(f"{path}: not a track file")
        meta = dict(item.split("=") for item in text[0].lstrip("# ").split())
        try:
            half_width = float(meta["half_width"])
            closed = bool(int(meta["closed"]))
        except (KeyError, ValueError) as exc:
            raise TrackError(f"{path}: bad header {text[0]!r}") from exc
        if text[1] != "s,X,Y":
            raise TrackError(f"{path}: expected 's,X,Y' columns, got {text[1]!r}")
        data = np.array([[float(v) for v in line.split(",")] for line in text[2:]])
        if data.shape[1] != 3:
            raise TrackError(f"{path}: expected 3 columns")
        if np.any(np.diff(data[:, 0]) <= 0.0):
            raise TrackError(f"{path}: arc length must increase strictly")
        track = cls(data[:, 1:], half_width, closed)
        if not np.allclose(track._s[: len(data)], data[:, 0],
                           rtol=1e-6, atol=1e-6):
            raise TrackError(f"{path}: stored arc length disagrees with geometry")
        return track


def straight_track(length: float = 500.0, half_width: float = 4.0,
                   spacing: float = 5.0) -> Track:
    """Straight run along +X starting at the origin."""
    n = max(2, int(round(length / spacing)) + 1)
    x = np.linspace(0.0, length, n)
    return Track(np.column_stack([x, np.zeros(n)]), half_width, closed=False)


def circular_track(radius: float = 50.0, half_width: float = 4.0,
                   spacing: float = 2.0) -> Track:
    """Counterclockwise circle entered at the origin heading +X."""
    n = max(8, int(round(2.0 * np.pi * radius / spacing)))
    phi = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
    pts = radius * np.column_stack([np.sin(phi), 1.0 - np.cos(phi)])
    return Track(pts, half_width, closed=True)


def stadium_track(straight: float = 150.0, radius: float = 50.0,
                  half_width: float = 4.0, spacing: float = 2.0) -> Track:
    """Closed loop of two straights joined by semicircular ends.

    This is the reference circuit used by the comparison configs: 150 m
    straights and 50 m end radii, driven counterclockwise from the origin.
    """
    n_arc = max(4, int(round(np.pi * radius / spacing)))
    n_str = max(1, int(round(straight / spacing)))

    pieces = []
    x1 = np.linspace(0.0, straight, n_str, endpoint=False)
    pieces.append(np.column_stack([x1, np.zeros(n_str)]))
    theta = np.linspace(-np.pi / 2, np.pi / 2, n_arc, endpoint=False)
    pieces.append(np.column_stack([straight + radius * np.cos(theta),
                                   radius + radius * np.sin(theta)]))
    x2 = np.linspace(straight, 0.0, n_str, endpoint=False)
    pieces.append(np.column_stack([x2, np.full(n_str, 2.0 * radius)]))
    theta = np.linspace(np.pi / 2, 3.0 * np.pi / 2, n_arc, endpoint=False)
    pieces.append(np.column_stack([radius * np.cos(theta),
                                   radius + radius * np.sin(theta)]))
    return Track(np.vstack(pieces), half_width, closed=True)
