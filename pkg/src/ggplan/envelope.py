"""Convex acceleration-envelope fitting and the serialisable envelope model.

The fitted model describes the set of reachable accelerations
``a = (a_X, a_Y, a_psi)`` as the intersection of

* an elliptic cylinder ``(a_X / alpha)^2 + (a_Y / beta)^2 <= 1``,
* a speed-dependent box ``ax_min(v) <= a_X <= ax_max(v)``, and
* six half-spaces ``A a <= b`` coupling lateral and yaw acceleration.

All fits work on raw acceleration samples; no dynamics code is needed here.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1

# Speed range the a_X polynomials are calibrated on; queries clamp to it.
CAL_SPEED_RANGE = (0.0, 50.0)


class FitError(ValueError):
    """Raised when the sample geometry cannot support the requested fit."""


# ---------------------------------------------------------------------------
# convex hull utilities


def _cross(o: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull_2d(points: np.ndarray) -> np.ndarray:
    """Convex hull by monotone chain, counter-clockwise, no repeated endpoint.

    Collinear interior points are dropped; fully collinear input is rejected.
    """
    pts = np.unique(np.asarray(points, dtype=float).reshape(-1, 2), axis=0)
    if len(pts) < 3:
        raise FitError("need at least 3 distinct points for a hull")

    def chain(seq):
        out: list[np.ndarray] = []
        for p in seq:
            while len(out) >= 2 and _cross(out[-2], out[-1], p) <= 0.0:
                out.pop()
            out.append(p)
        return out

    lower = chain(pts)
    upper = chain(pts[::-1])
    hull = np.array(lower[:-1] + upper[:-1])
    if len(hull) < 3:
        raise FitError("points are collinear; hull is degenerate")
    return hull


def upper_chain(points: np.ndarray) -> np.ndarray:
    """Vertices of the upper boundary, sorted by increasing first coordinate."""
    pts = np.unique(np.asarray(points, dtype=float).reshape(-1, 2), axis=0)
    if len(pts) < 2:
        raise FitError("need at least 2 distinct points for an upper chain")
    out: list[np.ndarray] = []
    for p in pts:
        while len(out) >= 2 and _cross(out[-2], out[-1], p) >= 0.0:
            out.pop()
        out.append(p)
    return np.array(out)


def hull_area(hull: np.ndarray) -> float:
    """Shoelace area of a counter-clockwise polygon."""
    x, y = hull[:, 0], hull[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def points_in_hull(points: np.ndarray, hull: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Boolean mask of points inside (or on) a counter-clockwise convex hull."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    edge = np.roll(hull, -1, axis=0) - hull
    w = pts[:, None, :] - hull[None, :, :]
    s = edge[None, :, 0] * w[:, :, 1] - edge[None, :, 1] * w[:, :, 0]
    return s.min(axis=1) >= -tol


# ---------------------------------------------------------------------------
# individual fits


def fit_ellipse(boundary: np.ndarray, crop_frac: float = 0.8,
                trim: float = 0.08) -> tuple[float, float]:
    """Axis-aligned origin-centred ellipse through boundary points.

    Solves ``p x^2 + q y^2 = 1`` in least squares over points inside the
    longitudinal crop band ``|x| <= crop_frac * max|x|``; points left far
    inside the first fit (cap remnants) are discarded once and the fit is
    repeated.  Returns the semi-axes ``(alpha, beta)``.
    """
    pts = np.asarray(boundary, dtype=float).reshape(-1, 2)
    band = np.abs(pts[:, 0]) <= crop_frac * np.abs(pts[:, 0]).max()
    pts = pts[band]
    if len(pts) < 4:
        raise FitError("fewer than 4 boundary points inside the crop band")
    if pts[:, 1].max() <= 0.0 or pts[:, 1].min() >= 0.0:
        raise FitError("boundary points must span both signs of the second axis")

    def solve(p: np.ndarray) -> np.ndarray:
        design = np.column_stack([p[:, 0] ** 2, p[:, 1] ** 2])
        coef, *_ = np.linalg.lstsq(design, np.ones(len(p)), rcond=None)
        if coef[0] <= 0.0 or coef[1] <= 0.0:
            raise FitError("ellipse fit is degenerate (non-positive axis)")
        return coef

    coef = solve(pts)
    value = coef[0] * pts[:, 0] ** 2 + coef[1] * pts[:, 1] ** 2
    keep = value >= 1.0 - trim
    if keep.sum() >= 4 and not keep.all():
        coef = solve(pts[keep])
    return float(1.0 / np.sqrt(coef[0])), float(1.0 / np.sqrt(coef[1]))


def _symmetrize(samples: np.ndarray) -> np.ndarray:
    return np.vstack([samples, samples * np.array([1.0, -1.0, -1.0])])


def _weighted_two_means(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Split scalar values into two weighted clusters; returns a label array."""
    lo, hi = values.min(), values.max()
    centres = np.array([lo, hi])
    labels = np.zeros(len(values), dtype=int)
    for _ in range(100):
        new_labels = (np.abs(values - centres[1]) < np.abs(values - centres[0])).astype(int)
        for k in (0, 1):
            mask = new_labels == k
            if mask.any():
                centres[k] = np.average(values[mask], weights=weights[mask])
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return labels


def _fit_line_slope(x: np.ndarray, y: np.ndarray) -> float:
    span = x.max() - x.min()
    if span < 1e-9 * (np.abs(x).max() + 1.0):
        return 0.0
    coef = np.polyfit(x, y, 1)
    return float(coef[0])


def _chain_window_slope(chain: np.ndarray, lo: float, hi: float) -> float:
    """Overlap-weighted mean slope of chain edges inside the window [lo, hi].

    A flat face shows up as one long hull edge whose endpoints can sit
    outside the window, so edges are weighted by how much of their x-extent
    overlaps it rather than selected by endpoint location.
    """
    x0, x1 = chain[:-1, 0], chain[1:, 0]
    overlap = np.minimum(x1, hi) - np.maximum(x0, lo)
    dx = x1 - x0
    usable = (overlap > 0.0) & (dx > 1e-12 * (hi - lo + 1.0))
    if not usable.any():
        raise FitError("no hull edges overlap the traction-cap window")
    slopes = (chain[1:, 1] - chain[:-1, 1])[usable] / dx[usable]
    return float(np.average(slopes, weights=overlap[usable]))


def fit_halfspaces(samples: np.ndarray, quantile: float = 0.9995,
                   cap_frac: float = 0.7) -> tuple[np.ndarray, np.ndarray]:
    """Six half-space rows ``A a <= b`` from an acceleration sample cloud.

    The cloud is symmetrised under ``(a_Y, a_psi) -> -(a_Y, a_psi)`` first.
    Rows 1-2 bound combined traction and lateral acceleration: their common
    slope comes from hull vertices with ``a_X >= cap_frac * max(a_X)``.
    Rows 3-6 bound the (a_Y, a_psi) parallelogram: upper-hull edge slopes are
    split into two families by weighted 2-means clustering.  Offsets are
    per-row-pair sample quantiles, evaluated as order statistics.
    """
    s = np.asarray(samples, dtype=float).reshape(-1, 3)
    if len(s) < 8:
        raise FitError("need at least 8 samples to fit half-spaces")
    sym = _symmetrize(s)

    chain_xy = upper_chain(sym[:, :2])
    x_max = chain_xy[-1, 0]
    if x_max <= 0.0:
        raise FitError("no samples with positive a_X; traction cap undefined")
    span_x = x_max - chain_xy[0, 0]
    slope = _chain_window_slope(chain_xy, cap_frac * x_max, x_max - 0.01 * span_x)
    k = max(-slope, 0.0)

    chain = upper_chain(sym[:, 1:3])
    span = chain[-1, 0] - chain[0, 0]
    # Corner neighbourhoods of the chain carry edge slopes unrelated to the
    # two faces being fitted; keep only edges strictly inside the ends.
    lo = chain[0, 0] + 0.02 * span
    hi = chain[-1, 0] - 0.02 * span
    dy = np.diff(chain[:, 0])
    dp = np.diff(chain[:, 1])
    wide = (dy > 1e-6 * span) & (chain[:-1, 0] >= lo) & (chain[1:, 0] <= hi)
    if wide.sum() < 2:
        raise FitError("upper chain in the (a_Y, a_psi) plane has too few edges")
    slopes = dp[wide] / dy[wide]
    labels = _weighted_two_means(slopes, dy[wide])
    family_slopes = []
    edge_idx = np.flatnonzero(wide)
    for lab in (0, 1):
        idx = edge_idx[labels == lab]
        if idx.size == 0:
            family_slopes.append(float(np.average(slopes, weights=dy[wide])))
            continue
        verts = np.unique(np.concatenate([idx, idx + 1]))
        family_slopes.append(_fit_line_slope(chain[verts, 0], chain[verts, 1]))
    family_slopes.sort()

    rows = [np.array([k, 1.0, 0.0]), np.array([k, -1.0, 0.0])]
    for m in family_slopes:
        rows.append(np.array([0.0, -m, 1.0]))
        rows.append(np.array([0.0, m, -1.0]))
    a_rows = np.array([rows[0], rows[1], rows[2], rows[3], rows[4], rows[5]])

    b = np.empty(6)
    for i in (0, 2, 4):
        values = sym @ a_rows[i]
        b[i] = b[i + 1] = np.quantile(values, quantile, method="higher")
    if np.any(b <= 0.0):
        raise FitError("fitted polytope does not contain the origin")
    return a_rows, b


def fit_ax_bounds(per_speed: dict[float, np.ndarray],
                  quantiles: tuple[float, float] = (0.001, 0.999)
                  ) -> tuple[np.ndarray, np.ndarray]:
    """Speed trend of the longitudinal acceleration bounds.

    Takes per-speed a_X sample arrays, reduces each to its extreme order
    statistics, and fits a quadratic (lower bound) and an affine (upper
    bound) polynomial over speed.  Coefficients are constant-first.
    """
    if len(per_speed) < 3:
        raise FitError("need a_X samples at 3 or more speeds")
    speeds = np.array(sorted(per_speed))
    lo = np.array([np.quantile(np.asarray(per_speed[v]).ravel(), quantiles[0],
                               method="lower") for v in speeds])
    hi = np.array([np.quantile(np.asarray(per_speed[v]).ravel(), quantiles[1],
                               method="higher") for v in speeds])
    min_poly = np.polynomial.polynomial.polyfit(speeds, lo, 2)
    max_poly = np.polynomial.polynomial.polyfit(speeds, hi, 1)
    return min_poly, max_poly


# ---------------------------------------------------------------------------
# envelope model


@dataclass(eq=False)
class EnvelopeModel:
    """Fitted description of the reachable-acceleration set."""

    alpha: float                # ellipse semi-axis along a_X, m/s^2
    beta: float                 # ellipse semi-axis along a_Y, m/s^2
    a_rows: np.ndarray          # (6, 3) half-space normals
    b: np.ndarray               # (6,) half-space offsets
    ax_min_poly: np.ndarray     # (3,) quadratic in speed, constant first
    ax_max_poly: np.ndarray     # (2,) affine in speed, constant first
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self) -> None:
        self.a_rows = np.asarray(self.a_rows, dtype=float).reshape(6, 3)
        self.b = np.asarray(self.b, dtype=float).reshape(6)
        self.ax_min_poly = np.asarray(self.ax_min_poly, dtype=float).reshape(3)
        self.ax_max_poly = np.asarray(self.ax_max_poly, dtype=float).reshape(2)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EnvelopeModel):
            return NotImplemented
        return (self.alpha == other.alpha and self.beta == other.beta
                and np.array_equal(self.a_rows, other.a_rows)
                and np.array_equal(self.b, other.b)
                and np.array_equal(self.ax_min_poly, other.ax_min_poly)
                and np.array_equal(self.ax_max_poly, other.ax_max_poly)
                and self.schema_version == other.schema_version)

    def validate(self) -> None:
        if not (self.alpha > 0.0 and self.beta > 0.0):
            raise FitError("ellipse semi-axes must be positive")
        if np.any(self.b <= 0.0):
            raise FitError("polytope must contain the origin strictly")
        values = [self.alpha, self.beta, *self.a_rows.ravel(), *self.b,
                  *self.ax_min_poly, *self.ax_max_poly]
        if not np.all(np.isfinite(values)):
            raise FitError("envelope model contains non-finite values")
        speeds = np.linspace(*CAL_SPEED_RANGE, 51)
        if np.any(self.ax_min(speeds) >= 0.0) or np.any(self.ax_max(speeds) <= 0.0):
            raise FitError("a_X bounds must bracket zero over the calibrated speeds")

    def ax_min(self, v: float | np.ndarray) -> np.ndarray:
        """Lower a_X bound at speed v; v is clamped to the calibrated range."""
        v = np.clip(v, *CAL_SPEED_RANGE)
        return np.polynomial.polynomial.polyval(v, self.ax_min_poly)

    def ax_max(self, v: float | np.ndarray) -> np.ndarray:
        """Upper a_X bound at speed v; v is clamped to the calibrated range."""
        v = np.clip(v, *CAL_SPEED_RANGE)
        return np.polynomial.polynomial.polyval(v, self.ax_max_poly)

    def to_json(self) -> str:
        return json.dumps({
            "schema_version": self.schema_version,
            "alpha": self.alpha,
            "beta": self.beta,
            "A": self.a_rows.tolist(),
            "b": self.b.tolist(),
            "ax_min_poly": self.ax_min_poly.tolist(),
            "ax_max_poly": self.ax_max_poly.tolist(),
        }, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "EnvelopeModel":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise FitError(f"invalid envelope JSON: {exc}") from None
        expected = {"schema_version", "alpha", "beta", "A", "b",
                    "ax_min_poly", "ax_max_poly"}
        if set(raw) != expected:
            raise FitError(f"envelope JSON keys {sorted(raw)} != {sorted(expected)}")
        if raw["schema_version"] != SCHEMA_VERSION:
            raise FitError(f"unsupported envelope schema version {raw['schema_version']}")
        return cls(alpha=raw["alpha"], beta=raw["beta"], a_rows=np.array(raw["A"]),
                   b=np.array(raw["b"]), ax_min_poly=np.array(raw["ax_min_poly"]),
                   ax_max_poly=np.array(raw["ax_max_poly"]),
                   schema_version=raw["schema_version"])

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "EnvelopeModel":
        path = Path(path)
        if not path.exists():
            raise FitError(f"envelope file not found: {path}")
        return cls.from_json(path.read_text())


@dataclass(frozen=True)
class FitConfig:
    """Tuning knobs of :func:`build_envelope`."""

    crop_frac: float = 0.8      # ellipse crop band as a fraction of max |a_X|
    trim: float = 0.08          # inside-residual threshold for the ellipse refit
    cap_frac: float = 0.7       # traction-cap vertex selection threshold
    quantile: float = 0.9995    # half-space offset quantile
    ax_quantiles: tuple[float, float] = (0.001, 0.999)


def build_envelope(per_speed: dict[float, np.ndarray],
                   config: FitConfig = FitConfig()) -> EnvelopeModel:
    """Fit the full envelope model from per-speed acceleration samples.

    ``per_speed`` maps initial speed v_x0 to an (n, 3) array of
    ``(a_X, a_Y, a_psi)`` samples; all speeds are pooled for the ellipse and
    half-space fits, while the a_X bounds use the per-speed structure.
    """
    if len(per_speed) < 3:
        raise FitError("envelope fit needs samples at 3 or more speeds")
    arrays = []
    for v, arr in per_speed.items():
        arr = np.asarray(arr, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 3 or len(arr) == 0:
            raise FitError(f"samples at speed {v} must be a non-empty (n, 3) array")
        if not np.isfinite(arr).all():
            raise FitError(f"samples at speed {v} contain non-finite values")
        arrays.append(arr)
    pooled = np.vstack(arrays)

    sym = _symmetrize(pooled)
    hull = convex_hull_2d(sym[:, :2])
    alpha, beta = fit_ellipse(hull, config.crop_frac, config.trim)
    a_rows, b = fit_halfspaces(pooled, config.quantile, config.cap_frac)
    ax_min_poly, ax_max_poly = fit_ax_bounds(
        {v: np.asarray(arr)[:, 0] for v, arr in per_speed.items()},
        config.ax_quantiles)
    model = EnvelopeModel(alpha=alpha, beta=beta, a_rows=a_rows, b=b,
                          ax_min_poly=ax_min_poly, ax_max_poly=ax_max_poly)
    model.validate()
    return model
