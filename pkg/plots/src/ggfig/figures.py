"""Figure layouts over sampled accelerations, envelope fits, and plan logs.

Each figure is described by a small JSON spec naming the input files, the
projection plane, and the output image.  Rendering uses the object-oriented
matplotlib API with no pyplot state, writes PNG only, and strips the writer
metadata, so identical inputs produce identical bytes on a fixed stack.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from matplotlib.figure import Figure

from .readers import (EnvelopeOverlay, FigureError, Table, convex_hull_2d,
                      read_envelope, read_tables)

KINDS = ("hulls", "union", "ax_trend", "density", "speeds", "solve_times")

# Projection planes of the acceleration space, keyed by sample column names.
PLANES = {
    "ax_ay": ("a_X", "a_Y"),
    "ax_apsi": ("a_X", "a_psi"),
    "ay_apsi": ("a_Y", "a_psi"),
}
GROUP_KEYS = ("v_x0", "v_y0", "mu")

_AXIS_LABEL = {
    "a_X": r"$a_X$ (m/s$^2$)",
    "a_Y": r"$a_Y$ (m/s$^2$)",
    "a_psi": r"$a_\psi$ (rad/s$^2$)",
}
_GROUP_LABEL = {"v_x0": r"$v_{x0}$", "v_y0": r"$v_{y0}$", "mu": r"$\mu$"}
_GROUP_UNIT = {"v_x0": " m/s", "v_y0": " m/s", "mu": ""}


@dataclass(frozen=True)
class FigureSpec:
    """One figure: inputs, layout, projection, and output path."""

    kind: str
    inputs: tuple[Path, ...]
    out: Path
    plane: str = "ax_ay"
    hull_only: bool = True
    overlay: Path | None = None
    group_by: str = "v_x0"
    title: str = ""

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise FigureError(f"unknown figure kind {self.kind!r}; "
                              f"expected one of {', '.join(KINDS)}")
        if self.plane not in PLANES:
            raise FigureError(f"unknown projection plane {self.plane!r}; "
                              f"expected one of {', '.join(PLANES)}")
        if self.group_by not in GROUP_KEYS:
            raise FigureError(f"unknown group key {self.group_by!r}; "
                              f"expected one of {', '.join(GROUP_KEYS)}")
        if not self.inputs:
            raise FigureError("spec lists no input files")
        object.__setattr__(self, "inputs",
                           tuple(Path(p) for p in self.inputs))
        for p in self.inputs:
            if not p.is_file():
                raise FigureError(f"input file not found: {p}")
        if self.overlay is not None:
            object.__setattr__(self, "overlay", Path(self.overlay))
            if not self.overlay.is_file():
                raise FigureError(f"overlay file not found: {self.overlay}")
        object.__setattr__(self, "out", Path(self.out))
        # Byte-stable output is only guaranteed for the PNG writer.
        if self.out.suffix != ".png":
            raise FigureError(f"output path must end in .png, got {self.out}")


def load_spec(path: str | Path) -> FigureSpec:
    """Read a figure spec; relative paths resolve against the spec's folder."""
    path = Path(path)
    if not path.is_file():
        raise FigureError(f"spec file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FigureError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise FigureError(f"{path}: spec must be a JSON object")
    allowed = {"kind", "inputs", "out", "plane", "hull_only", "overlay",
               "group_by", "title"}
    unknown = set(raw) - allowed
    if unknown:
        raise FigureError(f"{path}: unknown spec keys {sorted(unknown)}")
    for key in ("kind", "inputs", "out"):
        if key not in raw:
            raise FigureError(f"{path}: spec is missing {key!r}")
    if not isinstance(raw["inputs"], list):
        raise FigureError(f"{path}: inputs must be a list of paths")
    base = path.parent

    def resolve(p):
        p = Path(p)
        return p if p.is_absolute() else base / p

    raw["inputs"] = tuple(resolve(p) for p in raw["inputs"])
    raw["out"] = resolve(raw["out"])
    if raw.get("overlay") is not None:
        raw["overlay"] = resolve(raw["overlay"])
    return FigureSpec(**raw)


def _pooled(tables: list[Table], names: tuple[str, ...]) -> list[np.ndarray]:
    return [np.concatenate([t.column(n) for t in tables]) for n in names]


def _closed(hull: np.ndarray) -> np.ndarray:
    return np.vstack([hull, hull[:1]])


def _slice_boundary(env: EnvelopeOverlay, plane: str,
                    n_angles: int = 256) -> np.ndarray:
    """Boundary of the fitted set sliced at zero out-of-plane acceleration.

    Radial bisection from the origin; valid because the ellipse-and-rows
    set is convex and must contain zero acceleration.
    """
    x_name, y_name = PLANES[plane]
    idx = ("a_X", "a_Y", "a_psi")
    i, j = idx.index(x_name), idx.index(y_name)
    if not env.contains(np.zeros(3)):
        raise FigureError("envelope does not contain zero acceleration")
    pts = np.zeros((n_angles, 2))
    for k, theta in enumerate(np.linspace(0.0, 2.0 * np.pi, n_angles,
                                          endpoint=False)):
        d = np.zeros(3)
        d[i], d[j] = np.cos(theta), np.sin(theta)
        lo, hi = 0.0, 1.0
        while env.contains(hi * d) and hi < 1e3:
            hi *= 2.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if env.contains(mid * d):
                lo = mid
            else:
                hi = mid
        pts[k] = lo * d[[i, j]]
    return _closed(pts)


def _draw_hulls(fig: Figure, ax, spec: FigureSpec) -> None:
    """One hull outline per value of the grouping column (speed, v_y0, mu)."""
    x_name, y_name = PLANES[spec.plane]
    tables = read_tables(spec.inputs, (spec.group_by, x_name, y_name))
    key, x, y = _pooled(tables, (spec.group_by, x_name, y_name))
    for val in np.unique(key):
        sel = key == val
        label = f"{_GROUP_LABEL[spec.group_by]} = {val:g}{_GROUP_UNIT[spec.group_by]}"
        hull = _closed(convex_hull_2d(np.column_stack([x[sel], y[sel]])))
        (line,) = ax.plot(hull[:, 0], hull[:, 1], lw=1.4, label=label)
        if not spec.hull_only:
            ax.plot(x[sel], y[sel], ".", ms=1.5, alpha=0.25,
                    color=line.get_color())
    ax.legend(fontsize=8)


def _draw_union(fig: Figure, ax, spec: FigureSpec) -> None:
    """Hull of all samples pooled, with the fitted set drawn on top."""
    x_name, y_name = PLANES[spec.plane]
    tables = read_tables(spec.inputs, (x_name, y_name))
    x, y = _pooled(tables, (x_name, y_name))
    hull = _closed(convex_hull_2d(np.column_stack([x, y])))
    ax.fill(hull[:, 0], hull[:, 1], alpha=0.15, color="C0", lw=0)
    ax.plot(hull[:, 0], hull[:, 1], lw=1.4, color="C0", label="sampled union")
    if not spec.hull_only:
        ax.plot(x, y, ".", ms=1.5, alpha=0.2, color="C0")
    if spec.overlay is not None:
        edge = _slice_boundary(read_envelope(spec.overlay), spec.plane)
        ax.plot(edge[:, 0], edge[:, 1], "--", lw=1.4, color="C3",
                label="fitted set")
    ax.legend(fontsize=8)


def _draw_ax_trend(fig: Figure, ax, spec: FigureSpec) -> None:
    """Per-speed extremes of a_X, with the fitted bound polynomials."""
    tables = read_tables(spec.inputs, ("v_x0", "a_X"))
    speed, a_x = _pooled(tables, ("v_x0", "a_X"))
    speeds = np.unique(speed)
    lo = np.array([a_x[speed == v].min() for v in speeds])
    hi = np.array([a_x[speed == v].max() for v in speeds])
    ax.plot(speeds, lo, "v", color="C0", label="sampled min")
    ax.plot(speeds, hi, "^", color="C3", label="sampled max")
    if spec.overlay is not None:
        env = read_envelope(spec.overlay)
        grid = np.linspace(0.0, float(speeds.max()) * 1.05, 200)
        ax.plot(grid, env.ax_min(grid), "-", lw=1.2, color="C0",
                label="fitted min")
        ax.plot(grid, env.ax_max(grid), "-", lw=1.2, color="C3",
                label="fitted max")
    ax.set_xlabel(r"$v_{x0}$ (m/s)")
    ax.set_ylabel(r"$a_X$ bound (m/s$^2$)")
    ax.legend(fontsize=8)


def _draw_density(fig: Figure, ax, spec: FigureSpec) -> None:
    """Occupancy heatmap of the raw samples in the chosen plane."""
    x_name, y_name = PLANES[spec.plane]
    tables = read_tables(spec.inputs, (x_name, y_name))
    x, y = _pooled(tables, (x_name, y_name))
    hist, xe, ye = np.histogram2d(x, y, bins=60)
    mesh = ax.pcolormesh(xe, ye, hist.T, cmap="viridis", rasterized=True)
    fig.colorbar(mesh, ax=ax, label="samples per bin")


def _draw_speeds(fig: Figure, ax, spec: FigureSpec) -> None:
    """Planned speed over arc length for both planner models."""
    tables = read_tables(spec.inputs, ("s", "v_envelope", "v_bicycle"))
    for table in tables:
        s = table.column("s")
        ax.plot(s, table.column("v_envelope"), lw=1.4, color="C0",
                label="envelope planner")
        ax.plot(s, table.column("v_bicycle"), lw=1.4, color="C3",
                label="kinematic baseline")
    ax.set_xlabel("arc length s (m)")
    ax.set_ylabel("speed (m/s)")
    ax.legend(fontsize=8)


def _draw_solve_times(fig: Figure, ax, spec: FigureSpec) -> None:
    """Per-tick solver wall time from one or more plan logs."""
    tables = read_tables(spec.inputs, ("t", "solve_ms"))
    for path, table in zip(spec.inputs, tables):
        ax.plot(table.column("t"), table.column("solve_ms"), lw=1.0,
                label=path.stem)
    ax.set_xlabel("t (s)")
    ax.set_ylabel("solve time (ms)")
    ax.legend(fontsize=8)


_DRAW = {
    "hulls": _draw_hulls,
    "union": _draw_union,
    "ax_trend": _draw_ax_trend,
    "density": _draw_density,
    "speeds": _draw_speeds,
    "solve_times": _draw_solve_times,
}
_FIGSIZE = {
    "hulls": (5.5, 4.5),
    "union": (5.5, 4.5),
    "ax_trend": (6.0, 4.0),
    "density": (5.5, 4.5),
    "speeds": (7.0, 3.5),
    "solve_times": (7.0, 3.5),
}


def render(spec: FigureSpec) -> Path:
    """Draw one figure and write it as PNG; returns the output path."""
    fig = Figure(figsize=_FIGSIZE[spec.kind])
    ax = fig.add_subplot()
    ax.grid(True, lw=0.3, alpha=0.6)
    _DRAW[spec.kind](fig, ax, spec)
    if spec.kind in ("hulls", "union", "density"):
        ax.set_xlabel(_AXIS_LABEL[PLANES[spec.plane][0]])
        ax.set_ylabel(_AXIS_LABEL[PLANES[spec.plane][1]])
        if spec.plane == "ax_ay":
            ax.set_aspect("equal")
    if spec.title:
        ax.set_title(spec.title)
    fig.tight_layout()
    spec.out.parent.mkdir(parents=True, exist_ok=True)
    # Dropping the Software chunk keeps the bytes free of version strings.
    fig.savefig(spec.out, format="png", dpi=150,
                metadata={"Software": None})
    return spec.out
