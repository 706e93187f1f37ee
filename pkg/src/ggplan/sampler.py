"""Monte-Carlo exploration of the reachable acceleration set.

Controls are drawn uniformly from the admissible box, held constant over a
short horizon, and the resulting ground-frame position and yaw series are
reduced to accelerations by quadratic fits.  Rollouts are advanced in
vectorised batches, so the default 10^5 draws stay cheap.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterator

import numpy as np

from .dynamics import STATE_DIM, BodyState, rk4_step_array
from .params import VehicleParams

SAMPLE_COLUMNS = ("v_x0", "v_y0", "mu", "T_f", "T_r", "delta", "a_X", "a_Y", "a_psi")
_CHUNK = 16384


@dataclass(frozen=True)
class SamplingConfig:
    """Draw count, rollout discretisation, seed, and initial-condition grid."""

    n: int = 100_000
    horizon: float = 0.1     # rollout length, s
    dt: float = 1e-3         # integrator step, s
    seed: int = 0
    v_x0: tuple[float, ...] = (5.0, 10.0, 20.0, 30.0, 40.0)
    v_y0: tuple[float, ...] = (0.0,)
    mu: tuple[float, ...] = (1.0,)

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("sampling config needs n >= 1")
        if self.dt <= 0.0 or self.horizon < 3.0 * self.dt:
            # The quadratic fit needs at least four points along the rollout.
            raise ValueError("sampling config needs dt > 0 and horizon >= 3 dt")


@dataclass(frozen=True)
class AccelSample:
    """One acceleration draw together with its generating conditions."""

    v_x0: float
    v_y0: float
    mu: float
    t_front: float
    t_rear: float
    delta: float
    a_x: float
    a_y: float
    a_psi: float


@dataclass
class SamplingResult:
    """Array-first container of one sampling run; iterates as AccelSample."""

    controls: np.ndarray         # (n, 3) draws actually rolled out
    accelerations: np.ndarray    # (n, 3) fitted (a_X, a_Y, a_psi)
    v_x0: float
    v_y0: float
    mu: float
    skipped: int = 0             # divergent rollouts dropped from the arrays

    def __len__(self) -> int:
        return len(self.accelerations)

    def __iter__(self) -> Iterator[AccelSample]:
        return iter(self.samples)

    @cached_property
    def samples(self) -> list[AccelSample]:
        return [AccelSample(self.v_x0, self.v_y0, self.mu, *c, *a)
                for c, a in zip(self.controls, self.accelerations)]

    def as_table(self) -> np.ndarray:
        """Rows in the sample-CSV column order."""
        n = len(self)
        cond = np.broadcast_to([self.v_x0, self.v_y0, self.mu], (n, 3))
        return np.hstack([cond, self.controls, self.accelerations])


def fit_quadratic(times: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Least-squares quadratic fit; returns coefficients leading-first.

    Requires at least three distinct sample times, otherwise the design
    matrix is rank deficient and the fit is rejected.
    """
    t = np.asarray(times, dtype=float).ravel()
    y = np.asarray(values, dtype=float).ravel()
    if t.shape != y.shape:
        raise ValueError("times and values must have matching length")
    if len(np.unique(t)) < 3:
        raise ValueError("quadratic fit needs at least 3 distinct times")
    design = np.column_stack([t ** 2, t, np.ones_like(t)])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    return coef


def feasible_set(xi0: BodyState, cfg: SamplingConfig, params: VehicleParams,
                 controls: np.ndarray | None = None) -> SamplingResult:
    """Sample accelerations reachable from ``xi0`` under constant controls.

    Controls are drawn from the admissible box (front torque full range, rear
    torque braking only, steering symmetric) with a counter-based generator,
    so equal seeds reproduce the run bitwise.  Pass ``controls`` to replay an
    explicit (n, 3) sequence instead of drawing.  Divergent rollouts are
    dropped and counted in ``skipped``.
    """
    if controls is None:
        rng = np.random.Generator(np.random.Philox(cfg.seed))
        low = np.array([params.t_min, params.t_min, -params.delta_max])
        high = np.array([params.t_max, 0.0, params.delta_max])
        controls = rng.uniform(low, high, size=(cfg.n, 3))
    else:
        controls = np.asarray(controls, dtype=float).reshape(-1, 3)

    n_steps = int(np.floor(cfg.horizon / cfg.dt + 1e-9))
    times = np.arange(n_steps + 1) * cfg.dt
    design = np.column_stack([times ** 2, times, np.ones_like(times)])
    pinv = np.linalg.pinv(design)  # (3, n_steps + 1)

    x0 = xi0.as_array()
    accels = np.empty((len(controls), 3))
    ok = np.empty(len(controls), dtype=bool)
    for start in range(0, len(controls), _CHUNK):
        u = controls[start:start + _CHUNK]
        x = np.broadcast_to(x0, (len(u), STATE_DIM)).copy()
        series = np.empty((n_steps + 1, len(u), 3))
        series[0] = x[:, :3]
        with np.errstate(all="ignore"):
            for k in range(n_steps):
                x = rk4_step_array(x, u, cfg.dt, params, check=False)
                series[k + 1] = x[:, :3]
        ok[start:start + len(u)] = np.isfinite(series).all(axis=(0, 2))
        np.nan_to_num(series, copy=False)
        coef = np.tensordot(pinv, series, axes=(1, 0))  # (3, batch, 3)
        accels[start:start + len(u)] = 2.0 * coef[0]

    return SamplingResult(controls=controls[ok], accelerations=accels[ok],
                          v_x0=xi0.v_x, v_y0=xi0.v_y, mu=params.mu,
                          skipped=int((~ok).sum()))


def density_histogram(accelerations: np.ndarray, bins: int = 30,
                      ranges: tuple[tuple[float, float], tuple[float, float]] | None = None
                      ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """2-D occupancy counts over the (a_X, a_Y) plane.

    Without explicit ranges the grid spans the data, so the counts always
    total the number of samples; explicit ranges must cover all samples.
    """
    acc = np.asarray(accelerations, dtype=float)
    hist, xe, ye = np.histogram2d(acc[:, 0], acc[:, 1], bins=bins, range=ranges)
    if int(hist.sum()) != len(acc):
        raise ValueError("histogram ranges do not cover all samples")
    return hist, xe, ye


def concentration_ratio(accelerations: np.ndarray, bins: int = 30) -> float:
    """Peak-to-mean occupancy over the data extent; ~1 for a uniform cloud."""
    hist, _, _ = density_histogram(accelerations, bins=bins)
    return float(hist.max() / hist.mean())


def write_samples(path: str | Path, result: SamplingResult) -> None:
    """Write one sampling run as CSV with 9-significant-digit floats."""
    np.savetxt(path, result.as_table(), fmt="%.9g", delimiter=",",
               header=",".join(SAMPLE_COLUMNS), comments="")


def read_samples(path: str | Path) -> np.ndarray:
    """Read a sample CSV back as an (n, 9) array in SAMPLE_COLUMNS order."""
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().strip()
        if header.split(",") != list(SAMPLE_COLUMNS):
            raise ValueError(f"{path}: unexpected sample CSV header {header!r}")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.shape[1] != len(SAMPLE_COLUMNS):
        raise ValueError(f"{path}: expected {len(SAMPLE_COLUMNS)} columns")
    return data
