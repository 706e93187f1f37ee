"""Planning-level point-mass model constrained by a fitted envelope.

The planner treats the vehicle as a triple integrator-free point: position,
heading, and their body-frame velocities driven directly by commanded
accelerations ``u = (u_x, u_y, u_psi)``.  Admissible commands live in the
convex set described by an :class:`~ggplan.envelope.EnvelopeModel`; the
projection onto that set uses Dykstra's alternating scheme, which converges
to the Euclidean projection onto the intersection.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .envelope import EnvelopeModel

PLAN_STATE_DIM = 6  # X, Y, psi, v_x, v_y, v_psi

FEAS_TOL = 1e-9          # default slack tolerance of is_feasible
PROJECTION_TOL = 1e-8    # Dykstra cycle-change stopping tolerance
_MAX_CYCLES = 20000


class ProjectionError(RuntimeError):
    """Raised when the alternating projection fails to converge."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


@dataclass
class PlanState:
    """Pose and body-frame velocities of the planning model."""

    x: float = 0.0
    y: float = 0.0
    psi: float = 0.0
    v_x: float = 0.0
    v_y: float = 0.0
    v_psi: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.psi, self.v_x, self.v_y, self.v_psi])

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "PlanState":
        arr = np.asarray(arr, dtype=float)
        if arr.shape != (PLAN_STATE_DIM,):
            raise ValueError(f"expected plan state of shape ({PLAN_STATE_DIM},)")
        return cls(*arr)


@dataclass(frozen=True)
class FeasibilityReport:
    """Outcome of a feasibility query with per-constraint slacks (>= 0 is ok)."""

    feasible: bool
    slacks: dict[str, float]

    def __bool__(self) -> bool:
        return self.feasible

    @property
    def worst(self) -> tuple[str, float]:
        name = min(self.slacks, key=self.slacks.get)
        return name, self.slacks[name]


def f_2di(state: np.ndarray, control: np.ndarray) -> np.ndarray:
    """State derivative of the planning model; broadcasts over batches.

    Body-frame velocities integrate the commanded accelerations directly;
    only the position kinematics rotate with heading.
    """
    x = np.asarray(state, dtype=float)
    u = np.asarray(control, dtype=float)
    psi = x[..., 2]
    c, s = np.cos(psi), np.sin(psi)
    out = np.empty(np.broadcast_shapes(x.shape, u.shape[:-1] + (PLAN_STATE_DIM,)))
    out[..., 0] = x[..., 3] * c - x[..., 4] * s
    out[..., 1] = x[..., 3] * s + x[..., 4] * c
    out[..., 2] = x[..., 5]
    out[..., 3] = u[..., 0]
    out[..., 4] = u[..., 1]
    out[..., 5] = u[..., 2]
    return out


def step_2di(state: np.ndarray, control: np.ndarray, dt: float) -> np.ndarray:
    """One RK4 step of the planning model under a constant command."""
    k1 = f_2di(state, control)
    k2 = f_2di(state + 0.5 * dt * k1, control)
    k3 = f_2di(state + 0.5 * dt * k2, control)
    k4 = f_2di(state + dt * k3, control)
    return state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


_ROW_NAMES = ("traction_left", "traction_right", "steep_left", "steep_right",
              "shallow_left", "shallow_right")


def is_feasible(env: EnvelopeModel, accel: np.ndarray, v_x: float,
                tol: float = FEAS_TOL) -> FeasibilityReport:
    """Check one commanded acceleration against the envelope at speed v_x.

    Slacks are signed satisfaction margins; any slack below ``-tol`` makes
    the command infeasible.  Boundary points therefore count as feasible.
    """
    a = np.asarray(accel, dtype=float).reshape(3)
    slacks = {
        "ellipse": 1.0 - (a[0] / env.alpha) ** 2 - (a[1] / env.beta) ** 2,
        "ax_min": a[0] - float(env.ax_min(v_x)),
        "ax_max": float(env.ax_max(v_x)) - a[0],
    }
    rows = env.b - env.a_rows @ a
    slacks.update(zip(_ROW_NAMES, rows))
    feasible = all(v >= -tol for v in slacks.values())
    return FeasibilityReport(feasible, {k: float(v) for k, v in slacks.items()})


def _project_ellipse(a: np.ndarray, alpha: float, beta: float) -> np.ndarray:
    """Project (a_X, a_Y) rows onto the ellipse; a_psi passes through."""
    out = a.copy()
    x, y = a[:, 0], a[:, 1]
    inside = (x / alpha) ** 2 + (y / beta) ** 2 <= 1.0
    if inside.all():
        return out
    xo, yo = x[~inside], y[~inside]
    # Lagrange multiplier root of the projection onto an axis-aligned ellipse,
    # found by safeguarded Newton iteration from lam = 0.
    lam = np.zeros_like(xo)
    a2, b2 = alpha * alpha, beta * beta
    for _ in range(80):
        pa, pb = a2 + lam, b2 + lam
        f = (alpha * xo / pa) ** 2 + (beta * yo / pb) ** 2 - 1.0
        df = -2.0 * ((alpha * xo) ** 2 / pa ** 3 + (beta * yo) ** 2 / pb ** 3)
        step = f / df
        lam = np.maximum(lam - step, 0.0)
        if np.max(np.abs(f)) < 1e-14:
            break
    out[~inside, 0] = a2 * xo / (a2 + lam)
    out[~inside, 1] = b2 * yo / (b2 + lam)
    return out


def _dykstra(env: EnvelopeModel, a: np.ndarray, lo: np.ndarray, hi: np.ndarray,
             max_cycles: int, tol: float | None = None) -> np.ndarray:
    """Dykstra's alternating projections over cylinder, interval, half-spaces."""
    a = a.copy()
    n_sets = 2 + len(env.b)
    increments = np.zeros((n_sets, *a.shape))
    row_norm_sq = np.einsum("ij,ij->i", env.a_rows, env.a_rows)
    for _ in range(max_cycles):
        prev = a.copy()
        prev_inc = increments.copy()
        for k in range(n_sets):
            y = a + increments[k]
            if k == 0:
                a = _project_ellipse(y, env.alpha, env.beta)
            elif k == 1:
                a = y.copy()
                a[:, 0] = np.clip(y[:, 0], lo, hi)
            else:
                row = env.a_rows[k - 2]
                excess = np.maximum(y @ row - env.b[k - 2], 0.0)
                a = y - np.outer(excess / row_norm_sq[k - 2], row)
            increments[k] = y - a
        if tol is not None:
            # The iterate can plateau while increments still trade mass
            # between sets, so convergence is judged on the increments too.
            change = max(np.max(np.abs(a - prev)),
                         np.max(np.abs(increments - prev_inc)))
            if change < tol:
                return a
    if tol is not None:
        raise ProjectionError("alternating projection did not converge", change)
    return a


def _solve_active_set(p: np.ndarray, alpha: float, beta: float,
                      rows: np.ndarray, offsets: np.ndarray,
                      ellipse: bool) -> tuple[np.ndarray, np.ndarray] | None:
    """Projection of p onto the given constraints taken as equalities.

    Returns the point and the linear multipliers, or None when the system is
    singular or the ellipse multiplier has no root.
    """
    if not ellipse:
        if len(rows) == 0:
            return p.copy(), np.empty(0)
        try:
            lam = np.linalg.solve(rows @ rows.T, rows @ p - offsets)
        except np.linalg.LinAlgError:
            return None
        return p - rows.T @ lam, lam
    if len(rows) == 0:
        return _project_ellipse(p[None], alpha, beta)[0], np.empty(0)

    def evaluate(mu: float):
        d = np.array([1.0 / (1.0 + 2.0 * mu / alpha ** 2),
                      1.0 / (1.0 + 2.0 * mu / beta ** 2), 1.0])
        scaled = rows * d
        try:
            lam = np.linalg.solve(scaled @ rows.T, scaled @ p - offsets)
        except np.linalg.LinAlgError:
            return None
        a = d * (p - rows.T @ lam)
        return (a[0] / alpha) ** 2 + (a[1] / beta) ** 2 - 1.0, a, lam

    at_zero = evaluate(0.0)
    if at_zero is None or at_zero[0] <= 0.0:
        return None            # ellipse is not active together with these rows
    mu_hi = 1.0
    while True:
        at_hi = evaluate(mu_hi)
        if at_hi is None:
            return None
        if at_hi[0] < 0.0:
            break
        mu_hi *= 2.0
        if mu_hi > 1e12:
            return None
    mu_lo = 0.0
    for _ in range(90):
        mid = 0.5 * (mu_lo + mu_hi)
        level = evaluate(mid)[0]
        if level > 0.0:
            mu_lo = mid
        else:
            mu_hi = mid
    _, a, lam = evaluate(0.5 * (mu_lo + mu_hi))
    return a, lam


def _exact_projection(p: np.ndarray, alpha: float, beta: float,
                      rows: np.ndarray, offsets: np.ndarray,
                      candidates: np.ndarray) -> np.ndarray | None:
    """KKT-verified projection, enumerating active subsets of the candidates."""
    feas_tol = 1e-8
    for ellipse in (False, True):
        for size in range(0, 3 - int(ellipse) + 1):
            for subset in itertools.combinations(candidates, size):
                idx = list(subset)
                sol = _solve_active_set(p, alpha, beta, rows[idx],
                                        offsets[idx], ellipse)
                if sol is None:
                    continue
                a, lam = sol
                if np.any(lam < -feas_tol):
                    continue
                if np.any(rows @ a - offsets > feas_tol):
                    continue
                if (a[0] / alpha) ** 2 + (a[1] / beta) ** 2 > 1.0 + feas_tol:
                    continue
                return a
    return None


_WARMUP_CYCLES = 80


def project_feasible_many(env: EnvelopeModel, accels: np.ndarray,
                          v_x: np.ndarray, tol: float = PROJECTION_TOL
                          ) -> np.ndarray:
    """Euclidean projection of a batch of commands onto the feasible set.

    Feasible inputs are returned unchanged.  For the rest, a short run of
    alternating projections localizes the active constraints and the
    projection is then solved exactly from the KKT conditions of that active
    set, with fallback to full enumeration and finally to long alternating
    projections at tolerance ``tol``.
    """
    a = np.asarray(accels, dtype=float).reshape(-1, 3).copy()
    v = np.broadcast_to(np.asarray(v_x, dtype=float), a.shape[:1]).astype(float)
    lo = np.asarray(env.ax_min(v), dtype=float)
    hi = np.asarray(env.ax_max(v), dtype=float)

    outside = ((a[:, 0] / env.alpha) ** 2 + (a[:, 1] / env.beta) ** 2 > 1.0) \
        | (a[:, 0] < lo) | (a[:, 0] > hi) \
        | np.any(a @ env.a_rows.T > env.b, axis=1)
    if not outside.any():
        return a
    idx = np.flatnonzero(outside)
    warm = _dykstra(env, a[idx], lo[idx], hi[idx], _WARMUP_CYCLES)

    box_rows = np.array([[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]])
    rows = np.vstack([env.a_rows, box_rows])
    for k, i in enumerate(idx):
        p = a[i]
        offsets = np.concatenate([env.b, [hi[i], -lo[i]]])
        slack = offsets - rows @ warm[k]
        near = np.flatnonzero(slack < 1e-3)
        proj = _exact_projection(p, env.alpha, env.beta, rows, offsets, near)
        if proj is None:
            proj = _exact_projection(p, env.alpha, env.beta, rows, offsets,
                                     np.arange(len(rows)))
        if proj is None:
            proj = _dykstra(env, p[None], lo[i: i + 1], hi[i: i + 1],
                            _MAX_CYCLES, tol)[0]
        a[i] = proj
    return a


def project_feasible(env: EnvelopeModel, accel: np.ndarray, v_x: float,
                     tol: float = PROJECTION_TOL) -> np.ndarray:
    """Project one commanded acceleration onto the feasible set at speed v_x."""
    return project_feasible_many(env, np.asarray(accel, dtype=float).reshape(1, 3),
                                 np.array([v_x]), tol)[0]
