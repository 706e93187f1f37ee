"""Receding-horizon planners on top of a fitted acceleration envelope.

The proposed planner drives the point-mass model of :mod:`ggplan.integrator`
with body-frame acceleration commands ``a = (a_x, a_y, a_psi)`` of the center
of gravity.  Commands are converted to raw ``f_2di`` inputs by removing the
yaw coupling (``u_x = a_x + v_psi v_y``, ``u_y = a_y - v_psi v_x``), so the
envelope constrains the physically meaningful acceleration, centripetal part
included; pure yaw-rate steering cannot corner for free.

A kinematic bicycle tracker serves as the comparison baseline.  Both run in
the same closed loop where the plant is the planner's own model.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .envelope import EnvelopeModel
from .integrator import f_2di, is_feasible, project_feasible_many
from .params import VehicleParams
from .track import Obstacle, Track

PROFILE_SPACING = 2.0      # m, arc grid of speed profiles
FEAS_CHECK_TOL = 1e-6      # post-condition tolerance on returned controls
AVOID_CLEARANCE = 0.4      # m kept beyond the inflated obstacle radius


class PlanError(RuntimeError):
    """Planning failed; carries the best-effort sequence and slack report."""

    def __init__(self, message: str, controls: np.ndarray, report: dict):
        super().__init__(message)
        self.controls = controls
        self.report = report


def _wrap_angle(x: np.ndarray) -> np.ndarray:
    return (x + np.pi) % (2.0 * np.pi) - np.pi


def plan_derivative(states: np.ndarray, accels: np.ndarray) -> np.ndarray:
    """Point-mass derivative under body-frame CoG acceleration commands."""
    u = np.empty(np.broadcast_shapes(accels.shape, states[..., :3].shape))
    u[..., 0] = accels[..., 0] + states[..., 5] * states[..., 4]
    u[..., 1] = accels[..., 1] - states[..., 5] * states[..., 3]
    u[..., 2] = accels[..., 2]
    return f_2di(states, u)


def plan_step_states(states: np.ndarray, accels: np.ndarray,
                     dt: float) -> np.ndarray:
    """One RK4 step under a constant acceleration command; broadcasts."""
    k1 = plan_derivative(states, accels)
    k2 = plan_derivative(states + 0.5 * dt * k1, accels)
    k3 = plan_derivative(states + 0.5 * dt * k2, accels)
    k4 = plan_derivative(states + dt * k3, accels)
    return states + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def lateral_cap(env: EnvelopeModel) -> float:
    """Largest steady lateral acceleration (a_x = a_psi = 0) the envelope allows."""
    cap = env.beta
    for row, b in zip(env.a_rows, env.b):
        if row[1] > 1e-12:
            cap = min(cap, b / row[1])
    return float(cap)


class TrackSpeedProfile:
    """Target speeds along a track limited by curvature and a_X bounds.

    Backward and forward passes propagate braking and acceleration limits
    along the arc grid; closed tracks get two sweeps so limits cross the seam.
    """

    def __init__(self, track: Track, lat_cap: float, ax_min, ax_max,
                 v_max: float = 45.0, spacing: float = PROFILE_SPACING):
        if lat_cap <= 0.0 or v_max <= 0.0:
            raise ValueError("speed profile caps must be positive")
        n = max(8, int(round(track.length / spacing)))
        self._track = track
        self._s = np.linspace(0.0, track.length, n, endpoint=not track.closed)
        ds = self._s[1] - self._s[0]
        kappa = np.abs(track.curvature_at(self._s))
        v = np.minimum(v_max, np.sqrt(lat_cap / np.maximum(kappa, 1e-9)))

        sweeps = 2 if track.closed else 1
        for _ in range(sweeps):
            for i in reversed(range(n)):
                j = (i + 1) % n
                if not track.closed and j == 0:
                    continue
                decel = abs(float(ax_min(v[j])))
                v[i] = min(v[i], np.sqrt(v[j] ** 2 + 2.0 * decel * ds))
        for _ in range(sweeps):
            for i in range(n):
                j = (i - 1) % n
                if not track.closed and i == 0:
                    continue
                accel = float(ax_max(v[j]))
                v[i] = min(v[i], np.sqrt(v[j] ** 2 + 2.0 * accel * ds))
        self._v = v

    def __call__(self, s: float | np.ndarray) -> np.ndarray:
        s = np.mod(s, self._track.length) if self._track.closed \
            else np.clip(s, 0.0, self._track.length)
        if self._track.closed:
            xp = np.append(self._s, self._track.length)
            fp = np.append(self._v, self._v[0])
        else:
            xp, fp = self._s, self._v
        return np.interp(s, xp, fp)


@dataclass(frozen=True)
class PlannerConfig:
    horizon: float = 3.0
    dt: float = 0.2
    replan: float = 0.2
    iterations: int = 6          # gradient-improvement passes per plan
    step_size: float = 0.25      # initial command change per accepted step, m/s^2
    w_progress: float = 1.0      # per meter of arc advance
    w_lat: float = 0.5           # per m^2 of centerline offset
    w_slide: float = 0.5         # per (m/s)^2 of sideslip speed
    w_effort: float = 1e-4       # per (m/s^2)^2 s of command effort
    w_bounds: float = 200.0      # off-track / obstacle hinge weight
    track_margin: float = 1.0    # keep the CoG this far inside the edge, m
    obstacle_margin: float = 0.81  # disc inflation: half the vehicle width, m
    v_max: float = 45.0
    profile_margin: float = 0.9  # lateral-cap fraction kept for yaw authority

    def __post_init__(self) -> None:
        if self.dt <= 0.0 or self.horizon < 0.0 or self.replan <= 0.0:
            raise ValueError("horizon, dt and replan must be positive")
        if self.iterations < 0:
            raise ValueError("iterations must be nonnegative")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))


@dataclass
class PlanResult:
    controls: np.ndarray         # (N, 3) feasible acceleration commands
    states: np.ndarray           # (N+1, 6) predicted trajectory
    objective: float
    violations: dict[str, float] = field(default_factory=dict)


def _rollout(xi0: np.ndarray, accels: np.ndarray, dt: float) -> np.ndarray:
    """Integrate command sequences; accels (..., N, 3) -> states (..., N+1, 6)."""
    accels = np.asarray(accels, dtype=float)
    n = accels.shape[-2]
    states = np.empty(accels.shape[:-2] + (n + 1, 6))
    states[..., 0, :] = xi0
    for k in range(n):
        states[..., k + 1, :] = plan_step_states(states[..., k, :],
                                                 accels[..., k, :], dt)
    return states


def _progress(track: Track, s: np.ndarray) -> np.ndarray:
    """Unwrapped arc advance along the rows of projected arc lengths."""
    ds = np.diff(s, axis=-1)
    if track.closed:
        ds = np.mod(ds + 0.5 * track.length, track.length) - 0.5 * track.length
    return np.sum(ds, axis=-1)


def _objective_batch(track: Track, obstacles: list[Obstacle],
                     cfg: PlannerConfig, states: np.ndarray,
                     accels: np.ndarray) -> np.ndarray:
    """Cost of predicted trajectories; lower is better.  states (B, N+1, 6)."""
    b, n1 = states.shape[0], states.shape[1]
    pos = states[..., :2].reshape(-1, 2)
    s, lat = track.project(pos)
    s = s.reshape(b, n1)
    lat = lat.reshape(b, n1)

    cost = -cfg.w_progress * _progress(track, s)
    cost = cost + cfg.w_lat * np.sum(lat[:, 1:] ** 2, axis=1)
    # The envelope is fitted around straight running; discourage plans that
    # build up sideslip it was never sampled at.
    cost = cost + cfg.w_slide * np.sum(states[..., 1:, 4] ** 2, axis=-1)
    cost = cost + cfg.w_effort * cfg.dt * np.sum(accels ** 2, axis=(1, 2))
    edge = np.maximum(np.abs(lat[:, 1:]) - (track.half_width - cfg.track_margin),
                      0.0)
    cost = cost + cfg.w_bounds * np.sum(edge ** 2, axis=1)
    for ob in obstacles:
        d = np.linalg.norm(states[..., :2] - ob.center, axis=-1)
        pen = np.maximum(ob.radius + cfg.obstacle_margin + AVOID_CLEARANCE - d,
                         0.0)
        cost = cost + cfg.w_bounds * np.sum(pen ** 2, axis=1)
    return cost


def _violation_report(track: Track, obstacles: list[Obstacle],
                      cfg: PlannerConfig, states: np.ndarray) -> dict[str, float]:
    """Worst boundary penetrations of a predicted trajectory, in meters."""
    _, lat = track.project(states[:, :2])
    report = {}
    off = float(np.max(np.abs(lat)) - track.half_width)
    if off > 0.0:
        report["track"] = off
    for i, ob in enumerate(obstacles):
        d = np.linalg.norm(states[:, :2] - ob.center, axis=-1)
        pen = float(ob.radius + cfg.obstacle_margin - np.min(d))
        if pen > 0.0:
            report[f"obstacle_{i}"] = pen
    return report


_YAW_RESERVE = 1.5   # yaw demand honored before lateral fills the envelope


def _clamp_command(env: EnvelopeModel, a: np.ndarray, v_x: float) -> np.ndarray:
    """Cheap feasible clamp for feedback commands (not the nearest point).

    Longitudinal demand wins, then yaw up to a reserve, then lateral takes
    what the ellipse and the rows leave.  Saturated lateral must not pin the
    yaw channel: at the full steady cap the coupling rows leave no room to
    shed an overshooting yaw rate, which turns a transient into a spiral.
    """
    a_x = float(np.clip(a[0], env.ax_min(v_x), env.ax_max(v_x)))
    a_psi_req = float(np.clip(a[2], -_YAW_RESERVE, _YAW_RESERVE))
    cap_lo = -env.beta * np.sqrt(max(1.0 - (a_x / env.alpha) ** 2, 0.0))
    cap_hi = -cap_lo
    for row, b in zip(env.a_rows, env.b):
        if abs(row[1]) < 1e-12:
            continue
        used = row[0] * a_x + row[2] * a_psi_req
        bound = (b - used) / row[1]
        if row[1] > 0:
            cap_hi = min(cap_hi, bound)
        else:
            cap_lo = max(cap_lo, bound)
    a_y = float(np.clip(a[1], cap_lo, cap_hi))
    lo_psi, hi_psi = -np.inf, np.inf
    for row, b in zip(env.a_rows, env.b):
        if abs(row[2]) < 1e-12:
            continue
        bound = (b - row[1] * a_y) / row[2]
        if row[2] > 0:
            hi_psi = min(hi_psi, bound)
        else:
            lo_psi = max(lo_psi, bound)
    return np.array([a_x, a_y, float(np.clip(a[2], lo_psi, hi_psi))])


def _avoidance_offset(track: Track, obstacles: list[Obstacle],
                      cfg: PlannerConfig, s: float, lat: float,
                      v_x: float) -> float:
    """Lateral target shift around the nearest blocking obstacle ahead.

    A head-on disc leaves the centerline objective at a symmetric saddle, so
    the warm start has to commit to a side; gradient refinement then has a
    basin to descend into.
    """
    look = max(v_x, 1.0) * 1.5 + 5.0
    target = 0.0
    best = np.inf
    for ob in obstacles:
        s_ob, lat_ob = track.project(ob.center)
        gap = s_ob - s
        if track.closed:
            gap = np.mod(gap, track.length)
        if not 0.0 <= gap <= look or gap >= best:
            continue
        clear = ob.radius + cfg.obstacle_margin + AVOID_CLEARANCE
        if abs(lat - lat_ob) >= clear:
            continue
        room = track.half_width - cfg.track_margin
        side = np.sign(lat - lat_ob)
        if side == 0.0 or abs(lat_ob + side * clear) > room:
            side = -np.sign(lat_ob) if lat_ob != 0.0 else 1.0
        best = gap
        target = np.clip(lat_ob + side * clear, -room, room)
    return target


def _reference_controls(xi0: np.ndarray, track: Track,
                        obstacles: list[Obstacle], env: EnvelopeModel,
                        profile: TrackSpeedProfile, cfg: PlannerConfig,
                        n: int) -> np.ndarray:
    """Feedback warm start: track the speed profile along the centerline.

    Curvature and target speed are read ahead of the vehicle so yaw-rate
    buildup and braking start before a corner rather than inside it.
    """
    k_v, k_head, k_rate, k_vy, k_off = 2.0, 1.8, 3.5, 2.0, 1.0
    preview = 0.4   # s
    controls = np.empty((n, 3))
    state = np.asarray(xi0, dtype=float).copy()
    for k in range(n):
        s, lat = track.project(state[:2])
        tang = track.tangent_at(s)
        v_x, v_y, v_psi = state[3], state[4], state[5]
        ahead = s + max(v_x, 1.0) * preview
        a_x = np.clip(k_v * (profile(ahead) - v_x),
                      env.ax_min(v_x), env.ax_max(v_x))
        offset = lat - _avoidance_offset(track, obstacles, cfg, s, lat, v_x)
        correction = np.arctan2(-k_off * offset, max(v_x, 3.0))
        head_err = _wrap_angle(state[2] - np.arctan2(tang[1], tang[0])
                               - correction)
        rate_des = v_x * track.curvature_at(ahead) - k_head * head_err
        a = np.array([a_x, v_psi * v_x - k_vy * v_y,
                      k_rate * (rate_des - v_psi)])
        controls[k] = _clamp_command(env, a, v_x)
        state = plan_step_states(state, controls[k], cfg.dt)
    return controls


def plan_step(xi0: np.ndarray, track: Track, obstacles: list[Obstacle],
              env: EnvelopeModel, cfg: PlannerConfig = PlannerConfig(),
              profile: TrackSpeedProfile | None = None) -> PlanResult:
    """Plan a feasible command sequence maximizing progress along the track.

    A feedback warm start is refined by projected-gradient descent on the
    progress/offset/effort objective; every returned command satisfies
    ``is_feasible`` at its predicted speed.
    """
    xi0 = np.asarray(xi0, dtype=float).reshape(6)
    n = cfg.n_steps
    if n == 0:
        return PlanResult(np.empty((0, 3)), xi0.reshape(1, 6), 0.0)
    if profile is None:
        profile = TrackSpeedProfile(track,
                                    cfg.profile_margin * lateral_cap(env),
                                    env.ax_min, env.ax_max, cfg.v_max)

    accels = _reference_controls(xi0, track, obstacles, env, profile, cfg, n)
    states = _rollout(xi0, accels, cfg.dt)
    cost = float(_objective_batch(track, obstacles, cfg,
                                  states[None], accels[None])[0])

    step = cfg.step_size
    h = 1e-3
    for _ in range(cfg.iterations):
        # Central-difference gradient over all command entries in one batch.
        basis = np.eye(3 * n).reshape(3 * n, n, 3)
        probes = np.concatenate([accels[None] + h * basis,
                                 accels[None] - h * basis])
        costs = _objective_batch(track, obstacles, cfg,
                                 _rollout(xi0, probes, cfg.dt), probes)
        grad = ((costs[: 3 * n] - costs[3 * n:]) / (2.0 * h)).reshape(n, 3)
        scale = np.max(np.abs(grad))
        if scale < 1e-12:
            break
        direction = grad / scale   # step is then a command change in m/s^2

        improved = False
        for _ in range(6):
            cand = accels - step * direction
            cand = project_feasible_many(env, cand.reshape(-1, 3),
                                         states[:-1, 3], tol=1e-7).reshape(n, 3)
            cand_states = _rollout(xi0, cand, cfg.dt)
            cand_cost = float(_objective_batch(track, obstacles, cfg,
                                               cand_states[None],
                                               cand[None])[0])
            if cand_cost < cost - 1e-12:
                accels, states, cost = cand, cand_states, cand_cost
                step = min(step * 1.5, 4.0 * cfg.step_size)
                improved = True
                break
            step *= 0.5
        if not improved:
            break

    # Projection used the pre-step speeds; re-project against the final
    # rollout until the speed-dependent a_X bounds agree.
    for _ in range(5):
        accels = project_feasible_many(env, accels.reshape(-1, 3),
                                       states[:-1, 3], tol=1e-7).reshape(n, 3)
        states = _rollout(xi0, accels, cfg.dt)
        reports = [is_feasible(env, accels[k], states[k, 3], tol=FEAS_CHECK_TOL)
                   for k in range(n)]
        if all(reports):
            break
    else:
        worst = min((r.worst for r in reports), key=lambda kv: kv[1])
        raise PlanError(f"command sequence stuck infeasible ({worst[0]})",
                        accels, {worst[0]: worst[1]})

    cost = float(_objective_batch(track, obstacles, cfg,
                                  states[None], accels[None])[0])
    return PlanResult(accels, states, cost,
                      _violation_report(track, obstacles, cfg, states))


def kinematic_bicycle_step(state: np.ndarray, control: np.ndarray,
                           params: VehicleParams, dt: float) -> np.ndarray:
    """RK4 step of the kinematic bicycle; state (X, Y, psi, v), control (accel, delta)."""
    accel, delta = float(control[0]), float(control[1])
    slip = np.arctan(params.l_r * np.tan(delta) / params.wheelbase)

    def deriv(x):
        return np.array([x[3] * np.cos(x[2] + slip),
                         x[3] * np.sin(x[2] + slip),
                         x[3] * np.sin(slip) / params.l_r,
                         accel])

    x = np.asarray(state, dtype=float)
    k1 = deriv(x)
    k2 = deriv(x + 0.5 * dt * k1)
    k3 = deriv(x + 0.5 * dt * k2)
    k4 = deriv(x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@dataclass(frozen=True)
class BicycleConfig:
    """Baseline tracker bounds; comfort-level lateral cap for profile safety."""

    accel_min: float = -9.3
    accel_max: float = 4.3
    delta_max: float = 0.5235987755982988
    lat_cap: float = 4.9
    v_max: float = 45.0


def _bicycle_policy(state: np.ndarray, track: Track,
                    profile: TrackSpeedProfile, params: VehicleParams,
                    cfg: BicycleConfig) -> np.ndarray:
    """Pure-pursuit steering plus profile speed tracking, clipped to bounds."""
    s, _ = track.project(state[:2])
    v = state[3]
    accel = np.clip(2.0 * (profile(s) - v), cfg.accel_min, cfg.accel_max)
    lookahead = np.clip(0.6 * v, 4.0, 15.0)
    target = track.point_at(s + lookahead)
    alpha = _wrap_angle(np.arctan2(target[1] - state[1],
                                   target[0] - state[0]) - state[2])
    delta = np.arctan(2.0 * params.wheelbase * np.sin(alpha) / lookahead)
    return np.array([accel, np.clip(delta, -cfg.delta_max, cfg.delta_max)])


@dataclass
class PlanLog:
    """Closed-loop record: one row per tick, plus predicted horizons."""

    model: str
    replan: float
    t: np.ndarray
    states: np.ndarray           # (n, 6)
    controls: np.ndarray         # (n, 3)
    solve_ms: np.ndarray
    lat_err: np.ndarray
    predicted: list[np.ndarray]
    lap_time: float | None = None
    failures: int = 0

    CSV_COLUMNS = ("t", "X", "Y", "psi", "v_x", "v_y", "v_psi",
                   "u_x", "u_y", "u_psi", "solve_ms", "lat_err")

    def __len__(self) -> int:
        return len(self.t)

    def save(self, path) -> None:
        table = np.column_stack([self.t, self.states, self.controls,
                                 self.solve_ms, self.lat_err])
        np.savetxt(path, table, fmt="%.9g", delimiter=",",
                   header=",".join(self.CSV_COLUMNS), comments="")


def run_closed_loop(model: str, track: Track, obstacles: list[Obstacle],
                    env: EnvelopeModel, params: VehicleParams,
                    ticks: int = 400, cfg: PlannerConfig = PlannerConfig(),
                    bike_cfg: BicycleConfig = BicycleConfig(),
                    v_x0: float = 0.0) -> PlanLog:
    """Drive the track with the chosen planner until a lap or the tick budget.

    The plant is the planner's own model.  Planning failures hold the
    previous command and are tallied on the log.
    """
    if model not in ("envelope", "bicycle"):
        raise ValueError(f"unknown planner model {model!r}")
    start = track.point_at(0.0)
    tang = track.tangent_at(0.0)
    psi0 = float(np.arctan2(tang[1], tang[0]))

    if model == "envelope":
        profile = TrackSpeedProfile(track,
                                    cfg.profile_margin * lateral_cap(env),
                                    env.ax_min, env.ax_max, cfg.v_max)
        state = np.array([start[0], start[1], psi0, v_x0, 0.0, 0.0])
    else:
        profile = TrackSpeedProfile(track, bike_cfg.lat_cap,
                                    lambda v: bike_cfg.accel_min,
                                    lambda v: bike_cfg.accel_max,
                                    bike_cfg.v_max)
        state = np.array([start[0], start[1], psi0, v_x0])

    rows_t, rows_x, rows_u, rows_ms, rows_lat, predicted = [], [], [], [], [], []
    prev_u = np.zeros(3)
    failures = 0
    lap_time = None
    s_prev, _ = track.project(state[:2])
    travelled = 0.0

    for tick in range(ticks):
        t_now = tick * cfg.replan
        begin = time.perf_counter()
        if model == "envelope":
            try:
                res = plan_step(state, track, obstacles, env, cfg, profile)
                u = res.controls[0]
                horizon = res.states
            except PlanError:
                u = prev_u
                horizon = state.reshape(1, 6)
                failures += 1
        else:
            u2 = _bicycle_policy(state, track, profile, params, bike_cfg)
            u = np.array([u2[0], u2[1], 0.0])
            horizon = state.reshape(1, -1)
        elapsed_ms = (time.perf_counter() - begin) * 1e3

        s_here, lat_here = track.project(state[:2])
        rows_t.append(t_now)
        rows_x.append(_log_state(state, model))
        rows_u.append(u.copy())
        rows_ms.append(elapsed_ms)
        rows_lat.append(lat_here)
        predicted.append(horizon)
        prev_u = u

        if model == "envelope":
            state = plan_step_states(state, u, cfg.replan)
        else:
            state = kinematic_bicycle_step(state, u[:2], params, cfg.replan)

        s_now, _ = track.project(state[:2])
        ds = s_now - s_prev
        if track.closed:
            ds = (ds + 0.5 * track.length) % track.length - 0.5 * track.length
        travelled += ds
        s_prev = s_now
        if track.closed and travelled >= track.length:
            lap_time = (tick + 1) * cfg.replan
            break
        if not track.closed and s_now >= track.length - 1e-6:
            lap_time = (tick + 1) * cfg.replan
            break

    return PlanLog(model=model, replan=cfg.replan, t=np.array(rows_t),
                   states=np.array(rows_x), controls=np.array(rows_u),
                   solve_ms=np.array(rows_ms), lat_err=np.array(rows_lat),
                   predicted=predicted, lap_time=lap_time, failures=failures)


def _log_state(state: np.ndarray, model: str) -> np.ndarray:
    if model == "envelope":
        return state.copy()
    # Bicycle states carry no v_y or yaw rate; pad the log columns with zeros.
    return np.array([state[0], state[1], state[2], state[3], 0.0, 0.0])


@dataclass(frozen=True)
class Metrics:
    avg_solve_ms: float
    rms_lat_err: float
    max_lat_err: float
    speed_by_arc: np.ndarray     # (m, 2) columns: arc length, speed


def metrics(log: PlanLog, track: Track,
            arc_spacing: float = PROFILE_SPACING) -> Metrics:
    """Summarize a closed-loop log: solve time, lateral error, speed profile."""
    if len(log) == 0:
        raise ValueError("empty log")
    speed = np.hypot(log.states[:, 3], log.states[:, 4])
    s, _ = track.project(log.states[:, :2])
    ds = np.diff(s)
    if track.closed:
        ds = (ds + 0.5 * track.length) % track.length - 0.5 * track.length
    arc = np.concatenate([[s[0]], s[0] + np.cumsum(ds)])
    grid = np.arange(arc[0], arc[-1], arc_spacing)
    profile = np.column_stack([grid, np.interp(grid, arc, speed)]) \
        if len(grid) else np.empty((0, 2))
    return Metrics(avg_solve_ms=float(np.mean(log.solve_ms)),
                   rms_lat_err=float(np.sqrt(np.mean(log.lat_err ** 2))),
                   max_lat_err=float(np.max(np.abs(log.lat_err))),
                   speed_by_arc=profile)
