"""Planar 9-DOF vehicle body model with per-wheel combined-slip tyre forces.

State layout (14 components, SI units, angles in rad):

====  ==========  =================================================
idx   name        meaning
====  ==========  =================================================
0     X           ground-frame position
1     Y           ground-frame position
2     psi         yaw angle
3     theta       roll angle
4     phi         pitch angle
5     v_x         body-frame longitudinal velocity
6     v_y         body-frame lateral velocity
7     psi_dot     yaw rate
8     theta_dot   roll rate
9     phi_dot     pitch rate
10-13 omega       wheel spin speeds, order FL, FR, RL, RR
====  ==========  =================================================

Wheels are numbered 1 = front-left, 2 = front-right, 3 = rear-left,
4 = rear-right; the body y axis points left.  All core routines broadcast
over leading batch dimensions, so a whole bank of rollouts advances in one
call.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .params import GRAVITY, VehicleParams

STATE_DIM = 14

IX_X, IX_Y, IX_PSI, IX_THETA, IX_PHI = 0, 1, 2, 3, 4
IX_VX, IX_VY, IX_DPSI, IX_DTHETA, IX_DPHI = 5, 6, 7, 8, 9
IX_OMEGA = slice(10, 14)

# Below this contact speed the slip ratio is treated as zero (standstill guard).
STANDSTILL_EPS = 1e-3
# Slip-angle denominators are saturated at this magnitude, keeping their sign.
SLIP_DEN_FLOOR = 0.5


class DynamicsError(RuntimeError):
    """Raised when the model produces a non-finite intermediate quantity."""


@dataclass
class Control:
    """Constant control input: per-wheel axle torques and front steering."""

    t_front: float = 0.0  # torque on each front wheel, N m
    t_rear: float = 0.0   # torque on each rear wheel, N m (braking only in sampling)
    delta: float = 0.0    # front steering angle, rad

    def as_array(self) -> np.ndarray:
        return np.array([self.t_front, self.t_rear, self.delta], dtype=float)


@dataclass
class BodyState:
    """Full body state; see the module docstring for conventions."""

    x: float = 0.0
    y: float = 0.0
    psi: float = 0.0
    theta: float = 0.0
    phi: float = 0.0
    v_x: float = 0.0
    v_y: float = 0.0
    psi_dot: float = 0.0
    theta_dot: float = 0.0
    phi_dot: float = 0.0
    omega: np.ndarray = field(default_factory=lambda: np.zeros(4))

    def as_array(self) -> np.ndarray:
        out = np.empty(STATE_DIM)
        out[:10] = (self.x, self.y, self.psi, self.theta, self.phi,
                    self.v_x, self.v_y, self.psi_dot, self.theta_dot, self.phi_dot)
        out[IX_OMEGA] = self.omega
        return out

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "BodyState":
        arr = np.asarray(arr, dtype=float)
        if arr.shape != (STATE_DIM,):
            raise ValueError(f"expected state of shape ({STATE_DIM},), got {arr.shape}")
        return cls(*arr[:10], omega=arr[IX_OMEGA].copy())

    @classmethod
    def rolling(cls, v_x0: float, v_y0: float, params: VehicleParams,
                psi0: float = 0.0) -> "BodyState":
        """State travelling at (v_x0, v_y0) with all wheels rolling without slip."""
        omega = np.full(4, v_x0 / params.r_w)
        return cls(psi=psi0, v_x=v_x0, v_y=v_y0, omega=omega)


def _wheel_longitudinal_lever(params: VehicleParams) -> float:
    # Equal-magnitude pitch levers keep the total vertical load conserved
    # and reproduce the classical -h*sum(F_x)/L axle transfer exactly.
    return 0.5 * (params.l_f + params.l_r)


def slip_ratio(omega: np.ndarray, v_wheel_long: np.ndarray, r_w: float) -> np.ndarray:
    """Longitudinal slip ratio of a wheel.

    Uses the circumferential speed ``r_w * omega`` against the wheel-frame
    forward contact speed: the larger of the two normalises the difference,
    so driving gives tau > 0 and braking tau < 0.  Output is clipped to
    [-1, 1]; a wheel at standstill reports zero slip.
    """
    omega = np.asarray(omega, dtype=float)
    v = np.asarray(v_wheel_long, dtype=float)
    circ = r_w * omega
    num = circ - v
    den = np.where(circ >= v, circ, v)
    sign = np.where(den < 0.0, -1.0, 1.0)
    den = np.where(np.abs(den) < STANDSTILL_EPS, sign * STANDSTILL_EPS, den)
    tau = np.clip(num / den, -1.0, 1.0)
    standstill = (np.abs(circ) < STANDSTILL_EPS) & (np.abs(v) < STANDSTILL_EPS)
    return np.where(standstill, 0.0, tau)


def _contact_velocities(state: np.ndarray, params: VehicleParams):
    """Body-frame velocity components of the four contact points."""
    wheel_x = np.array([params.l_f, params.l_f, -params.l_r, -params.l_r])
    wheel_y = np.array([params.l_w, -params.l_w, params.l_w, -params.l_w])
    v_px = state[..., IX_VX, None] - state[..., IX_DPSI, None] * wheel_y
    v_py = state[..., IX_VY, None] + state[..., IX_DPSI, None] * wheel_x
    return v_px, v_py


def slip_angles(state: BodyState | np.ndarray, delta: float | np.ndarray,
                params: VehicleParams) -> np.ndarray:
    """Per-wheel slip angles for a given steering angle, order FL, FR, RL, RR."""
    arr = state.as_array() if isinstance(state, BodyState) else np.asarray(state, dtype=float)
    v_px, v_py = _contact_velocities(arr, params)
    delta_w = np.multiply.outer(np.asarray(delta, dtype=float),
                                np.array([1.0, 1.0, 0.0, 0.0]))
    return _slip_angles_from_contact(v_px, v_py, delta_w)


def _slip_angles_from_contact(v_px: np.ndarray, v_py: np.ndarray,
                              delta_w: np.ndarray) -> np.ndarray:
    sign = np.where(v_px < 0.0, -1.0, 1.0)
    den = np.where(np.abs(v_px) < SLIP_DEN_FLOOR, sign * SLIP_DEN_FLOOR, v_px)
    return delta_w - np.arctan(v_py / den)


def suspension_travel(theta: np.ndarray, phi: np.ndarray,
                      params: VehicleParams) -> np.ndarray:
    """Per-wheel suspension compression induced by roll and pitch."""
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    side = np.array([1.0, -1.0, 1.0, -1.0])
    lever = _wheel_longitudinal_lever(params) * np.array([-1.0, -1.0, 1.0, 1.0])
    return side * params.l_w * theta[..., None] + lever * phi[..., None]


def normal_forces(theta: np.ndarray, phi: np.ndarray, theta_dot: np.ndarray,
                  phi_dot: np.ndarray, params: VehicleParams) -> np.ndarray:
    """Vertical tyre loads from the static split plus spring/damper deflection.

    Loads are clamped at zero: a wheel that lifts off carries no force.
    """
    static = np.array([params.static_front_load, params.static_front_load,
                       params.static_rear_load, params.static_rear_load])
    travel = suspension_travel(theta, phi, params)
    rate = suspension_travel(theta_dot, phi_dot, params)
    return np.maximum(static - params.k_s * travel - params.d_s * rate, 0.0)


def _pure_slip(s: np.ndarray, b: float, c: float, e: float) -> np.ndarray:
    """Normalised magic-formula curve, peak value 1."""
    bs = b * s
    return np.sin(c * np.arctan(bs - e * (bs - np.arctan(bs))))


def tire_forces(tau: np.ndarray, alpha: np.ndarray, f_z: np.ndarray, mu: float,
                tire) -> tuple[np.ndarray, np.ndarray]:
    """Combined-slip wheel-frame tyre forces (longitudinal, lateral).

    Each pure-slip curve saturates at mu * F_z; the cosine weights couple
    the two channels so their resultant stays inside the friction circle.
    """
    d = mu * np.asarray(f_z, dtype=float)
    f_x0 = d * _pure_slip(tau, tire.b_long, tire.c_long, tire.e_long)
    f_y0 = d * _pure_slip(alpha, tire.b_lat, tire.c_lat, tire.e_lat)
    weight_x = np.cos(np.arctan(tire.r_long * alpha))
    weight_y = np.cos(np.arctan(tire.r_lat * tau))
    return weight_x * f_x0, weight_y * f_y0


def derivatives_array(state: np.ndarray, control: np.ndarray,
                      params: VehicleParams, check: bool = True) -> np.ndarray:
    """Time derivative of the state; broadcasts over leading dimensions."""
    x = np.asarray(state, dtype=float)
    u = np.asarray(control, dtype=float)
    psi = x[..., IX_PSI]
    theta, phi = x[..., IX_THETA], x[..., IX_PHI]
    v_x, v_y = x[..., IX_VX], x[..., IX_VY]
    dpsi, dtheta, dphi = x[..., IX_DPSI], x[..., IX_DTHETA], x[..., IX_DPHI]
    omega = x[..., IX_OMEGA]
    delta = u[..., 2]

    delta_w = delta[..., None] * np.array([1.0, 1.0, 0.0, 0.0])
    cos_d, sin_d = np.cos(delta_w), np.sin(delta_w)
    v_px, v_py = _contact_velocities(x, params)
    v_wheel_long = v_px * cos_d + v_py * sin_d

    tau = slip_ratio(omega, v_wheel_long, params.r_w)
    alpha = _slip_angles_from_contact(v_px, v_py, delta_w)
    f_z = normal_forces(theta, phi, dtheta, dphi, params)
    f_xw, f_yw = tire_forces(tau, alpha, f_z, params.mu, params.tire)

    # Rotate wheel-frame forces into the body frame (rears have delta = 0).
    f_x = f_xw * cos_d - f_yw * sin_d
    f_y = f_xw * sin_d + f_yw * cos_d
    sum_fx = f_x.sum(axis=-1)
    sum_fy = f_y.sum(axis=-1)

    lever = _wheel_longitudinal_lever(params)
    out = np.empty(np.broadcast_shapes(x.shape, u.shape[:-1] + (STATE_DIM,)))
    out[..., IX_X] = v_x * np.cos(psi) - v_y * np.sin(psi)
    out[..., IX_Y] = v_x * np.sin(psi) + v_y * np.cos(psi)
    out[..., IX_PSI] = dpsi
    out[..., IX_THETA] = dtheta
    out[..., IX_PHI] = dphi
    out[..., IX_VX] = dpsi * v_y + (sum_fx - params.c_drag * v_x * np.abs(v_x)) / params.m_total
    out[..., IX_VY] = -dpsi * v_x + sum_fy / params.m_total
    out[..., IX_DPSI] = (params.l_f * (f_y[..., 0] + f_y[..., 1])
                         - params.l_r * (f_y[..., 2] + f_y[..., 3])
                         + params.l_w * (f_x[..., 1] + f_x[..., 3]
                                         - f_x[..., 0] - f_x[..., 2])) / params.i_z
    out[..., IX_DTHETA] = (params.l_w * (f_z[..., 0] - f_z[..., 1]
                                         + f_z[..., 2] - f_z[..., 3])
                           + params.h * sum_fy) / params.i_x
    out[..., IX_DPHI] = (params.l_r * (f_z[..., 2] + f_z[..., 3])
                         - params.l_f * (f_z[..., 0] + f_z[..., 1])
                         - params.h * sum_fx) / params.i_y
    torque = np.stack([u[..., 0], u[..., 0], u[..., 1], u[..., 1]], axis=-1)
    out[..., IX_OMEGA] = (torque - params.r_w * f_xw) / params.i_r

    if check and not np.isfinite(out).all():
        raise DynamicsError(_diagnose_nonfinite(x, u, params))
    return out


def _diagnose_nonfinite(x: np.ndarray, u: np.ndarray, params: VehicleParams) -> str:
    """Name the first non-finite intermediate, including the wheel index."""
    stages: list[tuple[str, np.ndarray]] = [("state", x), ("control", u)]
    delta_w = u[..., 2, None] * np.array([1.0, 1.0, 0.0, 0.0])
    v_px, v_py = _contact_velocities(x, params)
    with np.errstate(all="ignore"):
        v_wl = v_px * np.cos(delta_w) + v_py * np.sin(delta_w)
        tau = slip_ratio(x[..., IX_OMEGA], v_wl, params.r_w)
        alpha = _slip_angles_from_contact(v_px, v_py, delta_w)
        f_z = normal_forces(x[..., IX_THETA], x[..., IX_PHI],
                            x[..., IX_DTHETA], x[..., IX_DPHI], params)
        f_xw, f_yw = tire_forces(tau, alpha, f_z, params.mu, params.tire)
    stages += [("contact velocity", v_wl), ("slip ratio", tau),
               ("slip angle", alpha), ("normal force", f_z),
               ("longitudinal tyre force", f_xw), ("lateral tyre force", f_yw)]
    for name, val in stages:
        bad = ~np.isfinite(val)
        if bad.any():
            idx = np.argwhere(bad)[0]
            where = f" at index {tuple(int(i) for i in idx)}" if idx.size else ""
            return f"non-finite {name}{where}"
    return "non-finite state derivative (moment or force balance)"


def rk4_step_array(state: np.ndarray, control: np.ndarray, dt: float,
                   params: VehicleParams, check: bool = True) -> np.ndarray:
    """One classical Runge-Kutta step under a constant control."""
    k1 = derivatives_array(state, control, params, check)
    k2 = derivatives_array(state + 0.5 * dt * k1, control, params, check)
    k3 = derivatives_array(state + 0.5 * dt * k2, control, params, check)
    k4 = derivatives_array(state + dt * k3, control, params, check)
    return state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def derivatives(state: BodyState, control: Control,
                params: VehicleParams) -> BodyState:
    """Scalar convenience wrapper; fields of the result hold time derivatives."""
    out = derivatives_array(state.as_array(), control.as_array(), params)
    return BodyState.from_array(out)


def rk4_step(state: BodyState, control: Control, dt: float,
             params: VehicleParams) -> BodyState:
    arr = rk4_step_array(state.as_array(), control.as_array(), dt, params)
    return BodyState.from_array(arr)


def simulate(state0: BodyState | np.ndarray, control: Control | np.ndarray,
             horizon: float, dt: float, params: VehicleParams,
             check: bool = True) -> np.ndarray:
    """Roll the model out under a constant control.

    Returns an array of ``floor(horizon/dt) + 1`` states (the initial state
    included), shaped ``(n_steps + 1, ..., 14)``; row k is the state at
    time k * dt.  Batched initial states and controls broadcast together.
    """
    if dt <= 0.0 or horizon < 0.0:
        raise ValueError("simulate requires dt > 0 and horizon >= 0")
    x = state0.as_array() if isinstance(state0, BodyState) else np.asarray(state0, dtype=float)
    u = control.as_array() if isinstance(control, Control) else np.asarray(control, dtype=float)
    n_steps = int(np.floor(horizon / dt + 1e-9))
    out = np.empty((n_steps + 1,) + np.broadcast_shapes(x.shape, u.shape[:-1] + (STATE_DIM,)))
    out[0] = x
    for k in range(n_steps):
        try:
            out[k + 1] = rk4_step_array(out[k], u, dt, params, check)
        except DynamicsError as exc:
            raise DynamicsError(f"step {k + 1} (t = {(k + 1) * dt:.6g} s): {exc}") from None
    return out
