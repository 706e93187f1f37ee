"""Vehicle and tyre parameter sets, plus the YAML loader for them."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

GRAVITY = 9.81  # m/s^2


class ConfigError(ValueError):
    """Raised when a configuration file is missing, malformed, or inconsistent."""


@dataclass(frozen=True)
class TireParams:
    """Magic-formula coefficients shared by all four wheels.

    Pure-slip curves use F = D * sin(C * arctan(B*s - E*(B*s - arctan(B*s))))
    with D = mu * F_z.  Combined slip scales the longitudinal curve by
    cos(arctan(r_long * alpha)) and the lateral curve by cos(arctan(r_lat * tau)).
    """

    b_long: float = 16.0   # longitudinal stiffness factor
    c_long: float = 1.65   # longitudinal shape factor
    e_long: float = 0.60   # longitudinal curvature factor
    b_lat: float = 9.5     # lateral stiffness factor
    c_lat: float = 1.45    # lateral shape factor
    e_lat: float = -0.80   # lateral curvature factor
    r_long: float = 11.5   # slip-angle sensitivity of the longitudinal weight
    r_lat: float = 15.0    # slip-ratio sensitivity of the lateral weight

    def __post_init__(self) -> None:
        for name in ("b_long", "b_lat", "r_long", "r_lat"):
            if getattr(self, name) <= 0.0:
                raise ConfigError(f"tire parameter {name} must be positive")
        for name in ("c_long", "c_lat"):
            # C in (1, 2) keeps the peak force exactly at D and the curve single-peaked.
            if not 1.0 < getattr(self, name) < 2.0:
                raise ConfigError(f"tire parameter {name} must lie in (1, 2)")
        for name in ("e_long", "e_lat"):
            if getattr(self, name) >= 1.0:
                raise ConfigError(f"tire parameter {name} must be < 1")


@dataclass(frozen=True)
class VehicleParams:
    """Physical parameters of the vehicle body, suspension, and drivetrain.

    Defaults describe the mid-size front-wheel-drive berline used throughout;
    they match the reference file shipped in ``data/berline.yaml``.
    """

    m_total: float = 1820.0   # total mass, kg
    i_x: float = 700.0        # roll inertia, kg m^2
    i_y: float = 3200.0       # pitch inertia, kg m^2
    i_z: float = 3600.0       # yaw inertia, kg m^2
    i_r: float = 1.2          # spin inertia of one wheel, kg m^2
    l_f: float = 1.17         # CoM to front axle, m
    l_r: float = 1.77         # CoM to rear axle, m
    l_w: float = 0.81         # half track width, m
    r_w: float = 0.30         # effective wheel radius, m
    k_s: float = 45000.0      # suspension stiffness per corner, N/m
    d_s: float = 4000.0       # suspension damping per corner, N s/m
    h: float = 0.55           # CoM height used as the moment arm, m
    c_drag: float = 0.38      # aerodynamic drag coefficient, N s^2/m^2
    mu: float = 1.0           # tyre-road friction coefficient
    t_min: float = -1500.0    # lower torque bound per axle command, N m
    t_max: float = 1250.0     # upper torque bound per axle command, N m
    delta_max: float = 0.5235987755982988  # steering bound, rad (30 deg)
    tire: TireParams = field(default_factory=TireParams)

    def __post_init__(self) -> None:
        positive = (
            "m_total", "i_x", "i_y", "i_z", "i_r",
            "l_f", "l_r", "l_w", "r_w", "k_s", "d_s", "h",
        )
        for name in positive:
            if getattr(self, name) <= 0.0:
                raise ConfigError(f"vehicle parameter {name} must be positive")
        if self.c_drag < 0.0:
            raise ConfigError("vehicle parameter c_drag must be non-negative")
        if not 0.0 < self.mu <= 2.0:
            raise ConfigError("friction coefficient mu must lie in (0, 2]")
        if self.t_min >= 0.0 or self.t_max <= 0.0:
            raise ConfigError("torque bounds must satisfy t_min < 0 < t_max")
        if not 0.0 < self.delta_max < 1.2:
            raise ConfigError("steering bound delta_max must lie in (0, 1.2) rad")

    @property
    def wheelbase(self) -> float:
        return self.l_f + self.l_r

    @property
    def static_front_load(self) -> float:
        """Static normal load on one front wheel, N."""
        return self.m_total * GRAVITY * self.l_r / (2.0 * self.wheelbase)

    @property
    def static_rear_load(self) -> float:
        """Static normal load on one rear wheel, N."""
        return self.m_total * GRAVITY * self.l_f / (2.0 * self.wheelbase)


_TIRE_KEYS = {f.name for f in dataclasses.fields(TireParams)}
_VEHICLE_KEYS = {f.name for f in dataclasses.fields(VehicleParams)} - {"tire"}


def load_vehicle_params(path: str | Path) -> VehicleParams:
    """Load a :class:`VehicleParams` from a YAML file.

    The file maps parameter names to numbers, with tyre coefficients nested
    under ``tire``.  Unknown or missing keys raise :class:`ConfigError`.
    """
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"vehicle config not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"vehicle config {path} must be a mapping")

    tire_raw = raw.pop("tire", {})
    if not isinstance(tire_raw, dict):
        raise ConfigError("'tire' section must be a mapping")
    unknown = (set(raw) - _VEHICLE_KEYS) | (set(tire_raw) - _TIRE_KEYS)
    if unknown:
        raise ConfigError(f"unknown vehicle config keys: {sorted(unknown)}")
    missing = (_VEHICLE_KEYS - set(raw)) | (_TIRE_KEYS - set(tire_raw))
    if missing:
        raise ConfigError(f"missing vehicle config keys: {sorted(missing)}")

    try:
        tire = TireParams(**{k: float(v) for k, v in tire_raw.items()})
        return VehicleParams(tire=tire, **{k: float(v) for k, v in raw.items()})
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"non-numeric value in {path}: {exc}") from None


def save_vehicle_params(params: VehicleParams, path: str | Path) -> None:
    """Write ``params`` to YAML in the layout :func:`load_vehicle_params` reads."""
    data = dataclasses.asdict(params)
    tire = data.pop("tire")
    data["tire"] = tire
    Path(path).write_text(yaml.safe_dump(data, sort_keys=False))


def berline_params() -> VehicleParams:
    """Parameters of the reference berline (identical to the class defaults)."""
    return load_vehicle_params(Path(__file__).parent / "data" / "berline.yaml")
