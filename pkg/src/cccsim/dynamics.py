"""Longitudinal plant model of the controlled vehicle.

State is (D, v): distance headway to the immediate predecessor and ego
speed.  The plant is

    dD/dt = v1 - v
    dv/dt = -f(v) + sat(u, v)

where f(v) lumps rolling and air resistance (normalized by effective
mass) and sat(u, v) clips the acceleration command to brake and
speed-dependent powertrain limits.  A lower-level loop compensates the
resistance so an upper-level desired acceleration is tracked when the
actuators are not saturated.  All quantities SI.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class VehicleParams:
    """Plant constants.  Defaults are typical passenger-car magnitudes."""

    m: float = 1500.0       # vehicle mass [kg]
    m_eff: float = 1500.0   # effective mass incl. rotating inertia [kg]
    zeta: float = 0.01      # rolling-resistance coefficient [-]
    k_air: float = 0.45     # air-resistance coefficient [kg/m]
    g_const: float = 9.81   # gravitational constant [m/s^2]
    u_s_min: float = -7.0   # maximum braking command, negative [m/s^2]
    u_s_max: float = 3.0    # acceleration cap [m/s^2]
    m1: float = -0.05       # first power-limit line, slope [1/s]
    b1: float = 4.0         # first power-limit line, intercept [m/s^2]
    m2: float = -0.15       # second power-limit line, slope [1/s]
    b2: float = 6.0         # second power-limit line, intercept [m/s^2]
    length_l: float = 5.0   # vehicle length [m]

    def __post_init__(self):
        if not (self.m_eff >= self.m > 0.0):
            raise ValueError("require m_eff >= m > 0")
        if self.zeta < 0.0 or self.k_air < 0.0:
            raise ValueError("resistance coefficients must be non-negative")
        if not (self.u_s_min < 0.0 < self.u_s_max):
            raise ValueError("require u_s_min < 0 < u_s_max")


def resistance(v: float, params: VehicleParams) -> float:
    """Resistance deceleration f(v) = (m*g*zeta + k_air*v^2) / m_eff [m/s^2]."""
    if v < 0.0:
        raise ValueError(f"speed must be non-negative, got {v}")
    return (params.m * params.g_const * params.zeta + params.k_air * v * v) / params.m_eff


def accel_upper_limit(v: float, params: VehicleParams) -> float:
    """Speed-dependent acceleration ceiling: min of the cap and two power-limit lines."""
    if v < 0.0:
        raise ValueError(f"speed must be non-negative, got {v}")
    return min(params.u_s_max, params.m1 * v + params.b1, params.m2 * v + params.b2)


def saturate(u: float, v: float, params: VehicleParams) -> float:
    """Clip command u into [u_s_min, accel_upper_limit(v)]."""
    return min(max(u, params.u_s_min), accel_upper_limit(v, params))


def lower_level_command(a_d: float, v: float, params: VehicleParams,
                        mismatch: float = 1.0) -> float:
    """Command that tracks desired acceleration a_d by pre-compensating resistance.

    ``mismatch`` scales the nominal resistance model: 1 is perfect
    knowledge, 0 disables compensation entirely.
    """
    return mismatch * resistance(v, params) + a_d


def plant_derivative(D: float, v: float, v1: float, u: float,
                     params: VehicleParams) -> tuple[float, float]:
    """Right-hand side (dD/dt, dv/dt) for headway D, ego speed v, lead speed v1."""
    return v1 - v, -resistance(v, params) + saturate(u, v, params)


def powertrain_headroom_ok(params: VehicleParams, v_max: float) -> bool:
    """True if the acceleration ceiling stays positive on [0, v_max].

    The ceiling is a min of affine functions, hence concave, so checking
    the interval endpoints suffices.
    """
    return accel_upper_limit(0.0, params) > 0.0 and accel_upper_limit(v_max, params) > 0.0
