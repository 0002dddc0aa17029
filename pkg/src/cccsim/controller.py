"""Connected cruise controller: range policy, speed policy, feedback law.

The controller commands a desired acceleration from the headway and the
speeds of n vehicles ahead (n = 1 is plain adaptive cruise control):

    a_d = alpha * (V(D) - v) + sum_i beta_i * (W(v_i) - v)

V maps headway to desired speed (zero below the stopping distance,
linear with gradient kappa, capped at v_max) and W caps observed lead
speeds at v_max.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class ControllerGains:
    alpha: float = 0.4                              # headway gain [1/s]
    kappa: float = 0.6                              # range-policy gradient [1/s]
    betas: tuple[float, ...] = field(default=(0.5,))  # velocity gains beta_1..beta_n [1/s]
    v_max: float = 30.0                             # free-flow speed [m/s]
    d_st: float = 5.0                               # stopping distance [m]

    def __post_init__(self):
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))
        if len(self.betas) < 1:
            raise ValueError("need at least one velocity gain")
        if self.v_max <= 0.0 or self.d_st <= 0.0:
            raise ValueError("require v_max > 0 and d_st > 0")

    @property
    def n(self) -> int:
        return len(self.betas)


def range_policy(D: float, gains: ControllerGains) -> float:
    """Desired speed for headway D: min(v_max, max(0, kappa*(D - d_st)))."""
    return min(gains.v_max, max(0.0, gains.kappa * (D - gains.d_st)))


def speed_policy(v_i: float, gains: ControllerGains) -> float:
    """Cap an observed speed at v_max."""
    return min(gains.v_max, v_i)


def ccc_acceleration(D: float, v: float, lead_speeds: Sequence[float],
                     gains: ControllerGains) -> float:
    """Desired acceleration from headway and the n lead speeds."""
    if len(lead_speeds) != gains.n:
        raise ValueError(
            f"expected {gains.n} lead speeds, got {len(lead_speeds)}")
    a = gains.alpha * (range_policy(D, gains) - v)
    for beta, v_i in zip(gains.betas, lead_speeds):
        a += beta * (speed_policy(v_i, gains) - v)
    return a


def is_plant_stable(gains: ControllerGains) -> bool:
    """Membership in the admissible gain set.

    Requires alpha > 0, kappa > 0 and alpha + sum(betas) > 0, which for
    positive kappa is exactly the condition that both roots of the
    closed-loop characteristic quadratic

        lambda^2 + (alpha + sum(betas)) * lambda + alpha * kappa

    lie in the open left half-plane.
    """
    return (gains.alpha > 0.0 and gains.kappa > 0.0
            and gains.alpha + sum(gains.betas) > 0.0)


def characteristic_roots(gains: ControllerGains) -> np.ndarray:
    """Roots of the closed-loop characteristic quadratic (for cross-checks)."""
    return np.roots([1.0, gains.alpha + sum(gains.betas), gains.alpha * gains.kappa])
