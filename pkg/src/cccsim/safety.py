"""Barrier-based safety filter for the car-following loop.

Safety means keeping the headway above a minimum time headway, D >= v*tau,
through a worst-case simultaneous braking event in which the ego decelerates
at a_ego and the lead at a_lead (both stored as positive magnitudes).  The
barrier is

    h(D, v, v1) = D - B(v, v1)

where B is the stopping envelope: the smallest initial gap for which the
worst-case braking maneuver never dips below the time-headway line.  B is
piecewise, because the minimum gap can occur at brake onset, while both
vehicles decelerate, or after the lead has already stopped:

  * lead fast enough      -> B = v*tau
  * lead stops first      -> B = v*tau + (v - a_ego*tau)^2/(2 a_ego) - v1^2/(2 a_lead)
  * matched-speed minimum -> B = v*tau + (v - a_ego*tau - v1)^2 / (2 (a_ego - a_lead))
                             (only possible when a_ego > a_lead)

The active branch is selected by comparing v1 with the boundary speeds
returned by :func:`lead_speed_boundaries`.  The filter itself is the
min-type override

    a_safe = min(a_nominal, a_cbf)

with a_cbf the largest acceleration that keeps h decaying no faster than
the linear class-K rate gamma*h.  Because dB/dv >= tau > 0 on every
branch, the single-input quadratic program behind the filter reduces to
exactly this closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .dynamics import VehicleParams, resistance

# Active-branch labels for the stopping envelope.
BRANCH_TIME_HEADWAY = "time_headway"
BRANCH_FULL_STOP = "full_stop"
BRANCH_MATCHED_SPEED = "matched_speed"


@dataclass(frozen=True)
class SafetyParams:
    tau: float = 1.0      # minimum time headway [s]
    a_ego: float = 6.0    # worst-case ego braking magnitude [m/s^2]
    a_lead: float = 4.0   # worst-case lead braking magnitude [m/s^2]
    gamma: float = 1.0    # class-K gain [1/s]

    def __post_init__(self):
        if min(self.tau, self.a_ego, self.a_lead, self.gamma) <= 0.0:
            raise ValueError("all safety parameters must be positive")


def lead_speed_boundaries(v: float, sp: SafetyParams) -> tuple[float, float, float]:
    """Lead speeds at which the active envelope branch changes, for ego speed v.

    Returns (split_weaker, onset, split_stronger):

    * split_weaker   = sqrt(a_lead/a_ego) * (v - a_ego*tau), the single split
                       used when a_ego <= a_lead;
    * onset          = v - a_ego*tau, above which the minimum gap occurs at
                       brake onset (a_ego > a_lead case);
    * split_stronger = (a_lead/a_ego) * (v - a_ego*tau), below which the lead
                       reaches standstill before the ego (a_ego > a_lead case).
    """
    excess = v - sp.a_ego * sp.tau
    return (math.sqrt(sp.a_lead / sp.a_ego) * excess, excess,
            (sp.a_lead / sp.a_ego) * excess)


def envelope_branch(v: float, v1: float, sp: SafetyParams) -> str:
    """Which branch of the stopping envelope is active at (v, v1).

    Boundaries belong to the branch whose closed condition includes them:
    v1 equal to the upper split selects the time-headway branch, v1 equal
    to the lower split (stronger-ego case) selects the matched-speed
    branch.  At the lower split the envelope is continuously
    differentiable, so either adjacent form gives the same value and
    gradient there.
    """
    split_weaker, onset, split_stronger = lead_speed_boundaries(v, sp)
    if sp.a_ego <= sp.a_lead:
        return BRANCH_TIME_HEADWAY if v1 >= split_weaker else BRANCH_FULL_STOP
    if v1 >= onset:
        return BRANCH_TIME_HEADWAY
    if v1 >= split_stronger:
        return BRANCH_MATCHED_SPEED
    return BRANCH_FULL_STOP


def branch_value(branch: str, v: float, v1: float, sp: SafetyParams) -> float:
    """Evaluate one envelope branch formula regardless of where it is active."""
    if branch == BRANCH_TIME_HEADWAY:
        return v * sp.tau
    excess = v - sp.a_ego * sp.tau
    if branch == BRANCH_FULL_STOP:
        return v * sp.tau + excess * excess / (2.0 * sp.a_ego) - v1 * v1 / (2.0 * sp.a_lead)
    if branch == BRANCH_MATCHED_SPEED:
        gap = excess - v1
        return v * sp.tau + gap * gap / (2.0 * (sp.a_ego - sp.a_lead))
    raise ValueError(f"unknown branch {branch!r}")


def branch_gradient(branch: str, v: float, v1: float,
                    sp: SafetyParams) -> tuple[float, float]:
    """(dB/dv, dB/dv1) of one envelope branch formula."""
    if branch == BRANCH_TIME_HEADWAY:
        return sp.tau, 0.0
    excess = v - sp.a_ego * sp.tau
    if branch == BRANCH_FULL_STOP:
        return sp.tau + excess / sp.a_ego, -v1 / sp.a_lead
    if branch == BRANCH_MATCHED_SPEED:
        slope = (excess - v1) / (sp.a_ego - sp.a_lead)
        return sp.tau + slope, -slope
    raise ValueError(f"unknown branch {branch!r}")


def stopping_envelope(v: float, v1: float, sp: SafetyParams) -> float:
    """Worst-case-braking minimum safe gap B(v, v1) [m].  B >= v*tau always."""
    return branch_value(envelope_branch(v, v1, sp), v, v1, sp)


def barrier(D: float, v: float, v1: float, sp: SafetyParams) -> float:
    """Barrier value h = D - B(v, v1); h >= 0 implies D >= v*tau."""
    return D - stopping_envelope(v, v1, sp)


def envelope_gradient(v: float, v1: float, sp: SafetyParams) -> tuple[float, float]:
    """(dB/dv, dB/dv1) of the active branch; dB/dv >= tau > 0 everywhere."""
    return branch_gradient(envelope_branch(v, v1, sp), v, v1, sp)


def cbf_acceleration(D: float, v: float, v1: float, a1: float,
                     sp: SafetyParams) -> float:
    """Largest ego acceleration that keeps the barrier decaying no faster
    than -gamma*h, given the current lead acceleration a1."""
    dB_dv, dB_dv1 = envelope_gradient(v, v1, sp)
    return (v1 - v - dB_dv1 * a1
            + sp.gamma * (D - stopping_envelope(v, v1, sp))) / dB_dv


def safety_filter(a_nominal: float, D: float, v: float, v1: float, a1: float,
                  sp: SafetyParams) -> float:
    """min(a_nominal, a_cbf): transparent whenever the nominal command is safe."""
    return min(a_nominal, cbf_acceleration(D, v, v1, a1, sp))


def lead_accel_bound_ok(a1_series: Sequence[float], sp: SafetyParams) -> bool:
    """True if a recorded lead-acceleration series respects the assumed
    worst case, min(a1) >= -a_lead (bound inclusive)."""
    return min(a1_series) >= -sp.a_lead


def braking_consistent(sp: SafetyParams, vp: VehicleParams) -> bool:
    """Check that the plant can deliver the assumed worst-case ego braking.

    Full brake yields dv/dt = u_s_min - f(v) <= u_s_min, so commanding
    a_ego is feasible whenever a_ego <= |u_s_min| + f(0).
    """
    return sp.a_ego <= -vp.u_s_min + resistance(0.0, vp)
