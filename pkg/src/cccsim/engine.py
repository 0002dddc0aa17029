"""Closed-loop simulation of the controlled vehicle against recorded traffic.

Each step computes the nominal cruise-control acceleration, optionally
passes it through the barrier safety filter, compensates resistance into
a plant command, and advances the headway/speed state with a fixed-step
integrator.  The command is held constant over the step (the controller
runs discretely); lead speeds are interpolated inside integrator stages.
Speed is clamped at zero, with a diagnostic flag, since the plant model
would otherwise reverse under hard braking.

Energy metrics follow the convention that braking neither consumes nor
recovers energy: consumption integrates v * max(dv/dt + f(v), 0), brake
waste integrates v * max(-dv/dt - f(v), 0), with dv/dt taken from the
recorded plant right-hand side rather than re-differenced.
"""

from __future__ import annotations

from collections.abc import Callable
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .controller import ControllerGains
from .datasets import TrafficDataset
from .dynamics import VehicleParams
from .safety import SafetyParams
from .spectral import beta_lattice, decompose, objective_J

_trapz = getattr(np, "trapezoid", None) or np.trapz


@dataclass
class SimConfig:
    dt_sim: float = 0.01                  # integration step [s]
    integrator: str = "rk4"               # "euler" | "rk4"
    init: str = "equilibrium"             # "equilibrium" | "explicit"
    D0: float | None = None               # initial headway [m] (explicit init)
    v0: float | None = None               # initial speed [m/s] (explicit init)
    filter_enabled: bool = True
    mismatch: float = 1.0                 # nominal resistance-model factor
    accel_estimator: str = "finite_diff_central"  # | "provided"
    accel_smooth_window: int = 3          # moving-average samples; <=1 disables

    def __post_init__(self):
        if self.dt_sim <= 0.0:
            raise ValueError("dt_sim must be positive")
        if self.integrator not in ("euler", "rk4"):
            raise ValueError(f"unknown integrator {self.integrator!r}")
        if self.init not in ("equilibrium", "explicit"):
            raise ValueError(f"unknown initial condition {self.init!r}")
        if self.accel_estimator not in ("finite_diff_central", "provided"):
            raise ValueError(f"unknown accel estimator {self.accel_estimator!r}")


@dataclass
class SimTrace:
    t: np.ndarray            # (L,) sample times [s]
    D: np.ndarray            # (L,) headway [m]
    v: np.ndarray            # (L,) ego speed [m/s]
    lead_speeds: np.ndarray  # (L, n) lead speeds fed to the controller [m/s]
    a_nominal: np.ndarray    # (L,) controller output before the filter [m/s^2]
    a_safe: np.ndarray       # (L,) post-filter desired acceleration [m/s^2]
    u_sat: np.ndarray        # (L,) applied command after saturation [m/s^2]
    accel: np.ndarray        # (L,) plant dv/dt = -f(v) + u_sat [m/s^2]
    resist: np.ndarray       # (L,) resistance f(v) [m/s^2]
    h: np.ndarray            # (L,) barrier value [m]
    a1: np.ndarray           # (L,) clamped lead-accel estimate at the filter [m/s^2]
    filter_active: np.ndarray      # (L,) bool: filter lowered the command
    saturation_active: np.ndarray  # (L,) bool: saturation altered the command
    cbf_truncated: np.ndarray      # (L,) bool: plant could not deliver the filter's braking
    v_clamped: np.ndarray          # (L,) bool: integrator clamped speed at zero


@dataclass
class Metrics:
    w: float          # energy consumption per unit mass [kJ/kg]
    w_brake: float    # brake-wasted energy per unit mass [kJ/kg]
    h_neg_pct: float  # share of samples with h < 0 [%]
    h_margin: float   # integral of max(-h, 0) over time [m*s]
    crash: bool       # headway reached zero at some sample


class StepRecord(NamedTuple):
    lead_speeds: tuple
    a_nominal: float
    a_safe: float
    u_sat: float
    accel: float
    resist: float
    h: float
    a1: float
    filter_active: bool
    saturation_active: bool
    cbf_truncated: bool
    v_clamped: bool


def interpolate_lead(ds: TrafficDataset, t: float) -> tuple[np.ndarray, float | None]:
    """Piecewise-linear lead speeds at time t, plus the nearest vehicle's
    position when the dataset carries positions."""
    if not ds.t0 - 1e-9 <= t <= ds.tf + 1e-9:
        raise ValueError(f"t={t} outside the dataset window [{ds.t0}, {ds.tf}]")
    x = (t - ds.t0) / ds.dt
    j = int(x)
    last = ds.n_samples - 1
    if j < 0:
        j = 0
    if j >= last:
        speeds = ds.speeds[:, last].copy()
        s1 = None if ds.positions is None else float(ds.positions[0, last])
        return speeds, s1
    r = x - j
    speeds = ds.speeds[:, j] + r * (ds.speeds[:, j + 1] - ds.speeds[:, j])
    s1 = None
    if ds.positions is not None:
        s1 = float(ds.positions[0, j] + r * (ds.positions[0, j + 1] - ds.positions[0, j]))
    return speeds, s1


def moving_average(x: np.ndarray, window: int) -> np.ndarray:
    """Centered moving average with edge-truncated windows (stays a convex
    combination, so lower bounds on x are preserved)."""
    if window <= 1:
        return np.asarray(x, dtype=float).copy()
    half = window // 2
    csum = np.concatenate(([0.0], np.cumsum(x)))
    n = len(x)
    lo = np.maximum(np.arange(n) - half, 0)
    hi = np.minimum(np.arange(n) + half + 1, n)
    return (csum[hi] - csum[lo]) / (hi - lo)


def estimate_lead_accel(ds: TrafficDataset, smooth_window: int = 3) -> np.ndarray:
    """Lead acceleration from the nearest vehicle's speed samples: central
    differences inside, one-sided at the ends, optional smoothing."""
    v1 = ds.speeds[0]
    if len(v1) < 3:
        raise ValueError("need at least 3 samples to estimate acceleration")
    a = np.empty_like(v1)
    a[1:-1] = (v1[2:] - v1[:-2]) / (2.0 * ds.dt)
    a[0] = (v1[1] - v1[0]) / ds.dt
    a[-1] = (v1[-1] - v1[-2]) / ds.dt
    return moving_average(a, smooth_window)


def _loop_params(ds: TrafficDataset, gains: ControllerGains, sp: SafetyParams,
                 vp: VehicleParams, cfg: SimConfig,
                 lead_accel: np.ndarray | None) -> tuple:
    """Hoist everything the per-step core needs into plain Python values."""
    n_used = gains.n
    if n_used > ds.n:
        raise ValueError(f"gains expect {n_used} lead vehicles, dataset has {ds.n}")
    leads = [ds.speeds[i].tolist() for i in range(n_used)]
    if cfg.accel_estimator == "provided":
        if lead_accel is None:
            raise ValueError("accel_estimator='provided' requires a lead_accel series")
        a1_series = np.asarray(lead_accel, dtype=float)
        if a1_series.shape != (ds.n_samples,):
            raise ValueError("lead_accel must have one value per dataset sample")
    else:
        a1_series = estimate_lead_accel(ds, cfg.accel_smooth_window)
    a1_list = np.maximum(a1_series, -sp.a_lead).tolist()
    return (ds.t0, ds.dt, ds.n_samples - 1, leads, a1_list, n_used,
            gains.alpha, gains.kappa, gains.betas, gains.v_max, gains.d_st,
            sp.tau, sp.a_ego, sp.a_lead, sp.gamma,
            vp.m * vp.g_const * vp.zeta / vp.m_eff, vp.k_air / vp.m_eff,
            vp.u_s_min, vp.u_s_max, vp.m1, vp.b1, vp.m2, vp.b2,
            cfg.mismatch, cfg.filter_enabled, cfg.integrator == "rk4")


def _step_core(D: float, v: float, t: float, dt: float, P: tuple
               ) -> tuple[float, float, StepRecord]:
    """One controller evaluation plus (for dt > 0) one integrator step.

    Scalar Python arithmetic throughout; this runs millions of times in
    sweeps and refinement studies.  The formulas mirror the dynamics,
    controller and safety modules exactly.
    """
    (t0d, dtd, last, leads, a1_list, n_used,
     alpha, kappa, betas, v_max, d_st,
     tau, a_ego, a_lead, gamma,
     f_roll, f_air, u_s_min, u_s_max, m1, b1, m2, b2,
     mismatch, filter_enabled, use_rk4) = P

    x = (t - t0d) / dtd
    j = int(x)
    if j < 0:
        j = 0
    if j >= last:
        j, r = last - 1, 1.0
    else:
        r = x - j

    # nominal controller
    vd = kappa * (D - d_st)
    if vd < 0.0:
        vd = 0.0
    elif vd > v_max:
        vd = v_max
    a_d = alpha * (vd - v)
    lead_now = []
    for i in range(n_used):
        s = leads[i]
        s0 = s[j]
        vi = s0 + r * (s[j + 1] - s0)
        lead_now.append(vi)
        a_d += betas[i] * ((vi if vi < v_max else v_max) - v)
    v1 = lead_now[0]

    # stopping envelope, barrier, filter (branch logic mirrors safety.py)
    excess = v - a_ego * tau
    if a_ego <= a_lead:
        in_headway = v1 >= (a_lead / a_ego) ** 0.5 * excess
        matched = False
    else:
        in_headway = v1 >= excess
        matched = (not in_headway) and v1 >= (a_lead / a_ego) * excess
    if in_headway:
        B = v * tau
        dB_dv, dB_dv1 = tau, 0.0
    elif matched:
        gap = excess - v1
        B = v * tau + gap * gap / (2.0 * (a_ego - a_lead))
        slope = gap / (a_ego - a_lead)
        dB_dv, dB_dv1 = tau + slope, -slope
    else:
        B = v * tau + excess * excess / (2.0 * a_ego) - v1 * v1 / (2.0 * a_lead)
        dB_dv, dB_dv1 = tau + excess / a_ego, -v1 / a_lead

    h = D - B
    a1s = a1_list[j]
    a1t = a1s + r * (a1_list[j + 1] - a1s)
    filter_active = False
    a_safe = a_d
    if filter_enabled:
        a_cbf = (v1 - v - dB_dv1 * a1t + gamma * h) / dB_dv
        if a_cbf < a_d:
            a_safe = a_cbf
            filter_active = True

    # lower-level command and saturation at the sample point
    fv = f_roll + f_air * v * v
    u_cmd = mismatch * fv + a_safe
    u_max = u_s_max
    c = m1 * v + b1
    if c < u_max:
        u_max = c
    c = m2 * v + b2
    if c < u_max:
        u_max = c
    u_sat = u_cmd
    if u_sat < u_s_min:
        u_sat = u_s_min
    elif u_sat > u_max:
        u_sat = u_max
    sat_active = u_sat != u_cmd
    accel = -fv + u_sat
    truncated = filter_active and u_sat < u_cmd

    D_next, v_next, clamped = D, v, False
    if dt > 0.0:
        if use_rk4:
            # stages inlined: this path runs millions of times per sweep
            half = 0.5 * dt
            lead0 = leads[0]
            xq = (t + half - t0d) / dtd
            jq = int(xq)
            if jq < 0:
                jq = 0
            if jq >= last:
                v1_mid = lead0[last]
            else:
                s0 = lead0[jq]
                v1_mid = s0 + (xq - jq) * (lead0[jq + 1] - s0)
            xq = (t + dt - t0d) / dtd
            jq = int(xq)
            if jq < 0:
                jq = 0
            if jq >= last:
                v1_end = lead0[last]
            else:
                s0 = lead0[jq]
                v1_end = s0 + (xq - jq) * (lead0[jq + 1] - s0)

            k1d = v1 - (v if v > 0.0 else 0.0)
            k1v = accel

            va = v + half * k1v
            vc_ = va if va > 0.0 else 0.0
            um = u_s_max
            cc = m1 * vc_ + b1
            if cc < um:
                um = cc
            cc = m2 * vc_ + b2
            if cc < um:
                um = cc
            us = u_cmd
            if us < u_s_min:
                us = u_s_min
            elif us > um:
                us = um
            k2d = v1_mid - vc_
            k2v = -(f_roll + f_air * vc_ * vc_) + us

            va = v + half * k2v
            vc_ = va if va > 0.0 else 0.0
            um = u_s_max
            cc = m1 * vc_ + b1
            if cc < um:
                um = cc
            cc = m2 * vc_ + b2
            if cc < um:
                um = cc
            us = u_cmd
            if us < u_s_min:
                us = u_s_min
            elif us > um:
                us = um
            k3d = v1_mid - vc_
            k3v = -(f_roll + f_air * vc_ * vc_) + us

            va = v + dt * k3v
            vc_ = va if va > 0.0 else 0.0
            um = u_s_max
            cc = m1 * vc_ + b1
            if cc < um:
                um = cc
            cc = m2 * vc_ + b2
            if cc < um:
                um = cc
            us = u_cmd
            if us < u_s_min:
                us = u_s_min
            elif us > um:
                us = um
            k4d = v1_end - vc_
            k4v = -(f_roll + f_air * vc_ * vc_) + us

            D_next = D + dt / 6.0 * (k1d + 2.0 * (k2d + k3d) + k4d)
            v_next = v + dt / 6.0 * (k1v + 2.0 * (k2v + k3v) + k4v)
        else:
            D_next = D + dt * (v1 - (v if v > 0.0 else 0.0))
            v_next = v + dt * accel
        if v_next < 0.0:
            v_next, clamped = 0.0, True

    rec = StepRecord(tuple(lead_now), a_d, a_safe, u_sat, accel, fv, h, a1t,
                     filter_active, sat_active, truncated, clamped)
    return D_next, v_next, rec


def step(state: tuple[float, float], t: float, ds: TrafficDataset,
         gains: ControllerGains, sp: SafetyParams, vp: VehicleParams,
         cfg: SimConfig, lead_accel: np.ndarray | None = None
         ) -> tuple[tuple[float, float], StepRecord]:
    """Advance (D, v) by one cfg.dt_sim interval; returns the next state and
    the per-step record evaluated at the current time."""
    P = _loop_params(ds, gains, sp, vp, cfg, lead_accel)
    D_next, v_next, rec = _step_core(state[0], state[1], t, cfg.dt_sim, P)
    return (D_next, v_next), rec


def run_scenario(ds: TrafficDataset, gains: ControllerGains, sp: SafetyParams,
                 vp: VehicleParams, cfg: SimConfig,
                 lead_accel: np.ndarray | None = None
                 ) -> tuple[SimTrace, Metrics]:
    """Integrate the closed loop over the dataset window and compute metrics.

    The equilibrium initial condition matches the lead's starting speed
    and places the headway on the range policy's linear segment, so a
    constant-speed lead produces no motion of the error state.
    """
    if cfg.dt_sim > ds.dt + 1e-12:
        raise ValueError("dt_sim must not exceed the dataset sample interval")
    span = ds.tf - ds.t0
    n_steps = int(round(span / cfg.dt_sim))
    if abs(n_steps * cfg.dt_sim - span) > 1e-6 * span:
        raise ValueError("dataset window is not a whole number of dt_sim steps")

    P = _loop_params(ds, gains, sp, vp, cfg, lead_accel)
    if cfg.init == "equilibrium":
        v = float(ds.speeds[0, 0])
        D = gains.d_st + v / gains.kappa
    else:
        if cfg.D0 is None or cfg.v0 is None:
            raise ValueError("explicit initial condition requires D0 and v0")
        D, v = float(cfg.D0), float(cfg.v0)

    L = n_steps + 1
    n_used = gains.n
    t_arr = ds.t0 + cfg.dt_sim * np.arange(L)
    D_arr = np.empty(L)
    v_arr = np.empty(L)
    lead_arr = np.empty((L, n_used))
    a_nom = np.empty(L)
    a_safe = np.empty(L)
    u_sat = np.empty(L)
    accel = np.empty(L)
    resist = np.empty(L)
    h_arr = np.empty(L)
    a1_arr = np.empty(L)
    filt = np.empty(L, dtype=bool)
    sat = np.empty(L, dtype=bool)
    trunc = np.empty(L, dtype=bool)
    clamp = np.empty(L, dtype=bool)

    t0, dt = ds.t0, cfg.dt_sim
    for k in range(L):
        step_dt = dt if k < n_steps else 0.0
        D_arr[k] = D
        v_arr[k] = v
        D, v, rec = _step_core(D, v, t0 + k * dt, step_dt, P)
        lead_arr[k] = rec.lead_speeds
        a_nom[k] = rec.a_nominal
        a_safe[k] = rec.a_safe
        u_sat[k] = rec.u_sat
        accel[k] = rec.accel
        resist[k] = rec.resist
        h_arr[k] = rec.h
        a1_arr[k] = rec.a1
        filt[k] = rec.filter_active
        sat[k] = rec.saturation_active
        trunc[k] = rec.cbf_truncated
        clamp[k] = rec.v_clamped

    trace = SimTrace(t=t_arr, D=D_arr, v=v_arr, lead_speeds=lead_arr,
                     a_nominal=a_nom, a_safe=a_safe, u_sat=u_sat, accel=accel,
                     resist=resist, h=h_arr, a1=a1_arr, filter_active=filt,
                     saturation_active=sat, cbf_truncated=trunc, v_clamped=clamp)
    return trace, compute_metrics(trace)


def energy_w(trace: SimTrace) -> float:
    """Consumed energy per unit mass [kJ/kg], trapezoidal quadrature."""
    return float(_trapz(trace.v * np.maximum(trace.accel + trace.resist, 0.0),
                        trace.t)) / 1e3


def energy_brake(trace: SimTrace) -> float:
    """Brake-wasted energy per unit mass [kJ/kg]."""
    return float(_trapz(trace.v * np.maximum(-trace.accel - trace.resist, 0.0),
                        trace.t)) / 1e3


def h_violation_pct(trace: SimTrace) -> float:
    """Share of trace samples with a negative barrier value [%]."""
    return 100.0 * float(np.count_nonzero(trace.h < 0.0)) / len(trace.h)


def h_margin(trace: SimTrace) -> float:
    """Integrated barrier violation, integral of max(-h, 0) dt [m*s]."""
    return float(_trapz(np.maximum(-trace.h, 0.0), trace.t))


def compute_metrics(trace: SimTrace) -> Metrics:
    return Metrics(w=energy_w(trace), w_brake=energy_brake(trace),
                   h_neg_pct=h_violation_pct(trace), h_margin=h_margin(trace),
                   crash=bool(np.any(trace.D <= 0.0)))


def plant_step(D: float, v: float, t: float, dt: float, u_cmd: float,
               v1_of_t: Callable[[float], float], vp: VehicleParams,
               method: str = "rk4", substeps: int = 1) -> tuple[float, float]:
    """Advance the plant one interval under a held command.

    ``substeps`` refines the integration of the same held command, which
    isolates integrator accuracy from the command hold.  Speed is clamped
    at zero like in the closed-loop stepper.
    """
    f_roll = vp.m * vp.g_const * vp.zeta / vp.m_eff
    f_air = vp.k_air / vp.m_eff

    def rhs(v_):
        vc = v_ if v_ > 0.0 else 0.0
        um = min(vp.u_s_max, vp.m1 * vc + vp.b1, vp.m2 * vc + vp.b2)
        us = min(max(u_cmd, vp.u_s_min), um)
        return -(f_roll + f_air * vc * vc) + us

    hstep = dt / substeps
    for i in range(substeps):
        ti = t + i * hstep
        if method == "rk4":
            half = 0.5 * hstep
            k1d = v1_of_t(ti) - max(v, 0.0)
            k1v = rhs(v)
            vmid = v1_of_t(ti + half)
            va = v + half * k1v
            k2d, k2v = vmid - max(va, 0.0), rhs(va)
            vb = v + half * k2v
            k3d, k3v = vmid - max(vb, 0.0), rhs(vb)
            vc_ = v + hstep * k3v
            k4d, k4v = v1_of_t(ti + hstep) - max(vc_, 0.0), rhs(vc_)
            D += hstep / 6.0 * (k1d + 2.0 * (k2d + k3d) + k4d)
            v += hstep / 6.0 * (k1v + 2.0 * (k2v + k3v) + k4v)
        else:
            D += hstep * (v1_of_t(ti) - max(v, 0.0))
            v += hstep * rhs(v)
        if v < 0.0:
            v = 0.0
    return D, v


@dataclass
class SweepEntry:
    betas: tuple[float, ...]
    score: float              # w [kJ/kg] or J, per the sweep objective
    metrics: Metrics | None   # populated for simulated sweeps


@dataclass
class SweepResult:
    objective: str
    entries: list[SweepEntry]     # ranked, best first; ties keep lattice order
    best: ControllerGains


def _simulate_one(args) -> Metrics:
    ds, betas, alpha, kappa, v_max, d_st, sp, vp, cfg = args
    gains = ControllerGains(alpha=alpha, kappa=kappa, betas=betas,
                            v_max=v_max, d_st=d_st)
    return run_scenario(ds, gains, sp, vp, cfg)[1]


def grid_sweep(ds: TrafficDataset, alpha: float, kappa: float, v_max: float,
               d_st: float, beta_box: tuple[float, float], step: float,
               sp: SafetyParams, vp: VehicleParams, cfg: SimConfig,
               objective: str = "w", workers: int = 1,
               eps_margin: float = 1e-6, n_vehicles: int | None = None
               ) -> SweepResult:
    """Evaluate every plant-stable lattice point and rank it.

    objective "w" simulates each candidate and ranks by consumed energy;
    objective "J" ranks by the spectral cost (no simulation).  Results
    are merged in lattice order before ranking, so the outcome does not
    depend on the worker count.
    """
    if objective not in ("w", "J"):
        raise ValueError(f"unknown sweep objective {objective!r}")
    n = n_vehicles if n_vehicles is not None else ds.n
    lattice = beta_lattice(n, beta_box, step)
    feasible = [tuple(float(b) for b in row) for row in lattice
                if alpha + float(np.sum(row)) > eps_margin]
    if not feasible:
        raise ValueError("no plant-stable point in the search box")

    entries: list[SweepEntry] = []
    if objective == "J":
        sd = decompose(ds.first(n))
        for betas in feasible:
            g = ControllerGains(alpha=alpha, kappa=kappa, betas=betas,
                                v_max=v_max, d_st=d_st)
            entries.append(SweepEntry(betas, objective_J(sd, g), None))
    else:
        tasks = [(ds, betas, alpha, kappa, v_max, d_st, sp, vp, cfg)
                 for betas in feasible]
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(_simulate_one, tasks, chunksize=4))
        else:
            results = [_simulate_one(task) for task in tasks]
        for betas, metrics in zip(feasible, results):
            entries.append(SweepEntry(betas, metrics.w, metrics))

    order = sorted(range(len(entries)), key=lambda i: (entries[i].score, i))
    ranked = [entries[i] for i in order]
    best = ControllerGains(alpha=alpha, kappa=kappa, betas=ranked[0].betas,
                           v_max=v_max, d_st=d_st)
    return SweepResult(objective=objective, entries=ranked, best=best)
