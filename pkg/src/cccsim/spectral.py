"""Data-driven gain synthesis in the frequency domain.

The recorded lead speeds are decomposed into sine components about the
traffic equilibrium (the global mean speed).  The linearized closed loop
maps each lead component through a link transfer function; the weighted
response power

    J = sum_j  omega_j^2 * chi_j^2

is an energy proxy for the controlled vehicle's oscillation, minimized
over the velocity gains inside the plant-stable set.

Sampled-record conventions: with L samples at spacing dt, the analysis
period is L*dt (the record plus one trailing interval, so the discrete
transform is exact), the frequency grid is omega_j = j * 2*pi/(L*dt),
and up to floor(L/2) components are available.  Each series additionally
carries a constant offset (its own mean minus the global equilibrium);
offsets pass through the loop with unit gain at zero frequency and never
contribute to J.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import optimize as sp_optimize

from .controller import ControllerGains, is_plant_stable
from .datasets import TrafficDataset


@dataclass
class SpectralDecomposition:
    v_star: float            # equilibrium speed: global mean of all series [m/s]
    omega: np.ndarray        # (m,) angular frequencies [rad/s]
    components: np.ndarray   # (n, m) complex rho*exp(i*phi) per vehicle and bin [m/s]
    offsets: np.ndarray      # (n,) per-series constant offset about v_star [m/s]
    dt: float                # sample interval of the source record [s]
    t0: float                # first sample time of the source record [s]
    n_samples: int           # length L of the source record

    @property
    def n(self) -> int:
        return self.components.shape[0]

    @property
    def m(self) -> int:
        return self.components.shape[1]

    @property
    def delta_omega(self) -> float:
        return 2.0 * math.pi / (self.n_samples * self.dt)

    def amplitudes(self) -> np.ndarray:
        return np.abs(self.components)

    def phases(self) -> np.ndarray:
        return np.angle(self.components)


def nyquist_limit(n_samples: int) -> int:
    """Largest usable component count for a record of the given length."""
    return n_samples // 2


def decompose(ds: TrafficDataset, m: int | None = None,
              energy_fraction: float | None = None) -> SpectralDecomposition:
    """Sine amplitude/phase decomposition of each speed series about the
    global mean.

    ``m`` requests the leading component count (default: the full limit).
    ``energy_fraction`` optionally truncates further, to the smallest
    leading set capturing at least that fraction of oscillatory power.
    """
    L = ds.n_samples
    m_max = nyquist_limit(L)
    if m is None:
        m = m_max
    elif m > m_max:
        raise ValueError(f"m={m} exceeds the limit {m_max} for {L} samples")
    elif m < 0:
        raise ValueError("m must be non-negative")

    v_star = float(np.mean(ds.speeds))
    period = L * ds.dt
    omega = 2.0 * np.pi / period * np.arange(1, m + 1)

    spectrum = np.fft.rfft(ds.speeds - v_star, axis=1)
    offsets = spectrum[:, 0].real / L
    scale = np.full(m, 2.0 / L)
    if L % 2 == 0 and m == m_max:
        scale[-1] = 1.0 / L  # the half-rate bin appears once, not twice
    # rho*exp(i*phi) with phases referenced to absolute time (sin convention)
    comp = spectrum[:, 1:m + 1] * scale
    comp *= np.exp(1j * (0.5 * np.pi - omega * ds.t0))

    if energy_fraction is not None:
        if not 0.0 < energy_fraction <= 1.0:
            raise ValueError("energy_fraction must be in (0, 1]")
        weights = np.full(m, 0.5)
        if L % 2 == 0 and m == m_max:
            weights[-1] = 1.0
        power = np.sum(np.abs(comp) ** 2 * weights, axis=0)
        total = float(np.sum(power))
        if total > 0.0:
            cum = np.cumsum(power)
            m = int(np.searchsorted(cum, energy_fraction * total - 1e-15) + 1)
            omega, comp = omega[:m], comp[:, :m]

    return SpectralDecomposition(v_star=v_star, omega=omega, components=comp,
                                 offsets=offsets, dt=ds.dt, t0=ds.t0, n_samples=L)


def reconstruct(sd: SpectralDecomposition, t: np.ndarray, vehicle: int) -> np.ndarray:
    """Speed series of one vehicle (1-based index) rebuilt from its components."""
    c = sd.components[vehicle - 1]
    out = np.full_like(np.asarray(t, dtype=float), sd.v_star + sd.offsets[vehicle - 1])
    out += np.abs(c) @ np.sin(np.outer(sd.omega, t) + np.angle(c)[:, None])
    return out


def spectral_power(sd: SpectralDecomposition, vehicle: int) -> float:
    """Mean-square value of one detrended series implied by its components.

    Regular bins contribute rho^2/2; the half-rate bin of an even-length
    record contributes rho^2 (its samples sit on the wave extremes); the
    constant offset contributes its square.
    """
    rho2 = np.abs(sd.components[vehicle - 1]) ** 2
    weights = np.full(sd.m, 0.5)
    if sd.n_samples % 2 == 0 and sd.m == nyquist_limit(sd.n_samples):
        weights[-1] = 1.0
    return float(np.sum(rho2 * weights) + sd.offsets[vehicle - 1] ** 2)


def link_transfer(lam: complex, i: int, gains: ControllerGains) -> complex:
    """Transfer function from vehicle i's speed perturbation to the ego's.

    Vehicle indices are 1-based; i = 1 is the immediate predecessor, whose
    link carries the range-policy term.
    """
    if not 1 <= i <= gains.n:
        raise ValueError(f"vehicle index {i} outside 1..{gains.n}")
    beta_sum = sum(gains.betas)
    den = lam * lam + (gains.alpha + beta_sum) * lam + gains.alpha * gains.kappa
    if i == 1:
        return (gains.alpha * gains.kappa + lam * gains.betas[0]) / den
    return lam * gains.betas[i - 1] / den


def response_spectrum(sd: SpectralDecomposition,
                      gains: ControllerGains) -> np.ndarray:
    """Complex ego-speed components chi_j * exp(i*theta_j) for the given gains."""
    if sd.n != gains.n:
        raise ValueError(f"decomposition has {sd.n} vehicles, gains expect {gains.n}")
    if not is_plant_stable(gains):
        raise ValueError("gains are not plant stable")
    lam = 1j * sd.omega
    ak = gains.alpha * gains.kappa
    den = lam * lam + (gains.alpha + sum(gains.betas)) * lam + ak
    num = ak * sd.components[0] + lam * (np.asarray(gains.betas) @ sd.components)
    return num / den


def objective_J(sd: SpectralDecomposition, gains: ControllerGains) -> float:
    """Frequency-weighted response power: sum of omega^2 * chi^2."""
    chi = np.abs(response_spectrum(sd, gains))
    return float(np.sum(sd.omega ** 2 * chi ** 2))


def beta_lattice(n: int, box: tuple[float, float], step: float) -> np.ndarray:
    """All velocity-gain vectors on the search lattice, in lexicographic order."""
    lo, hi = box
    if hi < lo or step <= 0.0:
        raise ValueError("need box[1] >= box[0] and step > 0")
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    axis = np.round(lo + step * np.arange(count), 12)
    return np.array(list(itertools.product(axis, repeat=n)))


@dataclass
class OptimizeResult:
    gains: ControllerGains          # chosen design
    cost: float                     # J at the chosen design
    method: str
    step: float
    beta_box: tuple[float, float]
    grid_betas: np.ndarray          # (P, n) feasible lattice points, audit copy
    grid_costs: np.ndarray          # (P,) J at each lattice point
    grid_best_betas: tuple[float, ...]
    grid_best_cost: float
    nm_betas: tuple[float, ...] | None = None
    nm_cost: float | None = None


def optimize_gains(sd: SpectralDecomposition, alpha: float, kappa: float,
                   v_max: float, d_st: float,
                   beta_box: tuple[float, float] = (0.0, 2.0),
                   step: float = 0.1, method: str = "grid",
                   eps_margin: float = 1e-6) -> OptimizeResult:
    """Minimize J over the velocity gains, alpha and kappa held fixed.

    The grid method enumerates the lattice (ties broken toward the
    lexicographically smallest vector, so reruns are identical); the
    nelder_mead method refines the grid optimum inside the box, keeping a
    positive stability margin.
    """
    if method not in ("grid", "nelder_mead"):
        raise ValueError(f"unknown method {method!r}")
    if alpha <= eps_margin or kappa <= eps_margin:
        raise ValueError("fixed alpha and kappa must be positive for plant stability")

    lattice = beta_lattice(sd.n, beta_box, step)
    feasible = lattice[lattice.sum(axis=1) + alpha > eps_margin]
    if feasible.shape[0] == 0:
        raise ValueError("no plant-stable point in the search box")

    def cost_of(betas: Sequence[float]) -> float:
        g = ControllerGains(alpha=alpha, kappa=kappa, betas=tuple(betas),
                            v_max=v_max, d_st=d_st)
        return objective_J(sd, g)

    costs = np.array([cost_of(b) for b in feasible])
    best = int(np.argmin(costs))  # first minimum = lexicographically smallest
    grid_best = tuple(float(b) for b in feasible[best])
    grid_cost = float(costs[best])

    chosen, chosen_cost = grid_best, grid_cost
    nm_betas = nm_cost = None
    if method == "nelder_mead":
        lo, hi = beta_box

        def penalized(x: np.ndarray) -> float:
            viol = (np.sum(np.maximum(lo - x, 0.0)) + np.sum(np.maximum(x - hi, 0.0))
                    + max(eps_margin - (alpha + float(np.sum(x))), 0.0))
            if viol > 0.0:
                return 1e30 * (1.0 + viol)
            return cost_of(x)

        res = sp_optimize.minimize(penalized, np.asarray(grid_best),
                                   method="Nelder-Mead",
                                   options={"xatol": 1e-6, "fatol": 1e-12,
                                            "maxiter": 2000})
        refined = np.clip(res.x, lo, hi)
        if alpha + float(np.sum(refined)) > eps_margin:
            refined_cost = cost_of(refined)
            nm_betas = tuple(float(b) for b in refined)
            nm_cost = float(refined_cost)
            if refined_cost <= grid_cost:
                chosen, chosen_cost = nm_betas, nm_cost

    gains = ControllerGains(alpha=alpha, kappa=kappa, betas=chosen,
                            v_max=v_max, d_st=d_st)
    return OptimizeResult(gains=gains, cost=chosen_cost, method=method, step=step,
                          beta_box=beta_box, grid_betas=feasible, grid_costs=costs,
                          grid_best_betas=grid_best, grid_best_cost=grid_cost,
                          nm_betas=nm_betas, nm_cost=nm_cost)
