import numpy as np
import pytest

from cccsim import (ControllerGains, TrafficDataset, decompose, link_transfer,
                    multi_tone_dataset, nyquist_limit, objective_J,
                    optimize_gains, reconstruct, response_spectrum,
                    spectral_power)
from cccsim.spectral import SpectralDecomposition, beta_lattice


def two_tone_dataset(n_samples=1501, dt=0.1):
    return multi_tone_dataset(v_star=14.0, bins=[4, 9], amps=[1.5, 0.7],
                              phases=[0.3, 1.2], n_samples=n_samples, dt=dt)


def test_constant_series_has_no_components():
    ds = TrafficDataset(dt=0.1, t0=0.0, speeds=np.full((2, 300), 7.5))
    sd = decompose(ds)
    assert sd.v_star == pytest.approx(7.5)
    assert np.max(np.abs(sd.components)) < 1e-12
    assert np.max(np.abs(sd.offsets)) < 1e-12


def test_single_tone_recovered():
    # 2*sin(omega*t) with omega on an analysis bin near 0.2 rad/s
    n, dt = 3142, 0.1
    omega = 2.0 * np.pi * 10 / (n * dt)
    t = dt * np.arange(n)
    ds = TrafficDataset(dt=dt, t0=0.0, speeds=(10.0 + 2.0 * np.sin(omega * t))[None, :])
    sd = decompose(ds)
    rho = np.abs(sd.components[0])
    j = int(np.argmax(rho))
    assert sd.v_star == pytest.approx(10.0, abs=1e-9)
    assert sd.omega[j] == pytest.approx(omega)
    assert abs(omega - 0.2) < 1e-3
    assert rho[j] == pytest.approx(2.0, abs=1e-9)
    assert np.max(np.delete(rho, j)) < 1e-6


@pytest.mark.parametrize("n_samples", [100, 101])
def test_full_reconstruction_and_power(n_samples, rng):
    # both record parities: exact rebuild and power bookkeeping
    speeds = 12.0 + rng.uniform(-3.0, 3.0, size=(2, n_samples))
    ds = TrafficDataset(dt=0.25, t0=5.0, speeds=speeds)
    sd = decompose(ds)
    assert sd.m == nyquist_limit(n_samples)
    t = ds.times()
    for i in (1, 2):
        rebuilt = reconstruct(sd, t, i)
        np.testing.assert_allclose(rebuilt, speeds[i - 1], rtol=1e-9, atol=1e-9)
        ms = float(np.mean((speeds[i - 1] - sd.v_star) ** 2))
        assert spectral_power(sd, i) == pytest.approx(ms, rel=1e-9)


def test_requested_components_and_truncation():
    ds = two_tone_dataset()
    sd5 = decompose(ds, m=5)
    assert sd5.m == 5 and len(sd5.omega) == 5
    with pytest.raises(ValueError):
        decompose(ds, m=nyquist_limit(ds.n_samples) + 1)
    # both tones sit at bins 4 and 9, so 99.9% of power needs exactly 9 bins
    sd_trunc = decompose(ds, energy_fraction=0.999)
    assert sd_trunc.m == 9


def test_link_transfer_dc_gains(gains):
    g3 = ControllerGains(betas=(0.5, 0.3, 0.2))
    assert link_transfer(0.0, 1, g3) == pytest.approx(1.0)
    assert link_transfer(0.0, 2, g3) == 0.0
    assert link_transfer(0.0, 3, g3) == 0.0
    with pytest.raises(ValueError):
        link_transfer(0.0, 2, gains)


def test_link_transfer_hand_value(gains):
    # independent complex arithmetic for alpha=0.4, kappa=0.6, beta=0.5 at 1 rad/s
    num = complex(0.4 * 0.6, 1.0 * 0.5)
    den = complex(-1.0 + 0.4 * 0.6, (0.4 + 0.5) * 1.0)
    expected = abs(num / den)
    got = abs(link_transfer(1j, 1, gains))
    assert got == pytest.approx(expected, rel=1e-12)
    assert got == pytest.approx(0.4709, abs=2e-4)


def test_link_transfer_rolls_off(gains):
    g3 = ControllerGains(betas=(0.5, 0.3, 0.2))
    for i in (1, 2, 3):
        mags = [abs(link_transfer(1j * w, i, g3)) for w in (10.0, 100.0, 1000.0)]
        assert mags[0] > mags[1] > mags[2]
        assert mags[2] < 1e-2


def test_response_linearity_zero_input(gains):
    ds = TrafficDataset(dt=0.1, t0=0.0, speeds=np.full((1, 400), 9.0))
    sd = decompose(ds)
    assert np.max(np.abs(response_spectrum(sd, gains))) < 1e-12


def test_response_single_link_magnitude(gains):
    ds = two_tone_dataset()
    sd = decompose(ds)
    out = np.abs(response_spectrum(sd, gains))
    rho = np.abs(sd.components[0])
    gamma1 = np.array([abs(link_transfer(1j * w, 1, gains)) for w in sd.omega])
    np.testing.assert_allclose(out, gamma1 * rho, rtol=1e-9, atol=1e-12)


def test_response_destructive_combination():
    # tune beta_2 for equal link magnitudes, then phase the second
    # component to cancel the first exactly
    alpha, kappa, beta1, omega = 0.4, 0.6, 0.5, 0.7
    beta2 = abs(complex(alpha * kappa, omega * beta1)) / omega
    g = ControllerGains(alpha=alpha, kappa=kappa, betas=(beta1, beta2))
    c1 = 1.3 * np.exp(0.4j)
    g1 = link_transfer(1j * omega, 1, g)
    g2 = link_transfer(1j * omega, 2, g)
    c2 = -g1 * c1 / g2
    assert abs(c2) == pytest.approx(abs(c1), rel=1e-12)
    sd = SpectralDecomposition(v_star=12.0, omega=np.array([omega]),
                               components=np.array([[c1], [c2]]),
                               offsets=np.zeros(2), dt=0.1, t0=0.0, n_samples=1000)
    chi = np.abs(response_spectrum(sd, g))
    assert chi[0] < 1e-12


def test_objective_zero_and_single_tone(gains):
    flat = TrafficDataset(dt=0.1, t0=0.0, speeds=np.full((1, 500), 11.0))
    assert objective_J(decompose(flat), gains) == pytest.approx(0.0, abs=1e-20)

    n, dt, b, rho = 2001, 0.1, 12, 1.5
    ds = multi_tone_dataset(v_star=15.0, bins=[b], amps=[rho], phases=[0.5],
                            n_samples=n, dt=dt)
    sd = decompose(ds)
    omega = 2.0 * np.pi * b / (n * dt)
    expected = omega ** 2 * rho ** 2 * abs(link_transfer(1j * omega, 1, gains)) ** 2
    assert objective_J(sd, gains) == pytest.approx(expected, rel=1e-9)


def test_objective_quadratic_scaling(gains):
    ds = two_tone_dataset()
    doubled = TrafficDataset(dt=ds.dt, t0=ds.t0,
                             speeds=14.0 + 2.0 * (ds.speeds - 14.0))
    assert objective_J(decompose(doubled), gains) == pytest.approx(
        4.0 * objective_J(decompose(ds), gains), rel=1e-9)


def test_objective_time_shift_invariant(gains):
    ds = two_tone_dataset()
    shifted = TrafficDataset(dt=ds.dt, t0=ds.t0 + 37.0, speeds=ds.speeds.copy())
    assert objective_J(decompose(shifted), gains) == pytest.approx(
        objective_J(decompose(ds), gains), rel=1e-12)


def test_objective_rejects_unstable_gains(gains):
    sd = decompose(two_tone_dataset())
    with pytest.raises(ValueError):
        objective_J(sd, ControllerGains(alpha=0.4, kappa=0.6, betas=(-0.5,)))


def test_beta_lattice_shape():
    lat = beta_lattice(1, (0.0, 2.0), 0.1)
    assert lat.shape == (21, 1)
    assert lat[3, 0] == 0.3
    lat2 = beta_lattice(2, (0.0, 0.2), 0.1)
    assert [tuple(r) for r in lat2] == [(0.0, 0.0), (0.0, 0.1), (0.0, 0.2),
                                        (0.1, 0.0), (0.1, 0.1), (0.1, 0.2),
                                        (0.2, 0.0), (0.2, 0.1), (0.2, 0.2)]


def test_optimize_degenerate_ties_pick_smallest():
    flat = TrafficDataset(dt=0.1, t0=0.0, speeds=np.full((2, 400), 10.0))
    res = optimize_gains(decompose(flat), alpha=0.4, kappa=0.6,
                         v_max=30.0, d_st=5.0)
    assert res.gains.betas == (0.0, 0.0)
    assert res.cost == 0.0


def test_optimize_matches_bruteforce_oracle():
    n, dt, b, rho = 2001, 0.1, 12, 1.5
    ds = multi_tone_dataset(v_star=15.0, bins=[b], amps=[rho], phases=[0.5],
                            n_samples=n, dt=dt)
    res = optimize_gains(decompose(ds), alpha=0.4, kappa=0.6, v_max=30.0, d_st=5.0)

    omega = 2.0 * np.pi * b / (n * dt)
    best_beta, best_cost = None, np.inf
    for k in range(21):
        beta = round(0.1 * k, 12)
        num = complex(0.4 * 0.6, omega * beta)
        den = complex(-omega * omega + 0.4 * 0.6, (0.4 + beta) * omega)
        cost = omega ** 2 * rho ** 2 * abs(num / den) ** 2
        if cost < best_cost:
            best_beta, best_cost = beta, cost
    assert res.gains.betas == (best_beta,)
    assert res.cost == pytest.approx(best_cost, rel=1e-9)


def test_optimize_grid_vs_nelder_mead():
    ds = multi_tone_dataset(v_star=14.0, bins=[3, 7, 13], amps=[2.0, 1.0, 0.6],
                            phases=[0.0, 0.9, 2.1], n_samples=1201, dt=0.1,
                            n_vehicles=3, lead_time=2.0)
    sd = decompose(ds)
    grid = optimize_gains(sd, alpha=0.4, kappa=0.6, v_max=30.0, d_st=5.0,
                          method="grid")
    nm = optimize_gains(sd, alpha=0.4, kappa=0.6, v_max=30.0, d_st=5.0,
                        method="nelder_mead")
    assert nm.nm_betas is not None
    assert nm.nm_cost <= grid.cost + 1e-12
    for b_nm, b_grid in zip(nm.nm_betas, grid.gains.betas):
        assert abs(b_nm - b_grid) <= 0.1 + 1e-9


def test_optimize_deterministic():
    ds = two_tone_dataset()
    sd = decompose(ds)
    r1 = optimize_gains(sd, alpha=0.4, kappa=0.6, v_max=30.0, d_st=5.0)
    r2 = optimize_gains(sd, alpha=0.4, kappa=0.6, v_max=30.0, d_st=5.0)
    assert r1.gains.betas == r2.gains.betas
    assert r1.cost == r2.cost
    np.testing.assert_array_equal(r1.grid_costs, r2.grid_costs)


def test_optimize_rejects_bad_fixed_gains():
    sd = decompose(two_tone_dataset())
    with pytest.raises(ValueError):
        optimize_gains(sd, alpha=0.0, kappa=0.6, v_max=30.0, d_st=5.0)
    with pytest.raises(ValueError):
        optimize_gains(sd, alpha=0.4, kappa=0.6, v_max=30.0, d_st=5.0,
                       beta_box=(-3.0, -2.0))
