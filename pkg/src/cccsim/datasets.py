"""Recorded lead-vehicle trajectories: container, CSV ingestion, synthesis.

A dataset holds n uniformly sampled speed series for the vehicles ahead
of the controlled one, ordered nearest (index 1) to farthest (index n),
plus optional position series.  The CSV format is one header row

    t, v1, ..., vn [, s1, ..., sn]

with the sample interval inferred from the time column.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

TIME_UNIFORMITY_RTOL = 1e-6


class DatasetError(ValueError):
    """Malformed or inconsistent trajectory data."""


@dataclass
class TrafficDataset:
    dt: float                        # sample interval [s]
    t0: float                        # first sample time [s]
    speeds: np.ndarray               # (n, L) lead speeds [m/s], row 0 = nearest
    positions: np.ndarray | None = None  # (n, L) lead positions [m], optional

    def __post_init__(self):
        self.speeds = np.asarray(self.speeds, dtype=float)
        if self.speeds.ndim != 2:
            raise DatasetError("speeds must be a 2-D array (vehicles x samples)")
        if self.n_samples < 2:
            raise DatasetError("need at least 2 samples per series")
        if self.dt <= 0.0:
            raise DatasetError("sample interval must be positive")
        if np.any(self.speeds < 0.0):
            raise DatasetError("speeds must be non-negative")
        if self.positions is not None:
            self.positions = np.asarray(self.positions, dtype=float)
            if self.positions.shape != self.speeds.shape:
                raise DatasetError("positions must match speeds in shape")

    @property
    def n(self) -> int:
        return self.speeds.shape[0]

    @property
    def n_samples(self) -> int:
        return self.speeds.shape[1]

    @property
    def tf(self) -> float:
        """Last sample time [s]."""
        return self.t0 + (self.n_samples - 1) * self.dt

    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_samples)

    def first(self, n: int) -> "TrafficDataset":
        """Restrict to the n nearest vehicles."""
        if not 1 <= n <= self.n:
            raise DatasetError(f"cannot take {n} of {self.n} vehicles")
        pos = None if self.positions is None else self.positions[:n].copy()
        return TrafficDataset(self.dt, self.t0, self.speeds[:n].copy(), pos)


def load_dataset(path: str | Path) -> TrafficDataset:
    """Parse a trajectory CSV; all validation errors carry the offending row."""
    path = Path(path)
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh)
                if r and not r[0].lstrip().startswith("#")]
    if not rows:
        raise DatasetError(f"{path}: empty file")
    header = [c.strip() for c in rows[0]]
    if not header or header[0] != "t":
        raise DatasetError(f"{path}: first column must be 't'")

    n = 0
    while f"v{n + 1}" in header:
        n += 1
    if n == 0:
        raise DatasetError(f"{path}: missing required column 'v1'")
    for i in range(1, n + 1):
        if header.index(f"v{i}") != i:
            raise DatasetError(f"{path}: speed columns must be t, v1..v{n} in order")
    has_pos = f"s{1}" in header
    expected = 1 + n + (n if has_pos else 0)
    if len(header) != expected:
        raise DatasetError(
            f"{path}: expected columns t, v1..v{n}" + (f", s1..s{n}" if has_pos else "")
            + f"; got {header}")

    data = np.empty((len(rows) - 1, expected))
    for k, row in enumerate(rows[1:], start=2):
        if len(row) != expected:
            raise DatasetError(f"{path}: row {k}: expected {expected} cells, got {len(row)}")
        for j, cell in enumerate(row):
            try:
                val = float(cell)
            except ValueError:
                raise DatasetError(f"{path}: row {k}: cannot parse {cell!r}") from None
            if math.isnan(val):
                raise DatasetError(f"{path}: row {k}: NaN in column '{header[j]}'")
            data[k - 2, j] = val

    t = data[:, 0]
    if len(t) < 2:
        raise DatasetError(f"{path}: need at least 2 data rows")
    step0 = t[1] - t[0]
    if step0 <= 0.0:
        raise DatasetError(f"{path}: row 3: time must be strictly increasing")
    steps = np.diff(t)
    bad = np.nonzero(np.abs(steps - step0) > TIME_UNIFORMITY_RTOL * abs(step0))[0]
    if bad.size:
        raise DatasetError(
            f"{path}: row {bad[0] + 3}: non-uniform time grid "
            f"(step {steps[bad[0]]:.9g}, expected {step0:.9g})")
    # average step, snapped to 12 significant digits so exact-decimal time
    # columns round-trip bit-exactly
    dt = float(f"{(t[-1] - t[0]) / (len(t) - 1):.12g}")

    speeds = data[:, 1:1 + n].T
    neg = np.argwhere(speeds < 0.0)
    if neg.size:
        i, k = neg[0]
        raise DatasetError(f"{path}: row {k + 2}: negative speed in column 'v{i + 1}'")
    positions = data[:, 1 + n:].T if has_pos else None
    return TrafficDataset(dt=float(dt), t0=float(t[0]), speeds=speeds, positions=positions)


def write_dataset(ds: TrafficDataset, path: str | Path,
                  config_hash: str | None = None) -> None:
    """Write the CSV form; floats use repr so exact decimals round-trip."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cols = ["t"] + [f"v{i + 1}" for i in range(ds.n)]
    if ds.positions is not None:
        cols += [f"s{i + 1}" for i in range(ds.n)]
    with open(path, "w", newline="") as fh:
        if config_hash:
            fh.write(f"# config_hash: {config_hash}\n")
        fh.write(",".join(cols) + "\n")
        times = ds.times()
        for k in range(ds.n_samples):
            row = [repr(float(times[k]))]
            row += [repr(float(ds.speeds[i, k])) for i in range(ds.n)]
            if ds.positions is not None:
                row += [repr(float(ds.positions[i, k])) for i in range(ds.n)]
            fh.write(",".join(row) + "\n")


def multi_tone_dataset(v_star: float, bins: list[int], amps: list[float],
                       phases: list[float], n_samples: int, dt: float,
                       n_vehicles: int = 1, lead_time: float = 0.0,
                       t0: float = 0.0) -> TrafficDataset:
    """Superposition of tones on exact analysis bins of the sampled record.

    Bin b maps to angular frequency 2*pi*b / (n_samples*dt).  Vehicle i
    (1 = nearest) is advanced by (i-1)*lead_time seconds, so farther
    vehicles experience the waveform earlier.
    """
    period = n_samples * dt
    t = t0 + dt * np.arange(n_samples)
    speeds = np.empty((n_vehicles, n_samples))
    for i in range(n_vehicles):
        shifted = t + i * lead_time
        s = np.full(n_samples, v_star)
        for b, rho, phi in zip(bins, amps, phases):
            s += rho * np.sin(2.0 * np.pi * b / period * shifted + phi)
        speeds[i] = s
    if np.any(speeds < 0.0):
        raise DatasetError("tone amplitudes drive speeds negative")
    return TrafficDataset(dt=dt, t0=t0, speeds=speeds)


def stop_and_go_dataset(duration: float, dt: float, n_vehicles: int = 1,
                        seed: int = 0, v_low: tuple[float, float] = (0.0, 3.0),
                        v_high: tuple[float, float] = (12.0, 22.0),
                        accel: tuple[float, float] = (0.8, 1.8),
                        decel: tuple[float, float] = (1.0, 3.5),
                        dwell: tuple[float, float] = (2.0, 8.0),
                        lead_time: float = 2.0, t0: float = 0.0) -> TrafficDataset:
    """Random piecewise-linear stop-and-go speed profile, replicated with a
    time advance per vehicle ahead.

    Accelerations are bounded by the given ramp rates by construction, so
    braking never exceeds max(decel); keep that below the assumed
    worst-case lead deceleration when pairing with the safety filter.
    """
    rng = np.random.default_rng(seed)
    horizon = duration + (n_vehicles - 1) * lead_time
    knot_t = [0.0]
    knot_v = [rng.uniform(*v_high)]
    going_down = True
    while knot_t[-1] < horizon:
        knot_t.append(knot_t[-1] + rng.uniform(*dwell))
        knot_v.append(knot_v[-1])
        target = rng.uniform(*v_low) if going_down else rng.uniform(*v_high)
        rate = rng.uniform(*decel) if going_down else rng.uniform(*accel)
        knot_t.append(knot_t[-1] + abs(target - knot_v[-1]) / rate)
        knot_v.append(target)
        going_down = not going_down
    knot_t.append(knot_t[-1] + horizon)  # guard segment
    knot_v.append(knot_v[-1])

    n_samples = int(round(duration / dt)) + 1
    base_t = dt * np.arange(n_samples)
    speeds = np.empty((n_vehicles, n_samples))
    for i in range(n_vehicles):
        speeds[i] = np.interp(base_t + i * lead_time, knot_t, knot_v)
    return TrafficDataset(dt=dt, t0=t0, speeds=speeds)
