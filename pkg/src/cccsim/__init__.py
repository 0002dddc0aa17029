"""Safe, energy-efficient connected cruise control toolkit.

Pipeline: decompose recorded lead-vehicle speeds into spectral
components, synthesize feedback gains by minimizing a frequency-weighted
energy proxy over the plant-stable set, then simulate the nonlinear
closed loop with a barrier safety filter and report energy and safety
metrics.
"""

from .config import ConfigError, OptimizerSettings, RunConfig, config_hash
from .controller import (ControllerGains, ccc_acceleration, is_plant_stable,
                         range_policy, speed_policy)
from .datasets import (DatasetError, TrafficDataset, load_dataset,
                       multi_tone_dataset, stop_and_go_dataset, write_dataset)
from .dynamics import (VehicleParams, accel_upper_limit, lower_level_command,
                       plant_derivative, resistance, saturate)
from .engine import (Metrics, SimConfig, SimTrace, compute_metrics,
                     energy_brake, energy_w, estimate_lead_accel, grid_sweep,
                     h_margin, h_violation_pct, interpolate_lead, plant_step,
                     run_scenario, step)
from .safety import (SafetyParams, barrier, braking_consistent,
                     cbf_acceleration, envelope_gradient, lead_accel_bound_ok,
                     safety_filter, stopping_envelope)
from .spectral import (SpectralDecomposition, decompose, link_transfer,
                       nyquist_limit, objective_J, optimize_gains, reconstruct,
                       response_spectrum, spectral_power)

__version__ = "0.1.0"
