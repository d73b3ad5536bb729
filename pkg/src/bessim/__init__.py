"""Deterministic simulator for heterogeneous battery energy storage systems.

A fleet of energy-type and power-type batteries tracks a demanded grid
power either through per-battery decentralized controllers driven by one
broadcast error signal per battery type, or through a conventional
centralized SOC-proportional dispatcher. The package bundles scenario
presets, failure injection, a trace/metrics toolchain and a numerical
stability verifier.
"""

from .analysis import (
    LyapunovConfig,
    cycle_end_times,
    constant_segments,
    equilibrium_phi,
    feasible_split,
    lyapunov_report,
    lyapunov_term,
    lyapunov_value,
    metrics_document,
    power_steadystate_residual,
    soc_spread,
    switching_antiderivative,
    tracking_metrics,
)
from .battery import (
    BatteryParams,
    BatteryState,
    bound_power,
    power_to_current,
    protective_clamp,
    soc_step,
)
from .bus import AttachmentRegistry, BroadcastBus, measure
from .centralized import (
    CentralizedController,
    allocate_energy,
    allocate_power,
    proportional_shares,
    saturate,
)
from .config import load_scenario, scenario_from_dict, scenario_to_dict, write_scenario
from .controllers import (
    EnergyController,
    GainSchedule,
    PowerController,
    SwitchingShape,
    lag_filter_step,
    scheduled_gain,
    switching_power,
)
from .engine import PRESET_NAMES, SimTrace, preset, run
from .errors import ConfigError, InfeasiblePower, InfeasibleReference
from .scenario import (
    BatteryEntry,
    ControllerSettings,
    DemandProfile,
    FailureEvent,
    KindControlSettings,
    Scenario,
    SimConfig,
    square_wave_demand,
    square_wave_duration,
)
from .traceio import read_trace, write_metrics, write_trace

__version__ = "0.1.0"
