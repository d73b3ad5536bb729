"""Declarative experiment description: plant fleet, controllers, timing, demand."""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, field, replace

from .battery import BatteryParams, SOC_MODES, SOC_TERMINAL_CURRENT
from .centralized import DEFAULT_DETECT_DELAY_S
from .controllers import GAIN_FIXED, GAIN_MODES
from .errors import ConfigError

MODE_DECENTRALIZED = "decentralized"
MODE_CENTRALIZED = "centralized"
MODES = (MODE_DECENTRALIZED, MODE_CENTRALIZED)


@dataclass(frozen=True)
class DemandProfile:
    """Piecewise-constant demanded power: ordered (start_time, watts) segments."""

    segments: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        if not self.segments:
            raise ConfigError("demand: at least one segment is required")
        if self.segments[0][0] != 0.0:
            raise ConfigError("demand: first segment must start at t = 0")
        starts = [s for s, _ in self.segments]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ConfigError("demand: segment starts must be strictly increasing")
        object.__setattr__(self, "_starts", starts)

    def value_at(self, t: float) -> float:
        idx = bisect_right(self._starts, t) - 1
        return self.segments[max(idx, 0)][1]


def square_wave_demand(
    cycles: int,
    lead: float = 60.0,
    phase: float = 1200.0,
    amplitude: float = 3000.0,
) -> DemandProfile:
    """Zero demand for ``lead`` seconds, then alternating +/- amplitude phases.

    Each cycle is one discharge phase followed by one charge phase, each
    ``phase`` seconds long and contiguous with the next cycle.
    """
    if cycles < 0:
        raise ConfigError("demand: cycles must be >= 0")
    segments: list[tuple[float, float]] = [(0.0, 0.0)]
    for c in range(cycles):
        start = lead + 2.0 * phase * c
        segments.append((start, amplitude))
        segments.append((start + phase, -amplitude))
    return DemandProfile(tuple(segments))


def square_wave_duration(cycles: int, lead: float = 60.0, phase: float = 1200.0) -> float:
    """Natural run length for a square-wave profile: lead plus all phases."""
    return lead + 2.0 * phase * cycles


@dataclass(frozen=True)
class FailureEvent:
    """A battery fails and is detached; effective at the next step boundary."""

    battery_id: str
    time: float


@dataclass(frozen=True)
class KindControlSettings:
    """Controller constants shared by all batteries of one type."""

    k_discharge: float
    k_charge: float
    phi_discharge_sat: float = 1.0
    phi_charge_sat: float = -1.0


@dataclass(frozen=True)
class ControllerSettings:
    energy: KindControlSettings
    power: KindControlSettings


@dataclass(frozen=True)
class SimConfig:
    """Engine timing and switches."""

    duration: float
    dt_sim: float = 0.01
    dt_ctrl: float = 0.1
    broadcast_delay: float = 0.3
    t_f: float = 10.0
    mode: str = MODE_DECENTRALIZED
    gain_mode: str = GAIN_FIXED
    anti_windup: bool = False
    soc_integration_mode: str = SOC_TERMINAL_CURRENT
    protective_soc_clamp: bool = False
    failure_detect_delay: float = DEFAULT_DETECT_DELAY_S

    def __post_init__(self) -> None:
        if self.duration <= 0:
            raise ConfigError("timing.duration must be > 0")
        if self.dt_sim <= 0:
            raise ConfigError("timing.dt_sim must be > 0")
        if self.t_f <= 0:
            raise ConfigError("timing.t_f must be > 0")
        _require_multiple(self.dt_ctrl, self.dt_sim, "timing.dt_ctrl")
        _require_multiple(self.broadcast_delay, self.dt_sim, "timing.broadcast_delay", True)
        _require_multiple(self.duration, self.dt_sim, "timing.duration")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.gain_mode not in GAIN_MODES:
            raise ConfigError(f"controller.gain_mode must be one of {GAIN_MODES}")
        if self.soc_integration_mode not in SOC_MODES:
            raise ConfigError(f"soc_integration_mode must be one of {SOC_MODES}")
        if self.failure_detect_delay < 0:
            raise ConfigError("centralized.failure_detect_delay must be >= 0")


@dataclass(frozen=True)
class BatteryEntry:
    params: BatteryParams
    initial_soc: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.initial_soc <= 1.0:
            raise ConfigError(
                f"battery '{self.params.id}': initial_soc must be within [0, 1]"
            )


@dataclass(frozen=True)
class Scenario:
    config: SimConfig
    batteries: tuple[BatteryEntry, ...]
    controllers: ControllerSettings
    demand: DemandProfile
    failures: tuple[FailureEvent, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        ids = [b.params.id for b in self.batteries]
        if not ids:
            raise ConfigError("batteries: at least one battery is required")
        if len(set(ids)) != len(ids):
            raise ConfigError("batteries: ids must be unique")
        for event in self.failures:
            if event.battery_id not in ids:
                raise ConfigError(f"failures: unknown battery id {event.battery_id!r}")
            if event.time < 0:
                raise ConfigError("failures: event time must be >= 0")

    def battery_ids(self) -> list[str]:
        return [b.params.id for b in self.batteries]

    def kinds(self) -> list[str]:
        return [b.params.kind for b in self.batteries]

    def with_mode(self, mode: str) -> "Scenario":
        return replace(self, config=replace(self.config, mode=mode))


def _require_multiple(value: float, base: float, label: str, allow_zero: bool = False) -> None:
    k = value / base
    n = round(k)
    if abs(k - n) > 1e-6 or n < (0 if allow_zero else 1):
        raise ConfigError(f"{label} ({value}) must be an integer multiple of dt_sim ({base})")
