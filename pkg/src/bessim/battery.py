"""Equivalent-circuit battery plant.

Each battery is a constant-OCV voltage source behind a series resistance.
Commanded terminal power is converted to current through the physical root
of the circuit quadratic, and the state of charge is integrated by coulomb
counting on that terminal current.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConfigError, InfeasiblePower

ENERGY = "energy"
POWER = "power"
KINDS = (ENERGY, POWER)

# SOC integration conventions, selectable per scenario.
SOC_TERMINAL_CURRENT = "terminal_current"
SOC_RAW_POWER = "raw_power"
SOC_MODES = (SOC_TERMINAL_CURRENT, SOC_RAW_POWER)


@dataclass(frozen=True)
class BatteryParams:
    """Nameplate data for one assembled battery.

    Attributes:
        id: unique identifier, e.g. "E1".
        kind: "energy" (high capacity, low power) or "power" (the opposite).
        ocv: open-circuit voltage [V], constant in SOC.
        internal_resistance: series resistance [ohm].
        capacity_ah: charge capacity [Ah].
        soc_min / soc_max: protective SOC band [fraction of capacity].
        max_discharge_power: largest allowed discharge power [W], > 0.
        max_charge_power: largest allowed charge power [W], < 0.
    """

    id: str
    kind: str
    ocv: float
    internal_resistance: float
    capacity_ah: float
    soc_min: float
    soc_max: float
    max_discharge_power: float
    max_charge_power: float

    def __post_init__(self) -> None:
        where = f"battery '{self.id}'"
        if self.kind not in KINDS:
            raise ConfigError(f"{where}: kind must be one of {KINDS}, got {self.kind!r}")
        if not self.ocv > 0:
            raise ConfigError(f"{where}: ocv must be > 0")
        if not self.internal_resistance > 0:
            raise ConfigError(f"{where}: internal_resistance must be > 0")
        if not self.capacity_ah > 0:
            raise ConfigError(f"{where}: capacity_ah must be > 0")
        if not 0.0 <= self.soc_min < self.soc_max <= 1.0:
            raise ConfigError(f"{where}: need 0 <= soc_min < soc_max <= 1")
        if not self.max_charge_power < 0 < self.max_discharge_power:
            raise ConfigError(f"{where}: need max_charge_power < 0 < max_discharge_power")
        if not self.max_discharge_power < self.deliverable_power_limit():
            raise ConfigError(
                f"{where}: max_discharge_power {self.max_discharge_power} W is not "
                f"deliverable by the circuit (limit ocv^2/(4R) = "
                f"{self.deliverable_power_limit():.6g} W)"
            )

    def deliverable_power_limit(self) -> float:
        """Largest terminal power the circuit can source [W]."""
        return self.ocv * self.ocv / (4.0 * self.internal_resistance)


@dataclass
class BatteryState:
    """Mutable per-battery state carried through a simulation."""

    soc: float
    attached: bool = True
    applied_power: float = 0.0


def power_to_current(params: BatteryParams, u: float) -> float:
    """Terminal current [A] that delivers electric power ``u`` [W].

    Solves (ocv - R*I)*I = u for the physical (smaller-magnitude) root.
    Positive current means discharge. Raises InfeasiblePower when the
    requested discharge power exceeds ocv^2/(4R).
    """
    if u == 0.0:
        return 0.0
    r = params.internal_resistance
    disc = params.ocv * params.ocv - 4.0 * r * u
    if disc < 0.0:
        raise InfeasiblePower(
            f"battery '{params.id}': {u} W exceeds deliverable limit "
            f"{params.deliverable_power_limit():.6g} W"
        )
    return (params.ocv - math.sqrt(disc)) / (2.0 * r)


def soc_step(
    params: BatteryParams,
    state: BatteryState,
    u: float,
    dt: float,
    mode: str = SOC_TERMINAL_CURRENT,
) -> float:
    """New SOC after holding power ``u`` for ``dt`` seconds.

    The default convention coulomb-counts the terminal current, so the
    I^2*R loss shows up as a charge/discharge asymmetry. The "raw_power"
    alternative divides power by the OCV and ignores the resistance.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    if mode == SOC_TERMINAL_CURRENT:
        current = power_to_current(params, u)
    elif mode == SOC_RAW_POWER:
        current = u / params.ocv
    else:
        raise ValueError(f"unknown SOC integration mode {mode!r}")
    soc = state.soc - current * dt / (3600.0 * params.capacity_ah)
    return min(1.0, max(0.0, soc))


def protective_clamp(params: BatteryParams, state: BatteryState, u_request: float) -> float:
    """Last-line guard between a controller command and the terminals.

    Detached batteries contribute nothing. Discharge is cut at the SOC
    floor, charge at the SOC ceiling, and everything else is clamped to
    the nameplate power bounds.
    """
    if not state.attached:
        return 0.0
    if state.soc <= params.soc_min and u_request > 0.0:
        return 0.0
    if state.soc >= params.soc_max and u_request < 0.0:
        return 0.0
    return bound_power(params, u_request)


def bound_power(params: BatteryParams, u_request: float) -> float:
    """Clamp a power command to the nameplate charge/discharge bounds."""
    if u_request > params.max_discharge_power:
        return params.max_discharge_power
    if u_request < params.max_charge_power:
        return params.max_charge_power
    return u_request
