"""Per-battery decentralized controllers.

Every battery runs one integrator driven by a broadcast error signal
through an SOC-scheduled gain; a piecewise-linear switching curve maps
the integrator state to terminal power. Energy-type controllers insert a
first-order lag in front of the integrator so they respond slower than
power-type ones. No controller ever sees another battery's state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConfigError

DISCHARGE = "discharge"
CHARGE = "charge"

GAIN_FIXED = "fixed"
GAIN_SOC_VARIABLE = "soc_variable"
GAIN_MODES = (GAIN_FIXED, GAIN_SOC_VARIABLE)

# |phi| below this is treated as zero when picking the gain branch.
_PHI_SIGN_EPS = 1e-9


@dataclass(frozen=True)
class SwitchingShape:
    """Geometry of the saturating curve from integrator state to power [W].

    Zero maps to zero; the curve rises linearly to ``u_discharge_max`` at
    ``phi_discharge_sat`` and falls linearly to ``u_charge_max`` at
    ``phi_charge_sat``, staying flat beyond either knee.
    """

    phi_discharge_sat: float
    phi_charge_sat: float
    u_discharge_max: float
    u_charge_max: float

    def __post_init__(self) -> None:
        if not self.phi_charge_sat < 0 < self.phi_discharge_sat:
            raise ConfigError("switching shape: need phi_charge_sat < 0 < phi_discharge_sat")
        if not self.u_charge_max < 0 < self.u_discharge_max:
            raise ConfigError("switching shape: need u_charge_max < 0 < u_discharge_max")

    @property
    def discharge_slope(self) -> float:
        return self.u_discharge_max / self.phi_discharge_sat

    @property
    def charge_slope(self) -> float:
        return self.u_charge_max / self.phi_charge_sat


def switching_power(shape: SwitchingShape, phi: float) -> float:
    """Evaluate the switching curve: monotone, bounded, zero at zero."""
    if phi >= shape.phi_discharge_sat:
        return shape.u_discharge_max
    if phi <= shape.phi_charge_sat:
        return shape.u_charge_max
    if phi >= 0.0:
        return shape.discharge_slope * phi
    return shape.charge_slope * phi


@dataclass(frozen=True)
class GainSchedule:
    """Integrator gain [1/(W*s)] as a function of SOC and demand direction.

    In "fixed" mode the upper bounds are used outright. In "soc_variable"
    mode the discharge gain shrinks linearly to zero as SOC approaches the
    floor and the charge gain as SOC approaches the ceiling, which is what
    equalizes SOC across a fleet without any inter-battery communication.
    """

    k_discharge_max: float
    k_charge_max: float
    soc_min: float
    soc_max: float
    mode: str = GAIN_FIXED

    def __post_init__(self) -> None:
        if self.k_discharge_max <= 0 or self.k_charge_max <= 0:
            raise ConfigError("gain schedule: gain upper bounds must be > 0")
        if not 0.0 <= self.soc_min < self.soc_max <= 1.0:
            raise ConfigError("gain schedule: need 0 <= soc_min < soc_max <= 1")
        if self.mode not in GAIN_MODES:
            raise ConfigError(f"gain schedule: mode must be one of {GAIN_MODES}")


def scheduled_gain(schedule: GainSchedule, soc: float, direction: str) -> float:
    """Gain for the current SOC and demand direction."""
    if direction == DISCHARGE:
        k = schedule.k_discharge_max
        if schedule.mode == GAIN_FIXED:
            return k
        frac = (soc - schedule.soc_min) / (schedule.soc_max - schedule.soc_min)
    elif direction == CHARGE:
        k = schedule.k_charge_max
        if schedule.mode == GAIN_FIXED:
            return k
        frac = (schedule.soc_max - soc) / (schedule.soc_max - schedule.soc_min)
    else:
        raise ValueError(f"unknown demand direction {direction!r}")
    return k * min(1.0, max(0.0, frac))


def lag_filter_step(e_prev: float, value: float, dt: float, time_constant: float) -> float:
    """One step of the first-order lag, exact for a zero-order-held input.

    Implements e' = a*e_prev + (1-a)*value with a = exp(-dt/T), which is
    the closed-form solution of T*de/dt + e = value over one hold period.
    """
    if dt <= 0 or time_constant <= 0:
        raise ValueError("dt and time_constant must be > 0")
    alpha = math.exp(-dt / time_constant)
    return alpha * e_prev + (1.0 - alpha) * value


def _demand_direction(phi: float, error: float) -> str:
    # The battery never receives its own demand share, so the gain branch
    # is inferred locally: the integrator sign while it is active (it
    # agrees with the demand sign in sustained operation), else the sign
    # of the incoming error, else discharge.
    if phi > _PHI_SIGN_EPS:
        return DISCHARGE
    if phi < -_PHI_SIGN_EPS:
        return CHARGE
    if error < 0.0:
        return CHARGE
    return DISCHARGE


class _IntegratorController:
    """Shared integrator core: gain-scheduled accumulation plus switching curve."""

    def __init__(self, gains: GainSchedule, shape: SwitchingShape, anti_windup: bool = False):
        self.gains = gains
        self.shape = shape
        self.anti_windup = anti_windup
        self.phi = 0.0

    def _integrate(self, error: float, soc: float, dt_ctrl: float) -> float:
        k = scheduled_gain(self.gains, soc, _demand_direction(self.phi, error))
        phi = self.phi + k * error * dt_ctrl
        if self.anti_windup:
            phi = min(self.shape.phi_discharge_sat, max(self.shape.phi_charge_sat, phi))
        self.phi = phi
        return switching_power(self.shape, phi)


class EnergyController(_IntegratorController):
    """Controller for an energy-type battery.

    Filters the broadcast error through a first-order lag, integrates it
    with the scheduled gain, and shapes the result through the switching
    curve. All state is local to the instance.
    """

    def __init__(
        self,
        gains: GainSchedule,
        shape: SwitchingShape,
        time_constant: float,
        anti_windup: bool = False,
    ):
        super().__init__(gains, shape, anti_windup)
        self.time_constant = time_constant
        self.e_filtered = 0.0

    def step(self, broadcast_error: float, soc: float, dt_ctrl: float) -> float:
        """Advance one control period; returns the commanded power [W]."""
        self.e_filtered = lag_filter_step(
            self.e_filtered, broadcast_error, dt_ctrl, self.time_constant
        )
        return self._integrate(self.e_filtered, soc, dt_ctrl)


class PowerController(_IntegratorController):
    """Controller for a power-type battery: same integrator, no lag filter."""

    def step(self, broadcast_error: float, soc: float, dt_ctrl: float) -> float:
        """Advance one control period; returns the commanded power [W]."""
        return self._integrate(broadcast_error, soc, dt_ctrl)
