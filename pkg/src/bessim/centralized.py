"""Conventional centralized dispatch, used as the comparison baseline.

A server splits the demanded power into a slow part (first-order lag of
the demand) served by energy-type batteries and the transient remainder
served by power-type batteries. Within each group the references are
proportional to the SOC headroom: batteries with more stored charge
discharge more, emptier ones charge more. References are saturated per
battery and no other battery covers the resulting shortage.

The server also watches delivered power against its own commands and
marks a battery failed after the deviation has persisted for a fixed
delay; until then it keeps allocating to the dead battery using the last
SOC it received.
"""

from __future__ import annotations

from typing import Iterable, Mapping, Sequence

from .battery import BatteryParams, bound_power
from .controllers import lag_filter_step

# Delivered-vs-commanded mismatch that counts as a deviation [W].
DEVIATION_THRESHOLD_W = 1.0
DEFAULT_DETECT_DELAY_S = 300.0


def proportional_shares(deltas: Sequence[float], total: float) -> list[float]:
    """Split ``total`` proportionally to nonnegative weights.

    Zero weight sum (or zero total) yields all zeros rather than an error.
    """
    weight = sum(deltas)
    if weight <= 0.0 or total == 0.0:
        return [0.0] * len(deltas)
    return [d / weight * total for d in deltas]


def saturate(reference: float, params: BatteryParams) -> float:
    """Clamp a reference to the battery's nameplate power bounds."""
    return bound_power(params, reference)


def _headroom(soc: float, params: BatteryParams, direction_positive: bool) -> float:
    if direction_positive:
        return max(0.0, soc - params.soc_min)
    return max(0.0, params.soc_max - soc)


def _allocate(
    socs: Sequence[float],
    params: Sequence[BatteryParams],
    total: float,
    excluded: Iterable[str],
) -> list[float]:
    excluded = set(excluded)
    deltas = [
        0.0 if p.id in excluded else _headroom(s, p, total > 0.0)
        for s, p in zip(socs, params)
    ]
    shares = proportional_shares(deltas, total)
    return [saturate(ref, p) for ref, p in zip(shares, params)]


def allocate_energy(
    socs: Sequence[float],
    params: Sequence[BatteryParams],
    r_steady: float,
    excluded: Iterable[str] = (),
) -> list[float]:
    """Saturated per-battery references for the slow demand component."""
    return _allocate(socs, params, r_steady, excluded)


def allocate_power(
    socs: Sequence[float],
    params: Sequence[BatteryParams],
    r_transient: float,
    excluded: Iterable[str] = (),
) -> list[float]:
    """Saturated per-battery references for the transient demand component."""
    return _allocate(socs, params, r_transient, excluded)


class CentralizedController:
    """Sequential server state machine, one instance per simulation."""

    def __init__(
        self,
        energy_params: Sequence[BatteryParams],
        power_params: Sequence[BatteryParams],
        time_constant: float,
        failure_detect_delay: float = DEFAULT_DETECT_DELAY_S,
    ):
        self.energy_params = list(energy_params)
        self.power_params = list(power_params)
        self.time_constant = time_constant
        self.failure_detect_delay = failure_detect_delay
        self.r_steady = 0.0
        self.known_socs: dict[str, float] = {}
        self.detected_failures: set[str] = set()
        self._deviation_since: dict[str, float] = {}
        self._last_commands: dict[str, float] = {}

    def update_steady_reference(self, r: float, dt: float) -> float:
        """Advance the first-order lag that extracts the slow demand part."""
        self.r_steady = lag_filter_step(self.r_steady, r, dt, self.time_constant)
        return self.r_steady

    def receive_socs(self, socs: Mapping[str, float], attached: Mapping[str, bool]) -> None:
        """Record reported SOCs; a detached battery's last report stays frozen."""
        for battery_id, soc in socs.items():
            if attached.get(battery_id, False):
                self.known_socs[battery_id] = soc

    def allocate(self, r: float) -> dict[str, float]:
        """Compute saturated commands for every battery from known SOCs."""
        e_socs = [self.known_socs[p.id] for p in self.energy_params]
        p_socs = [self.known_socs[p.id] for p in self.power_params]
        e_refs = allocate_energy(e_socs, self.energy_params, self.r_steady, self.detected_failures)
        p_refs = allocate_power(
            p_socs, self.power_params, r - self.r_steady, self.detected_failures
        )
        commands: dict[str, float] = {}
        for p, ref in zip(self.energy_params, e_refs):
            commands[p.id] = ref
        for p, ref in zip(self.power_params, p_refs):
            commands[p.id] = ref
        for battery_id in self.detected_failures:
            commands[battery_id] = 0.0
        self._last_commands = commands
        return commands

    def failure_monitor(
        self, t: float, commanded: Mapping[str, float], measured: Mapping[str, float]
    ) -> set[str]:
        """Update the detected-failure set from delivered-vs-commanded power.

        A battery is declared failed once |measured - commanded| has
        exceeded the deviation threshold, with a nonzero command, at every
        check since some start time t0 and t - t0 has reached the
        detection delay. Any compliant sample resets the streak.
        """
        for battery_id, command in commanded.items():
            if battery_id in self.detected_failures:
                continue
            deviating = (
                command != 0.0
                and abs(measured.get(battery_id, 0.0) - command) > DEVIATION_THRESHOLD_W
            )
            if not deviating:
                self._deviation_since.pop(battery_id, None)
                continue
            since = self._deviation_since.setdefault(battery_id, t)
            if t - since >= self.failure_detect_delay:
                self.detected_failures.add(battery_id)
                self._deviation_since.pop(battery_id, None)
        return self.detected_failures

    def tick(
        self,
        t: float,
        r: float,
        dt_ctrl: float,
        socs: Mapping[str, float],
        measured: Mapping[str, float],
        attached: Mapping[str, bool],
    ) -> dict[str, float]:
        """One control period: lag update, allocation, failure monitoring."""
        self.update_steady_reference(r, dt_ctrl)
        self.receive_socs(socs, attached)
        commands = self.allocate(r)
        self.failure_monitor(t, commands, measured)
        return commands
