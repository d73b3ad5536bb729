"""Grid-side measurement and the broadcast channel.

The grid sums the power of every attached battery, forms the two error
signals (one per battery type), and broadcasts them to the fleet with a
pure transport delay. Samples are recorded at simulation resolution and
the value handed to controllers is held constant between control ticks.
"""

from __future__ import annotations

from typing import Mapping

import numpy as np

from .battery import ENERGY
from .errors import ConfigError


class AttachmentRegistry:
    """Which batteries are currently plugged into the system."""

    def __init__(self, battery_ids: list[str]):
        self.flags: dict[str, bool] = {battery_id: True for battery_id in battery_ids}
        self.events: list[tuple[float, str, bool]] = []

    def attach(self, battery_id: str, t: float) -> None:
        self._set(battery_id, t, True)

    def detach(self, battery_id: str, t: float) -> None:
        self._set(battery_id, t, False)

    def _set(self, battery_id: str, t: float, value: bool) -> None:
        if battery_id not in self.flags:
            raise KeyError(f"unknown battery id {battery_id!r}")
        self.flags[battery_id] = value
        self.events.append((t, battery_id, value))

    def is_attached(self, battery_id: str) -> bool:
        return self.flags[battery_id]


def measure(
    powers: Mapping[str, float],
    kinds: Mapping[str, str],
    registry: AttachmentRegistry,
) -> tuple[float, float, float]:
    """Totals (y, y_energy, y_power) over attached batteries [W].

    y is formed as y_energy + y_power so the identity holds exactly in
    floating point.
    """
    y_energy = 0.0
    y_power = 0.0
    for battery_id, power in powers.items():
        if not registry.is_attached(battery_id):
            continue
        if kinds[battery_id] == ENERGY:
            y_energy += power
        else:
            y_power += power
    return y_energy + y_power, y_energy, y_power


class BroadcastBus:
    """Delay line for the two broadcast error signals.

    One sample per simulation step is recorded for each signal; a read at
    control tick t returns the samples recorded at t - delay (zero before
    the start of history). Delay and control period must both be integer
    multiples of the simulation step.
    """

    def __init__(self, n_steps: int, dt_sim: float, dt_ctrl: float, delay: float):
        self.dt_sim = dt_sim
        self.dt_ctrl = dt_ctrl
        self.delay = delay
        self.ctrl_every = _exact_multiple(dt_ctrl, dt_sim, "control period")
        self.delay_steps = _exact_multiple(delay, dt_sim, "broadcast delay", allow_zero=True)
        self.hist_energy = np.zeros(n_steps)
        self.hist_total = np.zeros(n_steps)

    def push(self, step: int, r_minus_y_energy: float, r_minus_y: float) -> None:
        """Record the error samples measured at one simulation step."""
        self.hist_energy[step] = r_minus_y_energy
        self.hist_total[step] = r_minus_y

    def fill(self, start: int, stop: int, r_minus_y_energy: float, r_minus_y: float) -> None:
        """Record a constant sample over a run of simulation steps."""
        self.hist_energy[start:stop] = r_minus_y_energy
        self.hist_total[start:stop] = r_minus_y

    def sample_at_step(self, step: int) -> tuple[float, float]:
        """Delayed (energy error, total error) seen by controllers at a step."""
        idx = step - self.delay_steps
        if idx < 0:
            return 0.0, 0.0
        return float(self.hist_energy[idx]), float(self.hist_total[idx])

    def sample(self, t: float) -> tuple[float, float]:
        """Delayed error samples at an arbitrary time, held between ticks."""
        if t < 0:
            raise ValueError("t must be >= 0")
        tick = int(t / self.dt_ctrl + 1e-9)
        return self.sample_at_step(tick * self.ctrl_every)


def _exact_multiple(value: float, base: float, label: str, allow_zero: bool = False) -> int:
    k = value / base
    n = round(k)
    if abs(k - n) > 1e-6 or n < (0 if allow_zero else 1):
        raise ConfigError(f"{label} ({value}) must be an integer multiple of dt_sim ({base})")
    return n
