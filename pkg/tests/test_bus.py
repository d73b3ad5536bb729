"""Grid bus: attachment registry, totals, delayed broadcast."""

import numpy as np
import pytest

from bessim import AttachmentRegistry, BroadcastBus, ConfigError, measure


def make_registry():
    return AttachmentRegistry(["E1", "E2", "P1"])


KINDS = {"E1": "energy", "E2": "energy", "P1": "power"}


class TestMeasure:
    def test_all_zero(self):
        y, ye, yp = measure({"E1": 0.0, "E2": 0.0, "P1": 0.0}, KINDS, make_registry())
        assert (y, ye, yp) == (0.0, 0.0, 0.0)

    def test_sums_by_kind(self):
        powers = {"E1": 750.0, "E2": 600.0, "P1": 120.0}
        y, ye, yp = measure(powers, KINDS, make_registry())
        assert ye == 1350.0
        assert yp == 120.0
        assert y == ye + yp

    def test_detached_excluded(self):
        reg = make_registry()
        reg.detach("E2", 5.0)
        y, ye, yp = measure({"E1": 750.0, "E2": 750.0, "P1": 0.0}, KINDS, reg)
        assert ye == 750.0
        assert reg.events == [(5.0, "E2", False)]

    def test_reattach(self):
        reg = make_registry()
        reg.detach("P1", 1.0)
        reg.attach("P1", 2.0)
        assert reg.is_attached("P1")

    def test_unknown_id_rejected(self):
        with pytest.raises(KeyError):
            make_registry().detach("X9", 0.0)


class TestBroadcastBus:
    def make(self, n=2000, dt=0.01, ctrl=0.1, delay=0.3):
        return BroadcastBus(n, dt, ctrl, delay)

    def test_warmup_reads_zero(self):
        bus = self.make()
        for step in range(30):
            bus.push(step, 123.0, 456.0)
        assert bus.sample(0.0) == (0.0, 0.0)
        assert bus.sample(0.2) == (0.0, 0.0)

    def test_constant_signal_passes_through(self):
        bus = self.make()
        for step in range(200):
            bus.push(step, 7.0, 9.0)
        assert bus.sample(1.5) == (7.0, 9.0)

    def test_step_seen_after_delay(self):
        # signal steps at t = 6.00; with 0.3 s delay the first control tick
        # that sees it is 6.3
        bus = self.make()
        for step in range(2000):
            value = 0.0 if step < 600 else 1000.0
            bus.push(step, value, value)
        assert bus.sample(6.2)[0] == 0.0
        assert bus.sample(6.3)[0] == 1000.0

    def test_held_between_ticks(self):
        bus = self.make()
        for step in range(2000):
            bus.push(step, float(step), 0.0)
        assert bus.sample(1.234)[0] == bus.sample(1.2)[0]

    def test_cross_correlation_peaks_at_delay(self):
        rng = np.random.default_rng(42)
        n, dt, delay = 5000, 0.01, 0.3
        bus = BroadcastBus(n, dt, 0.01, delay)
        signal = np.repeat(rng.normal(size=n // 10), 10)[:n]
        for step in range(n):
            bus.push(step, float(signal[step]), 0.0)
        received = np.array([bus.sample_at_step(i)[0] for i in range(n)])
        lags = range(0, 80)
        scores = [np.dot(signal[: n - lag], received[lag:]) for lag in lags]
        assert int(np.argmax(scores)) == round(delay / dt)

    def test_causality(self):
        # a sample read at step i never depends on pushes after i - delay
        bus_a = self.make()
        bus_b = self.make()
        for step in range(100):
            bus_a.push(step, float(step), 0.0)
            bus_b.push(step, float(step), 0.0)
        bus_b.push(71, 9999.0, 9999.0)  # within (t - delay, t]
        assert bus_a.sample_at_step(100) == bus_b.sample_at_step(100)

    def test_zero_delay_reads_current(self):
        bus = BroadcastBus(100, 0.01, 0.1, 0.0)
        bus.push(50, 5.0, 6.0)
        assert bus.sample_at_step(50) == (5.0, 6.0)

    def test_non_multiple_delay_rejected(self):
        with pytest.raises(ConfigError):
            BroadcastBus(100, 0.04, 0.1, 0.3)  # ctrl not a multiple of dt_sim
        with pytest.raises(ConfigError):
            BroadcastBus(100, 0.01, 0.1, 0.305)
