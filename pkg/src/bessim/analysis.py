"""Post-hoc trace verification and metrics.

Provides tracking/settling statistics, the power-type steady-state
residual, SOC spread sampling, and a numerical check that the system's
energy-side storage function decreases along simulated trajectories the
way the continuous-time theory predicts.

The storage function combines the squared filtered error with one
integral term per energy battery,

    W = e_f^2 / 2 + (1/T_f) * sum_i  integral (sigma_i(x) - r_i) / k_i dx,

where sigma_i is the battery's switching curve, k_i its (fixed) gain and
r_i a feasible per-battery split of the demanded power. Along exact
continuous trajectories dW/dt = -e_f^2 / T_f; discretization and the
broadcast delay perturb that bound, so the verifier reports how often and
by how much the discrete difference quotient exceeds it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .battery import ENERGY
from .controllers import GAIN_FIXED, SwitchingShape
from .engine import SimTrace
from .errors import InfeasibleReference
from .scenario import MODE_DECENTRALIZED, Scenario

# --------------------------------------------------------------------------
# demand segmentation and tracking metrics
# --------------------------------------------------------------------------


def constant_segments(trace: SimTrace) -> list[tuple[int, int, float]]:
    """Half-open row ranges [i0, i1) on which the demand r is constant."""
    r = trace.r
    changes = np.flatnonzero(np.diff(r)) + 1
    bounds = [0, *changes.tolist(), len(r)]
    return [(bounds[k], bounds[k + 1], float(r[bounds[k]])) for k in range(len(bounds) - 1)]


def tracking_metrics(
    trace: SimTrace,
    settle_fraction: float = 0.01,
    tail_fraction: float = 0.10,
) -> dict:
    """Per-phase steady-state error and settling time, plus overall RMSE.

    The steady-state error of a phase is the mean |r - y| over its final
    ``tail_fraction`` of rows. The settling time is the offset from phase
    start after which |r - y| stays below ``settle_fraction * |r|`` for
    the rest of the phase (None for zero-demand phases or if never met).
    """
    abs_err = np.abs(trace.r - trace.y)
    phases = []
    for i0, i1, r in constant_segments(trace):
        seg = abs_err[i0:i1]
        tail = max(1, int(round(tail_fraction * len(seg))))
        settling = None
        if r != 0.0:
            threshold = settle_fraction * abs(r)
            ok = seg < threshold
            suffix_ok = np.logical_and.accumulate(ok[::-1])[::-1]
            if suffix_ok.any():
                settling = float(np.argmax(suffix_ok) * trace.dt_sim)
        phases.append(
            {
                "t_start": float(trace.t[i0]),
                "r": r,
                "steady_state_error_w": float(seg[-tail:].mean()),
                "settling_time_s": settling,
            }
        )
    return {
        "rmse_w": float(np.sqrt(np.mean((trace.r - trace.y) ** 2))),
        "phases": phases,
    }


def power_steadystate_residual(trace: SimTrace) -> list[dict]:
    """Sum of |u| over power-type batteries at the final row of each phase."""
    cols = trace.columns("power")
    out = []
    for i0, i1, r in constant_segments(trace):
        row = i1 - 1
        residual = float(np.abs(trace.u[row, cols]).sum())
        out.append({"t_end": float(trace.t[row]), "r": r, "residual_w": residual})
    return out


def soc_spread(trace: SimTrace, kind: str, times: Sequence[float]) -> list[dict]:
    """max - min SOC over attached batteries of one kind at given times."""
    cols = trace.columns(kind)
    out = []
    for t in times:
        row = min(len(trace) - 1, max(0, round(t / trace.dt_sim)))
        socs = [
            float(trace.soc[row, c]) for c in cols if trace.attached[row, c]
        ]
        spread = (max(socs) - min(socs)) if socs else 0.0
        out.append({"t": float(trace.t[row]), "spread": spread})
    return out


def cycle_end_times(trace: SimTrace) -> list[float]:
    """End instant of every charge (r < 0) phase, i.e. each demand cycle."""
    n = len(trace)
    times = []
    for i0, i1, r in constant_segments(trace):
        if r < 0.0:
            times.append(float(trace.t[min(i1, n - 1)]))
    return times


# --------------------------------------------------------------------------
# storage-function (Lyapunov) verification
# --------------------------------------------------------------------------

LIMIT_ZERO = "zero"
LIMIT_EQUILIBRIUM = "equilibrium"
LIMIT_MODES = (LIMIT_ZERO, LIMIT_EQUILIBRIUM)


@dataclass(frozen=True)
class LyapunovConfig:
    """Everything the verifier needs about the energy-type fleet.

    ``targets`` must sum to the demanded power of the segment under
    analysis and each entry must be reachable on its battery's switching
    curve. ``lower_limit_mode`` picks the lower limit of the integral
    terms: "equilibrium" starts each integral at the state where the
    curve meets its target (making every term nonnegative), "zero"
    starts at zero. The two differ by a constant per segment, so
    difference quotients are identical either way.
    """

    targets: tuple[float, ...]
    gains: tuple[float, ...]
    shapes: tuple[SwitchingShape, ...]
    t_f: float
    lower_limit_mode: str = LIMIT_EQUILIBRIUM

    def __post_init__(self) -> None:
        if not len(self.targets) == len(self.gains) == len(self.shapes):
            raise ValueError("targets, gains and shapes must have equal length")
        if self.lower_limit_mode not in LIMIT_MODES:
            raise ValueError(f"lower_limit_mode must be one of {LIMIT_MODES}")
        for target, shape in zip(self.targets, self.shapes):
            _check_reachable(target, shape)

    @staticmethod
    def from_scenario(
        scenario: Scenario, r: float, lower_limit_mode: str = LIMIT_EQUILIBRIUM
    ) -> "LyapunovConfig":
        """Equal-split feasible targets with the scenario's fixed gain bounds."""
        shapes = []
        gains = []
        settings = scenario.controllers.energy
        for entry in scenario.batteries:
            if entry.params.kind != ENERGY:
                continue
            shapes.append(
                SwitchingShape(
                    phi_discharge_sat=settings.phi_discharge_sat,
                    phi_charge_sat=settings.phi_charge_sat,
                    u_discharge_max=entry.params.max_discharge_power,
                    u_charge_max=entry.params.max_charge_power,
                )
            )
            gains.append(settings.k_discharge if r >= 0 else settings.k_charge)
        targets = feasible_split(r, shapes)
        return LyapunovConfig(
            targets=tuple(targets),
            gains=tuple(gains),
            shapes=tuple(shapes),
            t_f=scenario.config.t_f,
            lower_limit_mode=lower_limit_mode,
        )


def feasible_split(r: float, shapes: Sequence[SwitchingShape]) -> list[float]:
    """Split ``r`` across switching curves: equal shares, clamped to each
    curve's range with the excess redistributed over the others.

    Raises InfeasibleReference when the fleet cannot deliver ``r`` at all.
    """
    n = len(shapes)
    if n == 0:
        raise InfeasibleReference("no energy-type batteries to split the demand over")
    lo = sum(s.u_charge_max for s in shapes)
    hi = sum(s.u_discharge_max for s in shapes)
    if not lo <= r <= hi:
        raise InfeasibleReference(f"total demand {r} W outside deliverable range [{lo}, {hi}]")
    shares = [r / n] * n
    for _ in range(n):
        shares = [
            min(s.u_discharge_max, max(s.u_charge_max, x)) for x, s in zip(shares, shapes)
        ]
        deficit = r - sum(shares)
        if abs(deficit) <= 1e-9:
            break
        if deficit > 0:
            free = [i for i in range(n) if shares[i] < shapes[i].u_discharge_max]
        else:
            free = [i for i in range(n) if shares[i] > shapes[i].u_charge_max]
        for i in free:
            shares[i] += deficit / len(free)
    return shares


def equilibrium_phi(shape: SwitchingShape, target: float) -> float:
    """Integrator state at which the switching curve delivers ``target``."""
    _check_reachable(target, shape)
    if target > 0.0:
        return target / shape.discharge_slope
    if target < 0.0:
        return target / shape.charge_slope
    return 0.0


def switching_antiderivative(shape: SwitchingShape, phi):
    """Antiderivative of the switching curve with value 0 at phi = 0.

    Accepts scalars or arrays; quadratic on the linear pieces and affine
    beyond the saturation knees.
    """
    phi = np.asarray(phi, dtype=float)
    pd, pc = shape.phi_discharge_sat, shape.phi_charge_sat
    sd, sc = shape.discharge_slope, shape.charge_slope
    ud, uc = shape.u_discharge_max, shape.u_charge_max
    inner = np.where(phi >= 0.0, 0.5 * sd * phi * phi, 0.5 * sc * phi * phi)
    above = 0.5 * sd * pd * pd + ud * (phi - pd)
    below = 0.5 * sc * pc * pc + uc * (phi - pc)
    out = np.where(phi > pd, above, np.where(phi < pc, below, inner))
    return float(out) if out.ndim == 0 else out


def lyapunov_term(
    phi,
    target: float,
    gain: float,
    shape: SwitchingShape,
    lower_limit_mode: str = LIMIT_EQUILIBRIUM,
):
    """Closed form of integral (sigma(x) - target)/gain dx for one battery.

    The lower limit is 0 or the equilibrium state depending on the mode.
    In equilibrium mode the value is nonnegative for every phi. Accepts
    scalar or array ``phi``.
    """
    _check_reachable(target, shape)
    if lower_limit_mode == LIMIT_EQUILIBRIUM:
        lower = equilibrium_phi(shape, target)
    elif lower_limit_mode == LIMIT_ZERO:
        lower = 0.0
    else:
        raise ValueError(f"lower_limit_mode must be one of {LIMIT_MODES}")
    s_lower = switching_antiderivative(shape, lower)
    s_phi = switching_antiderivative(shape, phi)
    return (s_phi - s_lower - target * (np.asarray(phi, dtype=float) - lower)) / gain


def lyapunov_value(e_filtered: float, phis: Sequence[float], config: LyapunovConfig) -> float:
    """Storage function at one trace snapshot."""
    total = 0.5 * e_filtered * e_filtered
    acc = 0.0
    for phi, target, gain, shape in zip(phis, config.targets, config.gains, config.shapes):
        acc += float(lyapunov_term(phi, target, gain, shape, config.lower_limit_mode))
    return total + acc / config.t_f


def lyapunov_report(
    trace: SimTrace,
    scenario: Scenario,
    lower_limit_mode: str = LIMIT_EQUILIBRIUM,
) -> dict:
    """Check the decrease bound per control tick on constant-demand segments.

    For consecutive ticks inside one segment (skipping the first
    delay + one control period, which still see the previous demand level
    through the broadcast) the report compares

        dW/dt   against   -e_f^2 / T_f + eps

    where eps is a per-segment discretization allowance computed from the
    trace: twice the peak |e_f| times the largest per-tick change of the
    energy-side error, scaled by (1 + delay/control period) and 1/T_f.
    It reports the violating fraction and the worst positive excursion of
    (dW/dt + e_f^2/T_f); excursions shrink with the control period and
    the delay, which refinement runs can confirm.
    """
    if trace.mode != MODE_DECENTRALIZED:
        raise ValueError("storage-function verification applies to decentralized traces")
    energy_cols = trace.columns(ENERGY)
    if not energy_cols:
        raise ValueError("trace has no energy-type batteries")

    caveat = None
    if scenario.config.gain_mode != GAIN_FIXED:
        caveat = (
            "gain_mode is 'soc_variable': the verifier evaluates gains at their "
            "fixed upper bounds, so the decrease bound is not expected to certify"
        )

    # Tick rows: robust to decimation as long as tick instants survive.
    steps = np.rint(trace.t / trace.dt_ctrl)
    on_tick = np.abs(trace.t - steps * trace.dt_ctrl) < (trace.dt_sim / 2.0)

    segments = []
    worst = 0.0
    total_ticks = 0
    total_violations = 0
    for i0, i1, r in constant_segments(trace):
        t_start = float(trace.t[i0])
        # ticks whose delayed broadcast already carries this segment's demand
        t_ok = trace.t >= t_start + trace.broadcast_delay + trace.dt_ctrl
        rows = np.flatnonzero(on_tick & t_ok & (np.arange(len(trace)) >= i0) & (np.arange(len(trace)) < i1))
        if len(rows) < 2:
            segments.append(
                {"t_start": t_start, "r": r, "n_ticks": 0, "eps_disc": None,
                 "max_excursion": None, "violation_fraction": None}
            )
            continue
        config = LyapunovConfig.from_scenario(scenario, r, lower_limit_mode)
        e_f = trace.e_filtered[rows]
        values = 0.5 * e_f * e_f
        for pos, col in enumerate(energy_cols):
            values = values + (
                np.asarray(
                    lyapunov_term(
                        trace.phi[rows, col],
                        config.targets[pos],
                        config.gains[pos],
                        config.shapes[pos],
                        lower_limit_mode,
                    )
                )
                / config.t_f
            )
        dt_ticks = np.diff(trace.t[rows])
        dw = np.diff(values) / dt_ticks
        rhs = -e_f[:-1] * e_f[:-1] / config.t_f
        residual = dw - rhs

        by = trace.r[rows] - trace.y_energy[rows]
        max_step = float(np.max(np.abs(np.diff(by)))) if len(by) > 1 else 0.0
        eps = (
            2.0
            * float(np.max(np.abs(e_f)))
            * max_step
            * (1.0 + trace.broadcast_delay / trace.dt_ctrl)
            / config.t_f
        )
        violations = int(np.count_nonzero(residual > eps))
        excursion = float(residual.max()) if len(residual) else 0.0
        worst = max(worst, excursion)
        total_ticks += len(residual)
        total_violations += violations
        segments.append(
            {
                "t_start": t_start,
                "r": r,
                "n_ticks": int(len(residual)),
                "eps_disc": eps,
                "max_excursion": excursion,
                "violation_fraction": violations / len(residual),
            }
        )

    return {
        "lower_limit_mode": lower_limit_mode,
        "caveat": caveat,
        "eps_rule": "2 * max|e_f| * max_tick_step(r - y_energy) * (1 + delay/dt_ctrl) / t_f",
        "segments": segments,
        "overall": {
            "ticks": total_ticks,
            "violation_fraction": (total_violations / total_ticks) if total_ticks else None,
            "max_excursion": worst if total_ticks else None,
        },
    }


def metrics_document(trace: SimTrace, scenario: Scenario) -> dict:
    """Bundle of all analyses for one trace, JSON-serializable."""
    cycle_ends = cycle_end_times(trace)
    spread_times = [0.0, *cycle_ends]
    doc = {
        "mode": trace.mode,
        "tracking": tracking_metrics(trace),
        "power_steadystate_residual": power_steadystate_residual(trace),
        "soc_spread": {
            "energy": soc_spread(trace, "energy", spread_times),
            "power": soc_spread(trace, "power", spread_times),
        },
        "cycle_end_times": cycle_ends,
    }
    if trace.mode == MODE_DECENTRALIZED and trace.columns(ENERGY):
        doc["lyapunov"] = lyapunov_report(trace, scenario)
    else:
        doc["lyapunov"] = None
    return doc


def _check_reachable(target: float, shape: SwitchingShape) -> None:
    if not shape.u_charge_max <= target <= shape.u_discharge_max:
        raise InfeasibleReference(
            f"target power {target} W is outside the switching curve range "
            f"[{shape.u_charge_max}, {shape.u_discharge_max}]"
        )
