"""Trace and metrics serialization.

Traces are delimited text: one header row naming every column, then one
row per simulation step in time order, with fixed decimal formatting so
identical runs produce byte-identical files. Power-like signals carry six
decimals; SOC and controller state carry twelve. The optional decimation
factor thins the file only, never the computation.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import json

import numpy as np
import pandas as pd

from .engine import SimTrace
from .scenario import Scenario

_SIGNAL_FMT = "%.6f"
_STATE_FMT = "%.12f"
_TIME_FMT = "%.4f"


def trace_columns(battery_ids: Sequence[str]) -> list[str]:
    cols = ["t", "r", "y", "y_E", "y_P", "e", "e_E"]
    cols += [f"u_{b}" for b in battery_ids]
    cols += [f"s_{b}" for b in battery_ids]
    cols += [f"phi_{b}" for b in battery_ids]
    cols += [f"att_{b}" for b in battery_ids]
    return cols


def write_trace(trace: SimTrace, path: str | Path, decimate: int = 1) -> None:
    """Write a trace as CSV, keeping every ``decimate``-th row."""
    if decimate < 1:
        raise ValueError("decimate must be >= 1")
    rows = np.arange(0, len(trace), decimate)
    header = ",".join(trace_columns(trace.battery_ids))
    n_batt = len(trace.battery_ids)
    signal_part = ",".join([_SIGNAL_FMT] * (6 + n_batt))
    state_part = ",".join([_STATE_FMT] * (2 * n_batt))
    att_part = ",".join(["%d"] * n_batt)
    fmt = ",".join([_TIME_FMT, signal_part, state_part, att_part])
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(header + "\n")
        for i in rows:
            values = (
                float(trace.t[i]),
                float(trace.r[i]),
                float(trace.y[i]),
                float(trace.y_energy[i]),
                float(trace.y_power[i]),
                float(trace.e[i]),
                float(trace.e_filtered[i]),
                *(float(v) for v in trace.u[i]),
                *(float(v) for v in trace.soc[i]),
                *(float(v) for v in trace.phi[i]),
                *(int(v) for v in trace.attached[i]),
            )
            handle.write(fmt % values + "\n")


def read_trace(path: str | Path, scenario: Scenario) -> SimTrace:
    """Load a trace written by write_trace.

    The scenario supplies battery kinds and the timing metadata that the
    CSV itself does not carry; its battery list must match the columns.
    """
    frame = pd.read_csv(path)
    ids = [c[2:] for c in frame.columns if c.startswith("u_")]
    expected = scenario.battery_ids()
    if ids != expected:
        raise ValueError(
            f"trace batteries {ids} do not match scenario batteries {expected}"
        )
    kinds = scenario.kinds()
    n = len(frame)
    dt_rows = float(frame["t"].iloc[1] - frame["t"].iloc[0]) if n > 1 else scenario.config.dt_sim
    return SimTrace(
        t=frame["t"].to_numpy(),
        r=frame["r"].to_numpy(),
        y=frame["y"].to_numpy(),
        y_energy=frame["y_E"].to_numpy(),
        y_power=frame["y_P"].to_numpy(),
        e=frame["e"].to_numpy(),
        e_filtered=frame["e_E"].to_numpy(),
        u=frame[[f"u_{b}" for b in ids]].to_numpy(),
        soc=frame[[f"s_{b}" for b in ids]].to_numpy(),
        phi=frame[[f"phi_{b}" for b in ids]].to_numpy(),
        attached=frame[[f"att_{b}" for b in ids]].to_numpy().astype(bool),
        battery_ids=ids,
        kinds=kinds,
        dt_sim=dt_rows,
        dt_ctrl=scenario.config.dt_ctrl,
        broadcast_delay=scenario.config.broadcast_delay,
        t_f=scenario.config.t_f,
        mode=scenario.config.mode,
    )


def write_metrics(document: dict, path: str | Path) -> None:
    """Write a metrics document as pretty-printed JSON."""
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(document, handle, indent=2, sort_keys=True)
        handle.write("\n")
