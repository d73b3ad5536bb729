"""Scenario files: a self-describing JSON format with strict validation.

Every scenario is one JSON document with named sections (timing,
controller, batteries, demand, failures, and optional plant/centralized
switches). Unknown keys are rejected so typos fail loudly, and every
violation reports the offending field path.
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

from .battery import BatteryParams, SOC_TERMINAL_CURRENT
from .centralized import DEFAULT_DETECT_DELAY_S
from .controllers import GAIN_FIXED
from .errors import ConfigError
from .scenario import (
    BatteryEntry,
    ControllerSettings,
    DemandProfile,
    FailureEvent,
    KindControlSettings,
    MODE_DECENTRALIZED,
    Scenario,
    SimConfig,
    square_wave_demand,
)

_TIMING_KEYS = {"dt_sim", "dt_ctrl", "broadcast_delay", "t_f", "duration"}
_KIND_KEYS = {"k_discharge", "k_charge", "phi_discharge_sat", "phi_charge_sat"}
_BATTERY_KEYS = {
    "id",
    "kind",
    "ocv",
    "internal_resistance",
    "capacity_ah",
    "soc_min",
    "soc_max",
    "max_discharge_power",
    "max_charge_power",
    "initial_soc",
}


def load_scenario(path: str | Path) -> Scenario:
    """Parse and validate a scenario file."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            doc = json.load(handle)
    except FileNotFoundError as exc:
        raise ConfigError(f"scenario file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    return scenario_from_dict(doc)


def load_preset(name: str) -> Scenario:
    """Load a scenario bundled with the package."""
    ref = resources.files("bessim.presets").joinpath(f"{name}.json")
    with resources.as_file(ref) as path:
        return load_scenario(path)


def write_scenario(scenario: Scenario, path: str | Path) -> None:
    """Serialize a scenario so that loading it back gives an equal object."""
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(scenario_to_dict(scenario), handle, indent=2, sort_keys=True)
        handle.write("\n")


def scenario_from_dict(doc: Any) -> Scenario:
    _expect_mapping(doc, "<root>")
    _expect_keys(
        doc,
        "<root>",
        required={"timing", "controller", "batteries", "demand"},
        optional={"mode", "failures", "plant", "centralized"},
    )

    timing = doc["timing"]
    _expect_mapping(timing, "timing")
    _expect_keys(timing, "timing", required=_TIMING_KEYS, optional=set())
    for key in _TIMING_KEYS:
        _expect_number(timing[key], f"timing.{key}")

    controller = doc["controller"]
    _expect_mapping(controller, "controller")
    _expect_keys(
        controller,
        "controller",
        required={"energy", "power"},
        optional={"gain_mode", "anti_windup"},
    )
    kind_settings = {}
    for kind in ("energy", "power"):
        section = controller[kind]
        _expect_mapping(section, f"controller.{kind}")
        _expect_keys(
            section,
            f"controller.{kind}",
            required={"k_discharge", "k_charge"},
            optional=_KIND_KEYS - {"k_discharge", "k_charge"},
        )
        for key in section:
            _expect_number(section[key], f"controller.{kind}.{key}")
        kind_settings[kind] = KindControlSettings(
            k_discharge=float(section["k_discharge"]),
            k_charge=float(section["k_charge"]),
            phi_discharge_sat=float(section.get("phi_discharge_sat", 1.0)),
            phi_charge_sat=float(section.get("phi_charge_sat", -1.0)),
        )

    plant = doc.get("plant", {})
    _expect_mapping(plant, "plant")
    _expect_keys(
        plant,
        "plant",
        required=set(),
        optional={"soc_integration_mode", "protective_soc_clamp"},
    )

    central = doc.get("centralized", {})
    _expect_mapping(central, "centralized")
    _expect_keys(central, "centralized", required=set(), optional={"failure_detect_delay"})

    config = SimConfig(
        duration=float(timing["duration"]),
        dt_sim=float(timing["dt_sim"]),
        dt_ctrl=float(timing["dt_ctrl"]),
        broadcast_delay=float(timing["broadcast_delay"]),
        t_f=float(timing["t_f"]),
        mode=_expect_str(doc.get("mode", MODE_DECENTRALIZED), "mode"),
        gain_mode=_expect_str(controller.get("gain_mode", GAIN_FIXED), "controller.gain_mode"),
        anti_windup=_expect_bool(controller.get("anti_windup", False), "controller.anti_windup"),
        soc_integration_mode=_expect_str(
            plant.get("soc_integration_mode", SOC_TERMINAL_CURRENT),
            "plant.soc_integration_mode",
        ),
        protective_soc_clamp=_expect_bool(
            plant.get("protective_soc_clamp", False), "plant.protective_soc_clamp"
        ),
        failure_detect_delay=float(
            _expect_number(
                central.get("failure_detect_delay", DEFAULT_DETECT_DELAY_S),
                "centralized.failure_detect_delay",
            )
        ),
    )

    batteries = doc["batteries"]
    if not isinstance(batteries, list):
        raise ConfigError("batteries: expected a list")
    entries = []
    for pos, item in enumerate(batteries):
        where = f"batteries[{pos}]"
        _expect_mapping(item, where)
        _expect_keys(item, where, required=_BATTERY_KEYS, optional=set())
        params = BatteryParams(
            id=_expect_str(item["id"], f"{where}.id"),
            kind=_expect_str(item["kind"], f"{where}.kind"),
            ocv=float(_expect_number(item["ocv"], f"{where}.ocv")),
            internal_resistance=float(
                _expect_number(item["internal_resistance"], f"{where}.internal_resistance")
            ),
            capacity_ah=float(_expect_number(item["capacity_ah"], f"{where}.capacity_ah")),
            soc_min=float(_expect_number(item["soc_min"], f"{where}.soc_min")),
            soc_max=float(_expect_number(item["soc_max"], f"{where}.soc_max")),
            max_discharge_power=float(
                _expect_number(item["max_discharge_power"], f"{where}.max_discharge_power")
            ),
            max_charge_power=float(
                _expect_number(item["max_charge_power"], f"{where}.max_charge_power")
            ),
        )
        initial_soc = float(_expect_number(item["initial_soc"], f"{where}.initial_soc"))
        entries.append(BatteryEntry(params=params, initial_soc=initial_soc))

    demand = _parse_demand(doc["demand"])

    failures = []
    for pos, item in enumerate(doc.get("failures", [])):
        where = f"failures[{pos}]"
        _expect_mapping(item, where)
        _expect_keys(item, where, required={"battery_id", "time"}, optional=set())
        failures.append(
            FailureEvent(
                battery_id=_expect_str(item["battery_id"], f"{where}.battery_id"),
                time=float(_expect_number(item["time"], f"{where}.time")),
            )
        )

    return Scenario(
        config=config,
        batteries=tuple(entries),
        controllers=ControllerSettings(
            energy=kind_settings["energy"], power=kind_settings["power"]
        ),
        demand=demand,
        failures=tuple(failures),
    )


def scenario_to_dict(scenario: Scenario) -> dict:
    cfg = scenario.config
    return {
        "mode": cfg.mode,
        "timing": {
            "dt_sim": cfg.dt_sim,
            "dt_ctrl": cfg.dt_ctrl,
            "broadcast_delay": cfg.broadcast_delay,
            "t_f": cfg.t_f,
            "duration": cfg.duration,
        },
        "controller": {
            "gain_mode": cfg.gain_mode,
            "anti_windup": cfg.anti_windup,
            "energy": _kind_to_dict(scenario.controllers.energy),
            "power": _kind_to_dict(scenario.controllers.power),
        },
        "plant": {
            "soc_integration_mode": cfg.soc_integration_mode,
            "protective_soc_clamp": cfg.protective_soc_clamp,
        },
        "centralized": {"failure_detect_delay": cfg.failure_detect_delay},
        "batteries": [
            {
                "id": b.params.id,
                "kind": b.params.kind,
                "ocv": b.params.ocv,
                "internal_resistance": b.params.internal_resistance,
                "capacity_ah": b.params.capacity_ah,
                "soc_min": b.params.soc_min,
                "soc_max": b.params.soc_max,
                "max_discharge_power": b.params.max_discharge_power,
                "max_charge_power": b.params.max_charge_power,
                "initial_soc": b.initial_soc,
            }
            for b in scenario.batteries
        ],
        "demand": {"segments": [[start, value] for start, value in scenario.demand.segments]},
        "failures": [
            {"battery_id": ev.battery_id, "time": ev.time} for ev in scenario.failures
        ],
    }


def _kind_to_dict(settings: KindControlSettings) -> dict:
    return {
        "k_discharge": settings.k_discharge,
        "k_charge": settings.k_charge,
        "phi_discharge_sat": settings.phi_discharge_sat,
        "phi_charge_sat": settings.phi_charge_sat,
    }


def _parse_demand(section: Any) -> DemandProfile:
    _expect_mapping(section, "demand")
    _expect_keys(section, "demand", required=set(), optional={"segments", "square_wave"})
    has_segments = "segments" in section
    has_square = "square_wave" in section
    if has_segments == has_square:
        raise ConfigError("demand: give exactly one of 'segments' or 'square_wave'")
    if has_square:
        square = section["square_wave"]
        _expect_mapping(square, "demand.square_wave")
        _expect_keys(
            square,
            "demand.square_wave",
            required={"cycles"},
            optional={"lead", "phase", "amplitude"},
        )
        cycles = square["cycles"]
        if not isinstance(cycles, int) or isinstance(cycles, bool):
            raise ConfigError("demand.square_wave.cycles: expected an integer")
        return square_wave_demand(
            cycles=cycles,
            lead=float(_expect_number(square.get("lead", 60.0), "demand.square_wave.lead")),
            phase=float(_expect_number(square.get("phase", 1200.0), "demand.square_wave.phase")),
            amplitude=float(
                _expect_number(square.get("amplitude", 3000.0), "demand.square_wave.amplitude")
            ),
        )
    segments = section["segments"]
    if not isinstance(segments, list):
        raise ConfigError("demand.segments: expected a list of [start, watts] pairs")
    parsed = []
    for pos, pair in enumerate(segments):
        where = f"demand.segments[{pos}]"
        if not isinstance(pair, list) or len(pair) != 2:
            raise ConfigError(f"{where}: expected a [start, watts] pair")
        parsed.append(
            (
                float(_expect_number(pair[0], f"{where}[0]")),
                float(_expect_number(pair[1], f"{where}[1]")),
            )
        )
    return DemandProfile(tuple(parsed))


def _expect_mapping(obj: Any, path: str) -> None:
    if not isinstance(obj, Mapping):
        raise ConfigError(f"{path}: expected an object")


def _expect_keys(obj: Mapping, path: str, required: set[str], optional: set[str]) -> None:
    missing = required - obj.keys()
    if missing:
        raise ConfigError(f"{path}: missing required key(s) {sorted(missing)}")
    unknown = obj.keys() - required - optional
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {sorted(unknown)}")


def _expect_number(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {value!r}")
    return value


def _expect_str(value: Any, path: str) -> str:
    if not isinstance(value, str):
        raise ConfigError(f"{path}: expected a string, got {value!r}")
    return value


def _expect_bool(value: Any, path: str) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(f"{path}: expected true/false, got {value!r}")
    return value
