"""Scenario descriptions: timers, value injections, and the run horizon.

JSON format:

    {
      "timers": [{"offset_ms": 0, "period_ms": 250, "port": "start"}],
      "injections": [{"time_ms": 250, "port": "newJob", "value": "j1"}],
      "horizon_ms": 30000
    }

Timers target the implicit start port (they carry no payload; start events
are recorded as boolean true). Injections target declared input ports or
"start". What a timer with period 0 does: it fires exactly once, at its
offset. Tags at times past the horizon are not processed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .model import BtflowError, Value


class ScenarioError(BtflowError):
    pass


@dataclass(frozen=True)
class TimerSpec:
    offset_ms: int
    period_ms: int  # 0 => one-shot
    port: str = "start"


@dataclass(frozen=True)
class Injection:
    time_ms: int
    port: str
    value: Value


@dataclass
class Scenario:
    timers: list[TimerSpec] = field(default_factory=list)
    injections: list[Injection] = field(default_factory=list)
    horizon_ms: int = 0

    def tag_times(self) -> list[int]:
        times: set[int] = set()
        for t in self.timers:
            k = t.offset_ms
            while k <= self.horizon_ms:
                times.add(k)
                if t.period_ms <= 0:
                    break
                k += t.period_ms
        for inj in self.injections:
            if inj.time_ms <= self.horizon_ms:
                times.add(inj.time_ms)
        return sorted(times)

    def events_at(self, time_ms: int) -> dict[str, Value]:
        """Port events present at one tag; start coalesces to a single true."""
        events: dict[str, Value] = {}
        for t in self.timers:
            if t.offset_ms == time_ms or (
                t.period_ms > 0
                and time_ms >= t.offset_ms
                and (time_ms - t.offset_ms) % t.period_ms == 0
            ):
                events[t.port] = True
        for inj in self.injections:
            if inj.time_ms == time_ms:
                events[inj.port] = inj.value
        return events


def tick_scenario(period_ms: int, ticks: int) -> Scenario:
    """A plain start-driven scenario with the given number of ticks."""
    if ticks <= 0:
        return Scenario(horizon_ms=-1)
    return Scenario(
        timers=[TimerSpec(0, period_ms, "start")],
        horizon_ms=(ticks - 1) * period_ms,
    )


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ScenarioError(msg)


def _check_value(v: object, where: str) -> Value:
    if isinstance(v, (bool, str)):
        return v
    if isinstance(v, int):
        _require(-(2**63) <= v <= 2**63 - 1, f"{where}: integer out of 64-bit range")
        return v
    if isinstance(v, float):
        return v
    raise ScenarioError(f"{where}: value must be a bool, int, float or string")


def scenario_from_dict(data: object) -> Scenario:
    _require(isinstance(data, dict), "scenario must be a JSON object")
    assert isinstance(data, dict)
    unknown = set(data) - {"timers", "injections", "horizon_ms"}
    _require(not unknown, f"unknown scenario keys: {', '.join(sorted(unknown))}")
    _require("horizon_ms" in data, "scenario requires horizon_ms")
    horizon = data["horizon_ms"]
    _require(isinstance(horizon, int) and not isinstance(horizon, bool) and horizon >= 0,
             "horizon_ms must be a non-negative integer")

    timers: list[TimerSpec] = []
    for i, t in enumerate(data.get("timers", [])):
        where = f"timers[{i}]"
        _require(isinstance(t, dict), f"{where} must be an object")
        _require(set(t) <= {"offset_ms", "period_ms", "port"}, f"{where}: unknown keys")
        offset = t.get("offset_ms", 0)
        period = t.get("period_ms", 0)
        port = t.get("port", "start")
        for fname, v in (("offset_ms", offset), ("period_ms", period)):
            _require(isinstance(v, int) and not isinstance(v, bool) and v >= 0,
                     f"{where}.{fname} must be a non-negative integer")
        _require(port == "start", f"{where}: timers may only target the start port")
        timers.append(TimerSpec(offset, period, port))

    injections: list[Injection] = []
    seen: set[tuple[int, str]] = set()
    for i, inj in enumerate(data.get("injections", [])):
        where = f"injections[{i}]"
        _require(isinstance(inj, dict), f"{where} must be an object")
        _require(set(inj) <= {"time_ms", "port", "value"}, f"{where}: unknown keys")
        _require("time_ms" in inj and "port" in inj, f"{where} requires time_ms and port")
        time_ms = inj["time_ms"]
        _require(isinstance(time_ms, int) and not isinstance(time_ms, bool) and time_ms >= 0,
                 f"{where}.time_ms must be a non-negative integer")
        port = inj["port"]
        _require(isinstance(port, str), f"{where}.port must be a string")
        if port == "start":
            value = inj.get("value", True)
            _require(value is True, f"{where}: start injections carry no payload (value must be true)")
        else:
            _require("value" in inj, f"{where} requires a value")
            value = _check_value(inj["value"], where)
        key = (time_ms, port)
        _require(key not in seen, f"{where}: duplicate injection for port '{port}' at {time_ms} ms")
        seen.add(key)
        injections.append(Injection(time_ms, port, value))
    injections.sort(key=lambda j: (j.time_ms, j.port))
    return Scenario(timers, injections, horizon)


def check_scenario_ports(scenario: Scenario, input_types: dict[str, object]) -> None:
    """Reject injections to undeclared ports and type-mismatched values.

    ``input_types`` maps accepted input port names to their ValueType (None
    for the payload-free start port).
    """
    from .model import type_of

    for inj in scenario.injections:
        if inj.port not in input_types:
            raise ScenarioError(f"UnknownPort: no input port '{inj.port}'")
        declared = input_types[inj.port]
        if declared is not None and type_of(inj.value) is not declared:
            raise ScenarioError(
                f"TypeMismatch: port '{inj.port}' is {declared.value}, "  # type: ignore[attr-defined]
                f"injected {type_of(inj.value).value}"
            )
    for t in scenario.timers:
        if t.port != "start":
            raise ScenarioError("UnknownPort: timers may only target 'start'")


def load_scenario(path: str | Path) -> Scenario:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ScenarioError(f"invalid scenario JSON: {e}") from e
    return scenario_from_dict(data)


def scenario_to_dict(s: Scenario) -> dict:
    return {
        "timers": [
            {"offset_ms": t.offset_ms, "period_ms": t.period_ms, "port": t.port}
            for t in s.timers
        ],
        "injections": [
            {"time_ms": j.time_ms, "port": j.port, "value": j.value} for j in s.injections
        ],
        "horizon_ms": s.horizon_ms,
    }
