"""Differential execution of the compiled graph against the tick interpreter.

Both engines produce canonical trace lines; equivalence is plain byte
comparison. The fuzz driver derives definitions and scenarios from one seed,
so every reported divergence is reproducible from its seed alone, and a
failing case is also dumped to disk (definition, scenario, both traces, and
a scenario re-cut to end at the first divergent tag).
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from .bodies import ExternFn
from .generator import gen_random_def
from .model import BtDef, Value, ValueType
from .oracle import run_oracle
from .parser import pretty_print
from .runtime import run
from .scenario import Injection, Scenario, TimerSpec, scenario_to_dict
from .trace import serialize_event
from .translator import translate


@dataclass
class Divergence:
    seed: int
    line_no: int  # first differing line (0-based)
    compiled_line: str | None
    oracle_line: str | None
    time_ms: int | None

    def describe(self) -> str:
        return (
            f"seed {self.seed}: first divergence at trace line {self.line_no}"
            f" (tag time {self.time_ms} ms)\n"
            f"  compiled: {self.compiled_line!r}\n"
            f"  oracle:   {self.oracle_line!r}"
        )


@dataclass
class FuzzReport:
    total: int
    divergences: list[Divergence] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.divergences

    def summary(self) -> str:
        if self.ok:
            return f"{self.total}/{self.total} equivalent"
        return f"{self.total - len(self.divergences)}/{self.total} equivalent, " + "; ".join(
            d.describe() for d in self.divergences
        )


def compare_lines(
    compiled: list[str], oracle: list[str], seed: int = -1
) -> Divergence | None:
    import json

    for i, (a, b) in enumerate(zip(compiled, oracle)):
        if a != b:
            time_ms = json.loads(a).get("time") if a else None
            return Divergence(seed, i, a, b, time_ms)
    if len(compiled) != len(oracle):
        i = min(len(compiled), len(oracle))
        extra = compiled[i] if len(compiled) > len(oracle) else oracle[i]
        time_ms = json.loads(extra).get("time")
        return Divergence(
            seed,
            i,
            compiled[i] if i < len(compiled) else None,
            oracle[i] if i < len(oracle) else None,
            time_ms,
        )
    return None


def run_pair(
    defn: BtDef,
    scenario: Scenario,
    externs: Mapping[str, ExternFn] | None = None,
    seed: int = -1,
    graph=None,
) -> tuple[Divergence | None, list[str], list[str]]:
    """Run compiled and interpreted executions; None means byte-identical."""
    g = graph if graph is not None else translate(defn)
    compiled = [serialize_event(ev) for ev in run(g, scenario, externs).events]
    oracle = [serialize_event(ev) for ev in run_oracle(defn, scenario, externs).events]
    return compare_lines(compiled, oracle, seed), compiled, oracle


def gen_scenario(defn: BtDef, seed: int, ticks: int) -> Scenario:
    """Start timer every 1 ms plus seeded injections on declared inputs."""
    rng = random.Random(seed ^ 0x5EED)
    horizon = max(ticks - 1, 0)
    injections: list[Injection] = []
    seen: set[tuple[int, str]] = set()
    for port in defn.ports:
        if port.direction != "input":
            continue
        for _ in range(max(1, ticks // 4)):
            t = rng.randrange(0, max(horizon + 1, 1))
            if (t, port.name) in seen:
                continue
            seen.add((t, port.name))
            injections.append(Injection(t, port.name, _rand_value(rng, port.vtype)))
    injections.sort(key=lambda j: (j.time_ms, j.port))
    return Scenario([TimerSpec(0, 1, "start")], injections, horizon)


def _rand_value(rng: random.Random, vtype: ValueType) -> Value:
    if vtype is ValueType.BOOL:
        return rng.random() < 0.5
    if vtype is ValueType.INT:
        return rng.randrange(-40, 41)
    if vtype is ValueType.FLOAT:
        return round(rng.uniform(-5.0, 5.0), 3)
    return rng.choice(["go", "halt", "spin"])


def fuzz(
    count: int,
    seed: int,
    max_depth: int = 4,
    max_children: int = 5,
    ticks: int = 100,
    repro_dir: str | Path | None = None,
) -> FuzzReport:
    """Differential-fuzz ``count`` seeded cases; stops at the first divergence."""
    report = FuzzReport(total=count)
    for i in range(count):
        case_seed = seed + i
        defn = gen_random_def(case_seed, max_depth, max_children)
        scenario = gen_scenario(defn, case_seed, ticks)
        div, compiled, oracle = run_pair(defn, scenario, seed=case_seed)
        if div is not None:
            report.divergences.append(div)
            if repro_dir is not None:
                write_repro(Path(repro_dir), defn, scenario, compiled, oracle, div)
            break
    return report


def write_repro(
    directory: Path,
    defn: BtDef,
    scenario: Scenario,
    compiled: list[str],
    oracle: list[str],
    div: Divergence,
) -> Path:
    """Dump a self-contained reproduction, with the scenario horizon cut down
    to the first divergent tag."""
    import json

    directory = directory / f"fuzz_failure_{div.seed}"
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "def.btlf").write_text(pretty_print(defn), encoding="utf-8")
    (directory / "scenario.json").write_text(
        json.dumps(scenario_to_dict(scenario), indent=2) + "\n", encoding="utf-8"
    )
    if div.time_ms is not None:
        minimized = Scenario(
            scenario.timers,
            [j for j in scenario.injections if j.time_ms <= div.time_ms],
            div.time_ms,
        )
        (directory / "scenario.min.json").write_text(
            json.dumps(scenario_to_dict(minimized), indent=2) + "\n", encoding="utf-8"
        )
    (directory / "compiled.jsonl").write_text(
        "\n".join(compiled) + ("\n" if compiled else ""), encoding="utf-8"
    )
    (directory / "oracle.jsonl").write_text(
        "\n".join(oracle) + ("\n" if oracle else ""), encoding="utf-8"
    )
    (directory / "report.txt").write_text(div.describe() + "\n", encoding="utf-8")
    return directory
