"""Deterministic logical-time executor for compiled block graphs.

One driver advances tags in order. At each tag, injected and timer events are
placed on the boundary ports and relayed along connections; the triggered
reactions then execute exactly once each, following the graph's topological
order (or any caller-supplied order consistent with causality — traces do
not depend on the choice because each tag's events are canonically ordered
before they are appended).

Faults inside a tag (expression errors, a task raising both success and
failure, merge conflicts) do not stop the tag: the faulting reaction's
writes are suppressed, the remaining reactions run, and the tag's events are
truncated after the canonically first error. The run then stops at that tag.
This makes the recorded trace independent of the execution schedule even in
the failing case.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

from .bodies import ExternFn, LeafRuntime, build_leaf_runtimes, initial_states, invoke_leaf
from .model import ABSENT, EvalError, Status, Value
from .scenario import Scenario, ScenarioError, check_scenario_ports
from .trace import (
    KIND_ERROR,
    KIND_INVOKED,
    KIND_PORT,
    KIND_STATUS,
    KIND_WARNING,
    Tag,
    TraceEvent,
    order_tag_events,
    serialize_trace,
)
from .translator import ReactorGraph


@dataclass
class RunState:
    """Persistent cross-tag state: task states, script cursors, Pre buffers."""

    task_states: dict[str, dict[str, Value]]
    cursors: dict[str, int]
    pre_buffers: dict[str, object]  # block id -> Value | ABSENT
    last_tag: Tag | None = None

    def clone(self) -> "RunState":
        return RunState(
            task_states={k: dict(v) for k, v in self.task_states.items()},
            cursors=dict(self.cursors),
            pre_buffers=dict(self.pre_buffers),
            last_tag=self.last_tag,
        )


@dataclass
class TickResult:
    events: list[TraceEvent]
    outputs: dict[str, Value]
    error: TraceEvent | None = None


@dataclass
class RunResult:
    events: list[TraceEvent]
    error: TraceEvent | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def to_jsonl(self) -> str:
        return serialize_trace(self.events)


def initial_state(graph: ReactorGraph) -> RunState:
    return RunState(
        task_states=initial_states(graph.defn),
        cursors={path: 0 for path, _ in graph.resolution.leaf_order.items()},
        pre_buffers={
            b.id: ABSENT for b in graph.blocks.values() if b.kind == "pre"
        },
    )


class Engine:
    """Single-threaded executor bound to one graph; instances are independent."""

    def __init__(self, graph: ReactorGraph, externs: Mapping[str, ExternFn] | None = None):
        self.graph = graph
        self.leaves: dict[str, LeafRuntime] = build_leaf_runtimes(
            graph.defn, graph.resolution, externs
        )
        self._inputs = graph.boundary_inputs()
        self._outputs = graph.boundary_outputs()

    # -- scenario checking ----------------------------------------------------

    def check_scenario(self, scenario: Scenario) -> None:
        check_scenario_ports(scenario, self.graph.trace_ctx.input_types)

    # -- single tag -----------------------------------------------------------

    def execute_tag(
        self,
        state: RunState,
        tag: Tag,
        events: Mapping[str, Value],
        order: list[str] | None = None,
    ) -> TickResult:
        """Run one tag in place (mutates ``state``)."""
        g = self.graph
        ctx = g.trace_ctx
        port_values: dict[str, object] = {}

        def flood(port: str, value: object) -> None:
            port_values[port] = value
            for nxt in g.adjacency.get(port, ()):  # relay copies are instantaneous
                flood(nxt, value)

        raw_events: list[TraceEvent] = []
        for name, value in events.items():
            if name not in self._inputs:
                raise ScenarioError(f"UnknownPort: no input port '{name}'")
            flood(self._inputs[name], value)
            raw_events.append(TraceEvent(tag.time, tag.microstep, KIND_PORT, name, value))

        invoked: set[str] = set()
        errored = False

        for rid in order if order is not None else g.top_order:
            r = g.reactions[rid]
            if not any(t in port_values for t in r.triggers):
                continue
            block = g.blocks[r.block]
            try:
                emitted = self._run_reaction(r, block, state, port_values, raw_events, tag, invoked)
            except EvalError as e:
                errored = True
                raw_events.append(
                    TraceEvent(
                        tag.time,
                        tag.microstep,
                        KIND_ERROR,
                        block.node_path or block.id,
                        {"code": e.code, "message": e.message},
                    )
                )
                continue
            for port, value in emitted:
                flood(port, value)

        # Statuses materialize on the node blocks' success/failure ports.
        for b in g.node_blocks():
            succ = port_values.get(f"{b.id}:out:success")
            fail = port_values.get(f"{b.id}:out:failure")
            if succ is not None:
                raw_events.append(
                    TraceEvent(tag.time, tag.microstep, KIND_STATUS, b.node_path, Status.SUCCESS.value)
                )
            if fail is not None:
                raw_events.append(
                    TraceEvent(tag.time, tag.microstep, KIND_STATUS, b.node_path, Status.FAILURE.value)
                )

        outputs: dict[str, Value] = {}
        for name, pid in self._outputs.items():
            if pid in port_values:
                v = port_values[pid]
                outputs[name] = v  # type: ignore[assignment]
                raw_events.append(TraceEvent(tag.time, tag.microstep, KIND_PORT, name, v))

        ordered, error = order_tag_events(raw_events, ctx, invoked)
        state.last_tag = tag
        assert error is not None or not errored
        return TickResult(ordered, outputs, error)

    def _run_reaction(
        self,
        r,
        block,
        state: RunState,
        port_values: dict[str, object],
        raw_events: list[TraceEvent],
        tag: Tag,
        invoked: set[str],
    ) -> list[tuple[str, object]]:
        g = self.graph
        if r.kind == "task-body":
            path = block.node_path
            rt = self.leaves[path]
            env = {
                g.ports[p].name: port_values.get(p, ABSENT) for p in r.sources
            }
            invoked.add(path)
            raw_events.append(TraceEvent(tag.time, tag.microstep, KIND_INVOKED, path, None))
            outcome = invoke_leaf(rt, env, state.task_states[path], state.cursors[path])
            state.cursors[path] = outcome.next_cursor
            if outcome.warning:
                raw_events.append(
                    TraceEvent(
                        tag.time,
                        tag.microstep,
                        KIND_WARNING,
                        path,
                        {"code": "ConditionRunning", "message": outcome.warning},
                    )
                )
            writes: list[tuple[str, object]] = []
            if outcome.success:
                writes.append((f"{block.id}:out:success", True))
            if outcome.failure:
                writes.append((f"{block.id}:out:failure", True))
            for name, value in outcome.emits.items():
                writes.append((f"{block.id}:out:{name}", value))
            return writes

        if r.kind == "merge":
            present = [p for p in block.merge_inputs if p in port_values]
            if block.merge_mode == "at-most-one":
                if len(present) > 1:
                    raise EvalError(
                        "MergeConflict",
                        f"at-most-one merge received {len(present)} events",
                    )
                return [(r.effects[0], port_values[present[0]])] if present else []
            # latest-wins: highest priority (last index) present input
            winner = present[-1] if present else None
            return [(r.effects[0], port_values[winner])] if winner else []

        if r.kind == "collector":
            n = block.width
            m = block.threshold
            s = sum(1 for i in range(n) if f"{block.id}:in:s{i}" in port_values)
            f = sum(1 for i in range(n) if f"{block.id}:in:f{i}" in port_values)
            if s >= m:
                return [(f"{block.id}:out:success", True)]
            if f >= n - m + 1:
                return [(f"{block.id}:out:failure", True)]
            return []

        if r.kind == "pre-emit":
            buf = state.pre_buffers[block.id]
            return [] if buf is ABSENT else [(f"{block.id}:out:out", buf)]

        if r.kind == "pre-store":
            state.pre_buffers[block.id] = port_values[f"{block.id}:in:in"]
            return []

        raise AssertionError(r.kind)

    # -- whole runs -----------------------------------------------------------

    def run(self, scenario: Scenario, order: list[str] | None = None) -> RunResult:
        self.check_scenario(scenario)
        state = initial_state(self.graph)
        events: list[TraceEvent] = []
        error: TraceEvent | None = None
        for time_ms in scenario.tag_times():
            tick = self.execute_tag(state, Tag(time_ms), scenario.events_at(time_ms), order)
            events.extend(tick.events)
            if tick.error is not None:
                error = tick.error
                break
        return RunResult(events, error)


def run(
    graph: ReactorGraph,
    scenario: Scenario,
    externs: Mapping[str, ExternFn] | None = None,
    order: list[str] | None = None,
) -> RunResult:
    """Compile-and-go entry point; see Engine for the semantics."""
    return Engine(graph, externs).run(scenario, order)


def step(
    graph: ReactorGraph,
    state: RunState,
    tag: Tag,
    events: Mapping[str, Value],
    externs: Mapping[str, ExternFn] | None = None,
) -> tuple[RunState, TickResult]:
    """Pure single-tag entry point: the input state is not mutated and the
    same (state, events) always produce the same outputs."""
    if state.last_tag is not None and not (state.last_tag < tag):
        raise ValueError(f"tag {tag} is not after previous tag {state.last_tag}")
    engine = Engine(graph, externs)
    next_state = state.clone()
    result = engine.execute_tag(next_state, tag, dict(events))
    return next_state, result


__all__ = [
    "Engine",
    "RunResult",
    "RunState",
    "TickResult",
    "initial_state",
    "run",
    "step",
]
