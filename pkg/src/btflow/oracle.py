"""Direct recursive tick interpreter over BtDef; the independent reference
semantics for differential testing against the compiled graph.

A tick walks the tree: sequences stop at the first non-success child,
fallbacks at the first non-failure, parallels tick every child and apply the
threshold rule. Channel reads resolve to the latest value written earlier in
the same tick by a leaf before the reader in execution order; a reader
positioned at or before some writer instead receives the channel's final
value from the previous tick (mirroring the generated Pre blocks, which only
overwrite their buffer when a writer actually fired). A reader placed after
every writer sees nothing when none of them fired, because the compiled
wiring gives such a reader no Pre connection.

Traces use the same canonical event format and per-tag ordering as the
runtime, so equivalent executions are byte-identical.
"""

from __future__ import annotations

from typing import Mapping

from .bodies import ExternFn, build_leaf_runtimes, initial_states, invoke_leaf
from .model import (
    ABSENT,
    BtDef,
    BtNode,
    EvalError,
    Fallback,
    Parallel,
    ROOT_PATH,
    Sequence,
    Status,
    Value,
    child_path,
    is_leaf,
    resolve,
    validate,
)
from .runtime import RunResult
from .scenario import Scenario, check_scenario_ports
from .trace import (
    KIND_ERROR,
    KIND_INVOKED,
    KIND_PORT,
    KIND_STATUS,
    KIND_WARNING,
    Tag,
    TraceEvent,
    build_trace_context,
    order_tag_events,
)


class _TickAbort(Exception):
    def __init__(self, event: TraceEvent):
        self.event = event


class Oracle:
    def __init__(self, defn: BtDef, externs: Mapping[str, ExternFn] | None = None):
        report = validate(defn)
        if not report.ok:
            first = report.errors[0]
            raise ValueError(f"definition is not interpretable: {first.code}: {first.message}")
        self.defn = defn
        self.res = resolve(defn)
        self.ctx = build_trace_context(defn, self.res)
        self.leaves = build_leaf_runtimes(defn, self.res, externs)
        self.backward = {key: self.res.backward_readers(key) for key in self.res.channels}
        # persistent state
        self.states = initial_states(defn)
        self.cursors = {p: 0 for p in self.res.leaf_order}
        self.channel_pre: dict[tuple[str, str], object] = {key: ABSENT for key in self.res.channels}
        # per-tick scratch
        self._now: dict[tuple[str, str], Value] = {}
        self._outputs: dict[str, Value] = {}
        self._inputs: dict[str, Value] = {}
        self._raw: list[TraceEvent] = []
        self._invoked: set[str] = set()
        self._tag = Tag(0)

    # -- one tick --------------------------------------------------------------

    def tick(self, tag: Tag, inputs: Mapping[str, Value]) -> Status:
        """Evaluate the whole tree once; raises _TickAbort on faults."""
        self._now = {}
        self._outputs = {}
        self._inputs = dict(inputs)
        self._tag = tag
        status = self._tick_node(ROOT_PATH, self.defn.root)
        for key, v in self._now.items():
            self.channel_pre[key] = v
        return status

    def _emit(self, kind: str, subject: str, payload: object) -> None:
        self._raw.append(TraceEvent(self._tag.time, self._tag.microstep, kind, subject, payload))

    def _tick_node(self, path: str, node: BtNode) -> Status:
        if is_leaf(node):
            return self._tick_leaf(path)
        if isinstance(node, Sequence):
            status = Status.SUCCESS
            for i, child in enumerate(node.children):
                s = self._tick_node(child_path(path, i), child)
                if s is not Status.SUCCESS:
                    status = s
                    break
        elif isinstance(node, Fallback):
            status = Status.FAILURE
            for i, child in enumerate(node.children):
                s = self._tick_node(child_path(path, i), child)
                if s is not Status.FAILURE:
                    status = s
                    break
        else:
            assert isinstance(node, Parallel)
            results = [
                self._tick_node(child_path(path, i), child)
                for i, child in enumerate(node.children)
            ]
            n = len(results)
            s = sum(1 for r in results if r is Status.SUCCESS)
            f = sum(1 for r in results if r is Status.FAILURE)
            if s >= node.threshold:
                status = Status.SUCCESS
            elif f >= n - node.threshold + 1:
                status = Status.FAILURE
            else:
                status = Status.RUNNING
        if status is not Status.RUNNING:
            self._emit(KIND_STATUS, path, status.value)
        return status

    def _tick_leaf(self, path: str) -> Status:
        rt = self.leaves[path]
        self._invoked.add(path)
        self._emit(KIND_INVOKED, path, None)
        env: dict[str, object] = {}
        for ref, target in rt.sources.items():
            if target.kind == "input":
                env[ref] = self._inputs.get(ref, ABSENT)
            else:
                key = target.channel_key
                assert key is not None
                if key in self._now:
                    env[ref] = self._now[key]
                elif path in self.backward[key]:
                    env[ref] = self.channel_pre[key]
                else:
                    env[ref] = ABSENT
        try:
            outcome = invoke_leaf(rt, env, self.states[path], self.cursors[path])
        except EvalError as e:
            raise _TickAbort(
                TraceEvent(
                    self._tag.time,
                    self._tag.microstep,
                    KIND_ERROR,
                    path,
                    {"code": e.code, "message": e.message},
                )
            ) from e
        self.cursors[path] = outcome.next_cursor
        if outcome.warning:
            self._emit(
                KIND_WARNING, path, {"code": "ConditionRunning", "message": outcome.warning}
            )
        for name, value in outcome.emits.items():
            target = rt.effects[name]
            if target.kind == "channel":
                assert target.channel_key is not None
                self._now[target.channel_key] = value
            else:
                self._outputs[name] = value
        if outcome.success:
            self._emit(KIND_STATUS, path, Status.SUCCESS.value)
            return Status.SUCCESS
        if outcome.failure:
            self._emit(KIND_STATUS, path, Status.FAILURE.value)
            return Status.FAILURE
        return Status.RUNNING

    # -- whole runs --------------------------------------------------------------

    def run(self, scenario: Scenario) -> RunResult:
        check_scenario_ports(scenario, self.ctx.input_types)
        out: list[TraceEvent] = []
        for time_ms in scenario.tag_times():
            tag = Tag(time_ms)
            events = scenario.events_at(time_ms)
            self._raw = []
            self._invoked = set()
            self._outputs = {}
            self._tag = tag
            for name, value in events.items():
                self._emit(KIND_PORT, name, value)
            status: Status | None = None
            aborted = False
            if "start" in events:
                try:
                    status = self.tick(tag, {k: v for k, v in events.items() if k != "start"})
                except _TickAbort as e:
                    self._raw.append(e.event)
                    aborted = True
            if not aborted and status is not None:
                if status is Status.SUCCESS:
                    self._emit(KIND_PORT, "success", True)
                elif status is Status.FAILURE:
                    self._emit(KIND_PORT, "failure", True)
            if not aborted:
                for name in self._outputs:
                    self._emit(KIND_PORT, name, self._outputs[name])
            ordered, error = order_tag_events(self._raw, self.ctx, self._invoked)
            out.extend(ordered)
            if error is not None:
                return RunResult(out, error)
        return RunResult(out, None)


def run_oracle(
    defn: BtDef, scenario: Scenario, externs: Mapping[str, ExternFn] | None = None
) -> RunResult:
    return Oracle(defn, externs).run(scenario)
