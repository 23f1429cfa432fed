"""Canonical trace events and their deterministic per-tag ordering.

A trace is a list of events at logical tags. Serialization is byte-stable:
fixed field order, compact separators, floats printed with 9 significant
digits. Within one tag, events are ordered by a canonical key derived from
the tree structure (depth-first leaf order and composite depth), NOT from
the execution schedule, so any valid topological execution order of the
compiled graph and the direct tick interpreter all produce identical bytes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .model import (
    ABSENT,
    BtDef,
    Condition,
    ROOT_PATH,
    Resolution,
    Value,
    is_leaf,
    iter_nodes,
    path_depth,
)

KIND_PORT = "port-event"
KIND_INVOKED = "node-invoked"
KIND_STATUS = "status-emitted"
KIND_WARNING = "warning"
KIND_ERROR = "error"


@dataclass(frozen=True)
class Tag:
    time: int
    microstep: int = 0

    def __lt__(self, other: "Tag") -> bool:
        return (self.time, self.microstep) < (other.time, other.microstep)

    def __str__(self) -> str:
        return f"({self.time} ms, {self.microstep})"


@dataclass(frozen=True)
class TraceEvent:
    time: int
    microstep: int
    kind: str
    subject: str  # node path or port name
    payload: object  # None | Value | status string | {"code","message"}


def format_value(v: object) -> str:
    """Canonical JSON fragment for a payload value."""
    if v is None:
        return "null"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        s = format(v, ".9g")
        if "." not in s and "e" not in s and "E" not in s and "inf" not in s and "nan" not in s:
            s += ".0"
        return s
    if isinstance(v, str):
        return json.dumps(v, ensure_ascii=True)
    if isinstance(v, dict):
        inner = ",".join(f"{json.dumps(k, ensure_ascii=True)}:{format_value(v[k])}" for k in v)
        return "{" + inner + "}"
    raise TypeError(f"cannot serialize payload {v!r}")


def serialize_event(ev: TraceEvent) -> str:
    return (
        f'{{"time":{ev.time},"microstep":{ev.microstep},'
        f'"kind":{json.dumps(ev.kind)},"subject":{json.dumps(ev.subject, ensure_ascii=True)},'
        f'"payload":{format_value(ev.payload)}}}'
    )


def serialize_trace(events: list[TraceEvent]) -> str:
    """JSON lines, one event per line, trailing newline when non-empty."""
    if not events:
        return ""
    return "\n".join(serialize_event(ev) for ev in events) + "\n"


@dataclass
class TraceContext:
    """Structure-derived data needed to order and assemble trace events."""

    leaf_order: dict[str, int]
    node_depth: dict[str, int]
    subtree_leaves: dict[str, list[int]]  # composite path -> leaf orders beneath
    condition_paths: set[str]
    input_rank: dict[str, int]  # port name -> rank ("start" first)
    output_rank: dict[str, int]  # "success", "failure", declared outputs
    input_types: dict[str, object]
    labels: dict[str, str] = field(default_factory=dict)


def build_trace_context(defn: BtDef, res: Resolution) -> TraceContext:
    depth: dict[str, int] = {}
    subtree: dict[str, list[int]] = {}
    conditions: set[str] = set()
    labels: dict[str, str] = {}
    for path, node in iter_nodes(defn):
        depth[path] = path_depth(path)
        if is_leaf(node):
            labels[path] = node.label  # type: ignore[union-attr]
            if isinstance(node, Condition):
                conditions.add(path)
        else:
            prefix = "" if path == ROOT_PATH else path
            orders = [
                o
                for p, o in res.leaf_order.items()
                if p.startswith(prefix + "/") or (path == ROOT_PATH)
            ]
            subtree[path] = sorted(orders)
    input_rank = {"start": 0}
    input_types: dict[str, object] = {"start": None}
    output_rank = {"success": 0, "failure": 1}
    for p in defn.ports:
        if p.direction == "input":
            input_rank[p.name] = len(input_rank)
            input_types[p.name] = p.vtype
        else:
            output_rank[p.name] = len(output_rank)
    return TraceContext(
        leaf_order=dict(res.leaf_order),
        node_depth=depth,
        subtree_leaves=subtree,
        condition_paths=conditions,
        input_rank=input_rank,
        output_rank=output_rank,
        input_types=input_types,
        labels=labels,
    )


_SECTION_INPUT = 0
_SECTION_EXEC = 1
_SECTION_OUTPUT = 2


def canonical_key(
    ev: TraceEvent, ctx: TraceContext, invoked_orders: set[int]
) -> tuple[int, int, int, int]:
    """Sort key for events within one tag; unique for every event a single
    tag can produce, so ordering is schedule-independent."""
    if ev.kind == KIND_PORT:
        if ev.subject in ctx.input_rank and ev.subject not in ctx.output_rank:
            return (_SECTION_INPUT, ctx.input_rank[ev.subject], 0, 0)
        return (_SECTION_OUTPUT, ctx.output_rank[ev.subject], 0, 0)
    if ev.subject in ctx.leaf_order:
        order = ctx.leaf_order[ev.subject]
        slot = 0 if ev.kind == KIND_INVOKED else 1
        return (_SECTION_EXEC, order, slot, 0)
    if ev.subject in ctx.subtree_leaves:
        reached = [o for o in ctx.subtree_leaves[ev.subject] if o in invoked_orders]
        last = max(reached) if reached else -1
        return (_SECTION_EXEC, last, 2, -ctx.node_depth[ev.subject])
    # Internal blocks (merge conflicts and other defects): order after all
    # structural events of the section.
    return (_SECTION_EXEC, 2**31, 0, 0)


def order_tag_events(
    events: list[TraceEvent], ctx: TraceContext, invoked_paths: set[str]
) -> tuple[list[TraceEvent], TraceEvent | None]:
    """Canonically sort one tag's events and truncate after the first error.

    Returns the ordered (possibly truncated) events and the error event if
    one survived truncation.
    """
    invoked_orders = {ctx.leaf_order[p] for p in invoked_paths}
    ordered = sorted(events, key=lambda ev: canonical_key(ev, ctx, invoked_orders))
    for i, ev in enumerate(ordered):
        if ev.kind == KIND_ERROR:
            return ordered[: i + 1], ev
    return ordered, None


def scalar_payload(v: Value) -> Value:
    if v is ABSENT:
        raise TypeError("ABSENT cannot appear in a trace payload")
    return v
