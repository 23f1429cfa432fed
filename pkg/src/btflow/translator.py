"""Structural translation of a validated behavior tree into a block graph.

Every BT node becomes a block exposing start/success/failure ports. A
sequence chains child starts off predecessor successes and funnels failures
through an at-most-one merge; a fallback is the mirror image; a parallel
broadcasts start and feeds child statuses into a threshold collector.

Data wiring: declared top-level ports are forwarded through every composite
between the boundary and the leaves that use them. Channels become direct
writer-to-reader connections (with latest-wins merges when a reader can hear
several writers), and a reader positioned at or before a writer in
depth-first execution order is served by a generated Pre block that replays
the channel's final value from the previous tick. Merges with a single input
are elided into plain connections.

The result is a flat, serializable graph: blocks, ports, connections,
reactions with causality interfaces, and a deterministic topological order.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field
from typing import Iterator

from .model import (
    BtDef,
    BtNode,
    BtflowError,
    Condition,
    Parallel,
    ROOT_PATH,
    Resolution,
    ValueType,
    is_leaf,
    leaves_in_order,
    node_kind,
    parent_path,
    resolve,
    validate,
)
from .trace import TraceContext, build_trace_context

BT_BLOCK = "@bt"


class InternalCycleError(BtflowError):
    """The compiled causality graph has a cycle; impossible for validated
    definitions, so this always indicates a translator defect."""


@dataclass(frozen=True)
class PortSpec:
    id: str
    block: str
    name: str
    direction: str  # "in" | "out"
    vtype: ValueType


@dataclass
class Block:
    id: str
    kind: str  # bt | composite | task | condition | merge | collector | pre
    parent: str | None
    label: str | None = None
    node_path: str | None = None
    composite_kind: str | None = None  # sequence | fallback | parallel
    ports: list[str] = field(default_factory=list)
    merge_mode: str | None = None  # at-most-one | latest-wins
    merge_inputs: list[str] = field(default_factory=list)  # ascending priority
    threshold: int | None = None
    width: int | None = None
    channel: str | None = None


@dataclass
class Reaction:
    id: str
    block: str
    kind: str  # task-body | merge | collector | pre-emit | pre-store
    triggers: list[str]
    sources: list[str]
    effects: list[str]


@dataclass
class ReactorGraph:
    name: str
    defn: BtDef
    resolution: Resolution
    trace_ctx: TraceContext
    blocks: dict[str, Block] = field(default_factory=dict)
    ports: dict[str, PortSpec] = field(default_factory=dict)
    connections: list[tuple[str, str]] = field(default_factory=list)
    reactions: dict[str, Reaction] = field(default_factory=dict)
    top_order: list[str] = field(default_factory=list)
    reaction_edges: dict[str, set[str]] = field(default_factory=dict)
    adjacency: dict[str, list[str]] = field(default_factory=dict)

    def port(self, block: str, direction: str, name: str) -> str:
        pid = f"{block}:{direction}:{name}"
        assert pid in self.ports, f"no such port {pid}"
        return pid

    def boundary_inputs(self) -> dict[str, str]:
        out = {"start": self.port(BT_BLOCK, "in", "start")}
        for p in self.defn.ports:
            if p.direction == "input":
                out[p.name] = self.port(BT_BLOCK, "in", p.name)
        return out

    def boundary_outputs(self) -> dict[str, str]:
        out = {
            "success": self.port(BT_BLOCK, "out", "success"),
            "failure": self.port(BT_BLOCK, "out", "failure"),
        }
        for p in self.defn.ports:
            if p.direction == "output":
                out[p.name] = self.port(BT_BLOCK, "out", p.name)
        return out

    def node_blocks(self) -> Iterator[Block]:
        for b in self.blocks.values():
            if b.node_path is not None:
                yield b


class _Builder:
    def __init__(self, defn: BtDef):
        self.defn = defn
        self.res = resolve(defn)
        self.graph = ReactorGraph(
            name=defn.name,
            defn=defn,
            resolution=self.res,
            trace_ctx=build_trace_context(defn, self.res),
        )
        self.leaf_order = self.res.leaf_order
        self._conn_seen: set[tuple[str, str]] = set()
        # (composite, sink id, direction) -> sorted stream orders, for
        # deterministic forwarded-port suffixes when several writer or reader
        # streams for one sink cross the same composite.
        self._streams: dict[tuple[str, str, str], list[int]] = {}

    # -- low-level helpers ---------------------------------------------------

    def add_block(self, block: Block) -> Block:
        assert block.id not in self.graph.blocks, f"duplicate block {block.id}"
        self.graph.blocks[block.id] = block
        return block

    def add_port(self, block: str, direction: str, name: str, vtype: ValueType) -> str:
        pid = f"{block}:{direction}:{name}"
        if pid in self.graph.ports:
            return pid
        self.graph.ports[pid] = PortSpec(pid, block, name, direction, vtype)
        self.graph.blocks[block].ports.append(pid)
        return pid

    def connect(self, src: str, dst: str) -> None:
        key = (src, dst)
        if key in self._conn_seen:
            return
        self._conn_seen.add(key)
        self.graph.connections.append(key)

    def add_reaction(self, block: str, kind: str, triggers: list[str], sources: list[str], effects: list[str]) -> str:
        rid = f"{block}!{kind}"
        assert rid not in self.graph.reactions
        self.graph.reactions[rid] = Reaction(rid, block, kind, triggers, sources, effects)
        return rid

    # -- node translation ----------------------------------------------------

    def build(self) -> ReactorGraph:
        g = self.graph
        bt = self.add_block(Block(BT_BLOCK, "bt", None, label=self.defn.name))
        self.add_port(BT_BLOCK, "in", "start", ValueType.BOOL)
        self.add_port(BT_BLOCK, "out", "success", ValueType.BOOL)
        self.add_port(BT_BLOCK, "out", "failure", ValueType.BOOL)
        for p in self.defn.ports:
            self.add_port(BT_BLOCK, "in" if p.direction == "input" else "out", p.name, p.vtype)

        self.build_node(ROOT_PATH, self.defn.root, BT_BLOCK)
        self.connect(g.port(BT_BLOCK, "in", "start"), g.port(ROOT_PATH, "in", "start"))
        self.connect(g.port(ROOT_PATH, "out", "success"), g.port(BT_BLOCK, "out", "success"))
        self.connect(g.port(ROOT_PATH, "out", "failure"), g.port(BT_BLOCK, "out", "failure"))

        self.wire_inputs()
        self.register_streams()
        self.wire_channels()
        self.wire_outputs()
        self.finish_reactions()
        return g

    def build_node(self, path: str, node: BtNode, parent: str) -> None:
        if is_leaf(node):
            kind = "condition" if isinstance(node, Condition) else "task"
            block = self.add_block(Block(path, kind, parent, label=node.label, node_path=path))  # type: ignore[union-attr]
            start = self.add_port(path, "in", "start", ValueType.BOOL)
            succ = self.add_port(path, "out", "success", ValueType.BOOL)
            fail = self.add_port(path, "out", "failure", ValueType.BOOL)
            src_ports = [
                self.add_port(path, "in", ref, target.vtype)
                for ref, target in self.res.sources[path].items()
            ]
            eff_ports = [
                self.add_port(path, "out", ref, target.vtype)
                for ref, target in self.res.effects[path].items()
            ]
            self.add_reaction(path, "task-body", [start], src_ports, [succ, fail] + eff_ports)
            return

        block = self.add_block(
            Block(path, "composite", parent, node_path=path, composite_kind=node_kind(node))
        )
        start = self.add_port(path, "in", "start", ValueType.BOOL)
        succ = self.add_port(path, "out", "success", ValueType.BOOL)
        fail = self.add_port(path, "out", "failure", ValueType.BOOL)

        children = node.children  # type: ignore[union-attr]
        child_ids = []
        for i, child in enumerate(children):
            cpath = f"/{i}" if path == ROOT_PATH else f"{path}/{i}"
            self.build_node(cpath, child, path)
            child_ids.append(cpath)

        g = self.graph
        kind = node_kind(node)
        if kind in ("sequence", "fallback"):
            chain, merged = ("success", "failure") if kind == "sequence" else ("failure", "success")
            self.connect(start, g.port(child_ids[0], "in", "start"))
            for a, b in zip(child_ids, child_ids[1:]):
                self.connect(g.port(a, "out", chain), g.port(b, "in", "start"))
            self.connect(
                g.port(child_ids[-1], "out", chain), g.port(path, "out", chain)
            )
            merged_out = g.port(path, "out", merged)
            inputs = [g.port(c, "out", merged) for c in child_ids]
            if len(inputs) == 1:
                self.connect(inputs[0], merged_out)
            else:
                mid = f"{path}:{merged[:4]}merge"
                self.add_block(Block(mid, "merge", path, merge_mode="at-most-one"))
                ins = [self.add_port(mid, "in", f"in{i}", ValueType.BOOL) for i in range(len(inputs))]
                out = self.add_port(mid, "out", "out", ValueType.BOOL)
                g.blocks[mid].merge_inputs = ins
                for src, dst in zip(inputs, ins):
                    self.connect(src, dst)
                self.connect(out, merged_out)
                self.add_reaction(mid, "merge", ins, [], [out])
        else:  # parallel
            assert isinstance(node, Parallel)
            for c in child_ids:
                self.connect(start, g.port(c, "in", "start"))
            cid = f"{path}:collector"
            n = len(child_ids)
            self.add_block(Block(cid, "collector", path, threshold=node.threshold, width=n))
            s_ins = [self.add_port(cid, "in", f"s{i}", ValueType.BOOL) for i in range(n)]
            f_ins = [self.add_port(cid, "in", f"f{i}", ValueType.BOOL) for i in range(n)]
            col_s = self.add_port(cid, "out", "success", ValueType.BOOL)
            col_f = self.add_port(cid, "out", "failure", ValueType.BOOL)
            for i, c in enumerate(child_ids):
                self.connect(g.port(c, "out", "success"), s_ins[i])
                self.connect(g.port(c, "out", "failure"), f_ins[i])
            self.connect(col_s, succ)
            self.connect(col_f, fail)
            self.add_reaction(cid, "collector", s_ins + f_ins, [], [col_s, col_f])

    # -- data wiring ---------------------------------------------------------

    def _composites_between(self, leaf: str, owner: str) -> list[str]:
        """Composites strictly between leaf and owner, top-down; for owner
        BT_BLOCK this includes the root node."""
        chain: list[str] = []
        if leaf == ROOT_PATH:
            return chain
        p = parent_path(leaf)
        while True:
            if p == owner:
                break
            chain.append(p)
            if p == ROOT_PATH:
                assert owner == BT_BLOCK, f"owner {owner} not an ancestor of {leaf}"
                break
            p = parent_path(p)
        chain.reverse()
        return chain

    def register_streams(self) -> None:
        for key in sorted(self.res.channels):
            use = self.res.channels[key]
            sink = f"chan:{key[0]}:{key[1]}"
            for order, wp in use.writers:
                for comp in self._composites_between(wp, key[0]):
                    self._streams.setdefault((comp, sink, "out"), []).append(order)
            for order, rp in use.readers:
                for comp in self._composites_between(rp, key[0]):
                    self._streams.setdefault((comp, sink, "in"), []).append(order)
        for name in sorted(self.res.output_writers):
            for order, wp in self.res.output_writers[name]:
                for comp in self._composites_between(wp, BT_BLOCK):
                    self._streams.setdefault((comp, f"out:{name}", "out"), []).append(order)
        for streams in self._streams.values():
            streams.sort()

    def _stream_port_name(self, comp: str, sink: str, direction: str, order: int, base: str) -> str:
        streams = self._streams[(comp, sink, direction)]
        rank = streams.index(order)
        return base if rank == 0 else f"{base}#{rank + 1}"

    def route_up(self, leaf: str, ref: str, sink: str, owner: str, order: int, vtype: ValueType) -> str:
        """Forward a writer's effect port up to a child of ``owner``; returns
        the topmost port id."""
        cur = self.graph.port(leaf, "out", ref)
        for comp in reversed(self._composites_between(leaf, owner)):
            name = self._stream_port_name(comp, sink, "out", order, ref)
            nxt = self.add_port(comp, "out", name, vtype)
            self.connect(cur, nxt)
            cur = nxt
        return cur

    def route_down(self, src: str, leaf: str, ref: str, sink: str, owner: str, order: int, vtype: ValueType) -> None:
        cur = src
        for comp in self._composites_between(leaf, owner):
            name = self._stream_port_name(comp, sink, "in", order, ref)
            nxt = self.add_port(comp, "in", name, vtype)
            self.connect(cur, nxt)
            cur = nxt
        self.connect(cur, self.graph.port(leaf, "in", ref))

    def wire_inputs(self) -> None:
        g = self.graph
        for leaf, _ in leaves_in_order(self.defn):
            for ref, target in self.res.sources[leaf].items():
                if target.kind != "input":
                    continue
                cur = g.port(BT_BLOCK, "in", ref)
                for comp in self._composites_between(leaf, BT_BLOCK):
                    nxt = self.add_port(comp, "in", ref, target.vtype)
                    self.connect(cur, nxt)
                    cur = nxt
                self.connect(cur, g.port(leaf, "in", ref))

    def wire_channels(self) -> None:
        g = self.graph
        for key in sorted(self.res.channels):
            use = self.res.channels[key]
            owner, name = key
            sink = f"chan:{owner}:{name}"
            vtype = use.decl.vtype
            writer_ports = {
                order: self.route_up(wp, name, sink, owner, order, vtype)
                for order, wp in use.writers
            }
            backward = self.res.backward_readers(key)
            pre_out: str | None = None
            if backward:
                final_src = self._consolidate(
                    [writer_ports[o] for o, _ in use.writers],
                    f"{owner}:chan:{name}:final",
                    owner,
                    vtype,
                )
                pid = f"{owner}:chan:{name}:pre"
                self.add_block(Block(pid, "pre", owner, label=f"Pre_{name}", channel=name))
                pre_in = self.add_port(pid, "in", "in", vtype)
                pre_start = self.add_port(pid, "in", "start", ValueType.BOOL)
                pre_out = self.add_port(pid, "out", "out", vtype)
                self.connect(final_src, pre_in)
                self.connect(g.port(owner, "in", "start"), pre_start)
                self.add_reaction(pid, "pre-emit", [pre_start], [], [pre_out])
                self.add_reaction(pid, "pre-store", [pre_in], [], [])
            for r_order, rp in use.readers:
                inputs: list[str] = []
                if rp in backward:
                    assert pre_out is not None
                    inputs.append(pre_out)
                inputs.extend(writer_ports[o] for o, _ in use.writers if o < r_order)
                if not inputs:
                    continue
                src = self._consolidate(inputs, f"{owner}:chan:{name}:recv@{rp}", owner, vtype)
                self.route_down(src, rp, name, sink, owner, r_order, vtype)

    def wire_outputs(self) -> None:
        g = self.graph
        for name in sorted(self.res.output_writers):
            writers = self.res.output_writers[name]
            if not writers:
                continue
            vtype = next(p.vtype for p in self.defn.ports if p.name == name)
            ports = [
                self.route_up(wp, name, f"out:{name}", BT_BLOCK, order, vtype)
                for order, wp in writers
            ]
            src = self._consolidate(ports, f"{BT_BLOCK}:out:{name}:merge", BT_BLOCK, vtype)
            self.connect(src, g.port(BT_BLOCK, "out", name))

    def _consolidate(self, inputs: list[str], merge_id: str, parent: str, vtype: ValueType) -> str:
        """Latest-wins merge over inputs in ascending priority; single inputs
        pass through unchanged."""
        if len(inputs) == 1:
            return inputs[0]
        self.add_block(Block(merge_id, "merge", parent, merge_mode="latest-wins"))
        ins = [self.add_port(merge_id, "in", f"in{i}", vtype) for i in range(len(inputs))]
        out = self.add_port(merge_id, "out", "out", vtype)
        self.graph.blocks[merge_id].merge_inputs = ins
        for src, dst in zip(inputs, ins):
            self.connect(src, dst)
        self.add_reaction(merge_id, "merge", ins, [], [out])
        return out

    # -- causality and ordering ----------------------------------------------

    def finish_reactions(self) -> None:
        g = self.graph
        adj: dict[str, list[str]] = {}
        for src, dst in g.connections:
            adj.setdefault(src, []).append(dst)
        for outs in adj.values():
            outs.sort()
        g.adjacency = adj

        consumers: dict[str, list[str]] = {}
        for r in g.reactions.values():
            for p in r.triggers + r.sources:
                consumers.setdefault(p, []).append(r.id)

        edges: dict[str, set[str]] = {rid: set() for rid in g.reactions}
        for r in g.reactions.values():
            reach: set[str] = set()
            stack = list(r.effects)
            while stack:
                p = stack.pop()
                for q in adj.get(p, ()):
                    if q not in reach:
                        reach.add(q)
                        stack.append(q)
            for p in reach:
                for rid in consumers.get(p, ()):
                    if rid != r.id:
                        edges[r.id].add(rid)
        for b in g.blocks.values():
            if b.kind == "pre":
                edges[f"{b.id}!pre-emit"].add(f"{b.id}!pre-store")
        g.reaction_edges = edges
        g.top_order = _topological_order(g, edges, reverse=False)

    # hints used by the deterministic priority topological sort


def _reaction_hint(g: ReactorGraph, rid: str) -> tuple:
    r = g.reactions[rid]
    block = g.blocks[r.block]
    leaf_order = g.resolution.leaf_order
    if r.kind == "pre-emit":
        return (0, r.block)
    if r.kind == "pre-store":
        return (3, r.block)
    if r.kind == "task-body":
        return (1, leaf_order[r.block], 1, r.block)
    if r.kind == "collector":
        parent = block.parent or ROOT_PATH
        orders = g.trace_ctx.subtree_leaves.get(parent, [0])
        return (1, max(orders, default=0), 2, r.block)
    if r.kind == "merge":
        if ":recv@" in r.block:
            reader = r.block.split(":recv@", 1)[1]
            return (1, leaf_order[reader], 0, r.block)
        if r.block.endswith(":final") or ":out:" in r.block:
            return (2, r.block)
        parent = block.parent or ROOT_PATH
        orders = g.trace_ctx.subtree_leaves.get(parent, [0])
        return (1, max(orders, default=0), 2, r.block)
    raise AssertionError(r.kind)


def _topological_order(g: ReactorGraph, edges: dict[str, set[str]], reverse: bool) -> list[str]:
    indeg = {rid: 0 for rid in g.reactions}
    for src, dsts in edges.items():
        for d in dsts:
            indeg[d] += 1
    ready = [(_reaction_hint(g, rid), rid) for rid, n in indeg.items() if n == 0]
    order: list[str] = []
    if reverse:
        ready.sort(reverse=True)
        while ready:
            _, rid = ready.pop(0)
            order.append(rid)
            changed = False
            for d in sorted(edges[rid]):
                indeg[d] -= 1
                if indeg[d] == 0:
                    ready.append((_reaction_hint(g, d), d))
                    changed = True
            if changed:
                ready.sort(reverse=True)
    else:
        heapq.heapify(ready)
        while ready:
            _, rid = heapq.heappop(ready)
            order.append(rid)
            for d in sorted(edges[rid]):
                indeg[d] -= 1
                if indeg[d] == 0:
                    heapq.heappush(ready, (_reaction_hint(g, d), d))
    if len(order) != len(g.reactions):
        raise InternalCycleError(
            f"causality cycle among reactions: {sorted(set(g.reactions) - set(order))}"
        )
    return order


def alternate_top_order(graph: ReactorGraph) -> list[str]:
    """A second valid topological order (reverse-priority tie-breaking), for
    checking that execution order cannot be observed in traces."""
    return _topological_order(graph, graph.reaction_edges, reverse=True)


def translate(defn: BtDef) -> ReactorGraph:
    """Compile a validated definition; raises ValueError when validation
    reports errors and InternalCycleError on translator defects."""
    report = validate(defn)
    if not report.ok:
        first = report.errors[0]
        raise ValueError(f"definition is not compilable: {first.code} at {first.node_path}: {first.message}")
    return _Builder(defn).build()


# ---------------------------------------------------------------------------
# Serialization (golden tests, tooling)


def graph_to_dict(g: ReactorGraph) -> dict:
    blocks = []
    for b in g.blocks.values():
        entry: dict[str, object] = {"id": b.id, "kind": b.kind, "parent": b.parent}
        if b.label is not None:
            entry["label"] = b.label
        if b.node_path is not None:
            entry["nodePath"] = b.node_path
        if b.composite_kind is not None:
            entry["compositeKind"] = b.composite_kind
        if b.merge_mode is not None:
            entry["mergeMode"] = b.merge_mode
        if b.threshold is not None:
            entry["threshold"] = b.threshold
            entry["width"] = b.width
        if b.channel is not None:
            entry["channel"] = b.channel
        entry["ports"] = [
            {
                "name": g.ports[p].name,
                "direction": g.ports[p].direction,
                "type": g.ports[p].vtype.value,
            }
            for p in b.ports
        ]
        blocks.append(entry)
    return {
        "behaviortree": g.name,
        "blocks": blocks,
        "connections": [[a, b] for a, b in g.connections],
        "reactions": [
            {
                "id": r.id,
                "block": r.block,
                "kind": r.kind,
                "triggers": r.triggers,
                "sources": r.sources,
                "effects": r.effects,
            }
            for r in g.reactions.values()
        ],
        "topOrder": g.top_order,
    }


def graph_to_json(g: ReactorGraph) -> str:
    return json.dumps(graph_to_dict(g), indent=2, sort_keys=False) + "\n"
