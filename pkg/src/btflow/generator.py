"""Seeded random behavior-tree generator for fuzzing and property tests.

Same seed, same tree, byte for byte. Generated definitions always validate
cleanly: channel and output-port users under a parallel are confined to a
single branch by construction, reads of possibly-absent sources only appear
behind present() guards in boolean positions, and every emitted value is
typed from literals and state variables.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .exprs import Binary, Expr, Lit, Present, Ref, Unary
from .model import (
    BtDef,
    BtNode,
    ChannelDecl,
    Condition,
    ExprBody,
    Fallback,
    Parallel,
    PortDecl,
    ScriptBody,
    ScriptStep,
    Sequence,
    StateDecl,
    Status,
    Task,
    ValueType,
    validate,
)

_TYPES = [ValueType.BOOL, ValueType.INT, ValueType.FLOAT, ValueType.STRING]

_STATUS_WEIGHTS = [
    (Status.SUCCESS, 9),
    (Status.RUNNING, 7),
    (Status.FAILURE, 4),
]


@dataclass(frozen=True)
class _Sink:
    name: str
    vtype: ValueType
    kind: str  # "channel" | "output"


@dataclass
class _Gen:
    rng: random.Random
    max_depth: int
    max_children: int
    inputs: list[PortDecl] = field(default_factory=list)
    counter: int = 0

    def fresh(self, prefix: str) -> str:
        self.counter += 1
        return f"{prefix}{self.counter}"

    def pick_status(self) -> Status:
        total = sum(w for _, w in _STATUS_WEIGHTS)
        n = self.rng.randrange(total)
        for status, w in _STATUS_WEIGHTS:
            if n < w:
                return status
            n -= w
        raise AssertionError

    def literal(self, vtype: ValueType) -> Lit:
        r = self.rng
        if vtype is ValueType.BOOL:
            return Lit(r.random() < 0.5)
        if vtype is ValueType.INT:
            return Lit(r.randrange(-50, 51))
        if vtype is ValueType.FLOAT:
            return Lit(round(r.uniform(-8.0, 8.0), 3))
        return Lit(r.choice(["red", "green", "blue", "idle", "busy"]))

    def value_expr(self, vtype: ValueType, states: list[StateDecl]) -> Expr:
        """Always-defined expression of the requested type (no source reads)."""
        r = self.rng
        typed_states = [s for s in states if s.vtype is vtype]
        if typed_states and r.random() < 0.6:
            st = r.choice(typed_states)
            if vtype is ValueType.INT and r.random() < 0.6:
                return Binary(r.choice(["+", "-"]), Ref(st.name), self.literal(vtype))
            if vtype is ValueType.FLOAT and r.random() < 0.5:
                return Binary("+", Ref(st.name), self.literal(vtype))
            if vtype is ValueType.BOOL and r.random() < 0.5:
                return Unary("!", Ref(st.name))
            if vtype is ValueType.STRING and r.random() < 0.4:
                return Binary("+", Ref(st.name), self.literal(vtype))
            return Ref(st.name)
        return self.literal(vtype)

    def guarded_bool(self, sources: dict[str, ValueType], states: list[StateDecl]) -> Expr:
        """Boolean expression over present-guarded sources and states."""
        r = self.rng
        candidates = sorted(sources)
        if candidates and r.random() < 0.8:
            name = r.choice(candidates)
            vt = sources[name]
            if r.random() < 0.25:
                return Unary("!", Present(name))
            if vt is ValueType.BOOL:
                comparison: Expr = Ref(name)
            elif vt in (ValueType.INT, ValueType.FLOAT):
                comparison = Binary(
                    r.choice(["<", "<=", ">", ">=", "==", "!="]), Ref(name), self.literal(vt)
                )
            else:
                comparison = Binary(r.choice(["==", "!="]), Ref(name), self.literal(vt))
            return Binary("&&", Present(name), comparison)
        bool_states = [s for s in states if s.vtype is ValueType.BOOL]
        int_states = [s for s in states if s.vtype is ValueType.INT]
        if int_states and r.random() < 0.5:
            st = r.choice(int_states)
            return Binary("==", Binary("%", Ref(st.name), Lit(r.randrange(2, 4))), Lit(0))
        if bool_states and r.random() < 0.5:
            return Ref(r.choice(bool_states).name)
        return Lit(r.random() < 0.7)


def _gen_states(g: _Gen) -> list[StateDecl]:
    states = []
    for _ in range(g.rng.randrange(0, 3)):
        vt = g.rng.choice(_TYPES)
        states.append(StateDecl(g.fresh("s"), vt, g.literal(vt).value))
    return states


def _gen_leaf(g: _Gen, sinks: list[_Sink]) -> BtNode:
    r = g.rng
    readable: dict[str, ValueType] = {p.name: p.vtype for p in g.inputs}
    for s in sinks:
        if s.kind == "channel":
            readable[s.name] = s.vtype
    writable: dict[str, ValueType] = {s.name: s.vtype for s in sinks}

    sources = sorted(r.sample(sorted(readable), min(len(readable), r.randrange(0, 3))))
    effects = sorted(r.sample(sorted(writable), min(len(writable), r.randrange(0, 3))))
    states = _gen_states(g)
    src_types = {name: readable[name] for name in sources}

    if r.random() < 0.3:
        return Condition(
            g.fresh("Cond"), sources, [], states, ExprBody(g.guarded_bool(src_types, states))
        )

    steps = []
    for _ in range(r.randrange(1, 4)):
        emits = []
        for name in effects:
            if r.random() < 0.7:
                vt = writable[name]
                if vt is ValueType.BOOL and r.random() < 0.5:
                    emits.append((name, g.guarded_bool(src_types, states)))
                else:
                    emits.append((name, g.value_expr(vt, states)))
        updates = []
        for st in states:
            if r.random() < 0.5:
                updates.append((st.name, g.value_expr(st.vtype, states)))
        steps.append(ScriptStep(emits, updates, g.pick_status()))
    body = ScriptBody(steps, r.choice(["loop", "hold"]))
    if r.random() < 0.15 and not effects:
        # scripted condition; the running steps exercise the warning path
        return Condition(g.fresh("Cond"), sources, effects, states, body)
    return Task(g.fresh("Task"), sources, effects, states, body)


def _gen_node(g: _Gen, depth: int, sinks: list[_Sink]) -> BtNode:
    r = g.rng
    if depth >= g.max_depth or r.random() < 0.35:
        return _gen_leaf(g, sinks)
    kind = r.choice(["sequence", "sequence", "fallback", "fallback", "parallel"])
    lo = 1 if (g.max_children < 2 or r.random() < 0.1) else 2
    n_children = r.randrange(lo, g.max_children + 1)
    declared = []
    for _ in range(r.randrange(0, 3)):
        vt = r.choice(_TYPES)
        declared.append(ChannelDecl(g.fresh("c"), vt))
    visible = sinks + [_Sink(c.name, c.vtype, "channel") for c in declared]

    children = []
    if kind == "parallel":
        # Confine each sink (channel or output port) to one branch so no
        # cross-branch writer pair or read/write pair can exist.
        assignment = {s.name: r.randrange(n_children) for s in visible}
        for i in range(n_children):
            branch = [s for s in visible if assignment[s.name] == i]
            children.append(_gen_node(g, depth + 1, branch))
        m = r.randrange(1, n_children + 1)
        return Parallel(m, children, declared)
    for _ in range(n_children):
        children.append(_gen_node(g, depth + 1, visible))
    cls = Sequence if kind == "sequence" else Fallback
    return cls(children, declared)


def gen_random_def(seed: int, max_depth: int = 4, max_children: int = 4) -> BtDef:
    """Deterministic pseudorandom definition with an empty check report.

    Generation is correct by construction; the validation retry loop is a
    safety net and in practice exits on the first attempt.
    """
    if max_depth < 1:
        raise ValueError("max_depth must be >= 1")
    for attempt in range(50):
        rng = random.Random((seed << 8) ^ attempt)
        g = _Gen(rng, max_depth, max_children)
        for _ in range(rng.randrange(0, 3)):
            vt = rng.choice(_TYPES)
            g.inputs.append(PortDecl(g.fresh("in"), "input", vt))
        outputs = []
        for _ in range(rng.randrange(0, 3)):
            vt = rng.choice(_TYPES)
            outputs.append(PortDecl(g.fresh("out"), "output", vt))
        root = _gen_node(g, 1, [_Sink(p.name, p.vtype, "output") for p in outputs])
        defn = BtDef(f"Gen{seed}", g.inputs + outputs, root)
        if not validate(defn).items:
            return defn
    raise AssertionError(f"generator could not produce a valid tree for seed {seed}")
