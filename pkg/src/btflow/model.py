"""Behavior-tree abstract syntax, value model, and static well-formedness checks.

Values on ports and channels are plain Python bool/int/float/str; the absence
of an event is the ABSENT sentinel, which is deliberately not a value. Node
identities are root paths built from child indices ("/", "/0", "/0/2", ...),
so they are stable across runs and independent of labels.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Iterator, Union

from .source import SourceSpan

if TYPE_CHECKING:
    from .exprs import Expr


class _Absent:
    """Singleton marking the absence of an event at a tag."""

    _instance: "_Absent | None" = None

    def __new__(cls) -> "_Absent":
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "ABSENT"

    def __bool__(self) -> bool:
        raise TypeError("ABSENT is not a value; test with 'is ABSENT'")


ABSENT = _Absent()

Value = Union[bool, int, float, str]

RESERVED_NAMES = frozenset({"start", "success", "failure", "running"})


class BtflowError(Exception):
    """Base for all library errors."""


class EvalError(BtflowError):
    """Expression or body evaluation fault; ``code`` is machine-readable."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code
        self.message = message


class Status(Enum):
    SUCCESS = "SUCCESS"
    FAILURE = "FAILURE"
    RUNNING = "RUNNING"


class ValueType(Enum):
    BOOL = "bool"
    INT = "int"
    FLOAT = "float"
    STRING = "string"


def type_of(v: Value) -> ValueType:
    if isinstance(v, bool):
        return ValueType.BOOL
    if isinstance(v, int):
        return ValueType.INT
    if isinstance(v, float):
        return ValueType.FLOAT
    if isinstance(v, str):
        return ValueType.STRING
    raise TypeError(f"not a value: {v!r}")


# ---------------------------------------------------------------------------
# Declarations and node tree


@dataclass
class PortDecl:
    name: str
    direction: str  # "input" | "output"
    vtype: ValueType
    span: SourceSpan | None = field(default=None, compare=False)


@dataclass
class ChannelDecl:
    name: str
    vtype: ValueType
    span: SourceSpan | None = field(default=None, compare=False)


@dataclass
class StateDecl:
    name: str
    vtype: ValueType
    initial: Value
    span: SourceSpan | None = field(default=None, compare=False)


@dataclass
class ExternBody:
    name: str


@dataclass
class ExprBody:
    expr: "Expr"


@dataclass
class ScriptStep:
    emits: list[tuple[str, "Expr"]] = field(default_factory=list)
    updates: list[tuple[str, "Expr"]] = field(default_factory=list)
    status: Status = Status.RUNNING


@dataclass
class ScriptBody:
    steps: list[ScriptStep]
    tail: str  # "loop" | "hold"


TaskBody = Union[ExternBody, ExprBody, ScriptBody]


@dataclass
class Task:
    label: str
    sources: list[str] = field(default_factory=list)
    effects: list[str] = field(default_factory=list)
    states: list[StateDecl] = field(default_factory=list)
    body: TaskBody = field(default_factory=lambda: ScriptBody([ScriptStep()], "hold"))
    span: SourceSpan | None = field(default=None, compare=False)


@dataclass
class Condition:
    label: str
    sources: list[str] = field(default_factory=list)
    effects: list[str] = field(default_factory=list)
    states: list[StateDecl] = field(default_factory=list)
    body: TaskBody = field(default_factory=lambda: ScriptBody([ScriptStep()], "hold"))
    span: SourceSpan | None = field(default=None, compare=False)


@dataclass
class Sequence:
    children: list["BtNode"]
    channels: list[ChannelDecl] = field(default_factory=list)
    span: SourceSpan | None = field(default=None, compare=False)


@dataclass
class Fallback:
    children: list["BtNode"]
    channels: list[ChannelDecl] = field(default_factory=list)
    span: SourceSpan | None = field(default=None, compare=False)


@dataclass
class Parallel:
    threshold: int
    children: list["BtNode"]
    channels: list[ChannelDecl] = field(default_factory=list)
    span: SourceSpan | None = field(default=None, compare=False)


BtNode = Union[Task, Condition, Sequence, Fallback, Parallel]
Leaf = Union[Task, Condition]
Composite = Union[Sequence, Fallback, Parallel]


@dataclass
class BtDef:
    name: str
    ports: list[PortDecl]
    root: BtNode
    span: SourceSpan | None = field(default=None, compare=False)


def is_leaf(node: BtNode) -> bool:
    return isinstance(node, (Task, Condition))


def node_kind(node: BtNode) -> str:
    return {
        Task: "task",
        Condition: "condition",
        Sequence: "sequence",
        Fallback: "fallback",
        Parallel: "parallel",
    }[type(node)]


# ---------------------------------------------------------------------------
# Node paths

ROOT_PATH = "/"


def child_path(parent: str, index: int) -> str:
    return f"/{index}" if parent == ROOT_PATH else f"{parent}/{index}"


def path_depth(path: str) -> int:
    return 0 if path == ROOT_PATH else path.count("/")


def parent_path(path: str) -> str:
    if path == ROOT_PATH:
        raise ValueError("root has no parent")
    head, _, _ = path.rpartition("/")
    return head or ROOT_PATH


def lca_path(a: str, b: str) -> str:
    sa = [] if a == ROOT_PATH else a[1:].split("/")
    sb = [] if b == ROOT_PATH else b[1:].split("/")
    common = []
    for x, y in zip(sa, sb):
        if x != y:
            break
        common.append(x)
    return ROOT_PATH if not common else "/" + "/".join(common)


def iter_nodes(defn: BtDef) -> Iterator[tuple[str, BtNode]]:
    """Preorder traversal yielding (path, node)."""

    def walk(path: str, node: BtNode) -> Iterator[tuple[str, BtNode]]:
        yield path, node
        if not is_leaf(node):
            for i, child in enumerate(node.children):  # type: ignore[union-attr]
                yield from walk(child_path(path, i), child)

    yield from walk(ROOT_PATH, defn.root)


def node_at(defn: BtDef, path: str) -> BtNode:
    node: BtNode = defn.root
    if path == ROOT_PATH:
        return node
    for seg in path[1:].split("/"):
        node = node.children[int(seg)]  # type: ignore[union-attr]
    return node


def leaves_in_order(defn: BtDef) -> list[tuple[str, Leaf]]:
    """Depth-first, left-to-right leaves; index = execution order."""
    return [(p, n) for p, n in iter_nodes(defn) if is_leaf(n)]  # type: ignore[misc]


def execution_order(defn: BtDef) -> list[str]:
    """Total order over task/condition nodes used by channel wiring."""
    return [p for p, _ in leaves_in_order(defn)]


# ---------------------------------------------------------------------------
# Reference resolution


@dataclass(frozen=True)
class RefTarget:
    kind: str  # "input" | "output" | "channel"
    vtype: ValueType
    channel_key: tuple[str, str] | None = None  # (owner path, name)


@dataclass
class ChannelUse:
    decl: ChannelDecl
    owner: str
    writers: list[tuple[int, str]] = field(default_factory=list)  # (order, leaf path)
    readers: list[tuple[int, str]] = field(default_factory=list)


@dataclass
class Resolution:
    """Cross-reference table shared by the validator, translator, and oracle."""

    leaf_order: dict[str, int]
    sources: dict[str, dict[str, RefTarget]]  # leaf path -> ref name -> target
    effects: dict[str, dict[str, RefTarget]]
    channels: dict[tuple[str, str], ChannelUse]
    output_writers: dict[str, list[tuple[int, str]]]  # port name -> writers
    unresolved: list[tuple[str, str, str]]  # (leaf path, ref, why)

    def backward_readers(self, key: tuple[str, str]) -> set[str]:
        """Leaves that may receive the channel's previous-tick value."""
        use = self.channels[key]
        if not use.writers:
            return set()
        max_writer = max(o for o, _ in use.writers)
        return {p for o, p in use.readers if o <= max_writer}


def resolve(defn: BtDef) -> Resolution:
    ports = {p.name: p for p in defn.ports}
    order = {p: i for i, (p, _) in enumerate(leaves_in_order(defn))}
    res = Resolution(
        leaf_order=order,
        sources={},
        effects={},
        channels={},
        output_writers={name: [] for name, p in ports.items() if p.direction == "output"},
        unresolved=[],
    )

    def walk(path: str, node: BtNode, visible: dict[str, tuple[str, str]]) -> None:
        # visible: channel name -> (owner path, name)
        if is_leaf(node):
            res.sources[path] = {}
            res.effects[path] = {}
            for ref in node.sources:  # type: ignore[union-attr]
                if ref in visible:
                    key = visible[ref]
                    use = res.channels[key]
                    use.readers.append((order[path], path))
                    res.sources[path][ref] = RefTarget("channel", use.decl.vtype, key)
                elif ref in ports:
                    p = ports[ref]
                    if p.direction != "input":
                        res.unresolved.append((path, ref, "source must be an input port or channel"))
                    else:
                        res.sources[path][ref] = RefTarget("input", p.vtype)
                else:
                    res.unresolved.append((path, ref, "unknown port or channel"))
            for ref in node.effects:  # type: ignore[union-attr]
                if ref in visible:
                    key = visible[ref]
                    use = res.channels[key]
                    use.writers.append((order[path], path))
                    res.effects[path][ref] = RefTarget("channel", use.decl.vtype, key)
                elif ref in ports:
                    p = ports[ref]
                    if p.direction != "output":
                        res.unresolved.append((path, ref, "effect must be an output port or channel"))
                    else:
                        res.output_writers[ref].append((order[path], path))
                        res.effects[path][ref] = RefTarget("output", p.vtype)
                else:
                    res.unresolved.append((path, ref, "unknown port or channel"))
            return
        inner = dict(visible)
        for ch in node.channels:  # type: ignore[union-attr]
            key = (path, ch.name)
            res.channels[key] = ChannelUse(decl=ch, owner=path)
            inner[ch.name] = key
        for i, child in enumerate(node.children):  # type: ignore[union-attr]
            walk(child_path(path, i), child, inner)

    walk(ROOT_PATH, defn.root, {})
    for use in res.channels.values():
        use.writers = sorted(dict.fromkeys(use.writers))
        use.readers = sorted(dict.fromkeys(use.readers))
    for name, writers in res.output_writers.items():
        res.output_writers[name] = sorted(dict.fromkeys(writers))
    return res


# ---------------------------------------------------------------------------
# Validation


@dataclass(frozen=True)
class CheckItem:
    severity: str  # "error" | "warning"
    code: str
    node_path: str
    message: str

    def to_json_line(self) -> str:
        import json

        return json.dumps(
            {
                "severity": self.severity,
                "code": self.code,
                "nodePath": self.node_path,
                "message": self.message,
            },
            separators=(",", ":"),
        )


@dataclass
class CheckReport:
    items: list[CheckItem]

    def __iter__(self) -> Iterator[CheckItem]:
        return iter(self.items)

    def __len__(self) -> int:
        return len(self.items)

    @property
    def errors(self) -> list[CheckItem]:
        return [i for i in self.items if i.severity == "error"]

    @property
    def ok(self) -> bool:
        """True when the definition is compilable (no error-severity items)."""
        return not self.errors

    def to_json_lines(self) -> str:
        return "\n".join(i.to_json_line() for i in self.items)


def parallel_writer_conflicts(defn: BtDef) -> list[tuple[str, str, str]]:
    """Pairs of effect writers to one channel (or output port) whose least
    common ancestor is a Parallel node, ordered by node path."""
    res = resolve(defn)
    out: list[tuple[str, str, str]] = []
    sinks: list[tuple[str, list[tuple[int, str]]]] = []
    for key in sorted(res.channels):
        sinks.append((key[1], res.channels[key].writers))
    for name in sorted(res.output_writers):
        sinks.append((name, res.output_writers[name]))
    for name, writers in sinks:
        paths = [p for _, p in writers]
        for i in range(len(paths)):
            for j in range(i + 1, len(paths)):
                lca = lca_path(paths[i], paths[j])
                if isinstance(node_at(defn, lca), Parallel):
                    out.append((name, paths[i], paths[j]))
    out.sort(key=lambda t: (t[1], t[2], t[0]))
    return out


def _parallel_read_write_conflicts(defn: BtDef, res: Resolution) -> list[tuple[str, str, str]]:
    out = []
    for key in sorted(res.channels):
        use = res.channels[key]
        for _, wp in use.writers:
            for _, rp in use.readers:
                if wp == rp:
                    continue
                lca = lca_path(wp, rp)
                if isinstance(node_at(defn, lca), Parallel):
                    out.append((key[1], min(wp, rp), max(wp, rp)))
    return sorted(set(out), key=lambda t: (t[1], t[2], t[0]))


def validate(defn: BtDef) -> CheckReport:
    """All static well-formedness violations; empty errors <=> compilable."""
    from .exprs import expr_refs

    items: list[CheckItem] = []

    def err(code: str, path: str, msg: str) -> None:
        items.append(CheckItem("error", code, path, msg))

    def warn(code: str, path: str, msg: str) -> None:
        items.append(CheckItem("warning", code, path, msg))

    seen_ports: set[str] = set()
    for p in defn.ports:
        if p.name in RESERVED_NAMES:
            err("reserved-name", ROOT_PATH, f"port name '{p.name}' is reserved")
        if p.name in seen_ports:
            err("duplicate-port", ROOT_PATH, f"duplicate port name '{p.name}'")
        seen_ports.add(p.name)

    res = resolve(defn)
    for path, ref, why in res.unresolved:
        code = "unresolved-ref" if why.startswith("unknown") else "bad-ref-direction"
        err(code, path, f"reference '{ref}': {why}")

    def walk(path: str, node: BtNode, visible: dict[str, str]) -> None:
        if is_leaf(node):
            _check_leaf(path, node)  # type: ignore[arg-type]
            return
        if not node.children:  # type: ignore[union-attr]
            err("empty-composite", path, f"{node_kind(node)} requires at least one child")
        if isinstance(node, Parallel):
            n = len(node.children)
            if not (1 <= node.threshold <= max(n, 1)):
                err(
                    "bad-threshold",
                    path,
                    f"parallel threshold {node.threshold} out of range 1..{n}",
                )
        inner = dict(visible)
        for ch in node.channels:  # type: ignore[union-attr]
            if ch.name in RESERVED_NAMES:
                err("reserved-name", path, f"channel name '{ch.name}' is reserved")
            if ch.name in seen_ports:
                err("duplicate-channel", path, f"channel '{ch.name}' shadows a port")
            elif ch.name in inner:
                err(
                    "duplicate-channel",
                    path,
                    f"channel '{ch.name}' shadows a channel declared at {inner[ch.name]}",
                )
            inner[ch.name] = path
        for i, child in enumerate(node.children):  # type: ignore[union-attr]
            walk(child_path(path, i), child, inner)

    def _check_leaf(path: str, node: Leaf) -> None:
        for name, refs in (("source", node.sources), ("effect", node.effects)):
            seen: set[str] = set()
            for r in refs:
                if r in seen:
                    warn("duplicate-ref", path, f"duplicate {name} reference '{r}'")
                seen.add(r)
        state_names: set[str] = set()
        for st in node.states:
            if st.name in RESERVED_NAMES:
                err("reserved-name", path, f"state name '{st.name}' is reserved")
            if st.name in state_names:
                err("duplicate-state", path, f"duplicate state '{st.name}'")
            state_names.add(st.name)
            if st.name in node.sources or st.name in node.effects:
                err("state-shadows-ref", path, f"state '{st.name}' shadows a referenced port or channel")
            if type_of(st.initial) is not st.vtype:
                err(
                    "bad-initial-type",
                    path,
                    f"state '{st.name}' initial value is {type_of(st.initial).value}, declared {st.vtype.value}",
                )
        body = node.body
        if isinstance(body, ExprBody):
            if isinstance(node, Task):
                err("expr-on-task", path, "@expr bodies are only valid on conditions")
            bound = set(node.sources) | state_names
            for r in sorted(expr_refs(body.expr) - bound):
                err("expr-unbound", path, f"expression reads '{r}' which is not a source or state")
        elif isinstance(body, ScriptBody):
            if not body.steps:
                err("empty-script", path, "@script requires at least one step")
            bound = set(node.sources) | state_names
            for step in body.steps:
                for ref, e in step.emits:
                    if ref not in node.effects:
                        err("emit-not-effect", path, f"emit target '{ref}' is not a declared effect")
                    for r in sorted(expr_refs(e) - bound):
                        err("expr-unbound", path, f"expression reads '{r}' which is not a source or state")
                for ref, e in step.updates:
                    if ref not in state_names:
                        err("state-not-declared", path, f"state update target '{ref}' is not declared")
                    for r in sorted(expr_refs(e) - bound):
                        err("expr-unbound", path, f"expression reads '{r}' which is not a source or state")
        elif isinstance(body, ExternBody):
            if not body.name:
                err("bad-extern", path, "extern callback name is empty")

    walk(ROOT_PATH, defn.root, {})

    for name, a, b in parallel_writer_conflicts(defn):
        err("parallel-writers", a, f"parallel writers on channel '{name}': {a} and {b}")
    for name, a, b in _parallel_read_write_conflicts(defn, res):
        err(
            "parallel-read-write",
            a,
            f"channel '{name}' is read and written across parallel branches: {a} and {b}",
        )

    items.sort(key=lambda i: (i.node_path, i.code, i.message))
    return CheckReport(items)
