"""Task/condition body execution, shared by the compiled runtime and the
direct tick interpreter so both sides evaluate leaves through one code path.

An extern callback receives (sources, states): a read-only view of the
leaf's source values (possibly ABSENT) and the leaf's mutable state mapping.
It returns (emits, status) where emits maps effect names to values (or None)
and status is a Status, one of the strings "success"/"failure"/"running"/
"both", or None meaning running. Callbacks must be deterministic functions
of their arguments for runs to be reproducible; this is a documented
contract, not something the runtime can enforce. "both" exists so the
protocol check for a task that raises success and failure in one tick can
be exercised.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, MutableMapping

from .exprs import eval_expr
from .model import (
    ABSENT,
    BtDef,
    BtflowError,
    Condition,
    EvalError,
    ExprBody,
    ExternBody,
    Leaf,
    RefTarget,
    Resolution,
    ScriptBody,
    Status,
    Value,
    leaves_in_order,
    type_of,
)

ExternFn = Callable[
    [Mapping[str, object], MutableMapping[str, Value]],
    tuple[Mapping[str, Value] | None, object],
]


class DuplicateExternError(BtflowError):
    pass


class MissingExternError(BtflowError):
    def __init__(self, missing: list[tuple[str, str]]):
        names = ", ".join(f"'{n}' (task {label!r})" for n, label in missing)
        super().__init__(f"unregistered extern callbacks: {names}")
        self.missing = missing


_REGISTRY: dict[str, ExternFn] = {}


def register_extern(name: str, fn: ExternFn) -> None:
    if name in _REGISTRY:
        raise DuplicateExternError(f"extern '{name}' is already registered")
    _REGISTRY[name] = fn


def unregister_extern(name: str) -> None:
    _REGISTRY.pop(name, None)


def registered_externs() -> dict[str, ExternFn]:
    return dict(_REGISTRY)


@dataclass
class LeafRuntime:
    """Everything needed to execute one leaf, precomputed once."""

    path: str
    kind: str  # "task" | "condition"
    label: str
    leaf: Leaf
    sources: dict[str, RefTarget]
    effects: dict[str, RefTarget]
    extern_fn: ExternFn | None


def build_leaf_runtimes(
    defn: BtDef, res: Resolution, externs: Mapping[str, ExternFn] | None = None
) -> dict[str, LeafRuntime]:
    """Resolve extern callbacks against explicit externs then the global
    registry; raises MissingExternError listing unresolved task labels."""
    table: dict[str, ExternFn] = dict(_REGISTRY)
    if externs:
        table.update(externs)
    out: dict[str, LeafRuntime] = {}
    missing: list[tuple[str, str]] = []
    for path, leaf in leaves_in_order(defn):
        fn = None
        if isinstance(leaf.body, ExternBody):
            fn = table.get(leaf.body.name)
            if fn is None:
                missing.append((leaf.body.name, leaf.label))
        out[path] = LeafRuntime(
            path=path,
            kind="condition" if isinstance(leaf, Condition) else "task",
            label=leaf.label,
            leaf=leaf,
            sources=res.sources.get(path, {}),
            effects=res.effects.get(path, {}),
            extern_fn=fn,
        )
    if missing:
        raise MissingExternError(sorted(set(missing)))
    return out


@dataclass
class LeafOutcome:
    emits: dict[str, Value]
    success: bool
    failure: bool
    next_cursor: int
    warning: str | None = None  # condition-yields-running note


def _normalize_status(raw: object, label: str) -> tuple[bool, bool]:
    if raw is None:
        return False, False
    if isinstance(raw, Status):
        return raw is Status.SUCCESS, raw is Status.FAILURE
    if isinstance(raw, str):
        low = raw.lower()
        if low == "success":
            return True, False
        if low == "failure":
            return False, True
        if low == "running":
            return False, False
        if low == "both":
            return True, True
    raise EvalError("BadExternResult", f"extern for {label!r} returned invalid status {raw!r}")


def invoke_leaf(
    rt: LeafRuntime, env: dict[str, object], states: dict[str, Value], cursor: int
) -> LeafOutcome:
    """Execute one leaf body for one tick.

    ``env`` maps source names to values or ABSENT; ``states`` is the leaf's
    persistent state and is committed atomically for scripts. Raises
    EvalError on expression faults, protocol violations (DoubleStatus), or
    extern misbehavior; callers turn that into a trace error event.
    """
    body = rt.leaf.body
    state_types = {st.name: st.vtype for st in rt.leaf.states}

    if isinstance(body, ExprBody):
        v = eval_expr(body.expr, {**env, **states})
        if not isinstance(v, bool):
            raise EvalError("TypeMismatch", f"@expr must produce a bool, got {type_of(v).value}")
        outcome = LeafOutcome({}, v, not v, cursor)

    elif isinstance(body, ScriptBody):
        idx = cursor % len(body.steps) if body.tail == "loop" else min(cursor, len(body.steps) - 1)
        step = body.steps[idx]
        work = dict(states)
        emits: dict[str, Value] = {}
        for name, e in step.emits:
            emits[name] = eval_expr(e, {**env, **work})
        for name, e in step.updates:
            v = eval_expr(e, {**env, **work})
            if type_of(v) is not state_types[name]:
                raise EvalError(
                    "TypeMismatch",
                    f"state '{name}' is {state_types[name].value}, assigned {type_of(v).value}",
                )
            work[name] = v
        states.clear()
        states.update(work)
        nxt = (cursor + 1) % len(body.steps) if body.tail == "loop" else min(cursor + 1, len(body.steps) - 1)
        outcome = LeafOutcome(
            emits,
            step.status is Status.SUCCESS,
            step.status is Status.FAILURE,
            nxt,
        )

    else:
        assert isinstance(body, ExternBody)
        assert rt.extern_fn is not None, f"extern '{body.name}' not resolved"
        try:
            raw_emits, raw_status = rt.extern_fn(dict(env), states)
        except EvalError:
            raise
        except Exception as e:  # noqa: BLE001 - extern misbehavior becomes a trace error
            raise EvalError("ExternError", f"extern '{body.name}' raised {type(e).__name__}: {e}") from e
        ok, fail = _normalize_status(raw_status, rt.label)
        emits = dict(raw_emits or {})
        for name, v in states.items():
            if name not in state_types:
                raise EvalError("BadExternResult", f"extern set unknown state '{name}'")
            if type_of(v) is not state_types[name]:
                raise EvalError(
                    "TypeMismatch",
                    f"state '{name}' is {state_types[name].value}, extern assigned {type_of(v).value}",
                )
        outcome = LeafOutcome(emits, ok, fail, cursor)

    if outcome.success and outcome.failure:
        raise EvalError("DoubleStatus", "task produced both success and failure in one tick")

    for name, v in outcome.emits.items():
        target = rt.effects.get(name)
        if target is None:
            raise EvalError("BadExternResult", f"emit to undeclared effect '{name}'")
        if v is ABSENT:
            raise EvalError("TypeMismatch", f"cannot emit ABSENT on '{name}'")
        if type_of(v) is not target.vtype:
            raise EvalError(
                "TypeMismatch",
                f"effect '{name}' is {target.vtype.value}, emitted {type_of(v).value}",
            )

    if rt.kind == "condition" and not outcome.success and not outcome.failure:
        outcome.warning = "condition yielded running"
    return outcome


def initial_states(defn: BtDef) -> dict[str, dict[str, Value]]:
    return {
        path: {st.name: st.initial for st in leaf.states}
        for path, leaf in leaves_in_order(defn)
    }
