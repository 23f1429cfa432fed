"""Expression AST and evaluator for task/condition bodies.

Expressions read task sources and state variables from an environment that
maps names to values or ABSENT. Reading an absent name is a runtime error
except through present(name). The boolean operators short-circuit, which is
what makes present-guarded reads like ``present(x) && x > 0`` safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Union

from .model import ABSENT, EvalError, Value

_I64_MIN = -(2**63)
_I64_MAX = 2**63 - 1


def wrap_i64(n: int) -> int:
    """Two's-complement wraparound to 64-bit signed."""
    return ((n - _I64_MIN) % 2**64) + _I64_MIN


@dataclass(frozen=True)
class Lit:
    value: Value


@dataclass(frozen=True)
class Ref:
    name: str


@dataclass(frozen=True)
class Present:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str  # "!" | "-"
    operand: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expr"
    right: "Expr"


Expr = Union[Lit, Ref, Present, Unary, Binary]

# Lowest binds loosest; all operators are left-associative.
PRECEDENCE = {
    "||": 1,
    "&&": 2,
    "==": 3,
    "!=": 3,
    "<": 4,
    "<=": 4,
    ">": 4,
    ">=": 4,
    "+": 5,
    "-": 5,
    "*": 6,
    "/": 6,
    "%": 6,
}


def expr_refs(e: Expr) -> set[str]:
    """All names the expression can touch, including present() targets."""
    if isinstance(e, (Ref, Present)):
        return {e.name}
    if isinstance(e, Unary):
        return expr_refs(e.operand)
    if isinstance(e, Binary):
        return expr_refs(e.left) | expr_refs(e.right)
    return set()


def _require_bool(v: Value, what: str) -> bool:
    if not isinstance(v, bool):
        raise EvalError("TypeMismatch", f"{what} requires a bool, got {type(v).__name__}")
    return v


def _numeric(v: Value) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _check_finite(v: float) -> float:
    if not math.isfinite(v):
        raise EvalError("NonFinite", "float operation produced a non-finite result")
    return v


def _trunc_div(a: int, b: int) -> int:
    q = abs(a) // abs(b)
    return q if (a < 0) == (b < 0) else -q


def _arith(op: str, lv: Value, rv: Value) -> Value:
    if op == "+" and isinstance(lv, str) and isinstance(rv, str):
        return lv + rv
    if not (_numeric(lv) and _numeric(rv)):
        raise EvalError(
            "TypeMismatch",
            f"operator '{op}' requires numbers, got {type(lv).__name__} and {type(rv).__name__}",
        )
    both_int = isinstance(lv, int) and isinstance(rv, int)
    if op == "+":
        return wrap_i64(lv + rv) if both_int else _check_finite(float(lv) + float(rv))
    if op == "-":
        return wrap_i64(lv - rv) if both_int else _check_finite(float(lv) - float(rv))
    if op == "*":
        return wrap_i64(lv * rv) if both_int else _check_finite(float(lv) * float(rv))
    if op == "/":
        if both_int:
            if rv == 0:
                raise EvalError("DivideByZero", "integer division by zero")
            return wrap_i64(_trunc_div(lv, rv))
        if float(rv) == 0.0:
            raise EvalError("DivideByZero", "float division by zero")
        return _check_finite(float(lv) / float(rv))
    if op == "%":
        if not both_int:
            raise EvalError("TypeMismatch", "operator '%' requires integers")
        if rv == 0:
            raise EvalError("DivideByZero", "modulo by zero")
        return wrap_i64(lv - _trunc_div(lv, rv) * rv)
    raise AssertionError(op)


def _compare(op: str, lv: Value, rv: Value) -> bool:
    if _numeric(lv) and _numeric(rv):
        pass  # mixed int/float comparison is fine
    elif isinstance(lv, str) and isinstance(rv, str):
        pass
    elif isinstance(lv, bool) and isinstance(rv, bool):
        if op not in ("==", "!="):
            raise EvalError("TypeMismatch", f"operator '{op}' not defined on bool")
    else:
        raise EvalError(
            "TypeMismatch",
            f"cannot compare {type(lv).__name__} with {type(rv).__name__}",
        )
    if op == "==":
        return lv == rv
    if op == "!=":
        return lv != rv
    if op == "<":
        return lv < rv
    if op == "<=":
        return lv <= rv
    if op == ">":
        return lv > rv
    if op == ">=":
        return lv >= rv
    raise AssertionError(op)


def eval_expr(e: Expr, env: Mapping[str, object]) -> Value:
    """Strictly evaluate ``e``; only &&/|| short-circuit.

    Raises EvalError with code ReadOfAbsent when a name bound to ABSENT is
    read outside present(), TypeMismatch on type errors, DivideByZero and
    NonFinite for arithmetic faults.
    """
    if isinstance(e, Lit):
        return e.value
    if isinstance(e, Present):
        if e.name not in env:
            raise EvalError("TypeMismatch", f"unbound identifier '{e.name}'")
        return env[e.name] is not ABSENT
    if isinstance(e, Ref):
        if e.name not in env:
            raise EvalError("TypeMismatch", f"unbound identifier '{e.name}'")
        v = env[e.name]
        if v is ABSENT:
            raise EvalError("ReadOfAbsent", f"read of absent value '{e.name}'")
        return v  # type: ignore[return-value]
    if isinstance(e, Unary):
        v = eval_expr(e.operand, env)
        if e.op == "!":
            return not _require_bool(v, "operator '!'")
        if e.op == "-":
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise EvalError("TypeMismatch", "unary '-' requires a number")
            return wrap_i64(-v) if isinstance(v, int) else -v
        raise AssertionError(e.op)
    if isinstance(e, Binary):
        if e.op == "&&":
            if not _require_bool(eval_expr(e.left, env), "operator '&&'"):
                return False
            return _require_bool(eval_expr(e.right, env), "operator '&&'")
        if e.op == "||":
            if _require_bool(eval_expr(e.left, env), "operator '||'"):
                return True
            return _require_bool(eval_expr(e.right, env), "operator '||'")
        lv = eval_expr(e.left, env)
        rv = eval_expr(e.right, env)
        if e.op in ("==", "!=", "<", "<=", ">", ">="):
            return _compare(e.op, lv, rv)
        return _arith(e.op, lv, rv)
    raise AssertionError(f"not an expression: {e!r}")


def _lit_text(v: Value) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, str):
        out = ['"']
        for ch in v:
            if ch == '"':
                out.append('\\"')
            elif ch == "\\":
                out.append("\\\\")
            elif ch == "\n":
                out.append("\\n")
            elif ch == "\t":
                out.append("\\t")
            elif ch == "\r":
                out.append("\\r")
            else:
                out.append(ch)
        out.append('"')
        return "".join(out)
    raise AssertionError(f"not a literal value: {v!r}")


def print_expr(e: Expr, parent_prec: int = 0) -> str:
    """Canonical text with minimal parentheses; parses back to the same AST."""
    if isinstance(e, Lit):
        return _lit_text(e.value)
    if isinstance(e, Ref):
        return e.name
    if isinstance(e, Present):
        return f"present({e.name})"
    if isinstance(e, Unary):
        inner = print_expr(e.operand, 99)
        return f"{e.op}{inner}"
    if isinstance(e, Binary):
        prec = PRECEDENCE[e.op]
        left = print_expr(e.left, prec)
        # Left-associative: right subtree at the same level needs parens.
        right = print_expr(e.right, prec + 1)
        text = f"{left} {e.op} {right}"
        return f"({text})" if prec < parent_prec else text
    raise AssertionError(f"not an expression: {e!r}")
