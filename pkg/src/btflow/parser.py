"""Recursive-descent parser for the behavior-tree DSL, plus the canonical
pretty-printer.

The surface syntax:

    behaviortree Name {
      input  sensor: bool
      output result: int
      sequence {
        channel x: int
        task "Writer" () -> (x) {=
          @script
          step { emit x = 1; status success }
          loop
        =}
        condition "Check" (x) {= @expr present(x) && x > 0 =}
      }
    }

Task/condition bodies inside {= ... =} hold a small deterministic
mini-language (@extern NAME, @expr EXPR, or @script steps). The extended leaf
form opens a block with state declarations and a single reaction.

The parser never raises on malformed input: it records diagnostics with
source spans and recovers at node boundaries so several errors can be
reported in one pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .exprs import Binary, Expr, Lit, PRECEDENCE, Present, Ref, Unary, print_expr
from .model import (
    BtDef,
    BtNode,
    ChannelDecl,
    Condition,
    ExprBody,
    ExternBody,
    Fallback,
    Parallel,
    PortDecl,
    RESERVED_NAMES,
    ScriptBody,
    ScriptStep,
    Sequence,
    StateDecl,
    Status,
    Task,
    TaskBody,
    Value,
    ValueType,
    is_leaf,
)
from .source import Diagnostic, SourceSpan

_I64_MAX = 2**63 - 1

NODE_KEYWORDS = ("sequence", "fallback", "parallel", "task", "condition")
TYPE_NAMES = {t.value: t for t in ValueType}

_PUNCT2 = ("->", "==", "!=", "<=", ">=", "&&", "||", "{=", "=}")
_PUNCT1 = "{}():;,=<>!+-*/%@"


@dataclass(frozen=True)
class Token:
    kind: str  # IDENT INT FLOAT STRING BODY PUNCT EOF ERROR
    value: str
    line: int
    col: int
    end_line: int
    end_col: int

    def span(self, file: str) -> SourceSpan:
        return SourceSpan(file, self.line, self.col, self.end_line, self.end_col)


class _Lexer:
    def __init__(self, text: str, file: str, line: int = 1, col: int = 1):
        self.text = text
        self.file = file
        self.pos = 0
        self.line = line
        self.col = col
        self.diagnostics: list[Diagnostic] = []

    def _peek(self, offset: int = 0) -> str:
        i = self.pos + offset
        return self.text[i] if i < len(self.text) else ""

    def _advance(self, n: int = 1) -> None:
        for _ in range(n):
            if self.pos >= len(self.text):
                return
            if self.text[self.pos] == "\n":
                self.line += 1
                self.col = 1
            else:
                self.col += 1
            self.pos += 1

    def _skip_trivia(self) -> None:
        while self.pos < len(self.text):
            ch = self.text[self.pos]
            if ch in " \t\r\n":
                self._advance()
            elif ch == "/" and self._peek(1) == "/":
                while self.pos < len(self.text) and self.text[self.pos] != "\n":
                    self._advance()
            else:
                return

    def _error(self, line: int, col: int, msg: str) -> None:
        self.diagnostics.append(
            Diagnostic(SourceSpan(self.file, line, col, self.line, self.col), "error", msg)
        )

    def tokens(self, capture_bodies: bool = True) -> list[Token]:
        out: list[Token] = []
        while True:
            self._skip_trivia()
            line, col = self.line, self.col
            if self.pos >= len(self.text):
                out.append(Token("EOF", "", line, col, line, col))
                return out
            ch = self.text[self.pos]
            two = self.text[self.pos : self.pos + 2]
            if two == "{=" and capture_bodies:
                self._advance(2)
                out.append(Token("PUNCT", "{=", line, col, self.line, self.col))
                out.append(self._capture_body())
                continue
            if two in _PUNCT2:
                self._advance(2)
                out.append(Token("PUNCT", two, line, col, self.line, self.col))
                continue
            if ch.isalpha() or ch == "_":
                start = self.pos
                while self._peek().isalnum() or self._peek() == "_":
                    self._advance()
                out.append(Token("IDENT", self.text[start : self.pos], line, col, self.line, self.col))
                continue
            if ch.isdigit():
                out.append(self._number(line, col))
                continue
            if ch == '"':
                out.append(self._string(line, col))
                continue
            if ch in _PUNCT1:
                self._advance()
                out.append(Token("PUNCT", ch, line, col, self.line, self.col))
                continue
            self._advance()
            self._error(line, col, f"unexpected character {ch!r}")
            out.append(Token("ERROR", ch, line, col, self.line, self.col))

    def _number(self, line: int, col: int) -> Token:
        start = self.pos
        while self._peek().isdigit():
            self._advance()
        is_float = False
        if self._peek() == "." and self._peek(1).isdigit():
            is_float = True
            self._advance()
            while self._peek().isdigit():
                self._advance()
        if self._peek() in "eE" and (
            self._peek(1).isdigit() or (self._peek(1) in "+-" and self._peek(2).isdigit())
        ):
            is_float = True
            self._advance()
            if self._peek() in "+-":
                self._advance()
            while self._peek().isdigit():
                self._advance()
        text = self.text[start : self.pos]
        return Token("FLOAT" if is_float else "INT", text, line, col, self.line, self.col)

    def _string(self, line: int, col: int) -> Token:
        self._advance()  # opening quote
        out: list[str] = []
        while True:
            if self.pos >= len(self.text) or self.text[self.pos] == "\n":
                self._error(line, col, "unterminated string literal")
                break
            ch = self.text[self.pos]
            if ch == '"':
                self._advance()
                break
            if ch == "\\":
                esc = self._peek(1)
                mapped = {"n": "\n", "t": "\t", "r": "\r", '"': '"', "\\": "\\"}.get(esc)
                if mapped is None:
                    self._error(self.line, self.col, f"bad escape '\\{esc}'")
                    mapped = esc
                out.append(mapped)
                self._advance(2)
            else:
                out.append(ch)
                self._advance()
        return Token("STRING", "".join(out), line, col, self.line, self.col)

    def _capture_body(self) -> Token:
        """Raw text up to the matching =}, honoring strings and // comments."""
        line, col = self.line, self.col
        start = self.pos
        in_string = False
        in_comment = False
        while self.pos < len(self.text):
            ch = self.text[self.pos]
            if in_comment:
                if ch == "\n":
                    in_comment = False
                self._advance()
                continue
            if in_string:
                if ch == "\\":
                    self._advance(2)
                    continue
                if ch == '"' or ch == "\n":
                    in_string = False
                self._advance()
                continue
            if ch == '"':
                in_string = True
                self._advance()
                continue
            if ch == "/" and self._peek(1) == "/":
                in_comment = True
                self._advance(2)
                continue
            if ch == "=" and self._peek(1) == "}":
                return Token("BODY", self.text[start : self.pos], line, col, self.line, self.col)
            self._advance()
        self._error(line, col, 'unterminated "{=" body block')
        return Token("BODY", self.text[start : self.pos], line, col, self.line, self.col)


@dataclass
class ParseResult:
    defn: BtDef | None
    diagnostics: list[Diagnostic] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.defn is not None and not any(d.severity == "error" for d in self.diagnostics)


class _ParseError(Exception):
    pass


class _Parser:
    def __init__(self, tokens: list[Token], file: str):
        self.tokens = tokens
        self.file = file
        self.pos = 0
        self.diags: list[Diagnostic] = []

    # -- token helpers ------------------------------------------------------

    def peek(self, offset: int = 0) -> Token:
        i = min(self.pos + offset, len(self.tokens) - 1)
        return self.tokens[i]

    def at(self, kind: str, value: str | None = None) -> bool:
        t = self.peek()
        return t.kind == kind and (value is None or t.value == value)

    def at_word(self, word: str) -> bool:
        return self.at("IDENT", word)

    def advance(self) -> Token:
        t = self.tokens[self.pos]
        if self.pos < len(self.tokens) - 1:
            self.pos += 1
        return t

    def error(self, tok: Token, msg: str) -> _ParseError:
        self.diags.append(Diagnostic(tok.span(self.file), "error", msg))
        return _ParseError()

    def expect(self, kind: str, value: str | None = None, what: str | None = None) -> Token:
        if self.at(kind, value):
            return self.advance()
        want = what or (value if value is not None else kind.lower())
        got = self.peek().value or self.peek().kind
        raise self.error(self.peek(), f"expected {want}, found {got!r}")

    def expect_word(self, word: str) -> Token:
        if self.at_word(word):
            return self.advance()
        got = self.peek().value or self.peek().kind
        raise self.error(self.peek(), f"expected '{word}', found {got!r}")

    # -- grammar ------------------------------------------------------------

    def parse_def(self) -> BtDef | None:
        try:
            first = self.expect_word("behaviortree")
            name = self.expect("IDENT", what="behavior tree name")
            self.expect("PUNCT", "{")
            ports: list[PortDecl] = []
            seen: set[str] = set()
            while self.at_word("input") or self.at_word("output"):
                decl = self.parse_port()
                if decl is not None:
                    if decl.name in seen:
                        self.diags.append(
                            Diagnostic(decl.span, "error", f"duplicate port name '{decl.name}'")  # type: ignore[arg-type]
                        )
                    seen.add(decl.name)
                    if decl.name in RESERVED_NAMES:
                        self.diags.append(
                            Diagnostic(decl.span, "error", f"port name '{decl.name}' is reserved")  # type: ignore[arg-type]
                        )
                    ports.append(decl)
            root = self.parse_node()
            close = self.expect("PUNCT", "}")
            if not self.at("EOF"):
                self.error(self.peek(), "unexpected trailing input after behavior tree")
            span = SourceSpan(self.file, first.line, first.col, close.end_line, close.end_col)
            if root is None:
                return None
            return BtDef(name.value, ports, root, span)
        except _ParseError:
            return None

    def parse_port(self) -> PortDecl | None:
        try:
            d = self.advance()  # input | output
            name = self.expect("IDENT", what="port name")
            self.expect("PUNCT", ":")
            vt = self.parse_type()
            span = SourceSpan(self.file, d.line, d.col, name.end_line, name.end_col)
            return PortDecl(name.value, d.value, vt, span)
        except _ParseError:
            self.sync_to_decl()
            return None

    def parse_type(self) -> ValueType:
        t = self.expect("IDENT", what="type (bool, int, float, string)")
        if t.value not in TYPE_NAMES:
            raise self.error(t, f"unknown type '{t.value}'")
        return TYPE_NAMES[t.value]

    def parse_node(self) -> BtNode | None:
        t = self.peek()
        if t.kind == "IDENT" and t.value in ("sequence", "fallback", "parallel"):
            return self.parse_composite()
        if t.kind == "IDENT" and t.value in ("task", "condition"):
            return self.parse_leaf()
        self.error(t, f"expected a node (one of {', '.join(NODE_KEYWORDS)}), found {t.value or t.kind!r}")
        raise _ParseError()

    def parse_composite(self) -> BtNode | None:
        kw = self.advance()
        threshold: int | None = None
        if kw.value == "parallel" and self.at("PUNCT", "("):
            self.advance()
            n = self.expect("INT", what="parallel threshold")
            threshold = int(n.value)
            self.expect("PUNCT", ")")
        self.expect("PUNCT", "{")
        channels: list[ChannelDecl] = []
        children: list[BtNode] = []
        while self.at_word("channel"):
            ch = self.parse_channel()
            if ch is not None:
                channels.append(ch)
        while not self.at("PUNCT", "}") and not self.at("EOF"):
            if self.at_word("channel"):
                tok = self.peek()
                self.diags.append(
                    Diagnostic(tok.span(self.file), "error", "channel declarations must precede child nodes")
                )
                self.parse_channel()
                continue
            try:
                child = self.parse_node()
                if child is not None:
                    children.append(child)
            except _ParseError:
                self.sync_to_node_boundary()
        close = self.expect("PUNCT", "}")
        span = SourceSpan(self.file, kw.line, kw.col, close.end_line, close.end_col)
        if not children:
            self.diags.append(
                Diagnostic(span, "error", f"{kw.value} requires at least one child")
            )
        if kw.value == "sequence":
            return Sequence(children, channels, span)
        if kw.value == "fallback":
            return Fallback(children, channels, span)
        m = threshold if threshold is not None else len(children)
        return Parallel(m, children, channels, span)

    def parse_channel(self) -> ChannelDecl | None:
        try:
            kw = self.expect_word("channel")
            name = self.expect("IDENT", what="channel name")
            self.expect("PUNCT", ":")
            vt = self.parse_type()
            span = SourceSpan(self.file, kw.line, kw.col, name.end_line, name.end_col)
            if name.value in RESERVED_NAMES:
                self.diags.append(Diagnostic(span, "error", f"channel name '{name.value}' is reserved"))
            return ChannelDecl(name.value, vt, span)
        except _ParseError:
            self.sync_to_node_boundary()
            return None

    def parse_leaf(self) -> BtNode | None:
        kw = self.advance()  # task | condition
        label = self.expect("STRING", what="node label string")
        sources: list[str] = []
        effects: list[str] = []
        have_iface = False
        if self.at("PUNCT", "("):
            have_iface = True
            sources, effects = self.parse_iface()
        states: list[StateDecl] = []
        if self.at("PUNCT", "{="):
            body, end = self.parse_body_block()
        elif self.at("PUNCT", "{"):
            opening = self.advance()
            while self.at_word("state"):
                st = self.parse_state_decl()
                if st is not None:
                    states.append(st)
            self.expect_word("reaction")
            if have_iface:
                self.diags.append(
                    Diagnostic(
                        opening.span(self.file),
                        "error",
                        "a leaf with an extended body must declare its interface on the reaction",
                    )
                )
            sources, effects = self.parse_iface()
            body, _ = self.parse_body_block()
            end = self.expect("PUNCT", "}")
        else:
            raise self.error(self.peek(), 'expected a body ("{=" or "{")')
        span = SourceSpan(self.file, kw.line, kw.col, end.end_line, end.end_col)
        cls = Task if kw.value == "task" else Condition
        return cls(label.value, sources, effects, states, body, span)

    def parse_iface(self) -> tuple[list[str], list[str]]:
        self.expect("PUNCT", "(")
        sources = self.parse_ref_list()
        self.expect("PUNCT", ")")
        effects: list[str] = []
        if self.at("PUNCT", "->"):
            self.advance()
            self.expect("PUNCT", "(")
            effects = self.parse_ref_list()
            self.expect("PUNCT", ")")
        return sources, effects

    def parse_ref_list(self) -> list[str]:
        refs: list[str] = []
        if self.at("IDENT"):
            refs.append(self.advance().value)
            while self.at("PUNCT", ","):
                self.advance()
                refs.append(self.expect("IDENT", what="reference name").value)
        return refs

    def parse_state_decl(self) -> StateDecl | None:
        try:
            kw = self.expect_word("state")
            name = self.expect("IDENT", what="state name")
            self.expect("PUNCT", ":")
            vt = self.parse_type()
            self.expect("PUNCT", "=")
            init = self.parse_literal()
            span = SourceSpan(self.file, kw.line, kw.col, name.end_line, name.end_col)
            if name.value in RESERVED_NAMES:
                self.diags.append(Diagnostic(span, "error", f"state name '{name.value}' is reserved"))
            return StateDecl(name.value, vt, init, span)
        except _ParseError:
            self.sync_to_node_boundary()
            return None

    def parse_literal(self) -> Value:
        neg = False
        if self.at("PUNCT", "-"):
            self.advance()
            neg = True
        t = self.peek()
        if t.kind == "INT":
            self.advance()
            n = int(t.value)
            if n > _I64_MAX:
                self.error(t, "integer literal out of 64-bit range")
                n = _I64_MAX
            return -n if neg else n
        if t.kind == "FLOAT":
            self.advance()
            f = float(t.value)
            return -f if neg else f
        if t.kind == "STRING":
            if neg:
                raise self.error(t, "cannot negate a string literal")
            self.advance()
            return t.value
        if t.kind == "IDENT" and t.value in ("true", "false"):
            if neg:
                raise self.error(t, "cannot negate a boolean literal")
            self.advance()
            return t.value == "true"
        raise self.error(t, f"expected a literal, found {t.value or t.kind!r}")

    def parse_body_block(self) -> tuple[TaskBody, Token]:
        self.expect("PUNCT", "{=")
        raw = self.expect("BODY")
        end = self.expect("PUNCT", "=}", what='"=}"')
        bp = _BodyParser(raw, self.file)
        body = bp.parse()
        self.diags.extend(bp.diags)
        if body is None:
            body = ScriptBody([ScriptStep()], "hold")  # placeholder; errors reported
        return body, end

    # -- recovery -----------------------------------------------------------

    def sync_to_node_boundary(self) -> None:
        """Skip tokens until something that can start a sibling node, keeping
        brace nesting balanced so we do not escape the enclosing composite."""
        depth = 0
        while not self.at("EOF"):
            t = self.peek()
            if depth == 0:
                if t.kind == "IDENT" and t.value in NODE_KEYWORDS + ("channel",):
                    return
                if t.kind == "PUNCT" and t.value == "}":
                    return
            if t.kind == "PUNCT" and t.value in ("{", "{="):
                depth += 1
            elif t.kind == "PUNCT" and t.value == "}":
                depth -= 1
                if depth < 0:
                    return
            self.advance()

    def sync_to_decl(self) -> None:
        while not self.at("EOF"):
            t = self.peek()
            if t.kind == "IDENT" and t.value in NODE_KEYWORDS + ("input", "output"):
                return
            if t.kind == "PUNCT" and t.value == "}":
                return
            self.advance()


class _BodyParser:
    """Parses the mini-language inside {= ... =} blocks."""

    def __init__(self, raw: Token, file: str):
        lexer = _Lexer(raw.value, file, raw.line, raw.col)
        self.tokens = lexer.tokens(capture_bodies=False)
        self.diags: list[Diagnostic] = list(lexer.diagnostics)
        self.inner = _Parser(self.tokens, file)
        self.inner.diags = self.diags

    def parse(self) -> TaskBody | None:
        p = self.inner
        try:
            p.expect("PUNCT", "@", what="'@extern', '@expr' or '@script'")
            kw = p.expect("IDENT", what="body kind (extern, expr, script)")
            if kw.value == "extern":
                name = p.expect("IDENT", what="extern callback name")
                p.expect("EOF", what="end of body")
                return ExternBody(name.value)
            if kw.value == "expr":
                e = parse_expr_tokens(p)
                p.expect("EOF", what="end of body")
                return ExprBody(e)
            if kw.value == "script":
                steps: list[ScriptStep] = []
                while p.at_word("step"):
                    steps.append(self.parse_step())
                if not steps:
                    raise p.error(p.peek(), "@script requires at least one step")
                tail_tok = p.expect("IDENT", what="'loop' or 'hold'")
                if tail_tok.value not in ("loop", "hold"):
                    raise p.error(tail_tok, f"expected 'loop' or 'hold', found {tail_tok.value!r}")
                p.expect("EOF", what="end of body")
                return ScriptBody(steps, tail_tok.value)
            raise p.error(kw, f"unknown body kind '@{kw.value}'")
        except _ParseError:
            return None

    def parse_step(self) -> ScriptStep:
        p = self.inner
        p.expect_word("step")
        p.expect("PUNCT", "{")
        emits: list[tuple[str, Expr]] = []
        updates: list[tuple[str, Expr]] = []
        while p.at_word("emit"):
            p.advance()
            name = p.expect("IDENT", what="effect name")
            p.expect("PUNCT", "=")
            e = parse_expr_tokens(p)
            p.expect("PUNCT", ";")
            emits.append((name.value, e))
        while p.at_word("state"):
            p.advance()
            name = p.expect("IDENT", what="state name")
            p.expect("PUNCT", "=")
            e = parse_expr_tokens(p)
            p.expect("PUNCT", ";")
            updates.append((name.value, e))
        p.expect_word("status")
        st = p.expect("IDENT", what="'success', 'failure' or 'running'")
        if st.value not in ("success", "failure", "running"):
            raise p.error(st, f"expected a status keyword, found {st.value!r}")
        p.expect("PUNCT", "}")
        return ScriptStep(emits, updates, Status[st.value.upper()])


# ---------------------------------------------------------------------------
# Expression parsing (precedence climbing over the shared token stream)


def parse_expr_tokens(p: _Parser, min_prec: int = 1) -> Expr:
    left = _parse_unary(p)
    while True:
        t = p.peek()
        if t.kind != "PUNCT" or t.value not in PRECEDENCE:
            return left
        prec = PRECEDENCE[t.value]
        if prec < min_prec:
            return left
        p.advance()
        right = parse_expr_tokens(p, prec + 1)
        left = Binary(t.value, left, right)


def _parse_unary(p: _Parser) -> Expr:
    t = p.peek()
    if t.kind == "PUNCT" and t.value in ("!", "-"):
        p.advance()
        return Unary(t.value, _parse_unary(p))
    return _parse_primary(p)


def _parse_primary(p: _Parser) -> Expr:
    t = p.peek()
    if t.kind == "INT":
        p.advance()
        n = int(t.value)
        if n > _I64_MAX:
            p.error(t, "integer literal out of 64-bit range")
            n = _I64_MAX
        return Lit(n)
    if t.kind == "FLOAT":
        p.advance()
        return Lit(float(t.value))
    if t.kind == "STRING":
        p.advance()
        return Lit(t.value)
    if t.kind == "IDENT":
        p.advance()
        if t.value == "true":
            return Lit(True)
        if t.value == "false":
            return Lit(False)
        if t.value == "present":
            p.expect("PUNCT", "(")
            name = p.expect("IDENT", what="reference name")
            p.expect("PUNCT", ")")
            return Present(name.value)
        return Ref(t.value)
    if t.kind == "PUNCT" and t.value == "(":
        p.advance()
        e = parse_expr_tokens(p)
        p.expect("PUNCT", ")")
        return e
    raise p.error(t, f"expected an expression, found {t.value or t.kind!r}")


# ---------------------------------------------------------------------------
# Entry points


def parse(text: str, file: str = "<input>") -> ParseResult:
    """Parse DSL text; on failure the result carries diagnostics instead of a
    definition. Never raises on arbitrary input."""
    lexer = _Lexer(text, file)
    tokens = lexer.tokens()
    parser = _Parser(tokens, file)
    parser.diags.extend(lexer.diagnostics)
    defn = parser.parse_def()
    diags = sorted(
        parser.diags,
        key=lambda d: (d.span.start_line, d.span.start_col, d.message),
    )
    if any(d.severity == "error" for d in diags):
        return ParseResult(None, diags)
    return ParseResult(defn, diags)


def parse_expression(text: str, file: str = "<expr>") -> Expr:
    """Parse a standalone expression (for tests and tools); raises ValueError."""
    lexer = _Lexer(text, file)
    p = _Parser(lexer.tokens(capture_bodies=False), file)
    p.diags.extend(lexer.diagnostics)
    try:
        e = parse_expr_tokens(p)
        p.expect("EOF")
    except _ParseError:
        raise ValueError("; ".join(str(d) for d in p.diags)) from None
    if p.diags:
        raise ValueError("; ".join(str(d) for d in p.diags))
    return e


# ---------------------------------------------------------------------------
# Pretty-printing


def _fmt_literal(v: Value) -> str:
    from .exprs import _lit_text

    return _lit_text(v)


def _print_body(body: TaskBody, indent: str) -> str:
    if isinstance(body, ExternBody):
        return f"{{= @extern {body.name} =}}"
    if isinstance(body, ExprBody):
        return f"{{= @expr {print_expr(body.expr)} =}}"
    assert isinstance(body, ScriptBody)
    inner = indent + "  "
    lines = ["{=", f"{inner}@script"]
    for step in body.steps:
        parts = []
        for name, e in step.emits:
            parts.append(f"emit {name} = {print_expr(e)};")
        for name, e in step.updates:
            parts.append(f"state {name} = {print_expr(e)};")
        parts.append(f"status {step.status.value.lower()}")
        lines.append(f"{inner}step {{ {' '.join(parts)} }}")
    lines.append(f"{inner}{body.tail}")
    lines.append(f"{indent}=}}")
    return "\n".join(lines)


def _print_iface(sources: list[str], effects: list[str]) -> str:
    if not sources and not effects:
        return ""
    text = f"({', '.join(sources)})"
    if effects:
        text += f" -> ({', '.join(effects)})"
    return text + " "


def _print_node(node: BtNode, depth: int) -> str:
    pad = "  " * depth
    if is_leaf(node):
        kw = "task" if isinstance(node, Task) else "condition"
        label = _fmt_literal(node.label)  # type: ignore[union-attr]
        if node.states:  # type: ignore[union-attr]
            inner = pad + "  "
            lines = [f"{pad}{kw} {label} {{"]
            for st in node.states:  # type: ignore[union-attr]
                lines.append(f"{inner}state {st.name}: {st.vtype.value} = {_fmt_literal(st.initial)}")
            iface = _print_iface(node.sources, node.effects)  # type: ignore[union-attr]
            if not iface:
                iface = "() "
            lines.append(f"{inner}reaction {iface}{_print_body(node.body, inner)}")  # type: ignore[union-attr]
            lines.append(f"{pad}}}")
            return "\n".join(lines)
        iface = _print_iface(node.sources, node.effects)  # type: ignore[union-attr]
        return f"{pad}{kw} {label} {iface}{_print_body(node.body, pad)}"  # type: ignore[union-attr]
    kw = {Sequence: "sequence", Fallback: "fallback"}.get(type(node))
    head = kw if kw else f"parallel({node.threshold})"  # type: ignore[union-attr]
    lines = [f"{pad}{head} {{"]
    for ch in node.channels:  # type: ignore[union-attr]
        lines.append(f"{pad}  channel {ch.name}: {ch.vtype.value}")
    for child in node.children:  # type: ignore[union-attr]
        lines.append(_print_node(child, depth + 1))
    lines.append(f"{pad}}}")
    return "\n".join(lines)


def pretty_print(defn: BtDef) -> str:
    """Canonical text; parse(pretty_print(d)) rebuilds an equal AST."""
    lines = [f"behaviortree {defn.name} {{"]
    for p in defn.ports:
        lines.append(f"  {p.direction} {p.name}: {p.vtype.value}")
    lines.append(_print_node(defn.root, 1))
    lines.append("}")
    return "\n".join(lines) + "\n"
