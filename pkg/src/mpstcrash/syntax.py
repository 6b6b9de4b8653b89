"""Concrete syntax: tokenizer, parsers and printers for types, contexts and processes.

Context documents (``.mpst``)::

    session s
    reliable p, r
    s[p] = q!{req.q?{res.end, crash.r!{req.r?{res.end}}}}

Process documents (``.proc``) hold one process, optionally preceded by
``sig X(T, ...)`` lines that declare externally defined process variables.
``#`` starts a comment running to the end of the line.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Iterable

from .context import Endpoint, TypingContext
from .process import (
    Bra,
    Call,
    Crashed,
    Datum,
    Def,
    ERR,
    Err,
    Name,
    NIL,
    Nil,
    Par,
    Process,
    Res,
    Sel,
    Value,
)
from .types import (
    BOOL,
    CRASH,
    END,
    INT,
    REAL,
    STOP,
    STRING,
    UNIT,
    BasicType,
    Branch,
    End,
    External,
    Internal,
    Payload,
    Rec,
    SessionType,
    Stop,
    Var,
    Violation,
    well_formed,
)

BASIC_NAMES = {"unit": UNIT, "int": INT, "bool": BOOL, "real": REAL, "str": STRING}
KEYWORDS = {"end", "stop", "rec", "session", "reliable", "new", "in", "def", "stopped", "error", "sig"}


class ParseError(ValueError):
    """Syntax error with a 1-based line/column and a 0-based offset."""

    def __init__(self, message: str, text: str, offset: int) -> None:
        offset = max(0, min(offset, len(text)))
        self.offset = offset
        self.line = text.count("\n", 0, offset) + 1
        self.column = offset - (text.rfind("\n", 0, offset) + 1) + 1
        self.reason = message
        super().__init__(f"{self.line}:{self.column}: {message}")


class WellFormednessError(ValueError):
    """A syntactically valid type that breaks a type invariant."""

    def __init__(self, where: str, violation: Violation) -> None:
        self.where = where
        self.violation = violation
        super().__init__(f"{where}: {violation}")


# ---------------------------------------------------------------- lexing

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+|\#[^\n]*)
  | (?P<real>-?\d+\.\d+)
  | (?P<int>-?\d+)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<ident>[A-Za-z_][A-Za-z0-9_']*)
  | (?P<unit>\(\s*\))
  | (?P<sym>[{}()\[\],.!?=:|])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    offset: int


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", text, pos)
        kind = m.lastgroup or ""
        if kind != "ws":
            tokens.append(Token(kind, m.group(), pos))
        pos = m.end()
    tokens.append(Token("eof", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str) -> None:
        self.text = text
        self.tokens = tokenize(text)
        self.pos = 0

    # -- token helpers
    def peek(self, ahead: int = 0) -> Token:
        return self.tokens[min(self.pos + ahead, len(self.tokens) - 1)]

    def next(self) -> Token:
        tok = self.peek()
        self.pos += 1
        return tok

    def fail(self, message: str, tok: Token | None = None) -> ParseError:
        tok = tok or self.peek()
        found = tok.text or "end of input"
        return ParseError(f"{message}, found {found!r}", self.text, tok.offset)

    def at(self, text: str, ahead: int = 0) -> bool:
        tok = self.peek(ahead)
        return tok.kind in ("sym", "ident", "unit") and tok.text == text

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.pos += 1
            return True
        return False

    def expect(self, text: str) -> Token:
        if not self.at(text):
            raise self.fail(f"expected {text!r}")
        return self.next()

    def ident(self, what: str = "identifier") -> str:
        tok = self.peek()
        if tok.kind != "ident" or tok.text in KEYWORDS:
            raise self.fail(f"expected {what}")
        self.pos += 1
        return tok.text

    def eof(self) -> None:
        if self.peek().kind != "eof":
            raise self.fail("expected end of input")

    # -- types
    def session_type(self, scope: list[str]) -> SessionType:
        tok = self.peek()
        if self.accept("end"):
            return END
        if self.accept("stop"):
            return STOP
        if self.accept("rec"):
            name = self.ident("recursion variable")
            self.expect(".")
            return Rec(self.session_type(scope + [name]), name)
        if tok.kind != "ident" or tok.text in KEYWORDS:
            raise self.fail("expected a session type")
        name = self.ident()
        if self.accept("!"):
            return Internal(name, self.branches(scope, internal=True))
        if self.accept("?"):
            return External(name, self.branches(scope, internal=False))
        for depth, bound in enumerate(reversed(scope)):
            if bound == name:
                return Var(depth, name)
        # unbound: keep it so that well-formedness can report it
        return Var(len(scope), name)

    def branches(self, scope: list[str], internal: bool) -> tuple[Branch, ...]:
        self.expect("{")
        out = [self.branch(scope, internal)]
        while self.accept(","):
            out.append(self.branch(scope, internal))
        self.expect("}")
        return tuple(out)

    def branch(self, scope: list[str], internal: bool) -> Branch:
        tok = self.peek()
        if tok.kind != "ident" or tok.text in KEYWORDS:
            raise self.fail("expected a label")
        label = self.next().text
        if label == CRASH and internal:
            raise ParseError("crash in internal choice", self.text, tok.offset)
        payload: Payload = UNIT
        if self.peek().kind == "unit":
            self.next()
        elif self.accept("("):
            payload = self.payload()
            self.expect(")")
        self.expect(".")
        return Branch(label, payload, self.session_type(scope))

    def payload(self) -> Payload:
        tok = self.peek()
        if tok.kind == "ident" and tok.text in BASIC_NAMES and self.at(")", 1):
            self.next()
            return BASIC_NAMES[tok.text]
        return self.session_type([])

    # -- context documents
    def document(self) -> ContextDocument:
        self.expect("session")
        session = self.ident("session name")
        reliable: list[str] = []
        if self.accept("reliable"):
            reliable = self.role_list()
        bindings: list[tuple[Endpoint, SessionType]] = []
        seen: set[str] = set()
        while self.peek().kind != "eof":
            tok = self.peek()
            s = self.ident("session name")
            if s != session:
                raise ParseError(f"binding for session {s!r} in a {session!r} document", self.text, tok.offset)
            self.expect("[")
            role = self.ident("role")
            self.expect("]")
            if role in seen:
                raise ParseError(f"role {role!r} bound twice", self.text, tok.offset)
            seen.add(role)
            self.expect("=")
            bindings.append((Endpoint(session, role), self.session_type([])))
        if not bindings:
            raise self.fail("expected at least one binding")
        missing = [r for r in reliable if r not in seen]
        if missing:
            raise ParseError(f"reliable role {missing[0]!r} has no binding", self.text, len(self.text))
        return ContextDocument(session, frozenset(reliable), tuple(bindings))

    def role_list(self) -> list[str]:
        roles = [self.ident("role")]
        while self.accept(","):
            roles.append(self.ident("role"))
        return roles

    # -- processes
    def signatures(self) -> dict[str, tuple[Payload, ...]]:
        theta: dict[str, tuple[Payload, ...]] = {}
        while self.accept("sig"):
            name = self.ident("process variable")
            self.expect("(")
            types: list[Payload] = []
            if not self.at(")"):
                types.append(self.payload_type())
                while self.accept(","):
                    types.append(self.payload_type())
            self.expect(")")
            theta[name] = tuple(types)
        return theta

    def payload_type(self) -> Payload:
        tok = self.peek()
        if tok.kind == "ident" and tok.text in BASIC_NAMES and (self.at(",", 1) or self.at(")", 1)):
            self.next()
            return BASIC_NAMES[tok.text]
        return self.session_type([])

    def process(self) -> Process:
        left = self.prefix()
        if self.accept("|"):
            return Par(left, self.process())
        return left

    def prefix(self) -> Process:
        tok = self.peek()
        if tok.kind == "int" and tok.text == "0":
            self.next()
            return NIL
        if self.accept("error"):
            return ERR
        if self.accept("stopped"):
            return Crashed(self.endpoint())
        if tok.kind == "unit":
            raise self.fail("expected a process")
        if self.accept("("):
            inner = self.process()
            self.expect(")")
            return inner
        if self.accept("new"):
            return self.restriction()
        if self.accept("def"):
            return self.definition()
        if tok.kind != "ident" or tok.text in KEYWORDS:
            raise self.fail("expected a process")
        if self.at("(", 1) or (self.peek(1).kind == "unit"):
            return self.call()
        chan = self.subject()
        self.expect("[")
        role = self.ident("role")
        self.expect("]")
        if self.accept("!"):
            label_tok = self.peek()
            label = self.ident("label") if label_tok.text != CRASH else CRASH
            if label == CRASH:
                raise ParseError("crash cannot be sent", self.text, label_tok.offset)
            payload: Datum = Value(UNIT)
            if self.peek().kind == "unit":
                self.next()
            elif self.accept("("):
                payload = self.datum()
                self.expect(")")
            self.expect(".")
            return Sel(chan, role, label, payload, self.prefix())
        if self.accept("?"):
            self.expect("{")
            branches = [self.proc_branch()]
            while self.accept(","):
                branches.append(self.proc_branch())
            self.expect("}")
            labels = [b[0] for b in branches]
            if len(set(labels)) != len(labels):
                raise ParseError("duplicate branch label", self.text, tok.offset)
            return Bra(chan, role, tuple(branches))
        raise self.fail("expected '!' or '?'")

    def proc_branch(self) -> tuple[str, str | None, Process]:
        tok = self.peek()
        if tok.kind != "ident" or tok.text in KEYWORDS:
            raise self.fail("expected a label")
        label = self.next().text
        var: str | None = None
        if self.peek().kind == "unit":
            self.next()
        elif label != CRASH and self.accept("("):
            var = self.ident("variable")
            self.expect(")")
        self.expect(".")
        return (label, var, self.prefix())

    def subject(self) -> Endpoint | Name:
        # s[p][q]... is a channel; x[q]... is a variable
        if self.at("[", 1) and self.peek(2).kind == "ident" and self.at("]", 3) and self.at("[", 4):
            return self.endpoint()
        return Name(self.ident("channel"))

    def endpoint(self) -> Endpoint:
        s = self.ident("session name")
        self.expect("[")
        role = self.ident("role")
        self.expect("]")
        return Endpoint(s, role)

    def datum(self) -> Datum:
        tok = self.peek()
        if tok.kind == "unit":
            self.next()
            return Value(UNIT)
        if tok.kind == "int":
            self.next()
            return Value(INT, int(tok.text))
        if tok.kind == "real":
            self.next()
            return Value(REAL, float(tok.text))
        if tok.kind == "string":
            self.next()
            return Value(STRING, json.loads(tok.text))
        if tok.kind == "ident" and tok.text in ("true", "false"):
            self.next()
            return Value(BOOL, tok.text == "true")
        if tok.kind == "ident" and self.at("[", 1):
            return self.endpoint()
        return Name(self.ident("value or channel"))

    def restriction(self) -> Res:
        session = self.ident("session name")
        self.expect(":")
        self.expect("{")
        annotation: list[tuple[str, SessionType]] = []
        while True:
            role = self.ident("role")
            self.expect(":")
            annotation.append((role, self.session_type([])))
            if not self.accept(","):
                break
        self.expect("}")
        roles = [r for r, _ in annotation]
        if len(set(roles)) != len(roles):
            raise self.fail("role annotated twice")
        reliable: list[str] = []
        if self.accept("reliable"):
            reliable = self.role_list()
        self.expect("in")
        return Res(session, tuple(annotation), self.process(), frozenset(reliable))

    def definition(self) -> Def:
        name = self.ident("process variable")
        self.expect("(")
        params: list[tuple[str, Payload]] = []
        if self.peek().kind == "unit":
            self.next()
        elif not self.accept(")"):
            while True:
                var = self.ident("parameter")
                self.expect(":")
                params.append((var, self.payload_type()))
                if not self.accept(","):
                    break
            self.expect(")")
        self.expect("=")
        body = self.process()
        self.expect("in")
        return Def(name, tuple(params), body, self.process())

    def call(self) -> Call:
        name = self.ident("process variable")
        if self.peek().kind == "unit":
            self.next()
            return Call(name, ())
        self.expect("(")
        args: list[Datum] = []
        if not self.accept(")"):
            args.append(self.datum())
            while self.accept(","):
                args.append(self.datum())
            self.expect(")")
        return Call(name, tuple(args))


# ---------------------------------------------------------------- documents


@dataclass(frozen=True)
class ContextDocument:
    session: str
    reliable: frozenset[str]
    bindings: tuple[tuple[Endpoint, SessionType], ...]

    def context(self) -> TypingContext:
        return TypingContext(self.bindings)

    def roles(self) -> tuple[str, ...]:
        return tuple(ep.role for ep, _ in self.bindings)


def _check_types(pairs: Iterable[tuple[str, object]]) -> None:
    for where, t in pairs:
        if isinstance(t, BasicType):
            continue
        bad = well_formed(t)  # type: ignore[arg-type]
        if bad is not None:
            raise WellFormednessError(where, bad)


def parse_type(text: str) -> SessionType:
    """Parse and validate a single session type."""
    parser = _Parser(text)
    t = parser.session_type([])
    parser.eof()
    _check_types([("type", t)])
    return t


def parse_context(text: str) -> ContextDocument:
    parser = _Parser(text)
    doc = parser.document()
    _check_types((str(ep), t) for ep, t in doc.bindings)
    return doc


def _process_types(p: Process) -> Iterable[tuple[str, object]]:
    stack = [p]
    while stack:
        q = stack.pop()
        if isinstance(q, Res):
            yield from ((f"{q.session}[{r}]", t) for r, t in q.annotation)
            stack.append(q.body)
        elif isinstance(q, Par):
            stack += [q.left, q.right]
        elif isinstance(q, Sel):
            stack.append(q.cont)
        elif isinstance(q, Bra):
            stack += [b[2] for b in q.branches]
        elif isinstance(q, Def):
            yield from ((f"{q.name}({x})", t) for x, t in q.params)
            stack += [q.body, q.cont]


def parse_process(text: str) -> tuple[dict[str, tuple[Payload, ...]], Process]:
    parser = _Parser(text)
    theta = parser.signatures()
    p = parser.process()
    parser.eof()
    _check_types(_process_types(p))
    for name, types in theta.items():
        _check_types((f"sig {name}", t) for t in types)
    return theta, p


# ---------------------------------------------------------------- printing

_UNICODE = {"!": "⊕", "?": "&", "rec": "μ"}


def format_payload(t: Payload, unicode: bool = False) -> str:
    if isinstance(t, BasicType):
        return str(t)
    return format_type(t, unicode)


def format_type(t: SessionType, unicode: bool = False) -> str:
    return _fmt_type(t, [], unicode)


def _fresh(name: str, names: list[str]) -> str:
    candidate = name
    while candidate in names:
        candidate += "'"
    return candidate


def _fmt_type(t: SessionType, names: list[str], unicode: bool) -> str:
    if isinstance(t, End):
        return "end"
    if isinstance(t, Stop):
        return "stop"
    if isinstance(t, Var):
        if 0 <= t.index < len(names):
            return names[-1 - t.index]
        return t.name
    if isinstance(t, Rec):
        name = _fresh(t.name, names)
        rec = _UNICODE["rec"] if unicode else "rec "
        return f"{rec}{name}.{_fmt_type(t.body, names + [name], unicode)}"
    if isinstance(t, (Internal, External)):
        op = "!" if isinstance(t, Internal) else "?"
        if unicode:
            op = _UNICODE[op]
        parts = []
        for b in t.branches:
            payload = "" if b.payload == UNIT else f"({format_payload(b.payload, unicode)})"
            parts.append(f"{b.label}{payload}.{_fmt_type(b.cont, names, unicode)}")
        return f"{t.role}{op}{{{', '.join(parts)}}}"
    raise TypeError(f"not a session type: {t!r}")


def format_context(g: TypingContext) -> str:
    parts = [f"{ep}: {format_type(t)}" for ep, t in g.entries]
    parts += [f"{x}: {format_payload(t)}" for x, t in g.variables]
    return "; ".join(parts)


def format_document(doc: ContextDocument) -> str:
    lines = [f"session {doc.session}"]
    if doc.reliable:
        lines.append("reliable " + ", ".join(sorted(doc.reliable)))
    lines += [f"{ep} = {format_type(t)}" for ep, t in doc.bindings]
    return "\n".join(lines) + "\n"


def format_value(v: Value) -> str:
    if v.kind == UNIT:
        return "()"
    if v.kind == BOOL:
        return "true" if v.value else "false"
    if v.kind == STRING:
        return json.dumps(v.value)
    if v.kind == REAL:
        text = repr(float(v.value))  # type: ignore[arg-type]
        return text if "." in text else text + ".0"
    return str(v.value)


def _fmt_datum(d: Datum) -> str:
    return format_value(d) if isinstance(d, Value) else str(d)


def format_process(p: Process) -> str:
    if isinstance(p, Par):
        return f"{_fmt_operand(p.left)} | {format_process(p.right)}"
    if isinstance(p, Res):
        ann = ", ".join(f"{r}: {format_type(t)}" for r, t in p.annotation)
        rel = f" reliable {', '.join(sorted(p.reliable))}" if p.reliable else ""
        return f"new {p.session}:{{{ann}}}{rel} in {format_process(p.body)}"
    if isinstance(p, Def):
        params = ", ".join(f"{x}: {format_payload(t)}" for x, t in p.params)
        return f"def {p.name}({params}) = {format_process(p.body)} in {format_process(p.cont)}"
    return _fmt_prefix(p)


def _fmt_operand(p: Process) -> str:
    if isinstance(p, (Par, Res, Def)):
        return f"({format_process(p)})"
    return format_process(p)


def _fmt_prefix(p: Process) -> str:
    if isinstance(p, Nil):
        return "0"
    if isinstance(p, Err):
        return "error"
    if isinstance(p, Crashed):
        return f"stopped {p.endpoint}"
    if isinstance(p, Call):
        return f"{p.name}({', '.join(_fmt_datum(a) for a in p.args)})"
    if isinstance(p, Sel):
        return f"{p.chan}[{p.to}]!{p.label}({_fmt_datum(p.payload)}).{_fmt_operand(p.cont)}"
    if isinstance(p, Bra):
        parts = []
        for label, var, body in p.branches:
            binder = f"({var})" if var is not None else ""
            parts.append(f"{label}{binder}.{_fmt_operand(body)}")
        return f"{p.chan}[{p.frm}]?{{{', '.join(parts)}}}"
    if isinstance(p, (Par, Res, Def)):
        return f"({format_process(p)})"
    raise TypeError(f"not a process: {p!r}")
