"""Typing contexts and their labelled transitions under crash-stop failures."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Literal, Mapping, Union

from .types import (
    CRASH,
    END,
    STOP,
    BasicType,
    External,
    Internal,
    Payload,
    SessionType,
    Stop,
    UNIT,
    is_subtype,
    unfold,
    well_formed,
)


class IllFormedContext(ValueError):
    """Raised when a context holds a type that fails well-formedness."""


@dataclass(frozen=True, order=True)
class Endpoint:
    session: str
    role: str

    def __post_init__(self) -> None:
        if not self.session or not self.role:
            raise ValueError("endpoint needs a session and a role")

    def __str__(self) -> str:
        return f"{self.session}[{self.role}]"


EntryType = SessionType  # includes STOP


@dataclass(frozen=True, eq=False)
class TypingContext:
    """Immutable map from endpoints (and variables) to types.

    Entries are kept sorted, so two contexts with the same bindings compare
    and hash equal regardless of how they were built.
    """

    entries: tuple[tuple[Endpoint, SessionType], ...] = ()
    variables: tuple[tuple[str, Payload], ...] = ()
    _index: dict = field(init=False, repr=False, compare=False)
    _hash: int = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        entries = tuple(sorted(self.entries, key=lambda kv: kv[0]))
        variables = tuple(sorted(self.variables, key=lambda kv: kv[0]))
        index = dict(entries)
        if len(index) != len(entries):
            raise ValueError("duplicate endpoint in typing context")
        names = dict(variables)
        if len(names) != len(variables):
            raise ValueError("duplicate variable in typing context")
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "variables", variables)
        object.__setattr__(self, "_index", index)
        object.__setattr__(self, "_hash", hash((entries, variables)))

    @classmethod
    def of(
        cls,
        entries: Mapping[Endpoint, SessionType] | Iterable[tuple[Endpoint, SessionType]] = (),
        variables: Mapping[str, Payload] | Iterable[tuple[str, Payload]] = (),
    ) -> TypingContext:
        if isinstance(entries, Mapping):
            entries = entries.items()
        if isinstance(variables, Mapping):
            variables = variables.items()
        return cls(tuple(entries), tuple(variables))

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, TypingContext)
            and self._hash == other._hash
            and self.entries == other.entries
            and self.variables == other.variables
        )

    def __hash__(self) -> int:
        return self._hash

    def __getitem__(self, ep: Endpoint) -> SessionType:
        return self._index[ep]

    def __contains__(self, ep: object) -> bool:
        return ep in self._index

    def __iter__(self) -> Iterator[Endpoint]:
        return iter(self._index)

    def __len__(self) -> int:
        return len(self.entries)

    def get(self, ep: Endpoint) -> SessionType | None:
        return self._index.get(ep)

    def roles(self, session: str) -> tuple[str, ...]:
        return tuple(ep.role for ep, _ in self.entries if ep.session == session)

    def sessions(self) -> tuple[str, ...]:
        return tuple(sorted({ep.session for ep, _ in self.entries}))

    def update(self, changes: Mapping[Endpoint, SessionType]) -> TypingContext:
        merged = dict(self._index)
        merged.update(changes)
        return TypingContext(tuple(merged.items()), self.variables)

    def without(self, *eps: Endpoint) -> TypingContext:
        return TypingContext(
            tuple((e, t) for e, t in self.entries if e not in eps), self.variables
        )

    def validate(self) -> None:
        for ep, t in self.entries:
            bad = well_formed(t)
            if bad is not None:
                raise IllFormedContext(f"{ep}: {bad}")
        for name, t in self.variables:
            if isinstance(t, BasicType):
                continue
            bad = well_formed(t)
            if bad is not None or isinstance(t, Stop):
                raise IllFormedContext(f"{name}: {bad or 'stop is not a variable type'}")

    def __str__(self) -> str:
        from .syntax import format_context

        return format_context(self)

    def __repr__(self) -> str:
        return f"TypingContext({str(self)!r})"


# ---------------------------------------------------------------- labels


def _payload_text(payload: Payload) -> str:
    if payload == UNIT:
        return ""
    return f"({payload})"


@dataclass(frozen=True)
class Output:
    s: str
    p: str
    q: str
    label: str
    payload: Payload = UNIT
    kind = "output"

    def __str__(self) -> str:
        return f"{self.s}:{self.p}!{self.q}:{self.label}{_payload_text(self.payload)}"


@dataclass(frozen=True)
class Input:
    s: str
    p: str
    q: str
    label: str
    payload: Payload = UNIT
    kind = "input"

    def __str__(self) -> str:
        return f"{self.s}:{self.p}?{self.q}:{self.label}{_payload_text(self.payload)}"


@dataclass(frozen=True)
class Comm:
    s: str
    p: str
    q: str
    label: str
    kind = "comm"

    def __str__(self) -> str:
        return f"{self.s}:{self.p}->{self.q}:{self.label}"


@dataclass(frozen=True)
class Crash:
    s: str
    p: str
    kind = "crash"

    def __str__(self) -> str:
        return f"{self.s}:{self.p} crash"


@dataclass(frozen=True)
class CrashDetect:
    """Role ``p`` observes that role ``q`` has crashed."""

    s: str
    p: str
    q: str
    kind = "detect"

    def __str__(self) -> str:
        return f"{self.s}:{self.p} detects {self.q}"


@dataclass(frozen=True)
class Stopped:
    s: str
    p: str
    kind = "stopped"

    def __str__(self) -> str:
        return f"{self.s}:{self.p} stopped"


TransitionLabel = Union[Output, Input, Comm, Crash, CrashDetect, Stopped]
LABEL_KINDS = ("output", "input", "comm", "crash", "detect", "stopped")
REDUCTION_KINDS = frozenset({"comm", "detect", "crash"})
NONCRASH_KINDS = frozenset({"comm", "detect"})


def label_to_json(label: TransitionLabel) -> dict[str, str]:
    out = {"kind": label.kind}
    for name in ("s", "p", "q", "label"):
        if hasattr(label, name):
            out[name] = getattr(label, name)
    if isinstance(label, (Output, Input)):
        out["payload"] = str(label.payload)
    return out


# ---------------------------------------------------------------- semantics

Transition = tuple[TransitionLabel, TypingContext]


def successors(g: TypingContext, s: str, reliable: Iterable[str] = ()) -> frozenset[Transition]:
    """All one-step transitions of session ``s`` in ``g``."""
    g.validate()
    reliable = frozenset(reliable)
    mine = [(ep, t) for ep, t in g.entries if ep.session == s]
    heads = {ep.role: (ep, t, t if isinstance(t, Stop) else unfold(t)) for ep, t in mine}
    out: set[Transition] = set()

    for role, (ep, t, head) in heads.items():
        if isinstance(head, Stop):
            out.add((Stopped(s, role), g))
            continue
        if isinstance(head, Internal):
            for b in head.branches:
                out.add((Output(s, role, head.role, b.label, b.payload), g.update({ep: b.cont})))
        elif isinstance(head, External):
            for b in head.branches:
                out.add((Input(s, role, head.role, b.label, b.payload), g.update({ep: b.cont})))
        if role not in reliable and not is_subtype(t, END):
            out.add((Crash(s, role), g.update({ep: STOP})))

    for p, (ep_p, _, head_p) in heads.items():
        if not isinstance(head_p, Internal) or head_p.role not in heads:
            continue
        q = head_p.role
        ep_q, _, head_q = heads[q]
        if isinstance(head_q, Stop):
            # the receiver is gone: the message is lost, only the sender moves
            for b in head_p.branches:
                out.add((Comm(s, p, q, b.label), g.update({ep_p: b.cont})))
        elif isinstance(head_q, External) and head_q.role == p:
            for b in head_p.branches:
                r = head_q.branch(b.label)
                if r is not None and is_subtype(b.payload, r.payload):
                    out.add((Comm(s, p, q, b.label), g.update({ep_p: b.cont, ep_q: r.cont})))

    for q, (ep_q, _, head_q) in heads.items():
        if not isinstance(head_q, External):
            continue
        p = head_q.role
        handler = head_q.branch(CRASH)
        if handler is not None and p in heads and isinstance(heads[p][2], Stop):
            out.add((CrashDetect(s, q, p), g.update({ep_q: handler.cont})))

    return frozenset(out)


def reduction_successors(
    g: TypingContext,
    s: str,
    reliable: Iterable[str] = (),
    mode: Literal["noncrash", "maybecrash"] = "maybecrash",
) -> frozenset[Transition]:
    """Restrict :func:`successors` to reductions, with or without crashes."""
    keep = NONCRASH_KINDS if mode == "noncrash" else REDUCTION_KINDS
    if mode not in ("noncrash", "maybecrash"):
        raise ValueError(f"unknown reduction mode {mode!r}")
    return frozenset(tr for tr in successors(g, s, reliable) if tr[0].kind in keep)
