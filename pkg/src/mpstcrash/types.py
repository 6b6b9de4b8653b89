"""Local session types, well-formedness, unfolding and coinductive subtyping.

Recursion variables are stored as de Bruijn indices, so structural equality
is alpha-equivalence.  Choice branches keep their written order for printing,
while equality and hashing treat them as a set keyed by label.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Union

CRASH = "crash"

BASIC_KINDS = ("unit", "int", "bool", "real", "string")


@dataclass(frozen=True)
class BasicType:
    """A payload type carrying plain data."""

    kind: str

    def __post_init__(self) -> None:
        if self.kind not in BASIC_KINDS:
            raise ValueError(f"unknown basic type {self.kind!r}")

    def __str__(self) -> str:
        return "str" if self.kind == "string" else self.kind


UNIT = BasicType("unit")
INT = BasicType("int")
BOOL = BasicType("bool")
REAL = BasicType("real")
STRING = BasicType("string")

_BASIC_SUB = {("int", "real")}


def basic_subtype(a: BasicType, b: BasicType) -> bool:
    """Subtyping on data: reflexive, plus int <: real."""
    return a.kind == b.kind or (a.kind, b.kind) in _BASIC_SUB


class SessionType:
    """Base class of the local type constructors."""

    __slots__ = ()

    def __str__(self) -> str:
        from .syntax import format_type

        return format_type(self)


Payload = Union[BasicType, SessionType]


@dataclass(frozen=True)
class Branch:
    label: str
    payload: Payload
    cont: SessionType


def _branch_key(branches: tuple[Branch, ...]) -> tuple[frozenset[Branch], int]:
    # the count keeps a choice with a repeated branch apart from its deduplicated twin
    return frozenset(branches), len(branches)


@dataclass(frozen=True, eq=False, repr=False)
class _Choice(SessionType):
    role: str
    branches: tuple[Branch, ...]
    _key: tuple = field(init=False, compare=False, repr=False)
    _hash: int = field(init=False, compare=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "branches", tuple(self.branches))
        key = _branch_key(self.branches)
        object.__setattr__(self, "_key", key)
        object.__setattr__(self, "_hash", hash((type(self).__name__, self.role, key)))

    def __eq__(self, other: object) -> bool:
        if self is other:
            return True
        return (
            type(other) is type(self)
            and self._hash == other._hash  # type: ignore[attr-defined]
            and self.role == other.role  # type: ignore[attr-defined]
            and self._key == other._key  # type: ignore[attr-defined]
        )

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        return f"{type(self).__name__}({str(self)!r})"

    def labels(self) -> tuple[str, ...]:
        return tuple(b.label for b in self.branches)

    def branch(self, label: str) -> Branch | None:
        for b in self.branches:
            if b.label == label:
                return b
        return None


class Internal(_Choice):
    """Send one of the branch labels to ``role``."""


class External(_Choice):
    """Receive one of the branch labels from ``role``."""


@dataclass(frozen=True, eq=False, repr=False)
class Rec(SessionType):
    """Binder; ``name`` is only a printing hint."""

    body: SessionType
    name: str = field(default="t", compare=False)
    _hash: int = field(init=False, compare=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "_hash", hash(("Rec", self.body)))

    def __eq__(self, other: object) -> bool:
        if self is other:
            return True
        return isinstance(other, Rec) and self._hash == other._hash and self.body == other.body

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        return f"Rec({str(self)!r})"


@dataclass(frozen=True, eq=False, repr=False)
class Var(SessionType):
    """De Bruijn index; 0 refers to the nearest enclosing ``Rec``."""

    index: int
    name: str = field(default="t", compare=False)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Var) and self.index == other.index

    def __hash__(self) -> int:
        return hash(("Var", self.index))

    def __repr__(self) -> str:
        return f"Var({self.index}, {self.name!r})"


class _Singleton(SessionType):
    _tag = ""

    def __eq__(self, other: object) -> bool:
        return type(other) is type(self)

    def __hash__(self) -> int:
        return hash(self._tag)

    def __repr__(self) -> str:
        return self._tag.capitalize()


class End(_Singleton):
    _tag = "end"


class Stop(_Singleton):
    _tag = "stop"


END = End()
STOP = Stop()


# ---------------------------------------------------------------- well-formedness


@dataclass(frozen=True)
class Violation:
    """First broken invariant found in a type, with the path leading to it."""

    reason: str
    path: tuple[str, ...] = ()

    def __str__(self) -> str:
        where = "/".join(self.path) or "<root>"
        return f"{self.reason} at {where}"


def _unguarded(t: SessionType) -> frozenset[int]:
    """Variables reachable from the head of ``t`` without crossing a choice."""
    if isinstance(t, Var):
        return frozenset({t.index})
    if isinstance(t, Rec):
        return frozenset(i - 1 for i in _unguarded(t.body) if i > 0)
    return frozenset()


def _check(t: object, depth: int, path: tuple[str, ...], top: bool) -> Violation | None:
    if isinstance(t, BasicType):
        return None
    if isinstance(t, Stop):
        return None if top else Violation("stop nested inside a type", path)
    if isinstance(t, End):
        return None
    if isinstance(t, Var):
        if not 0 <= t.index < depth:
            return Violation(f"unbound recursion variable {t.name}", path)
        return None
    if isinstance(t, Rec):
        if 0 in _unguarded(t.body):
            return Violation("unguarded recursion", path)
        return _check(t.body, depth + 1, path + (f"rec {t.name}",), False)
    if isinstance(t, _Choice):
        if not t.branches:
            return Violation("empty choice", path)
        seen: set[str] = set()
        for b in t.branches:
            if b.label in seen:
                return Violation(f"duplicate label {b.label}", path)
            seen.add(b.label)
            if b.label == CRASH and isinstance(t, Internal):
                return Violation("crash in internal choice", path)
        for b in t.branches:
            here = path + (b.label,)
            if not isinstance(b.payload, (BasicType, SessionType)):
                return Violation("malformed payload", here)
            # payloads are independent closed types
            bad = _check(b.payload, 0, here + ("payload",), False)
            if bad is not None:
                return bad
            bad = _check(b.cont, depth, here, False)
            if bad is not None:
                return bad
        return None
    return Violation(f"not a session type: {type(t).__name__}", path)


@lru_cache(maxsize=65536)
def well_formed(t: SessionType) -> Violation | None:
    """Return ``None`` when ``t`` is a valid endpoint type, else the first violation."""
    return _check(t, 0, (), True)


# ---------------------------------------------------------------- unfolding


def _subst(t: SessionType, depth: int, closed: SessionType) -> SessionType:
    """Replace variable ``depth`` with the closed type ``closed``."""
    if isinstance(t, Var):
        if t.index == depth:
            return closed
        return Var(t.index - 1, t.name) if t.index > depth else t
    if isinstance(t, Rec):
        return Rec(_subst(t.body, depth + 1, closed), t.name)
    if isinstance(t, _Choice):
        return type(t)(
            t.role,
            tuple(Branch(b.label, b.payload, _subst(b.cont, depth, closed)) for b in t.branches),
        )
    return t


@lru_cache(maxsize=65536)
def unfold(t: SessionType) -> SessionType:
    """Unroll top-level recursion until the head is a choice, ``end`` or ``stop``."""
    while isinstance(t, Rec):
        t = _subst(t.body, 0, t)
    return t


# ---------------------------------------------------------------- subtyping


def _is_pure_recovery(t: SessionType) -> bool:
    return isinstance(t, External) and len(t.branches) == 1 and t.branches[0].label == CRASH


class _Subtyping:
    def __init__(self) -> None:
        self.assumed: set[tuple[Payload, Payload]] = set()

    def check(self, a: Payload, b: Payload) -> bool:
        if isinstance(a, BasicType) or isinstance(b, BasicType):
            return isinstance(a, BasicType) and isinstance(b, BasicType) and basic_subtype(a, b)
        if isinstance(a, Stop) or isinstance(b, Stop):
            return isinstance(a, Stop) and isinstance(b, Stop)
        if (a, b) in self.assumed:
            return True
        self.assumed.add((a, b))
        ua, ub = unfold(a), unfold(b)
        if isinstance(ua, End) or isinstance(ub, End):
            return isinstance(ua, End) and isinstance(ub, End)
        if isinstance(ua, Internal) and isinstance(ub, Internal) and ua.role == ub.role:
            for sup in ub.branches:
                sub = ua.branch(sup.label)
                if sub is None:
                    return False
                if not self.check(sup.payload, sub.payload):
                    return False
                if not self.check(sub.cont, sup.cont):
                    return False
            return True
        if isinstance(ua, External) and isinstance(ub, External) and ua.role == ub.role:
            if _is_pure_recovery(ua) and len(ub.branches) != 1:
                return False
            for sub in ua.branches:
                sup = ub.branch(sub.label)
                if sup is None:
                    return False
                if not self.check(sub.payload, sup.payload):
                    return False
                if not self.check(sub.cont, sup.cont):
                    return False
            return True
        return False


@lru_cache(maxsize=262144)
def is_subtype(a: Payload, b: Payload) -> bool:
    """Decide ``a <= b`` coinductively; revisited pairs are accepted."""
    return _Subtyping().check(a, b)


def is_pure_recovery(t: SessionType) -> bool:
    """True for types whose head only waits for a peer's crash."""
    return _is_pure_recovery(unfold(t))


def is_end_like(t: Payload) -> bool:
    """Entries that may be discarded: data, or session types below ``end``."""
    if isinstance(t, BasicType):
        return True
    return not isinstance(t, Stop) and is_subtype(t, END)
