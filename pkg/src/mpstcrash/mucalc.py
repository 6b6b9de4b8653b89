"""Modal mu-calculus over finite transition systems.

Formulas are evaluated with plain set semantics and Kleene iteration.
Data quantifiers never reach the evaluator: :func:`encode` expands them over
the finite alphabet of labels that actually occur in the system, which is
exact because a diamond over an absent label is false and a box is true.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Literal

from .context import Comm, Crash, CrashDetect, Input, Output, Stopped, TransitionLabel
from .statespace import Lts
from .types import CRASH


class FormulaError(ValueError):
    """The formula is open or binds a variable non-monotonically."""


# ---------------------------------------------------------------- patterns

_FIELDS = ("s", "p", "q", "label", "payload")


@dataclass(frozen=True)
class LabelPattern:
    """Matches labels of one kind whose given fields agree; ``None`` is a wildcard."""

    kind: str
    s: str | None = None
    p: str | None = None
    q: str | None = None
    label: str | None = None
    payload: object = None

    @classmethod
    def exact(cls, label: TransitionLabel) -> LabelPattern:
        return cls(label.kind, **{f: getattr(label, f) for f in _FIELDS if hasattr(label, f)})

    def matches(self, label: TransitionLabel) -> bool:
        if label.kind != self.kind:
            return False
        for f in _FIELDS:
            want = getattr(self, f)
            if want is not None and getattr(label, f, None) != want:
                return False
        return True

    def __str__(self) -> str:
        parts = [f"{f}={getattr(self, f)}" for f in _FIELDS if getattr(self, f) is not None]
        return f"{self.kind}({', '.join(parts)})"


# ---------------------------------------------------------------- formulas


class Formula:
    __slots__ = ()


@dataclass(frozen=True, eq=False)
class TT(Formula):
    def __str__(self) -> str:
        return "tt"


@dataclass(frozen=True, eq=False)
class FF(Formula):
    def __str__(self) -> str:
        return "ff"


TRUE = TT()
FALSE = FF()


@dataclass(frozen=True, eq=False)
class Box(Formula):
    pattern: LabelPattern
    body: Formula

    def __str__(self) -> str:
        return f"[{self.pattern}]{_atom(self.body)}"


@dataclass(frozen=True, eq=False)
class Diamond(Formula):
    pattern: LabelPattern
    body: Formula

    def __str__(self) -> str:
        return f"<{self.pattern}>{_atom(self.body)}"


@dataclass(frozen=True, eq=False)
class And(Formula):
    parts: tuple[Formula, ...]

    def __str__(self) -> str:
        return " && ".join(_atom(p) for p in self.parts) if self.parts else "tt"


@dataclass(frozen=True, eq=False)
class Or(Formula):
    parts: tuple[Formula, ...]

    def __str__(self) -> str:
        return " || ".join(_atom(p) for p in self.parts) if self.parts else "ff"


@dataclass(frozen=True, eq=False)
class Implies(Formula):
    antecedent: Formula
    consequent: Formula

    def __str__(self) -> str:
        return f"{_atom(self.antecedent)} => {_atom(self.consequent)}"


@dataclass(frozen=True, eq=False)
class Lfp(Formula):
    var: str
    body: Formula

    def __str__(self) -> str:
        return f"mu {self.var}.{_atom(self.body)}"


@dataclass(frozen=True, eq=False)
class Gfp(Formula):
    var: str
    body: Formula

    def __str__(self) -> str:
        return f"nu {self.var}.{_atom(self.body)}"


@dataclass(frozen=True, eq=False)
class FVar(Formula):
    name: str

    def __str__(self) -> str:
        return self.name


def _atom(f: Formula) -> str:
    text = str(f)
    return f"({text})" if isinstance(f, (And, Or, Implies, Lfp, Gfp)) else text


def conj(parts: Iterable[Formula]) -> Formula:
    """Conjunction with unit and absorption simplifications."""
    kept: list[Formula] = []
    for p in parts:
        if isinstance(p, FF):
            return FALSE
        if not isinstance(p, TT):
            kept.append(p)
    if not kept:
        return TRUE
    return kept[0] if len(kept) == 1 else And(tuple(kept))


def disj(parts: Iterable[Formula]) -> Formula:
    kept: list[Formula] = []
    for p in parts:
        if isinstance(p, TT):
            return TRUE
        if not isinstance(p, FF):
            kept.append(p)
    if not kept:
        return FALSE
    return kept[0] if len(kept) == 1 else Or(tuple(kept))


def negate(f: Formula) -> Formula:
    """Push a negation down to the modalities of a fixpoint-free formula."""
    if isinstance(f, TT):
        return FALSE
    if isinstance(f, FF):
        return TRUE
    if isinstance(f, Box):
        return Diamond(f.pattern, negate(f.body))
    if isinstance(f, Diamond):
        return Box(f.pattern, negate(f.body))
    if isinstance(f, And):
        return disj(negate(p) for p in f.parts)
    if isinstance(f, Or):
        return conj(negate(p) for p in f.parts)
    if isinstance(f, Implies):
        return conj([f.antecedent, negate(f.consequent)])
    raise FormulaError(f"cannot negate {type(f).__name__}")


def implies(a: Formula, b: Formula) -> Formula:
    """``a => b`` rewritten as ``not a or b``."""
    return disj([negate(a), b])


# ---------------------------------------------------------------- checks


def _children(f: Formula) -> tuple[Formula, ...]:
    if isinstance(f, (Box, Diamond, Lfp, Gfp)):
        return (f.body,)
    if isinstance(f, (And, Or)):
        return f.parts
    if isinstance(f, Implies):
        return (f.antecedent, f.consequent)
    return ()


def free_vars(f: Formula) -> frozenset[str]:
    if isinstance(f, FVar):
        return frozenset({f.name})
    if isinstance(f, (Lfp, Gfp)):
        return free_vars(f.body) - {f.var}
    out: frozenset[str] = frozenset()
    for c in _children(f):
        out |= free_vars(c)
    return out


def check_formula(f: Formula) -> None:
    """Reject open formulas and variables under an odd number of antecedents."""
    if free_vars(f):
        raise FormulaError(f"open formula, free: {sorted(free_vars(f))}")

    def walk(g: Formula, polarity: dict[str, int]) -> None:
        if isinstance(g, FVar):
            if polarity.get(g.name, 0) % 2:
                raise FormulaError(f"variable {g.name} occurs negatively")
            return
        if isinstance(g, (Lfp, Gfp)):
            walk(g.body, {**polarity, g.var: 0})
            return
        if isinstance(g, Implies):
            walk(g.antecedent, {k: v + 1 for k, v in polarity.items()})
            walk(g.consequent, polarity)
            return
        for c in _children(g):
            walk(c, polarity)

    walk(f, {})


# ---------------------------------------------------------------- evaluation


class Evaluator:
    """Evaluates formulas on one transition system, caching closed subformulas."""

    def __init__(self, lts: Lts) -> None:
        self.lts = lts
        self.all = frozenset(range(len(lts.states)))
        self._by_label: dict[TransitionLabel, list[tuple[int, int]]] = {}
        for src, label, dst in lts.edges:
            self._by_label.setdefault(label, []).append((src, dst))
        self._pattern_edges: dict[LabelPattern, list[tuple[int, int]]] = {}
        self._closed: dict[int, tuple[Formula, frozenset[int]]] = {}
        self._free: dict[int, frozenset[str]] = {}

    def edges(self, pattern: LabelPattern) -> list[tuple[int, int]]:
        found = self._pattern_edges.get(pattern)
        if found is None:
            found = [e for label, es in self._by_label.items() if pattern.matches(label) for e in es]
            self._pattern_edges[pattern] = found
        return found

    def _fv(self, f: Formula) -> frozenset[str]:
        key = id(f)
        if key not in self._free:
            if isinstance(f, FVar):
                fv = frozenset({f.name})
            elif isinstance(f, (Lfp, Gfp)):
                fv = self._fv(f.body) - {f.var}
            else:
                fv = frozenset().union(*(self._fv(c) for c in _children(f)))
            self._free[key] = fv
        return self._free[key]

    def eval(self, f: Formula, env: dict[str, frozenset[int]] | None = None) -> frozenset[int]:
        env = env or {}
        closed = not self._fv(f)
        if closed:
            hit = self._closed.get(id(f))
            if hit is not None and hit[0] is f:
                return hit[1]
        result = self._eval(f, env)
        if closed:
            self._closed[id(f)] = (f, result)
        return result

    def _eval(self, f: Formula, env: dict[str, frozenset[int]]) -> frozenset[int]:
        if isinstance(f, TT):
            return self.all
        if isinstance(f, FF):
            return frozenset()
        if isinstance(f, FVar):
            return env[f.name]
        if isinstance(f, Diamond):
            target = self.eval(f.body, env)
            return frozenset(src for src, dst in self.edges(f.pattern) if dst in target)
        if isinstance(f, Box):
            target = self.eval(f.body, env)
            return self.all - {src for src, dst in self.edges(f.pattern) if dst not in target}
        if isinstance(f, And):
            acc = self.all
            for p in f.parts:
                acc = acc & self.eval(p, env)
                if not acc:
                    break
            return acc
        if isinstance(f, Or):
            acc: frozenset[int] = frozenset()
            for p in f.parts:
                acc = acc | self.eval(p, env)
            return acc
        if isinstance(f, Implies):
            return (self.all - self.eval(f.antecedent, env)) | self.eval(f.consequent, env)
        if isinstance(f, (Lfp, Gfp)):
            current = frozenset() if isinstance(f, Lfp) else self.all
            while True:
                nxt = self.eval(f.body, {**env, f.var: current})
                if nxt == current:
                    return current
                current = nxt
        raise FormulaError(f"unknown formula node {type(f).__name__}")


def evaluate(lts: Lts, f: Formula) -> frozenset[int]:
    """States of ``lts`` satisfying the closed, monotone formula ``f``."""
    check_formula(f)
    return Evaluator(lts).eval(f)


# ---------------------------------------------------------------- encodings

Property = Literal["safe", "df", "term", "nterm", "live"]


@dataclass(frozen=True)
class Alphabet:
    """Finite data domain for quantifier expansion."""

    session: str
    roles: tuple[str, ...]
    labels: tuple[TransitionLabel, ...]

    @classmethod
    def of(cls, lts: Lts) -> Alphabet:
        return cls(lts.session, lts.roles(), lts.labels)

    def pick(self, kind: type, **fields: object) -> list[TransitionLabel]:
        return [
            a
            for a in self.labels
            if isinstance(a, kind) and all(getattr(a, k) == v for k, v in fields.items())
        ]

    def pairs(self) -> list[tuple[str, str]]:
        return [(p, q) for p in self.roles for q in self.roles if p != q]


def _dia(labels: Iterable[TransitionLabel]) -> list[Formula]:
    return [Diamond(LabelPattern.exact(a), TRUE) for a in labels]


def _box(labels: Iterable[TransitionLabel], body: Formula) -> list[Formula]:
    return [Box(LabelPattern.exact(a), body) for a in labels]


def follow(alpha: Alphabet, x: Formula) -> Formula:
    """Require ``x`` after every communication, crash and crash detection."""
    moves = alpha.pick(Comm) + alpha.pick(Crash) + alpha.pick(CrashDetect)
    return conj(_box(moves, x))


def _follow_pair(alpha: Alphabet, p: str, q: str, y: Formula) -> Formula:
    moves = alpha.pick(Comm, p=p, q=q) + alpha.pick(Crash, p=p) + alpha.pick(CrashDetect, p=q, q=p)
    return conj(_box(moves, y))


def _progress(alpha: Alphabet, y: Formula) -> Formula:
    """Some pair can move, and all its moves keep ``y``."""
    options = []
    for p, q in alpha.pairs():
        fire = _dia(alpha.pick(Comm, p=p, q=q) + alpha.pick(CrashDetect, p=q, q=p))
        if fire:
            options.append(conj([disj(fire), _follow_pair(alpha, p, q, y)]))
    return disj(options)


def _noncrash_inputs(alpha: Alphabet, **fields: object) -> list[TransitionLabel]:
    return [a for a in alpha.pick(Input, **fields) if a.label != CRASH]


def _stuck_is_fine(alpha: Alphabet) -> Formula:
    """If no communication or detection is possible, no real action is pending."""
    moving = _dia(alpha.pick(Comm) + alpha.pick(CrashDetect))
    pending = _box(_noncrash_inputs(alpha) + alpha.pick(Output), FALSE)
    return disj(moving + [conj(pending)])


def _safe(alpha: Alphabet) -> Formula:
    x = FVar("X")
    s = alpha.session
    parts: list[Formula] = []
    for stopped in alpha.pick(Stopped):
        p = stopped.p
        for q in alpha.roles:
            waiting = _dia(alpha.pick(Input, p=q, q=p))
            if waiting:
                antecedent = conj([Diamond(LabelPattern.exact(stopped), TRUE), disj(waiting)])
                parts.append(implies(antecedent, disj(_dia(alpha.pick(CrashDetect, p=q, q=p)))))
    for out in alpha.pick(Output):
        p, q = out.p, out.q
        ready = _dia(alpha.pick(Input, p=q, q=p)) + _dia(
            [a for a in alpha.pick(Stopped) if a.p == q and a.s == s]
        )
        if ready:
            antecedent = conj([Diamond(LabelPattern.exact(out), TRUE), disj(ready)])
            parts.append(implies(antecedent, disj(_dia(alpha.pick(Comm, p=p, q=q, label=out.label)))))
    return Gfp("X", conj(parts + [follow(alpha, x)]))


def liveness_obligations(alpha: Alphabet) -> list[tuple[str, Formula]]:
    """One closed formula per pending-action shape: if enabled, it is eventually served."""
    parts: list[tuple[str, Formula]] = []
    for p, q in alpha.pairs():
        ins = _noncrash_inputs(alpha, p=q, q=p)
        if ins:
            y = FVar("Y")
            goal = _dia(alpha.pick(Comm, p=p, q=q) + alpha.pick(CrashDetect, p=q, q=p))
            eventually = Lfp("Y", disj(goal + [_progress(alpha, y)]))
            parts.append((f"input {q}<-{p}", implies(disj(_dia(ins)), eventually)))
        by_label: dict[str, list[TransitionLabel]] = {}
        for out in alpha.pick(Output, p=p, q=q):
            by_label.setdefault(out.label, []).append(out)
        for label, outs in by_label.items():
            y = FVar("Y")
            goal = _dia(alpha.pick(Comm, p=p, q=q, label=label))
            eventually = Lfp("Y", disj(goal + [_progress(alpha, y)]))
            parts.append((f"output {p}->{q}:{label}", implies(disj(_dia(outs)), eventually)))
    return parts


def _live(alpha: Alphabet) -> Formula:
    parts = [f for _, f in liveness_obligations(alpha)]
    return Gfp("X", conj(parts + [follow(alpha, FVar("X"))]))


_ENCODERS: dict[str, Callable[[Alphabet], Formula]] = {
    "safe": _safe,
    "df": lambda a: Gfp("X", conj([_stuck_is_fine(a), follow(a, FVar("X"))])),
    "term": lambda a: Lfp("X", conj([_stuck_is_fine(a), follow(a, FVar("X"))])),
    "nterm": lambda a: Gfp(
        "X",
        conj([disj(_dia(a.pick(Comm) + a.pick(CrashDetect))), follow(a, FVar("X"))]),
    ),
    "live": _live,
}

PROPERTIES: tuple[str, ...] = ("safe", "df", "live", "term", "nterm")


def encode(prop: Property, alphabet: Alphabet) -> Formula:
    """The formula characterising ``prop``, expanded over ``alphabet``."""
    try:
        return _ENCODERS[prop](alphabet)
    except KeyError:
        raise ValueError(f"unknown property {prop!r}") from None


def holds(lts: Lts, prop: Property) -> bool:
    """Whether the initial state satisfies the encoding of ``prop``."""
    return lts.initial in evaluate(lts, encode(prop, Alphabet.of(lts)))
