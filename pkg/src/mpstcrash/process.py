"""Session pi-calculus terms: congruence, reduction with crashes, and typing."""

from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Iterator, Mapping, Union

from .context import Crash, CrashDetect, Endpoint, TransitionLabel, TypingContext, reduction_successors
from .types import (
    CRASH,
    END,
    UNIT,
    BasicType,
    External,
    Internal,
    Payload,
    SessionType,
    Stop,
    basic_subtype,
    is_end_like,
    is_pure_recovery,
    is_subtype,
    unfold,
)


@dataclass(frozen=True)
class Value:
    """A literal of a basic type; unit is ``Value(UNIT, None)``."""

    kind: BasicType
    value: object = None

    def __str__(self) -> str:
        from .syntax import format_value

        return format_value(self)


@dataclass(frozen=True)
class Name:
    """A bound variable standing for a value or a channel."""

    name: str

    def __str__(self) -> str:
        return self.name


Subject = Union[Endpoint, Name]
Datum = Union[Value, Endpoint, Name]


class Process:
    __slots__ = ()

    def __str__(self) -> str:
        from .syntax import format_process

        return format_process(self)


@dataclass(frozen=True, repr=False)
class Nil(Process):
    def __repr__(self) -> str:
        return "Nil()"


@dataclass(frozen=True, repr=False)
class Err(Process):
    def __repr__(self) -> str:
        return "Err()"


NIL = Nil()
ERR = Err()


@dataclass(frozen=True)
class Crashed(Process):
    endpoint: Endpoint


@dataclass(frozen=True)
class Res(Process):
    """Restriction of ``session`` annotated with its typing context and reliable roles."""

    session: str
    annotation: tuple[tuple[str, SessionType], ...]
    body: Process
    reliable: frozenset[str] = frozenset()


@dataclass(frozen=True)
class Par(Process):
    left: Process
    right: Process


@dataclass(frozen=True)
class Sel(Process):
    chan: Subject
    to: str
    label: str
    payload: Datum
    cont: Process

    def __post_init__(self) -> None:
        if self.label == CRASH:
            raise ValueError("crash cannot be sent")


@dataclass(frozen=True)
class Bra(Process):
    chan: Subject
    frm: str
    branches: tuple[tuple[str, Union[str, None], Process], ...]

    def __post_init__(self) -> None:
        labels = [b[0] for b in self.branches]
        if not labels:
            raise ValueError("branching needs at least one branch")
        if len(set(labels)) != len(labels):
            raise ValueError("duplicate branch label")

    def branch(self, label: str) -> tuple[str, Union[str, None], Process] | None:
        for b in self.branches:
            if b[0] == label:
                return b
        return None


@dataclass(frozen=True)
class Def(Process):
    name: str
    params: tuple[tuple[str, Payload], ...]
    body: Process
    cont: Process


@dataclass(frozen=True)
class Call(Process):
    name: str
    args: tuple[Datum, ...]


Theta = Mapping[str, tuple[Payload, ...]]


def par(*procs: Process) -> Process:
    """Right-nested parallel composition; the empty composition is ``0``."""
    if not procs:
        return NIL
    out = procs[-1]
    for p in reversed(procs[:-1]):
        out = Par(p, out)
    return out


# ---------------------------------------------------------------- free names


def free_endpoints(p: Process) -> frozenset[Endpoint]:
    """Channels with roles occurring free, crashed endpoints included."""
    if isinstance(p, Crashed):
        return frozenset({p.endpoint})
    if isinstance(p, Par):
        return free_endpoints(p.left) | free_endpoints(p.right)
    if isinstance(p, Res):
        return frozenset(e for e in free_endpoints(p.body) if e.session != p.session)
    if isinstance(p, Sel):
        own = {d for d in (p.chan, p.payload) if isinstance(d, Endpoint)}
        return frozenset(own) | free_endpoints(p.cont)
    if isinstance(p, Bra):
        own = {p.chan} if isinstance(p.chan, Endpoint) else set()
        return frozenset(own).union(*(free_endpoints(b[2]) for b in p.branches))
    if isinstance(p, Def):
        return free_endpoints(p.body) | free_endpoints(p.cont)
    if isinstance(p, Call):
        return frozenset(a for a in p.args if isinstance(a, Endpoint))
    return frozenset()


def free_vars(p: Process) -> frozenset[str]:
    if isinstance(p, Par):
        return free_vars(p.left) | free_vars(p.right)
    if isinstance(p, Res):
        return free_vars(p.body)
    if isinstance(p, Sel):
        own = {d.name for d in (p.chan, p.payload) if isinstance(d, Name)}
        return frozenset(own) | free_vars(p.cont)
    if isinstance(p, Bra):
        out = {p.chan.name} if isinstance(p.chan, Name) else set()
        for _, var, body in p.branches:
            out |= free_vars(body) - {var}
        return frozenset(out)
    if isinstance(p, Def):
        return (free_vars(p.body) - {x for x, _ in p.params}) | free_vars(p.cont)
    if isinstance(p, Call):
        return frozenset(a.name for a in p.args if isinstance(a, Name))
    return frozenset()


def _free_keys(p: Process) -> frozenset[Union[Endpoint, str]]:
    return free_endpoints(p) | free_vars(p)


def free_calls(p: Process) -> frozenset[str]:
    """Process variables called without an enclosing definition."""
    if isinstance(p, Par):
        return free_calls(p.left) | free_calls(p.right)
    if isinstance(p, Res):
        return free_calls(p.body)
    if isinstance(p, Sel):
        return free_calls(p.cont)
    if isinstance(p, Bra):
        return frozenset().union(*(free_calls(b[2]) for b in p.branches))
    if isinstance(p, Def):
        return (free_calls(p.body) | free_calls(p.cont)) - {p.name}
    if isinstance(p, Call):
        return frozenset({p.name})
    return frozenset()


def _all_names(p: Process, out: set[str]) -> None:
    """Every session and process variable name, bound or free."""
    stack = [p]
    while stack:
        q = stack.pop()
        for e in free_endpoints(q) if isinstance(q, (Sel, Bra, Call, Crashed)) else ():
            out.add(e.session)
        if isinstance(q, Par):
            stack += [q.left, q.right]
        elif isinstance(q, Res):
            out.add(q.session)
            stack.append(q.body)
        elif isinstance(q, Sel):
            stack.append(q.cont)
        elif isinstance(q, Bra):
            stack += [b[2] for b in q.branches]
        elif isinstance(q, Def):
            out.add(q.name)
            stack += [q.body, q.cont]
        elif isinstance(q, Call):
            out.add(q.name)


def has_error(p: Process) -> bool:
    """True when ``err`` sits in a reduction context (not under a prefix)."""
    if isinstance(p, Err):
        return True
    if isinstance(p, Par):
        return has_error(p.left) or has_error(p.right)
    if isinstance(p, Res):
        return has_error(p.body)
    if isinstance(p, Def):
        return has_error(p.cont)
    return False


# ---------------------------------------------------------------- renaming and substitution


def _fresh(name: str, used: set[str]) -> str:
    if name not in used:
        used.add(name)
        return name
    base = re.sub(r"\d+$", "", name) or name
    k = 1
    while f"{base}{k}" in used:
        k += 1
    used.add(f"{base}{k}")
    return f"{base}{k}"


def _ren_ep(e: Endpoint, smap: Mapping[str, str]) -> Endpoint:
    s = smap.get(e.session)
    return e if s is None else Endpoint(s, e.role)


def _ren_datum(d: Datum, smap: Mapping[str, str]) -> Datum:
    return _ren_ep(d, smap) if isinstance(d, Endpoint) else d


def _freshen(p: Process, used: set[str], smap: dict[str, str], xmap: dict[str, str]) -> Process:
    """Rename every bound session and definition apart from ``used``."""
    if isinstance(p, Crashed):
        return Crashed(_ren_ep(p.endpoint, smap))
    if isinstance(p, Par):
        return Par(_freshen(p.left, used, smap, xmap), _freshen(p.right, used, smap, xmap))
    if isinstance(p, Res):
        s = _fresh(p.session, used)
        return Res(s, p.annotation, _freshen(p.body, used, {**smap, p.session: s}, xmap), p.reliable)
    if isinstance(p, Sel):
        return Sel(
            _ren_datum(p.chan, smap), p.to, p.label, _ren_datum(p.payload, smap),
            _freshen(p.cont, used, smap, xmap),
        )
    if isinstance(p, Bra):
        return Bra(
            _ren_datum(p.chan, smap),
            p.frm,
            tuple((lab, var, _freshen(body, used, smap, xmap)) for lab, var, body in p.branches),
        )
    if isinstance(p, Def):
        x = _fresh(p.name, used)
        inner = {**xmap, p.name: x}
        return Def(x, p.params, _freshen(p.body, used, smap, inner), _freshen(p.cont, used, smap, inner))
    if isinstance(p, Call):
        return Call(xmap.get(p.name, p.name), tuple(_ren_datum(a, smap) for a in p.args))
    return p


def substitute(p: Process, m: Mapping[str, Datum]) -> Process:
    """Replace free variables; callers keep binders apart from the substituted channels."""
    if not m:
        return p

    def sub(d: Datum) -> Datum:
        return m.get(d.name, d) if isinstance(d, Name) else d

    if isinstance(p, Par):
        return Par(substitute(p.left, m), substitute(p.right, m))
    if isinstance(p, Res):
        return Res(p.session, p.annotation, substitute(p.body, m), p.reliable)
    if isinstance(p, Sel):
        return Sel(sub(p.chan), p.to, p.label, sub(p.payload), substitute(p.cont, m))
    if isinstance(p, Bra):
        out = []
        for lab, var, body in p.branches:
            inner = {k: v for k, v in m.items() if k != var}
            out.append((lab, var, substitute(body, inner)))
        return Bra(sub(p.chan), p.frm, tuple(out))
    if isinstance(p, Def):
        inner = {k: v for k, v in m.items() if k not in {x for x, _ in p.params}}
        return Def(p.name, p.params, substitute(p.body, inner), substitute(p.cont, m))
    if isinstance(p, Call):
        return Call(p.name, tuple(sub(a) for a in p.args))
    return p


# ---------------------------------------------------------------- structural congruence

DefEntry = tuple[str, tuple[tuple[str, Payload], ...], Process]
ResEntry = tuple[str, tuple[tuple[str, SessionType], ...], frozenset[str]]


@dataclass(frozen=True)
class _Config:
    """A process in prenex form: definitions, restrictions, then prefixed components."""

    defs: tuple[DefEntry, ...]
    res: tuple[ResEntry, ...]
    comps: tuple[Process, ...]

    def names(self) -> set[str]:
        out: set[str] = set()
        for name, _, body in self.defs:
            out.add(name)
            _all_names(body, out)
        out.update(s for s, _, _ in self.res)
        for c in self.comps:
            _all_names(c, out)
        return out


def _flatten(p: Process, defs: list, res: list, comps: list) -> None:
    while True:
        if isinstance(p, Nil):
            return
        if isinstance(p, Par):
            _flatten(p.left, defs, res, comps)
            p = p.right
        elif isinstance(p, Res):
            res.append((p.session, p.annotation, p.reliable))
            p = p.body
        elif isinstance(p, Def):
            defs.append((p.name, p.params, p.body))
            p = p.cont
        else:
            comps.append(p)
            return


def _config(p: Process) -> _Config:
    used: set[str] = {e.session for e in free_endpoints(p)} | set(free_calls(p))
    p = _freshen(p, used, {}, {})
    defs: list = []
    res: list = []
    comps: list = []
    _flatten(p, defs, res, comps)
    return _Config(tuple(defs), tuple(res), tuple(comps))


def _collect(cfg: _Config) -> _Config:
    """Drop dead restrictions, fully crashed sessions and unused definitions."""
    comps = list(cfg.comps)
    def_sessions: set[str] = set()
    for _, _, body in cfg.defs:
        def_sessions |= {e.session for e in free_endpoints(body)}
    res = []
    for entry in cfg.res:
        s = entry[0]
        users = [c for c in comps if any(e.session == s for e in free_endpoints(c))]
        if s not in def_sessions and all(isinstance(c, Crashed) for c in users):
            comps = [c for c in comps if not (isinstance(c, Crashed) and c.endpoint.session == s)]
            continue
        res.append(entry)
    by_name = {d[0]: d for d in cfg.defs}
    live: set[str] = set()
    work = [x for c in comps for x in free_calls(c)]
    while work:
        x = work.pop()
        if x in live or x not in by_name:
            continue
        live.add(x)
        work.extend(free_calls(by_name[x][2]))
    defs = tuple(d for d in cfg.defs if d[0] in live)
    return _Config(defs, tuple(res), tuple(comps))


def _build(cfg: _Config) -> Process:
    out = par(*sorted(cfg.comps, key=str))
    for s, ann, rel in sorted(cfg.res, key=lambda r: r[0], reverse=True):
        out = Res(s, ann, out, rel)
    for name, params, body in reversed(cfg.defs):
        out = Def(name, params, body, out)
    return out


def congruence_normal(p: Process) -> Process:
    """Canonical representative: definitions outermost, then restrictions, then a sorted parallel."""
    return _build(_collect(_config(p)))


# ---------------------------------------------------------------- reduction

Reduction = tuple[str, Process]


def _chan(p: Process) -> Endpoint | None:
    c = p.chan if isinstance(p, (Sel, Bra)) else None
    return c if isinstance(c, Endpoint) else None


def _raw_steps(cfg: _Config, crash_injection: bool) -> Iterator[tuple[str, _Config, frozenset[Endpoint]]]:
    """Every one-step reduct of ``cfg`` together with the endpoints the step crashes."""
    comps = cfg.comps
    crashed = {c.endpoint for c in comps if isinstance(c, Crashed)}
    sels: dict[tuple[str, str, str], list[int]] = {}
    for j, c in enumerate(comps):
        e = _chan(c)
        if isinstance(c, Sel) and e is not None:
            sels.setdefault((e.session, e.role, c.to), []).append(j)
    defs = {d[0]: d for d in cfg.defs}

    def replace(i: int, new: Iterable[Process], drop: int | None = None) -> _Config:
        d: list = list(cfg.defs)
        r: list = list(cfg.res)
        kept: list = [c for k, c in enumerate(comps) if k not in (i, drop)]
        for q in new:
            _flatten(q, d, r, kept)
        return _Config(tuple(d), tuple(r), tuple(kept))

    for i, c in enumerate(comps):
        e = _chan(c)
        if isinstance(c, Bra) and e is not None:
            for j in sels.get((e.session, c.frm, e.role), ()):
                sel = comps[j]
                chosen = c.branch(sel.label)
                if chosen is None:
                    yield "R-err", replace(i, [ERR], j), frozenset()
                    continue
                _, var, body = chosen
                cont = substitute(body, {var: sel.payload}) if var is not None else body
                yield "R-comm", replace(i, [cont, sel.cont], j), frozenset()
            handler = c.branch(CRASH)
            if handler is not None and Endpoint(e.session, c.frm) in crashed:
                yield "R-detect", replace(i, [handler[2]]), frozenset()
        elif isinstance(c, Sel) and e is not None and Endpoint(e.session, c.to) in crashed:
            if isinstance(c.payload, Endpoint):
                lost = Crashed(c.payload)
                yield "R-lost-chan", replace(i, [lost, c.cont]), frozenset({c.payload})
            else:
                yield "R-lost", replace(i, [c.cont]), frozenset()
        elif isinstance(c, Call) and c.name in defs:
            _, params, body = defs[c.name]
            if len(params) == len(c.args):
                body = _freshen(body, cfg.names(), {}, {})
                inst = substitute(body, {x: a for (x, _), a in zip(params, c.args)})
                yield "R-call", replace(i, [inst]), frozenset()
        if crash_injection and e is not None:
            gone = free_endpoints(c)
            rule = "R-crash-sel" if isinstance(c, Sel) else "R-crash-bra"
            yield rule, replace(i, [Crashed(x) for x in sorted(gone)]), gone


def step(p: Process, crash_injection: bool = True) -> frozenset[Reduction]:
    """All one-step reductions of a closed process, each reduct in normal form.

    Lost messages and crash detection need an already crashed endpoint and
    are always available; ``crash_injection`` only gates the rules that make
    a selecting or branching process crash.
    """
    cfg = _collect(_config(p))
    return frozenset((rule, _build(_collect(nxt))) for rule, nxt, _ in _raw_steps(cfg, crash_injection))


def filtered_step(
    p: Process,
    reliable: Mapping[str, Iterable[str]] | None = None,
) -> frozenset[Reduction]:
    """Reductions that never crash an endpoint of a role assumed reliable.

    Restricted sessions use the reliable roles declared on their restriction;
    ``reliable`` supplies them for free sessions.
    """
    cfg = _collect(_config(p))
    assumed = {s: frozenset(r) for s, r in (reliable or {}).items()}
    assumed.update({s: rel for s, _, rel in cfg.res})
    out = set()
    for rule, nxt, gone in _raw_steps(cfg, True):
        if any(e.role in assumed.get(e.session, ()) for e in gone):
            continue
        out.add((rule, _build(_collect(nxt))))
    return frozenset(out)


# ---------------------------------------------------------------- typing


class TypingError(Exception):
    """No derivation exists; ``rule`` names the rule that failed at ``path``."""

    def __init__(self, rule: str, path: tuple[str, ...], message: str) -> None:
        where = "/".join(path) or "."
        super().__init__(f"{rule} at {where}: {message}")
        self.rule = rule
        self.path = path
        self.message = message


Key = Union[Endpoint, str]
Env = dict[Key, Payload]


@lru_cache(maxsize=4096)
def _annotation_states(
    s: str, annotation: tuple[tuple[str, SessionType], ...], reliable: frozenset[str]
) -> tuple[bool, tuple[TypingContext, ...]]:
    """Whether the annotation is safe, and the contexts it reaches by reductions."""
    from .properties import check_safety
    from .statespace import build_lts, reduction_reachable

    g = TypingContext.of({Endpoint(s, r): t for r, t in annotation})
    lts = build_lts(g, s, reliable & {r for r, _ in annotation})
    reach = sorted(reduction_reachable(lts))
    return check_safety(lts).holds, tuple(lts.states[v] for v in reach)


@dataclass
class _Typer:
    theta: dict[str, tuple[Payload, ...]]
    retype: bool = False
    overrides: Mapping[str, TypingContext] = field(default_factory=dict)

    def judge(self, theta: dict, env: Env, p: Process, path: tuple[str, ...]) -> None:
        if isinstance(p, Nil):
            self._ends(env, "T-0", path)
        elif isinstance(p, Err):
            raise TypingError("T-err", path, "error is not typable")
        elif isinstance(p, Crashed):
            t = env.get(p.endpoint)
            if not isinstance(t, Stop):
                raise TypingError("T-stop", path, f"{p.endpoint} is not typed stop")
            self._ends({k: v for k, v in env.items() if k != p.endpoint}, "T-stop", path)
        elif isinstance(p, Par):
            left, right = self._split(env, p, path)
            self.judge(theta, left, p.left, path + ("par.left",))
            self.judge(theta, right, p.right, path + ("par.right",))
        elif isinstance(p, Res):
            self._res(theta, env, p, path)
        elif isinstance(p, Sel):
            self._sel(theta, env, p, path)
        elif isinstance(p, Bra):
            self._bra(theta, env, p, path)
        elif isinstance(p, Def):
            inner = {**theta, p.name: tuple(t for _, t in p.params)}
            self.judge(inner, dict(p.params), p.body, path + (f"def {p.name}",))
            self.judge(inner, env, p.cont, path + ("in",))
        elif isinstance(p, Call):
            self._call(theta, env, p, path)
        else:
            raise TypingError("T-?", path, f"not a process: {p!r}")

    @staticmethod
    def _ends(env: Env, rule: str, path: tuple[str, ...]) -> None:
        left = sorted(str(k) for k, t in env.items() if not is_end_like(t))
        if left:
            raise TypingError(rule, path, f"unfinished entries {', '.join(left)}")

    @staticmethod
    def _split(env: Env, p: Par, path: tuple[str, ...]) -> tuple[Env, Env]:
        lk, rk = _free_keys(p.left), _free_keys(p.right)
        left: Env = {}
        right: Env = {}
        for k, t in env.items():
            in_l, in_r = k in lk, k in rk
            if in_l and in_r:
                if not isinstance(t, BasicType):
                    raise TypingError("T-par", path, f"{k} used on both sides")
                left[k] = right[k] = t
            elif in_r:
                right[k] = t
            else:
                left[k] = t
        return left, right

    @staticmethod
    def _lookup(env: Env, c: Subject, rule: str, path: tuple[str, ...]) -> SessionType:
        key = c if isinstance(c, Endpoint) else c.name
        t = env.get(key)
        if t is None:
            raise TypingError(rule, path, f"{c} is not in the context")
        if isinstance(t, (BasicType, Stop)):
            raise TypingError(rule, path, f"{c} has type {t}, not a session type")
        return t

    @staticmethod
    def _datum(env: Env, d: Datum, want: Payload, rule: str, path: tuple[str, ...]) -> Env:
        if isinstance(d, Value):
            if not (isinstance(want, BasicType) and basic_subtype(d.kind, want)):
                raise TypingError(rule, path, f"value {d} is not of type {want}")
            return env
        key = d if isinstance(d, Endpoint) else d.name
        t = env.get(key)
        if t is None:
            raise TypingError(rule, path, f"{d} is not in the context")
        if isinstance(t, Stop) or not is_subtype(t, want):
            raise TypingError("T-sub", path, f"{d} has type {t}, expected {want}")
        if isinstance(t, BasicType):
            return env
        return {k: v for k, v in env.items() if k != key}

    def _sel(self, theta: dict, env: Env, p: Sel, path: tuple[str, ...]) -> None:
        here = path + (f"{p.chan}[{p.to}]!{p.label}",)
        t = unfold(self._lookup(env, p.chan, "T-sel", here))
        b = t.branch(p.label) if isinstance(t, Internal) and t.role == p.to else None
        if b is None:
            raise TypingError("T-sel", here, f"{p.chan} cannot send {p.label} to {p.to}")
        if not isinstance(b.payload, BasicType) and is_subtype(b.payload, END):
            raise TypingError("T-sel", here, "sent payload type is below end")
        key = p.chan if isinstance(p.chan, Endpoint) else p.chan.name
        rest = {k: v for k, v in env.items() if k != key}
        rest = self._datum(rest, p.payload, b.payload, "T-sel", here)
        rest[key] = b.cont
        self.judge(theta, rest, p.cont, here)

    def _bra(self, theta: dict, env: Env, p: Bra, path: tuple[str, ...]) -> None:
        here = path + (f"{p.chan}[{p.frm}]?",)
        t = unfold(self._lookup(env, p.chan, "T-bra", here))
        if not (isinstance(t, External) and t.role == p.frm):
            raise TypingError("T-bra", here, f"{p.chan} cannot receive from {p.frm}")
        labels = {b[0] for b in p.branches}
        missing = sorted(set(t.labels()) - labels)
        if missing:
            raise TypingError("T-bra", here, f"no branch for {', '.join(missing)}")
        if is_pure_recovery(t) and labels != {CRASH}:
            raise TypingError("T-sub", here, "a pure recovery type only admits a crash branch")
        key = p.chan if isinstance(p.chan, Endpoint) else p.chan.name
        rest = {k: v for k, v in env.items() if k != key}
        for label, var, body in p.branches:
            b = t.branch(label)
            payload, cont = (b.payload, b.cont) if b is not None else (UNIT, END)
            inner = dict(rest)
            if var is not None:
                inner[var] = payload
            elif not is_end_like(payload):
                raise TypingError("T-bra", here, f"payload of {label} is dropped")
            inner[key] = cont
            self.judge(theta, inner, body, here + (label,))

    def _call(self, theta: dict, env: Env, p: Call, path: tuple[str, ...]) -> None:
        here = path + (f"call {p.name}",)
        sig = theta.get(p.name)
        if sig is None:
            raise TypingError("T-call", here, f"unknown process variable {p.name}")
        if len(sig) != len(p.args):
            raise TypingError("T-call", here, f"{p.name} expects {len(sig)} arguments")
        rest = dict(env)
        for want, arg in zip(sig, p.args):
            if not isinstance(want, BasicType) and is_subtype(want, END):
                raise TypingError("T-call", here, "argument type is below end")
            rest = self._datum(rest, arg, want, "T-call", here)
        self._ends(rest, "T-call", here)

    def _res(self, theta: dict, env: Env, p: Res, path: tuple[str, ...]) -> None:
        here = path + (f"new {p.session}",)
        if any(isinstance(k, Endpoint) and k.session == p.session for k in env):
            raise TypingError("T-res", here, f"session {p.session} is already in the context")
        safe, reachable = _annotation_states(p.session, p.annotation, p.reliable)
        if not safe:
            raise TypingError("T-res", here, "annotation is not safe")
        if p.session in self.overrides:
            candidates: tuple[TypingContext, ...] = (self.overrides[p.session],)
        elif self.retype:
            candidates = reachable
        else:
            candidates = reachable[:1]
        first: TypingError | None = None
        for g in candidates:
            inner = dict(env)
            inner.update(g.entries)
            try:
                self.judge(theta, inner, p.body, here)
                return
            except TypingError as err:
                first = first or err
        assert first is not None
        raise first


def _env(g: TypingContext) -> Env:
    env: Env = dict(g.entries)
    env.update(g.variables)
    return env


def typecheck(
    theta: Theta,
    g: TypingContext,
    p: Process,
    *,
    retype: bool = False,
    overrides: Mapping[str, TypingContext] | None = None,
) -> None:
    """Raise :class:`TypingError` unless ``theta . g |- p`` is derivable.

    With ``retype`` a restriction may be typed by any context its annotation
    reaches through reductions, which is how reducts are re-typed.
    ``overrides`` pins the context used for named restrictions.
    """
    typer = _Typer(dict(theta), retype, dict(overrides or {}))
    typer.judge(dict(theta), _env(g), p, ())


def well_typed(theta: Theta, g: TypingContext, p: Process, **kw) -> bool:
    try:
        typecheck(theta, g, p, **kw)
    except TypingError:
        return False
    return True


# ---------------------------------------------------------------- guarded definitions


def unguarded_calls(p: Process) -> list[str]:
    """Definitions passing a session parameter to a call before using it."""
    bad: list[str] = []

    def visit(q: Process) -> None:
        if isinstance(q, Def):
            for x, t in q.params:
                if not isinstance(t, BasicType) and _early_use(q.body, x):
                    bad.append(f"{q.name}({x})")
            visit(q.body)
            visit(q.cont)
        elif isinstance(q, Par):
            visit(q.left)
            visit(q.right)
        elif isinstance(q, Res):
            visit(q.body)
        elif isinstance(q, Sel):
            visit(q.cont)
        elif isinstance(q, Bra):
            for b in q.branches:
                visit(b[2])

    visit(p)
    return bad


def _early_use(p: Process, x: str) -> bool:
    """A call mentions ``x`` without first passing under an action on ``x``."""
    if isinstance(p, Call):
        return any(isinstance(a, Name) and a.name == x for a in p.args)
    if isinstance(p, Par):
        return _early_use(p.left, x) or _early_use(p.right, x)
    if isinstance(p, Res):
        return _early_use(p.body, x)
    if isinstance(p, Def):
        shadow = x in {y for y, _ in p.params}
        return (not shadow and _early_use(p.body, x)) or _early_use(p.cont, x)
    if isinstance(p, (Sel, Bra)):
        if isinstance(p.chan, Name) and p.chan.name == x:
            return False
        if isinstance(p, Sel):
            return _early_use(p.cont, x)
        return any(var != x and _early_use(body, x) for _, var, body in p.branches)
    return False


# ---------------------------------------------------------------- bounded metatheory


def explore(
    p: Process, depth: int, reliable: Mapping[str, Iterable[str]] | None = None
) -> Iterator[tuple[int, Process]]:
    """Breadth-first reducts of ``p`` under the reliability-abiding relation."""
    start = congruence_normal(p)
    seen = {start}
    frontier = [start]
    yield 0, start
    for d in range(1, depth + 1):
        nxt = []
        for q in frontier:
            for _, r in sorted(filtered_step(q, reliable), key=lambda rr: (rr[0], str(rr[1]))):
                if r not in seen:
                    seen.add(r)
                    nxt.append(r)
                    yield d, r
        frontier = nxt


@dataclass(frozen=True)
class MetaReport:
    explored: int
    errors: tuple[Process, ...]
    untyped: tuple[tuple[Process, str], ...]

    @property
    def ok(self) -> bool:
        return not self.errors and not self.untyped


def check_reducts(theta: Theta, p: Process, depth: int = 6) -> MetaReport:
    """Type safety and subject reduction for a closed, well-typed system."""
    typecheck(theta, TypingContext(), p)
    errors = []
    untyped = []
    n = 0
    for _, q in explore(p, depth):
        n += 1
        if has_error(q):
            errors.append(q)
        try:
            typecheck(theta, TypingContext(), q, retype=True)
        except TypingError as err:
            untyped.append((q, str(err)))
    return MetaReport(n, tuple(errors), tuple(untyped))


@dataclass(frozen=True)
class FidelityReport:
    """Outcome of the bounded session fidelity search.

    ``stuck`` lists context states that can reduce while no process
    reduction is re-typed by any of the reduced contexts.  ``unmatched``
    lists context reductions with no re-typed process counterpart; only
    crash and crash detection steps count as failures there, because a
    process resolves each internal choice one way.
    """

    pairs: int
    stuck: tuple[str, ...]
    unmatched: tuple[tuple[str, TransitionLabel], ...]
    unmatched_choices: int

    @property
    def ok(self) -> bool:
        return not self.stuck and not self.unmatched


def _open_session(p: Process) -> tuple[str, TypingContext, frozenset[str], Process]:
    cfg = _collect(_config(p))
    if len(cfg.res) != 1:
        raise ValueError("expected exactly one restricted session")
    s, ann, rel = cfg.res[0]
    body = _build(_Config(cfg.defs, (), cfg.comps))
    g = TypingContext.of({Endpoint(s, r): t for r, t in ann})
    return s, g, rel, body


def session_fidelity(theta: Theta, p: Process, depth: int = 6, bound: int = 3) -> FidelityReport:
    """Check that each reachable context reduction is mirrored by the process.

    ``p`` is a closed single-session system ``new s:{...} in P1 | ... | Pn``.
    Each pair of a context and a process typed by it is expanded by every
    context reduction; a reduction is matched when at most ``bound`` process
    steps, exactly one of them not a call unfolding, reach a process typed by
    the reduced context.
    """
    s, g0, rel, body = _open_session(p)
    free = {s: rel}
    typecheck(theta, g0, body)
    seen = {(g0, body)}
    frontier = [(g0, body)]
    stuck: list[str] = []
    unmatched: list[tuple[str, TransitionLabel]] = []
    choices = 0
    for _ in range(depth):
        nxt = []
        for g, q in frontier:
            moves = sorted(reduction_successors(g, s, rel, "maybecrash"), key=lambda m: str(m[0]))
            if not moves:
                continue
            candidates = _bounded_reducts(q, free, bound)
            hit = False
            for label, g2 in moves:
                match = next((r for r in candidates if well_typed(theta, g2, r)), None)
                if match is None:
                    if isinstance(label, (Crash, CrashDetect)):
                        unmatched.append((str(g), label))
                    else:
                        choices += 1
                    continue
                hit = True
                if (g2, match) not in seen:
                    seen.add((g2, match))
                    nxt.append((g2, match))
            if not hit:
                stuck.append(str(g))
        frontier = nxt
    return FidelityReport(len(seen), tuple(stuck), tuple(unmatched), choices)


def _bounded_reducts(p: Process, reliable: Mapping[str, Iterable[str]], bound: int) -> list[Process]:
    """Reducts within ``bound`` steps that perform exactly one non-call step."""
    out: list[Process] = []
    seen = {(p, 0)}
    queue = deque([(p, 0, 0)])
    while queue:
        q, n, done = queue.popleft()
        if n == bound:
            continue
        for rule, r in sorted(filtered_step(q, reliable), key=lambda rr: (rr[0], str(rr[1]))):
            k = done + (rule != "R-call")
            if k > 1 or (r, k) in seen:
                continue
            seen.add((r, k))
            if k == 1:
                out.append(r)
            queue.append((r, n + 1, k))
    return out
