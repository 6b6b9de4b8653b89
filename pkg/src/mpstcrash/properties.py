"""Decision procedures for safety, deadlock freedom, termination and liveness.

Every checker reads an already built :class:`~mpstcrash.statespace.Lts` and
quantifies over the states reachable through communication, crash detection
and crash edges.  Liveness is decided by the mu-calculus encoding; a
path-based oracle is provided to cross-check it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import networkx as nx

from .context import (
    Comm,
    CrashDetect,
    Input,
    Output,
    Stopped,
    TransitionLabel,
)
from .mucalc import Alphabet, Evaluator, check_formula, encode, liveness_obligations
from .statespace import Lts, reduction_reachable
from .types import CRASH, END, Stop, is_pure_recovery, is_subtype

Step = tuple[int, TransitionLabel]


@dataclass(frozen=True)
class Verdict:
    """Outcome of a check.

    On failure ``witness`` lists the reduction steps ``(source, label)`` from
    the initial state; replaying them ends in ``state``, where ``reason``
    describes what goes wrong.  For a divergence the trace continues around
    the cycle and ends back in ``state``.
    """

    holds: bool
    witness: tuple[Step, ...] | None = None
    state: int | None = None
    reason: str = ""

    def __bool__(self) -> bool:
        return self.holds


@dataclass(frozen=True)
class Inconclusive:
    reason: str

    def __bool__(self) -> bool:
        raise TypeError("an inconclusive oracle result has no truth value")


def _fail(lts: Lts, state: int, reason: str) -> Verdict:
    return Verdict(False, tuple(lts.path_to(state)), state, reason)


def _ordered(lts: Lts) -> list[int]:
    return sorted(reduction_reachable(lts))


def replay(lts: Lts, verdict: Verdict) -> int:
    """Follow a witness on ``lts`` and return the state it ends in."""
    if verdict.witness is None:
        raise ValueError("verdict has no witness")
    state = lts.initial
    for src, label in verdict.witness:
        if src != state:
            raise ValueError(f"witness step leaves from {src}, expected {state}")
        targets = [dst for lab, dst in lts.out[src] if lab == label]
        if not targets:
            raise ValueError(f"no edge {label} from state {src}")
        state = targets[0]
    return state


# ---------------------------------------------------------------- safety


def safety_violation(lts: Lts, v: int) -> str | None:
    """Describe why state ``v`` is unsafe, or ``None``."""
    out = [lab for lab, _ in lts.out[v]]
    comms = {(a.p, a.q, a.label) for a in out if isinstance(a, Comm)}
    detects = {(a.p, a.q) for a in out if isinstance(a, CrashDetect)}
    waiting = {(a.p, a.q) for a in out if isinstance(a, Input)}  # (receiver, sender)
    for a in out:
        if isinstance(a, Output) and (a.q, a.p) in waiting and (a.p, a.q, a.label) not in comms:
            return f"{a.q} waits on {a.p} but cannot accept {a}"
        if isinstance(a, Stopped):
            for receiver, sender in sorted(waiting):
                if sender == a.p and (receiver, sender) not in detects:
                    return f"{receiver} waits on crashed {sender} without a crash branch"
    return None


def check_safety(lts: Lts) -> Verdict:
    for v in _ordered(lts):
        reason = safety_violation(lts, v)
        if reason is not None:
            return _fail(lts, v, reason)
    return Verdict(True, reason="every reachable state is safe")


# ---------------------------------------------------------------- deadlock freedom


def _noncrash_moves(lts: Lts, v: int) -> list[tuple[TransitionLabel, int]]:
    return lts.reduction_edges(v, noncrash=True)


def _stuck_entries(lts: Lts, v: int) -> list[str]:
    bad = []
    for ep, t in lts.states[v].entries:
        if ep.session != lts.session or isinstance(t, Stop):
            continue
        if is_subtype(t, END) or is_pure_recovery(t):
            continue
        bad.append(str(ep))
    return bad


def check_deadlock_free(lts: Lts) -> Verdict:
    for v in _ordered(lts):
        if _noncrash_moves(lts, v):
            continue
        bad = _stuck_entries(lts, v)
        if bad:
            return _fail(lts, v, f"stuck with pending {', '.join(bad)}")
    return Verdict(True, reason="every stuck reachable state is finished")


# ---------------------------------------------------------------- termination


def _reduction_graph(lts: Lts, noncrash: bool = False) -> nx.MultiDiGraph:
    g = nx.MultiDiGraph()
    reach = reduction_reachable(lts)
    g.add_nodes_from(reach)
    for v in reach:
        for label, w in lts.reduction_edges(v, noncrash):
            g.add_edge(v, w, label=label)
    return g


def check_terminating(lts: Lts) -> Verdict:
    df = check_deadlock_free(lts)
    if not df.holds:
        return df
    g = _reduction_graph(lts)
    try:
        cycle = nx.find_cycle(g, source=sorted(g.nodes))
    except nx.NetworkXNoCycle:
        return Verdict(True, reason="deadlock free and every reduction sequence is finite")
    start = cycle[0][0]
    loop = tuple((src, g.edges[src, dst, key]["label"]) for src, dst, key in cycle)
    return Verdict(False, tuple(lts.path_to(start)) + loop, start, "reductions can go on forever")


def check_never_terminating(lts: Lts) -> Verdict:
    for v in _ordered(lts):
        if not _noncrash_moves(lts, v):
            return _fail(lts, v, "no communication or crash detection is possible")
    return Verdict(True, reason="every reachable state can keep reducing")


# ---------------------------------------------------------------- liveness


def _obligations(lts: Lts, v: int) -> list[tuple[str, frozenset[tuple[str, str, str]]]]:
    """Pending actions at ``v`` with the pair moves that would discharge them."""
    found: dict[str, frozenset[tuple[str, str, str]]] = {}
    for a, _ in lts.out[v]:
        if isinstance(a, Output):
            found[f"output {a.p}->{a.q}"] = frozenset({("comm", a.p, a.q)})
        elif isinstance(a, Input) and a.label != CRASH:
            found[f"input {a.p}<-{a.q}"] = frozenset({("comm", a.q, a.p), ("detect", a.p, a.q)})
    return sorted(found.items())


def check_live(lts: Lts) -> Verdict:
    alpha = Alphabet.of(lts)
    f = encode("live", alpha)
    check_formula(f)
    ev = Evaluator(lts)
    if lts.initial in ev.eval(f):
        return Verdict(True, reason="the liveness formula accepts the initial state")
    obligations = liveness_obligations(alpha)
    for v in _ordered(lts):
        for name, ob in obligations:
            if v not in ev.eval(ob):
                return _fail(lts, v, f"pending {name} may never be served")
    raise AssertionError("liveness rejected without a failing obligation")


def _pair(label: TransitionLabel) -> tuple[str, str, str]:
    return ("comm", label.p, label.q) if isinstance(label, Comm) else ("detect", label.p, label.q)


def _fair_cycle_states(nodes: set[int], g: nx.MultiDiGraph, enabled: Callable[[int], frozenset]) -> set[int]:
    """States on some cycle inside ``nodes`` that fires every pair it ever enables."""
    good: set[int] = set()
    work = [set(nodes)]
    while work:
        part = work.pop()
        sub = g.subgraph(part)
        for comp in nx.strongly_connected_components(sub):
            inner = sub.subgraph(comp)
            if inner.number_of_edges() == 0:
                continue
            fired = {_pair(d["label"]) for _, _, d in inner.edges(data=True)}
            wanted = frozenset().union(*(enabled(v) for v in comp))
            missing = wanted - fired
            if not missing:
                good |= comp
                continue
            rest = {v for v in comp if not (enabled(v) & missing)}
            if rest:
                work.append(rest)
    return good


def fair_lasso_oracle(lts: Lts, bound: int = 200) -> Verdict | Inconclusive:
    """Liveness straight from the path definition, for cross-checking.

    A violation is a reachable state with a pending action and a fair
    non-crashing path from it that never serves the action.  Such a path
    cannot pass through a state enabling a serving move (fairness would force
    it), so it lives in the subgraph avoiding those states and either stops
    in a state with no moves or settles in a cycle that fires every pair it
    enables.  Both shapes are found exactly with strongly connected
    component decomposition, so compound cycles are covered too.
    """
    reach = reduction_reachable(lts)
    if len(reach) > bound:
        return Inconclusive(f"{len(reach)} reachable states exceed the bound {bound}")
    g = _reduction_graph(lts, noncrash=True)
    enabled_cache = {v: frozenset(_pair(a) for a, _ in _noncrash_moves(lts, v)) for v in reach}
    enabled = enabled_cache.__getitem__

    pending: dict[frozenset, list[tuple[int, str]]] = {}
    for v in sorted(reach):
        for name, serve in _obligations(lts, v):
            pending.setdefault(serve, []).append((v, name))

    for serve, sites in pending.items():
        avoid = {v for v in reach if not (enabled(v) & serve)}
        sinks = {v for v in avoid if not enabled(v)}
        targets = sinks | _fair_cycle_states(avoid, g, enabled)
        if not targets:
            continue
        sub = g.subgraph(avoid)
        escaping = set(targets)
        for t in targets:
            escaping |= nx.ancestors(sub, t)
        for v, name in sites:
            if v in escaping:
                return _fail(lts, v, f"a fair path never serves the pending {name}")
    return Verdict(True, reason="every fair path serves every pending action")


CHECKERS: dict[str, Callable[[Lts], Verdict]] = {
    "safe": check_safety,
    "df": check_deadlock_free,
    "live": check_live,
    "term": check_terminating,
    "nterm": check_never_terminating,
}
