"""Seeded generators for random session types and typing contexts."""

from __future__ import annotations

import random

from mpstcrash.context import Endpoint, TypingContext
from mpstcrash.statespace import LimitExceeded, Limits, Lts, build_lts, reduction_reachable
from mpstcrash.types import (
    CRASH,
    END,
    INT,
    REAL,
    UNIT,
    Branch,
    External,
    Internal,
    Rec,
    SessionType,
    Var,
    well_formed,
)

LABELS = ("a", "b", "c")
PAYLOADS = (UNIT, UNIT, UNIT, INT, REAL)


def _labels(rng: random.Random, lo: int = 1, hi: int = 3) -> list[str]:
    return rng.sample(LABELS, rng.randint(lo, hi))


def random_type(
    rng: random.Random,
    self_role: str,
    roles: tuple[str, ...],
    depth: int = 3,
    binders: int = 0,
    guarded: bool = True,
) -> SessionType:
    """A closed, guarded type; recursion variables only appear under a choice."""
    peers = [r for r in roles if r != self_role]
    roll = rng.random()
    if depth <= 0 or roll < 0.15:
        if binders and guarded and rng.random() < 0.6:
            return Var(rng.randrange(binders))
        return END
    if roll < 0.3 and binders < 2:
        return Rec(random_type(rng, self_role, roles, depth, binders + 1, False))
    peer = rng.choice(peers)
    if rng.random() < 0.5:
        return Internal(
            peer,
            tuple(
                Branch(l, rng.choice(PAYLOADS), random_type(rng, self_role, roles, depth - 1, binders))
                for l in _labels(rng)
            ),
        )
    branches = [
        Branch(l, rng.choice(PAYLOADS), random_type(rng, self_role, roles, depth - 1, binders))
        for l in _labels(rng)
    ]
    if rng.random() < 0.5:
        branches.append(Branch(CRASH, UNIT, random_type(rng, self_role, roles, depth - 1, binders)))
    return External(peer, tuple(branches))


def dual(t: SessionType, peer: str, crash_branches: bool, rng: random.Random) -> SessionType:
    """Mirror a two-party type, optionally adding crash handlers to inputs."""
    if isinstance(t, Internal):
        branches = [Branch(b.label, b.payload, dual(b.cont, peer, crash_branches, rng)) for b in t.branches]
        if crash_branches:
            branches.append(Branch(CRASH, UNIT, END))
        return External(peer, tuple(branches))
    if isinstance(t, External):
        kept = [b for b in t.branches if b.label != CRASH]
        return Internal(peer, tuple(Branch(b.label, b.payload, dual(b.cont, peer, crash_branches, rng)) for b in kept))
    if isinstance(t, Rec):
        return Rec(dual(t.body, peer, crash_branches, rng))
    return t


def _two_party(rng: random.Random, roles: tuple[str, ...]) -> dict[str, SessionType]:
    p, q = roles[0], roles[1]
    t = random_type(rng, p, (p, q), depth=rng.randint(1, 4))
    return {p: t, q: dual(t, p, rng.random() < 0.7, rng)}


def random_context(rng: random.Random) -> tuple[TypingContext, frozenset[str]]:
    """A well-formed context for session ``s`` with 2 to 4 roles and a random reliable set."""
    roles = tuple("pqrs"[: rng.randint(2, 4)])
    types: dict[str, SessionType] = {}
    if rng.random() < 0.5:
        types.update(_two_party(rng, roles))
    for r in roles:
        while r not in types:
            t = random_type(rng, r, roles, depth=rng.randint(1, 3))
            if well_formed(t) is None:
                types[r] = t
    reliable = frozenset(r for r in roles if rng.random() < 0.3)
    ctx = TypingContext.of({Endpoint("s", r): t for r, t in types.items()})
    return ctx, reliable


def random_small_lts(rng: random.Random, max_reachable: int = 200) -> tuple[TypingContext, Lts]:
    """Draw contexts until one has at most ``max_reachable`` reduction-reachable states."""
    while True:
        ctx, reliable = random_context(rng)
        try:
            lts = build_lts(ctx, "s", reliable, Limits(max_states=5 * max_reachable))
        except LimitExceeded:
            continue
        if len(reduction_reachable(lts)) <= max_reachable:
            return ctx, lts


def _shift_payload(p, up: bool, rng: random.Random):
    if up and p == INT and rng.random() < 0.5:
        return REAL
    if not up and p == REAL and rng.random() < 0.5:
        return INT
    return p


def _vary(t: SessionType, rng: random.Random, up: bool) -> SessionType:
    """A random supertype (``up``) or subtype of ``t``.

    Moving up drops output branches and adds input branches; moving down does
    the reverse.  Output payloads move against the direction, inputs with it.
    """
    if isinstance(t, Rec):
        return Rec(_vary(t.body, rng, up), t.name)
    if not isinstance(t, (Internal, External)):
        return t
    fewer = isinstance(t, Internal) == up
    branches = [
        Branch(b.label, _shift_payload(b.payload, up == isinstance(t, External), rng), _vary(b.cont, rng, up))
        for b in t.branches
    ]
    pure = isinstance(t, External) and [b.label for b in t.branches] == [CRASH]
    if fewer:
        keep = [b for b in branches if rng.random() < 0.6]
        if isinstance(t, External) and [b.label for b in keep] == [CRASH]:
            keep = []
        branches = keep or branches
    elif not pure:
        spare = [l for l in LABELS if t.branch(l) is None]
        if spare and rng.random() < 0.6:
            branches.append(Branch(rng.choice(spare), UNIT, END))
    return type(t)(t.role, tuple(branches))


def widen(t: SessionType, rng: random.Random) -> SessionType:
    return _vary(t, rng, True)


def narrow(t: SessionType, rng: random.Random) -> SessionType:
    return _vary(t, rng, False)
