"""Explicit finite transition systems generated from a typing context."""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Literal

from .context import (
    NONCRASH_KINDS,
    REDUCTION_KINDS,
    TransitionLabel,
    TypingContext,
    label_to_json,
    successors,
)

DEFAULT_MAX_STATES = 1_000_000

Edge = tuple[int, TransitionLabel, int]


class LimitExceeded(RuntimeError):
    """Exploration hit ``max_states`` or ``max_depth`` before closing."""

    def __init__(self, message: str, explored: int, frontier: int) -> None:
        super().__init__(f"{message} (explored {explored}, frontier {frontier})")
        self.explored = explored
        self.frontier = frontier


@dataclass(frozen=True, eq=False)
class Lts:
    session: str
    reliable: frozenset[str]
    states: tuple[TypingContext, ...]
    edges: tuple[Edge, ...]
    initial: int = 0

    def __post_init__(self) -> None:
        n = len(self.states)
        if not 0 <= self.initial < max(n, 1):
            raise ValueError("initial state out of range")
        for src, _, dst in self.edges:
            if not (0 <= src < n and 0 <= dst < n):
                raise ValueError("edge endpoint out of range")

    @cached_property
    def out(self) -> tuple[tuple[tuple[TransitionLabel, int], ...], ...]:
        adj: list[list[tuple[TransitionLabel, int]]] = [[] for _ in self.states]
        for src, label, dst in self.edges:
            adj[src].append((label, dst))
        return tuple(tuple(a) for a in adj)

    @cached_property
    def labels(self) -> tuple[TransitionLabel, ...]:
        """Distinct labels in first-occurrence order."""
        return tuple(dict.fromkeys(label for _, label, _ in self.edges))

    def roles(self) -> tuple[str, ...]:
        return self.states[self.initial].roles(self.session)

    def reduction_edges(self, state: int, noncrash: bool = False) -> list[tuple[TransitionLabel, int]]:
        kinds = NONCRASH_KINDS if noncrash else REDUCTION_KINDS
        return [(lab, dst) for lab, dst in self.out[state] if lab.kind in kinds]

    @cached_property
    def _reachable(self) -> tuple[frozenset[int], dict[int, tuple[int, TransitionLabel] | None]]:
        parent: dict[int, tuple[int, TransitionLabel] | None] = {self.initial: None}
        queue = deque([self.initial])
        while queue:
            v = queue.popleft()
            for label, w in self.reduction_edges(v):
                if w not in parent:
                    parent[w] = (v, label)
                    queue.append(w)
        return frozenset(parent), parent

    def path_to(self, state: int) -> list[tuple[int, TransitionLabel]]:
        """Shortest reduction path from the initial state, as (source, label) steps."""
        parent = self._reachable[1]
        steps: list[tuple[int, TransitionLabel]] = []
        while True:
            link = parent[state]
            if link is None:
                return steps[::-1]
            state, label = link
            steps.append((state, label))


@dataclass(frozen=True)
class Limits:
    max_states: int = DEFAULT_MAX_STATES
    max_depth: int | None = None

    def __post_init__(self) -> None:
        if self.max_states < 1 or (self.max_depth is not None and self.max_depth < 0):
            raise ValueError("limits must be positive")


def _label_key(label: TransitionLabel) -> tuple[str, str]:
    return (label.kind, str(label))


def build_lts(
    g0: TypingContext,
    s: str,
    reliable: Iterable[str] = (),
    limits: Limits = Limits(),
) -> Lts:
    """Breadth-first closure of all transitions of session ``s`` from ``g0``."""
    reliable = frozenset(reliable)
    unknown = reliable - set(g0.roles(s))
    if unknown:
        raise ValueError(f"reliable roles not in session {s}: {sorted(unknown)}")
    index: dict[TypingContext, int] = {g0: 0}
    states = [g0]
    depth = [0]
    edges: list[Edge] = []
    cursor = 0
    while cursor < len(states):
        v = cursor
        cursor += 1
        succ = sorted(successors(states[v], s, reliable), key=lambda tr: _label_key(tr[0]))
        for label, g in succ:
            w = index.get(g)
            if w is None:
                if limits.max_depth is not None and depth[v] + 1 > limits.max_depth:
                    raise LimitExceeded("depth limit reached", len(states), len(states) - cursor)
                if len(states) >= limits.max_states:
                    raise LimitExceeded("state limit reached", len(states), len(states) - cursor)
                w = len(states)
                index[g] = w
                states.append(g)
                depth.append(depth[v] + 1)
            edges.append((v, label, w))
    return Lts(s, reliable, tuple(states), tuple(edges))


def reduction_reachable(lts: Lts) -> frozenset[int]:
    """States reachable from the initial one through comm, detect and crash edges."""
    return lts._reachable[0]


def export(lts: Lts, fmt: Literal["dot", "json"]) -> str:
    if fmt == "dot":
        return _to_dot(lts)
    if fmt == "json":
        return _to_json(lts)
    raise ValueError(f"unknown export format {fmt!r}")


def _dot_quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _to_dot(lts: Lts) -> str:
    lines = ["digraph lts {", "  node [shape=circle];"]
    for i in range(len(lts.states)):
        shape = ", shape=doublecircle" if i == lts.initial else ""
        lines.append(f'  {i} [label="{i}"{shape}];')
    for src, label, dst in lts.edges:
        lines.append(f"  {src} -> {dst} [label={_dot_quote(str(label))}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def _to_json(lts: Lts) -> str:
    doc = {
        "session": lts.session,
        "reliable": sorted(lts.reliable),
        "states": [str(g) for g in lts.states],
        "initial": lts.initial,
        "edges": [
            {"src": src, "label": label_to_json(label), "dst": dst} for src, label, dst in lts.edges
        ],
    }
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"
