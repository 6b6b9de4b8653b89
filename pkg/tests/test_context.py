import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import document
from gen import narrow, random_context
from mpstcrash.context import (
    Comm,
    Crash,
    CrashDetect,
    Endpoint,
    IllFormedContext,
    Input,
    Output,
    Stopped,
    TypingContext,
    label_to_json,
    reduction_successors,
    successors,
)
from mpstcrash.properties import check_safety
from mpstcrash.statespace import LimitExceeded, Limits, build_lts
from mpstcrash.syntax import parse_type
from mpstcrash.types import END, INT, STOP, Rec, Var, is_subtype

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def ep(role: str, s: str = "s") -> Endpoint:
    return Endpoint(s, role)


def ctx(**types) -> TypingContext:
    return TypingContext.of({ep(r): (t if not isinstance(t, str) else parse_type(t)) for r, t in types.items()})


def labels(trs):
    return {label for label, _ in trs}


def changed(a: TypingContext, b: TypingContext) -> set[Endpoint]:
    return {e for e in a if a[e] != b.get(e)}


# ------------------------------------------------------------ basics


def test_context_equality_ignores_order():
    a = TypingContext.of([(ep("p"), END), (ep("q"), STOP)])
    b = TypingContext.of([(ep("q"), STOP), (ep("p"), END)])
    assert a == b and hash(a) == hash(b)


def test_duplicate_endpoint_rejected():
    with pytest.raises(ValueError):
        TypingContext.of([(ep("p"), END), (ep("p"), STOP)])


def test_endpoint_needs_names():
    with pytest.raises(ValueError):
        Endpoint("", "p")


def test_ill_formed_context_is_rejected():
    with pytest.raises(IllFormedContext):
        successors(TypingContext.of({ep("p"): Rec(Var(0))}), "s")


def test_update_and_without():
    g = ctx(p="q!{a.end}", q="p?{a.end}")
    assert g.update({ep("p"): END})[ep("p")] == END
    assert ep("p") not in g.without(ep("p"))
    assert g.roles("s") == ("p", "q")
    assert g.sessions() == ("s",)


# ------------------------------------------------------------ documented examples


def test_dns_first_reduction():
    doc = document("dns")
    g = doc.context()
    moves = successors(g, "s", doc.reliable)
    expected = g.update({ep("p"): parse_type("q?{res.end, crash.r!{req.r?{res.end}}}"), ep("q"): parse_type("p!{res.end}")})
    assert (Comm("s", "p", "q", "req"), expected) in moves


def test_ended_context_has_no_transitions():
    assert successors(ctx(p=END, q=END), "s") == frozenset()


def test_stopped_receiver_example():
    g = ctx(p=STOP, q="p!{a.end}")
    moves = successors(g, "s")
    assert (Stopped("s", "p"), g) in moves
    assert (Comm("s", "q", "p", "a"), ctx(p=STOP, q=END)) in moves
    assert (Crash("s", "q"), ctx(p=STOP, q=STOP)) in moves
    assert (Output("s", "q", "p", "a"), ctx(p=STOP, q=END)) in moves
    assert len(moves) == 4


def test_dns_noncrash_reductions():
    doc = document("dns")
    moves = reduction_successors(doc.context(), "s", doc.reliable, "noncrash")
    assert labels(moves) == {Comm("s", "p", "q", "req")}


@pytest.mark.parametrize("mode", ["noncrash", "maybecrash"])
def test_ended_context_has_no_reductions(mode):
    assert reduction_successors(ctx(p=END, q=END), "s", (), mode) == frozenset()


def test_exchange_maybecrash():
    moves = reduction_successors(ctx(p="q!{a.end}", q="p?{a.end}"), "s", (), "maybecrash")
    assert labels(moves) == {Comm("s", "p", "q", "a"), Crash("s", "p"), Crash("s", "q")}


def test_unknown_mode_rejected():
    with pytest.raises(ValueError):
        reduction_successors(ctx(p=END), "s", (), "sometimes")


# ------------------------------------------------------------ individual rules


def test_one_output_and_input_per_branch():
    g = ctx(p="q!{a.end, b(int).end}", q="p?{a.end, crash.end}")
    out = labels(successors(g, "s", {"p", "q"}))
    assert Output("s", "p", "q", "a") in out
    assert Output("s", "p", "q", "b", INT) in out
    assert Input("s", "q", "p", "a") in out
    assert Input("s", "q", "p", "crash") in out
    assert Comm("s", "p", "q", "a") in out
    assert not any(isinstance(l, Comm) and l.label == "b" for l in out)


def test_payload_subtyping_in_comm():
    assert Comm("s", "p", "q", "a") in labels(successors(ctx(p="q!{a(int).end}", q="p?{a(real).end}"), "s"))
    assert Comm("s", "p", "q", "a") not in labels(successors(ctx(p="q!{a(real).end}", q="p?{a(int).end}"), "s"))


def test_crash_detection():
    g = ctx(p=STOP, q="p?{a.end, crash.r!{b.end}}", r="q?{b.end}")
    moves = dict((l, g2) for l, g2 in successors(g, "s") if isinstance(l, CrashDetect))
    assert set(moves) == {CrashDetect("s", "q", "p")}
    after = moves[CrashDetect("s", "q", "p")]
    assert after[ep("q")] == parse_type("r!{b.end}") and after[ep("p")] == STOP


def test_no_detection_without_handler():
    g = ctx(p=STOP, q="p?{a.end}")
    assert not any(isinstance(l, CrashDetect) for l in labels(successors(g, "s")))


def test_recursive_types_are_unfolded():
    g = ctx(p="rec t.q!{a.t}", q="rec t.p?{a.t}")
    moves = dict(successors(g, "s", {"p", "q"}))
    assert moves[Comm("s", "p", "q", "a")] == g


def test_other_sessions_do_not_move():
    g = TypingContext.of({ep("p"): parse_type("q!{a.end}"), ep("q"): parse_type("p?{a.end}"), Endpoint("t", "x"): parse_type("y!{a.end}")})
    for label, g2 in successors(g, "s"):
        assert label.s == "s"
        assert g2[Endpoint("t", "x")] == g[Endpoint("t", "x")]


def test_label_json():
    assert label_to_json(CrashDetect("s", "r", "q")) == {"kind": "detect", "s": "s", "p": "r", "q": "q"}
    assert label_to_json(Output("s", "p", "q", "a", INT))["payload"] == "int"


# ------------------------------------------------------------ invariants


@given(seeds)
@settings(max_examples=200)
def test_transition_invariants(seed):
    rng = random.Random(seed)
    g, reliable = random_context(rng)
    try:
        lts = build_lts(g, "s", reliable, Limits(max_states=2000))
    except LimitExceeded:
        return
    for src, label, dst in lts.edges[:400]:
        a, b = lts.states[src], lts.states[dst]
        if isinstance(label, Crash):
            assert label.p not in reliable
            assert a[ep(label.p)] != STOP and not is_subtype(a[ep(label.p)], END)
            assert changed(a, b) == {ep(label.p)} and b[ep(label.p)] == STOP
        elif isinstance(label, Stopped):
            assert src == dst
        elif isinstance(label, (Output, Input)):
            assert len(changed(a, b)) <= 1  # recursion may unfold to the same type
            assert changed(a, b) <= {ep(label.p)}
        elif isinstance(label, Comm) and a[ep(label.q)] == STOP:
            assert changed(a, b) <= {ep(label.p)}
        elif isinstance(label, CrashDetect):
            assert a[ep(label.q)] == STOP and b[ep(label.q)] == STOP


def _related(g: TypingContext, h: TypingContext) -> bool:
    return set(g) == set(h) and all(g[e] == h[e] or is_subtype(g[e], h[e]) for e in g)


@given(seeds)
@settings(max_examples=150)
def test_subtype_simulation(seed):
    """A safe context simulates every reduction of its supertype contexts."""
    rng = random.Random(seed)
    sup, reliable = random_context(rng)
    sub = TypingContext.of({e: narrow(sup[e], rng) for e in sup})
    assert _related(sub, sup)
    try:
        lts = build_lts(sub, "s", reliable, Limits(max_states=2000))
    except LimitExceeded:
        return
    if not check_safety(lts).holds:
        return
    ours = reduction_successors(sub, "s", reliable)
    for label, after in reduction_successors(sup, "s", reliable):
        assert any(l == label and _related(mine, after) for l, mine in ours), (label, str(sub), str(sup))
