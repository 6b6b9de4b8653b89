import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gen import narrow, random_type, widen
from mpstcrash.syntax import parse_type
from mpstcrash.types import (
    CRASH,
    END,
    INT,
    REAL,
    STOP,
    UNIT,
    Branch,
    External,
    Internal,
    Rec,
    Var,
    is_end_like,
    is_pure_recovery,
    is_subtype,
    unfold,
    well_formed,
)

ROLES = ("p", "q", "r")
seeds = st.integers(min_value=0, max_value=2**32 - 1)


def rtype(seed: int, depth: int = 3):
    rng = random.Random(seed)
    return random_type(rng, "p", ROLES, depth=rng.randint(1, depth))


# ------------------------------------------------------------ well-formedness


def test_end_is_well_formed():
    assert well_formed(END) is None


def test_unguarded_recursion_is_reported():
    bad = well_formed(Rec(Var(0)))
    assert bad is not None and "unguarded" in bad.reason


def test_crash_in_internal_choice_is_reported():
    bad = well_formed(Internal("q", (Branch(CRASH, UNIT, END),)))
    assert bad is not None and bad.reason == "crash in internal choice"


def test_violation_carries_path():
    t = Internal("q", (Branch("a", UNIT, External("q", (Branch("b", UNIT, END), Branch("b", UNIT, END)))),))
    bad = well_formed(t)
    assert bad.reason == "duplicate label b"
    assert bad.path == ("a",)


@pytest.mark.parametrize(
    "t, reason",
    [
        (Var(0), "unbound"),
        (Internal("q", ()), "empty choice"),
        (Internal("q", (Branch("a", UNIT, STOP),)), "stop nested"),
        (Rec(Internal("q", (Branch("a", UNIT, Var(1)),))), "unbound"),
        (Rec(Rec(Var(1))), "unguarded"),
    ],
)
def test_invalid_types(t, reason):
    bad = well_formed(t)
    assert bad is not None and reason in bad.reason


def test_stop_is_valid_only_at_top():
    assert well_formed(STOP) is None


@given(seeds)
@settings(max_examples=200)
def test_generated_types_are_well_formed(seed):
    assert well_formed(rtype(seed)) is None


# ------------------------------------------------------------ unfolding


def test_unfold_identity_on_non_rec():
    assert unfold(END) is END


def test_unfold_single_substitution():
    t = parse_type("rec t.q!{a.t}")
    assert unfold(t) == Internal("q", (Branch("a", UNIT, t),))


def test_unfold_nested_binders():
    t = parse_type("rec t.rec u.q?{a.u, crash.t}")
    inner = t.body  # rec u. q?{a.u, crash.t} with t free
    # substitute by hand: first t := whole, then u := inner[t := whole]
    inner_closed = Rec(External("q", (Branch("a", UNIT, Var(0)), Branch(CRASH, UNIT, t))))
    expected = External("q", (Branch("a", UNIT, inner_closed), Branch(CRASH, UNIT, t)))
    assert inner != inner_closed
    assert unfold(t) == expected


@given(seeds)
@settings(max_examples=300)
def test_unfold_invariance(seed):
    t = rtype(seed)
    if not isinstance(t, Rec):
        t = Rec(Internal("q", (Branch("a", UNIT, Var(0)), Branch("b", UNIT, t))))
    u = unfold(t)
    assert not isinstance(u, Rec)
    assert is_subtype(t, u) and is_subtype(u, t)


# ------------------------------------------------------------ subtyping


WORKED_EXAMPLES = [
    ("end", "end", True),
    ("stop", "end", False),
    ("q!{a.end, b.end}", "q!{a.end}", True),
    ("q?{crash.end}", "q?{crash.end, a.end}", False),
    ("rec t.q!{a.t}", "q!{a.rec t.q!{a.t}}", True),
]


@pytest.mark.parametrize("a, b, expected", WORKED_EXAMPLES)
def test_worked_examples(a, b, expected):
    assert is_subtype(parse_type(a), parse_type(b)) is expected


@pytest.mark.parametrize(
    "a, b, expected",
    [
        ("q!{a.end}", "q!{a.end, b.end}", False),
        ("q?{a.end}", "q?{a.end, b.end}", True),
        ("q?{a.end, b.end}", "q?{a.end}", False),
        ("q!{a(real).end}", "q!{a(int).end}", True),
        ("q!{a(int).end}", "q!{a(real).end}", False),
        ("q?{a(int).end}", "q?{a(real).end}", True),
        ("q?{a(real).end}", "q?{a(int).end}", False),
        ("q!{a.end}", "r!{a.end}", False),
        ("q!{a.end}", "q?{a.end}", False),
        ("q?{crash.end}", "q?{crash.end}", True),
        ("q?{a.end, crash.end}", "q?{a.end, b.end, crash.end}", True),
        ("rec t.q!{a.q!{a.t}}", "rec t.q!{a.t}", True),
        ("q!{a(q!{b.end}).end}", "q!{a(q!{b.end, c.end}).end}", True),
    ],
)
def test_more_subtype_cases(a, b, expected):
    assert is_subtype(parse_type(a), parse_type(b)) is expected


def test_basic_lattice():
    assert is_subtype(INT, REAL)
    assert not is_subtype(REAL, INT)
    assert not is_subtype(INT, END)


@given(seeds)
@settings(max_examples=1000)
def test_reflexivity(seed):
    t = rtype(seed, depth=4)
    assert is_subtype(t, t)


@given(seeds)
@settings(max_examples=300)
def test_widen_and_narrow_produce_related_types(seed):
    rng = random.Random(seed)
    t = rtype(seed)
    up = widen(t, rng)
    down = narrow(t, rng)
    assert well_formed(up) is None and well_formed(down) is None
    assert is_subtype(t, up)
    assert is_subtype(down, t)


@given(seeds)
@settings(max_examples=300)
def test_transitivity_on_chains(seed):
    rng = random.Random(seed)
    b = rtype(seed)
    a, c = narrow(b, rng), widen(b, rng)
    assert is_subtype(a, b) and is_subtype(b, c)
    assert is_subtype(a, c)


@given(seeds, seeds, seeds)
@settings(max_examples=300)
def test_transitivity_on_random_triples(x, y, z):
    a, b, c = rtype(x, 2), rtype(y, 2), rtype(z, 2)
    if is_subtype(a, b) and is_subtype(b, c):
        assert is_subtype(a, c)


@given(seeds)
@settings(max_examples=300)
def test_stop_isolation(seed):
    t = rtype(seed)
    assert is_subtype(STOP, t) is (t == STOP)
    assert is_subtype(t, STOP) is (t == STOP)
    assert is_subtype(STOP, STOP)


@given(seeds, seeds)
@settings(max_examples=500)
def test_pure_recovery_protection(x, y):
    rng = random.Random(x)
    t1 = External(rng.choice(ROLES[1:]), (Branch(CRASH, UNIT, rtype(x, 2)),))
    for t2 in (rtype(y, 2), widen(t1, rng), External(t1.role, (Branch(CRASH, UNIT, END), Branch("a", UNIT, END)))):
        if is_subtype(t1, t2):
            head = unfold(t2)
            assert isinstance(head, External) and head.labels() == (CRASH,)


def test_pure_recovery_predicate():
    assert is_pure_recovery(parse_type("q?{crash.end}"))
    assert is_pure_recovery(parse_type("rec t.q?{crash.t}"))
    assert not is_pure_recovery(parse_type("q?{crash.end, a.end}"))


def test_end_like():
    assert is_end_like(END) and is_end_like(INT)
    assert not is_end_like(STOP)
    assert not is_end_like(parse_type("q!{a.end}"))


def test_branch_order_is_irrelevant():
    a = parse_type("q?{a.end, b(int).end}")
    b = parse_type("q?{b(int).end, a.end}")
    assert a == b and hash(a) == hash(b)
    assert str(a) != str(b)


def test_binder_names_are_irrelevant():
    assert parse_type("rec t.q!{a.t}") == parse_type("rec x.q!{a.x}")


def test_repeated_branch_is_not_conflated():
    dup = Internal("q", (Branch("a", UNIT, END), Branch("a", UNIT, END)))
    single = Internal("q", (Branch("a", UNIT, END),))
    assert dup != single
    assert well_formed(dup) is not None
    assert well_formed(single) is None
