import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import corpus_lts
from gen import random_small_lts
from mpstcrash.context import LABEL_KINDS, Comm, Endpoint, TypingContext
from mpstcrash.mucalc import (
    FALSE,
    TRUE,
    Alphabet,
    And,
    Box,
    Diamond,
    FormulaError,
    FVar,
    Gfp,
    Implies,
    LabelPattern,
    Lfp,
    Or,
    check_formula,
    conj,
    disj,
    encode,
    evaluate,
    holds,
    negate,
)
from mpstcrash.properties import CHECKERS
from mpstcrash.registry import EVALUATED
from mpstcrash.statespace import Lts
from mpstcrash.types import END, UNIT, Branch, Internal

COMM = LabelPattern("comm")
seeds = st.integers(min_value=0, max_value=2**32 - 1)


def placeholder(i: int) -> TypingContext:
    return TypingContext.of({Endpoint("s", "p"): Internal("q", (Branch(f"l{i}", UNIT, END),))})


def chain(n: int, edges) -> Lts:
    return Lts("s", frozenset(), tuple(placeholder(i) for i in range(n)), tuple(edges))


def any_box(body):
    return conj(Box(LabelPattern(k), body) for k in LABEL_KINDS)


A = Comm("s", "p", "q", "a")


# ------------------------------------------------------------ evaluation


def test_true_is_everything():
    lts = chain(3, [(0, A, 1)])
    assert evaluate(lts, TRUE) == {0, 1, 2}
    assert evaluate(lts, FALSE) == frozenset()


def test_diamond_picks_sources():
    lts = chain(2, [(0, A, 1)])
    assert evaluate(lts, Diamond(COMM, TRUE)) == {0}
    assert evaluate(lts, Box(COMM, FALSE)) == {1}


def test_gfp_of_box_is_everything():
    lts = chain(3, [(0, A, 1), (1, A, 2), (2, A, 0)])
    assert evaluate(lts, Gfp("X", any_box(FVar("X")))) == {0, 1, 2}


def test_lfp_detects_reachability():
    lts = chain(4, [(0, A, 1), (1, A, 2), (3, A, 3)])
    goal = Box(COMM, FALSE)  # deadlocked states
    reach = Lfp("X", Or((goal, Diamond(COMM, FVar("X")))))
    assert evaluate(lts, reach) == {0, 1, 2}
    always = Lfp("X", Or((goal, And((Diamond(COMM, TRUE), Box(COMM, FVar("X")))))))
    assert evaluate(lts, always) == {0, 1, 2}


def test_pattern_fields():
    pat = LabelPattern("comm", p="p", label="a")
    assert pat.matches(A)
    assert not pat.matches(Comm("s", "p", "q", "b"))
    assert not LabelPattern("detect").matches(A)
    assert LabelPattern.exact(A) == LabelPattern("comm", s="s", p="p", q="q", label="a")


# ------------------------------------------------------------ well-formed formulas


def test_open_formula_rejected():
    with pytest.raises(FormulaError):
        check_formula(Diamond(COMM, FVar("X")))


def test_negative_occurrence_rejected():
    with pytest.raises(FormulaError):
        check_formula(Gfp("X", Implies(FVar("X"), TRUE)))
    with pytest.raises(FormulaError):
        evaluate(chain(1, []), Lfp("X", Implies(Diamond(COMM, FVar("X")), FALSE)))


def test_double_negative_accepted():
    check_formula(Gfp("X", Implies(Implies(FVar("X"), FALSE), TRUE)))


def test_negate_rejects_fixpoints():
    with pytest.raises(FormulaError):
        negate(Gfp("X", FVar("X")))


def test_simplifications():
    assert conj([]) is TRUE and disj([]) is FALSE
    assert conj([TRUE, FALSE]) is FALSE and disj([FALSE, TRUE]) is TRUE


def test_printing():
    text = str(Gfp("X", And((Diamond(COMM, TRUE), Box(COMM, FVar("X"))))))
    assert text == "nu X.(<comm()>tt && [comm()]X)"


# ------------------------------------------------------------ invariants on random systems


def random_formula(rng: random.Random, pats, depth: int):
    if depth == 0:
        return rng.choice([TRUE, FALSE, Diamond(rng.choice(pats), TRUE)])
    kind = rng.randrange(4)
    if kind == 0:
        return Box(rng.choice(pats), random_formula(rng, pats, depth - 1))
    if kind == 1:
        return Diamond(rng.choice(pats), random_formula(rng, pats, depth - 1))
    parts = tuple(random_formula(rng, pats, depth - 1) for _ in range(2))
    return And(parts) if kind == 2 else Or(parts)


def random_body(rng: random.Random, pats, depth: int):
    """A formula where ``X`` occurs only positively."""
    if depth == 0:
        return rng.choice([FVar("X"), TRUE, FALSE, Diamond(rng.choice(pats), TRUE)])
    kind = rng.randrange(4)
    if kind == 0:
        return Box(rng.choice(pats), random_body(rng, pats, depth - 1))
    if kind == 1:
        return Diamond(rng.choice(pats), random_body(rng, pats, depth - 1))
    parts = (random_body(rng, pats, depth - 1), random_body(rng, pats, depth - 1))
    return And(parts) if kind == 2 else Or(parts)


def patterns(lts: Lts):
    pats = [LabelPattern(k) for k in LABEL_KINDS]
    pats += [LabelPattern.exact(l) for l in lts.labels[:6]]
    return pats


@given(seeds)
@settings(max_examples=100)
def test_duality(seed):
    rng = random.Random(seed)
    _, lts = random_small_lts(rng, 40)
    pats = patterns(lts)
    everything = frozenset(range(len(lts.states)))
    for _ in range(5):
        pat = rng.choice(pats)
        phi = random_formula(rng, pats, 3)
        assert evaluate(lts, Box(pat, phi)) == everything - evaluate(lts, Diamond(pat, negate(phi)))


@given(seeds)
@settings(max_examples=100)
def test_least_below_greatest(seed):
    rng = random.Random(seed)
    _, lts = random_small_lts(rng, 40)
    pats = patterns(lts)
    for _ in range(5):
        body = random_body(rng, pats, 3)
        assert evaluate(lts, Lfp("X", body)) <= evaluate(lts, Gfp("X", body))


# ------------------------------------------------------------ encodings


def test_nterm_single_label_shape():
    lts = chain(1, [(0, A, 0)])
    f = encode("nterm", Alphabet.of(lts))
    assert isinstance(f, Gfp)
    assert str(f) == "nu X.(<comm(s=s, p=p, q=q, label=a)>tt && [comm(s=s, p=p, q=q, label=a)]X)"
    assert holds(lts, "nterm")


def test_dns_df_formula_accepts():
    assert holds(corpus_lts("dns"), "df")


def test_gamma_b_live_formula_rejects():
    assert not holds(corpus_lts("gamma_b", frozenset()), "live")


def test_unknown_property():
    with pytest.raises(ValueError):
        encode("fast", Alphabet.of(corpus_lts("dns")))


def test_encodings_are_closed_and_monotone():
    alpha = Alphabet.of(corpus_lts("broadcast"))
    for prop in ("safe", "df", "term", "nterm", "live"):
        check_formula(encode(prop, alpha))


CORPUS = [(n, None) for n in EVALUATED] + [(f"{n}_reliable", None) for n in EVALUATED]
CORPUS += [("gamma_a", frozenset()), ("gamma_a", frozenset("r")), ("gamma_b", frozenset()), ("gamma_b", frozenset("r"))]
CORPUS += [("gamma_c", frozenset("pqr")), ("gamma_c", frozenset("p")), ("gamma_c", frozenset())]


@pytest.mark.parametrize("name, reliable", CORPUS)
@pytest.mark.parametrize("prop", ["safe", "df", "term", "nterm"])
def test_formula_agrees_with_direct_checker(name, reliable, prop):
    lts = corpus_lts(name, reliable)
    assert holds(lts, prop) is CHECKERS[prop](lts).holds
