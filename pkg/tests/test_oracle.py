import random

import pytest
from hypothesis import given, settings, strategies as st

from gradver.fuzz import agrees, brute_force, random_query
from gradver.oracle import BuiltinOracle, Verdict, evaluate, find_small_model
from gradver.terms import (
    INT, NULL, REF, App, Sym, int_lit, mk_and, mk_arith, mk_cmp, mk_eq, mk_ne, mk_not, mk_or,
)

x, y, z = (Sym(i, INT, n) for i, n in enumerate("xyz"))
p, q = Sym(10, REF, "p"), Sym(11, REF, "q")


@pytest.fixture
def oracle():
    return BuiltinOracle()


def test_goal_in_pc_is_valid(oracle):
    assert oracle.entails([mk_cmp("<", x, y)], mk_cmp("<", x, y)) is Verdict.VALID


def test_transitive_order(oracle):
    pc = [mk_cmp("<", x, y), mk_cmp("<", y, z)]
    assert oracle.entails(pc, mk_cmp("<", x, z)) is Verdict.VALID
    assert oracle.entails(pc, mk_cmp(">=", x, z)) is Verdict.INVALID


def test_integer_tightening(oracle):
    # x > 0 and x < 2 forces x == 1 over the integers
    pc = [mk_cmp(">", x, int_lit(0)), mk_cmp("<", x, int_lit(2))]
    assert oracle.entails(pc, mk_eq(x, int_lit(1))) is Verdict.VALID


def test_unrelated_goal_unknown(oracle):
    assert oracle.entails([mk_cmp("<", x, y)], mk_cmp("<", x, z)) is Verdict.UNKNOWN


def test_reference_equalities(oracle):
    assert oracle.entails([mk_eq(p, q), mk_ne(p, NULL)], mk_ne(q, NULL)) is Verdict.VALID
    assert oracle.entails([mk_eq(p, NULL)], mk_eq(p, q)) is Verdict.UNKNOWN


def test_congruence_over_uninterpreted_apps(oracle):
    fp, fq = App("unf0", (p,), INT), App("unf0", (q,), INT)
    assert oracle.entails([mk_eq(p, q)], mk_eq(fp, fq)) is Verdict.VALID
    assert oracle.entails([mk_ne(fp, fq)], mk_ne(p, q)) is Verdict.VALID


def test_contradictory_pc_entails_anything(oracle):
    pc = [mk_cmp("<", x, y), mk_cmp("<", y, x)]
    assert oracle.entails(pc, mk_eq(x, int_lit(42))) is Verdict.VALID
    assert oracle.satisfiable(pc) is Verdict.INVALID


def test_satisfiable_finds_model(oracle):
    assert oracle.satisfiable([mk_cmp("<", x, y)]) is Verdict.VALID


def test_small_model_is_a_model():
    facts = frozenset({mk_cmp("<", x, y), mk_ne(p, q)})
    env = find_small_model(facts)
    assert env is not None
    assert all(evaluate(f, env) for f in facts)


def test_disjunctive_reasoning(oracle):
    pc = [mk_or(mk_eq(x, int_lit(1)), mk_eq(x, int_lit(2)))]
    assert oracle.entails(pc, mk_cmp(">", x, int_lit(0))) is Verdict.VALID
    assert oracle.entails(pc, mk_eq(x, int_lit(1))) is Verdict.UNKNOWN


def test_nonlinear_term_is_opaque(oracle):
    sq = mk_arith("*", x, x)
    assert oracle.entails([mk_cmp(">", sq, int_lit(3))], mk_cmp(">", sq, int_lit(2))) is Verdict.VALID


def test_brute_force_reference():
    assert brute_force([mk_cmp("<", x, y)], mk_cmp("<=", x, y)) == (True, True)
    assert brute_force([mk_cmp("<", x, y)], mk_cmp(">", x, y)) == (False, False)


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2**32))
def test_agrees_with_enumeration(seed):
    q_ = random_query(random.Random(seed))
    verdict = BuiltinOracle().entails(q_.facts, q_.goal)
    assert agrees(verdict, q_.facts, q_.goal)


@settings(max_examples=200, deadline=None)
@given(st.integers(-3, 3), st.integers(-3, 3))
def test_ground_facts_are_decided(a, b):
    t = mk_cmp("<", int_lit(a), int_lit(b))
    expect = Verdict.VALID if a < b else Verdict.INVALID
    assert BuiltinOracle().entails([], t) is expect
    assert BuiltinOracle().entails([], mk_not(t)) is (Verdict.INVALID if a < b else Verdict.VALID)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32))
def test_valid_goal_conjunction(seed):
    # if pc entails g, then pc entails g && g
    q_ = random_query(random.Random(seed))
    o = BuiltinOracle()
    if o.entails(q_.facts, q_.goal) is Verdict.VALID:
        assert o.entails(q_.facts, mk_and(q_.goal, q_.goal)) is Verdict.VALID
