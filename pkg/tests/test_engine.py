import pytest

from gradver.engine import Strategy, Verifier, instantiate_predicate_body, verify_program
from gradver.syntax import Var, show_formula

from conftest import NODE, check_keys, load_corpus, load_text, verify_text

CELL = "struct Cell { int f; };\n"


def single(text, **kw):
    (r,) = verify_text(text, **kw)
    return r


def test_precise_program_has_no_checks():
    r = single(CELL + "int get(struct Cell *c) requires acc(c->f); ensures acc(c->f) && result == c->f;"
                      " { return c->f; }")
    assert r.verified and r.checks == []


def test_precise_missing_permission():
    r = single(CELL + "int get(struct Cell *c) requires c != NULL; ensures true; { return c->f; }")
    assert not r.verified
    assert "insufficient permission" in r.error.message


def test_imprecise_read_emits_acc_check():
    r = single(CELL + "int get(struct Cell *c) requires ?; ensures ?; { return c->f; }")
    assert r.verified
    assert ("acc", "acc(c->f)") in {(c.kind, c.payload) for c in r.checks}


def test_static_only_rejects_what_gradual_defers():
    text = CELL + "int get(struct Cell *c) requires ?; ensures ?; { return c->f; }"
    assert single(text).verified
    assert not single(text, static_only=True).verified


def test_imprecise_postcondition_check():
    r = single("int inc(int x) requires ?; ensures ? && result > x; { return x + 1; }")
    assert r.verified and r.checks == []
    r = single("int id(int x) requires ?; ensures ? && result > 0; { return x; }")
    assert r.verified and [(c.kind, c.payload) for c in r.checks] == [("expr", "0 < x")]


def test_contradicted_assertion_is_static_error_even_when_imprecise():
    r = single("int f(int x) requires ? && x > 0; ensures ?; { assert x < 0; return x; }")
    assert not r.verified and "does not hold" in r.error.message


def test_permission_required_twice():
    r = single(CELL + "int f(struct Cell *c) requires ? && acc(c->f) && acc(c->f); ensures true;"
                      " { return 0; }")
    assert not r.verified and "held twice" in r.error.message
    r = single(CELL + "int g(struct Cell *c) requires acc(c->f); ensures acc(c->f) && acc(c->f);"
                      " { return 0; }")
    assert not r.verified


def test_optimistic_alias_gets_disequality_check():
    r = single(CELL + "int f(struct Cell *a, struct Cell *b) requires ? && acc(a->f); ensures ?;"
                      " { b->f = 1; return 0; }")
    assert ("expr", "b != a") in {(c.kind, c.payload) for c in r.checks}


def test_parameter_reassignment_in_postcondition():
    # the postcondition is about the argument, not the reassigned local
    r = single(NODE + "int f(struct Node *a) requires true; ensures a != NULL;"
                      " { struct Node *n; n = alloc(struct Node); a = n; return 0; }")
    assert not r.verified


def test_checks_survive_infeasible_continuation():
    text = NODE + """int m0(struct Node *a, struct Node *b)
requires ? && acc(b->data); ensures a != NULL; { struct Node *n; n = alloc(struct Node); return 0; }
int m1(struct Node *a, struct Node *b) requires ?; ensures ?; { int t = 0; t = m0(a, b); return t; }
"""
    m0, m1 = verify_text(text)
    assert any(c.payload.startswith("acc(b->data)") for c in m1.checks)


def test_instantiate_predicate_body():
    tp = load_corpus("front_insert.gvc")
    pd = tp.program.predicate("sortedList")
    body = instantiate_predicate_body(pd, (Var("head"),))
    text = show_formula(body)
    assert "head->data" in text and "this" not in text


def test_unfold_bound_stops_recursion():
    events = []
    tp = load_corpus("front_insert.gvc")
    Verifier(tp, trace=lambda rule, data: events.append(rule)).verify_all()
    assert "evalUnfolding.recunf" in events


def test_entry_checks_unsatisfiable_precondition():
    tp = load_text("int f(int x) requires ? && x > 0 && x < 0; ensures true; { return x; }")
    checks = Verifier(tp).entry_checks("f")
    assert checks and {(c.kind, c.payload) for c in checks} == {("expr", "false")}


def test_branch_budget():
    conds = " && ".join(f"(x{i} > 0 || x{i} < 0)" for i in range(8))
    params = ", ".join(f"int x{i}" for i in range(8))
    tp = load_text(f"int f({params}) requires ?; ensures ? && {conds}; {{ return 0; }}")
    r = Verifier(tp, max_branch_depth=3).verify_method("f")
    assert not r.verified and "budget" in r.error.message


def test_naive_superset_of_retentive():
    tp = load_corpus("front_insert.gvc")
    ret = Verifier(tp, Strategy.RETENTIVE).verify_method("frontInsert")
    nai = Verifier(tp, Strategy.NAIVE).verify_method("frontInsert")
    assert check_keys(ret) < check_keys(nai)


def test_imprecise_body_variant_verifies():
    (r,) = verify_program(load_corpus("front_insert_imprecise_body.gvc"))
    assert r.verified


@pytest.mark.parametrize("name", ["sorted_prev_client.gvc", "sorted_unfolding_client.gvc"])
def test_sorted_list_formulations(name):
    assert all(r.verified and not r.checks for r in verify_program(load_corpus(name)))


def test_loop_invariant_preserved():
    r = single("int f(int n) requires n >= 0; ensures result == n; {"
               " int i = 0; while (i < n) invariant 0 <= i && i <= n; { i = i + 1; } return i; }")
    assert r.verified


def test_loop_invariant_broken():
    r = single("int f(int n) requires n >= 0; ensures true; {"
               " int i = 0; while (i < n) invariant i == 0; { i = i + 1; } return i; }")
    assert not r.verified


CORPUS_FILES = sorted(p.name for p in __import__("conftest").CORPUS.glob("*.gvc"))


@pytest.mark.parametrize("name", CORPUS_FILES)
def test_strategy_monotonicity(name):
    tp = load_corpus(name)
    ret = Verifier(tp, Strategy.RETENTIVE).verify_all()
    nai = Verifier(tp, Strategy.NAIVE).verify_all()
    for r, n in zip(ret, nai):
        assert r.verified == n.verified
        assert {k[:4] for k in check_keys(r)} <= {k[:4] for k in check_keys(n)}


@pytest.mark.parametrize("name", CORPUS_FILES)
def test_origin_restored_after_each_construct(name):
    events = []
    Verifier(load_corpus(name), trace=lambda rule, d: events.append((rule, d))).verify_all()
    # continuations run once per branch, so one enter may be followed by several exits
    befores: dict = {}
    for rule, d in events:
        if rule == "origin.enter":
            befores.setdefault(id(d["node"]), []).append(d["before"])
        elif rule == "origin.exit":
            assert d["restored"] in befores[id(d["node"])]
