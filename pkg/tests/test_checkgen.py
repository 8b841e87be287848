import json
from pathlib import Path

import pytest
from hypothesis import given, strategies as st

from gradver import checkgen
from gradver.checkgen import ContextEntry, RuntimeCheck, Untranslatable
from gradver.engine import MethodResult, Strategy, Verifier
from gradver.state import SymState
from gradver.syntax import SourceLoc
from gradver.terms import INT, Sym, int_lit, mk_eq

from conftest import load_corpus

GOLDEN = Path(__file__).parent / "golden"
L = SourceLoc


def test_translate_store_variable():
    s1 = Sym(1, INT, "x")
    sigma = SymState(store={"x": s1}, frame={"x": s1})
    assert checkgen.translate_term(sigma, mk_eq(s1, int_lit(5))) == "x == 5"


def test_translate_dead_symbol():
    s1, dead = Sym(1, INT, "x"), Sym(2, INT, "old")
    sigma = SymState(store={"x": s1}, frame={"x": s1})
    with pytest.raises(Untranslatable):
        checkgen.translate_term(sigma, mk_eq(dead, int_lit(5)))
    assert checkgen.translate_or_none(sigma, dead) is None


def test_dedupe_identical():
    c = RuntimeCheck(L(1, 1), "acc", "acc(x->f)", ())
    assert checkgen.dedupe([c, c]) == [c]


def test_dedupe_keeps_different_contexts():
    a = RuntimeCheck(L(1, 1), "acc", "acc(x->f)", (ContextEntry("x == NULL", L(1, 1), True),))
    b = RuntimeCheck(L(1, 1), "acc", "acc(x->f)", (ContextEntry("x == NULL", L(1, 1), False),))
    assert checkgen.dedupe([a, b, a]) == [a, b]


def test_front_insert_contexts_retained():
    v = Verifier(load_corpus("front_insert.gvc"))
    checks = v.entry_checks("frontInsert") + v.verify_method("frontInsert").checks
    outer = {(c.context[0].cond, c.context[0].expected) for c in checks if c.context}
    assert outer == {("head == NULL", True), ("head == NULL", False)}


def test_empty_manifest():
    assert checkgen.serialize_checks([]) == '{"methods":[]}'


def test_single_check_entry():
    c = RuntimeCheck(L(3, 4), "nonnull", "x != NULL", (ContextEntry("y > 0", L(2, 7), True),))
    d = json.loads(checkgen.serialize_checks([MethodResult("m", "verified", [c])]))
    (m,) = d["methods"]
    assert m["name"] == "m" and m["status"] == "verified"
    assert list(m["checks"][0]) == ["line", "col", "kind", "payload", "context"]
    assert m["checks"][0]["context"] == [{"cond": "y > 0", "originLine": 2, "originCol": 7, "expected": True}]


_checks = st.builds(
    RuntimeCheck,
    st.builds(L, st.integers(1, 99), st.integers(1, 99)),
    st.sampled_from(checkgen.KINDS),
    st.sampled_from(["x != NULL", "acc(x->f)", "P(x) && acc(y->g)"]),
    st.lists(st.builds(ContextEntry, st.sampled_from(["a == NULL", "b < 3"]),
                       st.builds(L, st.integers(1, 99), st.integers(1, 99)), st.booleans()),
             max_size=3).map(tuple),
)


@given(st.lists(st.tuples(st.sampled_from(["f", "g", "h"]), st.booleans(), st.lists(_checks, max_size=4)),
                max_size=3))
def test_serialize_parse_round_trip(methods):
    results = [MethodResult(n, "verified" if ok else "error", cs) for n, ok, cs in methods]
    text = checkgen.serialize_checks(results)
    back = checkgen.parse_manifest(text)
    assert checkgen.serialize_checks(back) == text


@pytest.mark.parametrize("strategy", [Strategy.RETENTIVE, Strategy.NAIVE])
def test_golden_front_insert(strategy):
    results = Verifier(load_corpus("front_insert.gvc"), strategy).verify_all()
    golden = (GOLDEN / f"front_insert.{strategy.value}.json").read_text().strip()
    assert checkgen.serialize_checks(results) == golden


def test_unknown_kind_rejected():
    bad = '{"methods":[{"name":"m","status":"verified","checks":[' \
          '{"line":1,"col":1,"kind":"magic","payload":"x","context":[]}]}]}'
    with pytest.raises(ValueError):
        checkgen.parse_manifest(bad)
