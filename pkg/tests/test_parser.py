import pytest
from hypothesis import given, settings, strategies as st

from gradver.parser import ParseError, parse, parse_expr, parse_formula
from gradver.syntax import (
    Acc, And, BoolExpr, Cond, FieldAccess, Imprecise, PredInstance, Unfolding,
    show_expr, show_formula, show_program,
)

from conftest import CORPUS


def test_smallest_predicate():
    p = parse("struct Node { int data; struct Node *next; };\n"
              "predicate P(struct Node *x) = true;")
    (pd,) = p.predicates
    assert pd.name == "P" and [q.name for q in pd.params] == ["x"]
    assert isinstance(pd.body, BoolExpr)


def test_sorted_list_shape():
    p = parse((CORPUS / "front_insert.gvc").read_text())
    body = p.predicates[0].body
    assert isinstance(body, Cond)
    parts = _conjuncts(body.else_)
    assert isinstance(parts[0], Acc) and parts[0].lval.field == "data"
    assert isinstance(parts[1], Acc) and parts[1].lval.field == "next"
    assert isinstance(parts[2], PredInstance) and parts[2].name == "sortedList"
    assert isinstance(parts[3], BoolExpr)
    assert "unfolding sortedList(this->next) in" in show_expr(parts[3].expr)


def _conjuncts(f):
    if isinstance(f, And):
        return _conjuncts(f.left) + _conjuncts(f.right)
    return [f]


def test_imprecise_requires():
    f = parse_formula("? && acc(x->f)")
    assert isinstance(f, Imprecise) and isinstance(f.rest, Acc)
    assert isinstance(parse_formula("?"), Imprecise)


def test_imprecision_only_leading():
    with pytest.raises(ParseError):
        parse_formula("acc(x->f) && ?")


def test_short_circuit_precedence():
    e = parse_expr("a && b || c")
    assert e.op == "||" and e.left.op == "&&"


def test_unfolding_expression():
    e = parse_expr("unfolding sortedList(x) in x->data")
    assert isinstance(e, Unfolding) and isinstance(e.body, FieldAccess)


def test_parse_error_has_position():
    with pytest.raises(ParseError) as ei:
        parse("int f(int x) { x = ; }")
    assert ei.value.loc.line == 1 and ei.value.loc.col > 1


@pytest.mark.parametrize("path", sorted(CORPUS.glob("*.gvc")), ids=lambda p: p.stem)
def test_corpus_round_trip(path):
    p1 = parse(path.read_text())
    text = show_program(p1)
    assert parse(text) == p1
    assert show_program(parse(text)) == text


def _locs(node, out):
    loc = getattr(node, "loc", None)
    if loc is not None:
        out.append(loc)
    if hasattr(node, "__dataclass_fields__"):
        for name in node.__dataclass_fields__:
            _locs(getattr(node, name), out)
    elif isinstance(node, (list, tuple)):
        for x in node:
            _locs(x, out)
    return out


@pytest.mark.parametrize("path", sorted(CORPUS.glob("*.gvc")), ids=lambda p: p.stem)
def test_locations_within_text(path):
    text = path.read_text()
    lines = text.split("\n")
    for loc in _locs(parse(text), []):
        assert 1 <= loc.line <= len(lines)
        assert 1 <= loc.col <= len(lines[loc.line - 1]) + 1


_atoms = st.sampled_from(["x", "y", "1", "0", "true", "NULL", "x->data", "p->next->data"])


def _combine(children):
    op = st.sampled_from(["+", "-", "*", "==", "!=", "<", "<=", "&&", "||"])
    return st.one_of(
        st.tuples(children, op, children).map(lambda t: f"({t[0]} {t[1]} {t[2]})"),
        children.map(lambda c: f"!({c})"),
        st.tuples(children, children, children).map(lambda t: f"({t[0]} ? {t[1]} : {t[2]})"),
        children.map(lambda c: f"(unfolding P(x) in {c})"),
    )


@settings(max_examples=300, deadline=None)
@given(st.recursive(_atoms, _combine, max_leaves=8))
def test_expression_round_trip(text):
    e = parse_expr(text)
    assert parse_expr(show_expr(e)) == e


@settings(max_examples=100, deadline=None)
@given(st.lists(st.sampled_from(["acc(x->f)", "P(x, y)", "x != NULL", "(c ? acc(y->g) : true)"]),
                min_size=1, max_size=4), st.booleans())
def test_formula_round_trip(parts, imprecise):
    text = " && ".join((["?"] if imprecise else []) + parts)
    f = parse_formula(text)
    assert parse_formula(show_formula(f)) == f
