import pytest

from gradver.engine import check_spec_wellformedness
from gradver.parser import parse
from gradver.syntax import Imprecise, Ternary
from gradver.typecheck import ArityError, TypeCheckError, UnknownName, typecheck

from conftest import NODE, load_corpus, load_text

REC = "struct Cell { int f; };\n"


def test_field_access_on_int():
    with pytest.raises(TypeCheckError):
        load_text(REC + "int g(int x) requires true; ensures true; { return x->f; }")


def test_front_insert_is_well_typed():
    tp = load_corpus("front_insert.gvc")
    assert isinstance(tp.program.method("frontInsert").requires, Imprecise)


def test_predicate_body_free_variable():
    with pytest.raises(UnknownName):
        load_text(NODE + "predicate P(struct Node *x) = acc(y->data);")


def test_arity_mismatch():
    with pytest.raises(ArityError):
        load_text(NODE + "predicate P(struct Node *x) = true;\n"
                         "int g(struct Node *x) requires P(x, x); ensures true; { return 0; }")


def test_unknown_method():
    with pytest.raises(UnknownName):
        load_text("int g(int x) requires true; ensures true; { x = h(x); return x; }")


def test_duplicate_field_names_rejected():
    with pytest.raises(TypeCheckError):
        load_text("struct A { int f; };\nstruct B { int f; };\n")


def test_short_circuit_becomes_ternary():
    tp = load_text("bool g(bool a, bool b) requires true; ensures true; { return a && b; }")
    assert isinstance(tp.program.method("g").body[-1].expr, Ternary)


def test_deterministic():
    text = (load_corpus.__globals__["CORPUS"] / "front_insert.gvc").read_text()
    assert typecheck(parse(text)) == typecheck(parse(text))


@pytest.mark.parametrize("spec, n_diags", [
    ("acc(x->f) && x->f == 2", 0),
    ("x->f == 2", 1),
    ("? && x->f == 2", 0),
])
def test_spec_wellformedness(spec, n_diags):
    tp = load_text(REC + f"int g(struct Cell *x) requires {spec}; ensures true; {{ return 0; }}")
    diags = check_spec_wellformedness(tp)
    assert len(diags) == n_diags
    if diags:
        assert "x->f" in diags[0].message
