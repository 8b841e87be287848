from hypothesis import given, strategies as st

from gradver.terms import (
    BOOL, FALSE, INT, REF, TRUE, App, Sym, SymSupply, SortError, int_lit, mk_and, mk_arith,
    mk_cmp, mk_eq, mk_field_snap, mk_ne, mk_not, mk_or, symbols,
)
import pytest


def test_fresh_symbols_are_distinct():
    supply = SymSupply()
    syms = [supply.fresh(INT) for _ in range(10_000)]
    assert len(set(syms)) == 10_000


def test_fresh_rejects_unknown_sort():
    with pytest.raises(SortError):
        SymSupply().fresh("Float")


def test_sort_mismatch():
    with pytest.raises(SortError):
        mk_eq(int_lit(1), Sym(0, REF))
    with pytest.raises(SortError):
        mk_arith("+", Sym(0, BOOL), int_lit(1))


@given(st.integers(-50, 50), st.integers(-50, 50))
def test_literal_folding(a, b):
    assert mk_arith("+", int_lit(a), int_lit(b)) == int_lit(a + b)
    assert mk_arith("*", int_lit(a), int_lit(b)) == int_lit(a * b)
    assert mk_eq(int_lit(a), int_lit(b)) == (TRUE if a == b else FALSE)


def test_equality_is_canonical():
    x, y = Sym(1, INT), Sym(2, INT)
    assert mk_eq(x, y) == mk_eq(y, x)
    assert mk_eq(x, x) == TRUE
    assert mk_ne(x, x) == FALSE


def test_boolean_simplification():
    b = Sym(3, BOOL)
    assert mk_and(TRUE, b) == b
    assert mk_or(FALSE, b) == b
    assert mk_not(mk_not(b)) == b


def test_field_snapshots_are_deterministic():
    s = Sym(4, "Snap")
    assert mk_field_snap(s, 0, INT) == mk_field_snap(s, 0, INT)
    assert mk_field_snap(s, 0, INT) != mk_field_snap(s, 1, INT)
    assert isinstance(mk_field_snap(s, 0, INT), App)


def test_symbols_collects_leaves():
    x, y = Sym(1, INT), Sym(2, INT)
    t = mk_cmp("<", mk_arith("+", x, int_lit(1)), y)
    assert symbols(t) == {x, y}
