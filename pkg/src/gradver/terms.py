"""Sorted first-order terms used as symbolic values.

Smart constructors fold constants and apply a few local rewrites; they are
deterministic, so the same input always builds the same term.
"""

from __future__ import annotations

import itertools
import threading
from dataclasses import dataclass, field
from typing import Optional, Union

INT, BOOL, REF, SNAP = "Int", "Bool", "Ref", "Snap"
SORTS = (INT, BOOL, REF, SNAP)


@dataclass(frozen=True)
class Lit:
    value: Union[int, bool, None]
    sort: str

    def __repr__(self) -> str:
        if self.sort == REF:
            return "null"
        return str(self.value).lower() if self.sort == BOOL else str(self.value)


@dataclass(frozen=True)
class Sym:
    id: int
    sort: str
    hint: str = field(default="", compare=False)

    def __repr__(self) -> str:
        return f"{self.hint or 's'}#{self.id}"


@dataclass(frozen=True)
class App:
    op: str
    args: tuple["Term", ...]
    sort: str

    def __repr__(self) -> str:
        if len(self.args) == 2 and self.op in _INFIX:
            return f"({self.args[0]!r} {self.op} {self.args[1]!r})"
        return f"{self.op}({', '.join(map(repr, self.args))})"


@dataclass(frozen=True)
class SnapPair:
    first: "Term"
    second: "Term"
    sort: str = SNAP


@dataclass(frozen=True)
class SnapUnit:
    sort: str = SNAP


Term = Union[Lit, Sym, App, SnapPair, SnapUnit]

NULL = Lit(None, REF)
TRUE = Lit(True, BOOL)
FALSE = Lit(False, BOOL)
UNIT = SnapUnit()

_INFIX = {"+", "-", "*", "==", "!=", "<", "<=", ">", ">=", "&&", "||"}
_ARITH = {"+": INT, "-": INT, "*": INT}
_CMP = {"<", "<=", ">", ">="}


def int_lit(v: int) -> Lit:
    return Lit(int(v), INT)


def bool_lit(v: bool) -> Lit:
    return TRUE if v else FALSE


class SortError(TypeError):
    pass


class SymSupply:
    """Monotone source of fresh symbols; one per verification run."""

    def __init__(self, start: int = 0):
        self._counter = itertools.count(start)
        self._lock = threading.Lock()

    def fresh(self, sort: str, hint: str = "") -> Sym:
        if sort not in SORTS:
            raise SortError(f"unknown sort {sort!r}")
        with self._lock:
            return Sym(next(self._counter), sort, hint)


_default_supply = SymSupply()


def fresh_sym(sort: str, hint: str = "", supply: Optional[SymSupply] = None) -> Sym:
    return (supply or _default_supply).fresh(sort, hint)


# ---------------------------------------------------------------- constructors


def mk_arith(op: str, a: Term, b: Term) -> Term:
    if a.sort != INT or b.sort != INT:
        raise SortError(f"{op} expects Int operands, got {a.sort}, {b.sort}")
    if isinstance(a, Lit) and isinstance(b, Lit):
        return int_lit({"+": a.value + b.value, "-": a.value - b.value, "*": a.value * b.value}[op])
    if op == "+" and b == int_lit(0):
        return a
    if op == "+" and a == int_lit(0):
        return b
    if op == "-" and b == int_lit(0):
        return a
    if op == "*" and (a == int_lit(1) or b == int_lit(1)):
        return b if a == int_lit(1) else a
    return App(op, (a, b), INT)


def mk_neg(a: Term) -> Term:
    return mk_arith("-", int_lit(0), a)


def mk_eq(a: Term, b: Term) -> Term:
    if a.sort != b.sort:
        raise SortError(f"== expects equal sorts, got {a.sort}, {b.sort}")
    if a == b:
        return TRUE
    if isinstance(a, Lit) and isinstance(b, Lit):
        return FALSE
    if a.sort == BOOL:
        if isinstance(b, Lit):
            return a if b.value else mk_not(a)
        if isinstance(a, Lit):
            return b if a.value else mk_not(b)
    # canonical argument order keeps syntactically symmetric facts identical
    if _key(b) < _key(a):
        a, b = b, a
    return App("==", (a, b), BOOL)


def mk_ne(a: Term, b: Term) -> Term:
    return mk_not(mk_eq(a, b))


def mk_cmp(op: str, a: Term, b: Term) -> Term:
    if a.sort != INT or b.sort != INT:
        raise SortError(f"{op} expects Int operands")
    if isinstance(a, Lit) and isinstance(b, Lit):
        return bool_lit({"<": a.value < b.value, "<=": a.value <= b.value,
                         ">": a.value > b.value, ">=": a.value >= b.value}[op])
    if a == b:
        return bool_lit(op in ("<=", ">="))
    # only < and <= are kept; > and >= are flipped
    if op == ">":
        return App("<", (b, a), BOOL)
    if op == ">=":
        return App("<=", (b, a), BOOL)
    return App(op, (a, b), BOOL)


def mk_not(a: Term) -> Term:
    if a.sort != BOOL:
        raise SortError("! expects Bool")
    if isinstance(a, Lit):
        return bool_lit(not a.value)
    if isinstance(a, App) and a.op == "!":
        return a.args[0]
    return App("!", (a,), BOOL)


def mk_and(a: Term, b: Term) -> Term:
    if a == FALSE or b == FALSE:
        return FALSE
    if a == TRUE:
        return b
    if b == TRUE:
        return a
    return App("&&", (a, b), BOOL)


def mk_or(a: Term, b: Term) -> Term:
    if a == TRUE or b == TRUE:
        return TRUE
    if a == FALSE:
        return b
    if b == FALSE:
        return a
    return App("||", (a, b), BOOL)


def mk_ite(c: Term, a: Term, b: Term) -> Term:
    if c == TRUE:
        return a
    if c == FALSE:
        return b
    if a == b:
        return a
    if a.sort == BOOL:
        return mk_or(mk_and(c, a), mk_and(mk_not(c), b))
    return App("ite", (c, a, b), a.sort)


def mk_binary(op: str, a: Term, b: Term) -> Term:
    if op in _ARITH:
        return mk_arith(op, a, b)
    if op in _CMP:
        return mk_cmp(op, a, b)
    if op == "==":
        return mk_eq(a, b)
    if op == "!=":
        return mk_ne(a, b)
    if op == "&&":
        return mk_and(a, b)
    if op == "||":
        return mk_or(a, b)
    raise SortError(f"unknown operator {op!r}")


def mk_field_snap(pred_snap: Term, index: int, sort: str) -> Term:
    """Value of the ``index``-th field permission in a predicate body.

    Unfolding the same predicate snapshot twice yields the same field values.
    """
    return App(f"unf{index}", (pred_snap,), sort)


def _key(t: Term) -> tuple:
    if isinstance(t, Lit):
        return (0, t.sort, str(t.value))
    if isinstance(t, Sym):
        return (1, t.id)
    if isinstance(t, App):
        return (2, t.op, tuple(_key(a) for a in t.args))
    return (3, repr(t))


def term_key(t: Term) -> tuple:
    return _key(t)


def subterms(t: Term):
    yield t
    if isinstance(t, App):
        for a in t.args:
            yield from subterms(a)
    elif isinstance(t, SnapPair):
        yield from subterms(t.first)
        yield from subterms(t.second)


def symbols(t: Term) -> set[Sym]:
    return {s for s in subterms(t) if isinstance(s, Sym)}
