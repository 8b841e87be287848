"""AST for GVC-mini programs and specifications, plus a pretty-printer.

Every node carries a ``loc`` that is excluded from equality, so two trees
parsed from differently formatted text compare equal.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union


@dataclass(frozen=True, order=True)
class SourceLoc:
    line: int
    col: int
    file: str = field(default="<input>", compare=False)

    def __str__(self) -> str:
        return f"{self.file}:{self.line}:{self.col}"


def _loc() -> Optional[SourceLoc]:
    return field(default=None, compare=False, repr=False)


# ---------------------------------------------------------------- expressions


@dataclass(frozen=True)
class IntLit:
    value: int
    loc: Optional[SourceLoc] = _loc()


@dataclass(frozen=True)
class BoolLit:
    value: bool
    loc: Optional[SourceLoc] = _loc()


@dataclass(frozen=True)
class NullLit:
    loc: Optional[SourceLoc] = _loc()


@dataclass(frozen=True)
class Var:
    name: str
    loc: Optional[SourceLoc] = _loc()


@dataclass(frozen=True)
class FieldAccess:
    recv: "Expr"
    field: str
    loc: Optional[SourceLoc] = _loc()


@dataclass(frozen=True)
class Unary:
    op: str  # "-" or "!"
    operand: "Expr"
    loc: Optional[SourceLoc] = _loc()


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expr"
    right: "Expr"
    loc: Optional[SourceLoc] = _loc()


@dataclass(frozen=True)
class Ternary:
    cond: "Expr"
    then: "Expr"
    else_: "Expr"
    loc: Optional[SourceLoc] = _loc()


@dataclass(frozen=True)
class Unfolding:
    pred: str
    args: tuple["Expr", ...]
    body: "Expr"
    loc: Optional[SourceLoc] = _loc()
    # filled in by the type checker; sort of ``body``
    sort: Optional[str] = field(default=None, compare=False, repr=False)


Expr = Union[IntLit, BoolLit, NullLit, Var, FieldAccess, Unary, Binary, Ternary, Unfolding]

ARITH_OPS = ("+", "-", "*")
COMPARE_OPS = ("<", "<=", ">", ">=")
EQ_OPS = ("==", "!=")
LOGIC_OPS = ("&&", "||")

# ------------------------------------------------------------------- formulas


@dataclass(frozen=True)
class Imprecise:
    rest: Optional["Formula"]
    loc: Optional[SourceLoc] = _loc()


@dataclass(frozen=True)
class BoolExpr:
    expr: Expr
    loc: Optional[SourceLoc] = _loc()


@dataclass(frozen=True)
class Acc:
    lval: FieldAccess
    loc: Optional[SourceLoc] = _loc()


@dataclass(frozen=True)
class PredInstance:
    name: str
    args: tuple[Expr, ...]
    loc: Optional[SourceLoc] = _loc()


@dataclass(frozen=True)
class And:
    left: "Formula"
    right: "Formula"
    loc: Optional[SourceLoc] = _loc()


@dataclass(frozen=True)
class Cond:
    cond: Expr
    then: "Formula"
    else_: "Formula"
    loc: Optional[SourceLoc] = _loc()


Formula = Union[Imprecise, BoolExpr, Acc, PredInstance, And, Cond]


def is_imprecise(f: Formula) -> bool:
    """True if ``?`` occurs anywhere in ``f``."""
    if isinstance(f, Imprecise):
        return True
    if isinstance(f, And):
        return is_imprecise(f.left) or is_imprecise(f.right)
    if isinstance(f, Cond):
        return is_imprecise(f.then) or is_imprecise(f.else_)
    return False


def conjuncts(f: Formula) -> list[Formula]:
    if isinstance(f, And):
        return conjuncts(f.left) + conjuncts(f.right)
    return [f]


def conjoin(parts: list[Formula], loc: Optional[SourceLoc] = None) -> Formula:
    if not parts:
        return BoolExpr(BoolLit(True, loc), loc)
    out = parts[-1]
    for p in reversed(parts[:-1]):
        out = And(p, out, p.loc)
    return out


# ----------------------------------------------------------------- statements


@dataclass(frozen=True)
class VarDecl:
    type: str
    name: str
    loc: Optional[SourceLoc] = _loc()


@dataclass(frozen=True)
class Assign:
    name: str
    expr: Expr
    loc: Optional[SourceLoc] = _loc()


@dataclass(frozen=True)
class FieldWrite:
    lval: FieldAccess
    expr: Expr
    loc: Optional[SourceLoc] = _loc()


@dataclass(frozen=True)
class Alloc:
    name: str
    record: str
    loc: Optional[SourceLoc] = _loc()


@dataclass(frozen=True)
class If:
    cond: Expr
    then: tuple["Stmt", ...]
    else_: tuple["Stmt", ...]
    loc: Optional[SourceLoc] = _loc()


@dataclass(frozen=True)
class While:
    cond: Expr
    invariant: Formula
    body: tuple["Stmt", ...]
    loc: Optional[SourceLoc] = _loc()
    end_loc: Optional[SourceLoc] = _loc()


@dataclass(frozen=True)
class Fold:
    pred: str
    args: tuple[Expr, ...]
    loc: Optional[SourceLoc] = _loc()


@dataclass(frozen=True)
class Unfold:
    pred: str
    args: tuple[Expr, ...]
    loc: Optional[SourceLoc] = _loc()


@dataclass(frozen=True)
class Assert:
    formula: Formula
    loc: Optional[SourceLoc] = _loc()


@dataclass(frozen=True)
class Call:
    target: Optional[str]
    method: str
    args: tuple[Expr, ...]
    loc: Optional[SourceLoc] = _loc()
    name_loc: Optional[SourceLoc] = _loc()


@dataclass(frozen=True)
class Return:
    expr: Optional[Expr]
    loc: Optional[SourceLoc] = _loc()


Stmt = Union[VarDecl, Assign, FieldWrite, Alloc, If, While, Fold, Unfold, Assert, Call, Return]

# --------------------------------------------------------------- declarations


@dataclass(frozen=True)
class Param:
    type: str  # "int", "bool", or a record name for ``struct R *``
    name: str
    loc: Optional[SourceLoc] = _loc()


@dataclass(frozen=True)
class RecordDecl:
    name: str
    fields: tuple[Param, ...]
    loc: Optional[SourceLoc] = _loc()


@dataclass(frozen=True)
class PredicateDecl:
    name: str
    params: tuple[Param, ...]
    body: Formula
    loc: Optional[SourceLoc] = _loc()


@dataclass(frozen=True)
class MethodDecl:
    name: str
    params: tuple[Param, ...]
    ret: str
    requires: Formula
    ensures: Formula
    body: tuple[Stmt, ...]
    loc: Optional[SourceLoc] = _loc()


@dataclass(frozen=True)
class SourceProgram:
    records: tuple[RecordDecl, ...] = ()
    predicates: tuple[PredicateDecl, ...] = ()
    methods: tuple[MethodDecl, ...] = ()

    def record(self, name: str) -> Optional[RecordDecl]:
        return next((r for r in self.records if r.name == name), None)

    def predicate(self, name: str) -> Optional[PredicateDecl]:
        return next((p for p in self.predicates if p.name == name), None)

    def method(self, name: str) -> Optional[MethodDecl]:
        return next((m for m in self.methods if m.name == name), None)


# ------------------------------------------------------------ pretty printing

_PREC = {"||": 1, "&&": 2, "==": 3, "!=": 3, "<": 4, "<=": 4, ">": 4, ">=": 4, "+": 5, "-": 5, "*": 6}


def show_expr(e: Expr, prec: int = 0) -> str:
    if isinstance(e, IntLit):
        return str(e.value) if e.value >= 0 else f"({e.value})"
    if isinstance(e, BoolLit):
        return "true" if e.value else "false"
    if isinstance(e, NullLit):
        return "NULL"
    if isinstance(e, Var):
        return e.name
    if isinstance(e, FieldAccess):
        return f"{show_expr(e.recv, 9)}->{e.field}"
    if isinstance(e, Unary):
        return f"{e.op}{show_expr(e.operand, 8)}"
    if isinstance(e, Binary):
        p = _PREC[e.op]
        # left-associative: the right operand needs strictly higher precedence
        s = f"{show_expr(e.left, p)} {e.op} {show_expr(e.right, p + 1)}"
        return f"({s})" if p < prec else s
    if isinstance(e, Ternary):
        s = f"{show_expr(e.cond, 1)} ? {show_expr(e.then, 0)} : {show_expr(e.else_, 0)}"
        return f"({s})" if prec > 0 else s
    if isinstance(e, Unfolding):
        args = ", ".join(show_expr(a) for a in e.args)
        s = f"unfolding {e.pred}({args}) in {show_expr(e.body, 0)}"
        return f"({s})" if prec > 0 else s
    raise TypeError(f"not an expression: {e!r}")


def show_formula(f: Formula) -> str:
    if isinstance(f, Imprecise):
        return "?" if f.rest is None else f"? && {show_formula(f.rest)}"
    if isinstance(f, BoolExpr):
        # a parenthesised ternary at formula level re-parses as a conditional
        # assertion, hence the double parentheses
        if isinstance(f.expr, Ternary):
            return f"({show_expr(f.expr, 1)})"
        return show_expr(f.expr, 3)
    if isinstance(f, Acc):
        return f"acc({show_expr(f.lval)})"
    if isinstance(f, PredInstance):
        return f"{f.name}({', '.join(show_expr(a) for a in f.args)})"
    if isinstance(f, And):
        return f"{_show_conj(f.left)} && {_show_conj(f.right)}"
    if isinstance(f, Cond):
        return f"({show_expr(f.cond, 1)} ? {show_formula(f.then)} : {show_formula(f.else_)})"
    raise TypeError(f"not a formula: {f!r}")


def _show_conj(f: Formula) -> str:
    s = show_formula(f)
    # Imprecise may only lead a formula; nested occurrences are parenthesised
    return f"({s})" if isinstance(f, Imprecise) else s


def _show_type(t: str) -> str:
    return t if t in ("int", "bool", "void") else f"struct {t} *"


def _show_block(stmts: tuple[Stmt, ...], indent: str) -> str:
    inner = "".join(show_stmt(s, indent + "  ") for s in stmts)
    return "{\n" + inner + indent + "}"


def show_stmt(s: Stmt, indent: str = "") -> str:
    if isinstance(s, VarDecl):
        body = f"{_show_type(s.type)} {s.name};"
    elif isinstance(s, Assign):
        body = f"{s.name} = {show_expr(s.expr)};"
    elif isinstance(s, FieldWrite):
        body = f"{show_expr(s.lval)} = {show_expr(s.expr)};"
    elif isinstance(s, Alloc):
        body = f"{s.name} = alloc({s.record});"
    elif isinstance(s, If):
        body = f"if ({show_expr(s.cond)}) {_show_block(s.then, indent)}"
        if s.else_:
            body += f" else {_show_block(s.else_, indent)}"
    elif isinstance(s, While):
        inv = ""
        if not (isinstance(s.invariant, BoolExpr) and s.invariant.expr == BoolLit(True)):
            inv = f" invariant {show_formula(s.invariant)};"
        body = f"while ({show_expr(s.cond)}){inv} {_show_block(s.body, indent)}"
    elif isinstance(s, (Fold, Unfold)):
        kw = "fold" if isinstance(s, Fold) else "unfold"
        body = f"{kw} {s.pred}({', '.join(show_expr(a) for a in s.args)});"
    elif isinstance(s, Assert):
        body = f"assert {show_formula(s.formula)};"
    elif isinstance(s, Call):
        call = f"{s.method}({', '.join(show_expr(a) for a in s.args)});"
        body = call if s.target is None else f"{s.target} = {call}"
    elif isinstance(s, Return):
        body = "return;" if s.expr is None else f"return {show_expr(s.expr)};"
    else:
        raise TypeError(f"not a statement: {s!r}")
    return indent + body + "\n"


def _is_true(f: Formula) -> bool:
    return isinstance(f, BoolExpr) and f.expr == BoolLit(True)


def show_program(p: SourceProgram) -> str:
    out: list[str] = []
    for r in p.records:
        fields = " ".join(f"{_show_type(f.type)} {f.name};" for f in r.fields)
        out.append(f"struct {r.name} {{ {fields} }};\n")
    for pd in p.predicates:
        params = ", ".join(f"{_show_type(x.type)} {x.name}" for x in pd.params)
        out.append(f"predicate {pd.name}({params}) = {show_formula(pd.body)};\n")
    for m in p.methods:
        params = ", ".join(f"{_show_type(x.type)} {x.name}" for x in m.params)
        head = f"{_show_type(m.ret)} {m.name}({params})\n"
        if not _is_true(m.requires):
            head += f"  requires {show_formula(m.requires)};\n"
        if not _is_true(m.ensures):
            head += f"  ensures {show_formula(m.ensures)};\n"
        out.append(head + _show_block(m.body, "") + "\n")
    return "\n".join(out)


def resugar(e: Expr) -> Expr:
    """Undo the ternary encoding of ``&&`` and ``||`` for display."""
    if isinstance(e, Ternary):
        c, a, b = resugar(e.cond), resugar(e.then), resugar(e.else_)
        if isinstance(b, BoolLit) and not b.value:
            return Binary("&&", c, a, e.loc)
        if isinstance(a, BoolLit) and a.value:
            return Binary("||", c, b, e.loc)
        return Ternary(c, a, b, e.loc)
    if isinstance(e, Binary):
        return Binary(e.op, resugar(e.left), resugar(e.right), e.loc)
    if isinstance(e, Unary):
        return Unary(e.op, resugar(e.operand), e.loc)
    if isinstance(e, FieldAccess):
        return FieldAccess(resugar(e.recv), e.field, e.loc)
    return e


def show_source(e: Expr) -> str:
    return show_expr(resugar(e))
