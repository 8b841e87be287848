"""Lexer and recursive-descent parser for GVC-mini.

Annotations appear inline after method signatures. The C0 comment envelope
(``//@`` and ``/*@ ... @*/``) is tolerated and stripped, so Gradual C0 style
listings parse unchanged; both ``x->f`` and ``x.f`` denote field access.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Optional, TypeVar

from gradver.syntax import (
    Acc, Alloc, Assert, Assign, Binary, BoolExpr, BoolLit, Call, Cond, Expr,
    FieldAccess, FieldWrite, Fold, Formula, If, Imprecise, IntLit, MethodDecl,
    NullLit, Param, PredicateDecl, PredInstance, RecordDecl, Return, SourceLoc,
    SourceProgram, Stmt, Ternary, Unary, Unfold, Unfolding, Var, VarDecl, While,
    conjoin,
)

KEYWORDS = {
    "struct", "int", "bool", "void", "predicate", "requires", "ensures", "invariant",
    "acc", "unfolding", "in", "fold", "unfold", "assert", "if", "else", "while",
    "return", "alloc", "true", "false", "NULL", "null",
}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+|//@|/\*@|@\*/|//[^\n]*|/\*.*?\*/)
  | (?P<int>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>->|==|!=|<=|>=|&&|\|\||[<>+\-*!?:;,(){}=.])
    """,
    re.VERBOSE | re.DOTALL,
)


@dataclass(frozen=True)
class Token:
    kind: str  # "int", "ident", "kw", "op", "eof"
    text: str
    loc: SourceLoc
    offset: int


class ParseError(Exception):
    def __init__(self, loc: SourceLoc, expected: set[str], found: str):
        self.loc = loc
        self.expected = set(expected)
        self.found = found
        exp = ", ".join(sorted(self.expected))
        super().__init__(f"{loc}: expected one of {{{exp}}}, found {found!r}")


def tokenize(text: str, filename: str = "<input>") -> list[Token]:
    toks: list[Token] = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            loc = SourceLoc(line, pos - line_start + 1, filename)
            raise ParseError(loc, {"token"}, text[pos])
        kind = m.lastgroup
        s = m.group()
        if kind != "ws":
            loc = SourceLoc(line, pos - line_start + 1, filename)
            if kind == "ident" and s in KEYWORDS:
                kind = "kw"
            toks.append(Token(kind, s, loc, pos))
        nl = s.count("\n")
        if nl:
            line += nl
            line_start = pos + s.rindex("\n") + 1
        pos = m.end()
    toks.append(Token("eof", "<eof>", SourceLoc(line, pos - line_start + 1, filename), pos))
    return toks


T = TypeVar("T")


class Parser:
    def __init__(self, text: str, filename: str = "<input>"):
        self.toks = tokenize(text, filename)
        self.i = 0
        # furthest failure, reported when every alternative fails
        self.err: Optional[ParseError] = None

    # -- token helpers

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def at(self, *texts: str) -> bool:
        t = self.tok
        return t.kind in ("op", "kw") and t.text in texts

    def fail(self, *expected: str) -> ParseError:
        e = ParseError(self.tok.loc, set(expected), self.tok.text)
        if self.err is None or self.tok.offset > self.err_offset:
            self.err, self.err_offset = e, self.tok.offset
        elif self.tok.offset == self.err_offset:
            self.err.expected |= e.expected
        return e

    err_offset = -1

    def expect(self, text: str) -> Token:
        if not self.at(text):
            raise self.fail(text)
        t = self.tok
        self.i += 1
        return t

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.i += 1
            return True
        return False

    def ident(self) -> Token:
        if self.tok.kind != "ident":
            raise self.fail("identifier")
        t = self.tok
        self.i += 1
        return t

    def attempt(self, fn: Callable[[], T]) -> Optional[T]:
        """Run ``fn``; on failure rewind and return None."""
        saved = self.i
        try:
            return fn()
        except ParseError:
            self.i = saved
            return None

    # -- program

    def program(self) -> SourceProgram:
        records, preds, methods = [], [], []
        while self.tok.kind != "eof":
            if self.at("predicate"):
                preds.append(self.predicate())
            elif self.at("struct") and self.peek(2).text == "{":
                records.append(self.record())
            else:
                methods.append(self.method())
        return SourceProgram(tuple(records), tuple(preds), tuple(methods))

    def type_(self) -> str:
        if self.at("int", "bool", "void"):
            t = self.tok.text
            self.i += 1
            return t
        if self.accept("struct"):
            name = self.ident().text
            self.expect("*")
            return name
        raise self.fail("int", "bool", "void", "struct")

    def record(self) -> RecordDecl:
        loc = self.expect("struct").loc
        name = self.ident().text
        self.expect("{")
        fields = []
        while not self.at("}"):
            ty = self.type_()
            ft = self.ident()
            self.expect(";")
            fields.append(Param(ty, ft.text, ft.loc))
        self.expect("}")
        self.expect(";")
        return RecordDecl(name, tuple(fields), loc)

    def params(self) -> tuple[Param, ...]:
        self.expect("(")
        out = []
        if not self.at(")"):
            while True:
                ty = self.type_()
                t = self.ident()
                out.append(Param(ty, t.text, t.loc))
                if not self.accept(","):
                    break
        self.expect(")")
        return tuple(out)

    def predicate(self) -> PredicateDecl:
        self.expect("predicate")
        t = self.ident()
        params = self.params()
        self.expect("=")
        body = self.formula()
        self.expect(";")
        return PredicateDecl(t.text, params, body, t.loc)

    def method(self) -> MethodDecl:
        ret = self.type_()
        t = self.ident()
        params = self.params()
        reqs: list[Formula] = []
        enss: list[Formula] = []
        while self.at("requires", "ensures"):
            bucket = reqs if self.tok.text == "requires" else enss
            self.i += 1
            bucket.append(self.formula())
            self.expect(";")
        brace = self.tok.loc
        body = self.block()
        return MethodDecl(t.text, params, ret, join_clauses(reqs, t.loc),
                          join_clauses(enss, brace), body, t.loc)

    # -- statements

    def block(self) -> tuple[Stmt, ...]:
        self.expect("{")
        out = []
        while not self.at("}"):
            out.append(self.stmt())
        self.expect("}")
        return tuple(out)

    def block_end(self) -> tuple[tuple[Stmt, ...], SourceLoc]:
        self.expect("{")
        out = []
        while not self.at("}"):
            out.append(self.stmt())
        end = self.expect("}").loc
        return tuple(out), end

    def stmt(self) -> Stmt:
        t = self.tok
        loc = t.loc
        if self.at("int", "bool", "struct"):
            ty = self.type_()
            name_at = self.i
            name = self.ident().text
            if self.at("="):
                # ``T x = e;`` declares x, then ``x = e;`` is the next statement
                self.i = name_at
            else:
                self.expect(";")
            return VarDecl(ty, name, loc)
        if self.accept("if"):
            self.expect("(")
            c = self.expr()
            self.expect(")")
            then = self.block()
            els: tuple[Stmt, ...] = ()
            if self.accept("else"):
                els = (self.stmt(),) if self.at("if") else self.block()
            return If(c, then, els, loc)
        if self.accept("while"):
            self.expect("(")
            c = self.expr()
            self.expect(")")
            invs = []
            while self.accept("invariant"):
                invs.append(self.formula())
                self.expect(";")
            body, end = self.block_end()
            return While(c, join_clauses(invs, loc), body, loc, end)
        if self.at("fold", "unfold"):
            kw = self.tok.text
            self.i += 1
            self.accept("acc")  # tolerate ``fold acc(P(x))``
            name = self.ident().text
            args = self.args()
            self.expect(";")
            return (Fold if kw == "fold" else Unfold)(name, args, loc)
        if self.accept("assert"):
            f = self.formula()
            self.expect(";")
            return Assert(f, loc)
        if self.accept("return"):
            e = None if self.at(";") else self.expr()
            self.expect(";")
            return Return(e, loc)
        if t.kind == "ident":
            if self.peek().text == "(":
                name = self.ident()
                args = self.args()
                self.expect(";")
                return Call(None, name.text, args, loc, name.loc)
            if self.peek().text == "=":
                name = self.ident().text
                self.expect("=")
                if self.accept("alloc"):
                    self.expect("(")
                    self.accept("struct")
                    rec = self.ident().text
                    self.expect(")")
                    self.expect(";")
                    return Alloc(name, rec, loc)
                if self.tok.kind == "ident" and self.peek().text == "(":
                    callee = self.ident()
                    args = self.args()
                    self.expect(";")
                    return Call(name, callee.text, args, loc, callee.loc)
                e = self.expr()
                self.expect(";")
                return Assign(name, e, loc)
            lv = self.postfix()
            if not isinstance(lv, FieldAccess):
                raise self.fail("->")
            self.expect("=")
            e = self.expr()
            self.expect(";")
            return FieldWrite(lv, e, loc)
        raise self.fail("statement")

    def args(self) -> tuple[Expr, ...]:
        self.expect("(")
        out = []
        if not self.at(")"):
            while True:
                out.append(self.expr())
                if not self.accept(","):
                    break
        self.expect(")")
        return tuple(out)

    # -- formulas

    def formula(self) -> Formula:
        loc = self.tok.loc
        if self.accept("?"):
            if not self.accept("&&"):
                return Imprecise(None, loc)
            return Imprecise(self.conjunction(), loc)
        return self.conjunction()

    def conjunction(self) -> Formula:
        parts = [self.fconj()]
        while self.accept("&&"):
            parts.append(self.fconj())
        return conjoin(parts)

    def fconj(self) -> Formula:
        t = self.tok
        if self.accept("acc"):
            self.expect("(")
            lv = self.postfix()
            if not isinstance(lv, FieldAccess):
                raise self.fail("->")
            self.expect(")")
            return Acc(lv, t.loc)
        if t.kind == "ident" and self.peek().text == "(":
            name = self.ident().text
            return PredInstance(name, self.args(), t.loc)
        if self.at("("):
            c = self.attempt(self._paren_cond)
            if c is not None:
                return c
        e = self.attempt(self.expr_no_ternary)
        if e is not None:
            if self.at("?"):
                return self._cond_tail(e, t.loc)
            return BoolExpr(e, t.loc)
        if self.accept("("):
            f = self.formula()
            self.expect(")")
            return f
        raise self.fail("formula")

    def _paren_cond(self) -> Formula:
        loc = self.expect("(").loc
        c = self.expr_no_ternary()
        self.expect("?")
        a = self.formula()
        self.expect(":")
        b = self.formula()
        self.expect(")")
        if not self._at_formula_end():
            raise self.fail("&&", ";", ")")
        return Cond(c, a, b, loc)

    def _at_formula_end(self) -> bool:
        return self.at(")", ";", ":", "&&") or self.tok.kind == "eof"

    def _cond_tail(self, cond: Expr, loc: SourceLoc) -> Formula:
        self.expect("?")
        a = self.formula()
        self.expect(":")
        b = self.formula()
        return Cond(cond, a, b, loc)

    # -- expressions, lowest precedence first

    def expr(self) -> Expr:
        c = self.expr_no_ternary()
        if self.at("?"):
            loc = self.tok.loc
            self.expect("?")
            a = self.expr()
            self.expect(":")
            b = self.expr()
            return Ternary(c, a, b, c.loc or loc)
        return c

    def expr_no_ternary(self) -> Expr:
        if self.at("unfolding"):
            return self.unfolding()
        return self.or_()

    def unfolding(self) -> Expr:
        loc = self.expect("unfolding").loc
        wrapped = self.accept("(")  # tolerate ``unfolding(P(x)) in``
        self.accept("acc")
        name = self.ident().text
        args = self.args()
        if wrapped:
            self.expect(")")
        self.expect("in")
        body = self.expr()
        return Unfolding(name, args, body, loc)

    def _binary_level(self, ops: tuple[str, ...], sub: Callable[[], Expr]) -> Expr:
        left = sub()
        while self.at(*ops):
            op_tok = self.tok
            self.i += 1
            right = self.attempt(sub)
            if right is None:
                # ``e && acc(..)`` inside a formula: stop before the operator
                self.i -= 1
                if op_tok.text == "&&":
                    return left
                raise self.fail("expression")
            left = Binary(op_tok.text, left, right, left.loc)
        return left

    def or_(self) -> Expr:
        return self._binary_level(("||",), self.and_)

    def and_(self) -> Expr:
        return self._binary_level(("&&",), self.eq)

    def eq(self) -> Expr:
        return self._binary_level(("==", "!="), self.rel)

    def rel(self) -> Expr:
        return self._binary_level(("<", "<=", ">", ">="), self.add)

    def add(self) -> Expr:
        return self._binary_level(("+", "-"), self.mul)

    def mul(self) -> Expr:
        return self._binary_level(("*",), self.unary)

    def unary(self) -> Expr:
        t = self.tok
        if self.at("-", "!"):
            self.i += 1
            operand = self.unary()
            if t.text == "-" and isinstance(operand, IntLit):
                return IntLit(-operand.value, t.loc)
            return Unary(t.text, operand, t.loc)
        return self.postfix()

    def postfix(self) -> Expr:
        e = self.primary()
        while self.at("->", "."):
            self.i += 1
            f = self.ident()
            e = FieldAccess(e, f.text, e.loc)
        return e

    def primary(self) -> Expr:
        t = self.tok
        if t.kind == "int":
            self.i += 1
            return IntLit(int(t.text), t.loc)
        if self.at("true", "false"):
            self.i += 1
            return BoolLit(t.text == "true", t.loc)
        if self.at("NULL", "null"):
            self.i += 1
            return NullLit(t.loc)
        if self.at("unfolding"):
            return self.unfolding()
        if t.kind == "ident":
            if self.peek().text == "(":
                raise self.fail("expression")  # no calls in expressions
            self.i += 1
            return Var(t.text, t.loc)
        if self.accept("("):
            e = self.expr()
            self.expect(")")
            return e
        raise self.fail("expression")


def join_clauses(parts: list[Formula], loc: SourceLoc) -> Formula:
    """Conjoin several spec clauses, hoisting ``?`` to the front."""
    if not parts:
        return BoolExpr(BoolLit(True, loc), loc)
    imprecise = [p for p in parts if isinstance(p, Imprecise)]
    if not imprecise:
        return conjoin(parts)
    rests = []
    for p in parts:
        r = p.rest if isinstance(p, Imprecise) else p
        if r is not None:
            rests.append(r)
    return Imprecise(conjoin(rests) if rests else None, parts[0].loc)


def parse(text: str, filename: str = "<input>") -> SourceProgram:
    p = Parser(text, filename)
    try:
        return p.program()
    except ParseError as e:
        raise (p.err or e) from None


def parse_formula(text: str) -> Formula:
    p = Parser(text)
    f = p.formula()
    if p.tok.kind != "eof":
        raise p.fail("<eof>")
    return f


def parse_expr(text: str) -> Expr:
    p = Parser(text)
    e = p.expr()
    if p.tok.kind != "eof":
        raise p.fail("<eof>")
    return e
