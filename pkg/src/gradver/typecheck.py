"""Name resolution, type checking, and desugaring of parsed programs.

Types are the strings ``"int"``, ``"bool"``, ``"void"`` or a record name
(standing for ``struct R *``). ``NULL`` has the pseudo-type ``"null"``, which
is compatible with every record type. After checking, ``&&``/``||`` in
expressions become ``Ternary`` nodes and every ``Unfolding`` carries the
type of its body.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

from gradver.syntax import (
    Acc, Alloc, And, Assert, Assign, Binary, BoolExpr, BoolLit, Call, Cond, Expr,
    FieldAccess, FieldWrite, Fold, Formula, If, Imprecise, IntLit, MethodDecl,
    NullLit, Param, PredInstance, Return, SourceLoc, SourceProgram,
    Stmt, Ternary, Unary, Unfold, Unfolding, Var, VarDecl, While,
)

RESULT = "result"


class CheckError(Exception):
    def __init__(self, loc: Optional[SourceLoc], message: str):
        self.loc = loc
        self.message = message
        super().__init__(f"{loc}: {message}" if loc else message)


class TypeCheckError(CheckError):
    pass


class ArityError(CheckError):
    pass


class UnknownName(CheckError):
    pass


@dataclass
class TypedProgram:
    program: SourceProgram
    # field name -> (record, field type); field names are unique program-wide
    fields: dict[str, tuple[str, str]]
    # method name -> variable name -> type (params, locals, and ``result``)
    var_types: dict[str, dict[str, str]]
    source: SourceProgram = field(repr=False, default=None)

    def field_type(self, name: str) -> str:
        return self.fields[name][1]

    def record_fields(self, record: str) -> list[tuple[str, str]]:
        r = self.program.record(record)
        return [(f.name, f.type) for f in r.fields] if r else []


def is_ref(t: str) -> bool:
    return t not in ("int", "bool", "void")


def compatible(expected: str, actual: str) -> bool:
    if expected == actual:
        return True
    return actual == "null" and is_ref(expected) and expected != "null"


class _Checker:
    def __init__(self, prog: SourceProgram):
        self.prog = prog
        self.fields: dict[str, tuple[str, str]] = {}

    # -- declarations

    def check_type(self, t: str, loc: Optional[SourceLoc], allow_void: bool = False) -> None:
        if t == "void" and not allow_void:
            raise TypeCheckError(loc, "void is only allowed as a return type")
        if is_ref(t) and self.prog.record(t) is None:
            raise UnknownName(loc, f"unknown record 'struct {t}'")

    def run(self) -> TypedProgram:
        seen: set[str] = set()
        for r in self.prog.records:
            if r.name in seen:
                raise TypeCheckError(r.loc, f"duplicate record '{r.name}'")
            seen.add(r.name)
        for r in self.prog.records:
            for f in r.fields:
                self.check_type(f.type, f.loc)
                if f.name in self.fields:
                    raise TypeCheckError(f.loc, f"field '{f.name}' is declared more than once")
                self.fields[f.name] = (r.name, f.type)
        names: set[str] = set()
        for d in (*self.prog.predicates, *self.prog.methods):
            if d.name in names:
                raise TypeCheckError(d.loc, f"duplicate declaration '{d.name}'")
            names.add(d.name)
        preds = []
        for p in self.prog.predicates:
            env = self.param_env(p.params)
            preds.append(replace(p, body=self.formula(p.body, env, top=True)))
        self.prog = replace(self.prog, predicates=tuple(preds))
        methods, var_types = [], {}
        for m in self.prog.methods:
            m2, env = self.method(m)
            methods.append(m2)
            var_types[m.name] = env
        out = replace(self.prog, methods=tuple(methods))
        return TypedProgram(out, dict(self.fields), var_types)

    def param_env(self, params: tuple[Param, ...]) -> dict[str, str]:
        env: dict[str, str] = {}
        for x in params:
            self.check_type(x.type, x.loc)
            if x.name in env:
                raise TypeCheckError(x.loc, f"duplicate parameter '{x.name}'")
            env[x.name] = x.type
        return env

    def method(self, m: MethodDecl) -> tuple[MethodDecl, dict[str, str]]:
        self.check_type(m.ret, m.loc, allow_void=True)
        env = self.param_env(m.params)
        if RESULT in env:
            raise TypeCheckError(m.loc, "'result' is reserved")
        req = self.formula(m.requires, env, top=True)
        post_env = dict(env)
        if m.ret != "void":
            post_env[RESULT] = m.ret
        ens = self.formula(m.ensures, post_env, top=True)
        self.ret = m.ret
        all_vars = dict(post_env)
        body = self.block(m.body, dict(env), all_vars, last_ok=True)
        if m.ret != "void" and not (m.body and isinstance(m.body[-1], Return)):
            raise TypeCheckError(m.loc, f"method '{m.name}' must end with a return")
        return replace(m, requires=req, ensures=ens, body=body), all_vars

    # -- statements

    def block(self, stmts, env, all_vars, last_ok=False) -> tuple[Stmt, ...]:
        out = []
        for i, s in enumerate(stmts):
            if isinstance(s, Return) and not (last_ok and i == len(stmts) - 1):
                raise TypeCheckError(s.loc, "return must be the final statement of a method")
            out.append(self.stmt(s, env, all_vars))
        return tuple(out)

    def lookup(self, env, name, loc) -> str:
        if name not in env:
            raise UnknownName(loc, f"unknown variable '{name}'")
        return env[name]

    def stmt(self, s: Stmt, env: dict[str, str], all_vars: dict[str, str]) -> Stmt:
        if isinstance(s, VarDecl):
            self.check_type(s.type, s.loc)
            if s.name in all_vars:
                raise TypeCheckError(s.loc, f"variable '{s.name}' is already declared")
            env[s.name] = all_vars[s.name] = s.type
            return s
        if isinstance(s, Assign):
            t = self.lookup(env, s.name, s.loc)
            e, et = self.expr(s.expr, env)
            self.expect(t, et, s.loc)
            return replace(s, expr=e)
        if isinstance(s, FieldWrite):
            lv, lt = self.expr(s.lval, env)
            e, et = self.expr(s.expr, env)
            self.expect(lt, et, s.loc)
            return replace(s, lval=lv, expr=e)
        if isinstance(s, Alloc):
            t = self.lookup(env, s.name, s.loc)
            if self.prog.record(s.record) is None:
                raise UnknownName(s.loc, f"unknown record '{s.record}'")
            self.expect(t, s.record, s.loc)
            return s
        if isinstance(s, If):
            c = self.bool_expr(s.cond, env)
            return replace(s, cond=c, then=self.block(s.then, env, all_vars),
                           else_=self.block(s.else_, env, all_vars))
        if isinstance(s, While):
            c = self.bool_expr(s.cond, env)
            inv = self.formula(s.invariant, env, top=True)
            return replace(s, cond=c, invariant=inv, body=self.block(s.body, env, all_vars))
        if isinstance(s, (Fold, Unfold)):
            args = self.pred_args(s.pred, s.args, env, s.loc)
            return replace(s, args=args)
        if isinstance(s, Assert):
            return replace(s, formula=self.formula(s.formula, env, top=True))
        if isinstance(s, Call):
            callee = self.prog.method(s.method)
            if callee is None:
                raise UnknownName(s.loc, f"unknown method '{s.method}'")
            if len(callee.params) != len(s.args):
                raise ArityError(s.loc, f"'{s.method}' expects {len(callee.params)} arguments, got {len(s.args)}")
            args = []
            for p, a in zip(callee.params, s.args):
                e, t = self.expr(a, env)
                self.expect(p.type, t, a.loc)
                args.append(e)
            if s.target is not None:
                if callee.ret == "void":
                    raise TypeCheckError(s.loc, f"'{s.method}' returns no value")
                self.expect(self.lookup(env, s.target, s.loc), callee.ret, s.loc)
            return replace(s, args=tuple(args))
        if isinstance(s, Return):
            if s.expr is None:
                if self.ret != "void":
                    raise TypeCheckError(s.loc, "missing return value")
                return s
            e, t = self.expr(s.expr, env)
            self.expect(self.ret, t, s.loc)
            return replace(s, expr=e)
        raise TypeCheckError(getattr(s, "loc", None), f"unsupported statement {s!r}")

    def expect(self, expected: str, actual: str, loc) -> None:
        if not compatible(expected, actual):
            raise TypeCheckError(loc, f"expected {_tname(expected)}, found {_tname(actual)}")

    # -- formulas

    def formula(self, f: Formula, env: dict[str, str], top: bool = False) -> Formula:
        if isinstance(f, Imprecise):
            if not top:
                raise TypeCheckError(f.loc, "'?' may only appear as the leading conjunct of a formula")
            return replace(f, rest=None if f.rest is None else self.formula(f.rest, env))
        if isinstance(f, BoolExpr):
            return replace(f, expr=self.bool_expr(f.expr, env))
        if isinstance(f, Acc):
            lv, _ = self.expr(f.lval, env)
            return replace(f, lval=lv)
        if isinstance(f, PredInstance):
            return replace(f, args=self.pred_args(f.name, f.args, env, f.loc))
        if isinstance(f, And):
            return replace(f, left=self.formula(f.left, env), right=self.formula(f.right, env))
        if isinstance(f, Cond):
            return replace(f, cond=self.bool_expr(f.cond, env),
                           then=self.formula(f.then, env, top=True),
                           else_=self.formula(f.else_, env, top=True))
        raise TypeCheckError(None, f"not a formula: {f!r}")

    def pred_args(self, name, args, env, loc) -> tuple[Expr, ...]:
        pd = self.prog.predicate(name)
        if pd is None:
            raise UnknownName(loc, f"unknown predicate '{name}'")
        if len(pd.params) != len(args):
            raise ArityError(loc, f"'{name}' expects {len(pd.params)} arguments, got {len(args)}")
        out = []
        for p, a in zip(pd.params, args):
            e, t = self.expr(a, env)
            self.expect(p.type, t, a.loc or loc)
            out.append(e)
        return tuple(out)

    # -- expressions

    def bool_expr(self, e: Expr, env) -> Expr:
        e2, t = self.expr(e, env)
        self.expect("bool", t, e.loc)
        return e2

    def expr(self, e: Expr, env: dict[str, str]) -> tuple[Expr, str]:
        if isinstance(e, IntLit):
            return e, "int"
        if isinstance(e, BoolLit):
            return e, "bool"
        if isinstance(e, NullLit):
            return e, "null"
        if isinstance(e, Var):
            return e, self.lookup(env, e.name, e.loc)
        if isinstance(e, FieldAccess):
            r, rt = self.expr(e.recv, env)
            if not is_ref(rt) or rt == "null":
                raise TypeCheckError(e.loc, f"field access '->{e.field}' on non-reference type {_tname(rt)}")
            rec = self.prog.record(rt)
            ft = next((f.type for f in rec.fields if f.name == e.field), None)
            if ft is None:
                raise UnknownName(e.loc, f"record '{rt}' has no field '{e.field}'")
            return replace(e, recv=r), ft
        if isinstance(e, Unary):
            x, t = self.expr(e.operand, env)
            want = "int" if e.op == "-" else "bool"
            self.expect(want, t, e.loc)
            return replace(e, operand=x), want
        if isinstance(e, Binary):
            l, lt = self.expr(e.left, env)
            r, rt = self.expr(e.right, env)
            if e.op in ("+", "-", "*"):
                self.expect("int", lt, e.loc)
                self.expect("int", rt, e.loc)
                return replace(e, left=l, right=r), "int"
            if e.op in ("<", "<=", ">", ">="):
                self.expect("int", lt, e.loc)
                self.expect("int", rt, e.loc)
                return replace(e, left=l, right=r), "bool"
            if e.op in ("==", "!="):
                if not (compatible(lt, rt) or compatible(rt, lt)):
                    raise TypeCheckError(e.loc, f"cannot compare {_tname(lt)} with {_tname(rt)}")
                return replace(e, left=l, right=r), "bool"
            self.expect("bool", lt, e.loc)
            self.expect("bool", rt, e.loc)
            # short-circuit operators become the single branching construct
            if e.op == "&&":
                return Ternary(l, r, BoolLit(False, e.loc), e.loc), "bool"
            return Ternary(l, BoolLit(True, e.loc), r, e.loc), "bool"
        if isinstance(e, Ternary):
            c = self.bool_expr(e.cond, env)
            a, at = self.expr(e.then, env)
            b, bt = self.expr(e.else_, env)
            if compatible(at, bt):
                t = at
            elif compatible(bt, at):
                t = bt
            else:
                raise TypeCheckError(e.loc, f"ternary arms differ: {_tname(at)} vs {_tname(bt)}")
            return replace(e, cond=c, then=a, else_=b), t
        if isinstance(e, Unfolding):
            args = self.pred_args(e.pred, e.args, env, e.loc)
            body, t = self.expr(e.body, env)
            return replace(e, args=args, body=body, sort=t), t
        raise TypeCheckError(None, f"not an expression: {e!r}")


def _tname(t: str) -> str:
    return t if t in ("int", "bool", "void", "null") else f"struct {t} *"


def typecheck(prog: SourceProgram) -> TypedProgram:
    tp = _Checker(prog).run()
    tp.source = prog
    return tp
