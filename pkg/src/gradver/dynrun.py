"""Concrete interpreter that enforces a check manifest at run time.

Each activation owns a set of permissions ``(oid, field)``. Accesses outside
that set, null dereferences and specifications that do not hold at points the
verifier claimed they would are *unchecked crashes*: on a statically accepted
program they indicate a verifier bug. Failed manifest checks are the expected
dynamic errors of gradual verification.

Input literals for ``run``::

    42  -7  true  false  null
    [1, 3, 5]             a list of records: first int field holds the value,
                          first field of the record's own type links the nodes
    {data: 1, next: null} a single record, fields may nest
"""

from __future__ import annotations

import ast
import bisect
import re
from dataclasses import dataclass, field
from typing import Any, Optional

from gradver.checkgen import RuntimeCheck
from gradver.parser import parse_expr, parse_formula
from gradver.syntax import (
    Acc, Alloc, And, Assert, Assign, Binary, BoolExpr, BoolLit, Call, Cond, Expr,
    FieldAccess, FieldWrite, Fold, Formula, If, Imprecise, IntLit, MethodDecl,
    NullLit, PredInstance, Return, SourceLoc, Ternary, Unary, Unfold, Unfolding,
    Var, VarDecl, While, is_imprecise,
)
from gradver.typecheck import RESULT, TypedProgram, is_ref

DEFAULT_FUEL = 200_000
_MAX_PRED_DEPTH = 2_000


@dataclass(frozen=True)
class Ref:
    oid: int

    def __repr__(self) -> str:
        return f"#{self.oid}"


@dataclass
class Completed:
    value: Any
    checks_executed: int = 0


@dataclass
class CheckFailed:
    check: RuntimeCheck
    trace: list[str]


@dataclass
class CrashUnchecked:
    description: str
    loc: Optional[SourceLoc] = None


Outcome = Completed | CheckFailed | CrashUnchecked


class RuntimeFault(Exception):
    """Ill-formed run request, or the step budget ran out."""


class _Crash(Exception):
    def __init__(self, description: str, loc: Optional[SourceLoc] = None):
        self.description = description
        self.loc = loc
        super().__init__(description)


class _Fail(Exception):
    def __init__(self, check: RuntimeCheck, trace: list[str]):
        self.check = check
        self.trace = trace


class _EvalError(Exception):
    """Null dereference or missing permission during evaluation."""


@dataclass
class ConcreteHeap:
    objects: dict[int, dict[str, Any]] = field(default_factory=dict)
    records: dict[int, str] = field(default_factory=dict)

    def alloc(self, record: str, fields: dict[str, Any]) -> Ref:
        oid = len(self.objects) + 1
        self.objects[oid] = dict(fields)
        self.records[oid] = record
        return Ref(oid)

    def snapshot(self) -> "ConcreteHeap":
        return ConcreteHeap({k: dict(v) for k, v in self.objects.items()}, dict(self.records))

    def locations(self) -> set[tuple[int, str]]:
        return {(oid, f) for oid, fs in self.objects.items() for f in fs}


# ------------------------------------------------------------------ evaluation


def eval_expr(e: Expr, env: dict, heap: ConcreteHeap, perms: Optional[set] = None) -> Any:
    """Evaluate ``e``; with ``perms`` given, every field read must be permitted."""
    if isinstance(e, IntLit):
        return e.value
    if isinstance(e, BoolLit):
        return e.value
    if isinstance(e, NullLit):
        return None
    if isinstance(e, Var):
        if e.name not in env:
            raise _EvalError(f"unbound {e.name}")
        return env[e.name]
    if isinstance(e, FieldAccess):
        r = eval_expr(e.recv, env, heap, perms)
        if r is None:
            raise _EvalError(f"null dereference reading {e.field}")
        if perms is not None and (r.oid, e.field) not in perms:
            raise _EvalError(f"no permission to read {r!r}.{e.field}")
        return heap.objects[r.oid][e.field]
    if isinstance(e, Unary):
        v = eval_expr(e.operand, env, heap, perms)
        return -v if e.op == "-" else not v
    if isinstance(e, Binary):
        a = eval_expr(e.left, env, heap, perms)
        if e.op == "&&" and not a:
            return False
        if e.op == "||" and a:
            return True
        b = eval_expr(e.right, env, heap, perms)
        return _BINOPS[e.op](a, b)
    if isinstance(e, Ternary):
        c = eval_expr(e.cond, env, heap, perms)
        return eval_expr(e.then if c else e.else_, env, heap, perms)
    if isinstance(e, Unfolding):
        # permission-neutral at run time: the body is read directly
        return eval_expr(e.body, env, heap, None)
    raise TypeError(f"not an expression: {e!r}")


_BINOPS = {
    "+": lambda a, b: a + b, "-": lambda a, b: a - b, "*": lambda a, b: a * b,
    "==": lambda a, b: a == b, "!=": lambda a, b: a != b,
    "<": lambda a, b: a < b, "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b, ">=": lambda a, b: a >= b,
    "&&": lambda a, b: bool(b), "||": lambda a, b: bool(b),
}


def holds(f: Formula, env: dict, heap: ConcreteHeap, perms: set, claims: set,
          program: TypedProgram, depth: int = 0) -> bool:
    """Whether ``f`` holds, claiming each permitted location at most once."""
    if depth > _MAX_PRED_DEPTH:
        return False
    try:
        if isinstance(f, Imprecise):
            return f.rest is None or holds(f.rest, env, heap, perms, claims, program, depth)
        if isinstance(f, BoolExpr):
            return bool(eval_expr(f.expr, env, heap))
        if isinstance(f, Acc):
            r = eval_expr(f.lval.recv, env, heap)
            loc = None if r is None else (r.oid, f.lval.field)
            if loc is None or loc not in perms or loc in claims:
                return False
            claims.add(loc)
            return True
        if isinstance(f, PredInstance):
            pd = program.program.predicate(f.name)
            args = [eval_expr(a, env, heap) for a in f.args]
            inner = {p.name: v for p, v in zip(pd.params, args)}
            return holds(pd.body, inner, heap, perms, claims, program, depth + 1)
        if isinstance(f, And):
            return (holds(f.left, env, heap, perms, claims, program, depth)
                    and holds(f.right, env, heap, perms, claims, program, depth))
        if isinstance(f, Cond):
            c = eval_expr(f.cond, env, heap)
            return holds(f.then if c else f.else_, env, heap, perms, claims, program, depth)
    except _EvalError:
        return False
    raise TypeError(f"not a formula: {f!r}")


def check_predicate_dynamic(program: TypedProgram, heap: ConcreteHeap, perms: set,
                            pred: str, args: list) -> bool:
    pd = program.program.predicate(pred)
    if pd is None:
        raise RuntimeFault(f"unknown predicate {pred}")
    env = {p.name: v for p, v in zip(pd.params, args)}
    return holds(pd.body, env, heap, perms, set(), program)


# ----------------------------------------------------------------- literals


def parse_value(text: str, type_: str, heap: ConcreteHeap, program: TypedProgram) -> Any:
    src = re.sub(r"\bnull\b", "None", text.strip())
    src = re.sub(r"\btrue\b", "True", src)
    src = re.sub(r"\bfalse\b", "False", src)
    src = re.sub(r"([{,]\s*)([A-Za-z_]\w*)\s*:", r'\1"\2":', src)
    try:
        lit = ast.literal_eval(src)
    except (ValueError, SyntaxError) as e:
        raise RuntimeFault(f"bad input literal {text!r}") from e
    return _build(lit, type_, heap, program)


def _build(lit: Any, type_: str, heap: ConcreteHeap, program: TypedProgram) -> Any:
    if lit is None:
        if not is_ref(type_):
            raise RuntimeFault(f"null given for {type_}")
        return None
    if type_ == "bool":
        if not isinstance(lit, bool):
            raise RuntimeFault(f"expected bool, got {lit!r}")
        return lit
    if type_ == "int":
        if isinstance(lit, bool) or not isinstance(lit, int):
            raise RuntimeFault(f"expected int, got {lit!r}")
        return lit
    fields = program.record_fields(type_)
    if not fields:
        raise RuntimeFault(f"unknown record type {type_}")
    if isinstance(lit, dict):
        values = {f: _default(t) for f, t in fields}
        for k, v in lit.items():
            ftype = dict(fields).get(k)
            if ftype is None:
                raise RuntimeFault(f"{type_} has no field {k}")
            values[k] = _build(v, ftype, heap, program)
        return heap.alloc(type_, values)
    if isinstance(lit, list):
        value_field = next((f for f, t in fields if t == "int"), None)
        link_field = next((f for f, t in fields if t == type_), None)
        if value_field is None or link_field is None:
            raise RuntimeFault(f"{type_} is not a list record")
        node = None
        for item in reversed(lit):
            values = {f: _default(t) for f, t in fields}
            values[value_field] = _build(item, "int", heap, program)
            values[link_field] = node
            node = heap.alloc(type_, values)
        return node
    raise RuntimeFault(f"bad literal {lit!r} for {type_}")


def _default(t: str) -> Any:
    return {"int": 0, "bool": False}.get(t)


# ------------------------------------------------------------------ interpreter


def _method_sites(m: MethodDecl) -> list[SourceLoc]:
    sites = [m.requires.loc, m.ensures.loc]

    def walk(stmts):
        for s in stmts:
            sites.append(s.loc)
            if isinstance(s, If):
                walk(s.then)
                walk(s.else_)
            elif isinstance(s, While):
                sites.extend([s.cond.loc, s.end_loc])
                walk(s.body)
            elif isinstance(s, Call):
                sites.append(s.name_loc)
    walk(m.body)
    return sorted({s for s in sites if s is not None})


@dataclass
class _Activation:
    method: MethodDecl
    env: dict
    perms: set
    checks: dict  # site loc -> list of checks
    site_of: dict  # origin loc -> site loc
    snapshots: dict = field(default_factory=dict)  # site loc -> (env, heap)


class Interpreter:
    def __init__(self, program: TypedProgram, manifest: dict[str, list[RuntimeCheck]],
                 fuel: int = DEFAULT_FUEL):
        self.program = program
        self.prog = program.program
        self.manifest = manifest
        self.fuel = fuel
        self.heap = ConcreteHeap()
        self.stack: list[str] = []
        self.checks_executed = 0
        self._plans: dict[str, tuple[dict, dict]] = {}

    # ------------------------------------------------------------ planning

    def _plan(self, m: MethodDecl, extra=()) -> tuple[dict, dict]:
        key = (m.name, bool(extra))
        if key not in self._plans:
            sites = _method_sites(m)
            by_site: dict = {}
            site_of: dict = {}
            for c in self.manifest.get(m.name, []):
                by_site.setdefault(_key(c.loc), []).append(c)
            for c in [*self.manifest.get(m.name, []), *extra]:
                for ctx in c.context:
                    site_of[_key(ctx.origin_loc)] = _enclosing(sites, ctx.origin_loc)
            self._plans[key] = (by_site, site_of)
        return self._plans[key]

    # ---------------------------------------------------------------- sites

    def _site(self, act: _Activation, loc: Optional[SourceLoc], extra=()) -> None:
        if loc is None:
            return
        k = _key(loc)
        if k in act.site_of.values():
            act.snapshots[k] = (dict(act.env), self.heap.snapshot())
        for c in list(extra) + act.checks.get(k, []):
            if self._context_matches(act, c):
                self.checks_executed += 1
                if not self._check_passes(act, c):
                    raise _Fail(c, list(self.stack))

    def _context_matches(self, act: _Activation, c: RuntimeCheck) -> bool:
        for ctx in c.context:
            site = act.site_of.get(_key(ctx.origin_loc)) or _key(ctx.origin_loc)
            snap = act.snapshots.get(site)
            if snap is None:
                return False
            env, heap = snap
            try:
                v = eval_expr(parse_expr(ctx.cond), env, heap)
            except _EvalError:
                return False
            if bool(v) != ctx.expected:
                return False
        return True

    def _check_passes(self, act: _Activation, c: RuntimeCheck) -> bool:
        try:
            if c.kind in ("expr", "nonnull"):
                return bool(eval_expr(parse_expr(c.payload), act.env, self.heap))
            if c.kind in ("acc", "predicate"):
                return holds(parse_formula(c.payload), act.env, self.heap, act.perms, set(), self.program)
        except _EvalError:
            return False
        raise RuntimeFault(f"unknown check kind {c.kind}")

    # ------------------------------------------------------------ execution

    def tick(self) -> None:
        self.fuel -= 1
        if self.fuel < 0:
            raise RuntimeFault("step budget exhausted")

    def call(self, m: MethodDecl, args: list, perms: set, entry_checks=()) -> tuple[Any, set]:
        by_site, site_of = self._plan(m, entry_checks)
        env = {p.name: v for p, v in zip(m.params, args)}
        act = _Activation(m, env, perms, by_site, site_of)
        self.stack.append(m.name)
        self._site(act, m.requires.loc, entry_checks)
        result = self.exec_block(act, m.body)
        if result is not _NO_RETURN:
            act.env[RESULT] = result
        act.env.update(zip([p.name for p in m.params], args))  # entry values
        self._site(act, m.ensures.loc)
        claims: set = set()
        if not holds(m.ensures, act.env, self.heap, act.perms, claims, self.program):
            raise _Crash(f"postcondition of {m.name} does not hold", m.ensures.loc)
        self.stack.pop()
        back = act.perms if is_imprecise(m.ensures) else claims
        return (None if result is _NO_RETURN else result), back

    def exec_block(self, act: _Activation, stmts) -> Any:
        for s in stmts:
            r = self.exec(act, s)
            if r is not _NO_RETURN:
                return r
        return _NO_RETURN

    def eval(self, act: _Activation, e: Expr, loc) -> Any:
        try:
            return eval_expr(e, act.env, self.heap, act.perms)
        except _EvalError as err:
            raise _Crash(str(err), loc) from None

    def require(self, act: _Activation, f: Formula, what: str, loc) -> set:
        claims: set = set()
        if not holds(f, act.env, self.heap, act.perms, claims, self.program):
            raise _Crash(f"{what} does not hold", loc)
        return claims

    def exec(self, act: _Activation, s) -> Any:
        self.tick()
        self._site(act, s.loc)
        if isinstance(s, VarDecl):
            act.env[s.name] = _default(s.type)
        elif isinstance(s, Assign):
            act.env[s.name] = self.eval(act, s.expr, s.loc)
        elif isinstance(s, FieldWrite):
            r = self.eval(act, s.lval.recv, s.loc)
            if r is None:
                raise _Crash(f"null dereference writing {s.lval.field}", s.loc)
            if (r.oid, s.lval.field) not in act.perms:
                raise _Crash(f"no permission to write {r!r}.{s.lval.field}", s.loc)
            self.heap.objects[r.oid][s.lval.field] = self.eval(act, s.expr, s.loc)
        elif isinstance(s, Alloc):
            fields = self.program.record_fields(s.record)
            r = self.heap.alloc(s.record, {f: _default(t) for f, t in fields})
            act.perms |= {(r.oid, f) for f, _ in fields}
            act.env[s.name] = r
        elif isinstance(s, If):
            c = self.eval(act, s.cond, s.loc)
            return self.exec_block(act, s.then if c else s.else_)
        elif isinstance(s, While):
            return self.exec_while(act, s)
        elif isinstance(s, Fold):
            pd = self.prog.predicate(s.pred)
            env = {p.name: self.eval(act, a, s.loc) for p, a in zip(pd.params, s.args)}
            if not holds(pd.body, env, self.heap, act.perms, set(), self.program):
                raise _Crash(f"body of {s.pred} does not hold at fold", s.loc)
        elif isinstance(s, Unfold):
            self.require(act, PredInstance(s.pred, s.args), f"{s.pred} at unfold", s.loc)
        elif isinstance(s, Assert):
            self.require(act, s.formula, "assertion", s.loc)
        elif isinstance(s, Call):
            return self.exec_call(act, s)
        elif isinstance(s, Return):
            return None if s.expr is None else self.eval(act, s.expr, s.loc)
        else:
            raise TypeError(f"not a statement: {s!r}")
        return _NO_RETURN

    def exec_while(self, act: _Activation, s: While) -> Any:
        self.require(act, s.invariant, "loop invariant on entry", s.loc)
        while True:
            self.tick()
            self._site(act, s.cond.loc)
            if not self.eval(act, s.cond, s.cond.loc):
                return _NO_RETURN
            r = self.exec_block(act, s.body)
            if r is not _NO_RETURN:
                return r
            self._site(act, s.end_loc)
            self.require(act, s.invariant, "loop invariant after iteration", s.end_loc)

    def exec_call(self, act: _Activation, s: Call) -> Any:
        callee = self.prog.method(s.method)
        args = [self.eval(act, a, s.loc) for a in s.args]
        env = {p.name: v for p, v in zip(callee.params, args)}
        claims: set = set()
        if not holds(callee.requires, env, self.heap, act.perms, claims, self.program):
            raise _Crash(f"precondition of {callee.name} does not hold", s.loc)
        moved = set(act.perms) if is_imprecise(callee.requires) else claims
        act.perms -= moved
        value, back = self.call(callee, args, moved)
        act.perms |= back
        if s.target is not None:
            act.env[s.target] = value
        self._site(act, s.name_loc)
        return _NO_RETURN


_NO_RETURN = object()


def _key(loc: SourceLoc) -> tuple[int, int]:
    return (loc.line, loc.col)


def _enclosing(sites: list[SourceLoc], loc: SourceLoc) -> tuple[int, int]:
    keys = [_key(s) for s in sites]
    i = bisect.bisect_right(keys, _key(loc)) - 1
    return keys[max(i, 0)]


def run(program: TypedProgram, manifest, entry: str, args: list[str],
        entry_checks: Optional[list[RuntimeCheck]] = None, fuel: int = DEFAULT_FUEL) -> Outcome:
    """Execute ``entry`` on textual ``args`` under ``manifest``.

    ``manifest`` maps method names to checks, or is a list of entries with
    ``name`` and ``checks``. ``entry_checks`` guard the entry method against
    its unverified caller.
    """
    if not isinstance(manifest, dict):
        manifest = {e.name: list(e.checks) for e in manifest}
    m = program.program.method(entry)
    if m is None:
        raise RuntimeFault(f"entry method {entry!r} not found")
    if len(args) != len(m.params):
        raise RuntimeFault(f"{entry} expects {len(m.params)} arguments, got {len(args)}")
    interp = Interpreter(program, manifest, fuel)
    values = [parse_value(a, p.type, interp.heap, program) for a, p in zip(args, m.params)]
    perms = interp.heap.locations()
    env = {p.name: v for p, v in zip(m.params, values)}
    if not is_imprecise(m.requires) and not holds(m.requires, env, interp.heap, perms, set(), program):
        # a precise precondition is the caller's obligation: here, the input's
        raise RuntimeFault(f"input does not satisfy the precondition of {entry}")
    try:
        value, _ = interp.call(m, values, perms, entry_checks or ())
    except _Fail as f:
        return CheckFailed(f.check, f.trace)
    except _Crash as c:
        return CrashUnchecked(c.description, c.loc)
    except RecursionError:
        raise RuntimeFault("recursion too deep") from None
    return Completed(value, interp.checks_executed)
