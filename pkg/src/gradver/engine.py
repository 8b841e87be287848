"""Gradual symbolic execution in continuation-passing style.

Each operation takes a state and a continuation and invokes the continuation
once per surviving branch. Static errors abort the whole method by raising
:class:`StaticError`. Run-time checks are collected on each path in the
state's check collector and gathered when the path finishes.
"""

from __future__ import annotations

import enum
import sys
import threading
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Optional

from gradver import checkgen
from gradver.checkgen import ContextEntry, RuntimeCheck, Untranslatable
from gradver.oracle import BuiltinOracle, Verdict
from gradver.state import (
    BranchFrame, FieldChunk, Origin, PredChunk, SeparationConflict, SymState,
    add_chunk, chunk_matches, field_chunks, heap_union, lookup, remove_chunk, replace_chunk,
    terms_equal,
)
from gradver.syntax import (
    Acc, Alloc, And, Assert, Assign, Binary, BoolExpr, BoolLit, Call, Cond, Expr,
    FieldAccess, FieldWrite, Fold, Formula, If, Imprecise, IntLit, MethodDecl,
    NullLit, PredicateDecl, PredInstance, Return, SourceLoc, Stmt, Ternary, Unary,
    Unfold, Unfolding, Var, VarDecl, While, is_imprecise, show_expr, show_source,
)
from gradver.terms import (
    BOOL, FALSE, INT, NULL, REF, SNAP, TRUE, Lit, SymSupply, Term, bool_lit,
    int_lit, mk_binary, mk_field_snap, mk_ne, mk_neg, mk_not,
)
from gradver.typecheck import RESULT, TypedProgram

DEFAULT_MAX_BRANCH_DEPTH = 64
DEFAULT_UNFOLD_BOUND = 1


class StaticError(Exception):
    def __init__(self, loc: Optional[SourceLoc], message: str):
        self.loc = loc
        self.message = message
        super().__init__(f"{loc}: {message}" if loc else message)


class ScaleUnsupported(ValueError):
    pass


class Strategy(enum.Enum):
    RETENTIVE = "retentive"
    NAIVE = "naive"


@dataclass
class MethodResult:
    name: str
    status: str  # "verified" or "error"
    checks: list[RuntimeCheck] = field(default_factory=list)
    error: Optional[StaticError] = None

    @property
    def verified(self) -> bool:
        return self.status == "verified"


Trace = Callable[[str, dict], None]
K = Callable[..., None]


def sort_of(t: Optional[str]) -> str:
    if t == "int":
        return INT
    if t == "bool":
        return BOOL
    return REF


def default_value(t: str) -> Term:
    return {"int": int_lit(0), "bool": FALSE}.get(t, NULL)


def instantiate_predicate_body(pd: PredicateDecl, args: tuple[Expr, ...], perm: int = 1) -> Formula:
    """Predicate body with parameters simultaneously replaced by ``args``.

    Permission scaling is the identity at full permission; other amounts are
    not supported.
    """
    if perm != 1:
        raise ScaleUnsupported(f"permission amount {perm} is not supported")
    if len(args) != len(pd.params):
        raise ValueError(f"{pd.name} expects {len(pd.params)} arguments")
    sub = {p.name: a for p, a in zip(pd.params, args)}
    return subst_formula(pd.body, sub)


def subst_expr(e: Expr, sub: dict) -> Expr:
    if isinstance(e, Var):
        return sub.get(e.name, e)
    if isinstance(e, FieldAccess):
        return replace(e, recv=subst_expr(e.recv, sub))
    if isinstance(e, Unary):
        return replace(e, operand=subst_expr(e.operand, sub))
    if isinstance(e, Binary):
        return replace(e, left=subst_expr(e.left, sub), right=subst_expr(e.right, sub))
    if isinstance(e, Ternary):
        return replace(e, cond=subst_expr(e.cond, sub), then=subst_expr(e.then, sub),
                       else_=subst_expr(e.else_, sub))
    if isinstance(e, Unfolding):
        return replace(e, args=tuple(subst_expr(a, sub) for a in e.args), body=subst_expr(e.body, sub))
    return e


def subst_formula(f: Formula, sub: dict) -> Formula:
    if isinstance(f, Imprecise):
        return replace(f, rest=None if f.rest is None else subst_formula(f.rest, sub))
    if isinstance(f, BoolExpr):
        return replace(f, expr=subst_expr(f.expr, sub))
    if isinstance(f, Acc):
        return replace(f, lval=subst_expr(f.lval, sub))
    if isinstance(f, PredInstance):
        return replace(f, args=tuple(subst_expr(a, sub) for a in f.args))
    if isinstance(f, And):
        return replace(f, left=subst_formula(f.left, sub), right=subst_formula(f.right, sub))
    if isinstance(f, Cond):
        return replace(f, cond=subst_expr(f.cond, sub), then=subst_formula(f.then, sub),
                       else_=subst_formula(f.else_, sub))
    raise TypeError(f)


def assigned_vars(stmts) -> list[str]:
    out: list[str] = []
    for s in stmts:
        if isinstance(s, (Assign, Alloc)) or (isinstance(s, Call) and s.target):
            name = s.name if not isinstance(s, Call) else s.target
            if name not in out:
                out.append(name)
        elif isinstance(s, VarDecl) and s.name not in out:
            out.append(s.name)
        elif isinstance(s, If):
            out += [v for v in assigned_vars(s.then + s.else_) if v not in out]
        elif isinstance(s, While):
            out += [v for v in assigned_vars(s.body) if v not in out]
    return out


def run_deep(fn: Callable[[], Any]) -> Any:
    """Run ``fn`` on a thread with a large stack; continuations nest deeply."""
    box: dict = {}

    def target():
        try:
            box["value"] = fn()
        except BaseException as e:  # re-raised on the caller's thread
            box["error"] = e

    old = threading.stack_size()
    threading.stack_size(256 * 1024 * 1024)
    try:
        t = threading.Thread(target=target)
        t.start()
    finally:
        threading.stack_size(old)
    t.join()
    if "error" in box:
        raise box["error"]
    return box.get("value")


sys.setrecursionlimit(max(sys.getrecursionlimit(), 200000))


class Verifier:
    """Verifies the methods of a typed program under one strategy."""

    def __init__(self, program: TypedProgram, strategy: Strategy = Strategy.RETENTIVE,
                 oracle=None, *, static_only: bool = False, trace: Optional[Trace] = None,
                 max_branch_depth: int = DEFAULT_MAX_BRANCH_DEPTH,
                 unfold_bound: int = DEFAULT_UNFOLD_BOUND):
        self.tp = program
        self.prog = program.program
        self.strategy = strategy
        self.oracle = oracle or BuiltinOracle()
        self.static_only = static_only
        self.trace = trace
        self.max_branch_depth = max_branch_depth
        self.unfold_bound = unfold_bound
        # position of each acc/predicate conjunct inside its predicate body
        self.snap_index: dict[int, int] = {}
        for pd in self.prog.predicates:
            counter = [0]
            self._index_body(pd.body, counter)

    def _index_body(self, f: Formula, counter: list) -> None:
        if isinstance(f, (Acc, PredInstance)):
            self.snap_index[id(f)] = counter[0]
            counter[0] += 1
        elif isinstance(f, Imprecise) and f.rest is not None:
            self._index_body(f.rest, counter)
        elif isinstance(f, And):
            self._index_body(f.left, counter)
            self._index_body(f.right, counter)
        elif isinstance(f, Cond):
            self._index_body(f.then, counter)
            self._index_body(f.else_, counter)

    def verify_method(self, name: str) -> MethodResult:
        m = self.prog.method(name)
        if m is None:
            raise KeyError(name)
        return run_deep(lambda: _MethodRun(self, m).run())

    def verify_all(self) -> list[MethodResult]:
        return [self.verify_method(m.name) for m in self.prog.methods]

    def entry_checks(self, name: str) -> list[RuntimeCheck]:
        """Checks establishing ``name``'s precondition from an unverified caller."""
        m = self.prog.method(name)
        if not is_imprecise(m.requires):
            return []  # inputs must satisfy a precise precondition outright
        return run_deep(lambda: _MethodRun(self, m).entry_checks())


class _MethodRun:
    def __init__(self, v: Verifier, method: MethodDecl):
        self.v = v
        self.m = method
        self.oracle = v.oracle
        self.supply = SymSupply()
        self.collected: list[RuntimeCheck] = []

    # ------------------------------------------------------------- plumbing

    def fresh(self, sort: str, hint: str = "") -> Term:
        return self.supply.fresh(sort, hint)

    def emit_trace(self, rule: str, **data) -> None:
        if self.v.trace is not None:
            self.v.trace(rule, data)

    def gradual(self, s: SymState) -> bool:
        return s.imprecise and not self.v.static_only

    def at_site(self, s: SymState, loc: Optional[SourceLoc]) -> SymState:
        return replace(s, site=loc, site_chunks=())

    def finish(self, s: SymState) -> None:
        self.collected.extend(s.R.checks)

    def entails(self, s: SymState, t: Term) -> Verdict:
        if t == TRUE:
            return Verdict.VALID
        if t == FALSE:
            return Verdict.INVALID
        return self.oracle.entails(s.pc, t)

    def src(self, s: SymState, t: Term) -> str:
        try:
            return checkgen.translate_term(s, t)
        except Untranslatable as e:
            raise StaticError(s.site, f"cannot frame check dynamically: no source expression for {e.term!r}")

    def emit(self, s: SymState, kind: str, payload: str) -> SymState:
        ctx = []
        for fr in s.R.branch_context:
            if fr.cond_src is None:
                raise StaticError(s.site, f"cannot frame check dynamically: branch condition {fr.cond!r} "
                                          "has no source expression")
            ctx.append(ContextEntry(fr.cond_src, fr.origin_loc, fr.taken))
        check = RuntimeCheck(s.site, kind, payload, tuple(ctx))
        self.emit_trace("check", check=check, state=s)
        return replace(s, R=replace(s.R, checks=s.R.checks + (check,)))

    def param_store(self, params, values) -> dict:
        return {p.name: t for p, t in zip(params, values)}

    def set_origin(self, s: SymState, node, inst, loc) -> tuple[SymState, Optional[Origin]]:
        prev = s.R.origin
        if prev is None:
            s = s.with_origin(Origin(s.summary(), node, tuple(inst), loc))
        self.emit_trace("origin.enter", before=prev, after=s.R.origin, node=node)
        return s, prev

    def restore_origin(self, s: SymState, prev: Optional[Origin], node) -> SymState:
        self.emit_trace("origin.exit", restored=prev, node=node)
        return s.with_origin(prev)

    # ------------------------------------------------------------- branching

    def branch(self, s: SymState, c: Term, loc: Optional[SourceLoc], kt: K, kf: K) -> None:
        v = self.entails(s, c)
        if v is Verdict.VALID:
            return kt(s)
        if v is Verdict.INVALID:
            return kf(s)
        if len(s.R.branch_context) >= self.v.max_branch_depth:
            raise StaticError(loc, "path budget exhausted")
        origin_loc = s.R.origin.loc if s.R.origin is not None else loc
        cond_src = checkgen.translate_or_none(s, c)
        self.emit_trace("branch", cond=c, origin_loc=origin_loc, state=s)
        for taken, kk in ((True, kt), (False, kf)):
            frame = BranchFrame(c, cond_src, origin_loc, taken)
            s2 = s.assume(c if taken else mk_not(c))
            s2 = replace(s2, R=replace(s2.R, branch_context=s2.R.branch_context + (frame,)))
            kk(s2)

    def prunes(self, s: SymState, t: Term) -> bool:
        return self.entails(s, t) is Verdict.INVALID

    # ----------------------------------------------------------------- eval

    def eval(self, s: SymState, e: Expr, k: K) -> None:
        if isinstance(e, IntLit):
            return k(s, int_lit(e.value))
        if isinstance(e, BoolLit):
            return k(s, bool_lit(e.value))
        if isinstance(e, NullLit):
            return k(s, NULL)
        if isinstance(e, Var):
            return k(s, s.store[e.name])
        if isinstance(e, FieldAccess):
            def got_recv(s1, r):
                if not self.gradual(s1) and lookup(s1.h, ("field", r, e.field), s1.pc, self.oracle) is None:
                    raise StaticError(e.loc or s1.site, f"insufficient permission to access {show_expr(e)}")
                s2 = self.require_nonnull(s1, r, e.recv)
                s3, snap = self.read_field(s2, r, e)
                return k(s3, snap)
            return self.eval(s, e.recv, got_recv)
        if isinstance(e, Unary):
            return self.eval(s, e.operand, lambda s1, t: k(s1, mk_neg(t) if e.op == "-" else mk_not(t)))
        if isinstance(e, Binary):
            return self.eval(s, e.left, lambda s1, a: self.eval(
                s1, e.right, lambda s2, b: k(s2, mk_binary(e.op, a, b))))
        if isinstance(e, Ternary):
            return self.eval(s, e.cond, lambda s1, c: self.branch(
                s1, c, e.loc, lambda st: self.eval(st, e.then, k), lambda sf: self.eval(sf, e.else_, k)))
        if isinstance(e, Unfolding):
            return self.eval_unfolding(s, e, k)
        raise TypeError(f"not an expression: {e!r}")

    def eval_list(self, s: SymState, es, k: K, acc: tuple = ()) -> None:
        if not es:
            return k(s, acc)
        return self.eval(s, es[0], lambda s1, t: self.eval_list(s1, es[1:], k, acc + (t,)))

    def require_nonnull(self, s: SymState, r: Term, recv: Expr) -> SymState:
        v = self.entails(s, mk_ne(r, NULL))
        if v is Verdict.VALID:
            return s
        if v is Verdict.INVALID:
            raise StaticError(recv.loc or s.site, f"null dereference of {show_expr(recv)}")
        if not self.gradual(s):
            raise StaticError(recv.loc or s.site, f"possible null dereference of {show_expr(recv)}")
        s = self.emit(s, "nonnull", f"{self.src(s, r)} != NULL")
        return s.assume(mk_ne(r, NULL))

    def read_field(self, s: SymState, r: Term, e: FieldAccess) -> tuple[SymState, Term]:
        key = ("field", r, e.field)
        c = lookup(s.h, key, s.pc, self.oracle) or lookup(s.hopt, key, s.pc, self.oracle)
        if c is not None:
            return s, c.snap
        if not self.gradual(s):
            raise StaticError(e.loc or s.site, f"insufficient permission to access {show_expr(e)}")
        snap = self.fresh(sort_of(self.v.tp.field_type(e.field)), e.field)
        s, _ = self.assume_optimistic_field(s, r, e.field, snap, ())
        return s, snap

    def chunk_src(self, s: SymState, c) -> str:
        if isinstance(c, FieldChunk):
            return f"acc({self.src(s, c.recv)}->{c.field})"
        return f"{c.pred}({', '.join(self.src(s, t) for t in c.args)})"

    def held(self, s: SymState, work=(), claimed=()) -> tuple:
        """Every chunk an optimistic permission must be provably separate from.

        Optimistic chunks are not included: they are dropped instead, see
        ``forget_optimistic``.
        """
        return heap_union(s.h, work, claimed)

    def forget_optimistic(self, s: SymState, claimed=(), preds_only: bool = False) -> SymState:
        """Drop h? chunks a new optimistic permission might overlap."""
        keep = tuple(c for c in s.hopt if c in claimed or (preds_only and not isinstance(c, PredChunk)))
        return replace(s, hopt=keep)

    def assume_optimistic_field(self, s: SymState, r: Term, name: str, snap: Term,
                                claimed: tuple, work=()) -> tuple[SymState, FieldChunk]:
        """Optimistically assume ``acc(r.name)``, separated from every held chunk.

        Field chunks are separated by disequalities; held predicate instances
        are claimed together with the new permission in one check.
        """
        rsrc = self.src(s, r)
        preds = [c for c in self.held(s, work, claimed) if isinstance(c, PredChunk)]
        payload = " && ".join([f"acc({rsrc}->{name})"] + [self.chunk_src(s, c) for c in preds])
        s = self.emit(s, "acc", payload)
        s = self.forget_optimistic(s, claimed, preds_only=True)
        s = s.assume(mk_ne(r, NULL))
        others = field_chunks(heap_union(s.h, work), name) + [
            c for c in claimed if isinstance(c, FieldChunk) and c.field == name]
        for c in others:
            v = terms_equal(c.recv, r, s.pc, self.oracle)
            if v is Verdict.VALID:
                raise StaticError(s.site, f"permission to {rsrc}->{name} is required twice")
            if v is Verdict.UNKNOWN:
                s = self.emit(s, "expr", f"{rsrc} != {self.src(s, c.recv)}")
                s = s.assume(mk_ne(r, c.recv))
        chunk = FieldChunk(r, name, snap)
        return replace(s, hopt=s.hopt + (chunk,), site_chunks=s.site_chunks + (chunk,)), chunk

    # ------------------------------------------------------------- unfolding

    def eval_unfolding(self, s1: SymState, e: Unfolding, k: K) -> None:
        pd = self.v.prog.predicate(e.pred)
        if s1.depth_of(e.pred) >= self.v.unfold_bound:
            # not explicit: the value is an application of a fresh function to
            # the quantified variables, which are always empty here
            value = self.fresh(sort_of(e.sort), "recunf")
            self.emit_trace("evalUnfolding.recunf", node=e, value=value)
            return k(s1, value)

        def after_args(s2: SymState, targs: tuple) -> None:
            body = pd.body  # scale at full permission is the identity

            def after_consume(s3: SymState, h3, snap: Term, _chunk, _source) -> None:
                s3 = replace(s3, h=h3)
                origin3 = s3.R.origin
                if origin3 is None:
                    r_new = s3.with_origin(Origin(s3.summary(), e, targs, e.loc))
                else:
                    r_new = s3
                self.emit_trace("origin.enter", before=origin3, after=r_new.R.origin, node=e)
                s3p = replace(r_new, store=self.param_store(pd.params, targs))
                s3p = s3p.with_depth(e.pred, s1.depth_of(e.pred) + 1)

                def after_produce(s4: SymState) -> None:
                    s4 = replace(s4, store=s1.store, unfold_depth=s1.unfold_depth).with_origin(origin3)
                    self.emit_trace("origin.exit", restored=origin3, node=e)

                    def after_body(s5: SymState, value: Term) -> None:
                        out = self.restore_after_unfolding(s2, s5, pd, targs, snap)
                        self.emit_trace("evalUnfolding", node=e, sigma2=s2, sigma5=s5, out=out,
                                        body_precise=not is_imprecise(body), strategy=self.v.strategy,
                                        pred_chunk=PredChunk(pd.name, targs, snap))
                        return k(out, value)

                    return self.eval(s4, e.body, after_body)

                return self.produce(s3p, body, snap, after_produce)

            return self.consume_pred(s2, s2.h, pd.name, targs, e.loc, after_consume)

        return self.eval_list(s1, e.args, after_args)

    def restore_after_unfolding(self, s2: SymState, s5: SymState, pd: PredicateDecl,
                                targs: tuple, snap: Term) -> SymState:
        body_precise = not is_imprecise(pd.body)
        if self.v.strategy is Strategy.NAIVE:
            hopt = s2.hopt
        else:
            base = heap_union(s2.hopt, s5.hopt) if body_precise else s2.hopt
            key = ("pred", pd.name, targs)
            if lookup(base, key, s5.pc, self.oracle) is None:
                base = base + (PredChunk(pd.name, targs, snap),)
            hopt = base
        imprecise = s5.imprecise if body_precise else s2.imprecise
        return replace(s5, h=s2.h, hopt=hopt, imprecise=imprecise)

    def consume_pred(self, s: SymState, work, name: str, targs: tuple, loc, k: K,
                     claimed: tuple = (), defer: bool = False) -> None:
        """Consume ``name(targs)``; continue with (state, work, snapshot, chunk, source).

        ``source`` is "h", "h?" or "check". A chunk taken from h? leaves it
        immediately unless ``defer`` is set, in which case the caller removes
        it once evaluation of the whole formula is over.
        """
        key = ("pred", name, targs)
        c = lookup(work, key, s.pc, self.oracle)
        if c is not None:
            # an optimistic duplicate of a transferred instance must not outlive it
            s = replace(s, hopt=tuple(x for x in s.hopt if not (
                isinstance(x, PredChunk) and chunk_matches(x, key, s.pc, self.oracle) is Verdict.VALID)))
            return k(s, remove_chunk(work, c), c.snap, c, "h")
        c = lookup(s.hopt, key, s.pc, self.oracle)
        if c is not None and c not in claimed:
            if not defer:
                s = replace(s, hopt=remove_chunk(s.hopt, c))
            return k(s, work, c.snap, c, "h?")
        args = ", ".join(self.src_or_text(s, t) for t in targs)
        if lookup(s.h, key, s.pc, self.oracle) is not None or c is not None:
            raise StaticError(loc or s.site, f"predicate {name}({args}) is required twice")
        if not self.gradual(s):
            raise StaticError(loc or s.site, f"insufficient permission for predicate {name}({args})")
        # the instance must be separate from everything else held, so that
        # later writes and transfers of those chunks leave it intact
        parts = [f"{name}({', '.join(self.src(s, t) for t in targs)})"]
        parts += [self.chunk_src(s, x) for x in self.held(s, work, claimed)]
        s = self.emit(s, "predicate", " && ".join(parts))
        s = self.forget_optimistic(s, claimed)
        snap = self.fresh(SNAP, name)
        return k(s, work, snap, PredChunk(name, targs, snap), "check")

    def src_or_text(self, s: SymState, t: Term) -> str:
        return checkgen.translate_or_none(s, t) or repr(t)

    # --------------------------------------------------------------- produce

    def produce(self, s: SymState, f: Formula, snap: Optional[Term], k: K) -> None:
        if isinstance(f, Imprecise):
            s = replace(s, imprecise=True)
            if f.rest is None:
                return k(s)
            return self.produce(s, f.rest, snap, k)
        if isinstance(f, BoolExpr):
            def got(s1, t):
                if self.prunes(s1, t):
                    return self.finish(s1)  # checks already passed on this path still run
                return k(s1.assume(t))
            return self.eval(s, f.expr, got)
        if isinstance(f, Acc):
            def got_recv(s1, r):
                if self.prunes(s1, mk_ne(r, NULL)):
                    return self.finish(s1)  # acc(null.f) is false
                s1 = s1.assume(mk_ne(r, NULL))
                ftype = sort_of(self.v.tp.field_type(f.lval.field))
                value = (mk_field_snap(snap, self.v_index(f), ftype) if snap is not None
                         else self.fresh(ftype, f.lval.field))
                return k(self.produce_field_chunk(s1, r, f.lval.field, value, f.loc))
            return self.eval(s, f.lval.recv, got_recv)
        if isinstance(f, PredInstance):
            def got_args(s1, targs):
                value = mk_field_snap(snap, self.v_index(f), SNAP) if snap is not None else self.fresh(SNAP, f.name)
                return k(self.add_pred(s1, PredChunk(f.name, targs, value)))
            return self.eval_list(s, f.args, got_args)
        if isinstance(f, And):
            return self.produce(s, f.left, snap, lambda s1: self.produce(s1, f.right, snap, k))
        if isinstance(f, Cond):
            return self.eval(s, f.cond, lambda s1, c: self.branch(
                s1, c, f.cond.loc or f.loc,
                lambda st: self.produce(st, f.then, snap, k),
                lambda sf: self.produce(sf, f.else_, snap, k)))
        raise TypeError(f"not a formula: {f!r}")

    def add_pred(self, s: SymState, chunk: PredChunk) -> SymState:
        key = ("pred", chunk.pred, chunk.args)
        hopt = tuple(x for x in s.hopt if not (
            isinstance(x, PredChunk) and chunk_matches(x, key, s.pc, self.oracle) is Verdict.VALID))
        return replace(s, h=s.h + (chunk,), hopt=hopt)

    def v_index(self, f) -> int:
        return self.v.snap_index.get(id(f), 0)

    def produce_field_chunk(self, s: SymState, r: Term, name: str, value: Term, loc,
                            fresh: bool = False) -> SymState:
        chunk = FieldChunk(r, name, value)
        try:
            h = add_chunk(s.h, chunk, s.pc, self.oracle)
        except SeparationConflict:
            raise StaticError(loc or s.site, f"separation conflict: permission to ->{name} is held twice")
        for c in field_chunks(s.h, name):
            s = s.assume(mk_ne(c.recv, r))
        # optimistic chunks that may alias the new one are no longer reliable
        # optimistic predicate instances were checked apart from h only, so a
        # new location of unknown provenance may lie inside them
        hopt = tuple(c for c in s.hopt if not (
            (isinstance(c, PredChunk) and not fresh)
            or (isinstance(c, FieldChunk) and c.field == name
                and terms_equal(c.recv, r, s.pc, self.oracle) is not Verdict.INVALID)))
        return replace(s, h=h, hopt=hopt, site_chunks=s.site_chunks + (chunk,))

    # --------------------------------------------------------------- consume

    def consume(self, s: SymState, f: Formula, k: K) -> None:
        """Consume ``f``; expressions are evaluated in the heap before consumption."""
        def done(s1, work, claimed):
            # permissions taken from h? are transferred along with the formula,
            # and so is any optimistic chunk that may alias one of them
            def kept(c) -> bool:
                if c in claimed:
                    return False
                if not isinstance(c, FieldChunk):
                    return True
                return all(terms_equal(c.recv, x.recv, s1.pc, self.oracle) is Verdict.INVALID
                           for x in claimed if isinstance(x, FieldChunk) and x.field == c.field)
            return k(replace(s1, h=work, hopt=tuple(c for c in s1.hopt if kept(c))))
        return self._consume(s, f, s.h, (), done)

    def _consume(self, s: SymState, f: Formula, work, claimed: tuple, k: K) -> None:
        if isinstance(f, Imprecise):
            if f.rest is None:
                return k(s, work, claimed)
            return self._consume(s, f.rest, work, claimed, k)
        if isinstance(f, BoolExpr):
            depth = len(s.R.branch_context)

            def got(s1, t):
                v = self.entails(s1, t)
                if v is Verdict.VALID:
                    return k(s1, work, claimed)
                if v is Verdict.INVALID and self.gradual(s1) and len(s1.R.branch_context) > depth:
                    # false only on a path chosen while evaluating the expression:
                    # the path's own conditions decide at run time
                    return self.finish(self.emit(s1, "expr", "false"))
                if v is Verdict.INVALID:
                    raise StaticError(f.loc or s1.site, f"assertion {show_source(f.expr)} does not hold")
                if not self.gradual(s1):
                    raise StaticError(f.loc or s1.site, f"assertion {show_source(f.expr)} might not hold")
                s1 = self.emit(s1, "expr", self.src(s1, t))
                return k(s1.assume(t), work, claimed)
            return self.eval(s, f.expr, got)
        if isinstance(f, Acc):
            name = f.lval.field

            def got_recv(s1, r):
                key = ("field", r, name)
                c = lookup(work, key, s1.pc, self.oracle)
                if c is not None:
                    return k(s1, remove_chunk(work, c), claimed)
                c = lookup(s1.hopt, key, s1.pc, self.oracle)
                if c is not None and c not in claimed:
                    s1 = self.separate_claim(s1, c, claimed)
                    return k(s1, work, claimed + (c,))
                if c is not None or lookup(s1.h, key, s1.pc, self.oracle) is not None:
                    raise StaticError(f.loc or s1.site, f"permission to {show_expr(f.lval)} is required twice")
                if not self.gradual(s1):
                    raise StaticError(f.loc or s1.site, f"insufficient permission for {show_expr(f.lval)}")
                s1, chunk = self.assume_optimistic_field(
                    s1, r, name, self.fresh(sort_of(self.v.tp.field_type(name)), name), claimed, work)
                return k(s1, work, claimed + (chunk,))
            return self.eval(s, f.lval.recv, got_recv)
        if isinstance(f, PredInstance):
            def got_args(s1, targs):
                def after(s2, w2, _snap, chunk, source):
                    if source == "h":
                        return k(s2, w2, claimed)
                    if source == "check":
                        s2 = replace(s2, hopt=s2.hopt + (chunk,))  # readable by later unfoldings
                    return k(s2, w2, claimed + (chunk,))
                return self.consume_pred(s1, work, f.name, targs, f.loc, after, claimed, defer=True)
            return self.eval_list(s, f.args, got_args)
        if isinstance(f, And):
            return self._consume(s, f.left, work, claimed,
                                 lambda s1, w1, c1: self._consume(s1, f.right, w1, c1, k))
        if isinstance(f, Cond):
            return self.eval(s, f.cond, lambda s1, c: self.branch(
                s1, c, f.cond.loc or f.loc,
                lambda st: self._consume(st, f.then, work, claimed, k),
                lambda sf: self._consume(sf, f.else_, work, claimed, k)))
        raise TypeError(f"not a formula: {f!r}")

    def separate_claim(self, s: SymState, c: FieldChunk, claimed: tuple) -> SymState:
        for other in claimed:
            if not isinstance(other, FieldChunk) or other.field != c.field:
                continue
            v = terms_equal(other.recv, c.recv, s.pc, self.oracle)
            if v is Verdict.VALID:
                raise StaticError(s.site, f"permission to ->{c.field} is required twice")
            if v is Verdict.UNKNOWN:
                s = self.emit(s, "expr", f"{self.src(s, c.recv)} != {self.src(s, other.recv)}")
                s = s.assume(mk_ne(c.recv, other.recv))
        return s

    # ------------------------------------------------------------------ exec

    def exec_block(self, s: SymState, stmts, k: K) -> None:
        if not stmts:
            return k(s)
        return self.exec(s, stmts[0], lambda s1: self.exec_block(s1, stmts[1:], k))

    def exec(self, s: SymState, st: Stmt, k: K) -> None:
        s = self.at_site(s, st.loc)
        if isinstance(st, VarDecl):
            return k(s.bind(st.name, default_value(st.type)))
        if isinstance(st, Assign):
            return self.eval(s, st.expr, lambda s1, t: k(s1.bind(st.name, t)))
        if isinstance(st, FieldWrite):
            return self.exec_field_write(s, st, k)
        if isinstance(st, Alloc):
            return k(self.exec_alloc(s, st))
        if isinstance(st, If):
            return self.eval(s, st.cond, lambda s1, c: self.branch(
                s1, c, st.cond.loc,
                lambda st_: self.exec_block(st_, st.then, k),
                lambda sf: self.exec_block(sf, st.else_, k)))
        if isinstance(st, While):
            return self.exec_while(s, st, k)
        if isinstance(st, Fold):
            return self.exec_fold(s, st, k)
        if isinstance(st, Unfold):
            return self.exec_unfold(s, st, k)
        if isinstance(st, Assert):
            # heap-preserving: check the formula, keep the heap
            return self._consume(s, st.formula, s.h, (), lambda s1, _w, _c: k(s1))
        if isinstance(st, Call):
            return self.exec_call(s, st, k)
        if isinstance(st, Return):
            if st.expr is None:
                return k(s)
            return self.eval(s, st.expr, lambda s1, t: k(s1.bind(RESULT, t)))
        raise TypeError(f"not a statement: {st!r}")

    def exec_field_write(self, s: SymState, st: FieldWrite, k: K) -> None:
        name = st.lval.field

        def got_value(s2, r, value):
            key = ("field", r, name)
            c = lookup(s2.h, key, s2.pc, self.oracle)
            if c is not None:
                new = FieldChunk(c.recv, name, value)
                s3 = replace(s2, h=replace_chunk(s2.h, c, new))
                return k(self.after_write(s3, r, name, via_hopt=False))
            c = lookup(s2.hopt, key, s2.pc, self.oracle)
            if c is None:
                if not self.gradual(s2):
                    raise StaticError(st.loc, f"insufficient permission to write {show_expr(st.lval)}")
                s2, c = self.assume_optimistic_field(s2, r, name, value, ())
            new = FieldChunk(c.recv, name, value)
            s3 = replace(s2, hopt=replace_chunk(s2.hopt, c, new))
            return k(self.after_write(s3, r, name, via_hopt=True, keep=new))

        def got_recv(s1, r):
            s1 = self.require_nonnull(s1, r, st.lval.recv)
            return self.eval(s1, st.expr, lambda s2, value: got_value(s2, r, value))

        return self.eval(s, st.lval.recv, got_recv)

    def after_write(self, s: SymState, r: Term, name: str, via_hopt: bool, keep=None) -> SymState:
        """Forget optimistic knowledge a write to ``r.name`` may invalidate."""
        hopt = []
        for c in s.hopt:
            if isinstance(c, PredChunk) and via_hopt:
                continue  # the location may lie in the predicate's footprint
            if isinstance(c, PredChunk):
                hopt.append(c)  # optimistic instances are apart from h
                continue
            if (c is not keep and c != keep and c.field == name
                    and terms_equal(c.recv, r, s.pc, self.oracle) is not Verdict.INVALID):
                continue
            hopt.append(c)
        h = s.h
        if via_hopt:
            # a write through an optimistic permission may alter held predicates
            h = tuple(PredChunk(c.pred, c.args, self.fresh(SNAP, c.pred)) if isinstance(c, PredChunk) else c
                      for c in h)
        return replace(s, h=h, hopt=tuple(hopt))

    def exec_alloc(self, s: SymState, st: Alloc) -> SymState:
        r = self.fresh(REF, st.name)
        known = {t for t in s.frame.values() if t.sort == REF}
        for c in (*s.h, *s.hopt):
            if isinstance(c, FieldChunk):
                known.add(c.recv)
                if c.snap.sort == REF:
                    known.add(c.snap)
            else:
                known.update(a for a in c.args if a.sort == REF)
        known.discard(NULL)
        s = s.assume(mk_ne(r, NULL))
        for t in sorted(known, key=repr):
            if isinstance(t, Lit):
                continue
            s = s.assume(mk_ne(r, t))
        for fname, ftype in self.v.tp.record_fields(st.record):
            s = self.produce_field_chunk(s, r, fname, default_value(ftype), st.loc, fresh=True)
        return s.bind(st.name, r)

    def exec_fold(self, s: SymState, st: Fold, k: K) -> None:
        pd = self.v.prog.predicate(st.pred)

        def got_args(s1, targs):
            s1, prev = self.set_origin(s1, st, targs, st.loc)
            s1p = replace(s1, store=self.param_store(pd.params, targs))

            def after(s2):
                s3 = self.restore_origin(replace(s2, store=s1.store), prev, st)
                return k(self.add_pred(s3, PredChunk(pd.name, targs, self.fresh(SNAP, pd.name))))
            return self.consume(s1p, pd.body, after)

        return self.eval_list(s, st.args, got_args)

    def exec_unfold(self, s: SymState, st: Unfold, k: K) -> None:
        pd = self.v.prog.predicate(st.pred)

        def got_args(s1, targs):
            s1, prev = self.set_origin(s1, st, targs, st.loc)

            def after_consume(s2, h2, snap, _chunk, _source):
                s2p = replace(s2, h=h2, store=self.param_store(pd.params, targs))

                def after(s3):
                    return k(self.restore_origin(replace(s3, store=s1.store), prev, st))
                return self.produce(s2p, pd.body, snap, after)

            return self.consume_pred(s1, s1.h, pd.name, targs, st.loc, after_consume)

        return self.eval_list(s, st.args, got_args)

    def exec_call(self, s: SymState, st: Call, k: K) -> None:
        callee = self.v.prog.method(st.method)

        def got_args(s1, targs):
            s1o, prev = self.set_origin(s1, st, targs, st.loc)
            s1p = replace(s1o, store=self.param_store(callee.params, targs))

            def after_pre(s2):
                if is_imprecise(callee.requires):
                    # unknown callee footprint: nothing held survives the call
                    s2 = replace(s2, h=(), hopt=())
                else:
                    s2 = replace(s2, hopt=())
                s2 = self.restore_origin(replace(s2, store=s1.store), prev, st)
                ret = self.fresh(sort_of(callee.ret), "ret") if callee.ret != "void" else None
                s3 = self.at_site(s2, st.name_loc)
                if st.target is not None:
                    s3 = s3.bind(st.target, ret)
                post_store = self.param_store(callee.params, targs)
                if ret is not None:
                    post_store[RESULT] = ret
                s3o, prev2 = self.set_origin(s3, st, targs, st.name_loc)
                s4 = replace(s3o, store=post_store)

                def after_post(s5):
                    return k(self.restore_origin(replace(s5, store=s3.store), prev2, st))
                return self.produce(s4, callee.ensures, None, after_post)

            return self.consume(s1p, callee.requires, after_pre)

        return self.eval_list(s, st.args, got_args)

    def exec_while(self, s: SymState, st: While, k: K) -> None:
        inv = st.invariant
        inv_imprecise = is_imprecise(inv)
        havoc_vars = assigned_vars(st.body)
        var_types = self.v.tp.var_types[self.m.name]
        head = st.cond.loc

        def havoc(x: SymState) -> SymState:
            for name in havoc_vars:
                x = x.bind(name, self.fresh(sort_of(var_types[name]), name))
            return x

        def with_origin_at(x: SymState, loc, fn, k2):
            x, prev = self.set_origin(x, st, (), loc)
            return fn(x, lambda y: k2(self.restore_origin(y, prev, st)))

        def after_entry(sa: SymState) -> None:
            # body: a fresh heap holding just the invariant
            sb = havoc(replace(sa, h=(), hopt=(), imprecise=inv_imprecise))
            sb = self.at_site(sb, head)

            def body_inv(x):
                def run_body(y):
                    y = replace(y, site_chunks=())
                    return self.eval(y, st.cond, lambda y1, c: self.branch(
                        y1, c, st.cond.loc,
                        lambda yt: self.exec_block(yt, st.body, end_of_body),
                        lambda yf: None))
                return with_origin_at(x, head, lambda z, kk: self.produce(z, inv, None, kk), run_body)

            def end_of_body(y):
                y = self.at_site(y, st.end_loc)
                return with_origin_at(y, st.end_loc, lambda z, kk: self.consume(z, inv, kk), self.finish)

            body_inv(sb)

            # exit: the untouched frame plus the invariant and the negated condition
            se = havoc(replace(sa, h=() if inv_imprecise else sa.h, hopt=(),
                               imprecise=sa.imprecise or inv_imprecise))
            se = self.at_site(se, head)

            def after_exit_inv(x):
                return self.eval(x, st.cond, lambda x1, c: self.branch(
                    x1, c, st.cond.loc, lambda xt: None, lambda xf: k(self.at_site(xf, head))))
            with_origin_at(se, head, lambda z, kk: self.produce(z, inv, None, kk), after_exit_inv)

        with_origin_at(s, st.loc, lambda z, kk: self.consume(z, inv, kk), after_entry)

    # ------------------------------------------------------------- methods

    def initial_state(self) -> SymState:
        store = {p.name: self.fresh(sort_of(p.type), p.name) for p in self.m.params}
        return SymState(store=dict(store), frame=dict(store), site=self.m.requires.loc)

    def run(self) -> MethodResult:
        m = self.m

        s0 = self.initial_state()
        entry = {p.name: s0.store[p.name] for p in m.params}

        def at_end(s: SymState) -> None:
            # the postcondition speaks about the parameters' entry values,
            # which is what callers substitute for them
            s = self.at_site(s, m.ensures.loc)
            frame = {**s.frame, **entry}
            s = replace(s, store=dict(frame), frame=frame)
            self.consume(s, m.ensures, self.finish)

        def after_pre(s: SymState) -> None:
            self.exec_block(s, m.body, at_end)

        try:
            self.produce(s0, m.requires, None, after_pre)
        except StaticError as e:
            self.emit_trace("error", error=e)
            return MethodResult(m.name, "error", checkgen.dedupe(self.collected), e)
        return MethodResult(m.name, "verified", checkgen.dedupe(self.collected))

    def entry_checks(self) -> list[RuntimeCheck]:
        s = replace(self.initial_state(), imprecise=True)
        try:
            self.consume(s, self.m.requires, self.finish)
        except StaticError:
            # no caller can establish this precondition
            return [RuntimeCheck(self.m.requires.loc, "expr", "false")]
        return checkgen.dedupe(self.collected)


# ---------------------------------------------------------- well-formedness


@dataclass(frozen=True)
class Diagnostic:
    loc: Optional[SourceLoc]
    message: str
    where: str

    def __str__(self) -> str:
        return f"{self.loc}: {self.where}: {self.message}"


def check_spec_wellformedness(tp: TypedProgram) -> list[Diagnostic]:
    """Produce each spec formula into an empty state and report unframed reads."""
    v = Verifier(tp)
    out: list[Diagnostic] = []

    def probe(where: str, f: Formula, env: dict[str, str]) -> None:
        run = _MethodRun(v, MethodDecl(where, (), "void", f, f, ()))
        store = {name: run.fresh(sort_of(t), name) for name, t in env.items()}
        s = SymState(store=dict(store), frame=dict(store), site=f.loc)
        try:
            run_deep(lambda: run.produce(s, f, None, lambda _s: None))
        except StaticError as e:
            out.append(Diagnostic(e.loc, e.message, where))

    for pd in tp.program.predicates:
        probe(f"predicate {pd.name}", pd.body, {p.name: p.type for p in pd.params})
    for m in tp.program.methods:
        env = {p.name: p.type for p in m.params}
        probe(f"requires of {m.name}", m.requires, env)
        post_env = dict(env)
        if m.ret != "void":
            post_env[RESULT] = m.ret
        probe(f"ensures of {m.name}", m.ensures, post_env)
        for st in _loops(m.body):
            probe(f"loop invariant in {m.name}", st.invariant, tp.var_types[m.name])
    return out


def _loops(stmts):
    for st in stmts:
        if isinstance(st, While):
            yield st
            yield from _loops(st.body)
        elif isinstance(st, If):
            yield from _loops(st.then)
            yield from _loops(st.else_)


def verify_program(tp: TypedProgram, strategy: Strategy = Strategy.RETENTIVE, **kw) -> list[MethodResult]:
    return Verifier(tp, strategy, **kw).verify_all()
