"""Entailment oracle for quantifier-free path conditions.

The built-in procedure refutes conjunctions: formulas are put in negation
normal form and split on disjunctions; each leaf is a set of literals checked
with union-find (equalities over Ref/Bool atoms, with congruence over
uninterpreted applications) and Fourier-Motzkin elimination with integer
tightening for linear integer constraints. Non-linear products are opaque
atoms. Only refutations are trusted: a ``Valid`` or ``Invalid`` verdict is
always backed by one, and running out of budget yields ``Unknown``.
"""

from __future__ import annotations

import enum
import itertools
from fractions import Fraction
from functools import lru_cache, reduce
from math import gcd
from typing import Iterable, Optional

from gradver.terms import (
    BOOL, FALSE, INT, NULL, REF, TRUE, App, Lit, Sym, Term, mk_not, subterms,
)


class Verdict(enum.Enum):
    VALID = "valid"
    INVALID = "invalid"
    UNKNOWN = "unknown"


class BudgetExceeded(Exception):
    pass


MAX_LEAVES = 256
MAX_FM_ROWS = 400
MAX_CC_ROUNDS = 50


class BuiltinOracle:
    """Reference oracle over equality, disequality and linear integer facts."""

    def __init__(self, max_leaves: int = MAX_LEAVES, max_rows: int = MAX_FM_ROWS):
        self.max_leaves = max_leaves
        self.max_rows = max_rows
        self._refute = lru_cache(maxsize=65536)(self._refute_uncached)

    # -- public API

    def entails(self, pc: Iterable[Term], goal: Term) -> Verdict:
        facts = frozenset(pc)
        if goal == TRUE or goal in facts:
            return Verdict.VALID
        if self._refute(facts):
            return Verdict.VALID  # vacuous: the path condition is contradictory
        if self._refute(facts | {mk_not(goal)}):
            return Verdict.VALID
        if self._refute(facts | {goal}):
            return Verdict.INVALID
        return Verdict.UNKNOWN

    def satisfiable(self, pc: Iterable[Term]) -> Verdict:
        facts = frozenset(pc)
        if self._refute(facts):
            return Verdict.INVALID
        if find_small_model(facts) is not None:
            return Verdict.VALID
        return Verdict.UNKNOWN

    # -- refutation

    def _refute_uncached(self, facts: frozenset) -> bool:
        leaves = [0]
        try:
            return self._refute_search(list(facts), [], leaves)
        except BudgetExceeded:
            return False

    def _refute_search(self, todo: list, lits: list, leaves: list) -> bool:
        """True if every disjunctive case of ``todo`` plus ``lits`` is unsat."""
        todo = list(todo)
        lits = list(lits)
        while todo:
            f = todo.pop()
            kind, payload = _classify(f)
            if kind == "true":
                continue
            if kind == "false":
                return True
            if kind == "and":
                todo.extend(payload)
                continue
            if kind == "or":
                for alt in payload:
                    if not self._refute_search(todo + [alt], lits, leaves):
                        return False
                return True
            lits.append(payload)
        leaves[0] += 1
        if leaves[0] > self.max_leaves:
            raise BudgetExceeded()
        return self._theory_unsat(lits)

    def _theory_unsat(self, lits: list[tuple[Term, bool]]) -> bool:
        uf = _UnionFind()
        diseqs: list[tuple[Term, Term]] = []
        rows: list[tuple[dict, Fraction, str]] = []
        int_terms: set[Term] = set()
        for atom, pos in lits:
            if isinstance(atom, App) and atom.op == "==":
                a, b = atom.args
                if a.sort == INT:
                    int_terms.update((a, b))
                    rows.append(_row(a, b, "==" if pos else "!="))
                elif pos:
                    uf.union(a, b)
                else:
                    diseqs.append((a, b))
            elif isinstance(atom, App) and atom.op in ("<", "<="):
                a, b = atom.args
                int_terms.update((a, b))
                if pos:
                    rows.append(_row(a, b, atom.op))
                else:
                    # not (a < b)  <=>  b <= a ; not (a <= b)  <=>  b < a
                    rows.append(_row(b, a, "<=" if atom.op == "<" else "<"))
            else:
                uf.union(atom, TRUE if pos else FALSE)
        diseqs.append((TRUE, FALSE))
        diseqs.append((NULL, TRUE))
        diseqs.append((NULL, FALSE))
        # a round cap leaves fewer merges, which only weakens the check
        _congruence(uf, [a for lit in lits for a in _apps(lit[0])])
        if self._check_diseqs(uf, diseqs):
            return True
        return self._fm(rows, uf, int_terms)

    @staticmethod
    def _check_diseqs(uf: "_UnionFind", diseqs) -> bool:
        return any(uf.find(a) == uf.find(b) for a, b in diseqs)

    def _fm(self, rows, uf: "_UnionFind", int_terms) -> bool:
        # equalities among Int atoms discovered by congruence feed the arithmetic
        atoms = sorted({t for t in int_terms if not isinstance(t, Lit)} | set(uf.parent),
                       key=repr)
        by_class: dict = {}
        for t in atoms:
            if t.sort == INT and t in uf.parent:
                by_class.setdefault(uf.find(t), []).append(t)
        for members in by_class.values():
            for x in members[1:]:
                rows.append(_row(members[0], x, "=="))
        ineqs: list[tuple[dict, Fraction]] = []
        for coeffs, const, op in rows:
            if op == "!=":
                continue  # disequalities were split before reaching the theory
            if op == "<":
                # integer strictness: a - b < 0  <=>  a - b + 1 <= 0
                ineqs.append((coeffs, const + 1))
            elif op == "<=":
                ineqs.append((coeffs, const))
            else:
                ineqs.append((coeffs, const))
                ineqs.append(({k: -v for k, v in coeffs.items()}, -const))
        return fourier_motzkin(ineqs, self.max_rows)


# ------------------------------------------------------------------ NNF split


def _classify(f: Term) -> tuple[str, object]:
    """Return (kind, payload) for one pending formula, pushing negations in."""
    neg = False
    while isinstance(f, App) and f.op == "!":
        f, neg = f.args[0], not neg
    if isinstance(f, Lit):
        return ("true" if f.value != neg else "false", None)
    if isinstance(f, App) and f.op in ("&&", "||"):
        a, b = f.args
        is_and = (f.op == "&&") != neg
        parts = [mk_not(a), mk_not(b)] if neg else [a, b]
        return ("and" if is_and else "or", parts)
    if isinstance(f, App) and f.op == "ite" and f.sort == BOOL:
        c, a, b = f.args
        branches = [App("&&", (c, a), BOOL), App("&&", (mk_not(c), b), BOOL)]
        t = App("||", tuple(branches), BOOL)
        return _classify(mk_not(t) if neg else t)
    if isinstance(f, App) and f.op == "==" and f.args[0].sort == BOOL:
        a, b = f.args
        both = App("&&", (a, b), BOOL)
        neither = App("&&", (mk_not(a), mk_not(b)), BOOL)
        if neg:
            return ("or", [App("&&", (a, mk_not(b)), BOOL), App("&&", (mk_not(a), b), BOOL)])
        return ("or", [both, neither])
    if neg and isinstance(f, App) and f.op == "==" and f.args[0].sort == INT:
        a, b = f.args
        return ("or", [App("<", (a, b), BOOL), App("<", (b, a), BOOL)])
    return ("lit", (f, not neg))


def _apps(t: Term):
    for s in subterms(t):
        if isinstance(s, App) and s.op not in ("+", "-", "*", "==", "<", "<=", "!", "&&", "||"):
            yield s


# ------------------------------------------------------------------ union-find


class _UnionFind:
    def __init__(self):
        self.parent: dict = {}

    def find(self, x):
        self.parent.setdefault(x, x)
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a, b) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        # literals stay representatives so classes with constants are easy to spot
        if isinstance(rb, Lit):
            ra, rb = rb, ra
        self.parent[rb] = ra
        return True


def _congruence(uf: _UnionFind, apps: list[App]) -> bool:
    """Merge applications with equal operators and pairwise-equal arguments."""
    apps = list(dict.fromkeys(apps))
    for a in apps:
        uf.find(a)
    for _ in range(MAX_CC_ROUNDS):
        changed = False
        sig: dict = {}
        for a in apps:
            key = (a.op, tuple(uf.find(x) for x in a.args))
            other = sig.setdefault(key, a)
            if other is not a and uf.union(other, a):
                changed = True
        if not changed:
            return True
    return False


# ------------------------------------------------------------ linear arithmetic


def linearize(t: Term) -> tuple[dict, Fraction]:
    """Return (coefficients over atoms, constant) for an Int term."""
    if isinstance(t, Lit):
        return {}, Fraction(t.value)
    if isinstance(t, App) and t.op in ("+", "-"):
        ca, ka = linearize(t.args[0])
        cb, kb = linearize(t.args[1])
        sign = 1 if t.op == "+" else -1
        out = dict(ca)
        for k, v in cb.items():
            out[k] = out.get(k, 0) + sign * v
        return {k: v for k, v in out.items() if v != 0}, ka + sign * kb
    if isinstance(t, App) and t.op == "*":
        ca, ka = linearize(t.args[0])
        cb, kb = linearize(t.args[1])
        if not ca:
            return {k: ka * v for k, v in cb.items() if ka * v != 0}, ka * kb
        if not cb:
            return {k: kb * v for k, v in ca.items() if kb * v != 0}, ka * kb
    # symbols and non-linear applications are opaque atoms
    return {t: Fraction(1)}, Fraction(0)


def _row(a: Term, b: Term, op: str) -> tuple[dict, Fraction, str]:
    """Constraint ``a - b op 0`` as (coeffs, const, op)."""
    ca, ka = linearize(a)
    cb, kb = linearize(b)
    out = dict(ca)
    for k, v in cb.items():
        out[k] = out.get(k, 0) - v
    return {k: v for k, v in out.items() if v != 0}, ka - kb, op


def _tighten(coeffs: dict, const: Fraction) -> Optional[tuple[dict, Fraction]]:
    """Normalise ``sum coeffs*x + const <= 0`` to integer form, rounding the bound.

    Returns None for a trivially true constraint.
    """
    if not coeffs:
        return ({}, const)
    dens = [v.denominator for v in coeffs.values()] + [const.denominator]
    lcm = reduce(lambda x, y: x * y // gcd(x, y), dens, 1)
    ints = {k: int(v * lcm) for k, v in coeffs.items()}
    c = const * lcm
    g = reduce(gcd, (abs(v) for v in ints.values()))
    # sum (a/g) x <= -c/g, and the left side is an integer
    bound = Fraction(-c, g)
    floor_bound = bound.numerator // bound.denominator
    return ({k: Fraction(v // g) for k, v in ints.items()}, Fraction(-floor_bound))


def fourier_motzkin(ineqs: list[tuple[dict, Fraction]], max_rows: int = MAX_FM_ROWS) -> bool:
    """True if the system ``sum coeffs*x + const <= 0`` has no integer solution.

    Uses the real shadow with integer tightening, so a True answer is sound
    and a False answer means "not refuted".
    """
    rows = []
    for coeffs, const in ineqs:
        t = _tighten(coeffs, const)
        if t is None:
            continue
        if not t[0]:
            if t[1] > 0:
                return True
            continue
        rows.append(t)
    while True:
        variables = sorted({k for c, _ in rows for k in c}, key=repr)
        if not variables:
            return False
        # eliminate the variable producing the fewest new rows
        best, best_cost = None, None
        for v in variables:
            pos = sum(1 for c, _ in rows if c.get(v, 0) > 0)
            neg = sum(1 for c, _ in rows if c.get(v, 0) < 0)
            cost = pos * neg - pos - neg
            if best is None or cost < best_cost:
                best, best_cost = v, cost
        v = best
        pos = [(c, k) for c, k in rows if c.get(v, 0) > 0]
        neg = [(c, k) for c, k in rows if c.get(v, 0) < 0]
        rest = [(c, k) for c, k in rows if c.get(v, 0) == 0]
        new = []
        for (cp, kp), (cn, kn) in itertools.product(pos, neg):
            a, b = cp[v], -cn[v]
            coeffs = {}
            for key in set(cp) | set(cn):
                val = b * cp.get(key, 0) + a * cn.get(key, 0)
                if val != 0 and key != v:
                    coeffs[key] = val
            t = _tighten(coeffs, b * kp + a * kn)
            if t is None:
                continue
            if not t[0]:
                if t[1] > 0:
                    return True
                continue
            new.append(t)
        rows = list(dict.fromkeys((frozenset(c.items()), k) for c, k in rest + new))
        rows = [(dict(c), k) for c, k in rows]
        if len(rows) > max_rows:
            return False


# ------------------------------------------------------------------- models


def find_small_model(facts: frozenset, int_range: range = range(-3, 4), max_points: int = 20000):
    """Search a tiny domain for an assignment satisfying all facts."""
    atoms = sorted({s for f in facts for s in subterms(f)
                    if isinstance(s, Sym) or (isinstance(s, App) and s.op.startswith("unf"))},
                   key=repr)
    domains = []
    refs = [None, 1, 2, 3]
    for a in atoms:
        if a.sort == INT:
            domains.append(list(int_range))
        elif a.sort == BOOL:
            domains.append([False, True])
        elif a.sort == REF:
            domains.append(refs)
        else:
            domains.append([0])
    size = 1
    for d in domains:
        size *= len(d)
        if size > max_points:
            return None
    for values in itertools.product(*domains):
        env = dict(zip(atoms, values))
        try:
            if _congruent(env) and all(evaluate(f, env) is True for f in facts):
                return env
        except KeyError:
            return None
    return None


def _congruent(env: dict) -> bool:
    """Uninterpreted applications with equal arguments must have equal values."""
    seen: dict = {}
    for a, v in env.items():
        if isinstance(a, App):
            key = (a.op, tuple(evaluate(x, env) for x in a.args))
            if seen.setdefault(key, v) != v:
                return False
    return True


def evaluate(t: Term, env: dict):
    """Evaluate a term under an assignment of its atoms (symbols and opaque apps)."""
    if t in env:
        return env[t]
    if isinstance(t, Lit):
        return t.value
    if isinstance(t, Sym):
        raise KeyError(t)
    assert isinstance(t, App)
    if t.op == "&&":
        return evaluate(t.args[0], env) and evaluate(t.args[1], env)
    if t.op == "||":
        return evaluate(t.args[0], env) or evaluate(t.args[1], env)
    if t.op == "ite":
        return evaluate(t.args[1] if evaluate(t.args[0], env) else t.args[2], env)
    vals = [evaluate(a, env) for a in t.args]
    if t.op == "!":
        return not vals[0]
    a, b = vals[0], vals[1] if len(vals) > 1 else None
    ops = {
        "+": lambda: a + b, "-": lambda: a - b, "*": lambda: a * b,
        "==": lambda: a == b, "<": lambda: a < b, "<=": lambda: a <= b,
    }
    if t.op in ops:
        return ops[t.op]()
    raise KeyError(t)


Oracle = BuiltinOracle
