"""Random generators for differential testing of the oracle and the verifier.

``random_query`` builds small path conditions with a goal; ``brute_force``
decides them by enumeration over a bounded domain. ``random_program`` builds
small gradually specified list programs, and ``soundness_run`` executes an
accepted program over every bounded input looking for unchecked crashes.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from gradver.oracle import Verdict
from gradver.terms import (
    INT, NULL, REF, Lit, Sym, Term, int_lit, mk_and, mk_arith, mk_cmp, mk_eq, mk_ite,
    mk_not, mk_or, subterms,
)

INT_DOMAIN = range(-4, 5)
REF_DOMAIN = (None, 1, 2, 3)  # null plus three objects: at most four refs


# ---------------------------------------------------------------- oracle queries


@dataclass
class Query:
    facts: list[Term]
    goal: Term


def random_query(rng: random.Random, n_int: int = 3, n_ref: int = 2, n_facts: int = 3,
                 allow_mul: bool = True) -> Query:
    ints = [Sym(i, INT, f"x{i}") for i in range(n_int)]
    refs = [Sym(100 + i, REF, f"r{i}") for i in range(n_ref)]

    def iterm(d: int) -> Term:
        roll = rng.random()
        if d <= 0 or roll < 0.4:
            return rng.choice(ints) if rng.random() < 0.75 else int_lit(rng.randint(-3, 3))
        op = rng.choice(["+", "-", "*"] if allow_mul else ["+", "-"])
        if op == "*" and rng.random() < 0.6:
            return mk_arith("*", int_lit(rng.randint(-2, 3)), iterm(d - 1))
        return mk_arith(op, iterm(d - 1), iterm(d - 1))

    def rterm() -> Term:
        return rng.choice(refs) if rng.random() < 0.8 else NULL

    def bterm(d: int) -> Term:
        roll = rng.random()
        if d <= 0 or roll < 0.5:
            kind = rng.random()
            if kind < 0.55:
                return mk_cmp(rng.choice(["<", "<=", ">", ">="]), iterm(1), iterm(1))
            if kind < 0.8:
                return mk_eq(iterm(1), iterm(1))
            return mk_eq(rterm(), rterm())
        kind = rng.random()
        if kind < 0.3:
            return mk_not(bterm(d - 1))
        if kind < 0.6:
            return mk_and(bterm(d - 1), bterm(d - 1))
        if kind < 0.85:
            return mk_or(bterm(d - 1), bterm(d - 1))
        return mk_ite(bterm(d - 1), bterm(d - 1), bterm(d - 1))

    facts = [bterm(2) for _ in range(rng.randint(0, n_facts))]
    return Query(facts, bterm(2))


def _atoms(terms) -> list[Sym]:
    return sorted({s for t in terms for s in subterms(t) if isinstance(s, Sym)}, key=lambda s: s.id)


_NULL_CODE = 0  # refs are encoded as ints: null is 0, objects are 1..3


def _grid(atoms: list[Sym]) -> dict:
    """One column per atom covering every assignment over the bounded domains."""
    domains = []
    for a in atoms:
        if a.sort == INT:
            domains.append(np.array(INT_DOMAIN, dtype=np.int64))
        elif a.sort == REF:
            domains.append(np.array([_NULL_CODE if r is None else r for r in REF_DOMAIN], dtype=np.int64))
        else:
            domains.append(np.array([False, True]))
    if not domains:
        return {}
    mesh = np.meshgrid(*domains, indexing="ij")
    return {a: m.ravel() for a, m in zip(atoms, mesh)}


def _vec(t: Term, cols: dict):
    if isinstance(t, Sym):
        return cols[t]
    if isinstance(t, Lit):
        return _NULL_CODE if t.value is None else t.value
    args = [_vec(a, cols) for a in t.args]
    op = t.op
    if op == "!":
        return np.logical_not(args[0])
    if op == "ite":
        return np.where(args[0], args[1], args[2])
    a, b = args
    return {
        "+": np.add, "-": np.subtract, "*": np.multiply, "==": np.equal, "<": np.less,
        "<=": np.less_equal, "&&": np.logical_and, "||": np.logical_or,
    }[op](a, b)


def brute_force(facts: list[Term], goal: Term) -> tuple[bool, bool]:
    """(goal holds in every bounded model of facts, facts and goal have a bounded model)."""
    atoms = _atoms(facts + [goal])
    cols = _grid(atoms)
    n = len(next(iter(cols.values()))) if cols else 1
    models = np.ones(n, dtype=bool)
    for f in facts:
        models &= np.broadcast_to(_vec(f, cols), (n,)).astype(bool)
    g = np.broadcast_to(_vec(goal, cols), (n,)).astype(bool)
    return bool(np.all(g[models])), bool(np.any(g & models))


def agrees(verdict: Verdict, facts: list[Term], goal: Term) -> bool:
    """A definite verdict must not be contradicted inside the bounded domain."""
    if verdict is Verdict.UNKNOWN:
        return True
    always, sometimes = brute_force(facts, goal)
    if verdict is Verdict.VALID:
        return always
    if verdict is Verdict.INVALID:
        return not sometimes
    return True


# ---------------------------------------------------------------- programs

PRELUDE = """struct Node { int data; struct Node *next; };
/*@
predicate lseg(struct Node *l) = (l == NULL) ? true : (acc(l.data) && acc(l.next) && lseg(l.next));
predicate sortedList(struct Node *this) =
  (this == NULL) ? ( true ) :
    ( acc(this.data) && acc(this.next) && sortedList(this.next) &&
      (this.next == NULL || unfolding sortedList(this.next) in this.data <= this.next.data) );
@*/
"""

_SPEC_ATOMS = [
    "acc(a->data)", "acc(a->next)", "acc(b->data)", "lseg(a)", "lseg(b)", "sortedList(a)",
    "a != NULL", "k >= 0", "b == NULL",
    "(a == NULL || unfolding sortedList(a) in a->data >= k)",
]
_POST_ATOMS = ["acc(a->data)", "lseg(a)", "sortedList(a)", "result >= k", "a != NULL"]

_STMTS = [
    "t = a->data;", "t = t + k;", "a->data = t;", "a->next = b;", "b = a->next;",
    "fold lseg(a);", "unfold lseg(a);", "fold sortedList(a);", "unfold sortedList(a);",
    "assert a != NULL;", "t = t - 1;", "b->data = k;",
]


def random_spec(rng: random.Random, atoms: list[str], imprecise_p: float) -> str:
    parts = rng.sample(atoms, rng.randint(0, 3))
    if rng.random() < imprecise_p:
        parts = ["?"] + parts
    return " && ".join(parts) if parts else "true"


def _block(rng: random.Random, depth: int, callees: list[str], budget: list[int]) -> list[str]:
    out = []
    for _ in range(rng.randint(1, 3)):
        if budget[0] <= 0:
            break
        budget[0] -= 1
        roll = rng.random()
        if roll < 0.12 and depth < 2:
            cond = rng.choice(["a != NULL", "t > k", "b == NULL", "a == b"])
            out.append(f"if ({cond}) {{ {' '.join(_block(rng, depth + 1, callees, budget))} }}")
        elif roll < 0.2 and callees:
            out.append(f"t = {rng.choice(callees)}(a, b, k);")
        elif roll < 0.25:
            out.append("n = alloc(struct Node); n->next = a; a = n;")
        elif roll < 0.3 and depth < 2:
            out.append("while (t < k) //@ invariant ?; \n { t = t + 1; }")
        else:
            out.append(rng.choice(_STMTS))
    return out


def random_program(rng: random.Random, n_methods: Optional[int] = None) -> str:
    n_methods = n_methods or rng.randint(1, 3)
    methods = []
    names: list[str] = []
    for i in range(n_methods):
        name = f"m{i}"
        req = random_spec(rng, _SPEC_ATOMS, 0.75)
        ens = random_spec(rng, _POST_ATOMS, 0.6)
        body = _block(rng, 0, names, [rng.randint(1, 8)])
        lines = [f"int {name}(struct Node *a, struct Node *b, int k)",
                 f"//@ requires {req};", f"//@ ensures {ens};", "{",
                 "  int t = 0;", "  struct Node *n;"]
        lines += [f"  {s}" for s in body]
        lines += ["  return t;", "}"]
        methods.append("\n".join(lines))
        names.append(name)
    return PRELUDE + "\n\n".join(methods) + "\n"


LIST_INPUTS = ("null", "[1]", "[3, 1]", "[1, 2, 3, 4, 5]")
INT_INPUTS = ("0", "2")


@dataclass
class SoundnessReport:
    accepted: bool
    runs: int = 0
    crashes: list[str] = field(default_factory=list)
    check_failures: int = 0


def soundness_run(text: str, strategy=None) -> SoundnessReport:
    """Verify ``text``; if accepted, run its last method on every bounded input."""
    from gradver import dynrun
    from gradver.engine import Strategy, Verifier
    from gradver.parser import parse
    from gradver.typecheck import typecheck

    tp = typecheck(parse(text))
    v = Verifier(tp, strategy or Strategy.RETENTIVE)
    results = v.verify_all()
    if not all(r.verified for r in results):
        return SoundnessReport(False)
    entry = tp.program.methods[-1].name
    manifest = {r.name: r.checks for r in results}
    entry_checks = v.entry_checks(entry)
    rep = SoundnessReport(True)
    for a, b, k in itertools.product(LIST_INPUTS, LIST_INPUTS, INT_INPUTS):
        try:
            out = dynrun.run(tp, manifest, entry, [a, b, k], entry_checks, fuel=5_000)
        except dynrun.RuntimeFault:
            continue
        rep.runs += 1
        if isinstance(out, dynrun.CrashUnchecked):
            rep.crashes.append(f"{entry}({a}, {b}, {k}): {out.description} at {out.loc}")
        elif isinstance(out, dynrun.CheckFailed):
            rep.check_failures += 1
    return rep
