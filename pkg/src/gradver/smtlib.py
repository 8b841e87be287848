"""SMT-LIB2 encoding of path conditions and an oracle backed by a solver process.

The solver command receives one script per query on stdin and must print
``sat``, ``unsat`` or ``unknown`` on its first output line. Any other answer,
a crash or a timeout is read as ``unknown``.
"""

from __future__ import annotations

import shlex
import subprocess
from functools import lru_cache
from typing import Iterable

from gradver.oracle import Verdict
from gradver.terms import BOOL, INT, REF, SNAP, TRUE, App, Lit, Sym, Term, mk_not, subterms

_SORTS = {INT: "Int", BOOL: "Bool", REF: "Ref", SNAP: "Snap"}
_OPS = {"+": "+", "-": "-", "*": "*", "==": "=", "<": "<", "<=": "<=", "!": "not",
        "&&": "and", "||": "or", "ite": "ite"}


def encode_term(t: Term) -> str:
    if isinstance(t, Lit):
        if t.sort == REF:
            return "null"
        if t.sort == BOOL:
            return "true" if t.value else "false"
        return str(t.value) if t.value >= 0 else f"(- {-t.value})"
    if isinstance(t, Sym):
        return f"s{t.id}"
    if isinstance(t, App):
        op = _OPS.get(t.op)
        if op is None:
            op = _fun_name(t)
        return f"({op} {' '.join(encode_term(a) for a in t.args)})"
    raise TypeError(f"cannot encode {t!r}")


def _fun_name(t: App) -> str:
    return f"|{t.op}:{'_'.join(_SORTS[a.sort] for a in t.args)}:{_SORTS[t.sort]}|"


def script(facts: Iterable[Term]) -> str:
    """A complete check-sat script for the conjunction of ``facts``."""
    facts = list(facts)
    syms: dict = {}
    funs: dict = {}
    for f in facts:
        for t in subterms(f):
            if isinstance(t, Sym):
                syms[t.id] = t.sort
            elif isinstance(t, App) and t.op not in _OPS:
                funs[_fun_name(t)] = (tuple(a.sort for a in t.args), t.sort)
    lines = ["(set-logic ALL)", "(declare-sort Ref 0)", "(declare-sort Snap 0)",
             "(declare-const null Ref)"]
    for i in sorted(syms):
        lines.append(f"(declare-const s{i} {_SORTS[syms[i]]})")
    for name in sorted(funs):
        args, res = funs[name]
        lines.append(f"(declare-fun {name} ({' '.join(_SORTS[a] for a in args)}) {_SORTS[res]})")
    for f in facts:
        lines.append(f"(assert {encode_term(f)})")
    lines.append("(check-sat)")
    return "\n".join(lines) + "\n"


class SmtLibOracle:
    """Entailment by refutation through an external SMT-LIB2 solver."""

    def __init__(self, command: str, timeout: float = 10.0):
        self.argv = shlex.split(command)
        self.timeout = timeout
        self._ask = lru_cache(maxsize=16384)(self._ask_uncached)

    def _ask_uncached(self, facts: frozenset) -> str:
        ordered = sorted(facts, key=repr)
        try:
            proc = subprocess.run(self.argv, input=script(ordered), capture_output=True,
                                  text=True, timeout=self.timeout)
        except (OSError, subprocess.TimeoutExpired):
            return "unknown"
        first = proc.stdout.strip().splitlines()[:1]
        return first[0].strip() if first and first[0].strip() in ("sat", "unsat") else "unknown"

    def entails(self, pc: Iterable[Term], goal: Term) -> Verdict:
        facts = frozenset(pc)
        if goal == TRUE or goal in facts:
            return Verdict.VALID
        if self._ask(facts | {mk_not(goal)}) == "unsat":
            return Verdict.VALID
        if self._ask(facts | {goal}) == "unsat":
            return Verdict.INVALID
        return Verdict.UNKNOWN

    def satisfiable(self, pc: Iterable[Term]) -> Verdict:
        answer = self._ask(frozenset(pc))
        return {"sat": Verdict.VALID, "unsat": Verdict.INVALID}.get(answer, Verdict.UNKNOWN)
