"""Run-time checks: source translation, deduplication and the JSON manifest.

Manifest layout (keys in this order, integers only)::

    {"version": 1,
     "methods": [{"name", "status", "checks": [
         {"line", "col", "kind", "payload",
          "context": [{"cond", "originLine", "originCol", "expected"}]}]}]}

``version`` is omitted when serialising an empty result list so that the
empty manifest is exactly ``{"methods":[]}``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Optional

from gradver.syntax import (
    Binary, BoolLit, Expr, FieldAccess, IntLit, NullLit, SourceLoc, Ternary, Unary, Var,
    show_expr,
)
from gradver.terms import App, Lit, Term

KINDS = ("expr", "acc", "predicate", "nonnull")
MANIFEST_VERSION = 1


@dataclass(frozen=True)
class ContextEntry:
    cond: str
    origin_loc: SourceLoc
    expected: bool


@dataclass(frozen=True)
class RuntimeCheck:
    loc: SourceLoc
    kind: str
    payload: str
    context: tuple[ContextEntry, ...] = ()

    def key(self) -> tuple:
        return (self.loc.line, self.loc.col, self.kind, self.payload,
                tuple((c.cond, c.origin_loc.line, c.origin_loc.col, c.expected) for c in self.context))

    def __str__(self) -> str:
        ctx = "".join(f" [{'' if c.expected else '!'}({c.cond})@{c.origin_loc.line}:{c.origin_loc.col}]"
                      for c in self.context)
        return f"{self.loc.line}:{self.loc.col} {self.kind} {self.payload}{ctx}"


class Untranslatable(Exception):
    def __init__(self, term: Term):
        self.term = term
        super().__init__(f"cannot express {term!r} in source terms")


# ------------------------------------------------------------------ translation

_MAX_PATH = 6


def source_names(sigma) -> dict:
    """Map terms to source expressions valid at the current program point.

    Variables of the method frame come first, then field paths through the
    chunks known at this point, shortest paths first.
    """
    names: dict = {}
    for name, t in sigma.frame.items():
        if t not in names and not isinstance(t, Lit):
            names[t] = Var(name)
    chunks = [c for c in (*sigma.h, *sigma.hopt, *sigma.site_chunks) if hasattr(c, "field")]
    for _ in range(_MAX_PATH):
        grown = False
        for c in chunks:
            if c.snap in names or isinstance(c.snap, Lit):
                continue
            recv = names.get(c.recv)
            if recv is not None:
                names[c.snap] = FieldAccess(recv, c.field)
                grown = True
        if not grown:
            break
    return names


def to_source(term: Term, names: dict) -> Expr:
    if term in names:
        return names[term]
    if isinstance(term, Lit):
        if term.value is None:
            return NullLit()
        if isinstance(term.value, bool):
            return BoolLit(term.value)
        return IntLit(term.value)
    if isinstance(term, App):
        if term.op == "!":
            inner = term.args[0]
            if isinstance(inner, App) and inner.op == "==":
                eq = to_source(inner, names)
                return Binary("!=", eq.left, eq.right)
            return Unary("!", to_source(inner, names))
        if term.op in ("+", "-", "*", "==", "<", "<=", "&&", "||") and len(term.args) == 2:
            a, b = (to_source(x, names) for x in term.args)
            if term.op == "==" and isinstance(a, (NullLit, IntLit, BoolLit)):
                a, b = b, a
            if term.op == "-" and isinstance(a, IntLit) and a.value == 0:
                return Unary("-", b)
            return Binary(term.op, a, b)
        if term.op == "ite":
            c, a, b = (to_source(x, names) for x in term.args)
            return Ternary(c, a, b)
    raise Untranslatable(term)


def translate_term(sigma, term: Term) -> str:
    """Source text for ``term`` at the current point, or raise Untranslatable."""
    return show_expr(to_source(term, source_names(sigma)))


def translate_or_none(sigma, term: Term) -> Optional[str]:
    try:
        return translate_term(sigma, term)
    except Untranslatable:
        return None


# ----------------------------------------------------------------- manipulation


def dedupe(checks: Iterable[RuntimeCheck]) -> list[RuntimeCheck]:
    seen: set = set()
    out = []
    for c in checks:
        k = c.key()
        if k not in seen:
            seen.add(k)
            out.append(c)
    return out


def check_payloads(checks: Iterable[RuntimeCheck]) -> set[tuple]:
    """(loc, kind, payload) triples, ignoring branch contexts."""
    return {(c.loc.line, c.loc.col, c.kind, c.payload) for c in checks}


# ------------------------------------------------------------------ manifest


def check_to_json(c: RuntimeCheck) -> dict:
    return {
        "line": c.loc.line,
        "col": c.loc.col,
        "kind": c.kind,
        "payload": c.payload,
        "context": [
            {"cond": e.cond, "originLine": e.origin_loc.line, "originCol": e.origin_loc.col,
             "expected": e.expected}
            for e in c.context
        ],
    }


def check_from_json(d: dict, filename: str = "<input>") -> RuntimeCheck:
    if d["kind"] not in KINDS:
        raise ValueError(f"unknown check kind {d['kind']!r}")
    ctx = tuple(ContextEntry(e["cond"], SourceLoc(e["originLine"], e["originCol"], filename), e["expected"])
                for e in d["context"])
    return RuntimeCheck(SourceLoc(d["line"], d["col"], filename), d["kind"], d["payload"], ctx)


def manifest_dict(results) -> dict:
    methods = []
    for r in results:
        methods.append({
            "name": r.name,
            "status": "verified" if r.verified else "error",
            "checks": [check_to_json(c) for c in r.checks],
        })
    if not methods:
        return {"methods": []}
    return {"version": MANIFEST_VERSION, "methods": methods}


def serialize_checks(results) -> str:
    """Deterministic JSON text for a list of method results."""
    return json.dumps(manifest_dict(results), separators=(",", ":"))


def serialize_manifest(manifest: dict) -> str:
    return json.dumps(manifest, separators=(",", ":"))


@dataclass
class ManifestEntry:
    name: str
    status: str
    checks: list[RuntimeCheck]

    @property
    def verified(self) -> bool:
        return self.status == "verified"


def parse_manifest(text: str, filename: str = "<input>") -> list[ManifestEntry]:
    data = json.loads(text)
    if data.get("version", MANIFEST_VERSION) != MANIFEST_VERSION:
        raise ValueError(f"unsupported manifest version {data.get('version')}")
    out = []
    for m in data["methods"]:
        if m["status"] not in ("verified", "error"):
            raise ValueError(f"bad status {m['status']!r}")
        out.append(ManifestEntry(m["name"], m["status"], [check_from_json(c, filename) for c in m["checks"]]))
    return out
