"""Symbolic state: heap chunks, the two heaps, and the check collector."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Optional, Union

from gradver.oracle import Verdict
from gradver.syntax import SourceLoc
from gradver.terms import TRUE, App, Term, mk_eq


@dataclass(frozen=True)
class FieldChunk:
    recv: Term
    field: str
    snap: Term

    def __repr__(self) -> str:
        return f"acc({self.recv!r}.{self.field})={self.snap!r}"


@dataclass(frozen=True)
class PredChunk:
    pred: str
    args: tuple[Term, ...]
    snap: Term

    def __repr__(self) -> str:
        return f"{self.pred}({', '.join(map(repr, self.args))})"


HeapChunk = Union[FieldChunk, PredChunk]
Heap = tuple  # ordered, duplicate-free tuple of HeapChunk


class SeparationConflict(Exception):
    def __init__(self, existing: FieldChunk, new: FieldChunk):
        self.existing = existing
        self.new = new
        super().__init__(f"{new!r} overlaps {existing!r}")


def terms_equal(a: Term, b: Term, pc, oracle) -> Verdict:
    if a == b:
        return Verdict.VALID
    return oracle.entails(pc, mk_eq(a, b))


def args_equal(xs, ys, pc, oracle) -> Verdict:
    if len(xs) != len(ys):
        return Verdict.INVALID
    if tuple(xs) == tuple(ys):
        return Verdict.VALID
    verdicts = [terms_equal(x, y, pc, oracle) for x, y in zip(xs, ys)]
    if any(v is Verdict.INVALID for v in verdicts):
        return Verdict.INVALID
    if all(v is Verdict.VALID for v in verdicts):
        return Verdict.VALID
    return Verdict.UNKNOWN


def add_chunk(heap: Heap, chunk: HeapChunk, pc, oracle) -> Heap:
    """Add ``chunk``; a field chunk provably aliasing an existing one conflicts."""
    if isinstance(chunk, FieldChunk):
        for c in heap:
            if (isinstance(c, FieldChunk) and c.field == chunk.field
                    and terms_equal(c.recv, chunk.recv, pc, oracle) is Verdict.VALID):
                raise SeparationConflict(c, chunk)
    return heap + (chunk,)


def remove_chunk(heap: Heap, chunk: HeapChunk) -> Heap:
    for i, c in enumerate(heap):
        if c == chunk:
            return heap[:i] + heap[i + 1:]
    return heap


def replace_chunk(heap: Heap, old: HeapChunk, new: HeapChunk) -> Heap:
    return tuple(new if c == old else c for c in heap)


def chunk_matches(c: HeapChunk, key: tuple, pc, oracle) -> Verdict:
    if key[0] == "field":
        if not isinstance(c, FieldChunk) or c.field != key[2]:
            return Verdict.INVALID
        return terms_equal(c.recv, key[1], pc, oracle)
    if not isinstance(c, PredChunk) or c.pred != key[1]:
        return Verdict.INVALID
    return args_equal(c.args, key[2], pc, oracle)


def lookup(heap: Heap, key: tuple, pc, oracle) -> Optional[HeapChunk]:
    # syntactic fast path before asking the oracle
    for c in heap:
        if key[0] == "field" and isinstance(c, FieldChunk) and c.field == key[2] and c.recv == key[1]:
            return c
        if key[0] == "pred" and isinstance(c, PredChunk) and c.pred == key[1] and c.args == tuple(key[2]):
            return c
    for c in heap:
        if chunk_matches(c, key, pc, oracle) is Verdict.VALID:
            return c
    return None


def find_chunk(h: Heap, hopt: Heap, key: tuple, pc, oracle) -> Optional[tuple[HeapChunk, str]]:
    """Search ``h`` then ``h?``; ``key`` is ("field", recv, name) or ("pred", name, args)."""
    c = lookup(h, key, pc, oracle)
    if c is not None:
        return c, "h"
    c = lookup(hopt, key, pc, oracle)
    if c is not None:
        return c, "h?"
    return None


def heap_union(*heaps: Heap) -> Heap:
    out: list = []
    for hp in heaps:
        for c in hp:
            if c not in out:
                out.append(c)
    return tuple(out)


def field_chunks(heap: Heap, name: Optional[str] = None) -> list[FieldChunk]:
    return [c for c in heap if isinstance(c, FieldChunk) and (name is None or c.field == name)]


# ------------------------------------------------------------ check collector


@dataclass(frozen=True)
class Origin:
    """Where branching inside a produced/consumed assertion is attributed."""

    state: Any  # summary of the symbolic state when the origin was set
    node: Any  # the unfolding expression, fold/unfold or call statement
    instantiation: tuple[Term, ...]
    loc: SourceLoc


@dataclass(frozen=True)
class BranchFrame:
    cond: Term
    cond_src: Optional[str]  # None if not expressible at the origin point
    origin_loc: SourceLoc
    taken: bool


@dataclass(frozen=True)
class CheckCollector:
    checks: tuple = ()
    origin: Optional[Origin] = None
    branch_context: tuple[BranchFrame, ...] = ()


@dataclass(frozen=True)
class SymState:
    imprecise: bool = False
    store: dict = field(default_factory=dict)  # evaluation environment
    h: Heap = ()
    hopt: Heap = ()
    pc: tuple[Term, ...] = ()
    R: CheckCollector = CheckCollector()
    qvs: tuple[Term, ...] = ()
    # method-level variables, used to express checks in source terms
    frame: dict = field(default_factory=dict)
    site: Optional[SourceLoc] = None
    # field chunks seen at the current site (incl. temporarily unfolded ones)
    site_chunks: Heap = ()
    unfold_depth: tuple[tuple[str, int], ...] = ()

    def with_store(self, **kw) -> "SymState":
        return replace(self, **kw)

    def assume(self, t: Term) -> "SymState":
        if t == TRUE or t in self.pc:
            return self
        return replace(self, pc=self.pc + (t,))

    def bind(self, name: str, value: Term, frame: bool = True) -> "SymState":
        store = dict(self.store)
        store[name] = value
        if frame:
            fr = dict(self.frame)
            fr[name] = value
            return replace(self, store=store, frame=fr)
        return replace(self, store=store)

    def depth_of(self, pred: str) -> int:
        return dict(self.unfold_depth).get(pred, 0)

    def with_depth(self, pred: str, n: int) -> "SymState":
        d = dict(self.unfold_depth)
        d[pred] = n
        return replace(self, unfold_depth=tuple(sorted(d.items())))

    def with_origin(self, origin: Optional[Origin]) -> "SymState":
        return replace(self, R=replace(self.R, origin=origin))

    def summary(self) -> dict:
        return {
            "imprecise": self.imprecise,
            "h": [repr(c) for c in self.h],
            "hopt": [repr(c) for c in self.hopt],
            "pc": [repr(t) for t in self.pc],
            "origin": None if self.R.origin is None else str(self.R.origin.loc),
            "site": None if self.site is None else str(self.site),
        }


def is_snap_app(t: Term) -> bool:
    return isinstance(t, App) and t.op.startswith("unf")
