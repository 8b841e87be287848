import pytest

from gradver import dynrun
from gradver.dynrun import (
    CheckFailed, Completed, ConcreteHeap, CrashUnchecked, RuntimeFault, check_predicate_dynamic,
    parse_value,
)
from gradver.engine import Verifier

from conftest import NODE, load_corpus, load_text

LSEG = NODE + "predicate twice(struct Node *x) = acc(x->data) && acc(x->data);\n"


@pytest.fixture(scope="module")
def sorted_tp():
    return load_corpus("front_insert.gvc")


def _list(tp, values):
    heap = ConcreteHeap()
    head = parse_value(str(values), "Node", heap, tp)
    return heap, head


def test_sorted_null_passes(sorted_tp):
    assert check_predicate_dynamic(sorted_tp, ConcreteHeap(), set(), "sortedList", [None])


def test_sorted_unsorted_fails(sorted_tp):
    heap, head = _list(sorted_tp, [1, 3, 2])
    assert not check_predicate_dynamic(sorted_tp, heap, heap.locations(), "sortedList", [head])


def test_sorted_sorted_passes(sorted_tp):
    heap, head = _list(sorted_tp, [1, 2, 3])
    assert check_predicate_dynamic(sorted_tp, heap, heap.locations(), "sortedList", [head])


def test_sorted_needs_permissions(sorted_tp):
    heap, head = _list(sorted_tp, [1, 2, 3])
    assert not check_predicate_dynamic(sorted_tp, heap, set(), "sortedList", [head])


def test_duplicate_claim_fails():
    tp = load_text(LSEG)
    heap, head = _list(tp, [1])
    assert not check_predicate_dynamic(tp, heap, heap.locations(), "twice", [head])


def test_literals(sorted_tp):
    heap = ConcreteHeap()
    r = parse_value("{data: 4, next: {data: 5, next: null}}", "Node", heap, sorted_tp)
    assert heap.objects[r.oid]["data"] == 4
    nxt = heap.objects[r.oid]["next"]
    assert heap.objects[nxt.oid] == {"data": 5, "next": None}
    assert parse_value("-7", "int", heap, sorted_tp) == -7
    assert parse_value("true", "bool", heap, sorted_tp) is True
    with pytest.raises(RuntimeFault):
        parse_value("[1,", "Node", heap, sorted_tp)


def _run(tp, entry, args):
    v = Verifier(tp)
    manifest = {r.name: r.checks for r in v.verify_all()}
    return dynrun.run(tp, manifest, entry, args, v.entry_checks(entry))


def test_front_insert_conforming(sorted_tp):
    out = _run(sorted_tp, "frontInsert", ["[3, 5]", "{data: 1}"])
    assert isinstance(out, Completed)
    assert out.checks_executed > 0


def test_front_insert_violation(sorted_tp):
    out = _run(sorted_tp, "frontInsert", ["[3, 5]", "{data: 9}"])
    assert isinstance(out, CheckFailed)
    assert (out.check.loc.line, out.check.kind, out.check.payload) == (13, "expr", "item->data <= head->data")


def test_front_insert_empty_list(sorted_tp):
    assert isinstance(_run(sorted_tp, "frontInsert", ["null", "{data: 9}"]), Completed)


def test_precise_program_runs_without_checks():
    tp = load_corpus("precise_ok_sum.gvc")
    m = tp.program.methods[0]
    out = _run(tp, m.name, ["4"] * len(m.params))
    assert isinstance(out, Completed) and out.checks_executed == 0


def test_unknown_entry(sorted_tp):
    with pytest.raises(RuntimeFault):
        dynrun.run(sorted_tp, {}, "nope", [])


def test_wrong_arity(sorted_tp):
    with pytest.raises(RuntimeFault):
        dynrun.run(sorted_tp, {}, "frontInsert", ["null"])


def test_missing_manifest_means_crash():
    # without its checks an imprecise program can crash in unchecked ways
    tp = load_text("struct Cell { int f; };\nint get(struct Cell *c) requires ?; ensures ?; { return c->f; }")
    out = dynrun.run(tp, {}, "get", ["null"])
    assert isinstance(out, CrashUnchecked)
    out = _run(tp, "get", ["null"])
    assert isinstance(out, CheckFailed)


def test_fuel_exhaustion():
    tp = load_text("int spin(int n) requires ?; ensures ?; { while (0 < 1) invariant ?; { n = n + 1; } return n; }")
    with pytest.raises(RuntimeFault):
        dynrun.run(tp, {}, "spin", ["0"], fuel=1000)


def test_input_violating_precise_precondition():
    tp = load_corpus("precise_ok_sum.gvc")
    with pytest.raises(RuntimeFault):
        _run(tp, "sum", ["-1"])
