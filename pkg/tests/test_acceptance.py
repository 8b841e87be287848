"""End-to-end acceptance criteria, one test each, each printing a PASS/FAIL line."""

import random
import time
from contextlib import contextmanager

from gradver import dynrun
from gradver.engine import Strategy, Verifier
from gradver.fuzz import agrees, random_program, random_query, soundness_run
from gradver.oracle import BuiltinOracle
from gradver.state import PredChunk

from conftest import CORPUS, check_keys, load_corpus


@contextmanager
def criterion(capsys, number: int, title: str, limit: float):
    start = time.perf_counter()
    ok, note = False, ""
    try:
        yield
        elapsed = time.perf_counter() - start
        ok = elapsed < limit
        note = f"{elapsed:.2f}s (limit {limit:g}s)"
        assert ok, f"took {note}"
    except BaseException as e:
        note = note or f"{type(e).__name__}: {e}"
        raise
    finally:
        with capsys.disabled():
            print(f"\n[criterion {number}] {'PASS' if ok else 'FAIL'} {title}: {note}")


def traced(tp, strategy=Strategy.RETENTIVE):
    events = []
    v = Verifier(tp, strategy, trace=lambda rule, data: events.append((rule, data)))
    return v, v.verify_all(), events


def test_c1_retentive_vs_naive_front_insert(capsys):
    with criterion(capsys, 1, "frontInsert naive checks strictly contain retentive checks", 1.0):
        tp = load_corpus("front_insert.gvc")
        (ret,) = Verifier(tp, Strategy.RETENTIVE).verify_all()
        (nai,) = Verifier(tp, Strategy.NAIVE).verify_all()
        assert ret.verified and nai.verified
        r, n = check_keys(ret), check_keys(nai)
        assert r < n
        fold = tp.program.method("frontInsert").body[1].loc
        extra = {(kind, payload) for line, col, kind, payload, _ in n - r
                 if (line, col) == (fold.line, fold.col)}
        assert ("acc", "acc(item->data)") in extra
        # the framing check for sortedList(head); its payload also claims the other held chunks
        assert any(kind == "predicate" and payload.split(" && ")[0] == "sortedList(head)"
                   for kind, payload in extra)


def test_c2_imprecise_body_restore(capsys):
    with criterion(capsys, 2, "imprecise body: h? restored to sigma2.h? plus the predicate chunk", 1.0):
        _, results, events = traced(load_corpus("front_insert_imprecise_body.gvc"))
        assert all(r.verified for r in results)
        seen = [d for rule, d in events if rule == "evalUnfolding" and not d["body_precise"]]
        assert seen
        for d in seen:
            s2, out, pc = d["sigma2"], d["out"], d["pred_chunk"]
            expected = set(s2.hopt)
            if not any(isinstance(c, PredChunk) and (c.pred, c.args) == (pc.pred, pc.args) for c in expected):
                expected.add(pc)
            assert set(out.hopt) == expected
            assert out.imprecise == s2.imprecise


def test_c3_heap_reset(capsys):
    with criterion(capsys, 3, "every evalUnfolding exit restores h to sigma2.h", 5.0):
        count = 0
        for path in sorted(CORPUS.glob("*.gvc")):
            for strategy in Strategy:
                _, _, events = traced(load_corpus(path.name), strategy)
                for rule, d in events:
                    if rule == "evalUnfolding":
                        count += 1
                        assert d["out"].h == d["sigma2"].h, path.name
        assert count > 0


def _body_branches(events):
    return [d for rule, d in events if rule == "branch" and d["state"].R.origin is not None]


def test_c4_origin_tracking(capsys):
    with criterion(capsys, 4, "branch origins point at the unfolding and at the enclosing fold", 1.0):
        tp = load_corpus("origin_precondition.gvc")
        _, results, events = traced(tp)
        assert all(r.verified for r in results)
        unfolding = tp.program.method("sign").requires.rest.expr.loc
        inner = _body_branches(events)
        assert inner and all((d["origin_loc"].line, d["origin_loc"].col) == (unfolding.line, unfolding.col)
                             for d in inner)

        tp = load_corpus("origin_fold.gvc")
        _, results, events = traced(tp)
        assert all(r.verified for r in results)
        fold = tp.program.method("wrap").body[0].loc
        inner = _body_branches(events)
        assert inner and all((d["origin_loc"].line, d["origin_loc"].col) == (fold.line, fold.col)
                             for d in inner)


def test_c5_sorted_list_formulations(capsys):
    with criterion(capsys, 5, "shared precise client verifies with zero checks under both formulations", 1.0):
        for name in ("sorted_prev_client.gvc", "sorted_unfolding_client.gvc"):
            results = Verifier(load_corpus(name)).verify_all()
            assert results and all(r.verified and not r.checks for r in results), name


def _outcome(results):
    return [(r.name, r.status, None if r.error is None else (r.error.loc, r.error.message)) for r in results]


def test_c6_static_mode_equivalence(capsys):
    with criterion(capsys, 6, "gradual engine equals static-only engine on precise corpus", 10.0):
        paths = sorted(CORPUS.glob("precise_*.gvc"))
        assert len(paths) >= 20
        assert sum("_ok_" in p.name for p in paths) == sum("_bug_" in p.name for p in paths)
        for path in paths:
            tp = load_corpus(path.name)
            gradual = Verifier(tp).verify_all()
            static = Verifier(tp, static_only=True).verify_all()
            assert _outcome(gradual) == _outcome(static), path.name
            assert all(not r.checks for r in gradual)
            assert all(r.verified for r in gradual) == ("_ok_" in path.name), path.name


def test_c7_soundness_fuzz(capsys):
    with criterion(capsys, 7, "no unchecked crash on accepted random programs", 300.0):
        rng = random.Random(2024)
        accepted = runs = 0
        crashes = []
        for _ in range(600):
            rep = soundness_run(random_program(rng))
            accepted += rep.accepted
            runs += rep.runs
            crashes += rep.crashes
        assert accepted > 50 and runs > 0
        assert not crashes, crashes[:3]


def test_c8_oracle_differential(capsys):
    with criterion(capsys, 8, "builtin oracle verdicts agree with bounded enumeration", 60.0):
        rng = random.Random(99)
        oracle = BuiltinOracle()
        bad = []
        for _ in range(10_000):
            q = random_query(rng)
            verdict = oracle.entails(q.facts, q.goal)
            if not agrees(verdict, q.facts, q.goal):
                bad.append(q)
        assert not bad, bad[:3]


def test_c9_dynamic_violation(capsys):
    with criterion(capsys, 9, "frontInsert fails at the precondition expr check only on bad input", 1.0):
        tp = load_corpus("front_insert.gvc")
        v = Verifier(tp)
        manifest = {r.name: r.checks for r in v.verify_all()}
        entry = v.entry_checks("frontInsert")
        requires = tp.program.method("frontInsert").requires.loc
        bad = dynrun.run(tp, manifest, "frontInsert", ["[3, 5]", "{data: 9}"], entry)
        assert isinstance(bad, dynrun.CheckFailed)
        assert bad.check.kind == "expr" and bad.check.payload == "item->data <= head->data"
        assert (bad.check.loc.line, bad.check.loc.col) == (requires.line, requires.col)
        good = dynrun.run(tp, manifest, "frontInsert", ["[3, 5]", "{data: 1}"], entry)
        assert isinstance(good, dynrun.Completed)
