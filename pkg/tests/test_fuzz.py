import itertools
import random

from hypothesis import given, settings, strategies as st

from gradver.fuzz import (
    INT_DOMAIN, REF_DOMAIN, _atoms, brute_force, random_program, random_query, soundness_run,
)
from gradver.oracle import evaluate
from gradver.parser import parse
from gradver.terms import INT
from gradver.typecheck import typecheck


def _scalar_brute_force(facts, goal):
    atoms = _atoms(facts + [goal])
    always, sometimes = True, False
    for values in itertools.product(*[INT_DOMAIN if a.sort == INT else REF_DOMAIN for a in atoms]):
        env = dict(zip(atoms, values))
        if all(evaluate(f, env) for f in facts):
            if evaluate(goal, env):
                sometimes = True
            else:
                always = False
    return always, sometimes


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32))
def test_vectorized_enumeration_matches_scalar(seed):
    q = random_query(random.Random(seed), n_int=2, n_ref=2)
    assert brute_force(q.facts, q.goal) == _scalar_brute_force(q.facts, q.goal)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32))
def test_random_programs_typecheck(seed):
    typecheck(parse(random_program(random.Random(seed))))


def test_soundness_run_reports():
    rng = random.Random(7)
    reports = [soundness_run(random_program(rng)) for _ in range(40)]
    assert any(r.accepted for r in reports)
    assert all(not r.crashes for r in reports)
