import stat
import sys

import pytest

from gradver.oracle import Verdict
from gradver.smtlib import SmtLibOracle, encode_term, script
from gradver.terms import INT, REF, App, Sym, int_lit, mk_cmp, mk_eq

x = Sym(1, INT, "x")
p = Sym(2, REF, "p")


def test_encoding():
    assert encode_term(int_lit(-3)) == "(- 3)"
    assert encode_term(mk_cmp("<", x, int_lit(2))) == "(< s1 2)"
    assert encode_term(mk_eq(p, App("unf1", (p,), REF))) in (
        "(= s2 (|unf1:Ref:Ref| s2))", "(= (|unf1:Ref:Ref| s2) s2)")


def test_script_declares_everything():
    text = script([mk_eq(App("unf0", (p,), INT), x)])
    assert "(declare-const s1 Int)" in text
    assert "(declare-const s2 Ref)" in text
    assert "(declare-fun |unf0:Ref:Int| (Ref) Int)" in text
    assert text.rstrip().endswith("(check-sat)")


@pytest.fixture
def stub(tmp_path):
    """A fake solver: unsat iff the script asserts both x < 0 and its negation."""
    path = tmp_path / "solver.py"
    path.write_text(
        "import sys\n"
        "text = sys.stdin.read()\n"
        "print('unsat' if '(assert (< s1 0))' in text and '(assert (not (< s1 0)))' in text else 'sat')\n")
    path.chmod(path.stat().st_mode | stat.S_IEXEC)
    return f"{sys.executable} {path}"


def test_oracle_through_stub(stub):
    o = SmtLibOracle(stub)
    goal = mk_cmp("<", x, int_lit(0))
    assert o.entails([goal], goal) is Verdict.VALID
    assert o.entails([], goal) is Verdict.UNKNOWN
    assert o.satisfiable([goal]) is Verdict.VALID


def test_missing_solver_is_unknown():
    o = SmtLibOracle("/nonexistent/solver")
    assert o.entails([], mk_cmp("<", x, int_lit(0))) is Verdict.UNKNOWN
