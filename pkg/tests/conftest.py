from pathlib import Path

import pytest

from gradver.engine import Strategy, Verifier
from gradver.parser import parse
from gradver.typecheck import typecheck

CORPUS = Path(__file__).resolve().parents[1] / "src" / "gradver" / "corpus"


def load_text(text: str, name: str = "<test>"):
    return typecheck(parse(text, name))


def load_corpus(name: str):
    path = CORPUS / name
    return typecheck(parse(path.read_text(), str(path)))


def verify_text(text: str, strategy: Strategy = Strategy.RETENTIVE, **kw):
    return Verifier(load_text(text), strategy, **kw).verify_all()


def check_keys(result):
    """Checks as comparable tuples, branch context included."""
    return {(c.loc.line, c.loc.col, c.kind, c.payload,
             tuple((e.cond, e.origin_loc.line, e.origin_loc.col, e.expected) for e in c.context))
            for c in result.checks}


@pytest.fixture
def corpus():
    return load_corpus


NODE = "struct Node { int data; struct Node *next; };\n"
