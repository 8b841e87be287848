"""Compare Naive and Retentive check sets on every corpus program (or given files).

    python scripts/differential.py [FILE ...]
"""

import argparse
import sys
from pathlib import Path

from gradver.engine import Strategy, Verifier
from gradver.parser import parse
from gradver.typecheck import typecheck

CORPUS = Path(__file__).resolve().parents[1] / "src" / "gradver" / "corpus"


def keys(result):
    return {(c.loc.line, c.loc.col, c.kind, c.payload, tuple(c.context)) for c in result.checks}


def compare(path: Path) -> list[str]:
    tp = typecheck(parse(path.read_text(), str(path)))
    ret = {r.name: r for r in Verifier(tp, Strategy.RETENTIVE).verify_all()}
    nai = {r.name: r for r in Verifier(tp, Strategy.NAIVE).verify_all()}
    rows = []
    for name in ret:
        r, n = ret[name], nai[name]
        if not (r.verified and n.verified):
            rows.append(f"{path.name}:{name}: retentive={r.status} naive={n.status}")
            continue
        kr, kn = keys(r), keys(n)
        # naive may split paths again, refining the contexts of the same obligation
        rel = "subset" if {k[:4] for k in kr} <= {k[:4] for k in kn} else "NOT A SUBSET"
        rows.append(f"{path.name}:{name}: retentive={len(kr)} naive={len(kn)} ({rel})")
    return rows


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("files", nargs="*", type=Path)
    ns = ap.parse_args()
    files = ns.files or sorted(CORPUS.glob("*.gvc"))
    bad = False
    for f in files:
        for row in compare(f):
            print(row)
            bad |= "NOT A SUBSET" in row
    return 1 if bad else 0


if __name__ == "__main__":
    sys.exit(main())
