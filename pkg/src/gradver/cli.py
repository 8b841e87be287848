"""Command-line entry point: ``gradver verify|emit-checks|run``.

Exit codes: 0 success, 1 static verification error, 2 failed run-time check,
3 unchecked crash, 64 usage error, 65 parse or type error.
"""

from __future__ import annotations

import argparse
import json
import sys
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

from gradver import checkgen, dynrun
from gradver.engine import Strategy, Verifier
from gradver.state import Origin, SymState
from gradver.oracle import BuiltinOracle
from gradver.parser import ParseError, parse
from gradver.smtlib import SmtLibOracle
from gradver.typecheck import CheckError, typecheck

EXIT_OK, EXIT_STATIC, EXIT_CHECK, EXIT_CRASH = 0, 1, 2, 3
EXIT_USAGE, EXIT_INPUT = 64, 65


class UsageError(Exception):
    pass


@dataclass
class CliConfig:
    command: str
    file: str
    strategy: Strategy = Strategy.RETENTIVE
    trace: bool = False
    oracle: str = "builtin"
    jobs: int = 1
    static_only: bool = False
    manifest: Optional[str] = None
    output: Optional[str] = None
    entry: Optional[str] = None
    args: list[str] = field(default_factory=list)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gradver", description="Gradual verifier for a small C0-like language.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in ("verify", "emit-checks", "run"):
        s = sub.add_parser(name)
        s.add_argument("file")
        s.add_argument("--strategy", choices=[x.value for x in Strategy], default="retentive")
        s.add_argument("--trace", action="store_true", help="stream engine events as JSON lines to stderr")
        s.add_argument("--oracle", default="builtin", help="builtin or smtlib2:<solver command>")
        s.add_argument("--jobs", type=int, default=1)
        s.add_argument("--static-only", action="store_true", help="treat imprecision as an error source")
        if name == "emit-checks":
            s.add_argument("-o", "--output")
        if name == "run":
            s.add_argument("--manifest")
            s.add_argument("--entry", required=True)
            s.add_argument("args", nargs="*")
    return p


def parse_config(argv: list[str]) -> CliConfig:
    ns, extra = build_parser().parse_known_args(argv)
    if extra and ns.command != "run":
        raise UsageError(f"unrecognized arguments: {' '.join(extra)}")
    if ns.command == "run":
        ns.args = list(ns.args) + extra
    if ns.jobs < 1:
        raise UsageError("--jobs must be positive")
    if ns.oracle != "builtin" and not ns.oracle.startswith("smtlib2:"):
        raise UsageError(f"unknown oracle {ns.oracle!r}")
    return CliConfig(command=ns.command, file=ns.file, strategy=Strategy(ns.strategy), trace=ns.trace,
                     oracle=ns.oracle, jobs=ns.jobs, static_only=ns.static_only,
                     manifest=getattr(ns, "manifest", None), output=getattr(ns, "output", None),
                     entry=getattr(ns, "entry", None), args=list(getattr(ns, "args", []) or []))


def make_oracle(spec: str):
    if spec == "builtin":
        return BuiltinOracle()
    return SmtLibOracle(spec[len("smtlib2:"):])


def _jsonable(v):
    if isinstance(v, SymState):
        return v.summary()
    if isinstance(v, Origin):
        return {"loc": str(v.loc), "state": v.state}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if v is None or isinstance(v, (bool, int, str)):
        return v
    if hasattr(v, "value") and hasattr(v, "name") and not isinstance(v, type):
        return getattr(v, "value")
    return repr(v) if not hasattr(v, "line") else str(v)


def stderr_tracer():
    lock = threading.Lock()

    def trace(rule: str, data: dict) -> None:
        line = json.dumps({"event": rule, **{k: _jsonable(x) for k, x in data.items()}}, sort_keys=True)
        with lock:
            print(line, file=sys.stderr)
    return trace


def load(path: str):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return typecheck(parse(text, path))


def verify(cfg: CliConfig, tp):
    verifier = Verifier(tp, cfg.strategy, make_oracle(cfg.oracle), static_only=cfg.static_only,
                        trace=stderr_tracer() if cfg.trace else None)
    names = [m.name for m in tp.program.methods]
    if cfg.jobs > 1:
        with ThreadPoolExecutor(cfg.jobs) as pool:
            results = list(pool.map(verifier.verify_method, names))
    else:
        results = [verifier.verify_method(n) for n in names]
    return verifier, results


def report(results, out=None) -> None:
    out = out or sys.stdout
    for r in results:
        if r.verified:
            print(f"{r.name}: verified ({len(r.checks)} checks)", file=out)
        else:
            print(f"{r.name}: error: {r.error}", file=out)


def cmd_verify(cfg: CliConfig, tp) -> int:
    _, results = verify(cfg, tp)
    report(results)
    return EXIT_OK if all(r.verified for r in results) else EXIT_STATIC


def cmd_emit(cfg: CliConfig, tp) -> int:
    _, results = verify(cfg, tp)
    text = checkgen.serialize_checks(results)
    if cfg.output:
        with open(cfg.output, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return EXIT_OK if all(r.verified for r in results) else EXIT_STATIC


def cmd_run(cfg: CliConfig, tp) -> int:
    verifier = Verifier(tp, cfg.strategy, make_oracle(cfg.oracle), static_only=cfg.static_only)
    if cfg.manifest:
        with open(cfg.manifest, encoding="utf-8") as fh:
            entries = checkgen.parse_manifest(fh.read(), cfg.file)
    else:
        entries = verifier.verify_all()
        failed = [r for r in entries if not r.verified]
        if failed:
            report(failed)
            return EXIT_STATIC
    if tp.program.method(cfg.entry) is None:
        raise UsageError(f"entry method {cfg.entry!r} not found")
    outcome = dynrun.run(tp, entries, cfg.entry, cfg.args, verifier.entry_checks(cfg.entry))
    if isinstance(outcome, dynrun.Completed):
        print(f"completed: {outcome.value!r} ({outcome.checks_executed} checks executed)")
        return EXIT_OK
    if isinstance(outcome, dynrun.CheckFailed):
        print(f"check failed at {outcome.check.loc.line}:{outcome.check.loc.col}: "
              f"{outcome.check.kind} {outcome.check.payload} (in {' > '.join(outcome.trace)})")
        return EXIT_CHECK
    where = f" at {outcome.loc.line}:{outcome.loc.col}" if outcome.loc else ""
    print(f"unchecked crash{where}: {outcome.description}")
    return EXIT_CRASH


def main(argv: Optional[list[str]] = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = parse_config(argv)
        tp = load(cfg.file)
        return {"verify": cmd_verify, "emit-checks": cmd_emit, "run": cmd_run}[cfg.command](cfg, tp)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, CheckError) as e:
        print(f"{e}", file=sys.stderr)
        return EXIT_INPUT
    except (dynrun.RuntimeFault, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
