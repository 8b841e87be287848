"""Random-program soundness fuzzing and oracle differential testing.

    python scripts/fuzz_soundness.py --programs 500 --queries 10000 --seed 0
"""

import argparse
import random
import sys
import time

from gradver.engine import Strategy
from gradver.fuzz import agrees, random_program, random_query, soundness_run
from gradver.oracle import BuiltinOracle


def fuzz_programs(n: int, seed: int, strategy: Strategy, show: int) -> int:
    rng = random.Random(seed)
    accepted = runs = failed_checks = crashy = 0
    start = time.perf_counter()
    for _ in range(n):
        text = random_program(rng)
        rep = soundness_run(text, strategy)
        accepted += rep.accepted
        runs += rep.runs
        failed_checks += rep.check_failures
        if rep.crashes:
            crashy += 1
            if crashy <= show:
                print(text)
                print("\n".join(rep.crashes[:3]))
    print(f"programs={n} accepted={accepted} runs={runs} check_failures={failed_checks} "
          f"crashing_programs={crashy} strategy={strategy.value} time={time.perf_counter() - start:.1f}s")
    return crashy


def fuzz_oracle(n: int, seed: int) -> int:
    rng = random.Random(seed)
    oracle = BuiltinOracle()
    wrong = 0
    start = time.perf_counter()
    for _ in range(n):
        q = random_query(rng)
        if not agrees(oracle.entails(q.facts, q.goal), q.facts, q.goal):
            wrong += 1
    print(f"queries={n} disagreements={wrong} time={time.perf_counter() - start:.1f}s")
    return wrong


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--programs", type=int, default=500)
    ap.add_argument("--queries", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--strategy", choices=[s.value for s in Strategy], default="retentive")
    ap.add_argument("--show", type=int, default=3, help="print at most this many crashing programs")
    ns = ap.parse_args()
    bad = fuzz_programs(ns.programs, ns.seed, Strategy(ns.strategy), ns.show)
    bad += fuzz_oracle(ns.queries, ns.seed)
    return 1 if bad else 0


if __name__ == "__main__":
    sys.exit(main())
