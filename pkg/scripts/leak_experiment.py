#!/usr/bin/env python3
"""Measure how far a leaked answer key can move the scoreboard.

Simulates a board of users with distinct skill, then adds one problem that
every user suddenly solves (the situation a leaked test set produces) and
reports the per-user point shift. Because a universally solved problem
pays no challenge points, each shift stays within (0, 1] no matter how
many points the problem was nominally worth.

    python3 scripts/leak_experiment.py --users 8 --problems 12 --seed 7
"""

import argparse
import random
import shutil
import sys
import tempfile
from fractions import Fraction

from arena.model import (
    AttemptPolicy,
    CanonicalSolution,
    CaseOutcome,
    CaseResult,
    GeneratorKind,
    Problem,
    ProblemStatus,
    Provenance,
    SubmissionMode,
    UserAccount,
    UserGroup,
    Verdict,
)
from arena.scoring import ScoringEngine, format_points
from arena.store import Store


class Board:
    """Store plus engine with verdicts stamped directly; no sandbox runs."""

    def __init__(self, root: str):
        self.store = Store(f"{root}/state.jsonl")
        self.engine = ScoringEngine(self.store)

    def user(self, name: str) -> str:
        uid = self.store.next_uid()
        self.store.put_user(
            UserAccount(
                uid=uid,
                name=name,
                group=UserGroup.GENERATOR,
                generator_kind=GeneratorKind.HUMAN,
                attempt_policy=AttemptPolicy.UNLIMITED,
                secret_hash="-",
            )
        )
        return uid

    def problem(self, pid: str, bps: int) -> str:
        self.store.put_problem(
            Problem(
                pid=pid,
                title=pid,
                statement="-",
                bps=Fraction(bps),
                canonical_solutions=(CanonicalSolution("python3", "pass"),),
            )
        )
        self.store.add_test_cases(pid, [(b"", b"")], Provenance.imported())
        self.engine.on_problem_changed(
            self.store.set_problem_status(pid, ProblemStatus.ACTIVE)
        )
        return pid

    def judge(self, uid: str, pid: str, accepted: bool, ms: int = 0):
        sub = self.store.record_submission(pid, uid, "python3", SubmissionMode.CODE, "-")
        if accepted:
            done = self.store.finalize_submission(
                sub.sid,
                Verdict.ACCEPTED,
                (CaseResult("c1", CaseOutcome.PASS, ms, 64, ""),),
                total_cpu_ms=ms,
            )
        else:
            done = self.store.finalize_submission(sub.sid, Verdict.WRONG_ANSWER)
        self.engine.on_submission_judged(done)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--users", type=int, default=8)
    parser.add_argument("--problems", type=int, default=12)
    parser.add_argument("--leak-bps", type=int, default=40,
                        help="nominal worth of the leaked problem")
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()

    rnd = random.Random(args.seed)
    root = tempfile.mkdtemp(prefix="arena-leak-")
    board = Board(root)
    try:
        # skill gradient: user i solves a problem with probability (i+1)/(n+1)
        users = [board.user(f"user-{i:02d}") for i in range(args.users)]
        for p in range(args.problems):
            pid = board.problem(f"p{p:02d}", bps=rnd.randint(1, 10))
            for i, uid in enumerate(users):
                if rnd.random() < 0.8:  # most users attempt most problems
                    solves = rnd.random() < (i + 1) / (args.users + 1)
                    board.judge(uid, pid, solves, ms=rnd.randint(1, 500))

        before = {e.uid: e.dp for e in board.engine.ranking()}
        order_before = [e.uid for e in board.engine.ranking()]

        leaked = board.problem("leaked", bps=args.leak_bps)
        for uid in users:
            board.judge(uid, leaked, True, ms=rnd.randint(1, 500))

        after = {e.uid: e.dp for e in board.engine.ranking()}
        order_after = [e.uid for e in board.engine.ranking()]

        name = {uid: board.store.get_user(uid).name for uid in users}
        print(f"leaked problem nominally worth {args.leak_bps} points, "
              f"solved by all {args.users} users\n")
        print(f"{'user':<10} {'before':>8} {'after':>8} {'shift':>7}")
        worst = Fraction(0)
        for uid in sorted(users, key=lambda u: -after[u]):
            delta = after[uid] - before.get(uid, Fraction(0))
            worst = max(worst, delta)
            print(f"{name[uid]:<10} {format_points(before.get(uid, Fraction(0))):>8} "
                  f"{format_points(after[uid]):>8} {'+' + format_points(delta):>7}")
        print(f"\nlargest shift: {format_points(worst)} points "
              f"(hard ceiling is 1.00, challenge share fully damped)")
        moved = sum(1 for a, b in zip(order_before, order_after) if a != b)
        print(f"rank positions changed among prior entrants: {moved}")
        return 0
    finally:
        board.store.close()
        shutil.rmtree(root, ignore_errors=True)


if __name__ == "__main__":
    sys.exit(main())
