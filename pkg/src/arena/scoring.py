"""Collective scoring over exact rationals.

Each problem is worth less the more of its attempters have solved it: the
challenge component is the base point share scaled by one minus the solver
ratio, so a problem everyone cracks pays nothing. The efficiency component
is an inclusive cpu-time percentile among solvers: matching or beating every
recorded best run scores 1, the strictly slowest of k solvers scores 1/k,
and tied runtimes share a value. A user's total is the sum of both parts
over the counted problems they solved.

The engine keeps per-problem tallies and a running per-user total that it
adjusts by exact differences as verdict events arrive; `recompute` rebuilds
the same totals from raw submissions and is used to audit for drift before
a checkpoint is written.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from fractions import Fraction
from typing import Iterable, Optional, Sequence

from .errors import ValidationError
from .model import (
    CheckpointSnapshot,
    Problem,
    ProblemStatus,
    RankingEntry,
    Submission,
    Verdict,
)
from .store import Store

__all__ = [
    "ScoringEngine",
    "acceptance_rate",
    "challenge_score",
    "efficiency_score",
    "format_points",
    "format_percentage",
]

_LAST_ACCEPT_SENTINEL = datetime.max.replace(tzinfo=timezone.utc)


def acceptance_rate(solved_count: int, attempted_count: int) -> Fraction:
    """Share of attempting users who solved; zero before anyone attempts."""
    if attempted_count == 0:
        return Fraction(0)
    if solved_count > attempted_count or solved_count < 0:
        raise ValidationError("solver count out of range")
    return Fraction(solved_count, attempted_count)


def challenge_score(bps: Fraction, solved_count: int, attempted_count: int) -> Fraction:
    return bps * (1 - acceptance_rate(solved_count, attempted_count))


def efficiency_score(own_ms: int, solver_runtimes_ms: Sequence[int]) -> Fraction:
    """Inclusive percentile of one solver's best cpu time among all solvers."""
    if not solver_runtimes_ms:
        raise ValidationError("efficiency is defined only once somebody solved")
    not_faster = sum(1 for other in solver_runtimes_ms if own_ms <= other)
    if not_faster == 0:
        raise ValidationError("own runtime must be among the recorded runtimes")
    return Fraction(not_faster, len(solver_runtimes_ms))


def format_points(value: Fraction) -> str:
    """Exact two-decimal rendering, half away from zero."""
    if value < 0:
        return "-" + format_points(-value)
    hundredths = (value * 100 + Fraction(1, 2)).__floor__()
    return f"{hundredths // 100}.{hundredths % 100:02d}"


def format_percentage(value: Fraction) -> str:
    return format_points(value * 100)


@dataclass
class _ProblemTally:
    """Raw per-problem counts; kept current even while a problem is excluded."""

    bps: Fraction
    attempted: set[str]
    solved: set[str]
    best_ms: dict[str, int]


class ScoringEngine:
    def __init__(self, store: Store):
        self._store = store
        self._lock = threading.RLock()
        self._tallies: dict[str, _ProblemTally] = {}
        self._counted: set[str] = set()  # pids aggregated into totals
        self._contrib: dict[str, dict[str, Fraction]] = {}  # pid -> uid -> cs+es
        self._cs_es: dict[str, dict[str, tuple[Fraction, Fraction]]] = {}
        self._dp: dict[str, Fraction] = {}
        self._last_accept: dict[str, datetime] = {}
        self._seen_sids: set[str] = set()
        self.rebuild()

    # ---- event intake ----

    def rebuild(self) -> None:
        """Reset and replay the store; startup path and audit baseline."""
        with self._lock:
            self._tallies.clear()
            self._counted.clear()
            self._contrib.clear()
            self._cs_es.clear()
            self._dp.clear()
            self._last_accept.clear()
            self._seen_sids.clear()
            for problem in self._store.list_problems():
                self._ensure_tally(problem)
                if problem.status is ProblemStatus.ACTIVE:
                    self._counted.add(problem.pid)
            for sub in self._store.all_submissions():
                self._ingest(sub)

    def on_submission_judged(self, sub: Submission) -> None:
        with self._lock:
            self._ingest(sub)

    def on_problem_changed(self, problem: Problem) -> None:
        """Track activation state; inclusion in totals follows active status."""
        with self._lock:
            self._ensure_tally(problem)
            self._tallies[problem.pid].bps = problem.bps
            should_count = problem.status is ProblemStatus.ACTIVE
            if should_count and problem.pid not in self._counted:
                self._counted.add(problem.pid)
                self._refresh_problem(problem.pid)
            elif not should_count and problem.pid in self._counted:
                self._counted.discard(problem.pid)
                self._refresh_problem(problem.pid)

    def _ensure_tally(self, problem: Problem) -> None:
        if problem.pid not in self._tallies:
            self._tallies[problem.pid] = _ProblemTally(
                bps=problem.bps, attempted=set(), solved=set(), best_ms={}
            )

    def _ingest(self, sub: Submission) -> None:
        if sub.sid in self._seen_sids or not sub.verdict.counts_as_attempt:
            return
        self._seen_sids.add(sub.sid)
        tally = self._tallies.get(sub.pid)
        if tally is None:
            problem = self._store.get_problem(sub.pid)
            self._ensure_tally(problem)
            tally = self._tallies[sub.pid]
        tally.attempted.add(sub.uid)
        if sub.verdict is Verdict.ACCEPTED:
            tally.solved.add(sub.uid)
            assert sub.total_cpu_ms is not None
            best = tally.best_ms.get(sub.uid)
            if best is None or sub.total_cpu_ms < best:
                tally.best_ms[sub.uid] = sub.total_cpu_ms
            prev = self._last_accept.get(sub.uid)
            if prev is None or sub.submitted_at > prev:
                self._last_accept[sub.uid] = sub.submitted_at
        self._refresh_problem(sub.pid)

    def _refresh_problem(self, pid: str) -> None:
        """Re-derive one problem's contributions and apply the exact diff."""
        old = self._contrib.get(pid, {})
        new: dict[str, Fraction] = {}
        new_parts: dict[str, tuple[Fraction, Fraction]] = {}
        if pid in self._counted:
            tally = self._tallies[pid]
            if tally.solved:
                cs = challenge_score(tally.bps, len(tally.solved), len(tally.attempted))
                runtimes = list(tally.best_ms.values())
                for uid in tally.solved:
                    es = efficiency_score(tally.best_ms[uid], runtimes)
                    new[uid] = cs + es
                    new_parts[uid] = (cs, es)
        for uid in old.keys() | new.keys():
            delta = new.get(uid, Fraction(0)) - old.get(uid, Fraction(0))
            if delta:
                self._dp[uid] = self._dp.get(uid, Fraction(0)) + delta
        if new:
            self._contrib[pid] = new
            self._cs_es[pid] = new_parts
        else:
            self._contrib.pop(pid, None)
            self._cs_es.pop(pid, None)

    # ---- views ----

    def dp_of(self, uid: str) -> Fraction:
        with self._lock:
            return self._dp.get(uid, Fraction(0))

    def problem_breakdown(self, pid: str) -> dict[str, tuple[Fraction, Fraction]]:
        with self._lock:
            return dict(self._cs_es.get(pid, {}))

    def ranking(self) -> tuple[RankingEntry, ...]:
        with self._lock:
            active_count = len(self._counted)
            participants: set[str] = set()
            for pid in self._counted:
                participants |= self._tallies[pid].attempted
            entries = []
            for uid in participants:
                user = self._store.get_user(uid)
                solved_pids = sorted(
                    pid for pid in self._counted if uid in self._tallies[pid].solved
                )
                per_problem = tuple(
                    (pid, *self._cs_es[pid][uid]) for pid in solved_pids
                )
                pass_rate = (
                    Fraction(len(solved_pids), active_count)
                    if active_count
                    else Fraction(0)
                )
                entries.append(
                    RankingEntry(
                        uid=uid,
                        name=user.name,
                        dp=self._dp.get(uid, Fraction(0)),
                        pass_rate=pass_rate,
                        per_problem=per_problem,
                        last_accepted_at=self._last_accept.get(uid),
                    )
                )
            entries.sort(
                key=lambda e: (
                    -e.dp,
                    e.last_accepted_at or _LAST_ACCEPT_SENTINEL,
                    e.uid,
                )
            )
            return tuple(entries)

    # ---- audit and checkpoints ----

    def recompute(self) -> tuple[RankingEntry, ...]:
        """From-scratch ranking straight off the store, bypassing all caches."""
        fresh = ScoringEngine.__new__(ScoringEngine)
        fresh._store = self._store
        fresh._lock = threading.RLock()
        fresh._tallies = {}
        fresh._counted = set()
        fresh._contrib = {}
        fresh._cs_es = {}
        fresh._dp = {}
        fresh._last_accept = {}
        fresh._seen_sids = set()
        fresh.rebuild()
        return fresh.ranking()

    def audit(self) -> tuple[RankingEntry, ...]:
        """Verify the running totals against a recompute; raise on drift."""
        with self._lock:
            incremental = self.ranking()
            recomputed = self.recompute()
            if incremental != recomputed:
                raise ValidationError(
                    "scoring drift: incremental totals disagree with a recompute"
                )
            return incremental

    def write_checkpoint(self) -> CheckpointSnapshot:
        with self._lock:
            entries = self.audit()
            return self._store.record_checkpoint(entries)
