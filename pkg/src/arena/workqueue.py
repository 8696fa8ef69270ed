"""Fair judging queue.

Submissions are grouped per user and drained round-robin, so one user
dumping a burst cannot starve everyone else; within a user, order is FIFO.
Worker threads block on a condition variable and exit on stop().
"""

from __future__ import annotations

import logging
import threading
from collections import deque
from typing import Callable

__all__ = ["JudgeQueue"]

log = logging.getLogger("arena.queue")


class JudgeQueue:
    def __init__(self, handler: Callable[[str], None], workers: int = 1):
        self._handler = handler
        self._workers = workers
        self._cv = threading.Condition()
        self._per_user: dict[str, deque[str]] = {}
        self._turn_order: deque[str] = deque()
        self._stopping = False
        self._threads: list[threading.Thread] = []
        self._idle = 0

    def submit(self, uid: str, sid: str) -> None:
        with self._cv:
            if self._stopping:
                raise RuntimeError("queue is stopped")
            bucket = self._per_user.get(uid)
            if bucket is None:
                bucket = deque()
                self._per_user[uid] = bucket
            if not bucket:
                self._turn_order.append(uid)
            bucket.append(sid)
            self._cv.notify()

    def _take(self) -> str | None:
        """Pop the next sid round-robin; None means the queue is shutting down."""
        with self._cv:
            while True:
                if self._turn_order:
                    uid = self._turn_order.popleft()
                    bucket = self._per_user[uid]
                    sid = bucket.popleft()
                    if bucket:
                        self._turn_order.append(uid)
                    else:
                        del self._per_user[uid]
                    return sid
                if self._stopping:
                    return None
                self._idle += 1
                self._cv.notify_all()  # wake drain() waiters
                try:
                    self._cv.wait()
                finally:
                    self._idle -= 1

    def _worker(self) -> None:
        while True:
            sid = self._take()
            if sid is None:
                return
            try:
                self._handler(sid)
            except Exception:
                log.exception("judging %s failed", sid)

    def start(self) -> None:
        for i in range(self._workers):
            t = threading.Thread(target=self._worker, name=f"judge-{i}", daemon=True)
            t.start()
            self._threads.append(t)

    def drain(self, timeout: float = 300.0) -> bool:
        """Block until everything queued has been handed to a worker and
        all workers are idle again."""
        deadline = threading.Event()
        timer = threading.Timer(timeout, deadline.set)
        timer.daemon = True
        timer.start()
        try:
            with self._cv:
                while (self._turn_order or self._idle < len(self._threads)) and not deadline.is_set():
                    self._cv.wait(timeout=0.05)
                return not self._turn_order and self._idle == len(self._threads)
        finally:
            timer.cancel()

    def stop(self) -> None:
        with self._cv:
            self._stopping = True
            self._cv.notify_all()
        for t in self._threads:
            t.join(timeout=30)
        self._threads.clear()
