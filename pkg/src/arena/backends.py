"""Prompt-mode resolution backends.

A prompt-mode submission carries natural-language text instead of code; a
backend turns that text into a program before judging. The bundled mock
backend is deterministic so pipelines can be exercised end to end without
an external model: a fenced code block inside the prompt is used verbatim,
and prompts without one map to a fixed stub chosen by hash.
"""

from __future__ import annotations

import hashlib
import re
from typing import Optional, Protocol

from .errors import BackendError

__all__ = ["GeneratorBackend", "MockGeneratorBackend", "extract_fenced_code"]

_FENCE_RE = re.compile(r"```[a-zA-Z0-9_+-]*\n(.*?)```", re.DOTALL)


def extract_fenced_code(prompt: str) -> Optional[str]:
    match = _FENCE_RE.search(prompt)
    if match is None:
        return None
    return match.group(1)


class GeneratorBackend(Protocol):
    backend_id: str

    def resolve(self, prompt: str, pid: str) -> str:
        """Produce source code for the prompt; raise BackendError on failure."""
        ...


_STUBS = (
    "import sys\nsys.stdout.write(sys.stdin.read())\n",
    "print(42)\n",
    "data = input()\nprint(len(data))\n",
)


class MockGeneratorBackend:
    """Offline stand-in for a code-generation model."""

    def __init__(self, backend_id: str = "mock", fail: bool = False):
        self.backend_id = backend_id
        self._fail = fail

    def resolve(self, prompt: str, pid: str) -> str:
        if self._fail:
            raise BackendError(self.backend_id, "backend unavailable")
        fenced = extract_fenced_code(prompt)
        if fenced is not None:
            return fenced
        digest = hashlib.sha256(f"{self.backend_id}|{pid}|{prompt}".encode()).digest()
        return _STUBS[digest[0] % len(_STUBS)]
