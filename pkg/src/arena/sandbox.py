"""Sandboxed compilation and execution of untrusted guest programs.

Each run gets a throwaway working directory and a child process that, before
exec, moves into its own session, detaches from the host network namespace,
applies kernel resource limits, and drops to an unprivileged uid. Limits are
enforced by the kernel (RLIMIT_CPU/AS/FSIZE) plus a wall-clock watchdog that
kills the whole process group, so runaway guests cannot outlive a run.

Accounting comes from wait4 rusage: cpu time is user+system, peak memory is
ru_maxrss. Stdout is capped by truncating on read; the file-size rlimit sits
well above the cap so truncation, not SIGXFSZ, is the common path.
"""

from __future__ import annotations

import ctypes
import os
import pwd
import resource
import shutil
import signal
import subprocess
import tempfile
import threading
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Optional, Sequence

from .errors import (
    ConfigError,
    DuplicateRuntimeError,
    SandboxSetupError,
    UnknownRuntimeError,
)

__all__ = [
    "CompileFailure",
    "CompiledArtifact",
    "GuestRuntime",
    "RunLimits",
    "RunResult",
    "RunStatus",
    "RuntimeRegistry",
    "Sandbox",
    "default_registry",
]

CLONE_NEWNET = 0x40000000

_STDERR_CAP = 64 * 1024
_COMPILE_LOG_CAP = 16 * 1024
# rusage cannot pinpoint the address-space limit exactly, so
# treat a peak within this margin of the limit as having hit it.
_MEMORY_MARGIN_KIB = 2048
_MEMORY_MARKERS = (b"memoryerror", b"bad_alloc", b"out of memory", b"cannot allocate")

try:
    _libc: Optional[ctypes.CDLL] = ctypes.CDLL("libc.so.6", use_errno=True)
except OSError:  # pragma: no cover - glibc is assumed present
    _libc = None


def _nobody_ids() -> tuple[int, int]:
    try:
        entry = pwd.getpwnam("nobody")
        return entry.pw_uid, entry.pw_gid
    except KeyError:  # pragma: no cover
        return 65534, 65534


class RunStatus(str, Enum):
    OK = "ok"
    TIMEOUT = "timeout"
    MEMORY_EXCEEDED = "memory_exceeded"
    KILLED = "killed"
    NONZERO_EXIT = "nonzero_exit"


@dataclass(frozen=True)
class RunLimits:
    cpu_ms: int = 2000
    wall_ms: Optional[int] = None  # defaults to 2x cpu
    memory_kib: int = 262144
    output_cap_bytes: int = 8 * 1024 * 1024

    @property
    def effective_wall_ms(self) -> int:
        return self.wall_ms if self.wall_ms is not None else 2 * self.cpu_ms


@dataclass(frozen=True)
class RunResult:
    status: RunStatus
    exit_code: Optional[int]
    term_signal: Optional[int]
    stdout: bytes
    stdout_truncated: bool
    stderr: bytes
    cpu_ms: int
    wall_ms: int
    peak_memory_kib: int


@dataclass(frozen=True)
class GuestRuntime:
    """How to build and run one guest language."""

    guest_language_id: str
    run_command: tuple[str, ...]
    source_filename: str
    compile_command: Optional[tuple[str, ...]] = None

    def fill(self, command: Sequence[str], src: Path, bin_path: Path, dir_path: Path) -> list[str]:
        return [
            token.replace("{src}", str(src))
            .replace("{bin}", str(bin_path))
            .replace("{dir}", str(dir_path))
            for token in command
        ]


@dataclass(frozen=True)
class CompiledArtifact:
    runtime: GuestRuntime
    dir: Path
    src: Path
    bin: Path

    def cleanup(self) -> None:
        shutil.rmtree(self.dir, ignore_errors=True)


@dataclass(frozen=True)
class CompileFailure:
    log: str


class RuntimeRegistry:
    def __init__(self) -> None:
        self._runtimes: dict[str, GuestRuntime] = {}

    def register(self, runtime: GuestRuntime) -> None:
        if runtime.guest_language_id in self._runtimes:
            raise DuplicateRuntimeError(
                f"runtime {runtime.guest_language_id!r} registered twice"
            )
        self._runtimes[runtime.guest_language_id] = runtime

    def get(self, guest_language_id: str) -> GuestRuntime:
        runtime = self._runtimes.get(guest_language_id)
        if runtime is None:
            raise UnknownRuntimeError(f"no runtime for language {guest_language_id!r}")
        return runtime

    def languages(self) -> tuple[str, ...]:
        return tuple(sorted(self._runtimes))

    @classmethod
    def from_config(cls, entries: Sequence[dict[str, Any]]) -> "RuntimeRegistry":
        registry = cls()
        for i, entry in enumerate(entries):
            if not isinstance(entry, dict):
                raise ConfigError(f"runtime entry {i} must be an object")
            language = entry.get("language")
            run_command = entry.get("run_command")
            source_filename = entry.get("source_filename")
            if not isinstance(language, str) or not language:
                raise ConfigError(f"runtime entry {i}: missing language")
            if (
                not isinstance(run_command, list)
                or not run_command
                or not all(isinstance(t, str) for t in run_command)
            ):
                raise ConfigError(f"runtime entry {i}: run_command must be a list of strings")
            if not isinstance(source_filename, str) or not source_filename:
                raise ConfigError(f"runtime entry {i}: missing source_filename")
            compile_command = entry.get("compile_command")
            if compile_command is not None and (
                not isinstance(compile_command, list)
                or not all(isinstance(t, str) for t in compile_command)
            ):
                raise ConfigError(f"runtime entry {i}: compile_command must be a list of strings")
            registry.register(
                GuestRuntime(
                    guest_language_id=language,
                    run_command=tuple(run_command),
                    source_filename=source_filename,
                    compile_command=tuple(compile_command) if compile_command else None,
                )
            )
        return registry


def default_registry() -> RuntimeRegistry:
    registry = RuntimeRegistry()
    registry.register(
        GuestRuntime(
            guest_language_id="python3",
            run_command=("python3", "{src}"),
            source_filename="main.py",
        )
    )
    registry.register(
        GuestRuntime(
            guest_language_id="c",
            run_command=("{bin}",),
            source_filename="main.c",
            compile_command=("gcc", "-O2", "-std=c11", "-o", "{bin}", "{src}", "-lm"),
        )
    )
    registry.register(
        GuestRuntime(
            guest_language_id="cpp",
            run_command=("{bin}",),
            source_filename="main.cpp",
            compile_command=("g++", "-O2", "-std=c++17", "-o", "{bin}", "{src}"),
        )
    )
    return registry


_COMPILE_LIMITS = RunLimits(
    cpu_ms=20_000, wall_ms=60_000, memory_kib=2 * 1024 * 1024, output_cap_bytes=_COMPILE_LOG_CAP
)


def _make_guard(
    cpu_soft_s: int,
    data_bytes: int,
    fsize_bytes: int,
    drop_ids: Optional[tuple[int, int]],
    unshare_net: bool,
):
    def guard() -> None:
        os.setsid()
        if unshare_net and _libc is not None:
            if _libc.unshare(CLONE_NEWNET) != 0:
                errno = ctypes.get_errno()
                raise OSError(errno, f"unshare(CLONE_NEWNET) failed: {os.strerror(errno)}")
        resource.setrlimit(resource.RLIMIT_CPU, (cpu_soft_s, cpu_soft_s + 1))
        # DATA caps heap growth so allocators fail cleanly (MemoryError,
        # bad_alloc) instead of faulting at the address-space wall; AS stays
        # as a generous backstop against runaway mappings.
        resource.setrlimit(resource.RLIMIT_DATA, (data_bytes, data_bytes))
        as_bytes = 2 * data_bytes + 512 * 1024 * 1024
        resource.setrlimit(resource.RLIMIT_AS, (as_bytes, as_bytes))
        resource.setrlimit(resource.RLIMIT_FSIZE, (fsize_bytes, fsize_bytes))
        resource.setrlimit(resource.RLIMIT_NOFILE, (64, 64))
        resource.setrlimit(resource.RLIMIT_CORE, (0, 0))
        if drop_ids is not None:
            uid, gid = drop_ids
            os.setgid(gid)
            os.setgroups([])
            os.setuid(uid)
            # nproc only after the uid drop: as a hardening cap it applies to
            # the unprivileged uid, and setting it earlier can fail the drop.
            try:
                resource.setrlimit(resource.RLIMIT_NPROC, (128, 128))
            except (ValueError, OSError):
                pass

    return guard


class Sandbox:
    """Owns a root directory under which every run is staged and destroyed."""

    def __init__(self, root_dir: Optional[str | os.PathLike[str]] = None):
        if root_dir is None:
            self._root = Path(tempfile.mkdtemp(prefix="arena-sandbox-"))
            self._owns_root = True
        else:
            self._root = Path(root_dir)
            self._root.mkdir(parents=True, exist_ok=True)
            self._owns_root = False
        self._privileged = os.geteuid() == 0
        if self._privileged:
            os.chmod(self._root, 0o711)

    @property
    def root(self) -> Path:
        return self._root

    @property
    def privileged(self) -> bool:
        return self._privileged

    def close(self) -> None:
        if self._owns_root:
            shutil.rmtree(self._root, ignore_errors=True)

    # ---- staging ----

    def _new_dir(self, prefix: str, owned_by_guest: bool) -> Path:
        path = Path(tempfile.mkdtemp(prefix=prefix, dir=self._root))
        if owned_by_guest and self._privileged:
            uid, gid = _nobody_ids()
            os.chown(path, uid, gid)
        os.chmod(path, 0o700)
        return path

    def prepare(self, runtime: GuestRuntime, source: str) -> CompiledArtifact | CompileFailure:
        """Stage source and run the compile step, if the runtime has one."""
        art_dir = self._new_dir("art-", owned_by_guest=True)
        src = art_dir / runtime.source_filename
        src.write_text(source, encoding="utf-8")
        if self._privileged:
            uid, gid = _nobody_ids()
            os.chown(src, uid, gid)
        bin_path = art_dir / "prog"
        artifact = CompiledArtifact(runtime=runtime, dir=art_dir, src=src, bin=bin_path)
        if runtime.compile_command is None:
            self._seal(art_dir)
            return artifact
        argv = runtime.fill(runtime.compile_command, src, bin_path, art_dir)
        try:
            result = self._spawn(argv, cwd=art_dir, stdin_data=b"", limits=_COMPILE_LIMITS)
        except SandboxSetupError:
            shutil.rmtree(art_dir, ignore_errors=True)
            raise
        if result.status is not RunStatus.OK:
            log = (result.stderr or result.stdout)[:_COMPILE_LOG_CAP]
            shutil.rmtree(art_dir, ignore_errors=True)
            detail = log.decode("utf-8", errors="replace")
            if result.status is not RunStatus.NONZERO_EXIT:
                detail = f"compilation {result.status.value}\n{detail}"
            return CompileFailure(log=detail.strip())
        self._seal(art_dir)
        return artifact

    def _seal(self, art_dir: Path) -> None:
        """Hand the artifact back to the host so guests cannot rewrite it."""
        if not self._privileged:
            return
        for dirpath, dirnames, filenames in os.walk(art_dir):
            os.chown(dirpath, 0, 0)
            os.chmod(dirpath, 0o755)
            for name in filenames:
                fpath = os.path.join(dirpath, name)
                os.chown(fpath, 0, 0)
                mode = os.stat(fpath).st_mode & 0o777
                os.chmod(fpath, 0o755 if mode & 0o100 else 0o644)

    def execute(
        self,
        artifact: CompiledArtifact,
        stdin_data: bytes,
        limits: RunLimits,
        extra_argv: Sequence[str] = (),
    ) -> RunResult:
        runtime = artifact.runtime
        argv = runtime.fill(runtime.run_command, artifact.src, artifact.bin, artifact.dir)
        argv.extend(extra_argv)
        return self._spawn(argv, cwd=None, stdin_data=stdin_data, limits=limits)

    # ---- the actual run ----

    def _spawn(
        self,
        argv: Sequence[str],
        cwd: Optional[Path],
        stdin_data: bytes,
        limits: RunLimits,
    ) -> RunResult:
        exe = shutil.which(argv[0]) if "/" not in argv[0] else argv[0]
        if exe is None or not os.path.exists(exe):
            raise SandboxSetupError(f"runtime binary {argv[0]!r} not found")
        argv = [exe, *argv[1:]]

        io_dir = self._new_dir("io-", owned_by_guest=False)
        work_dir = self._new_dir("run-", owned_by_guest=True)
        run_cwd = cwd if cwd is not None else work_dir

        stdin_path = io_dir / "stdin"
        stdout_path = io_dir / "stdout"
        stderr_path = io_dir / "stderr"
        stdin_path.write_bytes(stdin_data)

        env = {
            "PATH": "/usr/local/bin:/usr/bin:/bin",
            "HOME": str(work_dir),
            "TMPDIR": str(work_dir),
            "LC_ALL": "C.UTF-8",
            "PYTHONDONTWRITEBYTECODE": "1",
        }
        cpu_soft_s = max(1, -(-limits.cpu_ms // 1000))
        fsize = max(2 * limits.output_cap_bytes, 1024 * 1024)
        guard = _make_guard(
            cpu_soft_s=cpu_soft_s,
            data_bytes=limits.memory_kib * 1024,
            fsize_bytes=fsize,
            drop_ids=_nobody_ids() if self._privileged else None,
            unshare_net=self._privileged,
        )

        wall_killed = threading.Event()
        proc: Optional[subprocess.Popen] = None
        try:
            with open(stdin_path, "rb") as fin, open(stdout_path, "wb") as fout, open(
                stderr_path, "wb"
            ) as ferr:
                try:
                    proc = subprocess.Popen(
                        argv,
                        stdin=fin,
                        stdout=fout,
                        stderr=ferr,
                        cwd=str(run_cwd),
                        env=env,
                        preexec_fn=guard,
                        close_fds=True,
                    )
                except (OSError, subprocess.SubprocessError) as exc:
                    raise SandboxSetupError(f"failed to start guest: {exc}") from exc

                def _wall_kill() -> None:
                    wall_killed.set()
                    try:
                        os.killpg(proc.pid, signal.SIGKILL)
                    except (ProcessLookupError, PermissionError):
                        pass

                timer = threading.Timer(limits.effective_wall_ms / 1000.0, _wall_kill)
                timer.daemon = True
                timer.start()
                started = time.monotonic()
                try:
                    _, status, rusage = os.wait4(proc.pid, 0)
                finally:
                    timer.cancel()
                    try:
                        os.killpg(proc.pid, signal.SIGKILL)
                    except (ProcessLookupError, PermissionError):
                        pass
                wall_ms = int((time.monotonic() - started) * 1000)
                proc.returncode = 0  # reaped via wait4; stop Popen from waiting again

            exit_code: Optional[int] = None
            term_signal: Optional[int] = None
            if os.WIFSIGNALED(status):
                term_signal = os.WTERMSIG(status)
            elif os.WIFEXITED(status):
                exit_code = os.WEXITSTATUS(status)

            cpu_ms = int((rusage.ru_utime + rusage.ru_stime) * 1000)
            peak_kib = int(rusage.ru_maxrss)

            stdout, truncated = self._read_capped(stdout_path, limits.output_cap_bytes)
            stderr, _ = self._read_capped(stderr_path, _STDERR_CAP)

            status_cls = self._classify(
                exit_code=exit_code,
                term_signal=term_signal,
                cpu_ms=cpu_ms,
                peak_kib=peak_kib,
                stderr=stderr,
                limits=limits,
                wall_killed=wall_killed.is_set(),
            )
            return RunResult(
                status=status_cls,
                exit_code=exit_code,
                term_signal=term_signal,
                stdout=stdout,
                stdout_truncated=truncated,
                stderr=stderr,
                cpu_ms=cpu_ms,
                wall_ms=wall_ms,
                peak_memory_kib=peak_kib,
            )
        finally:
            shutil.rmtree(work_dir, ignore_errors=True)
            shutil.rmtree(io_dir, ignore_errors=True)

    @staticmethod
    def _read_capped(path: Path, cap: int) -> tuple[bytes, bool]:
        with open(path, "rb") as fh:
            data = fh.read(cap + 1)
        if len(data) > cap:
            return data[:cap], True
        return data, False

    @staticmethod
    def _classify(
        exit_code: Optional[int],
        term_signal: Optional[int],
        cpu_ms: int,
        peak_kib: int,
        stderr: bytes,
        limits: RunLimits,
        wall_killed: bool,
    ) -> RunStatus:
        if wall_killed or term_signal == signal.SIGXCPU or cpu_ms > limits.cpu_ms:
            return RunStatus.TIMEOUT
        failed = term_signal is not None or (exit_code is not None and exit_code != 0)
        if failed:
            lowered = stderr.lower()
            near_limit = peak_kib >= limits.memory_kib - _MEMORY_MARGIN_KIB
            if near_limit or any(marker in lowered for marker in _MEMORY_MARKERS):
                return RunStatus.MEMORY_EXCEEDED
            if term_signal is not None:
                return RunStatus.KILLED
            return RunStatus.NONZERO_EXIT
        return RunStatus.OK
