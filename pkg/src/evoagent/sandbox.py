"""Isolated execution of generated scripts.

v1 isolation is a subprocess with a dedicated working directory, a scrubbed
environment, POSIX resource limits, and an audit-hook guard (installed via a
sitecustomize injected on PYTHONPATH) that blocks file writes outside the
workspace and, by default, network sockets. Container/namespace isolation is
a documented upgrade path.
"""
from __future__ import annotations

import hashlib
import importlib.util
import os
import re
import shutil
import signal
import subprocess
import sys
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from .errors import SandboxBusyError, StateError

TRUNCATION_MARKER = "\n...[truncated]"

_GUARD_SOURCE = '''\
"""Sandbox guard installed on interpreter startup via PYTHONPATH."""
import os
import sys

_ROOT = os.environ.get("EVOAGENT_SANDBOX_ROOT", "")
_NET_DENIED = os.environ.get("EVOAGENT_SANDBOX_NET", "denied") == "denied"
_WRITE_FLAGS = os.O_WRONLY | os.O_RDWR | os.O_APPEND | os.O_CREAT | os.O_TRUNC
_ALLOWED = ("/dev/null",)


def _inside_root(path):
    if isinstance(path, int):  # file descriptor, already opened
        return True
    try:
        path = os.fsdecode(path)
    except (TypeError, ValueError):
        return True
    if path in _ALLOWED:
        return True
    resolved = os.path.realpath(os.path.join(os.getcwd(), path))
    return resolved == _ROOT or resolved.startswith(_ROOT + os.sep)


def _guard(event, args):
    if not _ROOT:
        return
    if event == "open":
        path, mode, flags = args
        writing = False
        if mode is not None:
            writing = any(c in mode for c in "wax+")
        else:
            writing = bool(flags & _WRITE_FLAGS)
        if writing and not _inside_root(path):
            raise RuntimeError("sandbox: write outside workspace blocked: %r" % (path,))
    elif event in ("os.mkdir", "os.rmdir", "os.remove", "shutil.rmtree"):
        if args and not _inside_root(args[0]):
            raise RuntimeError("sandbox: %s outside workspace blocked: %r" % (event, args[0]))
    elif event == "os.rename":
        for p in args[:2]:
            if not _inside_root(p):
                raise RuntimeError("sandbox: rename outside workspace blocked: %r" % (p,))
    elif event == "socket.__new__" and _NET_DENIED:
        # args: (self, family, type, proto); block internet families only
        if len(args) >= 2 and args[1] in (2, 10):  # AF_INET, AF_INET6
            raise RuntimeError("sandbox: network access denied")


sys.addaudithook(_guard)
'''


@dataclass
class ResourceLimits:
    wall_clock: float = 30.0  # seconds
    cpu_time: float | None = None  # seconds
    memory: int | None = None  # bytes
    network: str = "denied"  # denied | allowlist

    def to_dict(self) -> dict:
        return {
            "wall_clock": self.wall_clock,
            "cpu_time": self.cpu_time,
            "memory": self.memory,
            "network": self.network,
        }


@dataclass
class Workspace:
    id: str
    root_dir: Path
    env_spec: list[str]
    limits: ResourceLimits
    created_at: float
    provision_report: list[tuple[str, bool]] = field(default_factory=list)
    _busy: bool = field(default=False, repr=False)
    _destroyed: bool = field(default=False, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def artifacts_dir(self) -> Path:
        return self.root_dir / "artifacts"

    @property
    def script_path(self) -> Path:
        return self.root_dir / "script.py"


@dataclass
class ExecutionResult:
    exit_status: int | str  # exit code, or killed reason: timeout | memory | cpu
    stdout: str
    stderr: str
    duration_ms: float
    artifacts: list[tuple[str, int, str]]  # (relative path, size, sha256)

    @property
    def failed(self) -> bool:
        return self.exit_status != 0

    def to_dict(self) -> dict:
        return {
            "exit_status": self.exit_status,
            "stdout": self.stdout,
            "stderr": self.stderr,
            "duration_ms": self.duration_ms,
            "artifacts": [list(a) for a in self.artifacts],
        }


class Sandbox:
    """Creates workspaces and runs scripts inside them."""

    GRACE_SECONDS = 5.0

    def __init__(self, base_dir: str | Path, stream_cap: int = 65536):
        # absolute: children run with cwd inside the workspace, so every
        # path handed to them must survive the cwd change
        self.base_dir = Path(base_dir).resolve()
        self.base_dir.mkdir(parents=True, exist_ok=True)
        self.stream_cap = stream_cap
        # resume past leftover workspaces so instances sharing a base_dir
        # (bench repetitions, restarts) never collide on ids
        existing = (
            int(m.group(1))
            for p in self.base_dir.iterdir()
            if (m := re.fullmatch(r"w-(\d{4,})", p.name))
        )
        self._counter = max(existing, default=0)
        self._counter_lock = threading.Lock()

    def create_workspace(
        self, env_spec: list[str] | None = None, limits: ResourceLimits | None = None
    ) -> Workspace:
        """Fresh directory with best-effort dependency provisioning.

        Provisioning failures are reported in ``provision_report`` and
        ``provision.log``; the workspace stays usable for dependency-free
        scripts.
        """
        env_spec = list(env_spec or [])
        limits = limits or ResourceLimits()
        with self._counter_lock:
            self._counter += 1
            workspace_id = f"w-{self._counter:04d}"
        root = self.base_dir / workspace_id
        root.mkdir(parents=True)
        (root / "artifacts").mkdir()
        guard_dir = root / "_guard"
        guard_dir.mkdir()
        (guard_dir / "sitecustomize.py").write_text(_GUARD_SOURCE, "utf-8")

        report = []
        lines = []
        for dep in env_spec:
            ok = _dependency_available(dep)
            report.append((dep, ok))
            lines.append(f"{'ok' if ok else 'missing'} {dep}")
        (root / "provision.log").write_text("\n".join(lines) + ("\n" if lines else ""), "utf-8")

        return Workspace(
            id=workspace_id,
            root_dir=root,
            env_spec=env_spec,
            limits=limits,
            created_at=time.time(),
            provision_report=report,
        )

    def run_script(
        self, workspace: Workspace, script_text: str, args: list[str] | None = None
    ) -> ExecutionResult:
        """Execute a script; the result is data, never an exception.

        The script runs with the artifacts directory as its working
        directory so relative writes become captured artifacts. The whole
        process group is killed at the wall-clock limit.
        """
        if workspace._destroyed:
            raise StateError(f"workspace destroyed: {workspace.id}")
        if not workspace._lock.acquire(blocking=False):
            raise SandboxBusyError(f"workspace busy: {workspace.id}")
        workspace._busy = True
        try:
            return self._run_locked(workspace, script_text, args or [])
        finally:
            workspace._busy = False
            workspace._lock.release()

    def _run_locked(self, workspace: Workspace, script_text: str, args: list[str]) -> ExecutionResult:
        workspace.script_path.write_text(script_text, "utf-8")
        limits = workspace.limits
        env = self._child_env(workspace)

        def preexec():  # pragma: no cover - runs in the child
            os.setsid()
            import resource

            if limits.cpu_time is not None:
                cpu = max(1, int(limits.cpu_time))
                resource.setrlimit(resource.RLIMIT_CPU, (cpu, cpu + 1))
            if limits.memory is not None:
                resource.setrlimit(resource.RLIMIT_AS, (limits.memory, limits.memory))

        start = time.monotonic()
        proc = subprocess.Popen(
            [sys.executable, "-B", str(workspace.script_path), *args],
            cwd=workspace.artifacts_dir,
            env=env,
            stdin=subprocess.DEVNULL,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            close_fds=True,
            preexec_fn=preexec,
        )
        timed_out = False
        try:
            out, err = proc.communicate(timeout=limits.wall_clock)
        except subprocess.TimeoutExpired:
            timed_out = True
            _kill_tree(proc.pid)
            out, err = proc.communicate(timeout=self.GRACE_SECONDS)
        duration_ms = (time.monotonic() - start) * 1000.0

        stdout = self._cap(out.decode("utf-8", "replace"))
        stderr = self._cap(err.decode("utf-8", "replace"))
        exit_status: int | str = proc.returncode
        if timed_out:
            exit_status = "timeout"
        elif proc.returncode == -signal.SIGXCPU:
            exit_status = "cpu"
        elif proc.returncode != 0 and ("MemoryError" in stderr or proc.returncode == -signal.SIGKILL):
            exit_status = "memory"

        return ExecutionResult(
            exit_status=exit_status,
            stdout=stdout,
            stderr=stderr,
            duration_ms=duration_ms,
            artifacts=_collect_artifacts(workspace.artifacts_dir),
        )

    def destroy_workspace(self, workspace: Workspace) -> bool:
        """Remove the workspace directory; destroying twice is a no-op."""
        if workspace._busy:
            raise SandboxBusyError(f"workspace busy: {workspace.id}")
        if workspace._destroyed:
            return True
        shutil.rmtree(workspace.root_dir, ignore_errors=True)
        workspace._destroyed = True
        return True

    def _child_env(self, workspace: Workspace) -> dict[str, str]:
        # Strict whitelist: nothing from the parent environment except PATH
        # and locale, so secrets never leak into executed scripts.
        env = {
            "HOME": str(workspace.root_dir),
            "TMPDIR": str(workspace.root_dir),
            "PYTHONDONTWRITEBYTECODE": "1",
            "PYTHONPATH": str(workspace.root_dir / "_guard"),
            "EVOAGENT_SANDBOX_ROOT": str(workspace.root_dir.resolve()),
            "EVOAGENT_SANDBOX_NET": workspace.limits.network,
        }
        for key in ("PATH", "LANG", "LC_ALL"):
            value = os.environ.get(key)
            if value:
                env[key] = value
        return env

    def _cap(self, text: str) -> str:
        raw = text.encode("utf-8")
        if len(raw) <= self.stream_cap:
            return text
        return raw[: self.stream_cap].decode("utf-8", "ignore") + TRUNCATION_MARKER


def _dependency_available(name: str) -> bool:
    try:
        return importlib.util.find_spec(name) is not None
    except (ImportError, ValueError, ModuleNotFoundError):
        return False


def _kill_tree(pid: int) -> None:
    try:
        os.killpg(os.getpgid(pid), signal.SIGKILL)
    except (ProcessLookupError, PermissionError, OSError):
        try:
            os.kill(pid, signal.SIGKILL)
        except (ProcessLookupError, PermissionError, OSError):
            pass


def _collect_artifacts(artifacts_dir: Path) -> list[tuple[str, int, str]]:
    found = []
    for path in sorted(artifacts_dir.rglob("*")):
        if not path.is_file():
            continue
        data = path.read_bytes()
        rel = path.relative_to(artifacts_dir).as_posix()
        found.append((rel, len(data), hashlib.sha256(data).hexdigest()))
    return found
