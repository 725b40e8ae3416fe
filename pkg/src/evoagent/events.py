"""Append-only, replayable event log.

One line-delimited UTF-8 file per session stream plus a JSON index. Records
are immutable once appended; sequence numbers are dense per stream starting
at 1. Determinism checks compare logs with volatile fields (wall-clock
timestamps, measured latencies/durations) stripped.
"""
from __future__ import annotations

import hashlib
import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterator

from .errors import ReplayError, StateError

# Keys whose values depend on wall-clock time and are excluded from log
# comparisons and state hashes.
VOLATILE_KEYS = frozenset({"wall_time", "latency_ms", "duration_ms", "created_at"})


@dataclass(frozen=True)
class Event:
    global_seq: int
    session_id: str
    kind: str
    payload: dict[str, Any]
    wall_time: float

    def to_record(self) -> dict[str, Any]:
        return {
            "global_seq": self.global_seq,
            "session_id": self.session_id,
            "kind": self.kind,
            "payload": self.payload,
            "wall_time": self.wall_time,
        }

    @classmethod
    def from_record(cls, record: dict[str, Any]) -> "Event":
        return cls(
            global_seq=record["global_seq"],
            session_id=record["session_id"],
            kind=record["kind"],
            payload=record["payload"],
            wall_time=record["wall_time"],
        )


def strip_volatile(value: Any) -> Any:
    """Recursively drop volatile keys from a JSON-like structure."""
    if isinstance(value, dict):
        return {k: strip_volatile(v) for k, v in value.items() if k not in VOLATILE_KEYS}
    if isinstance(value, list):
        return [strip_volatile(v) for v in value]
    return value


def canonical_json(value: Any) -> str:
    """Stable serialization used for hashing and content identity."""
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def content_hash(value: Any) -> str:
    return hashlib.sha256(canonical_json(value).encode("utf-8")).hexdigest()


def normalized_log(events: list[Event]) -> list[dict[str, Any]]:
    """Event records with volatile fields removed, for determinism checks."""
    return [strip_volatile(e.to_record()) for e in events]


@dataclass
class _Stream:
    session_id: str
    path: Path
    closed: bool = False
    events: list[Event] = field(default_factory=list)
    cond: threading.Condition = field(default_factory=threading.Condition)

    @property
    def last_seq(self) -> int:
        return self.events[-1].global_seq if self.events else 0


@dataclass
class ReplayedStream:
    """Result of reading a stream back from disk."""

    events: list[Event]
    truncated: bool
    truncated_at: int | None  # seq of the last intact event before truncation


class EventStore:
    """File-backed event log with per-stream single-writer semantics."""

    def __init__(self, root: str | Path, fsync: bool = False):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._fsync = fsync
        self._lock = threading.RLock()
        self._streams: dict[str, _Stream] = {}
        self._load_index()

    # -- index ------------------------------------------------------------

    @property
    def _index_path(self) -> Path:
        return self.root / "index.json"

    def _load_index(self) -> None:
        if not self._index_path.exists():
            return
        index = json.loads(self._index_path.read_text("utf-8"))
        for session_id, meta in index.items():
            stream = _Stream(session_id, self.root / meta["file"], closed=meta["closed"])
            self._streams[session_id] = stream

    def _save_index(self) -> None:
        index = {
            sid: {"file": s.path.name, "closed": s.closed}
            for sid, s in self._streams.items()
        }
        self._index_path.write_text(json.dumps(index, indent=2, sort_keys=True), "utf-8")

    # -- stream lifecycle ---------------------------------------------------

    def open_stream(self, session_id: str) -> None:
        with self._lock:
            if session_id in self._streams:
                raise StateError(f"stream already exists: {session_id}")
            stream = _Stream(session_id, self.root / f"{session_id}.jsonl")
            stream.path.touch()
            self._streams[session_id] = stream
            self._save_index()

    def close_stream(self, session_id: str) -> None:
        stream = self._require(session_id)
        with stream.cond:
            stream.closed = True
            stream.cond.notify_all()
        with self._lock:
            self._save_index()

    def is_closed(self, session_id: str) -> bool:
        return self._require(session_id).closed

    def sessions(self) -> list[str]:
        with self._lock:
            return sorted(self._streams)

    def _require(self, session_id: str) -> _Stream:
        with self._lock:
            stream = self._streams.get(session_id)
        if stream is None:
            raise ReplayError(f"unknown session: {session_id}")
        return stream

    # -- append / read ------------------------------------------------------

    def append(self, session_id: str, kind: str, payload: dict[str, Any]) -> int:
        """Append one event; durable (flushed) before return. Returns its seq."""
        stream = self._require(session_id)
        with stream.cond:
            if stream.closed:
                raise StateError(f"stream closed: {session_id}")
            self._hydrate(stream)
            event = Event(
                global_seq=stream.last_seq + 1,
                session_id=session_id,
                kind=kind,
                payload=payload,
                wall_time=time.time(),
            )
            line = json.dumps(event.to_record(), ensure_ascii=False)
            with stream.path.open("a", encoding="utf-8") as fh:
                fh.write(line + "\n")
                fh.flush()
                if self._fsync:
                    import os

                    os.fsync(fh.fileno())
            stream.events.append(event)
            stream.cond.notify_all()
            return event.global_seq

    def _hydrate(self, stream: _Stream) -> None:
        """Load events from disk if this stream was found via the index."""
        if stream.events or not stream.path.exists():
            return
        if stream.path.stat().st_size == 0:
            return
        replayed = _read_file(stream.path, stream.session_id)
        if replayed.truncated:
            raise ReplayError(
                f"stream {stream.session_id} is truncated after seq {replayed.truncated_at}"
            )
        stream.events = replayed.events

    def read(self, session_id: str) -> ReplayedStream:
        """All events of a stream, with corruption and truncation checks."""
        stream = self._require(session_id)
        with stream.cond:
            if stream.events:
                return ReplayedStream(list(stream.events), truncated=False, truncated_at=None)
        return _read_file(stream.path, session_id)

    def events(self, session_id: str) -> list[Event]:
        """Events of an intact stream; raises ReplayError when truncated."""
        replayed = self.read(session_id)
        if replayed.truncated:
            raise ReplayError(
                f"stream {session_id} is truncated after seq {replayed.truncated_at}"
            )
        return replayed.events

    # -- subscription ---------------------------------------------------------

    def subscribe(
        self,
        session_id: str,
        from_seq: int = 1,
        poll_timeout: float = 0.2,
        stop: Callable[[], bool] | None = None,
    ) -> Iterator[Event]:
        """Yield events with seq >= from_seq in order, then follow live appends.

        Ends when the stream is closed and fully delivered. Delivery is
        at-least-once from the consumer's point of view; dedupe by seq.
        """
        stream = self._require(session_id)
        with stream.cond:
            self._hydrate(stream)
        next_seq = max(1, from_seq)
        while True:
            with stream.cond:
                batch = [e for e in stream.events if e.global_seq >= next_seq]
                if not batch:
                    if stream.closed:
                        return
                    stream.cond.wait(timeout=poll_timeout)
                    batch = [e for e in stream.events if e.global_seq >= next_seq]
            for event in batch:
                yield event
                next_seq = event.global_seq + 1
            if stop is not None and stop():
                return


def _read_file(path: Path, session_id: str) -> ReplayedStream:
    if not path.exists():
        raise ReplayError(f"unknown session: {session_id}")
    raw = path.read_bytes()
    events: list[Event] = []
    truncated = False
    if raw and not raw.endswith(b"\n"):
        truncated = True
        raw = raw[: raw.rfind(b"\n") + 1] if b"\n" in raw else b""
    for lineno, line in enumerate(raw.decode("utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            event = Event.from_record(record)
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ReplayError(f"corrupt record at seq {lineno} in {session_id}: {exc}") from exc
        if event.global_seq != len(events) + 1:
            raise ReplayError(
                f"sequence gap in {session_id}: expected {len(events) + 1}, got {event.global_seq}"
            )
        events.append(event)
    return ReplayedStream(events, truncated=truncated, truncated_at=len(events) if truncated else None)
