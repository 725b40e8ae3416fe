"""Event store: dense sequences, durability, corruption detection, feeds."""
from __future__ import annotations

import json
import threading
import time

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evoagent import (
    Event,
    EventStore,
    ReplayError,
    StateError,
    canonical_json,
    content_hash,
    normalized_log,
    strip_volatile,
)

SID = "s-0001"


def make_store(tmp_path, n_events: int = 0) -> EventStore:
    store = EventStore(tmp_path / "events")
    store.open_stream(SID)
    for i in range(n_events):
        store.append(SID, "message", {"i": i})
    return store


def test_append_returns_dense_seqs_from_one(tmp_path):
    store = make_store(tmp_path)
    seqs = [store.append(SID, "message", {"i": i}) for i in range(10)]
    assert seqs == list(range(1, 11))
    assert [e.global_seq for e in store.events(SID)] == seqs


def test_read_round_trip_preserves_payloads(tmp_path):
    store = make_store(tmp_path)
    store.append(SID, "status", {"from": "planning", "to": "executing", "unicode": "géne"})
    fresh = EventStore(tmp_path / "events")
    events = fresh.events(SID)
    assert events[0].kind == "status"
    assert events[0].payload["unicode"] == "géne"


def test_closed_stream_rejects_append(tmp_path):
    store = make_store(tmp_path, 2)
    store.close_stream(SID)
    assert store.is_closed(SID)
    with pytest.raises(StateError, match="closed"):
        store.append(SID, "message", {})


def test_duplicate_stream_rejected(tmp_path):
    store = make_store(tmp_path)
    with pytest.raises(StateError, match="already exists"):
        store.open_stream(SID)


def test_unknown_session_is_replay_error(tmp_path):
    store = EventStore(tmp_path / "events")
    with pytest.raises(ReplayError, match="unknown session"):
        store.read("s-9999")


def test_appended_bytes_never_change(tmp_path):
    store = make_store(tmp_path, 3)
    path = tmp_path / "events" / f"{SID}.jsonl"
    before = path.read_bytes()
    store.append(SID, "message", {"later": True})
    assert path.read_bytes().startswith(before)


def test_corrupt_record_names_its_seq(tmp_path):
    store = make_store(tmp_path, 3)
    path = tmp_path / "events" / f"{SID}.jsonl"
    lines = path.read_text("utf-8").splitlines()
    lines[1] = "{not json"
    path.write_text("\n".join(lines) + "\n", "utf-8")
    fresh = EventStore(tmp_path / "events")
    with pytest.raises(ReplayError, match="seq 2"):
        fresh.read(SID)


def test_sequence_gap_detected(tmp_path):
    store = make_store(tmp_path, 3)
    path = tmp_path / "events" / f"{SID}.jsonl"
    text = path.read_text("utf-8").replace('"global_seq": 2', '"global_seq": 4')
    path.write_text(text, "utf-8")
    fresh = EventStore(tmp_path / "events")
    with pytest.raises(ReplayError, match="expected 2, got 4"):
        fresh.read(SID)


def test_truncated_tail_reported_not_raised_on_read(tmp_path):
    store = make_store(tmp_path, 3)
    path = tmp_path / "events" / f"{SID}.jsonl"
    raw = path.read_bytes()
    path.write_bytes(raw[:-7])  # chop into the final record
    fresh = EventStore(tmp_path / "events")
    replayed = fresh.read(SID)
    assert replayed.truncated
    assert replayed.truncated_at == 2
    assert [e.global_seq for e in replayed.events] == [1, 2]
    with pytest.raises(ReplayError, match="truncated after seq 2"):
        fresh.events(SID)
    with pytest.raises(ReplayError, match="truncated"):
        fresh.append(SID, "message", {})


def test_subscribe_catches_up_then_ends_on_close(tmp_path):
    store = make_store(tmp_path, 5)
    store.close_stream(SID)
    seqs = [e.global_seq for e in store.subscribe(SID)]
    assert seqs == [1, 2, 3, 4, 5]


def test_subscribe_resumes_from_seq(tmp_path):
    store = make_store(tmp_path, 6)
    store.close_stream(SID)
    assert [e.global_seq for e in store.subscribe(SID, from_seq=4)] == [4, 5, 6]


def test_subscribe_stop_snapshot(tmp_path):
    store = make_store(tmp_path, 4)
    # stream still open; the stop callback turns the feed into a snapshot
    seqs = [e.global_seq for e in store.subscribe(SID, stop=lambda: True)]
    assert seqs == [1, 2, 3, 4]


def test_subscribe_interleaves_live_appends_exactly_once(tmp_path):
    store = make_store(tmp_path)
    n = 40

    def writer():
        for i in range(n):
            store.append(SID, "message", {"i": i})
            if i % 7 == 0:
                time.sleep(0.002)
        store.close_stream(SID)

    thread = threading.Thread(target=writer)
    thread.start()
    seqs = [e.global_seq for e in store.subscribe(SID, poll_timeout=0.02)]
    thread.join()
    assert seqs == list(range(1, n + 1))  # in order, no gaps, no duplicates


def test_index_survives_restart(tmp_path):
    store = make_store(tmp_path, 2)
    store.open_stream("s-0002")
    store.close_stream(SID)
    fresh = EventStore(tmp_path / "events")
    assert fresh.sessions() == ["s-0001", "s-0002"]
    assert fresh.is_closed(SID)
    assert not fresh.is_closed("s-0002")


# -- volatile stripping and hashing -------------------------------------------


def test_normalized_log_drops_wall_clock_fields(tmp_path):
    store = make_store(tmp_path)
    store.append(SID, "sandbox_run", {"stdout": "x", "duration_ms": 12.5, "wall_time": 1.0})
    records = normalized_log(store.events(SID))
    assert "wall_time" not in records[0]
    assert "duration_ms" not in records[0]["payload"]
    assert records[0]["payload"]["stdout"] == "x"


def test_strip_volatile_reaches_nested_structures():
    value = {
        "a": [{"latency_ms": 3, "keep": 1}, {"created_at": 9.0}],
        "wall_time": 5.0,
        "b": {"duration_ms": 1, "c": [2]},
    }
    assert strip_volatile(value) == {"a": [{"keep": 1}, {}], "b": {"c": [2]}}


_SCALARS = st.one_of(st.integers(), st.text(max_size=8), st.booleans(), st.none())
_JSONISH = st.recursive(
    _SCALARS,
    lambda children: st.one_of(
        st.lists(children, max_size=4),
        st.dictionaries(
            st.sampled_from(["wall_time", "latency_ms", "duration_ms", "created_at", "a", "b", "c"]),
            children,
            max_size=5,
        ),
    ),
    max_leaves=20,
)


def _has_volatile_key(value) -> bool:
    if isinstance(value, dict):
        return any(
            k in ("wall_time", "latency_ms", "duration_ms", "created_at") or _has_volatile_key(v)
            for k, v in value.items()
        )
    if isinstance(value, list):
        return any(_has_volatile_key(v) for v in value)
    return False


@given(_JSONISH)
@settings(max_examples=200, deadline=None)
def test_strip_volatile_is_complete_and_idempotent(value):
    stripped = strip_volatile(value)
    assert not _has_volatile_key(stripped)
    assert strip_volatile(stripped) == stripped


def test_canonical_json_is_key_order_independent():
    a = {"z": 1, "a": {"y": 2, "b": 3}}
    b = {"a": {"b": 3, "y": 2}, "z": 1}
    assert canonical_json(a) == canonical_json(b)
    assert content_hash(a) == content_hash(b)
    assert content_hash(a) != content_hash({"z": 1, "a": {"y": 2, "b": 4}})


def test_event_record_round_trip():
    event = Event(3, SID, "message", {"seq": 3}, wall_time=123.5)
    assert Event.from_record(event.to_record()) == event
