#!/usr/bin/env python3
"""Run one fully scripted session end to end and verify its replay.

No network, no model keys: the provider is a canned transcript. Prints the
event kinds as they land in the store, the final answer, and the live vs
replayed state hash. Useful as a smoke check after changes to the
orchestration loop or the event schema.

Usage: python3 scripts/run_scripted_demo.py [store_dir]
"""
from __future__ import annotations

import sys
import tempfile

from evoagent import (
    Orchestrator,
    Provider,
    RunConfig,
    ScriptedBackend,
    ScriptedTranscript,
    StorePaths,
    normalized_log,
)

GOAL = "find the answer"


def demo_transcript() -> ScriptedTranscript:
    t = ScriptedTranscript(mode="strict_sequence")
    t.add("PLAN_REQUEST goal: find the answer",
          "1. Compute the value\nDEPENDS: none\n2. Report it\nDEPENDS: 1")
    t.add("STEP_REQUEST step 1: Compute the value", "print(6 * 7)")
    t.add("CRITIQUE_REQUEST step 1", "ACCEPT solid computation")
    t.add("STEP_REQUEST step 2: Report it", 'print("the value is 42")')
    t.add("CRITIQUE_REQUEST step 2", "ACCEPT")
    t.add("FINAL_REQUEST goal: find the answer", "ANSWER: 42")
    return t


def main() -> int:
    root = sys.argv[1] if len(sys.argv) > 1 else tempfile.mkdtemp(prefix="evoagent-demo-")
    cfg = RunConfig(stores=StorePaths(root=root))
    backend = ScriptedBackend(demo_transcript())
    orch = Orchestrator(cfg, provider_factory=lambda _sid: Provider(cfg.role_bindings, backend))

    session = orch.create_session(GOAL)
    final = orch.run_to_completion(session.id)
    backend.assert_exhausted()

    events = orch.store.events(session.id)
    print(f"store: {root}")
    print(f"session: {session.id}")
    for event in events:
        print(f"  seq {event.global_seq:>2}  {event.kind}")
    live = orch.session(session.id)
    replayed = orch.replay(session.id)
    print(f"status: {live.status.value}")
    print(f"answer: {None if final is None else final.answer}")
    print(f"live hash:   {live.state_hash()}")
    print(f"replay hash: {replayed.state_hash()}")
    print(f"events are replay-stable: {normalized_log(events) == normalized_log(orch.store.events(session.id))}")
    if live.state_hash() != replayed.state_hash():
        print("REPLAY MISMATCH", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
