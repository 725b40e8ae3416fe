#!/usr/bin/env python3
"""Regenerate the recorded event streams the console tests replay.

Runs two gated scripted sessions (one approved at the post-plan gate, one
rejected then approved after the replan) plus a synthetic sweep, and writes
the resulting event records / curve CSV into frontend/tests/fixtures/. The
fixtures are committed so the frontend suite runs with npm alone; re-run this
after any change to the event schema.

Usage: python3 scripts/record_console_fixtures.py
"""
from __future__ import annotations

import json
import tempfile
from pathlib import Path

from evoagent import (
    HumanFeedback,
    GateFlags,
    Orchestrator,
    Provider,
    RunConfig,
    ScriptedBackend,
    ScriptedTranscript,
    StochasticMCQRunner,
    StorePaths,
    SweepConfig,
    TrialBudget,
    sweep_budgets,
    synthetic_items,
    write_curve_csv,
)

FIXTURES = Path(__file__).resolve().parent.parent / "frontend" / "tests" / "fixtures"


def record_run(transcript: ScriptedTranscript, goal: str, decisions: list[HumanFeedback]):
    with tempfile.TemporaryDirectory() as tmp:
        cfg = RunConfig(stores=StorePaths(root=tmp), gates=GateFlags(post_plan=True))
        backend = ScriptedBackend(transcript)
        orch = Orchestrator(cfg, provider_factory=lambda _sid: Provider(cfg.role_bindings, backend))
        session = orch.create_session(goal)
        pending = iter(decisions)
        final = orch.run_to_completion(session.id, gate_handler=lambda view, gate: next(pending))
        assert final is not None, orch.session(session.id).failure_reason
        backend.assert_exhausted()
        return [event.to_record() for event in orch.store.events(session.id)]


def approve_fixture():
    t = ScriptedTranscript(mode="strict_sequence")
    t.add("PLAN_REQUEST goal: find the answer",
          "1. Compute the value\nDEPENDS: none\n2. Report it\nDEPENDS: 1")
    t.add("STEP_REQUEST step 1: Compute the value", "print(6 * 7)")
    t.add("CRITIQUE_REQUEST step 1", "ACCEPT solid computation")
    t.add("STEP_REQUEST step 2: Report it", 'print("the value is 42")')
    t.add("CRITIQUE_REQUEST step 2", "ACCEPT")
    t.add("FINAL_REQUEST goal: find the answer", "ANSWER: 42")
    return record_run(t, "find the answer", [HumanFeedback("reviewer", "approve")])


def reject_fixture():
    t = ScriptedTranscript(mode="strict_sequence")
    t.add("PLAN_REQUEST goal: gated", "1. Sloppy step\nDEPENDS: none")
    t.add("feedback: split this up", "1. Careful step\nDEPENDS: none")
    t.add("STEP_REQUEST step 1: Careful step", "print('ok')")
    t.add("CRITIQUE_REQUEST step 1", "ACCEPT")
    t.add("FINAL_REQUEST goal: gated", "ANSWER: done")
    return record_run(t, "gated", [
        HumanFeedback("reviewer", "reject", body="split this up"),
        HumanFeedback("reviewer", "approve"),
    ])


def curve_fixture() -> str:
    result = sweep_budgets(
        lambda budget, rep, seed: StochasticMCQRunner(0.7),
        synthetic_items(60),
        SweepConfig([TrialBudget(n) for n in (1, 3, 5, 9)], repetitions=3, seeds=[11, 12, 13]),
    )
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "curve.csv"
        write_curve_csv(result, path)
        return path.read_text("utf-8")


def main() -> int:
    FIXTURES.mkdir(parents=True, exist_ok=True)
    (FIXTURES / "approve_run.json").write_text(
        json.dumps(approve_fixture(), indent=2, sort_keys=True) + "\n", "utf-8"
    )
    (FIXTURES / "reject_run.json").write_text(
        json.dumps(reject_fixture(), indent=2, sort_keys=True) + "\n", "utf-8"
    )
    (FIXTURES / "curve.csv").write_text(curve_fixture(), "utf-8")
    print(f"fixtures written to {FIXTURES}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
