"""Shared fixtures: scripted transcripts, engine builders, dataset files.

Every engine built through `engine_factory` registers its event-store root
in STORE_ROOTS; the gating audit (both the acceptance check and the
pytest_sessionfinish hook below) walks those roots, so anything a test
executed is also audited.
"""
from __future__ import annotations

import json
from pathlib import Path

import pytest

from evoagent import (
    Orchestrator,
    Provider,
    RunConfig,
    ScriptedBackend,
    ScriptedTranscript,
    StorePaths,
)

# event-store roots of every engine any test has built (see audit test)
STORE_ROOTS: list[Path] = []

HAPPY_GOAL = "find the answer"

# tool-creator response used wherever the gap flow needs a working draft
TOOL_RESPONSE = """TOOL
name: variant_counter
category: custom_analysis
description: count variants in a list
inputs:
  items: str
outputs:
  count: int
kind: local_script
timeout: 10
SCRIPT
import json, sys
args = json.loads(sys.argv[1])
print(json.dumps({"count": len(args["items"].split(","))}))
TESTS
- input: {items: "a,b,c"}
  expect: {field: count, op: equals, value: 3}
"""


def happy_transcript() -> ScriptedTranscript:
    """Two-step plan, both steps accepted, clean final answer."""
    t = ScriptedTranscript(mode="strict_sequence")
    t.add("PLAN_REQUEST goal: find the answer",
          "1. Compute the value\nDEPENDS: none\n2. Report it\nDEPENDS: 1")
    t.add("STEP_REQUEST step 1: Compute the value", "print(6 * 7)")
    t.add("CRITIQUE_REQUEST step 1", "ACCEPT solid computation")
    t.add("STEP_REQUEST step 2: Report it", 'print("the value is 42")')
    t.add("CRITIQUE_REQUEST step 2", "ACCEPT")
    t.add("FINAL_REQUEST goal: find the answer", "ANSWER: 42")
    return t


GAP_GOAL = "count the variants"


def gap_transcript() -> ScriptedTranscript:
    """Single step that hits a capability gap, gets a tool, then passes."""
    t = ScriptedTranscript(mode="strict_sequence")
    t.add("PLAN_REQUEST goal: count the variants",
          "1. Tally the variant list\nDEPENDS: none")
    t.add("STEP_REQUEST step 1: Tally the variant list", 'print("tally attempt")')
    t.add("CRITIQUE_REQUEST step 1", "GAP need a variant counting tool")
    t.add("TOOL_REQUEST gap: need a variant counting tool", TOOL_RESPONSE)
    t.add("STEP_REQUEST step 1: Tally the variant list", 'print("tally with tool: 3")')
    t.add("CRITIQUE_REQUEST step 1", "ACCEPT")
    t.add("FINAL_REQUEST goal: count the variants", "ANSWER: 3")
    return t


def mcq_transcript(answers: dict[str, str]) -> ScriptedTranscript:
    """Pattern-mode transcript answering MCQ goals built by EngineMCQRunner.

    Plans and critiques are shared; the final response is matched per item
    id, which the runner embeds in the goal as "[<id>]".
    """
    t = ScriptedTranscript(mode="pattern_match")
    t.add("PLAN_REQUEST goal: [", "1. Decide the answer\nDEPENDS: none")
    t.add("STEP_REQUEST step 1: Decide the answer", 'print("weighing the choices")')
    t.add("CRITIQUE_REQUEST step 1", "ACCEPT")
    for item_id, answer in answers.items():
        t.add(f"FINAL_REQUEST goal: [{item_id}]", answer)
    return t


@pytest.fixture
def engine_factory(tmp_path):
    """Build an offline engine wired to a scripted backend.

    Returns (orchestrator, backend); all sessions created through the
    orchestrator share the backend, so strict transcripts span sessions.
    """
    built = []

    def build(
        transcript: ScriptedTranscript | None = None,
        config: RunConfig | None = None,
        subdir: str = "store",
        **config_kw,
    ):
        cfg = config or RunConfig(stores=StorePaths(root=str(tmp_path / subdir)), **config_kw)
        backend = ScriptedBackend(transcript) if transcript is not None else None
        factory = None
        if backend is not None:
            factory = lambda _sid: Provider(cfg.role_bindings, backend)  # noqa: E731
        orch = Orchestrator(cfg, provider_factory=factory)
        STORE_ROOTS.append(Path(cfg.stores.events))
        built.append(orch)
        return orch, backend

    return build


@pytest.fixture
def run_config(tmp_path):
    cfg = RunConfig(stores=StorePaths(root=str(tmp_path / "store")))
    STORE_ROOTS.append(Path(cfg.stores.events))
    return cfg


# -- benchmark fixtures -----------------------------------------------------

# 8 items; the scripted predictions below hit 5 correct / 2 wrong / 1 abstain
DATASET_ROWS = [
    {"id": "q1", "gold": "A"},
    {"id": "q2", "gold": "B"},
    {"id": "q3", "gold": "C"},
    {"id": "q4", "gold": "A"},
    {"id": "q5", "gold": "B"},
    {"id": "q6", "gold": "C"},
    {"id": "q7", "gold": "A"},
    {"id": "q8", "gold": "B"},
]

# predictions for the hand-scored run: q1-q5 correct, q6/q7 wrong, q8 abstains
SCRIPTED_PREDICTIONS = {
    "q1": "A",
    "q2": "B",
    "q3": "C",
    "q4": "A",
    "q5": "B",
    "q6": "A",
    "q7": "B",
    "q8": "INSUFFICIENT",
}


def dataset_lines() -> list[str]:
    lines = []
    for row in DATASET_ROWS:
        lines.append(json.dumps({
            "id": row["id"],
            "question": f"pick the right label for {row['id']}",
            "choices": [["A", "alpha"], ["B", "beta"], ["C", "gamma"]],
            "gold": row["gold"],
        }))
    return lines


@pytest.fixture
def dataset_path(tmp_path) -> Path:
    path = tmp_path / "items.jsonl"
    path.write_text("\n".join(dataset_lines()) + "\n", "utf-8")
    return path


# -- suite-wide gating audit ---------------------------------------------------


def suite_gating_violations() -> list[str]:
    """Scan every event store any test has opened for draft-tool invocations."""
    from evoagent.tools import audit_gating

    found: list[str] = []
    for root in STORE_ROOTS:
        if root.exists():
            found.extend(f"{root}: {v}" for v in audit_gating(root))
    return found


def pytest_sessionfinish(session, exitstatus):
    # one draft-tool invocation anywhere in the run is a failure, even if
    # every individual test passed
    if exitstatus == 0 and suite_gating_violations():
        session.exitstatus = 1


def pytest_terminal_summary(terminalreporter):
    roots = [r for r in STORE_ROOTS if r.exists()]
    violations = suite_gating_violations()
    verdict = "clean" if not violations else f"{len(violations)} violation(s)"
    terminalreporter.write_line(
        f"tool gating audit: {len(roots)} event store(s) scanned, {verdict}"
    )
    for item in violations:
        terminalreporter.write_line(f"  {item}", red=True)
