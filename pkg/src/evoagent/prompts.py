"""Default prompt templates for the four agent roles.

Prompts are configuration, not behavior: every builder lives on a
PromptSet so deployments can swap wording without touching the engine.
Two properties are load-bearing for tests and transcripts:

  * each request starts with a stable marker (PLAN_REQUEST, STEP_REQUEST,
    ...) followed by the goal or step text, so scripted transcripts can
    match on a short substring;
  * everything after the marker is derived from session state only, never
    from wall-clock values, keeping rendered requests replay-stable.
"""
from __future__ import annotations

from dataclasses import dataclass, field

Messages = list[tuple[str, str]]

_MANAGER_SYSTEM = (
    "You orchestrate a research session. Reply with a numbered plan; every "
    "step line is followed by a DEPENDS: line naming earlier step numbers "
    "or 'none'."
)
_DEV_SYSTEM = (
    "You write one standalone Python script per request. Reply with only "
    "the script (a fenced python block is accepted). It runs in a sandbox "
    "with no network."
)
_CRITIC_SYSTEM = (
    "You judge one step result. Reply starting with ACCEPT, REVISE, or GAP. "
    "After REVISE give revision guidance; after GAP describe the missing "
    "capability."
)
_TOOL_CREATOR_SYSTEM = (
    "You build tools. Reply with three sections on their own lines: TOOL "
    "(YAML: name, category, description, inputs, outputs, kind, target, "
    "timeout), SCRIPT (Python reading a JSON object from argv[1] and "
    "printing a JSON object), TESTS (YAML list of {input, expect})."
)


@dataclass
class PromptSet:
    manager_system: str = _MANAGER_SYSTEM
    dev_system: str = _DEV_SYSTEM
    critic_system: str = _CRITIC_SYSTEM
    tool_creator_system: str = _TOOL_CREATOR_SYSTEM
    extra_context: dict[str, str] = field(default_factory=dict)

    def plan(self, goal: str, template_hint: str = "") -> Messages:
        text = f"PLAN_REQUEST goal: {goal}"
        if template_hint:
            text += f"\nPrior pathway that worked on a similar goal:\n{template_hint}"
        return [("system", self.manager_system), ("user", text)]

    def replan(self, goal: str, feedback: str, done_steps: list[str]) -> Messages:
        text = f"REPLAN_REQUEST goal: {goal}\nfeedback: {feedback}"
        if done_steps:
            text += "\nAlready completed (keep identical numbering and wording to preserve them):\n"
            text += "\n".join(done_steps)
        return [("system", self.manager_system), ("user", text)]

    def step(self, goal: str, step_id: str, description: str, context: str = "") -> Messages:
        text = f"STEP_REQUEST step {step_id}: {description}\ngoal: {goal}"
        if context:
            text += f"\nresults so far:\n{context}"
        return [("system", self.dev_system), ("user", text)]

    def critique(self, goal: str, step_id: str, description: str, result_text: str) -> Messages:
        text = (
            f"CRITIQUE_REQUEST step {step_id}: {description}\n"
            f"goal: {goal}\nresult:\n{result_text}"
        )
        return [("system", self.critic_system), ("user", text)]

    def final(self, goal: str, results_text: str) -> Messages:
        text = (
            f"FINAL_REQUEST goal: {goal}\n"
            f"step results:\n{results_text}\n"
            "Write the final answer. If the evidence is insufficient, reply INSUFFICIENT."
        )
        return [("system", self.manager_system), ("user", text)]

    def tool(self, gap: str, attempt: int, diagnostics: str) -> Messages:
        text = f"TOOL_REQUEST gap: {gap}"
        if attempt:
            text += f"\nattempt: {attempt}\nprevious failure: {diagnostics}"
        return [("system", self.tool_creator_system), ("user", text)]

    def adjudicate(self, candidates: list[str]) -> Messages:
        listing = "\n".join(f"- {c}" for c in candidates)
        text = (
            "ADJUDICATE_REQUEST choose exactly one of the tied answers below "
            f"and reply with it verbatim:\n{listing}"
        )
        return [("system", self.critic_system), ("user", text)]


DEFAULT_PROMPTS = PromptSet()
