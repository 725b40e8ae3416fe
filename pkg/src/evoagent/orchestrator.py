"""Session state machine coordinating the four agent roles.

A session moves through plan → execute → critique, with detours into
tool creation when the critic flags a capability gap and into human
gates when configured. Every state change is an appended event, and the
in-memory Session mutates exclusively through `_apply(kind, payload)` —
the same function used to fold a stored log — so a live session and its
replay agree by construction rather than by discipline.
"""
from __future__ import annotations

import re
import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Iterable

from .config import RunConfig
from .errors import (
    PlanParseError,
    ProviderError,
    ReplayError,
    StateError,
    ToolCreationError,
    ValidationError,
    VerdictParseError,
)
from .events import Event, EventStore, content_hash, strip_volatile
from .prompts import DEFAULT_PROMPTS, PromptSet
from .provider import Provider
from .roles import AgentRole
from .sandbox import Sandbox
from .templates import TemplateLibrary
from .tools import ToolRegistry

STEP_PENDING = "pending"
STEP_RUNNING = "running"
STEP_DONE = "done"
STEP_REJECTED = "rejected"
_STEP_STATES = (STEP_PENDING, STEP_RUNNING, STEP_DONE, STEP_REJECTED)


class SessionStatus(str, Enum):
    PLANNING = "planning"
    EXECUTING = "executing"
    CRITIQUING = "critiquing"
    TOOL_GAP = "tool_gap"
    AWAITING_HUMAN = "awaiting_human"
    FINALIZING = "finalizing"
    SUCCEEDED = "succeeded"
    FAILED = "failed"


TERMINAL = frozenset({SessionStatus.SUCCEEDED, SessionStatus.FAILED})

# Workflow graph; every status event must traverse one of these edges.
# executing→planning exists only for human rejection; critic revision routes
# through critiquing→planning.
WORKFLOW_EDGES: dict[SessionStatus, frozenset[SessionStatus]] = {
    SessionStatus.PLANNING: frozenset(
        {SessionStatus.EXECUTING, SessionStatus.AWAITING_HUMAN, SessionStatus.FAILED}
    ),
    SessionStatus.AWAITING_HUMAN: frozenset(
        {SessionStatus.EXECUTING, SessionStatus.PLANNING, SessionStatus.TOOL_GAP, SessionStatus.FAILED}
    ),
    SessionStatus.EXECUTING: frozenset(
        {SessionStatus.CRITIQUING, SessionStatus.FINALIZING, SessionStatus.PLANNING, SessionStatus.FAILED}
    ),
    SessionStatus.CRITIQUING: frozenset(
        {
            SessionStatus.EXECUTING,
            SessionStatus.FINALIZING,
            SessionStatus.PLANNING,
            SessionStatus.TOOL_GAP,
            SessionStatus.FAILED,
        }
    ),
    SessionStatus.TOOL_GAP: frozenset(
        {SessionStatus.EXECUTING, SessionStatus.AWAITING_HUMAN, SessionStatus.FAILED}
    ),
    SessionStatus.FINALIZING: frozenset({SessionStatus.SUCCEEDED, SessionStatus.FAILED}),
    SessionStatus.SUCCEEDED: frozenset(),
    SessionStatus.FAILED: frozenset(),
}


@dataclass
class PlanStep:
    id: str
    description: str
    assigned_role: AgentRole = AgentRole.DEV
    depends_on: tuple[str, ...] = ()
    status: str = STEP_PENDING
    result_ref: int | None = None  # event seq of the sandbox_run that produced it

    def to_record(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "description": self.description,
            "assigned_role": self.assigned_role.value,
            "depends_on": list(self.depends_on),
            "status": self.status,
            "result_ref": self.result_ref,
        }

    @classmethod
    def from_record(cls, record: dict[str, Any]) -> "PlanStep":
        return cls(
            id=record["id"],
            description=record["description"],
            assigned_role=AgentRole(record["assigned_role"]),
            depends_on=tuple(record["depends_on"]),
            status=record["status"],
            result_ref=record.get("result_ref"),
        )


@dataclass
class ReasoningPathway:
    steps: list[PlanStep] = field(default_factory=list)
    template_origin: str | None = None
    version: int = 0


@dataclass
class AgentMessage:
    seq: int
    from_role: AgentRole
    to_role: AgentRole
    kind: str  # plan | step_assignment | step_result | critique | gap_report |
    #            tool_ready | human_feedback | final_answer
    payload: dict[str, Any]
    step_ref: str | None = None

    def to_record(self) -> dict[str, Any]:
        return {
            "seq": self.seq,
            "from_role": self.from_role.value,
            "to_role": self.to_role.value,
            "kind": self.kind,
            "payload": self.payload,
            "step_ref": self.step_ref,
        }


@dataclass
class CriticVerdict:
    verdict: str  # accept | revise | capability_gap
    feedback: str = ""
    gap_description: str | None = None


@dataclass
class HumanFeedback:
    author: str
    directive: str  # approve | reject | comment
    body: str = ""
    target_step: str | None = None


@dataclass
class FinalAnswer:
    answer: str
    supporting: tuple[str, ...] = ()
    abstained: bool = False


@dataclass
class StepResult:
    step_id: str
    exit_status: int | str
    stdout: str
    stderr: str
    duration_ms: float
    artifacts: list[tuple[str, int, str]]

    @property
    def failed(self) -> bool:
        return self.exit_status != 0

    @property
    def reason(self) -> str:
        return self.exit_status if isinstance(self.exit_status, str) else ""


_OUTPUT_EXCERPT = 400


@dataclass
class Session:
    """Pure fold of a session's event stream; no I/O, no provider handles."""

    id: str
    goal: str
    max_iterations: int
    status: SessionStatus = SessionStatus.PLANNING
    pathway: ReasoningPathway = field(default_factory=ReasoningPathway)
    history: list[AgentMessage] = field(default_factory=list)
    iteration_count: int = 0
    current_step_id: str | None = None
    gap_description: str | None = None
    gap_step_id: str | None = None
    revision_context: str = ""
    step_outputs: dict[str, str] = field(default_factory=dict)
    tools_ready: list[str] = field(default_factory=list)
    final: FinalAnswer | None = None
    failure_reason: str | None = None

    # -- event folding -----------------------------------------------------

    def _apply(self, kind: str, payload: dict[str, Any]) -> None:
        if kind == "status":
            self._apply_status(payload)
        elif kind == "pathway":
            self.pathway = ReasoningPathway(
                steps=[PlanStep.from_record(s) for s in payload["steps"]],
                template_origin=payload.get("template_origin"),
                version=payload["version"],
            )
        elif kind == "step_status":
            self._apply_step_status(payload)
        elif kind == "message":
            self._apply_message(payload)
        elif kind == "iteration":
            count = payload["count"]
            if count > self.max_iterations:
                raise StateError(f"iteration_count {count} exceeds max {self.max_iterations}")
            self.iteration_count = count
        elif kind == "capability_gap":
            self.gap_description = payload["description"]
            self.gap_step_id = payload.get("step_id")
        elif kind == "sandbox_run":
            step_id = payload.get("step_id")
            if step_id:
                self.step_outputs[step_id] = str(payload.get("stdout", ""))[:_OUTPUT_EXCERPT]
        # exchange / tool_* / usage / snapshot / template_distilled /
        # session_created carry no session-state deltas.

    def _apply_status(self, payload: dict[str, Any]) -> None:
        src = SessionStatus(payload["from"])
        dst = SessionStatus(payload["to"])
        if src != self.status:
            raise StateError(f"status event from {src.value} but session is {self.status.value}")
        if dst not in WORKFLOW_EDGES[src]:
            raise StateError(f"illegal transition {src.value} -> {dst.value}")
        self.status = dst
        if dst == SessionStatus.FAILED:
            self.failure_reason = payload.get("reason")

    def _apply_step_status(self, payload: dict[str, Any]) -> None:
        step = self.step(payload["step_id"])
        if step is None:
            raise StateError(f"step_status for unknown step {payload['step_id']!r}")
        to = payload["to"]
        if to not in _STEP_STATES:
            raise StateError(f"unknown step state {to!r}")
        step.status = to
        if payload.get("result_ref") is not None:
            step.result_ref = payload["result_ref"]
        if to == STEP_RUNNING:
            self.current_step_id = step.id

    def _apply_message(self, payload: dict[str, Any]) -> None:
        expected = len(self.history) + 1
        if payload["seq"] != expected:
            raise StateError(f"message seq {payload['seq']} out of order (expected {expected})")
        message = AgentMessage(
            seq=payload["seq"],
            from_role=AgentRole(payload["from_role"]),
            to_role=AgentRole(payload["to_role"]),
            kind=payload["kind"],
            payload=payload["payload"],
            step_ref=payload.get("step_ref"),
        )
        self.history.append(message)
        if message.kind == "critique" and message.payload.get("verdict") == "revise":
            self.revision_context = message.payload.get("feedback", "")
        elif message.kind == "human_feedback" and message.payload.get("directive") == "reject":
            self.revision_context = message.payload.get("body", "")
        elif message.kind == "tool_ready":
            self.gap_description = None
            self.tools_ready.append(message.payload.get("name", ""))
        elif message.kind == "final_answer":
            self.final = FinalAnswer(
                answer=message.payload["answer"],
                supporting=tuple(message.payload.get("supporting", ())),
                abstained=bool(message.payload.get("abstained", False)),
            )

    # -- views ---------------------------------------------------------------

    def step(self, step_id: str | None) -> PlanStep | None:
        for step in self.pathway.steps:
            if step.id == step_id:
                return step
        return None

    def next_ready_step(self) -> PlanStep | None:
        done = {s.id for s in self.pathway.steps if s.status == STEP_DONE}
        for step in self.pathway.steps:
            if step.status == STEP_PENDING and all(d in done for d in step.depends_on):
                return step
        return None

    def all_done(self) -> bool:
        return bool(self.pathway.steps) and all(
            s.status == STEP_DONE for s in self.pathway.steps
        )

    def state_record(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "goal": self.goal,
            "status": self.status.value,
            "iteration_count": self.iteration_count,
            "max_iterations": self.max_iterations,
            "pathway": {
                "version": self.pathway.version,
                "template_origin": self.pathway.template_origin,
                "steps": [s.to_record() for s in self.pathway.steps],
            },
            "history": [m.to_record() for m in self.history],
            "current_step_id": self.current_step_id,
            "gap_description": self.gap_description,
            "gap_step_id": self.gap_step_id,
            "revision_context": self.revision_context,
            "step_outputs": dict(self.step_outputs),
            "tools_ready": list(self.tools_ready),
            "final": None if self.final is None else {
                "answer": self.final.answer,
                "supporting": list(self.final.supporting),
                "abstained": self.final.abstained,
            },
            "failure_reason": self.failure_reason,
        }

    def state_hash(self) -> str:
        return content_hash(strip_volatile(self.state_record()))


def fold_session(events: Iterable[Event]) -> Session:
    """Reconstruct a session purely from its event stream."""
    session: Session | None = None
    for event in events:
        if event.kind == "session_created":
            if session is not None:
                raise ReplayError("duplicate session_created event")
            session = Session(
                id=event.payload["session_id"],
                goal=event.payload["goal"],
                max_iterations=event.payload["max_iterations"],
            )
        elif session is not None:
            try:
                session._apply(event.kind, event.payload)
            except StateError as exc:
                raise ReplayError(f"seq {event.global_seq}: {exc}") from exc
    if session is None:
        raise ReplayError("stream has no session_created event")
    return session


def check_workflow(events: Iterable[Event]) -> list[str]:
    """Audit a stream's status transitions against the workflow graph."""
    violations = []
    current: SessionStatus | None = None
    for event in events:
        if event.kind == "session_created":
            current = SessionStatus.PLANNING
        elif event.kind == "status":
            src = SessionStatus(event.payload["from"])
            dst = SessionStatus(event.payload["to"])
            if current is not None and src != current:
                violations.append(f"seq {event.global_seq}: from={src.value} but stream is at {current.value}")
            if dst not in WORKFLOW_EDGES[src]:
                violations.append(f"seq {event.global_seq}: illegal edge {src.value}->{dst.value}")
            current = dst
    return violations


# -- response parsing ----------------------------------------------------------

_STEP_LINE = re.compile(r"^(\d+)\.\s+(.+)$")
_DEPENDS_LINE = re.compile(r"^DEPENDS:\s*(.+)$", re.IGNORECASE)
_FENCE = re.compile(r"```(?:python)?\s*\n(.*?)```", re.DOTALL)


def parse_plan(text: str) -> list[PlanStep]:
    """Strict plan grammar: `N. description` lines, each followed by a
    `DEPENDS: none|earlier numbers` line, numbered 1..n. Prose before the
    first step is tolerated; anything else inside the block is an error."""
    steps: list[PlanStep] = []
    open_step: PlanStep | None = None
    in_block = False
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        step_match = _STEP_LINE.match(line)
        dep_match = _DEPENDS_LINE.match(line)
        if step_match:
            if open_step is not None:
                raise PlanParseError(f"step {open_step.id} has no DEPENDS line")
            number = int(step_match.group(1))
            if number != len(steps) + 1:
                raise PlanParseError(f"expected step {len(steps) + 1}, got {number}")
            open_step = PlanStep(id=str(number), description=step_match.group(2).strip())
            in_block = True
        elif dep_match and in_block:
            if open_step is None:
                raise PlanParseError("DEPENDS line without a preceding step")
            spec = dep_match.group(1).strip()
            if spec.lower() == "none":
                deps: tuple[str, ...] = ()
            else:
                deps = tuple(part.strip() for part in spec.split(","))
                for dep in deps:
                    if not dep.isdigit() or not 1 <= int(dep) < int(open_step.id):
                        raise PlanParseError(
                            f"step {open_step.id}: dependency {dep!r} must name an earlier step"
                        )
            open_step.depends_on = deps
            steps.append(open_step)
            open_step = None
        elif in_block:
            raise PlanParseError(f"unexpected line inside plan block: {line!r}")
    if open_step is not None:
        raise PlanParseError(f"step {open_step.id} has no DEPENDS line")
    if not steps:
        raise PlanParseError("response contains no plan steps")
    return steps


def parse_verdict(text: str) -> CriticVerdict:
    stripped = text.strip()
    if not stripped:
        raise VerdictParseError("empty critic response")
    head, _, rest = stripped.partition("\n")
    parts = head.split(None, 1)
    token = parts[0].rstrip(":.").upper()
    trailing = (parts[1] if len(parts) > 1 else "").strip()
    body = (trailing + ("\n" + rest if rest else "")).strip()
    if token == "ACCEPT":
        return CriticVerdict("accept", body)
    if token == "REVISE":
        return CriticVerdict("revise", body)
    if token == "GAP":
        if not body:
            raise VerdictParseError("GAP verdict requires a gap description")
        return CriticVerdict("capability_gap", body, gap_description=body)
    raise VerdictParseError(
        f"critic response must start with ACCEPT, REVISE, or GAP; got {head[:80]!r}"
    )


def extract_script(text: str) -> str:
    match = _FENCE.search(text)
    script = match.group(1) if match else text
    return script.strip("\n") + "\n"


def provider_call_bound(max_iterations: int, n_steps: int, tool_retries: int = 2) -> int:
    """Static ceiling on provider calls for one session: one plan per
    iteration cycle, one dev + one critic call per step per cycle, bounded
    tool-creation attempts, one finalization."""
    cycles = 1 + max_iterations
    return cycles + 2 * n_steps * cycles + max_iterations * (tool_retries + 1) + 1


# -- orchestrator ---------------------------------------------------------------


class _Runtime:
    """Mutable per-session machinery kept out of the replayable Session."""

    def __init__(self, session: Session, provider: Provider):
        self.session = session
        self.provider = provider
        self.lock = threading.RLock()
        self.cond = threading.Condition(self.lock)
        self.pending_gate: str | None = None  # post_plan | pre_tool_registration
        self.gate_cleared = False


ProviderFactory = Callable[[str], Provider]
GateHandler = Callable[[dict[str, Any], str], HumanFeedback | None]


class Orchestrator:
    def __init__(
        self,
        config: RunConfig,
        store: EventStore | None = None,
        library: TemplateLibrary | None = None,
        registry: ToolRegistry | None = None,
        sandbox: Sandbox | None = None,
        provider_factory: ProviderFactory | None = None,
        prompts: PromptSet = DEFAULT_PROMPTS,
    ):
        self.config = config.validate()
        self.store = store or EventStore(config.stores.events)
        self.library = library if library is not None else TemplateLibrary(config.stores.templates)
        self.sandbox = sandbox or Sandbox(config.stores.sandbox)
        self.registry = (
            registry
            if registry is not None
            else ToolRegistry(config.stores.tools, sandbox=self.sandbox)
        )
        self.prompts = prompts
        self._provider_factory = provider_factory or self._default_factory
        self._runtimes: dict[str, _Runtime] = {}
        self._counter_lock = threading.Lock()
        # resume numbering past any sessions already in the store, so engines
        # sharing a root (bench repetitions, service restarts) never collide
        self._counter = 0
        for sid in self.store.sessions():
            match = re.fullmatch(r"s-(\d{4,})", sid)
            if match:
                self._counter = max(self._counter, int(match.group(1)))

    def _default_factory(self, session_id: str) -> Provider:
        from .provider import HttpBackend  # local import: not needed in scripted runs

        return Provider(self.config.role_bindings, HttpBackend())

    # -- plumbing ----------------------------------------------------------

    def _rt(self, session_id: str) -> _Runtime:
        runtime = self._runtimes.get(session_id)
        if runtime is None:
            raise ValidationError(f"unknown session: {session_id}")
        return runtime

    def session(self, session_id: str) -> Session:
        return self._rt(session_id).session

    def sessions(self) -> list[str]:
        return sorted(self._runtimes)

    def _record(self, runtime: _Runtime, kind: str, payload: dict[str, Any]) -> int:
        seq = self.store.append(runtime.session.id, kind, payload)
        runtime.session._apply(kind, payload)
        return seq

    def _msg(
        self,
        runtime: _Runtime,
        from_role: AgentRole,
        to_role: AgentRole,
        kind: str,
        payload: dict[str, Any],
        step_ref: str | None = None,
    ) -> int:
        record = {
            "seq": len(runtime.session.history) + 1,
            "from_role": from_role.value,
            "to_role": to_role.value,
            "kind": kind,
            "payload": payload,
            "step_ref": step_ref,
        }
        return self._record(runtime, "message", record)

    def _transition(self, runtime: _Runtime, to: SessionStatus, reason: str) -> None:
        src = runtime.session.status
        if to not in WORKFLOW_EDGES[src]:
            raise StateError(f"illegal transition {src.value} -> {to.value} ({reason})")
        self._record(runtime, "status", {"from": src.value, "to": to.value, "reason": reason})
        runtime.cond.notify_all()

    def _bump_iteration(self, runtime: _Runtime, reason: str) -> bool:
        """Count a revision cycle; exhausting the budget fails the session."""
        session = runtime.session
        if session.iteration_count >= session.max_iterations:
            self._finish(runtime, SessionStatus.FAILED, f"max_iterations exhausted after {reason}")
            return False
        self._record(runtime, "iteration", {"count": session.iteration_count + 1, "reason": reason})
        return True

    def _finish(self, runtime: _Runtime, status: SessionStatus, reason: str) -> None:
        self._transition(runtime, status, reason)
        session = runtime.session
        if status == SessionStatus.SUCCEEDED:
            template = self.library.distill(session)
            if template is not None:
                self._record(
                    runtime,
                    "template_distilled",
                    {"template_id": template.id, "title": template.title},
                )
        usage = runtime.provider.usage_snapshot()
        self._record(runtime, "usage", usage)
        self._record(runtime, "snapshot", {
            "library_size": len(self.library),
            "registry_size": len(self.registry),
            "library_hash": self.library.store_hash(),
            "registry_hash": self.registry.store_hash(),
        })
        self.store.close_stream(session.id)
        runtime.cond.notify_all()

    def _fail(self, runtime: _Runtime, reason: str) -> None:
        if runtime.session.status not in TERMINAL:
            self._finish(runtime, SessionStatus.FAILED, reason)

    # -- lifecycle ------------------------------------------------------------

    def create_session(self, goal: str, max_iterations: int | None = None) -> Session:
        goal = (goal or "").strip()
        if not goal:
            raise ValidationError("goal must be non-empty")
        limit = self.config.max_iterations if max_iterations is None else max_iterations
        if limit < 1:
            raise ValidationError("max_iterations must be >= 1")
        with self._counter_lock:
            self._counter += 1
            session_id = f"s-{self._counter:04d}"
        session = Session(id=session_id, goal=goal, max_iterations=limit)
        provider = self._provider_factory(session_id)
        runtime = _Runtime(session, provider)
        provider.event_sink = lambda kind, payload: self._record(runtime, kind, payload)
        self._runtimes[session_id] = runtime
        self.store.open_stream(session_id)
        self._record(runtime, "session_created", {
            "session_id": session_id,
            "goal": goal,
            "max_iterations": limit,
        })
        return session

    def plan(self, session_id: str) -> ReasoningPathway:
        runtime = self._rt(session_id)
        with runtime.lock:
            session = runtime.session
            if session.status != SessionStatus.PLANNING:
                raise StateError(f"plan requires status=planning, session is {session.status.value}")

            template_origin = session.pathway.template_origin
            hint = ""
            if session.pathway.version == 0 and len(self.library):
                ranked = self.library.retrieve(session.goal, k=self.config.retrieve_k)
                if ranked and ranked[0][1] >= self.config.template_threshold:
                    top = ranked[0][0]
                    template_origin = top.id
                    hint = top.title + "\n" + "\n".join(f"- {s}" for s in top.pathway_skeleton)

            if session.pathway.version == 0:
                messages = self.prompts.plan(session.goal, hint)
            else:
                kept = [
                    f"{s.id}. {s.description}"
                    for s in session.pathway.steps
                    if s.status == STEP_DONE
                ]
                messages = self.prompts.replan(session.goal, session.revision_context, kept)

            exchange = runtime.provider.complete(AgentRole.MANAGER, messages)
            steps = parse_plan(exchange.response_text)

            previous = {s.id: s for s in session.pathway.steps}
            for step in steps:
                old = previous.get(step.id)
                if old is not None and old.status == STEP_DONE and old.description == step.description:
                    step.status = STEP_DONE
                    step.result_ref = old.result_ref

            self._record(runtime, "pathway", {
                "steps": [s.to_record() for s in steps],
                "template_origin": template_origin,
                "version": session.pathway.version + 1,
            })
            self._msg(
                runtime,
                AgentRole.MANAGER,
                AgentRole.DEV,
                "plan",
                {"n_steps": len(steps), "template_origin": template_origin},
            )
            if template_origin is not None and session.pathway.version == 1:
                self.library.record_usage(template_origin)

            if self.config.gates.post_plan:
                runtime.pending_gate = "post_plan"
                self._transition(runtime, SessionStatus.AWAITING_HUMAN, "post_plan gate")
            else:
                self._transition(runtime, SessionStatus.EXECUTING, "plan accepted")
            return session.pathway

    def execute_step(self, session_id: str, step_id: str | None = None) -> StepResult | None:
        runtime = self._rt(session_id)
        with runtime.lock:
            session = runtime.session
            if session.status != SessionStatus.EXECUTING:
                raise StateError(
                    f"execute_step requires status=executing, session is {session.status.value}"
                )
            if step_id is None:
                step = session.next_ready_step()
                if step is None:
                    if session.all_done():
                        self._transition(runtime, SessionStatus.FINALIZING, "all steps done")
                        return None
                    raise StateError("no runnable step: pending steps have unmet dependencies")
            else:
                step = session.step(step_id)
                if step is None:
                    raise ValidationError(f"unknown step: {step_id}")
                if step.status != STEP_PENDING:
                    raise StateError(f"step {step_id} is {step.status}, not pending")
                done = {s.id for s in session.pathway.steps if s.status == STEP_DONE}
                unmet = [d for d in step.depends_on if d not in done]
                if unmet:
                    raise StateError(f"step {step_id} has unmet dependencies: {unmet}")
            if step.assigned_role != AgentRole.DEV:
                raise StateError(f"step {step.id} is assigned to {step.assigned_role.value}, not dev")

            self._record(runtime, "step_status", {
                "step_id": step.id, "from": STEP_PENDING, "to": STEP_RUNNING,
            })
            self._msg(
                runtime, AgentRole.MANAGER, AgentRole.DEV, "step_assignment",
                {"step_id": step.id, "description": step.description}, step.id,
            )

            context_parts = [
                f"step {s.id}: {session.step_outputs.get(s.id, '').strip()}"
                for s in session.pathway.steps
                if s.status == STEP_DONE and s.id in session.step_outputs
            ]
            context_parts += [f"tool available: {name}" for name in session.tools_ready]
            exchange = runtime.provider.complete(
                AgentRole.DEV,
                self.prompts.step(session.goal, step.id, step.description, "\n".join(context_parts)),
            )
            script = extract_script(exchange.response_text)

            workspace = self.sandbox.create_workspace(limits=self.config.limits)
            result = self.sandbox.run_script(workspace, script, [])
            run_seq = self._record(runtime, "sandbox_run", {
                "step_id": step.id,
                "workspace": workspace.id,
                **result.to_dict(),
            })
            outcome = STEP_DONE if result.exit_status == 0 else STEP_REJECTED
            self._record(runtime, "step_status", {
                "step_id": step.id, "from": STEP_RUNNING, "to": outcome, "result_ref": run_seq,
            })
            self._msg(
                runtime, AgentRole.DEV, AgentRole.CRITIC, "step_result",
                {
                    "step_id": step.id,
                    "exit_status": result.exit_status,
                    "stdout": result.stdout[:_OUTPUT_EXCERPT],
                    "stderr": result.stderr[:_OUTPUT_EXCERPT],
                    "failed": result.failed,
                },
                step.id,
            )
            self._transition(runtime, SessionStatus.CRITIQUING, "step executed")
            return StepResult(
                step_id=step.id,
                exit_status=result.exit_status,
                stdout=result.stdout,
                stderr=result.stderr,
                duration_ms=result.duration_ms,
                artifacts=result.artifacts,
            )

    def critique(self, session_id: str) -> CriticVerdict:
        runtime = self._rt(session_id)
        with runtime.lock:
            session = runtime.session
            if session.status != SessionStatus.CRITIQUING:
                raise StateError(
                    f"critique requires status=critiquing, session is {session.status.value}"
                )
            step = session.step(session.current_step_id)
            if step is None:
                raise StateError("no executed step to critique")
            result_msg = next(
                (
                    m for m in reversed(session.history)
                    if m.kind == "step_result" and m.step_ref == step.id
                ),
                None,
            )
            result_text = (
                "exit={exit_status}\nstdout:\n{stdout}\nstderr:\n{stderr}".format(**result_msg.payload)
                if result_msg
                else "no recorded result"
            )
            exchange = runtime.provider.complete(
                AgentRole.CRITIC,
                self.prompts.critique(session.goal, step.id, step.description, result_text),
            )
            verdict = parse_verdict(exchange.response_text)
            self._msg(
                runtime, AgentRole.CRITIC, AgentRole.MANAGER, "critique",
                {
                    "verdict": verdict.verdict,
                    "feedback": verdict.feedback,
                    "gap_description": verdict.gap_description,
                },
                step.id,
            )
            if verdict.verdict == "accept":
                if step.status != STEP_DONE:
                    self._record(runtime, "step_status", {
                        "step_id": step.id, "from": step.status, "to": STEP_DONE,
                    })
                if session.all_done():
                    self._transition(runtime, SessionStatus.FINALIZING, "all steps accepted")
                else:
                    self._transition(runtime, SessionStatus.EXECUTING, "step accepted")
            elif verdict.verdict == "revise":
                if step.status != STEP_REJECTED:
                    self._record(runtime, "step_status", {
                        "step_id": step.id, "from": step.status, "to": STEP_REJECTED,
                    })
                if self._bump_iteration(runtime, f"revise verdict on step {step.id}"):
                    self._transition(runtime, SessionStatus.PLANNING, "revise verdict")
            else:  # capability_gap
                self._record(runtime, "capability_gap", {
                    "step_id": step.id,
                    "description": verdict.gap_description,
                })
                self._msg(
                    runtime, AgentRole.CRITIC, AgentRole.TOOL_CREATOR, "gap_report",
                    {"description": verdict.gap_description}, step.id,
                )
                if self._bump_iteration(runtime, f"capability gap on step {step.id}"):
                    self._transition(runtime, SessionStatus.TOOL_GAP, "capability gap")
            return verdict

    def handle_gap(self, session_id: str) -> str | None:
        """Close the recorded capability gap; returns the tool id, or None
        when parked at a pre-registration human gate."""
        runtime = self._rt(session_id)
        with runtime.lock:
            session = runtime.session
            if session.status != SessionStatus.TOOL_GAP:
                raise StateError(
                    f"handle_gap requires status=tool_gap, session is {session.status.value}"
                )
            gap = session.gap_description
            if not gap:
                raise StateError("session has no recorded capability gap")

            if self.config.gates.pre_tool_registration and not runtime.gate_cleared:
                runtime.pending_gate = "pre_tool_registration"
                self._transition(runtime, SessionStatus.AWAITING_HUMAN, "pre_tool_registration gate")
                return None
            runtime.gate_cleared = False

            def creator(gap_text: str, attempt: int, diagnostics: str) -> str:
                exchange = runtime.provider.complete(
                    AgentRole.TOOL_CREATOR, self.prompts.tool(gap_text, attempt, diagnostics)
                )
                return exchange.response_text

            sink = lambda kind, payload: self._record(runtime, kind, payload)  # noqa: E731
            try:
                manifest = self.registry.create_tool(
                    gap,
                    creator,
                    session_id=session_id,
                    match_threshold=self.config.tool_match_threshold,
                    retries=self.config.tool_retries,
                    sink=sink,
                )
            except ToolCreationError as exc:
                self._fail(runtime, str(exc))
                return None

            gap_step = session.step(session.gap_step_id)
            self._msg(
                runtime, AgentRole.TOOL_CREATOR, AgentRole.MANAGER, "tool_ready",
                {"tool_id": manifest.id, "name": manifest.name},
                session.gap_step_id,
            )
            if gap_step is not None and gap_step.status != STEP_PENDING:
                self._record(runtime, "step_status", {
                    "step_id": gap_step.id,
                    "from": gap_step.status,
                    "to": STEP_PENDING,
                    "tool_id": manifest.id,
                })
            self._transition(runtime, SessionStatus.EXECUTING, "tool ready")
            return manifest.id

    def finalize(self, session_id: str) -> FinalAnswer:
        runtime = self._rt(session_id)
        with runtime.lock:
            session = runtime.session
            if session.status != SessionStatus.FINALIZING:
                raise StateError(
                    f"finalize requires status=finalizing, session is {session.status.value}"
                )
            results_text = "\n".join(
                f"step {s.id}: {session.step_outputs.get(s.id, '').strip()}"
                for s in session.pathway.steps
                if s.status == STEP_DONE
            )
            exchange = runtime.provider.complete(
                AgentRole.MANAGER, self.prompts.final(session.goal, results_text)
            )
            answer = exchange.response_text.strip()
            abstained = answer.upper().startswith("INSUFFICIENT")
            supporting = tuple(s.id for s in session.pathway.steps if s.status == STEP_DONE)
            self._msg(
                runtime, AgentRole.MANAGER, AgentRole.HUMAN, "final_answer",
                {"answer": answer, "supporting": list(supporting), "abstained": abstained},
            )
            self._finish(runtime, SessionStatus.SUCCEEDED, "final answer produced")
            return session.final  # type: ignore[return-value]

    def inject_feedback(self, session_id: str, feedback: HumanFeedback) -> dict[str, Any]:
        runtime = self._rt(session_id)
        with runtime.lock:
            session = runtime.session
            if session.status in TERMINAL:
                raise StateError(f"session is terminal ({session.status.value})")
            if feedback.directive not in ("approve", "reject", "comment"):
                raise ValidationError(f"unknown directive {feedback.directive!r}")
            seq = self._msg(
                runtime, AgentRole.HUMAN, AgentRole.MANAGER, "human_feedback",
                {
                    "author": feedback.author,
                    "directive": feedback.directive,
                    "body": feedback.body,
                    "target_step": feedback.target_step,
                },
                feedback.target_step,
            )
            if session.status == SessionStatus.AWAITING_HUMAN:
                gate = runtime.pending_gate or "post_plan"
                if feedback.directive == "approve":
                    runtime.pending_gate = None
                    if gate == "pre_tool_registration":
                        runtime.gate_cleared = True
                        self._transition(runtime, SessionStatus.TOOL_GAP, "human approved tool creation")
                    else:
                        self._transition(runtime, SessionStatus.EXECUTING, "human approved plan")
                elif feedback.directive == "reject":
                    runtime.pending_gate = None
                    if gate == "pre_tool_registration":
                        self._fail(runtime, "human rejected tool creation")
                    elif self._bump_iteration(runtime, "human rejected plan"):
                        self._transition(runtime, SessionStatus.PLANNING, "human rejected plan")
                # comment leaves the gate pending
            elif feedback.directive == "reject" and session.status in (
                SessionStatus.EXECUTING,
                SessionStatus.CRITIQUING,
            ):
                if self._bump_iteration(runtime, "human rejected pathway"):
                    self._transition(runtime, SessionStatus.PLANNING, "human rejected pathway")
            runtime.cond.notify_all()
            return {"session_id": session_id, "seq": seq, "status": session.status.value}

    def run_to_completion(
        self, session_id: str, gate_handler: GateHandler | None = None
    ) -> FinalAnswer | None:
        """Drive the loop until a terminal status. Returns the final answer,
        or None when the session failed (the failure reason is on the
        session and in the log)."""
        runtime = self._rt(session_id)
        with runtime.lock:
            if runtime.session.status != SessionStatus.PLANNING:
                raise StateError("run_to_completion requires a fresh session in planning")
        try:
            while True:
                with runtime.lock:
                    status = runtime.session.status
                if status in TERMINAL:
                    break
                if status == SessionStatus.PLANNING:
                    self.plan(session_id)
                elif status == SessionStatus.AWAITING_HUMAN:
                    self._await_gate(runtime, gate_handler, session_id)
                elif status == SessionStatus.EXECUTING:
                    self.execute_step(session_id)
                elif status == SessionStatus.CRITIQUING:
                    self.critique(session_id)
                elif status == SessionStatus.TOOL_GAP:
                    self.handle_gap(session_id)
                elif status == SessionStatus.FINALIZING:
                    self.finalize(session_id)
        except (ProviderError, PlanParseError, VerdictParseError, StateError, ValidationError) as exc:
            with runtime.lock:
                self._fail(runtime, f"{type(exc).__name__}: {exc}")
        with runtime.lock:
            return runtime.session.final if runtime.session.status == SessionStatus.SUCCEEDED else None

    def _await_gate(
        self, runtime: _Runtime, gate_handler: GateHandler | None, session_id: str
    ) -> None:
        if gate_handler is not None:
            with runtime.lock:
                gate = runtime.pending_gate or ""
                view = self.session_view(session_id)
            feedback = gate_handler(view, gate)
            if feedback is not None:
                self.inject_feedback(session_id, feedback)
            return
        with runtime.cond:
            while runtime.session.status == SessionStatus.AWAITING_HUMAN:
                runtime.cond.wait(timeout=0.2)

    # -- introspection -----------------------------------------------------------

    def session_view(self, session_id: str) -> dict[str, Any]:
        runtime = self._rt(session_id)
        with runtime.lock:
            session = runtime.session
            record = session.state_record()
            record["pending_gate"] = runtime.pending_gate
            record["state_hash"] = session.state_hash()
            record["usage"] = runtime.provider.usage_snapshot()
            return record

    def replay(self, session_id: str) -> Session:
        return fold_session(self.store.events(session_id))
