"""Self-evolving multi-agent research engine.

Four cooperating roles (manager, dev, critic, tool creator) drive a
plan → execute → critique loop over sandboxed Python execution. Two
stores persist experience across sessions — a template library distilled
from successful reasoning pathways and a registry of validated tools —
and a trial engine turns extra test-time compute into accuracy. Every
state change is an appended event, so runs replay deterministically.
"""
from .bench import (
    BenchmarkItem,
    EngineMCQRunner,
    ItemOutcome,
    RunReport,
    StochasticMCQRunner,
    SweepConfig,
    SweepResult,
    evaluate,
    load_dataset,
    sample_subset,
    select_by_ids,
    sweep_budgets,
    synthetic_items,
    write_curve_csv,
)
from .config import DEFAULT_BINDINGS, GateFlags, RunConfig, StorePaths, load_config
from .errors import (
    ConfigError,
    EvoAgentError,
    GatingError,
    LoadError,
    PlanParseError,
    ProviderError,
    ReplayDivergence,
    ReplayError,
    SandboxBusyError,
    SchemaError,
    StateError,
    ToolCreationError,
    ValidationError,
    VerdictParseError,
)
from .events import Event, EventStore, canonical_json, content_hash, normalized_log, strip_volatile
from .orchestrator import (
    AgentMessage,
    CriticVerdict,
    FinalAnswer,
    HumanFeedback,
    Orchestrator,
    PlanStep,
    ReasoningPathway,
    Session,
    SessionStatus,
    StepResult,
    WORKFLOW_EDGES,
    check_workflow,
    fold_session,
    parse_plan,
    parse_verdict,
    provider_call_bound,
)
from .prompts import DEFAULT_PROMPTS, PromptSet
from .provider import (
    ChatExchange,
    HttpBackend,
    Provider,
    RecordingBackend,
    RoleBinding,
    ScriptedBackend,
    ScriptedTranscript,
    load_transcript,
    save_transcript,
)
from .roles import AgentRole
from .sandbox import ExecutionResult, ResourceLimits, Sandbox, Workspace
from .templates import Template, TemplateLibrary, load_library
from .tools import (
    InvocationKind,
    InvocationSpec,
    ToolCategory,
    ToolManifest,
    ToolRegistry,
    ToolStatus,
    ToolTestCase,
    audit_gating,
    parse_tool_response,
    seed_default_tools,
)
from .trials import (
    ABSTAIN,
    AggregateAnswer,
    EngineTrialRunner,
    TrialBudget,
    TrialResult,
    aggregate,
    expected_majority_accuracy,
    extract_answer,
    provider_adjudicator,
    run_trials,
)

__version__ = "0.1.0"
