"""Exception hierarchy shared across the engine."""


class EvoAgentError(Exception):
    """Base class for all engine errors."""

    code = "error"


class ValidationError(EvoAgentError):
    """Bad input value or malformed record."""

    code = "validation"


class StateError(EvoAgentError):
    """Operation not allowed in the current state."""

    code = "state"


class ConfigError(EvoAgentError):
    """Missing or inconsistent configuration."""

    code = "config"


class ProviderError(EvoAgentError):
    """Model backend failed; retryable at the caller's discretion."""

    code = "provider"

    def __init__(self, message: str, retryable: bool = True):
        super().__init__(message)
        self.retryable = retryable


class ReplayDivergence(ProviderError):
    """A replayed request did not match the recorded transcript."""

    code = "replay_divergence"

    def __init__(self, message: str):
        super().__init__(message, retryable=False)


class PlanParseError(EvoAgentError):
    """Planner output did not follow the structured plan grammar."""

    code = "plan_parse"


class VerdictParseError(EvoAgentError):
    """Critic output lacked a leading ACCEPT/REVISE/GAP token."""

    code = "verdict_parse"


class GatingError(EvoAgentError):
    """Attempt to invoke a tool that is not validated."""

    code = "gating"


class SchemaError(ValidationError):
    """Arguments or outputs do not conform to a declared schema."""

    code = "schema"


class ToolCreationError(EvoAgentError):
    """Tool-creation pipeline exhausted its retry budget."""

    code = "tool_creation"


class SandboxBusyError(StateError):
    """Workspace has a script running."""

    code = "sandbox_busy"


class LoadError(EvoAgentError):
    """A store or dataset file could not be parsed."""

    code = "load"


class ReplayError(EvoAgentError):
    """Event log could not be folded back into a session."""

    code = "replay"
