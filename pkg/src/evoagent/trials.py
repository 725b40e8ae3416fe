"""Test-time scaling: run a task as n independent trials and aggregate.

Trials run sequentially so that anything distilled or registered during
trial k (templates, tools) is visible to trial k+1 — later trials inherit
earlier experience. Aggregation excludes abstentions and failures, takes
the unique plurality winner, and falls back to a critic-role adjudication
over tied candidates. `expected_majority_accuracy` is the closed-form
oracle used to check that accuracy grows with the trial budget.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from collections import Counter
from typing import Callable

from .errors import ValidationError
from .orchestrator import Orchestrator
from .prompts import DEFAULT_PROMPTS, PromptSet
from .provider import Provider
from .roles import AgentRole

ABSTAIN = "INSUFFICIENT"


@dataclass(frozen=True)
class TrialBudget:
    n_trials: int

    def __post_init__(self):
        if self.n_trials < 1:
            raise ValidationError("n_trials must be >= 1")


@dataclass
class TrialResult:
    trial_index: int
    answer: str
    session_ref: str = ""
    succeeded: bool = True
    note: str = ""


@dataclass
class AggregateAnswer:
    answer: str
    method: str  # single | majority | critic_adjudicated
    vote_counts: dict[str, int]


TrialFn = Callable[[int], TrialResult]
Adjudicator = Callable[[list[str]], str]


def run_trials(trial_fn: TrialFn, budget: TrialBudget) -> list[TrialResult]:
    """Execute trials 0..n-1 in order; a trial that raises is recorded as a
    failed abstention and the run continues."""
    results: list[TrialResult] = []
    for index in range(budget.n_trials):
        try:
            results.append(trial_fn(index))
        except Exception as exc:  # noqa: BLE001 - trial isolation is the contract
            results.append(
                TrialResult(index, ABSTAIN, succeeded=False, note=f"{type(exc).__name__}: {exc}")
            )
    return results


def aggregate(results: list[TrialResult], adjudicator: Adjudicator | None = None) -> AggregateAnswer:
    """Combine trial answers. Failures and abstentions don't vote; an
    abstention only wins when nothing else voted at all."""
    if not results:
        raise ValidationError("aggregate requires at least one trial result")
    votes = [r.answer.strip() for r in results if r.succeeded and r.answer.strip() != ABSTAIN]
    counts = dict(Counter(votes))
    if len(results) == 1:
        return AggregateAnswer(results[0].answer.strip() if votes else ABSTAIN, "single", counts)
    if not votes:
        return AggregateAnswer(ABSTAIN, "majority", {})
    top = max(counts.values())
    tied = sorted(answer for answer, n in counts.items() if n == top)
    if len(tied) == 1:
        return AggregateAnswer(tied[0], "majority", counts)
    if adjudicator is None:
        # no critic available: deterministic lexicographic tie-break
        return AggregateAnswer(tied[0], "majority", counts)
    choice = adjudicator(tied).strip()
    if choice not in tied:
        matches = [c for c in tied if c in choice]
        choice = matches[0] if matches else tied[0]
    return AggregateAnswer(choice, "critic_adjudicated", counts)


def provider_adjudicator(provider: Provider, prompts: PromptSet = DEFAULT_PROMPTS) -> Adjudicator:
    """Adjudicate ties with a critic-role completion over the candidates."""

    def adjudicate(candidates: list[str]) -> str:
        exchange = provider.complete(AgentRole.CRITIC, prompts.adjudicate(candidates))
        return exchange.response_text

    return adjudicate


def expected_majority_accuracy(p: float, n: int) -> float:
    """P(majority of n independent trials is correct) when each trial is
    correct with probability p. Defined for odd n only; ties would need an
    extra tie-break model."""
    if not 0.0 <= p <= 1.0:
        raise ValidationError("p must be in [0, 1]")
    if n < 1 or n % 2 == 0:
        raise ValidationError("n must be a positive odd integer")
    return sum(
        math.comb(n, k) * p**k * (1.0 - p) ** (n - k) for k in range(n // 2 + 1, n + 1)
    )


def extract_answer(text: str) -> str:
    """Pull the answer out of a final response: the last ANSWER: line wins;
    a response opening with the abstain marker abstains; otherwise the
    whole stripped text is the answer."""
    stripped = text.strip()
    if stripped.upper().startswith(ABSTAIN):
        return ABSTAIN
    answer_lines = [
        line.split(":", 1)[1].strip()
        for line in stripped.splitlines()
        if line.strip().upper().startswith("ANSWER:")
    ]
    if answer_lines:
        return answer_lines[-1] or ABSTAIN
    return stripped


@dataclass
class EngineTrialRunner:
    """Run each trial as a full session against a shared orchestrator, so
    the library and registry evolve across trials."""

    orchestrator: Orchestrator
    goal: str

    def run_trial(self, index: int) -> TrialResult:
        session = self.orchestrator.create_session(self.goal)
        final = self.orchestrator.run_to_completion(session.id)
        if final is None:
            live = self.orchestrator.session(session.id)
            return TrialResult(index, ABSTAIN, session.id, False, note=live.failure_reason or "")
        answer = ABSTAIN if final.abstained else extract_answer(final.answer)
        return TrialResult(index, answer, session.id, True)

    def run(self, budget: TrialBudget) -> list[TrialResult]:
        return run_trials(self.run_trial, budget)
