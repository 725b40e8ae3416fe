"""Benchmark harness: MCQ datasets, seeded subsets, budgeted runs, sweeps.

Scoring follows the abstention-aware convention: an abstention hurts
accuracy and coverage but not precision. All-abstain runs report
precision 0.0 with an explicit undefined flag instead of dividing by
zero. Sweep output is a CSV with the frozen header
`budget,repetition,accuracy,precision,coverage,seed`.
"""
from __future__ import annotations

import csv
import json
import math
import random
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from .errors import LoadError, ValidationError
from .orchestrator import Orchestrator
from .trials import ABSTAIN, Adjudicator, TrialBudget, TrialResult, aggregate, extract_answer


@dataclass(frozen=True)
class BenchmarkItem:
    id: str
    question: str
    choices: tuple[tuple[str, str], ...]  # (label, text)
    gold_label: str
    allows_abstention: bool = True
    subdiscipline: str | None = None

    def __post_init__(self):
        labels = [label for label, _ in self.choices]
        if len(self.choices) < 2:
            raise ValidationError(f"item {self.id}: needs at least 2 choices")
        if len(set(labels)) != len(labels):
            raise ValidationError(f"item {self.id}: duplicate choice labels")
        if self.gold_label not in labels:
            raise ValidationError(f"item {self.id}: gold label {self.gold_label!r} not in choices")


def load_dataset(path: str | Path) -> list[BenchmarkItem]:
    """One JSON record per line: id, question, choices, gold, and optional
    allows_abstention / subdiscipline. Choices are [label, text] pairs or
    {label, text} objects."""
    path = Path(path)
    if not path.exists():
        raise LoadError(f"dataset not found: {path}")
    items: list[BenchmarkItem] = []
    seen: set[str] = set()
    for lineno, line in enumerate(path.read_text("utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise LoadError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
        for name in ("id", "question", "choices", "gold"):
            if name not in record:
                raise LoadError(f"{path}:{lineno}: missing field {name!r}")
        choices = []
        for raw in record["choices"]:
            if isinstance(raw, dict):
                choices.append((str(raw["label"]), str(raw.get("text", ""))))
            elif isinstance(raw, (list, tuple)) and len(raw) == 2:
                choices.append((str(raw[0]), str(raw[1])))
            else:
                raise LoadError(f"{path}:{lineno}: malformed choice {raw!r}")
        item_id = str(record["id"])
        if item_id in seen:
            raise LoadError(f"{path}:{lineno}: duplicate item id {item_id!r}")
        seen.add(item_id)
        try:
            items.append(
                BenchmarkItem(
                    id=item_id,
                    question=str(record["question"]),
                    choices=tuple(choices),
                    gold_label=str(record["gold"]),
                    allows_abstention=bool(record.get("allows_abstention", True)),
                    subdiscipline=record.get("subdiscipline"),
                )
            )
        except ValidationError as exc:
            raise LoadError(f"{path}:{lineno}: {exc}") from exc
    return items


def sample_subset(items: list[BenchmarkItem], fraction: float, seed: int) -> list[BenchmarkItem]:
    """floor(fraction·N) items, seeded sampling without replacement, original
    order preserved."""
    if not 0.0 < fraction <= 1.0:
        raise ValidationError("fraction must be in (0, 1]")
    size = math.floor(fraction * len(items))
    if size == 0:
        raise ValidationError(f"fraction {fraction} selects zero of {len(items)} items")
    indices = sorted(random.Random(seed).sample(range(len(items)), size))
    return [items[i] for i in indices]


def select_by_ids(items: list[BenchmarkItem], ids: list[str]) -> list[BenchmarkItem]:
    """Fixed-list selection (e.g. a curated 50-question set)."""
    by_id = {item.id: item for item in items}
    missing = [i for i in ids if i not in by_id]
    if missing:
        raise ValidationError(f"unknown item ids: {missing}")
    return [by_id[i] for i in ids]


@dataclass
class ItemOutcome:
    item_id: str
    predicted: str  # label or the abstain marker
    correct: bool

    def to_record(self) -> dict[str, Any]:
        return {"item_id": self.item_id, "predicted": self.predicted, "correct": self.correct}


@dataclass
class RunReport:
    per_item: list[ItemOutcome]
    accuracy: float
    precision: float
    coverage: float
    precision_defined: bool
    budget: TrialBudget
    run_seed: int

    def to_record(self) -> dict[str, Any]:
        return {
            "per_item": [o.to_record() for o in self.per_item],
            "accuracy": self.accuracy,
            "precision": self.precision,
            "coverage": self.coverage,
            "precision_defined": self.precision_defined,
            "budget": self.budget.n_trials,
            "run_seed": self.run_seed,
        }


def score(outcomes: list[ItemOutcome], budget: TrialBudget, run_seed: int) -> RunReport:
    total = len(outcomes)
    if total == 0:
        raise ValidationError("cannot score an empty outcome list")
    answered = [o for o in outcomes if o.predicted != ABSTAIN]
    correct = sum(1 for o in outcomes if o.correct)
    precision_defined = bool(answered)
    return RunReport(
        per_item=outcomes,
        accuracy=correct / total,
        precision=(correct / len(answered)) if answered else 0.0,
        coverage=len(answered) / total,
        precision_defined=precision_defined,
        budget=budget,
        run_seed=run_seed,
    )


# runner(item, trial_index, seed) -> predicted label or ABSTAIN
ItemRunner = Callable[[BenchmarkItem, int, int], str]


def evaluate(
    runner: ItemRunner,
    items: list[BenchmarkItem],
    budget: TrialBudget,
    seed: int,
    adjudicator: Adjudicator | None = None,
) -> RunReport:
    """Answer every item with `budget.n_trials` trials and aggregate. A
    runner exception on one trial becomes a failed abstaining trial; the
    evaluation always completes."""
    if not items:
        raise ValidationError("evaluate requires a non-empty item list")
    outcomes: list[ItemOutcome] = []
    for item in items:
        trials: list[TrialResult] = []
        for index in range(budget.n_trials):
            try:
                answer = runner(item, index, seed)
                trials.append(TrialResult(index, answer))
            except Exception as exc:  # noqa: BLE001 - item isolation contract
                trials.append(
                    TrialResult(index, ABSTAIN, succeeded=False, note=f"{type(exc).__name__}: {exc}")
                )
        combined = aggregate(trials, adjudicator)
        predicted = combined.answer
        correct = predicted != ABSTAIN and predicted == item.gold_label
        outcomes.append(ItemOutcome(item.id, predicted, correct))
    return score(outcomes, budget, seed)


def save_report(report: RunReport, path: str | Path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(report.to_record(), indent=2, sort_keys=True) + "\n", "utf-8")


# -- sweeps -------------------------------------------------------------------


@dataclass
class SweepConfig:
    budgets: list[TrialBudget]
    repetitions: int = 3
    seeds: list[int] = field(default_factory=list)

    def __post_init__(self):
        if not self.budgets:
            raise ValidationError("sweep needs at least one budget")
        if self.repetitions < 1:
            raise ValidationError("repetitions must be >= 1")
        if not self.seeds:
            self.seeds = list(range(1, self.repetitions + 1))
        if len(self.seeds) != self.repetitions:
            raise ValidationError("need exactly one seed per repetition")


@dataclass
class SweepRow:
    budget: int
    repetition: int  # 1-based
    accuracy: float
    precision: float
    coverage: float
    seed: int


@dataclass
class SweepAggregate:
    budget: int
    mean_accuracy: float
    stddev_accuracy: float
    mean_precision: float
    mean_coverage: float


@dataclass
class SweepResult:
    rows: list[SweepRow]
    aggregates: list[SweepAggregate]

    def to_record(self) -> dict[str, Any]:
        return {
            "rows": [vars(r) for r in self.rows],
            "aggregates": [vars(a) for a in self.aggregates],
        }


# factory(budget, repetition, seed) -> fresh runner for that run
RunnerFactory = Callable[[TrialBudget, int, int], ItemRunner]


def sweep_budgets(
    runner_factory: RunnerFactory,
    items: list[BenchmarkItem],
    sweep: SweepConfig,
    adjudicator: Adjudicator | None = None,
) -> SweepResult:
    """One independent run per (budget, repetition) with its own seed and a
    fresh runner; the per-budget aggregate is the plain arithmetic mean of
    repetition accuracies."""
    rows: list[SweepRow] = []
    aggregates: list[SweepAggregate] = []
    for budget in sweep.budgets:
        accs: list[float] = []
        precs: list[float] = []
        covs: list[float] = []
        for rep in range(1, sweep.repetitions + 1):
            seed = sweep.seeds[rep - 1]
            runner = runner_factory(budget, rep, seed)
            report = evaluate(runner, items, budget, seed, adjudicator)
            rows.append(
                SweepRow(budget.n_trials, rep, report.accuracy, report.precision, report.coverage, seed)
            )
            accs.append(report.accuracy)
            precs.append(report.precision)
            covs.append(report.coverage)
        aggregates.append(
            SweepAggregate(
                budget=budget.n_trials,
                mean_accuracy=sum(accs) / len(accs),
                stddev_accuracy=statistics.stdev(accs) if len(accs) > 1 else 0.0,
                mean_precision=sum(precs) / len(precs),
                mean_coverage=sum(covs) / len(covs),
            )
        )
    return SweepResult(rows, aggregates)


CSV_HEADER = ["budget", "repetition", "accuracy", "precision", "coverage", "seed"]


def write_curve_csv(result: SweepResult, path: str | Path) -> None:
    """Run rows first, then one `mean` row per budget. The header is frozen;
    stddev lives only in the JSON record."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for row in result.rows:
            writer.writerow([row.budget, row.repetition, row.accuracy, row.precision, row.coverage, row.seed])
        for agg in result.aggregates:
            writer.writerow([agg.budget, "mean", agg.mean_accuracy, agg.mean_precision, agg.mean_coverage, ""])


# -- reference runners ----------------------------------------------------------


@dataclass
class StochasticMCQRunner:
    """Synthetic agent: correct with probability p, else a deterministic
    wrong label; abstains with probability abstain_rate first. Fully
    determined by (seed, item id, trial index), so trials are independent
    and runs are reproducible."""

    p: float
    abstain_rate: float = 0.0

    def __call__(self, item: BenchmarkItem, trial_index: int, seed: int) -> str:
        rng = random.Random(f"{seed}:{item.id}:{trial_index}")
        if self.abstain_rate and rng.random() < self.abstain_rate:
            return ABSTAIN
        if rng.random() < self.p:
            return item.gold_label
        wrong = [label for label, _ in item.choices if label != item.gold_label]
        return wrong[0]


def synthetic_items(n: int, n_choices: int = 2) -> list[BenchmarkItem]:
    """Flat MCQ corpus for oracle checks; two choices by default so that a
    plurality over odd trials is exactly a strict majority."""
    labels = [chr(ord("A") + i) for i in range(n_choices)]
    return [
        BenchmarkItem(
            id=f"q{i + 1}",
            question=f"synthetic question {i + 1}",
            choices=tuple((label, f"option {label}") for label in labels),
            gold_label=labels[i % n_choices],
            allows_abstention=True,
        )
        for i in range(n)
    ]


@dataclass
class EngineMCQRunner:
    """Answer items with full engine sessions; builds one session per trial
    against a shared orchestrator so self-evolution carries across items."""

    orchestrator: Orchestrator

    @staticmethod
    def goal_for(item: BenchmarkItem) -> str:
        lines = [f"[{item.id}] {item.question}", "choices:"]
        lines += [f"{label}: {text}" for label, text in item.choices]
        if item.allows_abstention:
            lines.append(f"{ABSTAIN}: abstain if the evidence is insufficient")
        lines.append("Reply with 'ANSWER: <label>' in the final response.")
        return "\n".join(lines)

    def __call__(self, item: BenchmarkItem, trial_index: int, seed: int) -> str:
        session = self.orchestrator.create_session(self.goal_for(item))
        final = self.orchestrator.run_to_completion(session.id)
        if final is None or final.abstained:
            return ABSTAIN
        return extract_answer(final.answer)
