"""Benchmark harness: dataset loading, sampling, scoring, sweeps, runners."""
import csv
import json
import statistics

import pytest
from hypothesis import given, settings, strategies as st

from conftest import SCRIPTED_PREDICTIONS, dataset_lines, mcq_transcript
from evoagent import (
    BenchmarkItem,
    EngineMCQRunner,
    StochasticMCQRunner,
    SweepConfig,
    TrialBudget,
    evaluate,
    load_dataset,
    sample_subset,
    select_by_ids,
    sweep_budgets,
    synthetic_items,
    write_curve_csv,
)
from evoagent.bench import CSV_HEADER, ItemOutcome, save_report, score
from evoagent.errors import LoadError, ValidationError
from evoagent.trials import ABSTAIN


def make_item(item_id="q1", gold="A", labels=("A", "B", "C")):
    return BenchmarkItem(
        id=item_id,
        question=f"question {item_id}",
        choices=tuple((l, f"option {l}") for l in labels),
        gold_label=gold,
    )


def scripted_runner(item, trial_index, seed):
    return SCRIPTED_PREDICTIONS[item.id]


# -- BenchmarkItem -----------------------------------------------------------


def test_item_needs_two_choices():
    with pytest.raises(ValidationError, match="needs at least 2 choices"):
        make_item(labels=("A",))


def test_item_rejects_duplicate_labels():
    with pytest.raises(ValidationError, match="duplicate choice labels"):
        make_item(labels=("A", "A"))


def test_item_gold_must_be_a_choice():
    with pytest.raises(ValidationError, match="gold label 'D' not in choices"):
        make_item(gold="D")


# -- load_dataset ------------------------------------------------------------


def test_load_dataset_fixture(dataset_path):
    items = load_dataset(dataset_path)
    assert [i.id for i in items] == [f"q{n}" for n in range(1, 9)]
    assert items[0].choices == (("A", "alpha"), ("B", "beta"), ("C", "gamma"))
    assert [i.gold_label for i in items] == ["A", "B", "C", "A", "B", "C", "A", "B"]
    assert all(i.allows_abstention for i in items)


def test_load_dataset_skips_blank_lines(tmp_path):
    path = tmp_path / "d.jsonl"
    path.write_text(dataset_lines()[0] + "\n\n" + dataset_lines()[1] + "\n", "utf-8")
    assert [i.id for i in load_dataset(path)] == ["q1", "q2"]


def test_load_dataset_dict_choices(tmp_path):
    path = tmp_path / "d.jsonl"
    record = {
        "id": "x1",
        "question": "pick",
        "choices": [{"label": "A", "text": "first"}, {"label": "B"}],
        "gold": "A",
        "subdiscipline": "genetics",
        "allows_abstention": False,
    }
    path.write_text(json.dumps(record) + "\n", "utf-8")
    item = load_dataset(path)[0]
    assert item.choices == (("A", "first"), ("B", ""))
    assert item.subdiscipline == "genetics"
    assert not item.allows_abstention


def test_load_dataset_missing_file(tmp_path):
    with pytest.raises(LoadError, match="dataset not found"):
        load_dataset(tmp_path / "absent.jsonl")


def test_load_dataset_invalid_json(tmp_path):
    path = tmp_path / "d.jsonl"
    path.write_text(dataset_lines()[0] + "\n{not json\n", "utf-8")
    with pytest.raises(LoadError, match=rf"{path}:2: invalid JSON"):
        load_dataset(path)


def test_load_dataset_missing_field(tmp_path):
    path = tmp_path / "d.jsonl"
    record = {"id": "q1", "question": "x", "choices": [["A", "a"], ["B", "b"]]}
    path.write_text(json.dumps(record) + "\n", "utf-8")
    with pytest.raises(LoadError, match=r":1: missing field 'gold'"):
        load_dataset(path)


def test_load_dataset_malformed_choice(tmp_path):
    path = tmp_path / "d.jsonl"
    record = {"id": "q1", "question": "x", "choices": [["A"]], "gold": "A"}
    path.write_text(json.dumps(record) + "\n", "utf-8")
    with pytest.raises(LoadError, match=r":1: malformed choice \['A'\]"):
        load_dataset(path)


def test_load_dataset_duplicate_id(tmp_path):
    path = tmp_path / "d.jsonl"
    path.write_text(dataset_lines()[0] + "\n" + dataset_lines()[0] + "\n", "utf-8")
    with pytest.raises(LoadError, match=r":2: duplicate item id 'q1'"):
        load_dataset(path)


def test_load_dataset_wraps_item_validation(tmp_path):
    path = tmp_path / "d.jsonl"
    record = {"id": "q1", "question": "x", "choices": [["A", "a"], ["B", "b"]], "gold": "Z"}
    path.write_text(json.dumps(record) + "\n", "utf-8")
    with pytest.raises(LoadError, match=r":1: item q1: gold label 'Z' not in choices"):
        load_dataset(path)


# -- sampling ------------------------------------------------------------------


def test_sample_subset_floors(dataset_path):
    items = load_dataset(dataset_path)
    assert len(sample_subset(items, 0.5, seed=1)) == 4
    assert len(sample_subset(items, 0.3, seed=1)) == 2  # floor(2.4)


def test_sample_subset_seed_stable(dataset_path):
    items = load_dataset(dataset_path)
    a = [i.id for i in sample_subset(items, 0.5, seed=42)]
    b = [i.id for i in sample_subset(items, 0.5, seed=42)]
    assert a == b


def test_sample_subset_seeds_differ(dataset_path):
    items = load_dataset(dataset_path)
    draws = {tuple(i.id for i in sample_subset(items, 0.5, seed=s)) for s in range(12)}
    assert len(draws) > 1


def test_sample_subset_full_fraction_is_identity(dataset_path):
    items = load_dataset(dataset_path)
    assert sample_subset(items, 1.0, seed=5) == items


def test_sample_subset_preserves_order(dataset_path):
    items = load_dataset(dataset_path)
    subset = sample_subset(items, 0.5, seed=3)
    positions = [items.index(i) for i in subset]
    assert positions == sorted(positions)


def test_sample_subset_zero_selection_rejected(dataset_path):
    items = load_dataset(dataset_path)
    with pytest.raises(ValidationError, match="selects zero of 8 items"):
        sample_subset(items, 0.1, seed=1)


@pytest.mark.parametrize("fraction", [0.0, -0.5, 1.01])
def test_sample_subset_fraction_range(fraction, dataset_path):
    items = load_dataset(dataset_path)
    with pytest.raises(ValidationError, match=r"fraction must be in \(0, 1\]"):
        sample_subset(items, fraction, seed=1)


def test_select_by_ids(dataset_path):
    items = load_dataset(dataset_path)
    picked = select_by_ids(items, ["q5", "q2"])
    assert [i.id for i in picked] == ["q5", "q2"]  # requested order, not corpus order


def test_select_by_ids_unknown(dataset_path):
    items = load_dataset(dataset_path)
    with pytest.raises(ValidationError, match=r"unknown item ids: \['qx'\]"):
        select_by_ids(items, ["q1", "qx"])


# -- scoring --------------------------------------------------------------------


def test_scripted_run_exact_metrics(dataset_path):
    items = load_dataset(dataset_path)
    report = evaluate(scripted_runner, items, TrialBudget(1), seed=7)
    assert report.accuracy == 0.625  # 5 of 8
    assert report.precision == 5 / 7  # 5 of the 7 answered
    assert report.coverage == 0.875  # 7 of 8 answered
    assert report.precision_defined
    by_id = {o.item_id: o for o in report.per_item}
    assert by_id["q8"].predicted == ABSTAIN
    assert [by_id[f"q{n}"].correct for n in range(1, 9)] == [
        True, True, True, True, True, False, False, False,
    ]


def test_all_abstain_keeps_precision_defined_flag_low(dataset_path):
    items = load_dataset(dataset_path)
    report = evaluate(lambda *_: ABSTAIN, items, TrialBudget(1), seed=0)
    assert report.accuracy == 0.0
    assert report.precision == 0.0
    assert report.coverage == 0.0
    assert not report.precision_defined


def test_runner_exception_becomes_abstention(dataset_path):
    items = load_dataset(dataset_path)

    def cranky(item, trial_index, seed):
        if item.id == "q3":
            raise RuntimeError("no thanks")
        return SCRIPTED_PREDICTIONS[item.id]

    report = evaluate(cranky, items, TrialBudget(1), seed=0)
    by_id = {o.item_id: o for o in report.per_item}
    assert by_id["q3"].predicted == ABSTAIN
    assert not by_id["q3"].correct
    assert report.accuracy == 0.5  # lost q3 relative to the scripted run
    assert report.coverage == 0.75


def test_evaluate_majority_across_trials():
    item = make_item(gold="A", labels=("A", "B"))

    def two_of_three(itm, trial_index, seed):
        return "A" if trial_index < 2 else "B"

    report = evaluate(two_of_three, [item], TrialBudget(3), seed=0)
    assert report.per_item[0].predicted == "A"
    assert report.accuracy == 1.0


def test_score_empty_rejected():
    with pytest.raises(ValidationError, match="empty outcome list"):
        score([], TrialBudget(1), 0)


def test_evaluate_empty_rejected():
    with pytest.raises(ValidationError, match="non-empty item list"):
        evaluate(scripted_runner, [], TrialBudget(1), 0)


@settings(max_examples=200)
@given(
    st.lists(
        st.sampled_from(["correct", "wrong", "abstain"]),
        min_size=1,
        max_size=40,
    )
)
def test_metric_identities(kinds):
    outcomes = [
        ItemOutcome(
            item_id=f"i{n}",
            predicted=ABSTAIN if kind == "abstain" else ("G" if kind == "correct" else "X"),
            correct=kind == "correct",
        )
        for n, kind in enumerate(kinds)
    ]
    report = score(outcomes, TrialBudget(1), 0)
    total = len(kinds)
    n_correct = kinds.count("correct")
    n_answered = total - kinds.count("abstain")
    assert report.accuracy == n_correct / total
    assert report.coverage == n_answered / total
    if n_answered:
        assert report.precision == n_correct / n_answered
        assert report.accuracy == pytest.approx(report.precision * report.coverage, abs=1e-12)
    else:
        assert report.precision == 0.0
        assert not report.precision_defined


def test_save_report_round_trip(tmp_path, dataset_path):
    items = load_dataset(dataset_path)
    report = evaluate(scripted_runner, items, TrialBudget(1), seed=7)
    out = tmp_path / "reports" / "run.json"
    save_report(report, out)
    record = json.loads(out.read_text("utf-8"))
    assert record["accuracy"] == 0.625
    assert record["budget"] == 1
    assert record["run_seed"] == 7
    assert len(record["per_item"]) == 8


# -- sweeps ---------------------------------------------------------------------


def test_sweep_config_defaults_seeds():
    sweep = SweepConfig(budgets=[TrialBudget(1)], repetitions=3)
    assert sweep.seeds == [1, 2, 3]


def test_sweep_config_validation():
    with pytest.raises(ValidationError, match="at least one budget"):
        SweepConfig(budgets=[])
    with pytest.raises(ValidationError, match="repetitions must be >= 1"):
        SweepConfig(budgets=[TrialBudget(1)], repetitions=0)
    with pytest.raises(ValidationError, match="one seed per repetition"):
        SweepConfig(budgets=[TrialBudget(1)], repetitions=2, seeds=[1])


def test_sweep_shape_and_exact_means():
    items = synthetic_items(20)
    sweep = SweepConfig(budgets=[TrialBudget(1), TrialBudget(3)], repetitions=3, seeds=[11, 12, 13])
    result = sweep_budgets(lambda b, rep, seed: StochasticMCQRunner(p=0.7), items, sweep)

    assert [(r.budget, r.repetition, r.seed) for r in result.rows] == [
        (1, 1, 11), (1, 2, 12), (1, 3, 13),
        (3, 1, 11), (3, 2, 12), (3, 3, 13),
    ]
    assert len(result.aggregates) == 2
    for agg in result.aggregates:
        accs = [r.accuracy for r in result.rows if r.budget == agg.budget]
        assert agg.mean_accuracy == sum(accs) / 3  # plain mean, no rounding
        assert agg.stddev_accuracy == (statistics.stdev(accs) if len(accs) > 1 else 0.0)
        assert 0.0 <= agg.mean_accuracy <= 1.0


def test_sweep_rows_are_reproducible():
    items = synthetic_items(12)
    sweep = SweepConfig(budgets=[TrialBudget(3)], repetitions=2, seeds=[5, 6])
    factory = lambda b, rep, seed: StochasticMCQRunner(p=0.6)  # noqa: E731
    first = sweep_budgets(factory, items, sweep)
    second = sweep_budgets(factory, items, sweep)
    assert [vars(r) for r in first.rows] == [vars(r) for r in second.rows]


def test_write_curve_csv_layout(tmp_path):
    items = synthetic_items(10)
    sweep = SweepConfig(budgets=[TrialBudget(1), TrialBudget(3)], repetitions=2, seeds=[1, 2])
    result = sweep_budgets(lambda b, rep, seed: StochasticMCQRunner(p=1.0), items, sweep)
    path = tmp_path / "curves" / "out.csv"
    write_curve_csv(result, path)

    rows = list(csv.reader(path.open()))
    assert rows[0] == CSV_HEADER
    run_rows, mean_rows = rows[1:5], rows[5:]
    assert [(r[0], r[1], r[5]) for r in run_rows] == [
        ("1", "1", "1"), ("1", "2", "2"), ("3", "1", "1"), ("3", "2", "2"),
    ]
    assert [(r[0], r[1], r[5]) for r in mean_rows] == [("1", "mean", ""), ("3", "mean", "")]
    # p=1.0 answers every item correctly, so every metric column is exactly 1.0
    assert all(float(v) == 1.0 for r in rows[1:] for v in r[2:5])


# -- reference runners -------------------------------------------------------------


def test_stochastic_runner_deterministic():
    item = make_item()
    runner = StochasticMCQRunner(p=0.6)
    answers = [runner(item, trial_index=2, seed=9) for _ in range(5)]
    assert len(set(answers)) == 1


def test_stochastic_runner_varies_across_trials():
    items = synthetic_items(30)
    runner = StochasticMCQRunner(p=0.5)
    flips = [runner(item, 0, seed=1) != runner(item, 1, seed=1) for item in items]
    assert any(flips)


def test_stochastic_runner_always_abstains_at_rate_one():
    runner = StochasticMCQRunner(p=0.9, abstain_rate=1.0)
    assert runner(make_item(), 0, 0) == ABSTAIN


def test_stochastic_runner_wrong_answers_are_wrong():
    item = make_item(gold="B", labels=("A", "B"))
    runner = StochasticMCQRunner(p=0.0)
    assert runner(item, 0, 0) == "A"


def test_synthetic_items_shape():
    items = synthetic_items(5)
    assert [i.id for i in items] == ["q1", "q2", "q3", "q4", "q5"]
    assert [i.gold_label for i in items] == ["A", "B", "A", "B", "A"]
    three = synthetic_items(4, n_choices=3)
    assert [i.gold_label for i in three] == ["A", "B", "C", "A"]


# -- engine-backed runner ------------------------------------------------------------


def test_goal_for_format():
    item = make_item(item_id="q9", gold="A", labels=("A", "B"))
    goal = EngineMCQRunner.goal_for(item)
    assert goal == (
        "[q9] question q9\n"
        "choices:\n"
        "A: option A\n"
        "B: option B\n"
        "INSUFFICIENT: abstain if the evidence is insufficient\n"
        "Reply with 'ANSWER: <label>' in the final response."
    )


def test_goal_for_without_abstention():
    item = BenchmarkItem(
        id="q1", question="q", choices=(("A", "a"), ("B", "b")),
        gold_label="A", allows_abstention=False,
    )
    assert "INSUFFICIENT" not in EngineMCQRunner.goal_for(item)


def test_engine_runner_end_to_end(engine_factory, dataset_path):
    items = load_dataset(dataset_path)
    orch, _ = engine_factory(mcq_transcript(SCRIPTED_PREDICTIONS))
    runner = EngineMCQRunner(orch)
    report = evaluate(runner, items, TrialBudget(1), seed=0)
    assert report.accuracy == 0.625
    assert report.precision == 5 / 7
    assert report.coverage == 0.875
    assert len(orch.sessions()) == 8  # one session per item at budget 1
