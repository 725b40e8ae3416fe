"""Command-line surface: run sessions, score benchmarks, sweep budgets,
inspect registries, replay logs, serve HTTP.

Failures print one JSON diagnostic line on stderr and exit 1; usage
errors exit 2 (argparse). Results go to stdout as JSON so shells and
tests can parse them.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .bench import (
    EngineMCQRunner,
    StochasticMCQRunner,
    SweepConfig,
    TrialBudget,
    evaluate,
    load_dataset,
    sample_subset,
    save_report,
    sweep_budgets,
    synthetic_items,
    write_curve_csv,
)
from .config import RunConfig, StorePaths, load_config
from .errors import EvoAgentError
from .events import EventStore
from .orchestrator import HumanFeedback, Orchestrator, fold_session
from .provider import Provider, ScriptedBackend, load_transcript
from .templates import TemplateLibrary
from .tools import ToolRegistry
from .sandbox import Sandbox


def _config(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if getattr(args, "store_root", None):
        cfg = cfg.with_overrides(stores=StorePaths(root=args.store_root))
    return cfg


def _orchestrator(cfg: RunConfig, transcript: str | None) -> Orchestrator:
    factory = None
    if transcript:
        backend = ScriptedBackend(load_transcript(transcript))
        factory = lambda _sid: Provider(cfg.role_bindings, backend)  # noqa: E731
    return Orchestrator(cfg, provider_factory=factory)


def _emit(value) -> None:
    print(json.dumps(value, indent=2, sort_keys=True))


# -- subcommands -----------------------------------------------------------


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _config(args)
    orch = _orchestrator(cfg, args.transcript)
    session = orch.create_session(args.goal, args.max_iterations)

    def terminal_gate(view, gate):
        if args.approve_gates:
            return HumanFeedback(author="cli", directive="approve")
        prompt = f"[gate {gate}] approve/reject/comment> "
        directive = input(prompt).strip() or "comment"
        body = input("note> ").strip() if directive != "approve" else ""
        return HumanFeedback(author="cli", directive=directive, body=body)

    final = orch.run_to_completion(session.id, gate_handler=terminal_gate if cfg.gates.any else None)
    live = orch.session(session.id)
    _emit({
        "session_id": session.id,
        "status": live.status.value,
        "answer": None if final is None else final.answer,
        "abstained": None if final is None else final.abstained,
        "failure_reason": live.failure_reason,
        "state_hash": live.state_hash(),
    })
    return 0 if final is not None else 1


def cmd_bench(args: argparse.Namespace) -> int:
    cfg = _config(args)
    items = load_dataset(args.dataset)
    if args.fraction is not None:
        items = sample_subset(items, args.fraction, args.sample_seed)
    budget = TrialBudget(args.budget)
    runs = []
    for rep in range(args.reps):
        seed = args.seed + rep
        orch = _orchestrator(cfg, args.transcript)
        report = evaluate(EngineMCQRunner(orch), items, budget, seed)
        runs.append(report)
        if args.out:
            save_report(report, Path(args.out).with_suffix(f".rep{rep + 1}.json"))
    summary = {
        "dataset": args.dataset,
        "items": len(items),
        "budget": budget.n_trials,
        "runs": [
            {
                "accuracy": r.accuracy,
                "precision": r.precision,
                "coverage": r.coverage,
                "precision_defined": r.precision_defined,
                "run_seed": r.run_seed,
            }
            for r in runs
        ],
        "mean_accuracy": sum(r.accuracy for r in runs) / len(runs),
    }
    _emit(summary)
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    budgets = [TrialBudget(int(b)) for b in args.budgets.split(",") if b.strip()]
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else []
    sweep = SweepConfig(budgets=budgets, repetitions=args.reps, seeds=seeds)

    if args.synthetic_p is not None:
        items = synthetic_items(args.items, args.choices)
        p = args.synthetic_p

        def factory(_budget, _rep, _seed):
            return StochasticMCQRunner(p)
    else:
        if not args.dataset:
            raise EvoAgentError("sweep needs either --synthetic-p or --dataset")
        cfg = _config(args)
        items = load_dataset(args.dataset)

        def factory(_budget, _rep, _seed):
            # fresh engine per run: repetitions are independent
            return EngineMCQRunner(_orchestrator(cfg, args.transcript))

    result = sweep_budgets(factory, items, sweep)
    if args.out:
        write_curve_csv(result, args.out)
    _emit(result.to_record())
    return 0


def cmd_tools(args: argparse.Namespace) -> int:
    cfg = _config(args)
    registry = ToolRegistry(cfg.stores.tools, sandbox=Sandbox(cfg.stores.sandbox))
    if args.action == "list":
        _emit({"tools": [t.to_record() for t in registry.all()]})
        return 0
    report = registry.validate(args.tool_id)
    _emit({
        "tool_id": report.tool_id,
        "passed": report.passed,
        "cases": [{"index": c.index, "passed": c.passed, "detail": c.detail} for c in report.cases],
    })
    return 0 if report.passed else 1


def cmd_templates(args: argparse.Namespace) -> int:
    cfg = _config(args)
    path = cfg.stores.templates
    library = TemplateLibrary(path) if Path(path).exists() else TemplateLibrary()
    _emit({"templates": [t.to_record() for t in library.all()]})
    return 0


def cmd_replay(args: argparse.Namespace) -> int:
    cfg = _config(args)
    store = EventStore(cfg.stores.events)
    session = fold_session(store.events(args.session_id))
    _emit({
        "session_id": session.id,
        "status": session.status.value,
        "answer": None if session.final is None else session.final.answer,
        "state_hash": session.state_hash(),
        "events": len(store.events(args.session_id)),
    })
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    cfg = _config(args)
    orch = _orchestrator(cfg, args.transcript)
    console = args.console if args.console else None
    app = create_app(orch, console_dir=console)
    host, _, port = args.addr.rpartition(":")
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port), log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evoagent")
    parser.add_argument("--config", help="YAML config file")
    parser.add_argument("--store-root", help="override the store root directory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one goal to completion")
    p.add_argument("goal")
    p.add_argument("--max-iterations", type=int, default=None)
    p.add_argument("--transcript", help="scripted provider transcript (offline run)")
    p.add_argument("--approve-gates", action="store_true", help="auto-approve human gates")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("bench", help="evaluate a dataset")
    p.add_argument("dataset")
    p.add_argument("--budget", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--fraction", type=float, default=None)
    p.add_argument("--sample-seed", type=int, default=7)
    p.add_argument("--transcript")
    p.add_argument("--out", help="report file prefix")
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("sweep", help="accuracy vs trial budget")
    p.add_argument("--budgets", default="1,3,5,9")
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--seeds", default="")
    p.add_argument("--synthetic-p", type=float, default=None,
                   help="use the synthetic stochastic agent with this per-trial accuracy")
    p.add_argument("--items", type=int, default=100)
    p.add_argument("--choices", type=int, default=2)
    p.add_argument("--dataset")
    p.add_argument("--transcript")
    p.add_argument("--out", help="curve CSV path")
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("tools", help="inspect the tool registry")
    p.add_argument("action", choices=["list", "validate"])
    p.add_argument("tool_id", nargs="?")
    p.set_defaults(fn=cmd_tools)

    p = sub.add_parser("templates", help="list distilled templates")
    p.add_argument("action", choices=["list"])
    p.set_defaults(fn=cmd_templates)

    p = sub.add_parser("replay", help="fold a stored session log")
    p.add_argument("session_id")
    p.set_defaults(fn=cmd_replay)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--addr", default="127.0.0.1:8765")
    p.add_argument("--transcript")
    p.add_argument("--console", help="static console directory to mount at /console")
    p.set_defaults(fn=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except EvoAgentError as exc:
        print(json.dumps({"code": exc.code, "message": str(exc)}), file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(json.dumps({"code": "load", "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
