"""Command-line entry point.

Exit codes are stable for scripting: 0 success, 2 configuration or input
error, 3 runtime or planning error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import acg, kb, metrics, planner, refine
from .clients import RemoteClient, RuleClient, ScriptedClient
from .errors import (
    AdaptkitError,
    ConfigError,
    DomainError,
    GraphError,
    InputError,
    ObjectiveError,
    PlanningError,
    ProtocolError,
    ScriptExhaustedError,
    SpaceParseError,
    SpaceValidationError,
    TransportError,
)
from .objectives import ExternalObjective, eval_builtin, make_builtin
from .space import parse_space, parse_space_obj

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

_CONFIG_ERRORS = (
    ConfigError,
    DomainError,
    InputError,
    SpaceParseError,
    SpaceValidationError,
    json.JSONDecodeError,
    OSError,
)
_RUNTIME_ERRORS = (
    ObjectiveError,
    PlanningError,
    ProtocolError,
    GraphError,
    ScriptExhaustedError,
    TransportError,
)


def _fail(code: int, message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _load_json(path: str):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def make_client(spec: str):
    if spec == "rule":
        return RuleClient()
    if spec.startswith("mock:"):
        replies = _load_json(spec[len("mock:"):])
        if not isinstance(replies, list) or not all(isinstance(r, str) for r in replies):
            raise InputError("mock script file must hold a JSON list of reply strings")
        return ScriptedClient(replies)
    if spec.startswith("remote:"):
        return RemoteClient(endpoint=spec[len("remote:"):])
    raise InputError(f"unknown client spec {spec!r}; use rule, mock:<path>, or remote:<url>")


# ---------------------------------------------------------------------------
# refine
# ---------------------------------------------------------------------------

def _build_objective(cfg: dict, negate: bool):
    spec = cfg.get("objective")
    if not isinstance(spec, dict):
        raise ConfigError("config needs an 'objective' object")
    known_optimum = None
    if "builtin" in spec:
        objective = make_builtin(spec["builtin"], spec.get("params"))
        known_optimum = objective.optimum_value
        space = objective.space()
        fn = lambda a: eval_builtin(objective, a)
    elif "command" in spec:
        objective = ExternalObjective(spec["command"])
        space = None
        fn = objective
    else:
        raise ConfigError("objective must name a 'builtin' or a 'command'")
    if negate:
        inner = fn
        fn = lambda a: -inner(a)
        known_optimum = None
    if "space" in cfg:
        space = parse_space_obj(cfg["space"])
    elif "space_path" in cfg:
        space = parse_space(Path(cfg["space_path"]).read_text(encoding="utf-8"))
    if space is None:
        raise ConfigError("config needs an inline 'space' or a 'space_path'")
    return fn, space, known_optimum


def _refine_config(cfg: dict, seed: int) -> refine.RefineConfig:
    section = dict(cfg.get("refine", {}))
    section.pop("seed", None)
    if "augment" in section:
        from .augment import AugmentConfig

        section["augment"] = (
            None if section["augment"] is None else AugmentConfig(**section["augment"])
        )
    if "gp" in section:
        from .gp import GPFitConfig

        section["gp"] = GPFitConfig(**section["gp"])
    if "beta" in section:
        from .acquire import BetaConfig

        section["beta"] = BetaConfig(**section["beta"])
    try:
        return refine.RefineConfig(seed=seed, **section)
    except TypeError as exc:
        raise ConfigError(f"bad refine section: {exc}") from exc


def _run_refine_once(fn, space, run_cfg, out_dir: Path, known_optimum):
    out_dir.mkdir(parents=True, exist_ok=True)
    best, trace = refine.run_autorefine(fn, space, run_cfg)
    (out_dir / "trace.jsonl").write_text(trace.to_jsonl(), encoding="utf-8")
    values = trace.values()
    f_opt = known_optimum if known_optimum is not None else max(values)
    report = {
        "best": best.values,
        "best_value": max(values),
        "actual_evals": trace.actual_count,
        "F_a": trace.final_augmentation_factor(),
        "seed": run_cfg.seed,
        "f_opt_reference": f_opt,
    }
    (out_dir / "report.json").write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    (out_dir / "regret.csv").write_text(metrics.regret_csv(values, f_opt), encoding="utf-8")
    return report


def cmd_refine(args) -> int:
    try:
        cfg = _load_json(args.config)
        seed = args.seed if args.seed is not None else cfg.get("seed")
        if seed is None:
            raise ConfigError("a seed is mandatory: set 'seed' in the config or pass --seed")
        fn, space, known_optimum = _build_objective(cfg, args.negate)
        out = Path(args.out)
        seeds = [seed + i for i in range(args.seeds)] if args.seeds else [seed]
        run_cfgs = [_refine_config(cfg, s) for s in seeds]
    except _CONFIG_ERRORS as exc:
        return _fail(EXIT_CONFIG, str(exc))
    try:
        if len(run_cfgs) == 1:
            report = _run_refine_once(fn, space, run_cfgs[0], out, known_optimum)
            print(json.dumps(report, indent=2))
        else:
            reports = []
            for run_cfg in run_cfgs:
                reports.append(
                    _run_refine_once(fn, space, run_cfg, out / f"seed_{run_cfg.seed}", known_optimum)
                )
            print(json.dumps(reports, indent=2))
    except _RUNTIME_ERRORS as exc:
        return _fail(EXIT_RUNTIME, str(exc))
    return EXIT_OK


# ---------------------------------------------------------------------------
# plan
# ---------------------------------------------------------------------------

def cmd_plan(args) -> int:
    try:
        graph = (
            acg.default_graph()
            if args.graph == "default"
            else acg.graph_from_json(Path(args.graph).read_text(encoding="utf-8"))
        )
        task = _load_json(args.task)
        description = task.get("description")
        if not description:
            raise ConfigError("task file needs a 'description'")
        stats = (
            planner.data_statistics([tuple(pair) for pair in task["dataset"]])
            if task.get("dataset")
            else None
        )
        constraints = (
            planner.UserConstraints.from_obj(_load_json(args.constraints))
            if args.constraints
            else planner.UserConstraints()
        )
        store = kb.ingest(args.kb)[0] if args.kb else None
        client = make_client(args.client)
        cfg = planner.DebateConfig(rounds_max=args.rounds, constraints=constraints)
        ctx = planner.PlanningContext(task=description, stats=stats, kb=store)
        out = Path(args.out)
    except _CONFIG_ERRORS as exc:
        return _fail(EXIT_CONFIG, str(exc))

    transcripts_dir = out / args.plan_id
    try:
        plan, transcripts = planner.plan_with_debate(graph, ctx, cfg, client)
    except PlanningError as exc:
        transcripts_dir.mkdir(parents=True, exist_ok=True)
        for transcript in getattr(exc, "transcripts", None) or ([exc.transcript] if exc.transcript else []):
            path = transcripts_dir / f"{transcript.node_id}.json"
            path.write_text(transcript.to_json() + "\n", encoding="utf-8")
        return _fail(EXIT_RUNTIME, f"{exc} (transcripts under {transcripts_dir})")
    except _RUNTIME_ERRORS as exc:
        return _fail(EXIT_RUNTIME, str(exc))

    problems = acg.validate_plan(graph, plan)
    out.mkdir(parents=True, exist_ok=True)
    transcripts_dir.mkdir(parents=True, exist_ok=True)
    (out / "plan.json").write_text(plan.to_json() + "\n", encoding="utf-8")
    for transcript in transcripts:
        (transcripts_dir / f"{transcript.node_id}.json").write_text(
            transcript.to_json() + "\n", encoding="utf-8"
        )
    print(plan.to_json())
    if problems:
        return _fail(EXIT_RUNTIME, "plan failed validation: " + "; ".join(map(str, problems)))
    return EXIT_OK


# ---------------------------------------------------------------------------
# kb
# ---------------------------------------------------------------------------

def cmd_kb(args) -> int:
    try:
        if args.kb_command == "ingest":
            _, count = kb.ingest(args.records)
            print(f"accepted: {count}")
        elif args.kb_command == "query":
            store, _ = kb.ingest(args.records)
            results = store.query(args.descriptor, top_k=args.top_k)
            print(
                json.dumps(
                    [{"score": score, "record": record.to_obj()} for record, score in results],
                    indent=2,
                )
            )
        else:  # di
            lines = Path(args.spaces).read_text(encoding="utf-8").splitlines()
            summaries = [
                kb.summarize_space(parse_space(line)) for line in lines if line.strip()
            ]
            value = kb.dispersion_index(summaries, alpha=args.alpha)
            print(json.dumps({"dispersion_index": value, "alpha": args.alpha, "n": len(summaries)}))
    except _CONFIG_ERRORS as exc:
        return _fail(EXIT_CONFIG, str(exc))
    return EXIT_OK


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def cmd_metrics(args) -> int:
    try:
        if args.metrics_command == "score":
            card = metrics.make_scorecard(args.iterations, args.raw, args.scale)
            print(json.dumps(vars(card), indent=2))
        elif args.metrics_command == "regret":
            trace = refine.RefineTrace.from_jsonl(Path(args.trace).read_text(encoding="utf-8"))
            values = trace.values()
            f_opt = args.f_opt if args.f_opt is not None else max(values)
            csv_text = metrics.regret_csv(values, f_opt)
            if args.out:
                Path(args.out).write_text(csv_text, encoding="utf-8")
            print(csv_text, end="")
        else:  # bounds
            floor = metrics.min_iterations(args.epsilon, args.f_a)
            lines = {"min_iterations": floor, "epsilon": args.epsilon, "F_a": args.f_a}
            if args.t_a_max:
                lines["envelope"] = [
                    {"t_a": t, "bound": metrics.regret_bound_curve(t, args.f_a, args.c)}
                    for t in range(3, args.t_a_max + 1)
                ]
            print(json.dumps(lines, indent=2))
    except _CONFIG_ERRORS as exc:
        return _fail(EXIT_CONFIG, str(exc))
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument wiring
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adaptkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("refine", help="run the refinement loop on an objective")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--seeds", type=int, default=0, help="loop N consecutive seeds")
    p.add_argument("--negate", action="store_true", help="minimize instead of maximize")
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("plan", help="debate a graph into an executable plan")
    p.add_argument("--graph", default="default")
    p.add_argument("--task", required=True)
    p.add_argument("--constraints", default=None)
    p.add_argument("--kb", default=None, help="JSON-lines record file")
    p.add_argument("--client", default="rule")
    p.add_argument("--rounds", type=int, default=2)
    p.add_argument("--out", required=True)
    p.add_argument("--plan-id", default="plan")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("kb", help="knowledge-base operations")
    kb_sub = p.add_subparsers(dest="kb_command", required=True)
    q = kb_sub.add_parser("ingest")
    q.add_argument("--records", required=True)
    q = kb_sub.add_parser("query")
    q.add_argument("--records", required=True)
    q.add_argument("--descriptor", required=True)
    q.add_argument("--top-k", type=int, default=5)
    q = kb_sub.add_parser("di")
    q.add_argument("--spaces", required=True, help="JSON-lines file of range documents")
    q.add_argument("--alpha", type=float, default=0.5)
    p.set_defaults(func=cmd_kb)

    p = sub.add_parser("metrics", help="score and regret arithmetic")
    m_sub = p.add_subparsers(dest="metrics_command", required=True)
    q = m_sub.add_parser("score")
    q.add_argument("--iterations", type=int, required=True)
    q.add_argument("--raw", type=float, required=True)
    q.add_argument("--scale", type=float, required=True)
    q = m_sub.add_parser("regret")
    q.add_argument("--trace", required=True)
    q.add_argument("--f-opt", type=float, default=None)
    q.add_argument("--out", default=None)
    q = m_sub.add_parser("bounds")
    q.add_argument("--epsilon", type=float, required=True)
    q.add_argument("--f-a", type=float, default=1.0)
    q.add_argument("--c", type=float, default=1.0)
    q.add_argument("--t-a-max", type=int, default=0)
    p.set_defaults(func=cmd_metrics)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except AdaptkitError as exc:  # anything uncaught above is a runtime fault
        return _fail(EXIT_RUNTIME, str(exc))


if __name__ == "__main__":
    sys.exit(main())
