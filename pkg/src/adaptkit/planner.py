"""Multi-agent debate over each graph node: proposal agents draft, critic
agents vet against user and data constraints, an aggregator merges, and the
loop repeats until the decision passes constraint checking or the round
budget runs out.

All model calls go through a pluggable text-completion client, so the whole
planner is deterministic offline with mocks.
"""

from __future__ import annotations

import ast
import json
import math
import re
import string
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

from . import acg
from .clients import ModelClient
from .errors import ExtractionError, InputError, PlanningError
from .kb import KB
from .space import SearchSpace, parse_space_obj, space_to_obj

TEMPLATE_DIR = Path(__file__).parent / "templates"

PROPOSAL_AGENTS = ("best_practice", "research", "knowledge_retriever")
CRITIC_AGENTS = ("user_preference", "data")

_EPOCH_PARAM_NAMES = {"epochs", "num_train_epochs"}
_MODEL_PARAM_NAMES = {"model_name_or_path", "base_model"}


# ---------------------------------------------------------------------------
# Dataset statistics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LengthStats:
    mean: float
    max: int
    p95: int


@dataclass(frozen=True)
class DataStats:
    n: int
    input_tokens: LengthStats
    output_tokens: LengthStats
    distinct_outputs: int

    def to_obj(self) -> dict:
        return {
            "n": self.n,
            "input_tokens": vars(self.input_tokens),
            "output_tokens": vars(self.output_tokens),
            "distinct_outputs": self.distinct_outputs,
        }


def _length_stats(lengths: Sequence[int]) -> LengthStats:
    ordered = sorted(lengths)
    rank = math.ceil(0.95 * len(ordered))  # nearest-rank percentile
    return LengthStats(
        mean=sum(ordered) / len(ordered),
        max=ordered[-1],
        p95=ordered[rank - 1],
    )


def data_statistics(dataset: Sequence[tuple[str, str]]) -> DataStats:
    """Whitespace-token length statistics of an (input, output) sample set."""
    if not dataset:
        raise InputError("data_statistics needs a non-empty dataset")
    inputs = [len(x.split()) for x, _ in dataset]
    outputs = [len(y.split()) for _, y in dataset]
    return DataStats(
        n=len(dataset),
        input_tokens=_length_stats(inputs),
        output_tokens=_length_stats(outputs),
        distinct_outputs=len({y for _, y in dataset}),
    )


# ---------------------------------------------------------------------------
# Constraints
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class UserConstraints:
    max_model_params: int | None = None
    required_techniques: frozenset[str] = frozenset()
    forbidden_techniques: frozenset[str] = frozenset()
    max_epochs: int | None = None
    preferences: str = ""

    def __post_init__(self):
        object.__setattr__(self, "required_techniques", frozenset(self.required_techniques))
        object.__setattr__(self, "forbidden_techniques", frozenset(self.forbidden_techniques))
        overlap = self.required_techniques & self.forbidden_techniques
        if overlap:
            raise InputError(f"techniques both required and forbidden: {sorted(overlap)}")

    @staticmethod
    def from_obj(obj: Mapping[str, Any]) -> "UserConstraints":
        return UserConstraints(
            max_model_params=obj.get("max_model_params"),
            required_techniques=frozenset(obj.get("required_techniques", ())),
            forbidden_techniques=frozenset(obj.get("forbidden_techniques", ())),
            max_epochs=obj.get("max_epochs"),
            preferences=obj.get("preferences", ""),
        )

    def to_obj(self) -> dict:
        return {
            "max_model_params": self.max_model_params,
            "required_techniques": sorted(self.required_techniques),
            "forbidden_techniques": sorted(self.forbidden_techniques),
            "max_epochs": self.max_epochs,
            "preferences": self.preferences,
        }


@dataclass(frozen=True)
class ConstraintViolation:
    kind: str
    subject: str
    message: str
    severity: str = "error"  # "error" | "info"

    def to_obj(self) -> dict:
        return vars(self)

    def __str__(self) -> str:
        return f"[{self.severity}] {self.kind} ({self.subject}): {self.message}"


@dataclass(frozen=True)
class Decision:
    """Outcome of one node debate: either a candidate selection or a
    narrowed parameter space. ``candidates`` records what was on offer."""

    node_id: str
    selected: tuple[str, ...] | None = None
    space: SearchSpace | None = None
    candidates: tuple[str, ...] = ()

    def to_obj(self) -> dict:
        return {
            "node_id": self.node_id,
            "selected": list(self.selected) if self.selected is not None else None,
            "space": space_to_obj(self.space) if self.space is not None else None,
            "candidates": list(self.candidates),
        }


def _epoch_upper_bound(dom) -> float | None:
    from .space import Categorical, Fixed, FloatRange, IntRange

    if isinstance(dom, (FloatRange, IntRange)):
        return float(dom.high)
    if isinstance(dom, Categorical):
        numeric = [c for c in dom.choices if isinstance(c, (int, float)) and not isinstance(c, bool)]
        return float(max(numeric)) if numeric else None
    if isinstance(dom, Fixed) and isinstance(dom.value, (int, float)) and not isinstance(dom.value, bool):
        return float(dom.value)
    return None


def _model_ids(space: SearchSpace) -> list[str]:
    from .space import Categorical, Fixed

    ids = []
    if space.model:
        ids.append(space.model)
    for name in _MODEL_PARAM_NAMES & set(space.names()):
        dom = space.domain(name)
        if isinstance(dom, Fixed) and isinstance(dom.value, str):
            ids.append(dom.value)
        elif isinstance(dom, Categorical):
            ids.extend(c for c in dom.choices if isinstance(c, str))
    return ids


def check_constraints(
    decision: Decision, constraints: UserConstraints, kb: KB | None = None
) -> list[ConstraintViolation]:
    """Violations of user constraints by one node decision; data, not errors.

    Models whose size the knowledge base does not know produce an
    informational entry rather than a hard violation.
    """
    out: list[ConstraintViolation] = []
    if decision.selected is not None:
        for node_id in decision.selected:
            if node_id in constraints.forbidden_techniques:
                out.append(
                    ConstraintViolation("forbidden_technique", node_id, "selected technique is forbidden")
                )
        offered_required = constraints.required_techniques & set(decision.candidates)
        for node_id in sorted(offered_required - set(decision.selected)):
            out.append(
                ConstraintViolation(
                    "required_technique", node_id, "required technique offered but not selected"
                )
            )
    if decision.space is not None:
        if constraints.max_epochs is not None:
            for name in _EPOCH_PARAM_NAMES & set(decision.space.names()):
                upper = _epoch_upper_bound(decision.space.domain(name))
                if upper is not None and upper > constraints.max_epochs:
                    out.append(
                        ConstraintViolation(
                            "max_epochs", name,
                            f"upper bound {upper:g} exceeds the cap {constraints.max_epochs}",
                        )
                    )
        if constraints.max_model_params is not None:
            for model_id in _model_ids(decision.space):
                size = kb.param_count_for(model_id) if kb is not None else None
                if size is None:
                    out.append(
                        ConstraintViolation(
                            "model_size", model_id, "parameter count unknown to the KB",
                            severity="info",
                        )
                    )
                elif size > constraints.max_model_params:
                    out.append(
                        ConstraintViolation(
                            "model_size", model_id,
                            f"{size} parameters exceed the cap {constraints.max_model_params}",
                        )
                    )
    return out


def hard_violations(violations: Sequence[ConstraintViolation]) -> list[ConstraintViolation]:
    return [v for v in violations if v.severity == "error"]


# ---------------------------------------------------------------------------
# Free-form text parsing
# ---------------------------------------------------------------------------

_NEXT_NODES_RE = re.compile(r"next_nodes\s*=\s*(\[[^\[\]]*\])")


def extract_json_objects(text: str) -> list[Any]:
    """All non-overlapping well-formed JSON objects in the text, in order."""
    decoder = json.JSONDecoder()
    objects = []
    pos = 0
    while True:
        start = text.find("{", pos)
        if start == -1:
            break
        try:
            obj, end = decoder.raw_decode(text[start:])
        except json.JSONDecodeError:
            pos = start + 1
            continue
        objects.append(obj)
        pos = start + end
    return objects


def parse_param_ranges(text: str) -> SearchSpace:
    """Pull the last well-formed JSON object out of free-form agent text and
    read it as a range document (a single "parameters" envelope is
    unwrapped)."""
    objects = [o for o in extract_json_objects(text) if isinstance(o, dict)]
    if not objects:
        raise ExtractionError("no JSON object found in agent text", raw=text)
    obj = objects[-1]
    if set(obj) == {"parameters"} and isinstance(obj["parameters"], dict):
        obj = obj["parameters"]
    return parse_space_obj(obj)


def extract_selection(text: str) -> list[str] | None:
    """Candidate ids from the last next_nodes=[...] line, falling back to the
    last JSON object carrying a "next_nodes" list."""
    matches = _NEXT_NODES_RE.findall(text)
    for raw in reversed(matches):
        try:
            value = ast.literal_eval(raw)
        except (ValueError, SyntaxError):
            continue
        if isinstance(value, list) and all(isinstance(v, str) for v in value):
            return value
    for obj in reversed(extract_json_objects(text)):
        if isinstance(obj, dict) and isinstance(obj.get("next_nodes"), list):
            value = obj["next_nodes"]
            if all(isinstance(v, str) for v in value):
                return value
    return None


# ---------------------------------------------------------------------------
# Debate
# ---------------------------------------------------------------------------

@dataclass
class PlanningContext:
    task: str
    stats: DataStats | None = None
    kb: KB | None = None
    kb_top_k: int = 3


@dataclass
class DebateConfig:
    rounds_max: int = 2
    proposal_agents: tuple[str, ...] = PROPOSAL_AGENTS
    critic_agents: tuple[str, ...] = CRITIC_AGENTS
    constraints: UserConstraints = field(default_factory=UserConstraints)
    template_dir: Path = TEMPLATE_DIR

    def __post_init__(self):
        if self.rounds_max < 1:
            raise InputError("rounds_max must be >= 1")
        if not self.proposal_agents or not self.critic_agents:
            raise InputError("need at least one proposal agent and one critic agent")


@dataclass
class Critique:
    text: str
    violations: list[ConstraintViolation] = field(default_factory=list)

    def to_obj(self) -> dict:
        return {"text": self.text, "violations": [v.to_obj() for v in self.violations]}


@dataclass
class DebateRound:
    proposals: dict[str, str]
    critiques: dict[str, Critique]
    aggregator: str
    decision: Decision | None
    violations: list[ConstraintViolation]

    def to_obj(self) -> dict:
        return {
            "proposals": self.proposals,
            "critiques": {k: v.to_obj() for k, v in self.critiques.items()},
            "aggregator": self.aggregator,
            "decision": self.decision.to_obj() if self.decision else None,
            "violations": [v.to_obj() for v in self.violations],
        }


@dataclass
class Transcript:
    node_id: str
    rounds: list[DebateRound] = field(default_factory=list)
    decision: Decision | None = None

    def to_obj(self) -> dict:
        return {
            "node_id": self.node_id,
            "rounds": [r.to_obj() for r in self.rounds],
            "decision": self.decision.to_obj() if self.decision else None,
        }

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_obj(), indent=indent)


def _load_template(cfg: DebateConfig, name: str) -> string.Template:
    return string.Template((cfg.template_dir / f"{name}.txt").read_text(encoding="utf-8"))


def _kb_context(ctx: PlanningContext) -> str:
    if ctx.kb is None or len(ctx.kb) == 0:
        return "no matches"
    matches = ctx.kb.query(ctx.task, top_k=ctx.kb_top_k)
    lines = [json.dumps(record.to_obj()) for record, score in matches if score >= 0.0]
    return "\n".join(lines) if lines else "no matches"


def _decision_block(node: acg.AcgNode, cfg: DebateConfig) -> str:
    if node.kind == acg.SELECTION:
        return "\n".join(
            [
                f"CANDIDATES: {json.dumps(list(node.candidates))}",
                f"REQUIRED: {json.dumps(sorted(cfg.constraints.required_techniques))}",
                f"FORBIDDEN: {json.dumps(sorted(cfg.constraints.forbidden_techniques))}",
                f"MAX_SELECT: {node.max_select}",
            ]
        )
    return f"DECLARED_RANGES: {json.dumps(space_to_obj(node.space))}"


def _orchestrator_ask(node: acg.AcgNode) -> str:
    if node.kind == acg.SELECTION:
        return (
            f"Choose up to {node.max_select} of the candidates {list(node.candidates)} "
            f"as the next phase at node '{node.id}'."
        )
    return f"Propose hyperparameter ranges for node '{node.id}', narrowing the declared ranges."


def _parse_decision(node: acg.AcgNode, text: str) -> Decision | None:
    if node.kind == acg.SELECTION:
        picked = extract_selection(text)
        if picked is None:
            return None
        unique = list(dict.fromkeys(picked))
        if not unique or len(unique) > node.max_select:
            return None
        if any(p not in node.candidates for p in unique):
            return None
        return Decision(node_id=node.id, selected=tuple(unique), candidates=node.candidates)
    try:
        space = parse_param_ranges(text)
    except Exception:
        return None
    return Decision(node_id=node.id, space=space, candidates=node.candidates)


def run_debate(
    node: acg.AcgNode,
    ctx: PlanningContext,
    cfg: DebateConfig,
    client: ModelClient,
) -> tuple[Decision, Transcript]:
    """Debate one node to a decision.

    Rounds run proposal -> critique -> aggregate; the loop ends early as soon
    as the aggregated decision parses and passes constraint checking, and
    fails with the transcript attached once the round budget is spent.
    """
    transcript = Transcript(node_id=node.id)
    kb_context = _kb_context(ctx)
    decision_block = _decision_block(node, cfg)
    ask = _orchestrator_ask(node)
    stats_text = json.dumps(ctx.stats.to_obj()) if ctx.stats else "not provided"
    last_proposals = "none yet"
    last_critiques = "none yet"
    chat_history = ""

    for _ in range(cfg.rounds_max):
        proposals: dict[str, str] = {}
        for agent in cfg.proposal_agents:
            prompt = _load_template(cfg, f"proposal_{agent}").safe_substitute(
                task_description=ctx.task,
                orchestrator_ask=ask,
                kb_context=kb_context,
                chat_history=chat_history or "start of conversation",
                last_round_proposals=last_proposals,
                last_round_critique=last_critiques,
                decision_block=decision_block,
            )
            proposals[agent] = client.complete(prompt)

        proposals_text = "\n\n".join(f"[{agent}]\n{text}" for agent, text in proposals.items())
        critiques: dict[str, Critique] = {}
        for agent in cfg.critic_agents:
            prompt = _load_template(cfg, f"critic_{agent}").safe_substitute(
                user_preferences=json.dumps(cfg.constraints.to_obj()),
                data_statistics=stats_text,
                proposals=proposals_text,
                decision_block=decision_block,
            )
            text = client.complete(prompt)
            found: list[ConstraintViolation] = []
            for proposer, proposal in proposals.items():
                parsed = _parse_decision(node, proposal)
                if parsed is not None:
                    for violation in check_constraints(parsed, cfg.constraints, ctx.kb):
                        found.append(
                            ConstraintViolation(
                                violation.kind,
                                f"{proposer}:{violation.subject}",
                                violation.message,
                                violation.severity,
                            )
                        )
            critiques[agent] = Critique(text=text, violations=found)

        critiques_text = "\n\n".join(f"[{agent}]\n{c.text}" for agent, c in critiques.items())
        aggregated = client.complete(
            _load_template(cfg, "aggregator").safe_substitute(
                proposals=proposals_text,
                critiques=critiques_text,
                decision_block=decision_block,
            )
        )

        decision = _parse_decision(node, aggregated)
        if decision is None:
            violations = [
                ConstraintViolation("unparseable", node.id, "aggregated decision could not be parsed")
            ]
        else:
            violations = check_constraints(decision, cfg.constraints, ctx.kb)
        transcript.rounds.append(
            DebateRound(
                proposals=proposals,
                critiques=critiques,
                aggregator=aggregated,
                decision=decision,
                violations=violations,
            )
        )
        if decision is not None and not hard_violations(violations):
            transcript.decision = decision
            return decision, transcript

        last_proposals = proposals_text
        last_critiques = critiques_text + "\n" + "\n".join(str(v) for v in violations)
        chat_history += f"\nround {len(transcript.rounds)}: unresolved ({len(violations)} violations)"

    remaining = transcript.rounds[-1].violations if transcript.rounds else []
    raise PlanningError(
        f"debate at node {node.id!r} failed after {cfg.rounds_max} rounds: "
        + ("; ".join(str(v) for v in remaining) or "no decision"),
        transcript=transcript,
    )


# ---------------------------------------------------------------------------
# Plan-level wiring
# ---------------------------------------------------------------------------

class _DebateDecider:
    def __init__(self, ctx: PlanningContext, cfg: DebateConfig, client: ModelClient):
        self.ctx = ctx
        self.cfg = cfg
        self.client = client
        self.transcripts: list[Transcript] = []

    def decide_selection(self, node, candidates):
        decision, transcript = run_debate(node, self.ctx, self.cfg, self.client)
        self.transcripts.append(transcript)
        return list(decision.selected)

    def decide_space(self, node):
        decision, transcript = run_debate(node, self.ctx, self.cfg, self.client)
        self.transcripts.append(transcript)
        return decision.space


def plan_with_debate(
    graph: acg.AcgGraph,
    ctx: PlanningContext,
    cfg: DebateConfig,
    client: ModelClient,
) -> tuple[acg.Plan, list[Transcript]]:
    """Traverse the graph with debates deciding every node; one transcript
    per visited node, in visit order."""
    decider = _DebateDecider(ctx, cfg, client)
    try:
        plan = acg.traverse(graph, decider)
    except PlanningError as exc:
        if exc.transcript is not None:
            decider.transcripts.append(exc.transcript)
        exc.transcripts = decider.transcripts
        raise
    missing = cfg.constraints.required_techniques - set(plan.selected_nodes())
    if missing:
        raise PlanningError(
            f"plan omits required techniques {sorted(missing)}",
            transcript=decider.transcripts[-1] if decider.transcripts else None,
        )
    return plan, decider.transcripts
