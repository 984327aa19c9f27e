"""Adaptation configuration graph: selection, technique, and parameter nodes
wired by selects/requires edges, traversed into executable plans.

Selection nodes ask a decider to pick an ordered subset of candidates;
technique nodes are concrete strategies that activate their required
parameter nodes and route onward; parameter nodes declare a search space the
decider may narrow.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Mapping, Protocol

from .errors import ConstraintError, GraphError, ProtocolError
from .space import (
    Categorical,
    FloatRange,
    IntRange,
    SearchSpace,
    narrows,
    parse_space_obj,
    space_to_obj,
)

SELECTION = "selection"
TECHNIQUE = "technique"
PARAMETER = "parameter"

SELECTS = "selects"
REQUIRES = "requires"


@dataclass(frozen=True)
class AcgNode:
    id: str
    kind: str
    candidates: tuple[str, ...] = ()
    max_select: int = 1
    space: SearchSpace | None = None


@dataclass(frozen=True)
class AcgEdge:
    src: str
    dst: str
    kind: str


@dataclass(frozen=True)
class GraphViolation:
    subject: str
    reason: str

    def __str__(self) -> str:
        return f"{self.subject}: {self.reason}"


@dataclass
class AcgGraph:
    nodes: dict[str, AcgNode]
    edges: list[AcgEdge]
    root: str
    stage_order: tuple[str, ...] = ()

    def node(self, node_id: str) -> AcgNode:
        return self.nodes[node_id]

    def out_edges(self, node_id: str, kind: str | None = None) -> list[AcgEdge]:
        return [e for e in self.edges if e.src == node_id and (kind is None or e.kind == kind)]

    def in_edges(self, node_id: str, kind: str | None = None) -> list[AcgEdge]:
        return [e for e in self.edges if e.dst == node_id and (kind is None or e.kind == kind)]


@dataclass
class PlanStage:
    """One pipeline stage: the strategy path walked plus the narrowed leaf
    search spaces keyed by parameter-node id."""

    path: list[str]
    spaces: dict[str, SearchSpace]


@dataclass
class Plan:
    stages: list[PlanStage]

    def selected_nodes(self) -> list[str]:
        out: list[str] = []
        for stage in self.stages:
            out.extend(stage.path)
        return out

    def to_obj(self) -> dict:
        return {
            "stages": [
                {
                    "path": list(stage.path),
                    "spaces": {pid: space_to_obj(sp) for pid, sp in stage.spaces.items()},
                }
                for stage in self.stages
            ]
        }

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_obj(), indent=indent)


# ---------------------------------------------------------------------------
# Default graph
# ---------------------------------------------------------------------------

def default_graph() -> AcgGraph:
    """The stock adaptation graph: a root choice between supervised
    fine-tuning, retrieval augmentation, and preference alignment, with the
    fine-tuning paths routing through a parameter-efficient-tuning choice.
    """
    nodes = {}
    edges: list[AcgEdge] = []

    def add(node: AcgNode):
        nodes[node.id] = node

    def wire_selection(node_id: str):
        for cand in nodes[node_id].candidates:
            edges.append(AcgEdge(node_id, cand, SELECTS))

    def require(src: str, dst: str):
        edges.append(AcgEdge(src, dst, REQUIRES))

    add(AcgNode("adapt", SELECTION, candidates=("sft", "rag", "dpo"), max_select=2))
    add(AcgNode("sft", SELECTION, candidates=("peft",), max_select=1))
    add(AcgNode("dpo", SELECTION, candidates=("peft",), max_select=1))
    add(AcgNode("rag", TECHNIQUE))
    add(AcgNode("peft", SELECTION, candidates=("lora", "prefix_tuning"), max_select=1))
    add(AcgNode("lora", TECHNIQUE))
    add(AcgNode("prefix_tuning", TECHNIQUE))

    add(
        AcgNode(
            "rag_config",
            PARAMETER,
            space=SearchSpace(
                {
                    "embedding_model": Categorical(
                        ["all-MiniLM-L6-v2", "bge-small-en-v1.5", "gte-base"]
                    ),
                    "top_k": IntRange(1, 20),
                    "base_model": Categorical(
                        ["Llama-3.2-3B-Instruct", "Qwen2.5-7B-Instruct", "Phi-4-mini-Instruct"]
                    ),
                }
            ),
        )
    )
    add(
        AcgNode(
            "sft_train",
            PARAMETER,
            space=SearchSpace(
                {
                    "learning_rate": FloatRange(1e-5, 3e-4, log_scale=True),
                    "num_train_epochs": IntRange(2, 5),
                    "per_device_train_batch_size": Categorical([4, 8, 12]),
                    "gradient_accumulation_steps": Categorical([4, 8, 12]),
                    "weight_decay": FloatRange(0.0, 0.05),
                    "optimizer": Categorical(["adamw_8bit", "adamw_torch_fused", "adamw_hf"]),
                    "scheduler": Categorical(["linear", "cosine", "constant"]),
                    "mixed_precision": Categorical(["bf16", "fp16"]),
                }
            ),
        )
    )
    add(
        AcgNode(
            "dpo_train",
            PARAMETER,
            space=SearchSpace(
                {
                    "learning_rate": FloatRange(1e-7, 5e-5, log_scale=True),
                    "num_train_epochs": IntRange(1, 3),
                    "dpo_beta": FloatRange(0.05, 0.5),
                    "per_device_train_batch_size": Categorical([2, 4, 8]),
                    "gradient_accumulation_steps": Categorical([4, 8, 16]),
                }
            ),
        )
    )
    add(
        AcgNode(
            "lora_params",
            PARAMETER,
            space=SearchSpace(
                {
                    "lora_r": Categorical([8, 16, 32]),
                    "lora_alpha": Categorical([16, 32, 64]),
                    "lora_dropout": FloatRange(0.0, 0.1),
                    "quantization": Categorical([0, 1]),
                }
            ),
        )
    )
    add(
        AcgNode(
            "prefix_params",
            PARAMETER,
            space=SearchSpace(
                {
                    "prefix_length": IntRange(8, 64),
                    "quantization": Categorical([0, 1]),
                }
            ),
        )
    )

    wire_selection("adapt")
    require("rag", "rag_config")
    require("sft", "sft_train")
    wire_selection("sft")
    require("dpo", "dpo_train")
    wire_selection("dpo")
    wire_selection("peft")
    require("lora", "lora_params")
    require("prefix_tuning", "prefix_params")

    return AcgGraph(nodes=nodes, edges=edges, root="adapt", stage_order=("sft", "dpo"))


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def _has_cycle(graph: AcgGraph) -> list[str] | None:
    WHITE, GREY, BLACK = 0, 1, 2
    color = {nid: WHITE for nid in graph.nodes}
    adjacency = {nid: [] for nid in graph.nodes}
    for e in graph.edges:
        if e.src in adjacency and e.dst in graph.nodes:
            adjacency[e.src].append(e.dst)

    cycle: list[str] = []

    def visit(nid: str) -> bool:
        color[nid] = GREY
        for nxt in adjacency[nid]:
            if color[nxt] == GREY:
                cycle.append(nxt)
                return True
            if color[nxt] == WHITE and visit(nxt):
                return True
        color[nid] = BLACK
        return False

    for nid in graph.nodes:
        if color[nid] == WHITE and visit(nid):
            return cycle
    return None


def validate_graph(graph: AcgGraph) -> list[GraphViolation]:
    """Structural checks; violations are data, nothing raises."""
    out: list[GraphViolation] = []
    if graph.root not in graph.nodes:
        out.append(GraphViolation(graph.root, "root node missing"))
    for node in graph.nodes.values():
        if node.kind not in (SELECTION, TECHNIQUE, PARAMETER):
            out.append(GraphViolation(node.id, f"unknown node kind {node.kind!r}"))
        if node.kind == SELECTION:
            if not node.candidates:
                out.append(GraphViolation(node.id, "selection node has no candidates"))
            if node.max_select < 1 or node.max_select > max(len(node.candidates), 1):
                out.append(GraphViolation(node.id, "max_select outside [1, candidate count]"))
            for cand in node.candidates:
                if cand not in graph.nodes:
                    out.append(GraphViolation(node.id, f"candidate {cand!r} missing from graph"))
        if node.kind == PARAMETER and node.space is None:
            out.append(GraphViolation(node.id, "parameter node without a declared space"))
    for e in graph.edges:
        for endpoint in (e.src, e.dst):
            if endpoint not in graph.nodes:
                out.append(GraphViolation(f"{e.src}->{e.dst}", f"dangling endpoint {endpoint!r}"))
        if e.src == e.dst:
            out.append(GraphViolation(e.src, "self-loop edge"))
        if e.kind == SELECTS and e.src in graph.nodes:
            if graph.nodes[e.src].kind == PARAMETER:
                out.append(GraphViolation(e.src, "parameter node with outgoing selects edge"))
        if e.kind == REQUIRES and e.dst in graph.nodes:
            if graph.nodes[e.dst].kind != PARAMETER:
                out.append(GraphViolation(f"{e.src}->{e.dst}", "requires target is not a parameter node"))
    # a required parameter block belongs to exactly one owner
    for node in graph.nodes.values():
        if node.kind == PARAMETER:
            owners = {e.src for e in graph.in_edges(node.id)}
            if len(owners) > 1:
                out.append(GraphViolation(node.id, f"parameter node required by several owners {sorted(owners)}"))
    cycle = _has_cycle(graph)
    if cycle:
        out.append(GraphViolation(cycle[0], "graph contains a cycle"))
    return out


# ---------------------------------------------------------------------------
# Traversal
# ---------------------------------------------------------------------------

class Decider(Protocol):
    def decide_selection(self, node: AcgNode, candidates: tuple[str, ...]) -> list[str]: ...

    def decide_space(self, node: AcgNode) -> SearchSpace: ...


class FirstCandidateDecider:
    """Picks the first candidate everywhere and keeps declared spaces."""

    def decide_selection(self, node, candidates):
        return [candidates[0]]

    def decide_space(self, node):
        return node.space


def _checked_selection(node: AcgNode, decider: Decider) -> list[str]:
    chosen = list(decider.decide_selection(node, node.candidates))
    if not chosen:
        raise ProtocolError(f"decider returned an empty selection at {node.id!r}")
    if len(chosen) > node.max_select:
        raise ProtocolError(
            f"decider picked {len(chosen)} candidates at {node.id!r}, max_select is {node.max_select}"
        )
    for cand in chosen:
        if cand not in node.candidates:
            raise ProtocolError(f"decider picked non-candidate {cand!r} at {node.id!r}")
    if len(set(chosen)) != len(chosen):
        raise ProtocolError(f"decider picked duplicate candidates at {node.id!r}")
    return chosen


def _checked_space(node: AcgNode, decider: Decider) -> SearchSpace:
    decided = decider.decide_space(node)
    if not isinstance(decided, SearchSpace):
        raise ProtocolError(f"decider returned no search space at {node.id!r}")
    if not narrows(decided, node.space):
        for name in node.space.names():
            if name not in decided.names():
                raise ConstraintError(f"{node.id}: decided space drops parameter {name!r}")
        from .space import domain_contains

        for name in node.space.names():
            if not domain_contains(node.space.domain(name), decided.domain(name)):
                raise ConstraintError(
                    f"{node.id}: decided domain for {name!r} is not a narrowing of the declared one"
                )
        raise ConstraintError(f"{node.id}: decided space adds undeclared parameters")
    return decided


def _apply_stage_order(chosen: list[str], stage_order: tuple[str, ...]) -> list[str]:
    """Reorder only the ranked ids among themselves, keeping their slots."""
    ranked_positions = [i for i, c in enumerate(chosen) if c in stage_order]
    ranked_sorted = sorted((chosen[i] for i in ranked_positions), key=stage_order.index)
    out = list(chosen)
    for pos, cand in zip(ranked_positions, ranked_sorted):
        out[pos] = cand
    return out


def traverse(graph: AcgGraph, decider: Decider) -> Plan:
    """Walk the graph depth-first in decided order and assemble a plan.

    Each candidate chosen at the root opens one stage; entering any selected
    node first activates its required parameter nodes, then recurses into its
    own selection (or, for techniques, its onward selects edges).
    """
    violations = validate_graph(graph)
    if violations:
        raise GraphError("invalid graph: " + "; ".join(str(v) for v in violations))
    root = graph.node(graph.root)
    if root.kind != SELECTION:
        raise GraphError(f"root {graph.root!r} must be a selection node")

    chosen_root = _apply_stage_order(_checked_selection(root, decider), graph.stage_order)
    stages: list[PlanStage] = []
    for strategy in chosen_root:
        path: list[str] = []
        spaces: dict[str, SearchSpace] = {}
        visited: set[str] = set()

        def visit(node_id: str):
            if node_id in visited:
                return
            visited.add(node_id)
            node = graph.node(node_id)
            if node.kind == PARAMETER:
                spaces[node_id] = _checked_space(node, decider)
                return
            path.append(node_id)
            for e in graph.out_edges(node_id, REQUIRES):
                target = graph.node(e.dst)
                spaces[e.dst] = _checked_space(target, decider)
            if node.kind == SELECTION:
                for cand in _checked_selection(node, decider):
                    visit(cand)
            else:
                for e in graph.out_edges(node_id, SELECTS):
                    visit(e.dst)

        visit(strategy)
        stages.append(PlanStage(path=path, spaces=spaces))
    plan = Plan(stages=stages)
    problems = validate_plan(graph, plan)
    if problems:
        raise GraphError("traversal produced an invalid plan: " + "; ".join(str(p) for p in problems))
    return plan


def validate_plan(graph: AcgGraph, plan: Plan) -> list[GraphViolation]:
    """Every requires obligation of every selected node must be satisfied by
    an included, properly narrowed parameter space."""
    out: list[GraphViolation] = []
    for stage in plan.stages:
        for node_id in stage.path:
            if node_id not in graph.nodes:
                out.append(GraphViolation(node_id, "plan references a node missing from the graph"))
                continue
            for e in graph.out_edges(node_id, REQUIRES):
                if e.dst not in stage.spaces:
                    out.append(GraphViolation(node_id, f"requires obligation {e.dst!r} unsatisfied"))
        for pid, decided in stage.spaces.items():
            declared = graph.nodes.get(pid)
            if declared is None or declared.space is None:
                out.append(GraphViolation(pid, "plan narrows an unknown parameter node"))
            elif not narrows(decided, declared.space):
                out.append(GraphViolation(pid, "plan space is not a narrowing of the declared space"))
    return out


# ---------------------------------------------------------------------------
# JSON round trip
# ---------------------------------------------------------------------------

def graph_to_obj(graph: AcgGraph) -> dict:
    nodes = []
    for node in graph.nodes.values():
        obj: dict[str, Any] = {"id": node.id, "kind": node.kind}
        if node.kind == SELECTION:
            obj["candidates"] = list(node.candidates)
            obj["max_select"] = node.max_select
        if node.kind == PARAMETER:
            obj["space"] = space_to_obj(node.space)
        nodes.append(obj)
    return {
        "root": graph.root,
        "stage_order": list(graph.stage_order),
        "nodes": nodes,
        "edges": [{"from": e.src, "to": e.dst, "kind": e.kind} for e in graph.edges],
    }


def graph_from_obj(obj: Mapping[str, Any]) -> AcgGraph:
    nodes: dict[str, AcgNode] = {}
    for raw in obj.get("nodes", []):
        kind = raw.get("kind")
        node = AcgNode(
            id=raw["id"],
            kind=kind,
            candidates=tuple(raw.get("candidates", ())),
            max_select=int(raw.get("max_select", 1)),
            space=parse_space_obj(raw["space"]) if raw.get("space") is not None else None,
        )
        if node.id in nodes:
            raise GraphError(f"duplicate node id {node.id!r}")
        nodes[node.id] = node
    edges = [AcgEdge(e["from"], e["to"], e["kind"]) for e in obj.get("edges", [])]
    return AcgGraph(
        nodes=nodes,
        edges=edges,
        root=obj["root"],
        stage_order=tuple(obj.get("stage_order", ())),
    )


def graph_to_json(graph: AcgGraph, indent: int | None = 2) -> str:
    return json.dumps(graph_to_obj(graph), indent=indent)


def graph_from_json(text: str) -> AcgGraph:
    return graph_from_obj(json.loads(text))
