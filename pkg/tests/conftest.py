"""Shared fixtures: the scripted five-node debate replay used by the planner
tests and the acceptance suite."""

import json

import pytest

from adaptkit import acg
from adaptkit.space import Categorical, FloatRange, SearchSpace, space_to_obj


def narrowed_sft_train():
    graph = acg.default_graph()
    params = graph.node("sft_train").space.params
    params["learning_rate"] = FloatRange(1e-5, 2e-4, log_scale=True)
    params["mixed_precision"] = Categorical(["bf16"])
    return SearchSpace(params)


def narrowed_lora_params():
    graph = acg.default_graph()
    params = graph.node("lora_params").space.params
    params["lora_r"] = Categorical([8, 16])
    params["lora_alpha"] = Categorical([16, 32])
    params["lora_dropout"] = FloatRange(0.05, 0.1)
    return SearchSpace(params)


def _debate_replies(proposal_lines, aggregator_line):
    """One debate round: three proposals, two critiques, one aggregation."""
    return [
        proposal_lines[0],
        proposal_lines[1],
        proposal_lines[2],
        "Reviewed against the stated requirements: no violations found; the "
        "first proposal is the most aligned.",
        "Reviewed against the dataset statistics: no mismatch found; the "
        "first proposal is the most aligned.",
        aggregator_line,
    ]


def scripted_medqa_replies():
    """Replay of a medical-QA planning flow over the default graph: pick
    supervised fine-tuning at the root, route through the adapter choice to
    low-rank adaptation, and narrow both parameter blocks.

    Call order matches the traversal: adapt, sft_train, sft, peft,
    lora_params; six client calls per node.
    """
    sft_space_json = json.dumps(space_to_obj(narrowed_sft_train()))
    lora_space_json = json.dumps(space_to_obj(narrowed_lora_params()))
    replies = []
    replies += _debate_replies(
        [
            "Precedent cards for medical QA overwhelmingly use supervised "
            "fine-tuning; retrieval adds infrastructure this task does not "
            "need and preference alignment lacks evidence here. "
            'Select "sft".',
            "Supervised fine-tuning adapts the weights directly on the "
            "target domain and is the standard first stage.\n"
            "next_nodes=['sft']",
            "Retrieved guides agree on supervised fine-tuning for this "
            "domain.",
        ],
        "All reviews agree and no constraint blocks it.\nnext_nodes=['sft']",
    )
    replies += _debate_replies(
        [
            "Recommended training ranges based on precedent cards:\n" + sft_space_json,
            "A bounded learning-rate interval with a capped epoch range "
            "avoids catastrophic forgetting.\n" + sft_space_json,
            "Retrieved configurations fall inside these ranges.",
        ],
        "Adopting the reviewed ranges.\n" + sft_space_json,
    )
    replies += _debate_replies(
        [
            "Parameter-efficient tuning is the only candidate and fits the "
            'compute budget. Select "peft".',
            "Adapter-based tuning preserves the base weights at a fraction "
            "of the memory.\nnext_nodes=['peft']",
            "Guides recommend adapter methods for mid-size models.",
        ],
        "Proceeding with the adapter route.\nnext_nodes=['peft']",
    )
    replies += _debate_replies(
        [
            "Low-rank adaptation has far broader library support and "
            'precedent than prefix tuning here. Select "lora".',
            "Low-rank updates adapt the weight matrices directly, which "
            "generalizes better than prepended prefixes.\n"
            "next_nodes=['lora']",
            "No retrieved evidence supports prefix tuning for this task.",
        ],
        "Both proposals agree.\nnext_nodes=['lora']",
    )
    replies += _debate_replies(
        [
            "Conservative adapter settings for a ~10k-sample dataset:\n" + lora_space_json,
            "Moderate rank with matched scaling and light dropout "
            "regularizes well at this scale.\n" + lora_space_json,
            "Matches the retrieved adapter configurations.",
        ],
        "Final adapter ranges below.\n" + lora_space_json,
    )
    return replies


@pytest.fixture
def medqa_replies():
    return scripted_medqa_replies()
