"""Best-practices knowledge base: structured training-card records, lexical
top-k retrieval, and the dispersion index over recommended configurations.

Retrieval is term-frequency cosine over lowercased alphanumeric tokens,
deterministic and dependency-free; an embedding backend can be slotted
behind the same query interface later.
"""

from __future__ import annotations

import json
import logging
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .errors import InputError
from .space import Categorical, Fixed, FloatRange, IntRange, SearchSpace

log = logging.getLogger(__name__)

_TOKEN_RE = re.compile(r"[a-z0-9]+")

_KNOWN_FIELDS = (
    "base_model",
    "training_technique",
    "training_datasets",
    "dataset_structure",
    "instruct",
    "task",
    "evaluation",
    "quantization",
    "peft",
    "lr",
    "epochs",
    "batch_size",
    "gradient_accumulation_steps",
    "optimizer",
    "scheduler",
    "weight_decay",
    "mixed_precision",
    "quantization_method",
    "lora_r",
    "lora_alpha",
    "lora_dropout",
    "target_modules",
    "dpo_beta",
    "training_hardware",
    "library",
    "domain",
    "source_url",
    "param_count",
)

_NUMERIC_FIELDS = (
    "lr",
    "epochs",
    "batch_size",
    "gradient_accumulation_steps",
    "weight_decay",
    "lora_r",
    "lora_alpha",
    "lora_dropout",
    "dpo_beta",
    "param_count",
)


@dataclass
class KbRecord:
    """One extracted training card. Unknown fields are preserved in
    ``extras`` and round-trip through serialization."""

    base_model: str
    training_technique: str
    training_datasets: dict[str, Any] = field(default_factory=dict)
    dataset_structure: str | None = None
    instruct: int | None = None
    task: list = field(default_factory=list)
    evaluation: dict = field(default_factory=dict)
    quantization: int | None = None
    peft: int | None = None
    lr: float | None = None
    epochs: float | None = None
    batch_size: float | None = None
    gradient_accumulation_steps: float | None = None
    optimizer: str | None = None
    scheduler: str | None = None
    weight_decay: float | None = None
    mixed_precision: str | None = None
    quantization_method: str | None = None
    lora_r: float | None = None
    lora_alpha: float | None = None
    lora_dropout: float | None = None
    target_modules: list = field(default_factory=list)
    dpo_beta: float | None = None
    training_hardware: str | None = None
    library: list = field(default_factory=list)
    domain: str = ""
    source_url: str | None = None
    param_count: int | None = None
    extras: dict[str, Any] = field(default_factory=dict)

    @staticmethod
    def from_obj(obj: Mapping[str, Any]) -> "KbRecord":
        if not isinstance(obj, Mapping):
            raise InputError("record must be a JSON object")
        base_model = obj.get("base_model")
        technique = obj.get("training_technique")
        if not isinstance(base_model, str) or not base_model:
            raise InputError("base_model must be a non-empty string")
        if not isinstance(technique, str) or not technique:
            raise InputError("training_technique must be a non-empty string")
        known = {k: obj[k] for k in _KNOWN_FIELDS if k in obj}
        for name in _NUMERIC_FIELDS:
            value = known.get(name)
            if value is not None:
                if isinstance(value, bool) or not isinstance(value, (int, float)):
                    raise InputError(f"{name} must be numeric, got {value!r}")
                if not math.isfinite(value):
                    raise InputError(f"{name} must be finite, got {value!r}")
        extras = {k: v for k, v in obj.items() if k not in _KNOWN_FIELDS}
        defaults = {
            "training_datasets": {}, "task": [], "evaluation": {},
            "target_modules": [], "library": [], "domain": "",
        }
        kwargs = {**defaults, **known}
        if kwargs.get("training_datasets") is None:
            kwargs["training_datasets"] = {}
        for key in ("task", "target_modules", "library"):
            if kwargs.get(key) is None:
                kwargs[key] = []
        if kwargs.get("domain") is None:
            kwargs["domain"] = ""
        return KbRecord(extras=extras, **kwargs)

    def to_obj(self) -> dict[str, Any]:
        out = {k: getattr(self, k) for k in _KNOWN_FIELDS}
        out.update(self.extras)
        return out

    def index_text(self) -> str:
        pieces = [self.domain, self.training_technique, self.base_model]
        pieces.extend(str(t) for t in self.task)
        pieces.extend(self.training_datasets)
        return " ".join(p for p in pieces if p)


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def _cosine(a: Counter, b: Counter) -> float:
    if not a or not b:
        return 0.0
    dot = sum(count * b[token] for token, count in a.items())
    if dot == 0:
        return 0.0
    norm = math.sqrt(sum(c * c for c in a.values())) * math.sqrt(sum(c * c for c in b.values()))
    return dot / norm


class KB:
    """Immutable after ingest; queries are pure."""

    def __init__(self, records: Sequence[KbRecord] = ()):
        self.records = list(records)
        self._doc_vectors = [Counter(tokenize(r.index_text())) for r in self.records]
        self.skipped: list[tuple[int, str]] = []

    def __len__(self) -> int:
        return len(self.records)

    def query(self, descriptor: str, top_k: int = 5) -> list[tuple[KbRecord, float]]:
        """Top-k records by term-frequency cosine; ties keep ingestion order."""
        if top_k < 1:
            raise InputError(f"top_k must be >= 1, got {top_k}")
        qvec = Counter(tokenize(descriptor))
        scored = [(r, _cosine(qvec, dv)) for r, dv in zip(self.records, self._doc_vectors)]
        scored.sort(key=lambda pair: -pair[1])  # stable: ties keep ingestion order
        return scored[:top_k]

    def param_count_for(self, model_id: str) -> int | None:
        for record in self.records:
            if record.base_model == model_id and record.param_count is not None:
                return int(record.param_count)
        return None


def ingest(path: str | Path) -> tuple[KB, int]:
    """Load a JSON-lines record file; invalid lines are skipped with
    line-numbered warnings. Returns the KB and the accepted count."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    records: list[KbRecord] = []
    skipped: list[tuple[int, str]] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            records.append(KbRecord.from_obj(json.loads(line)))
        except (json.JSONDecodeError, InputError) as exc:
            skipped.append((lineno, str(exc)))
            log.warning("%s:%d skipped: %s", path, lineno, exc)
    kb = KB(records)
    kb.skipped = skipped
    return kb, len(records)


# ---------------------------------------------------------------------------
# Configuration summaries and the dispersion index
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConfigSummary:
    """Categorical footprint plus numeric intervals of one configuration."""

    categorical_tokens: frozenset[str]
    numeric_ranges: tuple[tuple[str, tuple[float, float]], ...]

    def __post_init__(self):
        for name, (low, high) in self.numeric_ranges:
            if low > high:
                raise InputError(f"range for {name!r} has low > high")

    @property
    def ranges(self) -> dict[str, tuple[float, float]]:
        return dict(self.numeric_ranges)

    @staticmethod
    def make(tokens: Iterable[str] = (), ranges: Mapping[str, tuple[float, float]] = ()):
        ranges = dict(ranges)
        return ConfigSummary(
            frozenset(tokens),
            tuple(sorted((k, (float(v[0]), float(v[1]))) for k, v in ranges.items())),
        )


def _fmt_token_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def summarize_space(s: SearchSpace) -> ConfigSummary:
    """Declared categorical choices become one param=value token each;
    numeric ranges keep their intervals; pinned values become tokens."""
    tokens: set[str] = set()
    ranges: dict[str, tuple[float, float]] = {}
    for name, dom in s.params.items():
        if isinstance(dom, (FloatRange, IntRange)):
            ranges[name] = (float(dom.low), float(dom.high))
        elif isinstance(dom, Categorical):
            tokens.update(f"{name}={_fmt_token_value(c)}" for c in dom.choices)
        else:
            assert isinstance(dom, Fixed)
            tokens.add(f"{name}={_fmt_token_value(dom.value)}")
    return ConfigSummary.make(tokens, ranges)


def config_similarity(a: ConfigSummary, b: ConfigSummary, alpha: float = 0.5) -> float:
    """alpha * Jaccard(categorical tokens) + (1 - alpha) * mean interval IoU.

    Token sets both empty count as Jaccard 1; numeric params present on one
    side only contribute IoU 0; no numeric params anywhere counts as 1.
    """
    if not (0.0 <= alpha <= 1.0):
        raise InputError(f"alpha must lie in [0, 1], got {alpha}")
    ta, tb = a.categorical_tokens, b.categorical_tokens
    if not ta and not tb:
        jaccard = 1.0
    else:
        jaccard = len(ta & tb) / len(ta | tb)

    ra, rb = a.ranges, b.ranges
    shared_names = set(ra) | set(rb)
    if not shared_names:
        mean_iou = 1.0
    else:
        total = 0.0
        for name in shared_names:
            if name in ra and name in rb:
                (lo1, hi1), (lo2, hi2) = ra[name], rb[name]
                inter = max(0.0, min(hi1, hi2) - max(lo1, lo2))
                union = max(hi1, hi2) - min(lo1, lo2)
                if union <= 0.0:
                    # both degenerate at the same point iff union is 0
                    total += 1.0
                else:
                    total += inter / union
        mean_iou = total / len(shared_names)
    return alpha * jaccard + (1.0 - alpha) * mean_iou


def dispersion_index(configs: Sequence[ConfigSummary], alpha: float = 0.5) -> float:
    """Average pairwise dissimilarity 1 - Sim over all config pairs;
    defined as 0 for fewer than two configs."""
    n = len(configs)
    if n <= 1:
        return 0.0
    total = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            total += 1.0 - config_similarity(configs[i], configs[j], alpha)
    return (2.0 / (n * (n - 1))) * total
