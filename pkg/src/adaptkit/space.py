"""Mixed parameter domains, their unit-box relaxation, and the range-JSON format.

A search space is an ordered mapping of parameter names to domains (float
ranges, integer ranges, categorical choices, or pinned values). Non-fixed
parameters embed into the closed unit box so gradient-based acquisition can
run over a continuous surface; ``discretize`` maps optimizer output back to
concrete assignments.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Any, Iterator, Mapping, Sequence

import numpy as np

from .errors import DomainError, SpaceParseError, SpaceValidationError

# Reserved key in range-JSON documents: a bare-string model identifier is
# metadata about the pipeline, not a tunable parameter.
MODEL_KEY = "model_name_or_path"

Scalar = Any  # bool | int | float | str


@dataclass(frozen=True)
class FloatRange:
    low: float
    high: float
    log_scale: bool = False

    def __post_init__(self):
        if not (math.isfinite(self.low) and math.isfinite(self.high)):
            raise DomainError(f"non-finite float range [{self.low}, {self.high}]")
        if self.low >= self.high:
            raise DomainError(f"low >= high in float range [{self.low}, {self.high}]")
        if self.log_scale and self.low <= 0:
            raise DomainError(f"log-scale range requires low > 0, got {self.low}")


@dataclass(frozen=True)
class IntRange:
    low: int
    high: int

    def __post_init__(self):
        if self.low >= self.high:
            raise DomainError(f"low >= high in int range [{self.low}, {self.high}]")


@dataclass(frozen=True)
class Categorical:
    choices: tuple

    def __init__(self, choices: Sequence):
        choices = tuple(choices)
        if not choices:
            raise DomainError("categorical domain needs at least one choice")
        seen = []
        for c in choices:
            if any(c == s and type(c) is type(s) for s in seen):
                raise DomainError(f"duplicate categorical choice {c!r}")
            seen.append(c)
        object.__setattr__(self, "choices", choices)


@dataclass(frozen=True)
class Fixed:
    value: Scalar


ParamDomain = FloatRange | IntRange | Categorical | Fixed


@dataclass(frozen=True)
class Violation:
    """One reason an assignment fails validation; violations are data."""

    param: str
    reason: str

    def __str__(self) -> str:
        return f"{self.param}: {self.reason}"


class SearchSpace:
    """Ordered, immutable map of parameter names to domains.

    ``model`` carries the reserved model identifier lifted out of range-JSON
    documents; it is not part of the tunable space.
    """

    def __init__(self, params: Mapping[str, ParamDomain], model: str | None = None):
        if not params:
            raise DomainError("search space has no parameters")
        self._params = dict(params)
        self.model = model

    @property
    def params(self) -> dict[str, ParamDomain]:
        return dict(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def domain(self, name: str) -> ParamDomain:
        return self._params[name]

    def free_names(self) -> list[str]:
        """Names of non-fixed parameters, in declaration order."""
        return [n for n, d in self._params.items() if not isinstance(d, Fixed)]

    @property
    def dim(self) -> int:
        """Relaxation dimension: one coordinate per non-fixed parameter."""
        return len(self.free_names())

    def __len__(self) -> int:
        return len(self._params)

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, SearchSpace)
            and list(self._params.items()) == list(other._params.items())
            and self.model == other.model
        )

    def __repr__(self) -> str:
        return f"SearchSpace({self._params!r}, model={self.model!r})"


class ParamAssignment:
    """A concrete point of a search space: name -> scalar value."""

    def __init__(self, values: Mapping[str, Scalar]):
        self._values = dict(values)

    @property
    def values(self) -> dict[str, Scalar]:
        return dict(self._values)

    def __getitem__(self, name: str) -> Scalar:
        return self._values[name]

    def __contains__(self, name: str) -> bool:
        return name in self._values

    def __eq__(self, other) -> bool:
        return isinstance(other, ParamAssignment) and self._values == other._values

    def __hash__(self) -> int:
        return hash(frozenset(self._values.items()))

    def __repr__(self) -> str:
        return f"ParamAssignment({self._values!r})"


# A relaxed point is a plain float vector in [0, 1]^d.
RelaxedPoint = np.ndarray


# ---------------------------------------------------------------------------
# Range-JSON parsing and serialization
# ---------------------------------------------------------------------------

_DOMAIN_KEYS = {
    "float": {"type", "low", "high", "log_scale"},
    "int": {"type", "low", "high"},
    "categorical": {"type", "choices"},
}


def _parse_entry(name: str, raw: Any) -> ParamDomain:
    if isinstance(raw, dict):
        kind = raw.get("type")
        if kind not in _DOMAIN_KEYS:
            raise SpaceParseError(f"parameter {name!r}: unknown domain type {kind!r}")
        extra = set(raw) - _DOMAIN_KEYS[kind]
        if extra:
            raise SpaceParseError(f"parameter {name!r}: unexpected keys {sorted(extra)}")
        try:
            if kind == "float":
                if not all(isinstance(raw.get(k), (int, float)) and not isinstance(raw.get(k), bool) for k in ("low", "high")):
                    raise SpaceParseError(f"parameter {name!r}: float range needs numeric low/high")
                return FloatRange(float(raw["low"]), float(raw["high"]), bool(raw.get("log_scale", False)))
            if kind == "int":
                for k in ("low", "high"):
                    v = raw.get(k)
                    if isinstance(v, bool) or not isinstance(v, int):
                        raise SpaceParseError(f"parameter {name!r}: int range needs integer low/high")
                return IntRange(int(raw["low"]), int(raw["high"]))
            if not isinstance(raw.get("choices"), list):
                raise SpaceParseError(f"parameter {name!r}: categorical needs a choices list")
            return Categorical(raw["choices"])
        except DomainError as exc:
            raise DomainError(f"parameter {name!r}: {exc}") from exc
    if isinstance(raw, (bool, int, float, str)):
        return Fixed(raw)
    raise SpaceParseError(f"parameter {name!r}: unsupported entry {raw!r}")


def parse_space_obj(obj: Mapping[str, Any]) -> SearchSpace:
    """Build a SearchSpace from an already-decoded range document."""
    model = None
    params: dict[str, ParamDomain] = {}
    for name, raw in obj.items():
        if name == MODEL_KEY and isinstance(raw, str):
            model = raw
            continue
        params[name] = _parse_entry(name, raw)
    return SearchSpace(params, model=model)


def _reject_duplicate_keys(pairs):
    seen = set()
    for key, _ in pairs:
        if key in seen:
            raise SpaceParseError(f"duplicate parameter name {key!r}")
        seen.add(key)
    return dict(pairs)


def parse_space(text: str) -> SearchSpace:
    """Parse a range-JSON document into a SearchSpace, preserving key order."""
    try:
        obj = json.loads(text, object_pairs_hook=_reject_duplicate_keys)
    except json.JSONDecodeError as exc:
        raise SpaceParseError(f"malformed JSON at offset {exc.pos}: {exc.msg}", offset=exc.pos) from exc
    if not isinstance(obj, dict):
        raise SpaceParseError("range document must be a JSON object")
    return parse_space_obj(obj)


def space_to_obj(s: SearchSpace) -> dict[str, Any]:
    out: dict[str, Any] = {}
    if s.model is not None:
        out[MODEL_KEY] = s.model
    for name, dom in s.params.items():
        if isinstance(dom, FloatRange):
            entry: Any = {"type": "float", "low": dom.low, "high": dom.high}
            if dom.log_scale:
                entry["log_scale"] = True
        elif isinstance(dom, IntRange):
            entry = {"type": "int", "low": dom.low, "high": dom.high}
        elif isinstance(dom, Categorical):
            entry = {"type": "categorical", "choices": list(dom.choices)}
        else:
            entry = dom.value
        out[name] = entry
    return out


def serialize_space(s: SearchSpace, indent: int | None = 4) -> str:
    """Emit the same range-JSON shape the parser accepts."""
    return json.dumps(space_to_obj(s), indent=indent)


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def _is_number(v: Any) -> bool:
    return isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, bool)


def _is_integer(v: Any) -> bool:
    return isinstance(v, (int, np.integer)) and not isinstance(v, bool)


def validate(a: ParamAssignment, s: SearchSpace) -> list[Violation]:
    """Return all reasons ``a`` fails to lie in ``s`` (empty list iff valid)."""
    violations: list[Violation] = []
    values = a.values
    for name, dom in s.params.items():
        if name not in values:
            violations.append(Violation(name, "missing parameter"))
            continue
        v = values.pop(name)
        if isinstance(dom, FloatRange):
            if not _is_number(v):
                violations.append(Violation(name, f"expected a number, got {v!r}"))
            elif not (dom.low <= float(v) <= dom.high):
                violations.append(Violation(name, f"value {v!r} outside [{dom.low}, {dom.high}]"))
        elif isinstance(dom, IntRange):
            if not _is_integer(v):
                violations.append(Violation(name, f"expected an integer, got {v!r}"))
            elif not (dom.low <= int(v) <= dom.high):
                violations.append(Violation(name, f"value {v!r} outside [{dom.low}, {dom.high}]"))
        elif isinstance(dom, Categorical):
            if not any(v == c for c in dom.choices):
                violations.append(Violation(name, f"value {v!r} not among choices {list(dom.choices)}"))
        else:
            if v != dom.value:
                violations.append(Violation(name, f"value {v!r} differs from fixed {dom.value!r}"))
    for name in values:
        violations.append(Violation(name, "not declared in the search space"))
    return violations


def _require_valid(a: ParamAssignment, s: SearchSpace) -> None:
    violations = validate(a, s)
    if violations:
        raise SpaceValidationError(
            "assignment not in space: " + "; ".join(str(v) for v in violations),
            violations,
        )


# ---------------------------------------------------------------------------
# Continuous relaxation
# ---------------------------------------------------------------------------

def embed(a: ParamAssignment, s: SearchSpace) -> RelaxedPoint:
    """Map a valid assignment to its relaxed coordinates in [0, 1]^d.

    Float ranges map affinely (log-affinely when log-scaled), integer ranges
    affinely, and the j-th of k categorical choices to the bin center
    (j + 0.5) / k.
    """
    _require_valid(a, s)
    coords = []
    for name in s.free_names():
        dom = s.domain(name)
        v = a[name]
        if isinstance(dom, FloatRange):
            if dom.log_scale:
                c = (math.log(float(v)) - math.log(dom.low)) / (math.log(dom.high) - math.log(dom.low))
            else:
                c = (float(v) - dom.low) / (dom.high - dom.low)
        elif isinstance(dom, IntRange):
            c = (int(v) - dom.low) / (dom.high - dom.low)
        else:
            assert isinstance(dom, Categorical)
            j = next(i for i, choice in enumerate(dom.choices) if choice == v)
            c = (j + 0.5) / len(dom.choices)
        coords.append(min(1.0, max(0.0, c)))
    return np.asarray(coords, dtype=float)


def discretize(p: RelaxedPoint, s: SearchSpace) -> ParamAssignment:
    """Map a relaxed point back to a concrete assignment (inverse of embed).

    Coordinates are clamped to [0, 1] first; integers round half-up and the
    boundary coordinate 1.0 clamps into the last categorical bin. Fixed
    parameters are filled in with their pinned values.
    """
    p = np.asarray(p, dtype=float)
    free = s.free_names()
    if p.shape != (len(free),):
        raise SpaceValidationError(f"expected {len(free)} coordinates, got shape {p.shape}")
    p = np.clip(p, 0.0, 1.0)
    values: dict[str, Scalar] = {}
    it = iter(p)
    for name in s.names():
        dom = s.domain(name)
        if isinstance(dom, Fixed):
            values[name] = dom.value
            continue
        c = float(next(it))
        if isinstance(dom, FloatRange):
            if dom.log_scale:
                v: Scalar = math.exp(math.log(dom.low) + c * (math.log(dom.high) - math.log(dom.low)))
                v = min(dom.high, max(dom.low, v))
            else:
                v = dom.low + c * (dom.high - dom.low)
        elif isinstance(dom, IntRange):
            v = int(math.floor(dom.low + c * (dom.high - dom.low) + 0.5))
            v = min(dom.high, max(dom.low, v))
        else:
            assert isinstance(dom, Categorical)
            k = len(dom.choices)
            v = dom.choices[min(int(math.floor(c * k)), k - 1)]
        values[name] = v
    return ParamAssignment(values)


def sample_uniform(s: SearchSpace, seed: int) -> ParamAssignment:
    """Draw one assignment uniformly (log-uniformly where flagged), seeded."""
    rng = np.random.default_rng(seed)
    values: dict[str, Scalar] = {}
    for name in s.names():
        dom = s.domain(name)
        if isinstance(dom, Fixed):
            values[name] = dom.value
        elif isinstance(dom, FloatRange):
            u = rng.random()
            if dom.log_scale:
                values[name] = math.exp(math.log(dom.low) + u * (math.log(dom.high) - math.log(dom.low)))
            else:
                values[name] = dom.low + u * (dom.high - dom.low)
        elif isinstance(dom, IntRange):
            values[name] = int(rng.integers(dom.low, dom.high + 1))
        else:
            assert isinstance(dom, Categorical)
            values[name] = dom.choices[int(rng.integers(0, len(dom.choices)))]
    return ParamAssignment(values)


# ---------------------------------------------------------------------------
# Narrowing (subspace containment)
# ---------------------------------------------------------------------------

def assignments_close(a: ParamAssignment, b: ParamAssignment, s: SearchSpace, rel_tol: float = 1e-12) -> bool:
    """Equality up to float rounding: exact for discrete domains, ``rel_tol``
    for float ranges (the affine/log-affine relaxation is invertible only to
    one ulp in IEEE arithmetic)."""
    av, bv = a.values, b.values
    if set(av) != set(bv):
        return False
    for name, va in av.items():
        vb = bv[name]
        dom = s.domain(name) if name in s.names() else None
        if isinstance(dom, FloatRange):
            if not math.isclose(float(va), float(vb), rel_tol=rel_tol, abs_tol=1e-300):
                return False
        elif va != vb:
            return False
    return True


def domain_contains(parent: ParamDomain, sub: ParamDomain) -> bool:
    """True when every value admitted by ``sub`` is admitted by ``parent``."""
    if isinstance(sub, Fixed):
        probe = ParamAssignment({"_": sub.value})
        return not validate(probe, SearchSpace({"_": parent}))
    if isinstance(parent, FloatRange):
        if isinstance(sub, FloatRange):
            return parent.low <= sub.low and sub.high <= parent.high
        if isinstance(sub, IntRange):
            return parent.low <= sub.low and sub.high <= parent.high
        if isinstance(sub, Categorical):
            return all(_is_number(c) and parent.low <= float(c) <= parent.high for c in sub.choices)
        return False
    if isinstance(parent, IntRange):
        if isinstance(sub, IntRange):
            return parent.low <= sub.low and sub.high <= parent.high
        if isinstance(sub, Categorical):
            return all(_is_integer(c) and parent.low <= int(c) <= parent.high for c in sub.choices)
        return False
    if isinstance(parent, Categorical):
        if isinstance(sub, Categorical):
            return all(any(c == p for p in parent.choices) for c in sub.choices)
        return False
    assert isinstance(parent, Fixed)
    return isinstance(sub, Fixed) and sub.value == parent.value


def narrows(sub: SearchSpace, parent: SearchSpace) -> bool:
    """True when ``sub`` keeps every parent parameter and shrinks each domain."""
    if set(sub.names()) != set(parent.names()):
        return False
    return all(domain_contains(parent.domain(n), sub.domain(n)) for n in parent.names())
