"""Property configuration and the three per-property constraint predicates.

A property has a desirable direction, an improvement threshold ``delta`` and a
pharmaceutically relevant level ``theta``. A score strictly on the desirable
side of ``theta`` is near-optimal; everything else, equality included, is
sub-optimal. A change counts as an improvement when it points the desirable
way and its magnitude strictly exceeds ``delta``; it counts as maintained when
its magnitude is at most ``delta``.
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator, Mapping

# Absolute slack on change magnitudes so that decimal inputs such as
# 0.4 - 0.3 compare as the exact difference 0.1 would.
_CHANGE_TOL = 1e-9


class UnknownProperty(KeyError):
    """A name is not in the registry."""


class MissingProperty(KeyError):
    """A score vector lacks a property the objective needs."""


class RegistryError(ValueError):
    """A registry file or mapping is malformed."""


class Direction(str, enum.Enum):
    HIGHER = "higher"
    LOWER = "lower"

    @property
    def sign(self) -> int:
        return 1 if self is Direction.HIGHER else -1

    @property
    def arrow(self) -> str:
        return "↑" if self is Direction.HIGHER else "↓"


class Status(str, enum.Enum):
    NEAR_OPTIMAL = "near-optimal"
    SUB_OPTIMAL = "sub-optimal"


@dataclass(frozen=True)
class PropertySpec:
    """One benchmark property.

    Attributes
    ----------
    name : str
        Identifier used in score files and objectives.
    direction : Direction
        Which way is desirable.
    delta : float
        Improvement threshold and maintenance tolerance (property units, > 0).
    theta : float
        Level separating near-optimal from sub-optimal scores.
    code : str, optional
        One-letter code used in combination names such as ``BPQ``.
    """

    name: str
    direction: Direction
    delta: float
    theta: float
    code: str | None = None

    def __post_init__(self) -> None:
        if not isinstance(self.direction, Direction):
            object.__setattr__(self, "direction", Direction(self.direction))
        if not (math.isfinite(self.delta) and self.delta > 0):
            raise RegistryError(f"{self.name}: delta must be finite and > 0, got {self.delta!r}")
        if not math.isfinite(self.theta):
            raise RegistryError(f"{self.name}: theta must be finite, got {self.theta!r}")


class PropertyRegistry(Mapping[str, PropertySpec]):
    """Ordered, immutable name -> :class:`PropertySpec` mapping.

    ``combinations`` optionally maps named property combinations (letter
    codes) to a split label such as ``IND`` or ``OOD``.
    """

    def __init__(self, specs: Iterable[PropertySpec], combinations: Mapping[str, str] | None = None):
        ordered: dict[str, PropertySpec] = {}
        for spec in specs:
            if spec.name in ordered:
                raise RegistryError(f"duplicate property name {spec.name!r}")
            ordered[spec.name] = spec
        codes = [s.code for s in ordered.values() if s.code]
        if len(codes) != len(set(codes)):
            raise RegistryError("duplicate property codes")
        self._specs = ordered
        self.combinations: dict[str, str] = dict(combinations or {})

    def __getitem__(self, name: str) -> PropertySpec:
        try:
            return self._specs[name]
        except KeyError:
            raise UnknownProperty(name) from None

    def __iter__(self) -> Iterator[str]:
        return iter(self._specs)

    def __len__(self) -> int:
        return len(self._specs)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PropertyRegistry):
            return NotImplemented
        return list(self._specs.values()) == list(other._specs.values())

    def __repr__(self) -> str:
        return f"PropertyRegistry({list(self._specs)})"

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self._specs)

    def order(self, names: Iterable[str]) -> tuple[str, ...]:
        """``names`` sorted by registry position; unknown names raise."""
        names = set(names)
        for n in names:
            self[n]
        return tuple(n for n in self._specs if n in names)

    def with_thetas(self, thetas: Mapping[str, float]) -> "PropertyRegistry":
        specs = [replace(s, theta=float(thetas[s.name])) if s.name in thetas else s
                 for s in self._specs.values()]
        return PropertyRegistry(specs, self.combinations)

    def subset(self, names: Iterable[str]) -> "PropertyRegistry":
        keep = self.order(names)
        return PropertyRegistry([self._specs[n] for n in keep])

    def resolve_combination(self, text: str) -> tuple[str, ...]:
        """Property names for ``text``.

        Accepts a comma-separated name list (``BBBP,PlogP,QED``) or a string
        of one-letter codes (``BPQ``).
        """
        text = text.strip()
        if "," in text or text in self._specs:
            return self.order(t.strip() for t in text.split(",") if t.strip())
        by_code = {s.code: s.name for s in self._specs.values() if s.code}
        try:
            names = [by_code[c] for c in text]
        except KeyError as exc:
            raise UnknownProperty(f"no property with code {exc.args[0]!r} in {text!r}") from None
        if len(set(names)) != len(names):
            raise RegistryError(f"repeated code in combination {text!r}")
        return self.order(names)

    def combination_code(self, names: Iterable[str]) -> str | None:
        specs = [self[n] for n in self.order(names)]
        if any(s.code is None for s in specs):
            return None
        return "".join(s.code for s in specs)

    # --- serialization -------------------------------------------------

    def to_dict(self) -> dict:
        props = []
        for s in self._specs.values():
            row = {"name": s.name, "direction": s.direction.value, "delta": s.delta, "theta": s.theta}
            if s.code:
                row["code"] = s.code
            props.append(row)
        out: dict = {"properties": props}
        if self.combinations:
            out["combinations"] = dict(self.combinations)
        return out

    @classmethod
    def from_dict(cls, data: Mapping) -> "PropertyRegistry":
        if not isinstance(data, Mapping) or not isinstance(data.get("properties"), list):
            raise RegistryError("registry needs a 'properties' list")
        specs = []
        for k, row in enumerate(data["properties"]):
            try:
                specs.append(PropertySpec(
                    name=str(row["name"]),
                    direction=Direction(row["direction"]),
                    delta=float(row["delta"]),
                    theta=float(row["theta"]),
                    code=row.get("code"),
                ))
            except (KeyError, TypeError, ValueError) as exc:
                if isinstance(exc, RegistryError):
                    raise
                raise RegistryError(f"property entry {k}: {exc}") from exc
        return cls(specs, data.get("combinations"))

    def dumps(self, provenance: Mapping | None = None) -> str:
        """Stable JSON text, one property per line, optional provenance first."""
        d = self.to_dict()
        lines = ["{"]
        if provenance is not None:
            lines.append('  "provenance": ' + json.dumps(dict(provenance), sort_keys=True) + ",")
        lines.append('  "properties": [')
        rows = [json.dumps(r, ensure_ascii=False) for r in d["properties"]]
        lines.append(",\n".join("    " + r for r in rows))
        if "combinations" in d:
            lines.append("  ],")
            lines.append('  "combinations": ' + json.dumps(d["combinations"], sort_keys=False))
        else:
            lines.append("  ]")
        lines.append("}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        body = json.dumps(self.to_dict()["properties"], sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(body.encode()).hexdigest()

    @classmethod
    def load(cls, path) -> "PropertyRegistry":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise RegistryError(f"{path}: {exc}") from exc
        return cls.from_dict(data)

    @classmethod
    def default(cls) -> "PropertyRegistry":
        """The ten benchmark properties with their published constants."""
        text = resources.files("cmumo").joinpath("data", "registry_default.json").read_text(encoding="utf-8")
        return cls.from_dict(json.loads(text))


class PropertyVector(Mapping[str, float]):
    """Finite scores keyed by property name."""

    __slots__ = ("_scores",)

    def __init__(self, scores: Mapping[str, float] | None = None, **kw: float):
        merged = dict(scores or {}, **kw)
        for k, v in merged.items():
            v = float(v)
            if not math.isfinite(v):
                raise ValueError(f"score for {k} is not finite: {v!r}")
            merged[k] = v
        self._scores = merged

    def __getitem__(self, name: str) -> float:
        try:
            return self._scores[name]
        except KeyError:
            raise MissingProperty(name) from None

    def __iter__(self):
        return iter(self._scores)

    def __len__(self) -> int:
        return len(self._scores)

    def __eq__(self, other) -> bool:
        if isinstance(other, Mapping):
            return dict(self._scores) == dict(other)
        return NotImplemented

    def __hash__(self) -> int:
        return hash(tuple(sorted(self._scores.items())))

    def __repr__(self) -> str:
        return f"PropertyVector({self._scores!r})"

    def validate(self, reg: PropertyRegistry) -> "PropertyVector":
        for k in self._scores:
            if k not in reg:
                raise UnknownProperty(k)
        return self

    def to_dict(self) -> dict[str, float]:
        return dict(self._scores)


@dataclass(frozen=True)
class OptimizationObjective:
    """Which properties to improve and which to hold steady."""

    improve: frozenset[str] = field(default_factory=frozenset)
    maintain: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        object.__setattr__(self, "improve", frozenset(self.improve))
        object.__setattr__(self, "maintain", frozenset(self.maintain))
        both = self.improve & self.maintain
        if both:
            raise ValueError(f"properties both improved and maintained: {sorted(both)}")

    @property
    def combination(self) -> frozenset[str]:
        return self.improve | self.maintain

    @property
    def runnable(self) -> bool:
        return bool(self.improve)

    def key(self, reg: PropertyRegistry | None = None) -> str:
        """Stable text label, e.g. ``improve=BBBP+QED;maintain=PlogP``."""
        order = reg.order if reg is not None else sorted
        return f"improve={'+'.join(order(self.improve))};maintain={'+'.join(order(self.maintain))}"

    @classmethod
    def from_key(cls, key: str) -> "OptimizationObjective":
        parts = dict(p.split("=", 1) for p in key.split(";"))
        split = lambda s: frozenset(x for x in s.split("+") if x)  # noqa: E731
        return cls(split(parts.get("improve", "")), split(parts.get("maintain", "")))

    def to_dict(self, reg: PropertyRegistry | None = None) -> dict:
        order = reg.order if reg is not None else sorted
        return {"improve": list(order(self.improve)), "maintain": list(order(self.maintain))}

    @classmethod
    def from_dict(cls, d: Mapping) -> "OptimizationObjective":
        return cls(frozenset(d.get("improve", ())), frozenset(d.get("maintain", ())))


def all_objectives(combination: Iterable[str], reg: PropertyRegistry) -> list[OptimizationObjective]:
    """Every split of ``combination`` into a non-empty improve set and a maintain set."""
    names = reg.order(combination)
    out = []
    for mask in range(1, 1 << len(names)):
        imp = frozenset(n for k, n in enumerate(names) if mask >> k & 1)
        out.append(OptimizationObjective(imp, frozenset(names) - imp))
    return out


def classify(score: float, spec: PropertySpec) -> Status:
    if spec.direction is Direction.HIGHER:
        near = score > spec.theta
    else:
        near = score < spec.theta
    return Status.NEAR_OPTIMAL if near else Status.SUB_OPTIMAL


def improved(x: float, y: float, spec: PropertySpec) -> bool:
    change = (y - x) * spec.direction.sign
    return change > 0 and abs(y - x) > spec.delta + _CHANGE_TOL


def maintained(x: float, y: float, spec: PropertySpec) -> bool:
    return abs(y - x) <= spec.delta + _CHANGE_TOL


def satisfies_objective(
    x: Mapping[str, float],
    y: Mapping[str, float],
    obj: OptimizationObjective,
    reg: PropertyRegistry,
    strict: bool = False,
) -> bool:
    """Whether moving from ``x`` to ``y`` meets ``obj``.

    Non-strict success needs every improve property improved and every
    maintain property maintained. Strict success also needs every improve
    property near-optimal in ``y``.

    Raises
    ------
    MissingProperty
        ``x`` or ``y`` lacks a property named by ``obj``.
    """
    for name in obj.combination:
        if name not in x or name not in y:
            raise MissingProperty(name)
    for name in obj.improve:
        spec = reg[name]
        if not improved(x[name], y[name], spec):
            return False
        if strict and classify(y[name], spec) is not Status.NEAR_OPTIMAL:
            return False
    for name in obj.maintain:
        if not maintained(x[name], y[name], reg[name]):
            return False
    return True
