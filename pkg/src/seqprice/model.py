"""Problem statement: products, patience, valuation law, objective, rankings.

Rankings are tuples of 0-based product indices in presentation order
(``ranking[j]`` is the product shown in stage ``j``). The CLI and CSV
outputs use 1-based indices.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .distributions import ValuationDistribution


class InvalidInstanceError(ValueError):
    """An input violates one of the model's invariants."""


class Objective(str, Enum):
    PROFIT = "profit"
    TOTAL_SURPLUS = "total"
    CONSUMER_SURPLUS = "consumer"

    @classmethod
    def parse(cls, text: str) -> "Objective":
        aliases = {
            "profit": cls.PROFIT, "profitmax": cls.PROFIT, "profit_max": cls.PROFIT,
            "total": cls.TOTAL_SURPLUS, "totalsurplus": cls.TOTAL_SURPLUS,
            "total_surplus": cls.TOTAL_SURPLUS, "altruistic": cls.TOTAL_SURPLUS,
            "consumer": cls.CONSUMER_SURPLUS, "consumersurplus": cls.CONSUMER_SURPLUS,
            "consumer_surplus": cls.CONSUMER_SURPLUS, "consumer_agent": cls.CONSUMER_SURPLUS,
        }
        try:
            return aliases[str(text).strip().lower()]
        except KeyError:
            raise InvalidInstanceError(f"unknown objective {text!r}") from None


@dataclass(frozen=True)
class Product:
    v: float
    c: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.v) and math.isfinite(self.c)):
            raise InvalidInstanceError("product valuation and cost must be finite")


@dataclass(frozen=True)
class Instance:
    products: tuple[Product, ...]
    rho: float
    dist: ValuationDistribution = field(default_factory=ValuationDistribution.exponential)
    objective: Objective = Objective.PROFIT

    def __post_init__(self):
        object.__setattr__(self, "products", tuple(self.products))
        if len(self.products) < 1:
            raise InvalidInstanceError("instance needs at least one product")
        if not (0.0 <= self.rho <= 1.0):
            raise InvalidInstanceError(f"rho must lie in [0, 1], got {self.rho}")
        if not isinstance(self.objective, Objective):
            object.__setattr__(self, "objective", Objective.parse(self.objective))

    @property
    def n(self) -> int:
        return len(self.products)

    @classmethod
    def from_arrays(cls, v: Sequence[float], c: Optional[Sequence[float]] = None,
                    rho: float = 0.5, dist: Optional[ValuationDistribution] = None,
                    objective=Objective.PROFIT) -> "Instance":
        if c is None:
            c = [0.0] * len(v)
        if len(c) != len(v):
            raise InvalidInstanceError("valuation and cost vectors differ in length")
        products = tuple(Product(float(a), float(b)) for a, b in zip(v, c))
        return cls(products, float(rho), dist or ValuationDistribution.exponential(), objective)

    def with_(self, **changes) -> "Instance":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "products": [{"v": p.v, "c": p.c} for p in self.products],
            "rho": self.rho,
            "distribution": self.dist.to_dict(),
            "objective": self.objective.value,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Instance":
        try:
            products = tuple(Product(float(p["v"]), float(p.get("c", 0.0)))
                             for p in data["products"])
            rho = float(data["rho"])
        except (KeyError, TypeError) as exc:
            raise InvalidInstanceError(f"malformed instance: missing or bad field {exc}") from None
        dist = ValuationDistribution.from_dict(data.get("distribution", {"type": "exponential"}))
        objective = Objective.parse(data.get("objective", "profit"))
        return cls(products, rho, dist, objective)


def load_instance(path) -> tuple[Instance, dict]:
    """Read an instance JSON file; returns the instance and the raw document."""
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InvalidInstanceError(f"malformed JSON in {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise InvalidInstanceError(f"{path}: top-level JSON value must be an object")
    return Instance.from_dict(doc), doc


def dump_instance(inst: Instance, path, extra: Optional[dict] = None) -> None:
    doc = inst.to_dict()
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


# Expected valuations v_i + E(eps) of the six-product numerical setting.
EXPECTED_VALUATIONS = tuple(Fraction(i, 6) for i in range(6))


def default_instance(dist: Optional[ValuationDistribution] = None, rho: float = 0.5,
                     objective=Objective.PROFIT) -> Instance:
    """Six products with expected valuations 0, 1/6, ..., 5/6 and zero costs.

    The listed numbers are expected valuations ``v_i + E(eps)``, so the
    observable parts are ``v_i = e_i - E(eps)``.
    """
    dist = dist or ValuationDistribution.exponential(1.0)
    v = [float(e) - dist.mean for e in EXPECTED_VALUATIONS]
    return Instance.from_arrays(v, [0.0] * len(v), rho, dist, objective)


def validate_ranking(ranking: Iterable[int], n: int) -> tuple[int, ...]:
    r = tuple(int(i) for i in ranking)
    if len(r) != n or sorted(r) != list(range(n)):
        raise InvalidInstanceError("ranking is not a permutation")
    return r


def parse_ranking(text: str, n: int) -> tuple[int, ...]:
    """Parse a comma-separated 1-based ranking such as ``"6,5,4,3,2,1"``."""
    try:
        one_based = [int(tok) for tok in text.replace(" ", "").split(",") if tok]
    except ValueError:
        raise InvalidInstanceError(f"ranking {text!r} is not a list of integers") from None
    return validate_ranking([i - 1 for i in one_based], n)


def format_ranking(ranking: Sequence[int]) -> str:
    return ",".join(str(i + 1) for i in ranking)


def identity(n: int) -> tuple[int, ...]:
    return tuple(range(n))
