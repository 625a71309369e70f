"""Backward-induction equilibrium of the sequential (one product per stage) model.

Each stage is solved in the shifted variable ``y = p - v + delta``, the
private valuation a consumer needs in order to buy. With ``W = rho * Vp_next``
and ``m = v - delta - c - W`` the seller's stage objective is
``W + S(y) (y + m)``, the consumer's continuation value is
``delta + E[(eps - y)^+]`` and the price is recovered as ``p = y + v - delta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import special

from .distributions import DegenerateTailError, ValuationDistribution, _BRACKET_TAIL
from .model import Instance, Objective, validate_ranking
from .optimize import maximize_scalar


class DegenerateSurplusError(ZeroDivisionError):
    """Surplus shares are undefined because the total surplus is zero."""


class ClosedFormError(ValueError):
    """The exponential closed form does not apply to this instance."""


@dataclass(frozen=True)
class StageEquilibrium:
    product_index: int
    price: float
    threshold: float
    buy_prob: float
    v_seller: float
    v_consumer: float

    def to_dict(self) -> dict:
        return {
            "product": self.product_index + 1,
            "price": self.price,
            "threshold": self.threshold,
            "buy_prob": self.buy_prob,
            "v_seller": self.v_seller,
            "v_consumer": self.v_consumer,
        }


@dataclass(frozen=True)
class EquilibriumResult:
    stages: tuple[StageEquilibrium, ...]
    objective: Objective = Objective.PROFIT

    @property
    def ranking(self) -> tuple[int, ...]:
        return tuple(s.product_index for s in self.stages)

    @property
    def seller_value(self) -> float:
        return self.stages[0].v_seller

    @property
    def consumer_value(self) -> float:
        return self.stages[0].v_consumer

    @property
    def total_value(self) -> float:
        return self.seller_value + self.consumer_value

    @property
    def prices(self) -> np.ndarray:
        return np.array([s.price for s in self.stages])

    @property
    def thresholds(self) -> np.ndarray:
        return np.array([s.threshold for s in self.stages])

    @property
    def buy_probs(self) -> np.ndarray:
        return np.array([s.buy_prob for s in self.stages])

    def value(self) -> float:
        """The quantity the seller's objective ranks by."""
        return objective_value(self.seller_value, self.consumer_value, self.objective)

    def to_dict(self) -> dict:
        return {
            "objective": self.objective.value,
            "ranking": [i + 1 for i in self.ranking],
            "seller_value": self.seller_value,
            "consumer_value": self.consumer_value,
            "total_value": self.total_value,
            "stages": [s.to_dict() for s in self.stages],
        }


def objective_value(v_seller: float, v_consumer: float, objective: Objective) -> float:
    if objective is Objective.PROFIT:
        return v_seller
    return v_seller + v_consumer


class StageSolver:
    """Solves one stage given the continuation values of the stages after it.

    Holds scalar kernels for the valuation law so that repeated stage solves
    (ranking enumeration calls this thousands of times) avoid array overhead.

    ``method="numeric"`` maximizes the stage objective with the bracketed
    scalar search for any law. ``method="analytic"`` (exponential only) uses
    the exact maximizer ``y = max(0, 1/alpha - m)``, which also covers the
    sure-sale kink; ``"auto"`` picks it whenever it applies.
    """

    def __init__(self, dist: ValuationDistribution, rho: float, objective: Objective,
                 method: str = "numeric"):
        if method not in ("numeric", "analytic", "auto"):
            raise ValueError(f"unknown stage method {method!r}")
        if method == "analytic" and not dist.is_exponential:
            raise ValueError("analytic stage maximizer requires exponential valuations")
        self.dist = dist
        self.rho = float(rho)
        self.objective = objective
        self.analytic = dist.is_exponential and method != "numeric"
        self._tail_q = dist.upper_quantile(_BRACKET_TAIL)
        if dist.is_exponential:
            alpha = dist.alpha
            self._surv = lambda y: np.exp(-alpha * y)
            self._dens = lambda y: alpha * math.exp(-alpha * y)
        else:
            a, b = dist.shape, dist.scale
            log_norm = special.gammaln(a) + a * math.log(b)
            self._surv = lambda y: special.gammaincc(a, y / b)

            def dens(y):
                if y <= 0.0:
                    return math.inf if a < 1.0 else (1.0 / b if a == 1.0 else 0.0)
                return math.exp((a - 1.0) * math.log(y) - y / b - log_norm)

            self._dens = dens

    def solve(self, product_index: int, v: float, c: float,
              vp_next: float = 0.0, vc_next: float = 0.0) -> StageEquilibrium:
        delta = self.rho * vc_next
        if self.objective is not Objective.PROFIT:
            # at-cost pricing: the seller earns nothing on any path
            y = c - v + delta
            prob = float(self._surv(max(y, 0.0)))
            return StageEquilibrium(product_index, float(c), delta, prob, 0.0,
                                    delta + self._excess(y))
        cont = self.rho * vp_next
        m = v - delta - c - cont
        if self.analytic:
            alpha = self.dist.alpha
            y = max(0.0, 1.0 / alpha - m)
            prob = math.exp(-alpha * y)
            return StageEquilibrium(product_index, y + v - delta, delta, prob,
                                    cont + prob * (y + m), delta + self._excess(y))
        lo = max(0.0, c - v + delta)
        hi = lo + self._tail_q + abs(m) + 1.0
        surv, dens = self._surv, self._dens

        def gain(y):
            return surv(y) * (y + m)

        def dgain(y):
            return float(surv(y)) - dens(y) * (y + m)

        y, g = maximize_scalar(gain, lo, hi, fprime=dgain)
        prob = float(surv(y))
        return StageEquilibrium(product_index, y + v - delta, delta, prob,
                                cont + float(g), delta + self._excess(y))

    def _excess(self, y: float) -> float:
        if self.dist.is_exponential:
            alpha = self.dist.alpha
            return math.exp(-alpha * y) / alpha if y > 0.0 else 1.0 / alpha - y
        return self.dist._gamma_excess(y)


def solve_given_ranking(inst: Instance, ranking: Sequence[int],
                        solver: Optional[StageSolver] = None,
                        method: str = "numeric") -> EquilibriumResult:
    """Equilibrium prices, thresholds and values for one presentation order."""
    ranking = validate_ranking(ranking, inst.n)
    solver = solver or StageSolver(inst.dist, inst.rho, inst.objective, method)
    stages: list[StageEquilibrium] = []
    vp = vc = 0.0
    for idx in reversed(ranking):
        prod = inst.products[idx]
        st = solver.solve(idx, prod.v, prod.c, vp, vc)
        stages.append(st)
        vp, vc = st.v_seller, st.v_consumer
    return EquilibriumResult(tuple(reversed(stages)), inst.objective)


def solve_exponential_closed_form(inst: Instance, ranking: Sequence[int]) -> EquilibriumResult:
    """Closed-form profit-maximizing equilibrium under exponential valuations.

    The closed form assumes the optimal price is interior
    (``1/alpha + c - v + 2 rho Vp_next >= 0``); a stage outside that regime
    would be priced at its sure-sale kink instead, so it is rejected.
    """
    if not inst.dist.is_exponential:
        raise ClosedFormError("closed form requires an exponential valuation distribution")
    if inst.objective is not Objective.PROFIT:
        raise ClosedFormError("closed form covers the profit-maximizing objective only")
    ranking = validate_ranking(ranking, inst.n)
    alpha, rho = inst.dist.alpha, inst.rho
    stages: list[StageEquilibrium] = []
    vp = 0.0
    for idx in reversed(ranking):
        prod = inst.products[idx]
        cont = rho * vp
        if 1.0 / alpha + prod.c - prod.v + 2.0 * cont < 0.0:
            raise ClosedFormError(
                f"product {idx + 1} lies outside the closed-form regime "
                "(its optimal price would sell with certainty)")
        price = prod.c + 1.0 / alpha + cont
        prob = math.exp(alpha * (prod.v - prod.c) - 1.0) * math.exp(-2.0 * alpha * cont)
        vp = prob / alpha + cont
        # profit and consumer surplus coincide stage by stage
        stages.append(StageEquilibrium(idx, price, cont, prob, vp, vp))
    return EquilibriumResult(tuple(reversed(stages)), inst.objective)


def surplus_shares(res: EquilibriumResult) -> tuple[float, float]:
    total = res.total_value
    if total == 0.0:
        raise DegenerateSurplusError("total surplus is zero; shares are undefined")
    seller = res.seller_value / total
    return seller, 1.0 - seller


__all__ = [
    "ClosedFormError", "DegenerateSurplusError", "DegenerateTailError", "EquilibriumResult",
    "StageEquilibrium", "StageSolver", "objective_value", "solve_exponential_closed_form",
    "solve_given_ranking", "surplus_shares",
]
