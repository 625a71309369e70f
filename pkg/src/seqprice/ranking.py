"""Ranking search: exhaustive enumeration, greedy pairwise switching, double rank."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import combinations
from typing import Optional, Sequence

from .equilibrium import StageSolver, objective_value, solve_given_ranking
from .model import Instance, InvalidInstanceError, validate_ranking

DEFAULT_ENUM_CAP = 9


class SizeCapError(InvalidInstanceError):
    """Exhaustive search was requested for more products than the cap allows."""


@dataclass(frozen=True)
class RankingSearchResult:
    ranking: tuple[int, ...]
    value: float
    iterations: int
    evaluations: int
    trajectory: tuple[float, ...] = ()

    def to_dict(self) -> dict:
        return {
            "ranking": [i + 1 for i in self.ranking],
            "value": self.value,
            "iterations": self.iterations,
            "evaluations": self.evaluations,
        }


def value_margins(inst: Instance) -> list[float]:
    """Expected surplus of each product when sold at cost: ``v + E(eps) - c``."""
    mean = inst.dist.mean
    return [p.v + mean - p.c for p in inst.products]


def descending_ranking(inst: Instance) -> tuple[int, ...]:
    """Products by decreasing value margin; equal margins keep index order."""
    margins = value_margins(inst)
    return tuple(sorted(range(inst.n), key=lambda i: -margins[i]))


def ascending_ranking(inst: Instance) -> tuple[int, ...]:
    margins = value_margins(inst)
    return tuple(sorted(range(inst.n), key=lambda i: margins[i]))


def pairwise_neighborhood(ranking: Sequence[int]) -> list[tuple[int, ...]]:
    """All rankings one transposition away, ordered by the swapped positions."""
    base = list(ranking)
    out = []
    for i, j in combinations(range(len(base)), 2):
        nb = base.copy()
        nb[i], nb[j] = nb[j], nb[i]
        out.append(tuple(nb))
    return out


class RankingEvaluator:
    """Objective value of a ranking, sharing one stage solver across calls."""

    def __init__(self, inst: Instance, method: str = "auto"):
        self.inst = inst
        self.solver = StageSolver(inst.dist, inst.rho, inst.objective, method)
        self.count = 0

    def __call__(self, ranking: Sequence[int]) -> float:
        self.count += 1
        return solve_given_ranking(self.inst, ranking, self.solver).value()


def _better(value: float, ranking: tuple, best_value: float, best_ranking) -> bool:
    return value > best_value or (value == best_value and ranking < best_ranking)


def gps(inst: Instance, initial: Optional[Sequence[int]] = None, *, method: str = "auto",
        threads: int = 1, max_iter: Optional[int] = None) -> RankingSearchResult:
    """Greedy pairwise-switch local search with best-improvement moves.

    One iteration is one full scan of the transposition neighborhood; the
    search stops after the first scan that finds no strict improvement.
    """
    current = validate_ranking(initial if initial is not None else range(inst.n), inst.n)
    evaluate = RankingEvaluator(inst, method)
    value = evaluate(current)
    trajectory = [value]
    cap = max_iter if max_iter is not None else math.factorial(inst.n)
    iterations = 0
    pool = ThreadPoolExecutor(threads) if threads > 1 else None
    try:
        while True:
            iterations += 1
            nbs = pairwise_neighborhood(current)
            vals = list(pool.map(evaluate, nbs)) if pool else [evaluate(nb) for nb in nbs]
            best_value, best_nb = -math.inf, None
            for nb, val in zip(nbs, vals):
                if best_nb is None or _better(val, nb, best_value, best_nb):
                    best_value, best_nb = val, nb
            if best_nb is None or not best_value > value or iterations >= cap:
                break
            current, value = best_nb, best_value
            trajectory.append(value)
    finally:
        if pool:
            pool.shutdown()
    return RankingSearchResult(current, value, iterations, evaluate.count, tuple(trajectory))


def enumerate_optimal(inst: Instance, *, cap: int = DEFAULT_ENUM_CAP, method: str = "auto",
                      threads: int = 1) -> RankingSearchResult:
    """Exact optimum over all N! rankings.

    Rankings are built from the last stage backwards, so each distinct suffix
    is solved once. Exact ties go to the lexicographically smallest ranking.
    """
    n = inst.n
    if n > cap:
        raise SizeCapError(f"exhaustive ranking search is capped at N={cap}, got N={n}")
    prods = inst.products

    def search(solver: StageSolver, last: int):
        best = [-math.inf, None]
        stage_solves = 0

        def extend(suffix: tuple, remaining: frozenset, vp: float, vc: float):
            nonlocal stage_solves
            if not remaining:
                val = objective_value(vp, vc, inst.objective)
                if best[1] is None or _better(val, suffix, best[0], best[1]):
                    best[0], best[1] = val, suffix
                return
            for idx in sorted(remaining):
                st = solver.solve(idx, prods[idx].v, prods[idx].c, vp, vc)
                stage_solves += 1
                extend((idx,) + suffix, remaining - {idx}, st.v_seller, st.v_consumer)

        st = solver.solve(last, prods[last].v, prods[last].c)
        stage_solves += 1
        extend((last,), frozenset(range(n)) - {last}, st.v_seller, st.v_consumer)
        return best[0], best[1], stage_solves

    def shard(last: int):
        # one solver per shard keeps worker threads independent
        return search(StageSolver(inst.dist, inst.rho, inst.objective, method), last)

    if threads > 1 and n > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(shard, range(n)))
    else:
        results = [shard(last) for last in range(n)]
    best_value, best_ranking = -math.inf, None
    for val, ranking, _ in results:
        if best_ranking is None or _better(val, ranking, best_value, best_ranking):
            best_value, best_ranking = val, ranking
    return RankingSearchResult(best_ranking, best_value, 1, math.factorial(n))


def double_rank(inst: Instance, *, method: str = "auto") -> RankingSearchResult:
    """Better of the descending and ascending value-margin rankings."""
    evaluate = RankingEvaluator(inst, method)
    desc, asc = descending_ranking(inst), ascending_ranking(inst)
    v_desc, v_asc = evaluate(desc), evaluate(asc)
    if v_asc > v_desc or (v_asc == v_desc and asc < desc):
        return RankingSearchResult(asc, v_asc, 1, 2)
    return RankingSearchResult(desc, v_desc, 1, 2)
