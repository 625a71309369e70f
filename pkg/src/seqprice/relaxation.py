"""Relaxed rankings: doubly stochastic stage-assignment matrices.

``Q[i, j]`` is the probability that product ``i`` is shown in stage ``j``.
Under exponential valuations a product enters the equilibrium only through
its attractiveness ``M_i = exp(alpha (v_i - c_i))``, so a relaxed ranking is
evaluated by running the stage recursion on the mixed attractiveness
``Mbar_j = sum_i Q[i, j] M_i``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from .model import Instance, InvalidInstanceError, Objective

DEFAULT_RELAX_CAP = 8
_DS_TOL = 1e-8


class NotDoublyStochasticError(InvalidInstanceError):
    """A relaxed ranking matrix left the doubly stochastic polytope."""


@dataclass(frozen=True)
class RelaxedRanking:
    q: np.ndarray

    def __post_init__(self):
        q = np.array(self.q, dtype=float)
        if q.ndim != 2 or q.shape[0] != q.shape[1]:
            raise NotDoublyStochasticError("relaxed ranking must be a square matrix")
        q.setflags(write=False)
        object.__setattr__(self, "q", q)

    @property
    def n(self) -> int:
        return self.q.shape[0]

    def violation(self) -> float:
        q = self.q
        return float(max(np.max(np.abs(q.sum(axis=0) - 1.0)), np.max(np.abs(q.sum(axis=1) - 1.0)),
                         max(0.0, -q.min()), max(0.0, q.max() - 1.0)))

    def validate(self, tol: float = _DS_TOL) -> None:
        bad = self.violation()
        if bad > tol:
            raise NotDoublyStochasticError(
                f"matrix is not doubly stochastic (worst row/column/entry violation {bad:.3g})")

    @classmethod
    def from_ranking(cls, ranking) -> "RelaxedRanking":
        n = len(ranking)
        q = np.zeros((n, n))
        q[list(ranking), np.arange(n)] = 1.0
        return cls(q)

    @classmethod
    def uniform(cls, n: int) -> "RelaxedRanking":
        return cls(np.full((n, n), 1.0 / n))


def attractiveness(inst: Instance) -> np.ndarray:
    if not inst.dist.is_exponential:
        raise InvalidInstanceError("relaxed rankings require exponential valuations")
    alpha = inst.dist.alpha
    return np.exp(alpha * np.array([p.v - p.c for p in inst.products]))


def _check_scope(inst: Instance) -> None:
    if not inst.dist.is_exponential:
        raise InvalidInstanceError("relaxed rankings require exponential valuations")
    if inst.objective is Objective.CONSUMER_SURPLUS:
        raise InvalidInstanceError("relaxed rankings cover the profit and total-surplus objectives")


def stage_values(mbar: np.ndarray, rho: float, alpha: float, objective: Objective):
    """Run the stage recursion on per-stage attractiveness; returns ``(Vp, Vc)``."""
    vp = vc = 0.0
    for m in mbar[::-1]:
        if objective is Objective.PROFIT:
            # interior price unless the product sells with certainty at its kink
            if math.log(m) < 1.0 + alpha * rho * (vc + vp):
                prob = m * math.exp(-1.0 - alpha * rho * (vc + vp))
                vp, vc = rho * vp + prob / alpha, rho * vc + prob / alpha
            else:
                vp, vc = math.log(m) / alpha - rho * vc, rho * vc + 1.0 / alpha
        else:
            if math.log(m) <= alpha * rho * vc:
                vc = rho * vc + m * math.exp(-alpha * rho * vc) / alpha
            else:
                vc = (math.log(m) + 1.0) / alpha
            vp = 0.0
    return vp, vc


def _objective_from_mbar(inst: Instance, mbar: np.ndarray) -> float:
    vp, vc = stage_values(mbar, inst.rho, inst.dist.alpha, inst.objective)
    return vp if inst.objective is Objective.PROFIT else vp + vc


def evaluate_relaxed(inst: Instance, rr: RelaxedRanking) -> float:
    """Objective value (profit, or total surplus) of a relaxed ranking."""
    _check_scope(inst)
    if rr.n != inst.n:
        raise NotDoublyStochasticError(f"matrix is {rr.n}x{rr.n} but the instance has {inst.n} products")
    rr.validate()
    return _objective_from_mbar(inst, rr.q.T @ attractiveness(inst))


def max_weight_assignment(weights: np.ndarray, tol: float = 1e-12) -> tuple[int, ...]:
    """Maximum-weight perfect matching of products (rows) to stages (columns).

    Returned as a ranking: entry ``j`` is the product assigned to stage ``j``.
    Among optimal matchings the lexicographically smallest ranking is chosen
    by fixing stages in order, each to the smallest product that keeps the
    matching optimal.
    """
    w = np.asarray(weights, dtype=float)
    n = w.shape[0]
    rows, cols = linear_sum_assignment(w, maximize=True)
    best = w[rows, cols].sum()
    slack = tol * max(1.0, abs(best))
    fixed_value = 0.0
    free_products = list(range(n))
    ranking = []
    for stage in range(n):
        rest_stages = list(range(stage + 1, n))
        for prod in free_products:
            others = [p for p in free_products if p != prod]
            sub = w[np.ix_(others, rest_stages)] if rest_stages else np.zeros((0, 0))
            if rest_stages:
                r, c = linear_sum_assignment(sub, maximize=True)
                rest = sub[r, c].sum()
            else:
                rest = 0.0
            if fixed_value + w[prod, stage] + rest >= best - slack:
                ranking.append(prod)
                fixed_value += w[prod, stage]
                free_products = others
                break
        else:  # numerical corner: fall back to the solver's own matching
            perm = np.empty(n, dtype=int)
            perm[cols] = rows
            return tuple(int(i) for i in perm)
    return tuple(ranking)


def round_to_permutation(rr: RelaxedRanking) -> tuple[tuple[int, ...], float]:
    """Nearest ranking by maximum-weight assignment, and the rounding gap.

    The gap is the largest entrywise distance between ``Q`` and the chosen
    permutation matrix.
    """
    ranking = max_weight_assignment(rr.q)
    perm = RelaxedRanking.from_ranking(ranking).q
    return ranking, float(np.max(np.abs(rr.q - perm)))


@dataclass(frozen=True)
class RelaxationResult:
    relaxed: RelaxedRanking
    value: float
    fw_gap: float
    iterations: int
    restarts: int
    converged: bool

    def rounded(self) -> tuple[tuple[int, ...], float]:
        return round_to_permutation(self.relaxed)

    def to_dict(self) -> dict:
        ranking, gap = self.rounded()
        return {
            "Q": self.relaxed.q.reshape(-1).tolist(),
            "relaxed_value": self.value,
            "rounded_ranking": [i + 1 for i in ranking],
            "rounding_gap": gap,
            "fw_gap": self.fw_gap,
            "iters": self.iterations,
        }


def _gradient(inst: Instance, m: np.ndarray, q: np.ndarray) -> np.ndarray:
    """``dV/dQ[i, j] = M_i dV/dMbar_j``; central differences on ``Mbar``."""
    mbar = q.T @ m
    dmbar = np.empty_like(mbar)
    for j in range(len(mbar)):
        h = 1e-6 * mbar[j]
        up, dn = mbar.copy(), mbar.copy()
        up[j] += h
        dn[j] -= h
        dmbar[j] = (_objective_from_mbar(inst, up) - _objective_from_mbar(inst, dn)) / (2.0 * h)
    return np.outer(m, dmbar)


def _frank_wolfe(inst: Instance, m: np.ndarray, q0: np.ndarray, max_iter: int, gap_tol: float):
    q = q0.copy()
    best_q, best_val = q.copy(), _objective_from_mbar(inst, q.T @ m)
    gap = math.inf
    for t in range(max_iter):
        grad = _gradient(inst, m, q)
        target = RelaxedRanking.from_ranking(max_weight_assignment(grad)).q
        gap = float(np.sum(grad * (target - q)))
        if gap < gap_tol:
            return best_q, best_val, gap, t, True
        q = q + 2.0 / (t + 2.0) * (target - q)
        val = _objective_from_mbar(inst, q.T @ m)
        if val > best_val:
            best_q, best_val = q.copy(), val
    return best_q, best_val, gap, max_iter, False


def random_doubly_stochastic(n: int, rng: np.random.Generator, n_vertices: int = 4) -> np.ndarray:
    """Random convex combination of permutation matrices."""
    weights = rng.dirichlet(np.ones(n_vertices))
    q = np.zeros((n, n))
    for w in weights:
        q += w * RelaxedRanking.from_ranking(rng.permutation(n)).q
    return q


def optimize_relaxed(inst: Instance, *, restarts: int = 16, seed: int = 0,
                     max_iter: int = 5000, gap_tol: float = 1e-8,
                     cap: int = DEFAULT_RELAX_CAP) -> RelaxationResult:
    """Frank-Wolfe ascent over doubly stochastic matrices with restarts.

    The first run starts from the uniform matrix, the rest from seeded random
    points of the polytope; the best final value wins (ties go to the run
    that started first).
    """
    _check_scope(inst)
    n = inst.n
    if n > cap:
        from .ranking import SizeCapError
        raise SizeCapError(f"relaxed search is capped at N={cap}, got N={n}")
    m = attractiveness(inst)
    rng = np.random.default_rng(seed)
    starts = [RelaxedRanking.uniform(n).q]
    starts += [random_doubly_stochastic(n, rng) for _ in range(max(0, restarts - 1))]
    best: Optional[tuple] = None
    total_iter = 0
    for q0 in starts:
        q, val, gap, iters, ok = _frank_wolfe(inst, m, q0, max_iter, gap_tol)
        total_iter += iters
        if best is None or val > best[1]:
            best = (q, val, gap, ok)
        if n == 1:
            break
    q, val, gap, ok = best
    return RelaxationResult(RelaxedRanking(q), val, gap, total_iter, len(starts), ok)
