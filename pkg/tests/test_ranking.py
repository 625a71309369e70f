import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from seqprice.distributions import ValuationDistribution
from seqprice.equilibrium import solve_given_ranking
from seqprice.experiments import random_instance
from seqprice.model import Instance, Objective, default_instance
from seqprice.ranking import (SizeCapError, ascending_ranking, descending_ranking, double_rank,
                              enumerate_optimal, gps, pairwise_neighborhood, value_margins)

DESC = (5, 4, 3, 2, 1, 0)
ASC = (0, 1, 2, 3, 4, 5)


def brute_force(inst):
    """Plain enumeration with the numeric solver; first best in lexicographic order wins."""
    best_val, best = -math.inf, None
    for r in itertools.permutations(range(inst.n)):
        val = solve_given_ranking(inst, r).value()
        if val > best_val + 1e-12:
            best_val, best = val, r
    return best, best_val


def test_value_margins():
    sixths = [i / 6 for i in range(6)]
    explicit = Instance.from_arrays(sixths, [0.0] * 6, 0.5)
    assert value_margins(explicit) == pytest.approx([1 + s for s in sixths], abs=1e-15)
    assert value_margins(default_instance()) == pytest.approx(sixths, abs=1e-15)
    same = Instance.from_arrays([0.3, -1.0], [0.3, -1.0], 0.5, ValuationDistribution.gamma(2, .5))
    assert value_margins(same) == [1.0, 1.0]
    g = Instance.from_arrays([0.0, 1.0], [0.0, 0.0], 0.5, ValuationDistribution.gamma(5, 10))
    assert value_margins(g) == [50.0, 51.0]


def test_pairwise_neighborhood():
    assert set(pairwise_neighborhood((1, 2, 3))) == {(2, 1, 3), (1, 3, 2), (3, 2, 1)}
    assert pairwise_neighborhood(()) == []
    assert pairwise_neighborhood((0,)) == []
    nb = pairwise_neighborhood((0, 1, 2, 3))
    assert len(nb) == 6 == len(set(nb))
    assert all(sorted(r) == [0, 1, 2, 3] and r != (0, 1, 2, 3) for r in nb)


@given(st.permutations(range(6)))
@settings(max_examples=50, deadline=None)
def test_neighbors_differ_by_one_transposition(perm):
    nb = pairwise_neighborhood(perm)
    assert len(set(nb)) == 15
    for r in nb:
        assert sum(a != b for a, b in zip(r, perm)) == 2


def test_gps_single_product():
    inst = Instance.from_arrays([0.0], [0.0], 0.5)
    res = gps(inst)
    assert res.ranking == (0,) and res.iterations == 1 and res.evaluations == 1


def test_gps_at_local_optimum_stops_after_one_scan():
    inst = default_instance(rho=0.3)
    res = gps(inst, DESC)
    assert res.ranking == DESC
    assert res.iterations == 1 and res.evaluations == 1 + 15


def test_gps_monotone_and_counts():
    rng = np.random.default_rng(1)
    for _ in range(20):
        inst = random_instance(int(rng.integers(3, 7)), rng)
        res = gps(inst, tuple(rng.permutation(inst.n)))
        assert all(b > a for a, b in zip(res.trajectory, res.trajectory[1:]))
        assert res.evaluations == 1 + res.iterations * math.comb(inst.n, 2)
        assert res.iterations <= math.factorial(inst.n)


def test_enumeration_matches_brute_force():
    rng = np.random.default_rng(17)
    dists = [ValuationDistribution.exponential(1.0), ValuationDistribution.gamma(2, 0.5)]
    for trial in range(12):
        n = int(rng.integers(2, 6))
        inst = random_instance(n, rng, dists[trial % 2])
        ref, ref_val = brute_force(inst)
        res = enumerate_optimal(inst)
        assert res.value == pytest.approx(ref_val, abs=1e-9)
        assert solve_given_ranking(inst, res.ranking).value() == pytest.approx(ref_val, abs=1e-9)


def test_result_value_matches_solver():
    for dist in (ValuationDistribution.exponential(1.0), ValuationDistribution.gamma(2, 0.5)):
        inst = default_instance(dist, rho=0.96)
        for res in (enumerate_optimal(inst), gps(inst), double_rank(inst)):
            again = solve_given_ranking(inst, res.ranking, method="auto").value()
            assert abs(res.value - again) <= 1e-12


def test_enumeration_small_cases_and_cap():
    assert enumerate_optimal(Instance.from_arrays([0.2], [0.0], 0.5)).ranking == (0,)
    big = Instance.from_arrays([0.0] * 10, None, 0.5)
    with pytest.raises(SizeCapError):
        enumerate_optimal(big)
    with pytest.raises(SizeCapError):
        enumerate_optimal(default_instance(), cap=5)


def test_enumeration_tie_break_is_lexicographic():
    inst = Instance.from_arrays([-0.5] * 4, None, 0.7)
    assert enumerate_optimal(inst).ranking == (0, 1, 2, 3)
    twins = Instance.from_arrays([-0.2, -0.9, -0.2], None, 0.3)
    res = enumerate_optimal(twins)
    assert res.ranking in ((0, 2, 1), (0, 1, 2))
    swapped = tuple({0: 2, 2: 0}.get(i, i) for i in res.ranking)
    assert res.ranking <= swapped


def test_enumeration_invariant_to_product_order():
    rng = np.random.default_rng(5)
    for dist in (ValuationDistribution.exponential(1.0), ValuationDistribution.gamma(2, 0.5)):
        inst = random_instance(6, rng, dist)
        perm = rng.permutation(6)
        shuffled = inst.with_(products=tuple(inst.products[i] for i in perm))
        a, b = enumerate_optimal(inst), enumerate_optimal(shuffled)
        assert a.value == pytest.approx(b.value, abs=1e-13)
        assert [perm[i] for i in b.ranking] == list(a.ranking)


def test_limiting_rankings():
    assert enumerate_optimal(default_instance(rho=0.01)).ranking == DESC
    assert enumerate_optimal(default_instance(rho=1.0)).ranking == ASC


def test_double_rank():
    low = double_rank(default_instance(rho=0.1))
    assert low.ranking == DESC and low.evaluations == 2
    assert double_rank(default_instance(rho=1.0)).ranking == ASC
    for rho in np.linspace(0.02, 1, 15):
        inst = default_instance(ValuationDistribution.gamma(2, 0.5), rho=rho)
        assert double_rank(inst).value <= enumerate_optimal(inst).value + 1e-15


def test_double_rank_stable_on_equal_margins():
    inst = Instance.from_arrays([0.1, 0.1, -0.5], None, 0.5)
    assert descending_ranking(inst) == (0, 1, 2)
    assert ascending_ranking(inst) == (2, 0, 1)


def test_surplus_objective_ranks_by_total_surplus():
    inst = default_instance(rho=0.8, objective=Objective.TOTAL_SURPLUS)
    ref, ref_val = brute_force(inst)
    assert enumerate_optimal(inst).value == pytest.approx(ref_val, abs=1e-12)
    con = enumerate_optimal(inst.with_(objective=Objective.CONSUMER_SURPLUS))
    assert con.value == pytest.approx(ref_val, abs=1e-12)


def test_threads_do_not_change_results():
    inst = default_instance(ValuationDistribution.gamma(2, 0.5), rho=0.958)
    assert enumerate_optimal(inst, threads=3) == enumerate_optimal(inst)
    assert gps(inst, threads=3) == gps(inst)
