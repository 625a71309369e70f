import math

import numpy as np
import pytest

from seqprice.distributions import ValuationDistribution
from seqprice.experiments import (DOUBLE_RANK_COLUMNS, SHARE_COLUMNS, SweepSpec, double_rank_efficiency,
                                  fmt, gps_complexity, price_columns, price_vs_patience,
                                  ranking_switch_table, run_sweep, surplus_share_sweep,
                                  sweep_columns, table1_dist, table1_reference, to_csv, write_csv)
from seqprice.model import InvalidInstanceError, default_instance
from seqprice.web import WebLayout

DESC = (5, 4, 3, 2, 1, 0)
ASC = (0, 1, 2, 3, 4, 5)


def test_fmt_and_csv():
    assert fmt(0.1 + 0.2) == "0.3" and fmt(1 / 3) == "0.333333333"
    assert fmt((0, 2, 1)) == "1 3 2" and fmt("va") == "va"
    text = to_csv(["a", "b"], [(1.0, (1, 0)), (2.5e-12, (0, 1))])
    assert text.splitlines() == ["a,b", "1,2 1", "2.5e-12,1 2"]


def test_table1_reference_rows():
    assert table1_reference(0.9) == DESC
    assert table1_reference(0.95) == (5, 4, 3, 2, 0, 1)
    assert table1_reference(1.0) == ASC
    with pytest.raises(ValueError):
        table1_reference(0.947185)


def test_switch_table_partitions_grid():
    inst = default_instance(table1_dist())
    grid = [0.9, 0.95, 0.96, 0.98, 1.0]
    table = ranking_switch_table(inst, grid)
    lo0, _, _ = table.intervals[0]
    _, hi_last, _ = table.intervals[-1]
    assert lo0 == 0.9 and hi_last == 1.0
    for (_, hi, r1), (lo, _, r2) in zip(table.intervals, table.intervals[1:]):
        assert hi == lo and r1 != r2
    for rho, ranking, _ in table.points:
        assert table.ranking_at(rho) == ranking
    assert table.ranking_at(0.9) == DESC and table.ranking_at(1.0) == ASC
    first = table.switches[0]
    assert abs(first - 0.94718) < 0.0005
    with pytest.raises(InvalidInstanceError):
        ranking_switch_table(inst, [])


def test_double_rank_efficiency():
    inst = default_instance(ValuationDistribution.exponential(1.0))
    rows = double_rank_efficiency(inst, [0.01, 0.3, 0.6, 0.9, 0.99, 1.0])
    assert len(rows[0]) == len(DOUBLE_RANK_COLUMNS)
    for rho, dr, opt, ratio, chosen in rows:
        assert 0.95 <= ratio <= 1.0 + 1e-12
    assert rows[0][3] == pytest.approx(1.0, abs=1e-9) and rows[0][4] == "descending"
    assert rows[-1][3] == pytest.approx(1.0, abs=1e-9) and rows[-1][4] == "ascending"


def test_surplus_share_sweep():
    inst = default_instance(rho=0.9)
    rows = surplus_share_sweep([1.0], inst)
    assert len(rows[0]) == len(SHARE_COLUMNS)
    assert rows[0][5] == pytest.approx(0.5, abs=1e-12)
    grid = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0]
    va = [r[5] for r in surplus_share_sweep(grid, inst.with_(rho=0.5))]
    assert all(b >= a - 1e-12 for a, b in zip(va, va[1:]))


def test_web_share_exceeds_sequential_share():
    inst = default_instance(rho=0.9)
    layouts = [WebLayout(2, 1.0), WebLayout(3, 3.0)]
    rows = surplus_share_sweep([0.5, 2.0], inst, layouts)
    for a in (0.5, 2.0):
        mine = [r for r in rows if r[0] == a]
        va_share = next(r[5] for r in mine if r[1] == "va")
        assert all(r[5] > va_share for r in mine if r[1] == "web")


def test_gps_complexity():
    rows = gps_complexity([1, 3, 5], trials=6, seed=0)
    assert rows[0][2] == 1.0 and rows[0][3] == 1.0
    for n, trials, iters, evals, n_enum, ratio, optimal in rows:
        assert trials == 6 and optimal
        assert n_enum == math.factorial(n)
        assert evals == pytest.approx(1 + iters * math.comb(n, 2))
    assert gps_complexity([4], 5, seed=2) == gps_complexity([4], 5, seed=2)


def test_price_vs_patience():
    inst = default_instance()
    rows = price_vs_patience(inst, [0.1, 0.5, 0.9, 1.0])
    assert len(rows[0]) == len(price_columns(6))
    assert [r[1] for r in rows[:3]] == [DESC] * 3 and rows[3][1] == ASC
    assert [r[2] for r in rows] == [0, 0, 0, 1]
    for a, b in zip(rows[:2], rows[1:3]):
        # product 1 is shown last and always sells at the bare monopoly price
        assert a[3] == b[3] == pytest.approx(1.0, abs=1e-9)
        assert all(pb > pa for pa, pb in zip(a[4:9], b[4:9]))


def test_prices_nondecreasing_within_constant_ranking():
    inst = default_instance(table1_dist())
    rows = price_vs_patience(inst, np.linspace(0.5, 0.94, 12))
    assert len({r[1] for r in rows}) == 1
    for a, b in zip(rows, rows[1:]):
        assert all(pb >= pa - 1e-12 for pa, pb in zip(a[3:9], b[3:9]))


def test_sweep_spec_validation():
    inst = default_instance()
    for bad in (dict(parameter="alpha", grid=[1.0]), dict(parameter="rho", grid=[]),
                dict(parameter="rho", grid=[1.5]), dict(parameter="k", grid=[1.5]),
                dict(parameter="kappa", grid=[0.5]), dict(parameter="gamma_shape", grid=[0.0]),
                dict(parameter="rho", grid=[0.5], algorithms=["anneal"]),
                dict(parameter="rho", grid=[0.5], outputs=["plots"])):
        with pytest.raises(InvalidInstanceError):
            SweepSpec(instance=inst, **bad)
    with pytest.raises(InvalidInstanceError):
        SweepSpec.from_dict({"grid": [0.5]}, inst)
    spec = SweepSpec.from_dict({"parameter": "k", "grid": [1, 2]}, inst)
    assert spec.layout == WebLayout(2)


def test_run_sweep_rows_and_reproducibility(tmp_path):
    inst = default_instance()
    spec = SweepSpec("rho", [0.9, 0.1, 1.0], inst, ["enum", "gps", "double-rank", "web"],
                     ["ranking", "values", "shares", "prices"], WebLayout(2))
    cols = sweep_columns(spec)
    rows = run_sweep(spec)
    assert len(rows) == 12 and all(len(r) == len(cols) for r in rows)
    assert [r[1] for r in rows] == sorted(r[1] for r in rows)
    by = {(r[1], r[2]): r for r in rows}
    assert by[(1.0, "enum")][3] == ASC and by[(0.1, "double-rank")][3] == DESC
    assert by[(0.9, "gps")][4] == pytest.approx(by[(0.9, "enum")][4], abs=1e-12)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    write_csv(a, cols, rows)
    write_csv(b, cols, run_sweep(spec, threads=3))
    assert a.read_bytes() == b.read_bytes()


def test_sweep_over_page_size_and_shape():
    inst = default_instance(rho=0.8)
    rows = run_sweep(SweepSpec("k", [1, 2, 3], inst, ["web"], ["values"]))
    assert len(rows) == 3
    enum_k1 = run_sweep(SweepSpec("rho", [0.8], inst, ["enum"], ["values"]))
    # one product per page with kappa = 1 reproduces the sequential model
    assert rows[0][3] == pytest.approx(enum_k1[0][3], abs=1e-8)
    shapes = run_sweep(SweepSpec("gamma_shape", [1.0, 2.0], inst, ["enum"], ["shares"]))
    assert shapes[0][3] == pytest.approx(0.5, abs=1e-12)
