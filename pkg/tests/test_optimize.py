import math

import numpy as np
import pytest
from scipy import optimize

from seqprice.optimize import ConvergenceError, brent_max, damped_fixed_point, maximize_scalar


def test_brent_max_smooth():
    x, fx = brent_max(lambda x: -(x - 0.3) ** 2, -2, 5)
    assert abs(x - 0.3) < 1e-8 and fx == pytest.approx(0, abs=1e-15)


def test_brent_max_boundary_maximum():
    x, fx = brent_max(lambda x: x, 0, 1)
    assert x == 1 and fx == 1
    x, _ = brent_max(lambda x: -x, 0, 1)
    assert x == 0


def test_maximize_scalar_finds_global_peak():
    f = lambda x: np.sin(3 * x) + 0.1 * x
    x, fx = maximize_scalar(f, 0, 10)
    grid = np.linspace(0, 10, 2_000_001)
    assert fx >= f(grid).max() - 1e-12


def test_maximize_scalar_derivative_polish():
    f = lambda x: np.exp(-x) * (x + 0.25)
    x, _ = maximize_scalar(f, 0, 20, fprime=lambda x: math.exp(-x) * (1 - x - 0.25))
    assert abs(x - 0.75) < 1e-12


def test_maximize_scalar_ties_to_smaller_argument():
    x, _ = maximize_scalar(lambda x: np.zeros_like(np.asarray(x, float)), 0, 1)
    assert x == 0


def test_maximize_scalar_against_fminbound():
    rng = np.random.default_rng(5)
    for _ in range(50):
        a, b = rng.uniform(0.5, 3, 2)
        f = lambda x: x ** a * np.exp(-b * x)
        x, _ = maximize_scalar(f, 0, 40)
        assert abs(x - a / b) < 1e-7
        assert abs(x - optimize.fminbound(lambda t: -f(t), 0, 40, xtol=1e-10)) < 1e-5


def test_damped_fixed_point():
    x, it = damped_fixed_point(lambda x: np.cos(x), np.array([1.0]))
    assert abs(x[0] - math.cos(x[0])) < 1e-13 and it > 1


def test_damped_fixed_point_failure_reports_iterate():
    with pytest.raises(ConvergenceError) as err:
        damped_fixed_point(lambda x: x + 1.0, np.array([0.0]), max_iter=10)
    assert err.value.best is not None and err.value.residual == pytest.approx(0.5)
