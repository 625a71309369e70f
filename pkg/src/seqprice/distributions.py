"""Private-valuation laws and the tail functionals the equilibria need."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import integrate, special

from .optimize import maximize_scalar

EXPONENTIAL = "exponential"
GAMMA = "gamma"

# upper quantile used to size price search brackets
_BRACKET_TAIL = 1e-6


class DegenerateTailError(ValueError):
    """The survival probability at the conditioning point underflowed."""


@dataclass(frozen=True)
class ValuationDistribution:
    """Law of the private valuation ``eps >= 0``.

    Build with :meth:`exponential` (rate ``alpha``) or :meth:`gamma`
    (``shape``, ``scale``). All numeric methods broadcast over numpy arrays.
    """

    kind: str
    alpha: Optional[float] = None
    shape: Optional[float] = None
    scale: Optional[float] = None

    def __post_init__(self):
        if self.kind == EXPONENTIAL:
            if self.alpha is None or not self.alpha > 0 or not math.isfinite(self.alpha):
                raise ValueError("exponential rate alpha must be a positive finite number")
        elif self.kind == GAMMA:
            for name in ("shape", "scale"):
                val = getattr(self, name)
                if val is None or not val > 0 or not math.isfinite(val):
                    raise ValueError(f"gamma {name} must be a positive finite number")
        else:
            raise ValueError(f"unknown distribution type {self.kind!r}")

    @classmethod
    def exponential(cls, alpha: float = 1.0) -> "ValuationDistribution":
        return cls(EXPONENTIAL, alpha=float(alpha))

    @classmethod
    def gamma(cls, shape: float, scale: float) -> "ValuationDistribution":
        return cls(GAMMA, shape=float(shape), scale=float(scale))

    @property
    def is_exponential(self) -> bool:
        return self.kind == EXPONENTIAL

    @property
    def rate(self) -> float:
        """Exponential rate; Gamma(1, b) counts as exponential with rate 1/b."""
        if self.kind == EXPONENTIAL:
            return self.alpha
        if self.shape == 1.0:
            return 1.0 / self.scale
        raise ValueError("distribution has no exponential rate")

    @property
    def mean(self) -> float:
        if self.kind == EXPONENTIAL:
            return 1.0 / self.alpha
        return self.shape * self.scale

    @property
    def variance(self) -> float:
        if self.kind == EXPONENTIAL:
            return 1.0 / self.alpha ** 2
        return self.shape * self.scale ** 2

    def survival(self, t):
        """``1 - F(t)``; equals 1 on ``t <= 0``."""
        t = np.asarray(t, dtype=float)
        pos = np.maximum(t, 0.0)
        if self.kind == EXPONENTIAL:
            out = np.exp(-self.alpha * pos)
        else:
            out = special.gammaincc(self.shape, pos / self.scale)
        return _scalar_or_array(np.where(t <= 0.0, 1.0, out))

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        pos = np.maximum(t, 0.0)
        if self.kind == EXPONENTIAL:
            out = -np.expm1(-self.alpha * pos)
        else:
            out = special.gammainc(self.shape, pos / self.scale)
        return _scalar_or_array(np.where(t <= 0.0, 0.0, out))

    def density(self, t):
        t = np.asarray(t, dtype=float)
        pos = np.maximum(t, 0.0)
        if self.kind == EXPONENTIAL:
            out = self.alpha * np.exp(-self.alpha * pos)
            return _scalar_or_array(np.where(t < 0.0, 0.0, out))
        a, b = self.shape, self.scale
        with np.errstate(divide="ignore"):
            logf = (a - 1.0) * np.log(pos) - pos / b - special.gammaln(a) - a * math.log(b)
        out = np.exp(logf)
        if a == 1.0:
            out = np.where(t == 0.0, 1.0 / b, out)
        return _scalar_or_array(np.where(t < 0.0, 0.0, out))

    def upper_quantile(self, tail: float) -> float:
        """Point ``q`` with ``survival(q) = tail``."""
        if self.kind == EXPONENTIAL:
            return -math.log(tail) / self.alpha
        return float(self.scale * special.gammainccinv(self.shape, tail))

    def expected_excess(self, t):
        """``E[(eps - t)^+]``, the integral of the survival function above ``t``."""
        t_arr = np.asarray(t, dtype=float)
        if self.kind == EXPONENTIAL:
            out = np.where(t_arr <= 0.0, self.mean - t_arr,
                           np.exp(-self.alpha * np.maximum(t_arr, 0.0)) / self.alpha)
            return _scalar_or_array(out)
        out = np.vectorize(self._gamma_excess, otypes=[float])(t_arr)
        return _scalar_or_array(out)

    def _gamma_excess(self, t: float) -> float:
        a, b = self.shape, self.scale
        if t <= 0.0:
            return a * b - t
        x = t / b
        upper = special.gammaincc(a + 1.0, x)
        lower = special.gammaincc(a, x)
        val = a * b * upper - t * lower
        # deep tail: the two terms nearly cancel, integrate the survival instead
        if val <= 1e-6 * a * b * upper:
            val, _ = integrate.quad(lambda s: special.gammaincc(a, s / b), t, np.inf,
                                    epsabs=0.0, epsrel=1e-10, limit=200)
        return float(val)

    def conditional_tail_mean(self, t: float) -> float:
        """``E[eps | eps >= t]``."""
        t = float(t)
        if t <= 0.0:
            return self.mean
        surv = float(self.survival(t))
        if surv < 1e-300:
            raise DegenerateTailError(f"survival at t={t} is {surv:.3g}; conditional mean undefined")
        if self.kind == EXPONENTIAL:
            return t + 1.0 / self.alpha
        return t + float(self.expected_excess(t)) / surv

    def sample(self, rng: np.random.Generator, size):
        if self.kind == EXPONENTIAL:
            return rng.exponential(1.0 / self.alpha, size)
        return rng.gamma(self.shape, self.scale, size)

    def to_dict(self) -> dict:
        if self.kind == EXPONENTIAL:
            return {"type": EXPONENTIAL, "alpha": self.alpha}
        return {"type": GAMMA, "shape": self.shape, "scale": self.scale}

    @classmethod
    def from_dict(cls, data: dict) -> "ValuationDistribution":
        kind = str(data.get("type", "")).lower()
        if kind == EXPONENTIAL:
            return cls.exponential(data.get("alpha", 1.0))
        if kind == GAMMA:
            if "shape" not in data or "scale" not in data:
                raise ValueError("gamma distribution needs 'shape' and 'scale'")
            return cls.gamma(data["shape"], data["scale"])
        raise ValueError(f"unknown distribution type {data.get('type')!r}")

    def __str__(self):
        if self.kind == EXPONENTIAL:
            return f"Exp({self.alpha:g})"
        return f"Gamma({self.shape:g}, {self.scale:g})"


def _scalar_or_array(x):
    x = np.asarray(x)
    return float(x) if x.ndim == 0 else x


def price_search_bracket(d: ValuationDistribution, v: float, c: float) -> tuple[float, float]:
    """Price interval that contains every profit maximizer of a single offer."""
    return c, c + d.upper_quantile(_BRACKET_TAIL) + abs(v) + 1.0


def monopoly_price(d: ValuationDistribution, v: float, c: float) -> tuple[float, float]:
    """Take-it-or-leave-it price for one product and the expected profit it earns."""
    if d.is_exponential:
        # c + 1/alpha unless the sure-sale kink p = v is already past it
        p = max(c + 1.0 / d.alpha, v)
        return p, float(d.survival(p - v)) * (p - c)
    lo, hi = price_search_bracket(d, v, c)

    def profit(p):
        return d.survival(np.asarray(p) - v) * (np.asarray(p) - c)

    def dprofit(p):
        return float(d.survival(p - v) - d.density(p - v) * (p - c))

    return maximize_scalar(profit, lo, hi, fprime=dprofit)
