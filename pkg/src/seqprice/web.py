"""Page-based presentation: k products per page, one joint price vector per page.

Inside a page the consumer draws all private valuations, picks the product
with the highest net utility and buys it if that utility clears the page
threshold. Page quantities are computed in the shifted variables
``y_i = p_i - v_i + delta``: product ``i`` is bought iff ``eps_i >= y_i`` and
``eps_i - y_i >= eps_j - y_j`` for every other product ``j`` on the page.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product as cartesian
from typing import Optional, Sequence

import numpy as np
from scipy import integrate, optimize, special

from .distributions import ValuationDistribution
from .equilibrium import StageSolver
from .model import Instance, InvalidInstanceError, Objective, Product, validate_ranking
from .optimize import ConvergenceError, brent_max, damped_fixed_point


class QuadratureError(ConvergenceError):
    """A purchase-probability integral did not reach its tolerance."""


@dataclass(frozen=True)
class WebLayout:
    """Page geometry and clock rates.

    ``k`` products per page, acceleration ``kappa`` in ``[1, k]``. A page is
    evaluated at rate ``kappa * tau_p / k`` against the departure rate
    ``tau_c``. When the rates are omitted the page patience is derived from
    the instance's per-product patience (``tau_p = rho``, ``tau_c = 1 - rho``);
    ``rho_page`` overrides both.
    """

    k: int
    kappa: float = 1.0
    tau_p: Optional[float] = None
    tau_c: Optional[float] = None
    rho_page: Optional[float] = None

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise InvalidInstanceError(f"products per page k must be a positive integer, got {self.k}")
        object.__setattr__(self, "k", int(self.k))
        if not (1.0 <= self.kappa <= self.k):
            raise InvalidInstanceError(f"acceleration kappa must lie in [1, k={self.k}], got {self.kappa}")
        if (self.tau_p is None) != (self.tau_c is None):
            raise InvalidInstanceError("tau_p and tau_c must be given together")
        if self.tau_p is not None and not (self.tau_p > 0 and self.tau_c >= 0):
            raise InvalidInstanceError("tau_p must be positive and tau_c nonnegative")
        if self.rho_page is not None and not (0.0 <= self.rho_page <= 1.0):
            raise InvalidInstanceError(f"rho_page must lie in [0, 1], got {self.rho_page}")

    def n_pages(self, n_products: int) -> int:
        return -(-n_products // self.k)

    def to_dict(self) -> dict:
        out = {"k": self.k, "kappa": self.kappa}
        if self.tau_p is not None:
            out.update(tau_p=self.tau_p, tau_c=self.tau_c)
        if self.rho_page is not None:
            out["rho_page"] = self.rho_page
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "WebLayout":
        try:
            return cls(int(data["k"]), float(data.get("kappa", 1.0)),
                       _opt_float(data.get("tau_p")), _opt_float(data.get("tau_c")),
                       _opt_float(data.get("rho_page")))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InvalidInstanceError):
                raise
            raise InvalidInstanceError(f"malformed web layout: {exc}") from None


def _opt_float(x):
    return None if x is None else float(x)


def page_patience(layout: WebLayout, rho: Optional[float] = None) -> float:
    """Probability that a page evaluation finishes before the consumer leaves."""
    if layout.rho_page is not None:
        return layout.rho_page
    if layout.tau_p is not None:
        tau_p, tau_c = layout.tau_p, layout.tau_c
    elif rho is not None:
        tau_p, tau_c = rho, 1.0 - rho
    else:
        raise InvalidInstanceError("page patience needs clock rates, rho_page or a product patience")
    fast = layout.kappa * tau_p
    return fast / (fast + layout.k * tau_c)


# ---------------------------------------------------------------- quadrature

def _tanh_sinh_rule(h: float, t_max: float):
    t = np.arange(-round(t_max / h), round(t_max / h) + 1) * h
    u = 0.5 * math.pi * np.sinh(t)
    # distance of each node to the nearer endpoint of [-1, 1], without cancellation
    gap = 2.0 / (np.exp(2.0 * np.abs(u)) + 1.0)
    w = h * 0.5 * math.pi * np.cosh(t) / np.cosh(u) ** 2
    return np.sign(t), gap, w


def _exp_sinh_rule(h: float, t_lo: float, t_hi: float):
    t = np.arange(round(t_lo / h), round(t_hi / h) + 1) * h
    r = np.exp(0.5 * math.pi * np.sinh(t))
    w = h * 0.5 * math.pi * np.cosh(t) * r
    return r, w


# fine rules; every other node gives the coarse rule used for the error estimate
_TS_SIDE, _TS_GAP, _TS_W = _tanh_sinh_rule(1.0 / 16.0, 3.25)
_ES_R, _ES_W = _exp_sinh_rule(1.0 / 16.0, -4.5, 4.0)
_QUAD_TOL = 1e-10


class _PageKernel:
    """Density and CDF of the valuation law on arrays, without range checks."""

    def __init__(self, dist: ValuationDistribution):
        self.dist = dist
        self.spread = dist.mean  # length scale of the tail map
        if dist.is_exponential:
            self.scale = 1.0 / dist.alpha
        else:
            self.scale = dist.scale
            self._a = dist.shape
            self._lognorm = special.gammaln(dist.shape) + dist.shape * math.log(dist.scale)

    def pdf(self, x):
        if self.dist.is_exponential:
            return self.dist.alpha * np.exp(-self.dist.alpha * x)
        with np.errstate(divide="ignore"):
            return np.exp((self._a - 1.0) * np.log(x) - x / self.scale - self._lognorm)

    def cdf(self, z):
        z = np.maximum(z, 0.0)
        if self.dist.is_exponential:
            return -np.expm1(-self.dist.alpha * z)
        return special.gammainc(self._a, z / self.scale)


def _lower_limits(y: np.ndarray) -> np.ndarray:
    # product i can win only if eps_i >= y_i and eps_i - y_i >= -y_j, i.e. eps_j >= 0
    return np.maximum(0.0, np.maximum(y, y - y.min()))


def _page_integrals_closed(y: np.ndarray, alpha: float):
    """Exponential law: inclusion-exclusion over the rival products."""
    k = len(y)
    P, X = np.empty(k), np.empty(k)
    L = _lower_limits(y)
    subsets = np.array(list(cartesian((0, 1), repeat=k - 1)), dtype=float).reshape(2 ** (k - 1), k - 1)
    s = subsets.sum(axis=1)
    sign = np.where(s % 2 == 0, 1.0, -1.0)
    for i in range(k):
        rivals = np.delete(y, i) - y[i] + L[i]  # L + d_j >= 0
        expo = np.exp(-alpha * (L[i] + subsets @ rivals))
        P[i] = np.sum(sign * expo / (1.0 + s))
        X[i] = np.sum(sign * expo * (L[i] / (1.0 + s) + 1.0 / (alpha * (1.0 + s) ** 2)))
    return P, X


def _page_integrals_de(y: np.ndarray, kern: _PageKernel):
    """Double-exponential quadrature split at every kink of the integrand."""
    k = len(y)
    P, X = np.empty(k), np.empty(k)
    L = _lower_limits(y)
    for i in range(k):
        shifts = np.delete(y, i) - y[i]  # rival j enters through F(x + shift_j)
        kinks = np.unique(-shifts[-shifts > L[i]])
        edges = np.concatenate(([L[i]], kinks))
        xs, ws = [], []
        for a, b in zip(edges[:-1], edges[1:]):
            half = 0.5 * (b - a)
            xs.append(np.where(_TS_SIDE < 0, a + half * _TS_GAP, b - half * _TS_GAP))
            ws.append(half * _TS_W)
        xs.append(edges[-1] + kern.spread * _ES_R)
        ws.append(kern.spread * _ES_W)
        x = np.concatenate(xs)
        w = np.concatenate(ws)
        g = kern.pdf(x)
        for sh in shifts:
            g = g * kern.cdf(x + sh)
        g = np.where(np.isfinite(g), g, 0.0)
        wg = w * g
        p_fine, x_fine = wg.sum(), (wg * x).sum()
        # coarse estimate from every other node (node counts are odd per segment)
        coarse_mask = _coarse_mask(len(edges) - 1)
        p_coarse = 2.0 * wg[coarse_mask].sum()
        x_coarse = 2.0 * (wg * x)[coarse_mask].sum()
        err = max(abs(p_fine - p_coarse), abs(x_fine - x_coarse) / max(1.0, abs(x_fine)))
        if err > 1e3 * _QUAD_TOL:
            raise QuadratureError(f"page purchase integral for product {i + 1} not resolved "
                                  f"(estimated error {err:.2e})", best=p_fine, residual=err)
        P[i], X[i] = p_fine, x_fine
    return P, X


_COARSE_CACHE: dict[int, np.ndarray] = {}


def _coarse_mask(n_finite: int) -> np.ndarray:
    if n_finite not in _COARSE_CACHE:
        ts = (np.arange(len(_TS_W)) - len(_TS_W) // 2) % 2 == 0
        es_start = int(round(-4.5 * 16))
        es = (np.arange(len(_ES_W)) + es_start) % 2 == 0
        _COARSE_CACHE[n_finite] = np.concatenate([ts] * n_finite + [es])
    return _COARSE_CACHE[n_finite]


def _page_integrals_quad(y: np.ndarray, kern: _PageKernel):
    """Reference route: scipy's adaptive Gauss-Kronrod quadrature."""
    k = len(y)
    P, X = np.empty(k), np.empty(k)
    L = _lower_limits(y)
    for i in range(k):
        shifts = np.delete(y, i) - y[i]

        def g(x, shifts=shifts):
            val = kern.pdf(np.array([x]))[0]
            for sh in shifts:
                val *= float(kern.cdf(x + sh))
            return val

        kinks = sorted(set(float(-sh) for sh in shifts if -sh > L[i]))
        edges = [float(L[i])] + kinks
        p = xm = 0.0
        for a, b in zip(edges[:-1], edges[1:]):
            p += integrate.quad(g, a, b, epsabs=0.0, epsrel=_QUAD_TOL, limit=200)[0]
            xm += integrate.quad(lambda t: t * g(t), a, b, epsabs=0.0, epsrel=_QUAD_TOL,
                                 limit=200)[0]
        p += integrate.quad(g, edges[-1], np.inf, epsabs=1e-14, epsrel=_QUAD_TOL, limit=200)[0]
        xm += integrate.quad(lambda t: t * g(t), edges[-1], np.inf, epsabs=1e-14,
                             epsrel=_QUAD_TOL, limit=200)[0]
        P[i], X[i] = p, xm
    return P, X


def page_integrals(y, dist: ValuationDistribution, method: str = "auto"):
    """Purchase probabilities ``P_i`` and first moments ``E[eps_i; i bought]``.

    ``method`` is ``"closed"`` (exponential only), ``"de"`` (double-exponential
    quadrature), ``"quad"`` (adaptive reference) or ``"auto"``.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if method == "auto":
        method = "closed" if dist.is_exponential else "de"
    if method == "closed":
        if not dist.is_exponential:
            raise ValueError("closed-form page probabilities require exponential valuations")
        return _page_integrals_closed(y, dist.alpha)
    kern = _PageKernel(dist)
    if method == "de":
        return _page_integrals_de(y, kern)
    if method == "quad":
        return _page_integrals_quad(y, kern)
    raise ValueError(f"unknown integration method {method!r}")


def page_purchase_probs(page_products: Sequence[Product], prices: Sequence[float],
                        threshold: float, d: ValuationDistribution,
                        method: str = "auto") -> np.ndarray:
    if len(page_products) != len(prices) or not page_products:
        raise InvalidInstanceError("page products and prices must be nonempty and of equal length")
    y = np.array([p - prod.v + threshold for prod, p in zip(page_products, prices)])
    return page_integrals(y, d, method)[0]


# ---------------------------------------------------------- two-product page

def two_product_fixed_point(v1: float, v2: float, *, damping: float = 0.5,
                            max_iter: int = 100_000) -> tuple[float, float]:
    """Joint profit-maximizing prices of a lone two-product page.

    Exp(1) valuations, zero costs and no continuation. Each first-order
    condition gives one price as a function of the other,
    ``p1 = 1 + p2 / (2 exp(p2 - v2) - 1)`` and symmetrically for ``p2``.
    """
    def rhs(p):
        p1, p2 = p
        return np.array([1.0 + p2 / (2.0 * math.exp(p2 - v2) - 1.0),
                         1.0 + p1 / (2.0 * math.exp(p1 - v1) - 1.0)])

    try:
        p, _ = damped_fixed_point(rhs, np.array([1.5, 1.5]), damping=damping, max_iter=max_iter)
    except (OverflowError, ZeroDivisionError):
        raise ConvergenceError(f"two-product iteration diverged at v=({v1}, {v2})") from None
    return float(p[0]), float(p[1])


def two_product_foc_residuals(v1: float, v2: float, p1: float, p2: float) -> tuple[float, float]:
    return (p1 - 1.0 - p2 / (2.0 * math.exp(p2 - v2) - 1.0),
            p2 - 1.0 - p1 / (2.0 * math.exp(p1 - v1) - 1.0))


# ------------------------------------------------------------ page optimizer

@dataclass(frozen=True)
class PageEquilibrium:
    products: tuple[int, ...]
    prices: tuple[float, ...]
    buy_probs: tuple[float, ...]
    threshold: float
    v_seller: float
    v_consumer: float
    residual: float = 0.0

    def to_dict(self) -> dict:
        return {
            "products": [i + 1 for i in self.products],
            "prices": list(self.prices),
            "buy_probs": list(self.buy_probs),
            "threshold": self.threshold,
            "v_seller": self.v_seller,
            "v_consumer": self.v_consumer,
        }


@dataclass(frozen=True)
class WebEquilibriumResult:
    pages: tuple[PageEquilibrium, ...]
    rho_page: float
    layout: WebLayout

    @property
    def seller_value(self) -> float:
        return self.pages[0].v_seller

    @property
    def consumer_value(self) -> float:
        return self.pages[0].v_consumer

    @property
    def total_value(self) -> float:
        return self.seller_value + self.consumer_value

    def to_dict(self) -> dict:
        return {
            "layout": self.layout.to_dict(),
            "rho_page": self.rho_page,
            "seller_value": self.seller_value,
            "consumer_value": self.consumer_value,
            "total_value": self.total_value,
            "pages": [pg.to_dict() for pg in self.pages],
        }


class PageProblem:
    """Seller's gain on one page as a function of the shifted prices ``y``."""

    def __init__(self, products: Sequence[Product], delta: float, cont: float,
                 dist: ValuationDistribution, method: str = "auto"):
        self.v = np.array([p.v for p in products])
        self.c = np.array([p.c for p in products])
        self.delta, self.cont = delta, cont
        self.margin = self.v - delta - self.c - cont
        self.dist, self.method = dist, method

    def gain(self, y) -> float:
        P, _ = page_integrals(y, self.dist, self.method)
        return float(np.dot(P, np.asarray(y) + self.margin))

    def prices(self, y) -> np.ndarray:
        return np.asarray(y) + self.v - self.delta

    def outcome(self, y):
        y = np.asarray(y, dtype=float)
        P, X = page_integrals(y, self.dist, self.method)
        v_seller = self.cont + float(np.dot(P, y + self.margin))
        v_consumer = self.delta + float(np.sum(X - y * P))
        return P, v_seller, v_consumer


_N_STARTS = 8
_STEP_TOL = 1e-9


def _starts(prob: PageProblem, seed: int) -> list[np.ndarray]:
    """Cost-plus starting points: symmetric markups, then jittered copies."""
    mean = prob.dist.mean
    base = prob.c + prob.cont - prob.v + prob.delta  # y at price = cost + continuation
    rng = np.random.default_rng(seed)
    out = [base + mean * s for s in (1.0, 0.5, 1.5, 2.0)]
    for _ in range(_N_STARTS - len(out)):
        out.append(base + mean * (1.0 + rng.uniform(-0.5, 0.5, size=len(base))))
    return out


def _fd_grad_hess(f, y: np.ndarray, f0: float):
    k = len(y)
    hg = 1e-5 * np.maximum(1.0, np.abs(y))
    hh = 1e-4 * np.maximum(1.0, np.abs(y))
    g = np.empty(k)
    H = np.empty((k, k))
    for i in range(k):
        e = np.zeros(k)
        e[i] = hg[i]
        g[i] = (f(y + e) - f(y - e)) / (2.0 * hg[i])
        e[i] = hh[i]
        H[i, i] = (f(y + e) - 2.0 * f0 + f(y - e)) / hh[i] ** 2
        for j in range(i):
            ej = np.zeros(k)
            ej[j] = hh[j]
            H[i, j] = H[j, i] = (f(y + e + ej) - f(y + e - ej) - f(y - e + ej)
                                 + f(y - e - ej)) / (4.0 * hh[i] * hh[j])
    return g, H


def _coordinate_sweep(f, y: np.ndarray, radius: float) -> np.ndarray:
    y = y.copy()
    for i in range(len(y)):
        def along(t, i=i):
            z = y.copy()
            z[i] = t
            return f(z)
        lo, hi = y[i] - radius, y[i] + radius
        while True:
            t, _ = brent_max(along, lo, hi, xtol=1e-12)
            if lo < t < hi:
                break
            width = hi - lo
            lo, hi = (lo - width, lo + 1e-3 * width) if t <= lo else (hi - 1e-3 * width, hi + width)
        y[i] = t
    return y


def _polish(f, y: np.ndarray, scale: float, max_iter: int = 60):
    """Newton on finite-difference derivatives, falling back to coordinate sweeps."""
    fy = f(y)
    step_norm = math.inf
    for _ in range(max_iter):
        g, H = _fd_grad_hess(f, y, fy)
        y_new = None
        try:
            np.linalg.cholesky(-H)
            step = np.linalg.solve(H, -g)
            for _ in range(30):
                cand = y + step
                fc = f(cand)
                if fc >= fy - 1e-13 * max(1.0, abs(fy)):
                    y_new, f_new = cand, fc
                    break
                step = 0.5 * step
        except np.linalg.LinAlgError:
            pass
        if y_new is None:
            y_new = _coordinate_sweep(f, y, 0.1 * scale)
            f_new = f(y_new)
            if f_new < fy:
                y_new, f_new = y, fy
        step_norm = float(np.max(np.abs(y_new - y)))
        y, fy = y_new, max(f_new, fy)
        if step_norm < _STEP_TOL:
            return y, fy, step_norm
    raise ConvergenceError(f"page price polish stalled (last step {step_norm:.2e})",
                           best=y, residual=step_norm)


def optimize_page(prob: PageProblem, seed: int = 0) -> tuple[np.ndarray, float, float, float]:
    """Maximize the page gain; returns ``(y, gain, start_gain, residual)``.

    ``start_gain`` is the gain at the symmetric cost-plus start, which the
    result never falls below.
    """
    f = prob.gain
    results = []
    start_gain = None
    for y0 in _starts(prob, seed):
        f0 = f(y0)
        if start_gain is None:
            start_gain = f0
        res = optimize.minimize(lambda z: -f(z), y0, method="BFGS",
                                options={"gtol": 1e-9, "maxiter": 400})
        y, fy = (res.x, -res.fun) if -res.fun >= f0 else (y0, f0)
        results.append((fy, tuple(prob.prices(y)), y))
    # highest gain first; exact ties to the lexicographically smallest price vector
    results.sort(key=lambda r: (-r[0], r[1]))
    y, fy, resid = _polish(f, np.asarray(results[0][2], dtype=float), prob.dist.mean)
    return y, fy, start_gain, resid


def solve_web_given_ranking(inst: Instance, layout: WebLayout, ranking: Sequence[int], *,
                            method: str = "auto", seed: int = 0) -> WebEquilibriumResult:
    """Backward induction over pages for the profit-maximizing seller."""
    if inst.objective is not Objective.PROFIT:
        raise InvalidInstanceError("web pricing is defined for the profit-maximizing objective only")
    ranking = validate_ranking(ranking, inst.n)
    rho_page = page_patience(layout, inst.rho)
    stage_solver = StageSolver(inst.dist, rho_page, Objective.PROFIT)
    pages: list[PageEquilibrium] = []
    vp = vc = 0.0
    chunks = [ranking[i:i + layout.k] for i in range(0, inst.n, layout.k)]
    for chunk in reversed(chunks):
        prods = [inst.products[i] for i in chunk]
        delta, cont = rho_page * vc, rho_page * vp
        if len(chunk) == 1:
            st = stage_solver.solve(chunk[0], prods[0].v, prods[0].c, vp, vc)
            page = PageEquilibrium(tuple(chunk), (st.price,), (st.buy_prob,), st.threshold,
                                   st.v_seller, st.v_consumer)
        else:
            prob = PageProblem(prods, delta, cont, inst.dist, method)
            y, _, _, resid = optimize_page(prob, seed)
            P, vs, vcons = prob.outcome(y)
            page = PageEquilibrium(tuple(chunk), tuple(float(p) for p in prob.prices(y)),
                                   tuple(float(p) for p in P), delta, vs, vcons, resid)
        pages.append(page)
        vp, vc = page.v_seller, page.v_consumer
    return WebEquilibriumResult(tuple(reversed(pages)), rho_page, layout)
