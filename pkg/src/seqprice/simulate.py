"""Monte-Carlo replay of the consumer's walk through stages or pages.

Episodes are drawn in fixed-size blocks; block ``b`` uses a Philox stream
keyed by ``(seed, b)``, so results do not depend on evaluation order or the
number of worker threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .model import Instance, InvalidInstanceError, validate_ranking
from .web import WebLayout, page_patience

BLOCK = 1 << 16


@dataclass(frozen=True)
class SimReport:
    episodes: int
    seller_mean: float
    seller_se: float
    consumer_mean: float
    consumer_se: float
    buy_freq: tuple[float, ...]
    seed: int
    buy_se: tuple[float, ...] = field(default=())

    def to_dict(self) -> dict:
        return {
            "episodes": self.episodes,
            "seller_mean": self.seller_mean,
            "seller_se": self.seller_se,
            "consumer_mean": self.consumer_mean,
            "consumer_se": self.consumer_se,
            "buy_freq": list(self.buy_freq),
            "buy_se": list(self.buy_se),
            "seed": self.seed,
        }


def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, block])))


def _run_blocks(episodes: int, seed: int, threads: int, run_block):
    if episodes < 1:
        raise InvalidInstanceError("episode count must be positive")
    sizes = [BLOCK] * (episodes // BLOCK)
    if episodes % BLOCK:
        sizes.append(episodes % BLOCK)
    jobs = [(b, size) for b, size in enumerate(sizes)]

    def one(job):
        b, size = job
        return run_block(_block_rng(seed, b), size)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(one, jobs))
    else:
        parts = [one(j) for j in jobs]
    seller = np.concatenate([p[0] for p in parts])
    consumer = np.concatenate([p[1] for p in parts])
    buys = np.concatenate([p[2] for p in parts])
    return seller, consumer, buys


def _report(seller, consumer, buys, seed) -> SimReport:
    n = len(seller)
    freq = buys.mean(axis=0)
    se = lambda x: float(np.std(x, ddof=1) / math.sqrt(n)) if n > 1 else math.nan
    buy_se = np.sqrt(freq * (1.0 - freq) / max(n - 1, 1))
    return SimReport(n, float(np.mean(seller)), se(seller), float(np.mean(consumer)),
                     se(consumer), tuple(float(f) for f in freq), int(seed),
                     tuple(float(s) for s in buy_se))


def _sample_block(dist, rng, shape):
    return dist.sample(rng, shape)


def simulate_va(inst: Instance, ranking: Sequence[int], prices: Sequence[float],
                thresholds: Sequence[float], episodes: int, seed: int,
                threads: int = 1) -> SimReport:
    """Simulate one stage at a time; ``buy_freq`` is per stage, presentation order."""
    ranking = validate_ranking(ranking, inst.n)
    n = inst.n
    if len(prices) != n or len(thresholds) != n:
        raise InvalidInstanceError("prices and thresholds need one entry per stage")
    v = np.array([inst.products[i].v for i in ranking])
    c = np.array([inst.products[i].c for i in ranking])
    p = np.asarray(prices, dtype=float)
    d = np.asarray(thresholds, dtype=float)
    rho = inst.rho

    def run_block(rng, size):
        eps = _sample_block(inst.dist, rng, (size, n, 1))[:, :, 0]
        stay = rng.random((size, n)) < rho
        seller = np.zeros(size)
        consumer = np.zeros(size)
        buys = np.zeros((size, n), dtype=bool)
        alive = np.ones(size, dtype=bool)
        for j in range(n):
            util = v[j] - p[j] + eps[:, j]
            buy = alive & (util >= d[j])
            buys[:, j] = buy
            seller += np.where(buy, p[j] - c[j], 0.0)
            consumer += np.where(buy, util, 0.0)
            # after a rejection the next stage is reached only if evaluation completes
            alive = alive & ~buy & stay[:, j]
        return seller, consumer, buys

    seller, consumer, buys = _run_blocks(episodes, seed, threads, run_block)
    return _report(seller, consumer, buys, seed)


def simulate_web(inst: Instance, layout: WebLayout, ranking: Sequence[int],
                 page_prices: Sequence[Sequence[float]], page_thresholds: Sequence[float],
                 episodes: int, seed: int, threads: int = 1) -> SimReport:
    """Simulate page by page; ``buy_freq`` lists products in presentation order."""
    ranking = validate_ranking(ranking, inst.n)
    k = layout.k
    chunks = [ranking[i:i + k] for i in range(0, inst.n, k)]
    n_pages = len(chunks)
    if len(page_prices) != n_pages or len(page_thresholds) != n_pages:
        raise InvalidInstanceError("need one price vector and one threshold per page")
    for chunk, pp in zip(chunks, page_prices):
        if len(pp) != len(chunk):
            raise InvalidInstanceError("page price vector length does not match the page size")
    rho = page_patience(layout, inst.rho)
    # pad short pages with products that can never be chosen
    v = np.full((n_pages, k), -np.inf)
    c = np.zeros((n_pages, k))
    p = np.zeros((n_pages, k))
    idx = np.full((n_pages, k), np.iinfo(np.int64).max)
    for l, (chunk, pp) in enumerate(zip(chunks, page_prices)):
        for s, (prod, price) in enumerate(zip(chunk, pp)):
            v[l, s], c[l, s], p[l, s], idx[l, s] = (inst.products[prod].v,
                                                     inst.products[prod].c, price, prod)
    # ties in utility go to the lowest product index
    tie_order = np.argsort(idx, axis=1, kind="stable")
    delta = np.asarray(page_thresholds, dtype=float)
    slot_of = [s for l in range(n_pages) for s in range(len(chunks[l]))]
    page_of = [l for l in range(n_pages) for _ in chunks[l]]

    def run_block(rng, size):
        eps = _sample_block(inst.dist, rng, (size, n_pages, k))
        stay = rng.random((size, n_pages)) < rho
        seller = np.zeros(size)
        consumer = np.zeros(size)
        buys = np.zeros((size, inst.n), dtype=bool)
        alive = np.ones(size, dtype=bool)
        for l in range(n_pages):
            util = (v[l] - p[l] + eps[:, l, :])[:, tie_order[l]]
            best = tie_order[l][np.argmax(util, axis=1)]
            u_best = util.max(axis=1)
            buy = alive & (u_best >= delta[l])
            seller += np.where(buy, p[l, best] - c[l, best], 0.0)
            consumer += np.where(buy, u_best, 0.0)
            for col, (pl, s) in enumerate(zip(page_of, slot_of)):
                if pl == l:
                    buys[:, col] = buy & (best == s)
            alive = alive & ~buy & stay[:, l]
        return seller, consumer, buys

    seller, consumer, buys = _run_blocks(episodes, seed, threads, run_block)
    return _report(seller, consumer, buys, seed)
