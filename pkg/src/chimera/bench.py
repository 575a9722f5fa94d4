"""Fixed-iteration timing of the dense factorization and a quadratic fit of time vs n."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np

from .factorization import DivergenceError, Hyperparameters, fit, sample_active_mask
from .synthetic import SyntheticConfig, generate

logger = logging.getLogger(__name__)

#: Settings of the scaling experiment: T=3, k=2, 1000 iterations.
BENCH_HYPERPARAMETERS = Hyperparameters(
    alpha=0.001, beta=0.001, lambda1=0.005, lambda2=0.001, rank=2, max_iters=1000, tol=0.0, neg_sample_ratio=0.0
)


@dataclass
class BenchPoint:
    n: int
    seconds: float
    iterations: int
    alpha: float


@dataclass
class BenchResult:
    points: List[BenchPoint]
    coefficients: np.ndarray  # (a, b, c) of a*n^2 + b*n + c
    r2: float
    terms_at_max: dict = field(default_factory=dict)

    @property
    def quadratic_dominates(self) -> bool:
        terms = self.terms_at_max
        return terms["quadratic"] > abs(terms["linear"]) + abs(terms["constant"])


def quadratic_fit(sizes, seconds):
    """Least-squares degree-2 polynomial and its coefficient of determination."""
    x = np.asarray(sizes, dtype=np.float64)
    y = np.asarray(seconds, dtype=np.float64)
    coef = np.polyfit(x, y, 2)
    resid = y - np.polyval(coef, x)
    ss_tot = ((y - y.mean()) ** 2).sum()
    r2 = 1.0 - (resid**2).sum() / ss_tot if ss_tot > 0 else 1.0
    return coef, float(r2)


def time_fit(n: int, hp: Hyperparameters, T: int = 3, edges_per_node: int = 4, seed: int = 0, max_halvings: int = 10):
    """Wall time of ``hp.max_iters`` dense iterations on a synthetic network of n nodes.

    Only the final run is timed when a diverging step size had to be halved.
    """
    data = generate(SyntheticConfig(n=n, m=min(edges_per_node * n, n * (n - 1) // 2), T=T, seed=seed))
    masks = sample_active_mask(data.network, hp.neg_sample_ratio, hp.seed)
    for _ in range(max_halvings + 1):
        start = time.perf_counter()
        try:
            result = fit(data.network, hp, masks=masks)
        except DivergenceError:
            hp = hp.replace(alpha=hp.alpha / 2)
            continue
        return BenchPoint(n, time.perf_counter() - start, result.iterations, hp.alpha)
    raise DivergenceError(None, None, f"no stable step size found for n={n}")


def bench(
    sizes: Sequence[int],
    T: int = 3,
    rank: int = 2,
    iterations: int = 1000,
    seed: int = 0,
    hp: Hyperparameters = BENCH_HYPERPARAMETERS,
) -> BenchResult:
    hp = hp.replace(rank=rank, max_iters=iterations, tol=0.0, seed=seed)
    points = []
    for n in sizes:
        point = time_fit(int(n), hp, T=T, seed=seed)
        logger.info("n=%d: %.3fs for %d iterations", point.n, point.seconds, point.iterations)
        points.append(point)
    coef, r2 = quadratic_fit([p.n for p in points], [p.seconds for p in points])
    n_max = max(p.n for p in points)
    terms = {"quadratic": coef[0] * n_max**2, "linear": coef[1] * n_max, "constant": coef[2]}
    return BenchResult(points, coef, r2, terms)
