"""Unsupervised hyperparameter search scored by the silhouette of the detected communities.

Every trial fits the factorization, clusters the stacked embedding rows and
scores the clustering with the mean silhouette coefficient. No ground truth
is ever consulted. Candidates are enumerated on a finite grid, either in
grid order or as a seeded random sample without replacement.
"""

from __future__ import annotations

import itertools
import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .communities import detect_communities, stack_embeddings
from .factorization import DivergenceError, Hyperparameters, fit, fit_with_backoff
from .metrics import silhouette
from .network import TemporalNetwork

logger = logging.getLogger(__name__)

STRATEGIES = ("grid", "random")
DIRECTIONS = ("maximize", "minimize")
FIT_KEYS = ("alpha", "beta", "lambda1", "lambda2", "rank")
DIRECTION_NOTE = (
    "silhouette is conventionally maximized; the minimize direction is kept "
    "for runs that reproduce a minimizing objective"
)


@dataclass(frozen=True)
class SearchSpace:
    alpha: tuple = (0.01, 0.1)
    beta: tuple = (0.1, 0.25, 0.5, 0.75, 0.9)
    lambda1: tuple = (1e-5, 1e-6)
    lambda2: tuple = (1e-4, 1e-5)
    rank: tuple = (10, 20, 30, 40, 50)
    clusters: tuple = (2, 4, 8, 10, 16, 18, 32)
    budget: int = 20
    strategy: str = "random"
    seed: int = 0

    def __post_init__(self):
        for name in FIT_KEYS + ("clusters",):
            values = tuple(getattr(self, name))
            if not values:
                raise ValueError(f"candidate set for {name} is empty")
            object.__setattr__(self, name, values)
        if self.budget < 1:
            raise ValueError(f"budget must be at least 1, got {self.budget}")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")

    @property
    def size(self) -> int:
        return int(np.prod([len(getattr(self, k)) for k in FIT_KEYS + ("clusters",)]))

    def grid(self) -> List[dict]:
        keys = FIT_KEYS + ("clusters",)
        return [dict(zip(keys, combo)) for combo in itertools.product(*(getattr(self, k) for k in keys))]

    def schedule(self) -> List[dict]:
        """The configurations to evaluate, in trial order (at most ``budget``)."""
        grid = self.grid()
        count = min(self.budget, len(grid))
        if self.strategy == "grid":
            return grid[:count]
        rng = np.random.default_rng(self.seed)
        return [grid[i] for i in rng.choice(len(grid), size=count, replace=False)]


@dataclass
class Trial:
    index: int
    config: dict
    objective: Optional[float]
    status: str  # "ok", "degenerate" or "diverged"
    wall_time: float
    trace_tail: List[float] = field(default_factory=list)
    alpha_used: Optional[float] = None
    error: Optional[str] = None

    def to_record(self) -> dict:
        return asdict(self)


@dataclass
class TuneResult:
    best: Trial
    trials: List[Trial]
    direction: str
    note: str = DIRECTION_NOTE

    @property
    def best_hyperparameters(self) -> dict:
        return dict(self.best.config)


class TuningError(RuntimeError):
    def __init__(self, message, trials):
        self.trials = trials
        lines = [message] + [
            f"  trial {t.index}: {t.config} -> {t.status}" + (f" ({t.error})" if t.error else "") for t in trials
        ]
        super().__init__("\n".join(lines))


def tune(
    network: TemporalNetwork,
    space: SearchSpace,
    direction: str = "maximize",
    base: Optional[Hyperparameters] = None,
    max_halvings: int = 0,
    restarts: int = 10,
    trace_tail: int = 5,
    on_trial: Optional[Callable[[Trial], None]] = None,
) -> TuneResult:
    """Evaluate the scheduled configurations and return the best one.

    ``base`` supplies everything the search space does not cover (iteration
    budget, tolerance, sampling ratio, gradient mode, seed). Diverged fits and
    clusterings with a single non-empty cluster score worst. Ties keep the
    earlier trial. Fits are shared between trials that differ only in the
    cluster count.
    """
    if direction not in DIRECTIONS:
        raise ValueError(f"direction must be one of {DIRECTIONS}, got {direction!r}")
    base = base or Hyperparameters()
    sign = 1.0 if direction == "maximize" else -1.0
    fits = {}
    trials: List[Trial] = []
    best = None

    for index, config in enumerate(space.schedule()):
        start = time.perf_counter()
        key = tuple(config[k] for k in FIT_KEYS)
        if key not in fits:
            hp = base.replace(**{k: config[k] for k in FIT_KEYS})
            try:
                if max_halvings:
                    fits[key] = fit_with_backoff(network, hp, max_halvings=max_halvings)
                else:
                    fits[key] = fit(network, hp)
            except DivergenceError as err:
                fits[key] = err
        result = fits[key]

        if isinstance(result, DivergenceError):
            trial = Trial(index, config, None, "diverged", 0.0, error=str(result))
        else:
            tail = [float(x) for x in result.trace[-trace_tail:]]
            trial = Trial(index, config, None, "degenerate", 0.0, tail, result.hyperparameters.alpha)
            n_points = result.model.n * result.model.T
            if config["clusters"] > n_points:
                trial.error = f"{config['clusters']} clusters for {n_points} points"
            else:
                ca = detect_communities(result.model, config["clusters"], seed=base.seed, restarts=restarts)
                if len(np.unique(ca.labels)) >= 2 and n_points >= 3:
                    points, _ = stack_embeddings(result.model)
                    trial.objective = silhouette(points, ca.labels.ravel())
                    trial.status = "ok"
        trial.wall_time = time.perf_counter() - start
        trials.append(trial)
        logger.info("trial %d %s -> %s %s", index, config, trial.status, trial.objective)
        if on_trial is not None:
            on_trial(trial)
        if trial.status == "ok" and (best is None or sign * trial.objective > sign * best.objective):
            best = trial

    if best is None:
        raise TuningError("every trial diverged or produced a single cluster", trials)
    return TuneResult(best, trials, direction)
