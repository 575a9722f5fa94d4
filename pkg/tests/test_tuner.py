import numpy as np
import pytest

from chimera import Hyperparameters, SearchSpace, SyntheticConfig, generate, tune
from chimera.tuner import TuningError

BASE = Hyperparameters(alpha=1e-3, beta=1.0, rank=3, max_iters=40, tol=0.0)


@pytest.fixture(scope="module")
def network():
    return generate(SyntheticConfig(n=60, m=150, g=3, T=2, p=0.9, seed=2)).network


def small_space(**kw):
    values = dict(alpha=(1e-3,), beta=(1.0,), lambda1=(0.0,), lambda2=(0.0,), rank=(3,), clusters=(2, 3, 4),
                  budget=10, strategy="grid")
    values.update(kw)
    return SearchSpace(**values)


def test_default_space_grid():
    space = SearchSpace()
    assert space.size == 2 * 5 * 2 * 2 * 5 * 7 == 1400
    assert len(space.schedule()) == 20
    assert len({tuple(sorted(c.items())) for c in space.schedule()}) == 20


def test_random_schedule_is_seeded():
    assert SearchSpace(seed=3).schedule() == SearchSpace(seed=3).schedule()
    assert SearchSpace(seed=3).schedule() != SearchSpace(seed=4).schedule()


def test_budget_one_returns_that_trial(network):
    result = tune(network, small_space(budget=1), base=BASE)
    assert len(result.trials) == 1
    assert result.best is result.trials[0]
    assert result.best.status == "ok"
    assert result.best.config == small_space(budget=1).schedule()[0]


def test_log_is_bounded_and_best_is_extreme(network):
    seen = []
    space = small_space(budget=3)
    result = tune(network, space, base=BASE, on_trial=seen.append)
    assert len(result.trials) == len(seen) <= space.budget
    scores = [t.objective for t in result.trials if t.status == "ok"]
    assert result.best.objective == max(scores)
    low = tune(network, space, direction="minimize", base=BASE)
    assert low.best.objective == min(scores)
    assert "maximized" in result.note


def test_ties_keep_the_earlier_trial(network):
    space = small_space(alpha=(1e-3, 1e-3), clusters=(3,))
    result = tune(network, space, base=BASE)
    assert result.trials[0].objective == result.trials[1].objective
    assert result.best.index == 0


def test_all_degenerate_raises_with_log(network):
    with pytest.raises(TuningError) as info:
        tune(network, small_space(clusters=(1,)), base=BASE)
    assert len(info.value.trials) == 1
    assert info.value.trials[0].status == "degenerate"


def test_diverged_trials_score_worst(network):
    space = small_space(alpha=(1e3, 1e-3), clusters=(3,))
    result = tune(network, space, base=BASE)
    assert result.trials[0].status == "diverged"
    assert result.best.index == 1


def test_records_are_serializable(network):
    import json

    result = tune(network, small_space(budget=2), base=BASE)
    for t in result.trials:
        json.dumps(t.to_record())


def test_invalid_space():
    with pytest.raises(ValueError):
        SearchSpace(budget=0)
    with pytest.raises(ValueError):
        SearchSpace(rank=())
    with pytest.raises(ValueError):
        SearchSpace(strategy="bayes")
    with pytest.raises(ValueError):
        tune(None, SearchSpace(), direction="sideways")
