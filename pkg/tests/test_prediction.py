import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chimera import FactorModel, detect_communities, fit_ar, predict_communities, predict_embedding
from chimera.network import TemporalNetwork
from chimera.prediction import build_series, default_order, fit_ar_batch, fit_forecaster, spectral_radius


def model_from(U):
    U = np.asarray(U, dtype=float)
    n, k = U.shape[1:]
    return FactorModel(U, np.zeros((n, k)), np.zeros((0, k)))


def scalar_ar1_forecast(xs):
    """OLS of x_t = c + a x_{t-1} by hand, with the stationarity and clamping policy."""
    pairs = list(zip(xs[:-1], xs[1:]))
    if len(pairs) < 2:
        return max(xs[-1], 0.0)
    n = len(pairs)
    sx = sum(x for x, _ in pairs)
    sy = sum(y for _, y in pairs)
    sxx = sum(x * x for x, _ in pairs)
    sxy = sum(x * y for x, y in pairs)
    det = n * sxx - sx * sx
    if abs(det) <= 1e-12 * max(n * sxx, 1e-300):
        return max(xs[-1], 0.0)
    a = (n * sxy - sx * sy) / det
    c = (sy - a * sx) / n
    if abs(a) > 1:
        return max(xs[-1], 0.0)
    return max(c + a * xs[-1], 0.0)


def test_constant_series_forecasts_the_constant():
    for p in (1, 2, 3):
        ar = fit_ar([0.5, 0.5, 0.5], p)
        assert ar.step(np.array([[0.5, 0.5, 0.5]]))[0] == pytest.approx(0.5)


def test_closed_form_least_squares_without_intercept():
    ar = fit_ar([1.0, 2.0, 4.0], 1, intercept=False)
    assert ar.fallback[0] == ""
    assert ar.coef[0, 0] == pytest.approx((1 * 2 + 2 * 4) / (1**2 + 2**2))
    assert ar.step(np.array([[1.0, 2.0, 4.0]]))[0] == pytest.approx(8.0)


@pytest.mark.parametrize("p", [1, 2, 3])
def test_short_series_fall_back_to_last_value(p):
    xs = np.arange(1.0, p + 2)  # length p + 1, shorter than p + 2
    ar = fit_ar(xs, p)
    assert ar.fallback[0] == "last-value"
    assert ar.step(xs[None, :])[0] == xs[-1]


def test_mean_fallback():
    ar = fit_ar([1.0, 3.0], 1, fallback="mean")
    assert ar.step(np.array([[1.0, 3.0]]))[0] == 2.0


def test_default_order():
    assert [default_order(T) for T in range(1, 8)] == [1, 1, 1, 1, 2, 2, 2]


def test_recovers_a_known_ar2_recursion():
    xs = [1.0, 2.0]
    for _ in range(10):
        xs.append(0.3 + 0.5 * xs[-1] - 0.2 * xs[-2])
    ar = fit_ar(xs, 2)
    np.testing.assert_allclose(ar.coef[0], [0.5, -0.2], atol=1e-8)
    assert ar.intercept[0] == pytest.approx(0.3, abs=1e-8)


def test_spectral_radius():
    assert spectral_radius([[0.5, -0.2]])[0] == pytest.approx(np.sqrt(0.2))
    assert spectral_radius([[-1.5]])[0] == 1.5


def test_stationarity_guard_only_when_requested():
    xs = [0.01, 0.1, 1.0, 10.0]
    assert fit_ar(xs, 1).fallback[0] == ""
    assert fit_ar(xs, 1, stationary=True).fallback[0] == "last-value"


def test_series_tracking_policies(rng):
    U = rng.uniform(0.1, 1, (3, 4, 2))
    U[:, 1, 0] = 0.0
    model = model_from(U)
    s = build_series(model)
    assert len(s.coords) == 4 * 2 - 1
    for (i, j), series in zip(s.coords, s.values):
        np.testing.assert_array_equal(series, U[:, i, j])

    import scipy.sparse as sp
    a = sp.csr_matrix(([1.0, 1.0], ([0, 2], [2, 0])), shape=(4, 4))
    net = TemporalNetwork([a] * 3, [sp.csr_matrix((4, 0))] * 3)
    s = build_series(model, "a-support", net)
    assert sorted(set(s.coords[:, 0].tolist())) == [0, 2]
    with pytest.raises(ValueError):
        build_series(model, "a-support")
    with pytest.raises(ValueError):
        build_series(model, "unknown")


def test_all_positive_entries_are_tracked(rng):
    s = build_series(model_from(rng.uniform(0.1, 1, (2, 5, 3))))
    assert len(s.coords) == 15


def test_untracked_entries_forecast_zero(rng):
    U = rng.uniform(0.1, 1, (4, 3, 2))
    U[:, 2, 1] = 0.0
    assert predict_embedding(model_from(U), 3)[2, 1] == 0.0


def test_constant_model_forecasts_last_snapshot(rng):
    U0 = rng.uniform(0, 1, (6, 3))
    model = model_from(np.stack([U0] * 5))
    for r in (1, 2, 5):
        np.testing.assert_allclose(predict_embedding(model, r), U0, atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_one_step_matches_scalar_oracle(seed):
    rng = np.random.default_rng(seed)
    U = rng.uniform(0, 1, (5, 6, 3))
    got = predict_embedding(model_from(U), 1, order=1)
    for i in range(6):
        for j in range(3):
            assert got[i, j] == pytest.approx(scalar_ar1_forecast(U[:, i, j].tolist()), abs=1e-10)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), T=st.integers(1, 7), p=st.integers(1, 3))
def test_two_steps_equal_iterating_one_step(seed, T, p):
    rng = np.random.default_rng(seed)
    fm = fit_forecaster(model_from(rng.uniform(0, 1, (T, 5, 2))), order=p)
    direct = fm.forecast(2)
    first = fm.forecast(1)
    augmented = np.concatenate([fm.series.values, first.T], axis=1)
    second = fm.forecast(1, history=augmented)
    np.testing.assert_array_equal(direct[0], first[0])
    np.testing.assert_allclose(direct[1], second[0], rtol=0, atol=0)


@settings(max_examples=60, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    T=st.integers(1, 6),
    p=st.one_of(st.none(), st.integers(1, 3)),
    r=st.integers(1, 6),
    spike=st.floats(0, 1e6),
    intercept=st.booleans(),
    stationary=st.booleans(),
)
def test_forecasts_are_total(seed, T, p, r, spike, intercept, stationary):
    rng = np.random.default_rng(seed)
    U = rng.uniform(0, 1, (T, 4, 2)) * (rng.random((T, 4, 2)) < 0.7)
    U[-1, 0, 0] = spike
    out = predict_embedding(model_from(U), r, p, intercept=intercept, stationary=stationary)
    assert out.shape == (4, 2)
    assert np.isfinite(out).all() and (out >= 0).all()


def test_static_model_prediction_matches_detection(rng):
    centers = np.array([[5.0, 0.0, 0.0], [0.0, 5.0, 0.0], [0.0, 0.0, 5.0]])
    U0 = centers[rng.integers(0, 3, 30)] + rng.uniform(0, 0.1, (30, 3))
    model = model_from(np.stack([U0] * 3))
    detected = detect_communities(model, 3, seed=4)
    predicted = predict_communities(model, 1, 3, seed=4)
    assert predicted.timestamps == [3]
    np.testing.assert_array_equal(predicted.labels[0], detected.labels[-1])


def test_batch_fit_matches_single_fits(rng):
    X = rng.uniform(0, 1, (10, 7))
    batch = fit_ar_batch(X, 2)
    for row in range(10):
        single = fit_ar(X[row], 2)
        np.testing.assert_allclose(batch.coef[row], single.coef[0], atol=1e-10)
        assert batch.intercept[row] == pytest.approx(single.intercept[0], abs=1e-10)


def test_invalid_arguments():
    with pytest.raises(ValueError):
        fit_ar([1.0, 2.0], 0)
    with pytest.raises(ValueError):
        fit_ar([1.0, 2.0], 1, fallback="zero")
    with pytest.raises(ValueError):
        fit_forecaster(model_from(np.ones((2, 2, 1)))).forecast(0)
