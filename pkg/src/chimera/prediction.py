"""Community prediction: autoregressive forecasts of every tracked entry of U.

Each tracked coordinate ``(i, j)`` of the embedding gives a length-T series
``U_0[i, j], ..., U_{T-1}[i, j]``. An AR(p) model per series forecasts the
next value; multi-step horizons feed forecasts back in as inputs. Untracked
coordinates forecast to 0 and all forecasts are clamped at 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .communities import CommunityAssignment, kmeans, normalize_rows
from .factorization import FactorModel
from .network import TemporalNetwork

TRACK_POLICIES = ("nonzero-u", "a-support")
FALLBACKS = ("last-value", "mean")
COND_LIMIT = 1e12


def default_order(T: int) -> int:
    """AR order used when none is given: at most 2, and small enough that a
    series of length T can still be fitted (never below 1)."""
    return max(1, min(2, (T - 1) // 2))


@dataclass(frozen=True, eq=False)
class SeriesSet:
    coords: np.ndarray  # (m, 2) (row, column) of U
    values: np.ndarray  # (m, T)
    policy: str


def build_series(
    model: FactorModel, track_policy: str = "nonzero-u", network: Optional[TemporalNetwork] = None
) -> SeriesSet:
    """Select the tracked coordinates of U and extract their series.

    ``"nonzero-u"`` tracks every coordinate that is non-zero at some
    timestamp. ``"a-support"`` tracks every coordinate of the rows whose node
    has at least one link (in either direction) in some snapshot of
    ``network``.
    """
    T, n, k = model.U.shape
    if track_policy == "nonzero-u":
        tracked = (model.U > 0).any(axis=0)
    elif track_policy == "a-support":
        if network is None:
            raise ValueError("the a-support policy needs the network")
        active = np.zeros(n, dtype=bool)
        for a in network.adjacency:
            active |= (a.getnnz(axis=1) > 0) | (a.getnnz(axis=0) > 0)
        tracked = np.repeat(active[:, None], k, axis=1)
    else:
        raise ValueError(f"unknown track policy {track_policy!r}; expected one of {TRACK_POLICIES}")
    rows, cols = np.nonzero(tracked)
    values = model.U[:, rows, cols].T.copy()
    return SeriesSet(np.stack([rows, cols], axis=1), values, track_policy)


@dataclass(frozen=True, eq=False)
class ARFit:
    """Fitted AR models for a batch of series (one row per series).

    ``x_t = intercept + sum_q coef[q-1] * x_{t-q}``. Rows with a non-empty
    ``fallback`` carry no usable coefficients and forecast with that policy.
    """

    order: int
    coef: np.ndarray  # (m, p)
    intercept: np.ndarray  # (m,)
    fallback: np.ndarray  # (m,) str, "" when fitted
    level: np.ndarray  # (m,) training mean, used by the "mean" fallback

    def step(self, history: np.ndarray) -> np.ndarray:
        """One-step-ahead forecast from the trailing values of ``history`` (m, >=1)."""
        history = np.atleast_2d(history)
        p = self.order
        fitted = self.fallback == ""
        out = history[:, -1].copy()
        if fitted.any():
            lags = history[fitted][:, ::-1][:, :p]  # lags[:, q-1] = x_{t-q}
            out[fitted] = self.intercept[fitted] + (self.coef[fitted] * lags).sum(axis=1)
        use_mean = self.fallback == "mean"
        out[use_mean] = self.level[use_mean]
        return out


def fit_ar_batch(
    values,
    order: int,
    intercept: bool = True,
    fallback: str = "last-value",
    cond_limit: float = COND_LIMIT,
    stationary: bool = False,
) -> ARFit:
    """Least-squares AR(order) fit of every row of ``values`` (m, T).

    A row falls back to ``fallback`` when fewer than ``order + 1`` lagged
    rows are available (``T - order < order + 1``), or when its normal
    equations have a condition number above ``cond_limit``. With
    ``stationary=True`` a row also falls back when the fitted recursion is
    explosive (companion-matrix spectral radius above 1).
    """
    X = np.atleast_2d(np.asarray(values, dtype=np.float64))
    m, T = X.shape
    p = int(order)
    if p < 1:
        raise ValueError(f"AR order must be at least 1, got {order}")
    if fallback not in FALLBACKS:
        raise ValueError(f"unknown fallback {fallback!r}; expected one of {FALLBACKS}")

    coef = np.zeros((m, p))
    icpt = np.zeros(m)
    fb = np.full(m, fallback, dtype=object)
    level = X.mean(axis=1) if T else np.zeros(m)

    n_rows = T - p
    if m and n_rows >= p + 1:
        # design[:, r, q] = x_{p + r - 1 - q}, i.e. lag q+1 for target x_{p + r}
        design = np.stack([X[:, p - 1 - q : T - 1 - q] for q in range(p)], axis=2)
        if intercept:
            design = np.concatenate([np.ones((m, n_rows, 1)), design], axis=2)
        target = X[:, p:]
        gram = np.einsum("mrq,mrs->mqs", design, design)
        rhs = np.einsum("mrq,mr->mq", design, target)
        sv = np.linalg.svd(gram, compute_uv=False)
        with np.errstate(divide="ignore", invalid="ignore"):
            cond = sv[:, 0] / sv[:, -1]
        ok = np.isfinite(cond) & (cond <= cond_limit)
        if ok.any():
            sol = np.linalg.solve(gram[ok], rhs[ok][..., None])[..., 0]
            if intercept:
                icpt[ok], coef[ok] = sol[:, 0], sol[:, 1:]
            else:
                coef[ok] = sol
            fb[ok] = ""
            if stationary:
                fb[np.flatnonzero(ok)[spectral_radius(coef[ok]) > 1 + 1e-12]] = fallback
    return ARFit(p, coef, icpt, fb.astype(str), level)


def spectral_radius(coef) -> np.ndarray:
    """Largest root modulus of each AR recursion in ``coef`` (m, p)."""
    coef = np.atleast_2d(coef)
    m, p = coef.shape
    if p == 1:
        return np.abs(coef[:, 0])
    companion = np.zeros((m, p, p))
    companion[:, 0, :] = coef
    companion[:, np.arange(1, p), np.arange(p - 1)] = 1.0
    return np.abs(np.linalg.eigvals(companion)).max(axis=1)


def fit_ar(
    series, order: int, intercept: bool = True, fallback: str = "last-value", stationary: bool = False
) -> ARFit:
    """AR fit of a single series; see ``fit_ar_batch``."""
    return fit_ar_batch(
        np.asarray(series, dtype=np.float64)[None, :], order, intercept, fallback, stationary=stationary
    )


@dataclass(frozen=True, eq=False)
class ForecastModel:
    shape: tuple  # (n, k) of the forecast embedding
    series: SeriesSet
    ar: ARFit

    @property
    def order(self) -> int:
        return self.ar.order

    def forecast(self, horizon: int, history: Optional[np.ndarray] = None) -> np.ndarray:
        """Forecasts for steps 1..horizon as an (horizon, m) array.

        Each step is clamped at 0 and appended to the history before the
        next step. ``history`` defaults to the training series.
        """
        if horizon < 1:
            raise ValueError(f"horizon must be at least 1, got {horizon}")
        hist = self.series.values if history is None else np.atleast_2d(np.asarray(history, dtype=np.float64))
        out = np.empty((horizon, len(hist)))
        with np.errstate(over="ignore", invalid="ignore"):
            for h in range(horizon):
                nxt = self.ar.step(hist) if hist.shape[1] else np.zeros(len(hist))
                nxt = np.where(np.isfinite(nxt), np.maximum(nxt, 0.0), hist[:, -1] if hist.shape[1] else 0.0)
                out[h] = nxt
                hist = np.concatenate([hist, nxt[:, None]], axis=1)
        return out

    def embedding(self, values: np.ndarray) -> np.ndarray:
        U = np.zeros(self.shape)
        rows, cols = self.series.coords.T
        U[rows, cols] = values
        return U

    def predict(self, horizon: int) -> np.ndarray:
        """The forecast embedding at ``horizon`` steps past the last timestamp."""
        return self.embedding(self.forecast(horizon)[-1])


def fit_forecaster(
    model: FactorModel,
    order: Optional[int] = None,
    track_policy: str = "nonzero-u",
    network: Optional[TemporalNetwork] = None,
    intercept: bool = True,
    fallback: str = "last-value",
    stationary: bool = True,
) -> ForecastModel:
    """Fit one AR model per tracked entry of ``model.U``.

    Explosive fits fall back by default: with only a handful of timestamps an
    exactly determined AR fit turns an entry rising from near zero into a
    runaway forecast that dominates the clustering.
    """
    series = build_series(model, track_policy, network)
    p = default_order(model.T) if order is None else order
    ar = fit_ar_batch(series.values, p, intercept=intercept, fallback=fallback, stationary=stationary)
    return ForecastModel((model.n, model.rank), series, ar)


def predict_embedding(model: FactorModel, horizon: int = 1, order: Optional[int] = None, **kwargs) -> np.ndarray:
    """Forecast ``U_{T-1+horizon}`` (n x k, non-negative)."""
    return fit_forecaster(model, order, **kwargs).predict(horizon)


def predict_communities(
    model: FactorModel,
    horizon: int,
    c: int,
    order: Optional[int] = None,
    seed: int = 0,
    restarts: int = 10,
    normalize: bool = False,
    **kwargs,
) -> CommunityAssignment:
    """Cluster the rows of the forecast embedding into ``c`` communities.

    The result holds a single timestamp, ``T - 1 + horizon`` (0-based).
    Labels are not matched against any earlier clustering.
    """
    U = predict_embedding(model, horizon, order, **kwargs)
    points = normalize_rows(U) if normalize else U
    km = kmeans(points, c, seed=seed, restarts=restarts)
    return CommunityAssignment(km.labels[None, :], km.centroids, km.inertia, [model.T - 1 + horizon])
