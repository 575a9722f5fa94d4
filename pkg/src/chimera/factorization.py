"""Shared temporal non-negative factorization of link and content snapshots.

Each snapshot is approximated as ``A_t ~ U_t V^T`` and ``C_t ~ U_t W^T``,
where ``U_t`` is specific to timestamp ``t`` and ``V``, ``W`` are global.
The model is fitted by projected gradient descent on

    J = sum_t ||A_t - U_t V^T||^2 + beta * sum_t ||C_t - U_t W^T||^2
        + lambda1 * (||V||^2 + ||W||^2 + sum_t ||U_t||^2)
        + lambda2 * sum_t ||U_{t+1} - U_t||^2

with the reconstruction terms restricted to per-snapshot entry masks
(observed non-zeros plus a sample of the zeros, or every entry).
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import scipy.sparse as sp

from .network import TemporalNetwork

logger = logging.getLogger(__name__)

GRADIENT_MODES = ("exact", "paper-compat")

#: Floor of the denominator in the relative-change stopping rule.
EPS = 1e-12
#: Relative slack allowed before an objective increase counts as non-descent.
DESCENT_RTOL = 1e-12


class DivergenceError(FloatingPointError):
    """The objective became non-finite (or increased, for descent-checked fits)."""

    def __init__(self, iteration, last_finite, reason="objective is not finite"):
        self.iteration = iteration
        self.last_finite = last_finite
        self.reason = reason
        super().__init__(
            f"{reason} at iteration {iteration} (last finite objective: {last_finite})"
        )


class NonDescentError(DivergenceError):
    pass


@dataclass(frozen=True)
class Hyperparameters:
    alpha: float = 0.01
    beta: float = 1.0
    lambda1: float = 0.0
    lambda2: float = 0.0
    rank: int = 10
    max_iters: int = 1000
    tol: float = 1e-8
    neg_sample_ratio: float = 1.0
    seed: int = 0
    gradient_mode: str = "exact"

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        for name in ("beta", "lambda1", "lambda2", "tol", "neg_sample_ratio"):
            value = getattr(self, name)
            if not value >= 0:
                raise ValueError(f"{name} must be non-negative, got {value}")
        if int(self.rank) != self.rank or self.rank < 1:
            raise ValueError(f"rank must be a positive integer, got {self.rank}")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ValueError(f"max_iters must be a positive integer, got {self.max_iters}")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ValueError(f"seed must be a non-negative integer, got {self.seed}")
        if self.gradient_mode not in GRADIENT_MODES:
            raise ValueError(f"gradient_mode must be one of {GRADIENT_MODES}, got {self.gradient_mode!r}")

    def replace(self, **changes) -> "Hyperparameters":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _frozen(x) -> np.ndarray:
    out = np.array(x, dtype=np.float64, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class FactorModel:
    """Per-timestamp embeddings ``U`` (T x n x k) and global ``V`` (n x k), ``W`` (d x k).

    Arrays are copied and made read-only on construction.
    """

    U: np.ndarray
    V: np.ndarray
    W: np.ndarray

    def __post_init__(self):
        U, V, W = _frozen(self.U), _frozen(self.V), _frozen(self.W)
        if U.ndim != 3:
            raise ValueError(f"U must be a (T, n, k) array, got shape {U.shape}")
        T, n, k = U.shape
        if T < 1 or k < 1:
            raise ValueError(f"U must have T >= 1 and k >= 1, got shape {U.shape}")
        if V.shape != (n, k):
            raise ValueError(f"V has shape {V.shape}, expected {(n, k)}")
        if W.ndim != 2 or W.shape[1] != k:
            raise ValueError(f"W has shape {W.shape}, expected (d, {k})")
        for name, x in (("U", U), ("V", V), ("W", W)):
            if np.any(x < 0):
                raise ValueError(f"{name} has negative entries")
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "V", V)
        object.__setattr__(self, "W", W)

    @property
    def T(self) -> int:
        return self.U.shape[0]

    @property
    def n(self) -> int:
        return self.U.shape[1]

    @property
    def rank(self) -> int:
        return self.U.shape[2]

    @property
    def d(self) -> int:
        return self.W.shape[0]

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.U).all() and np.isfinite(self.V).all() and np.isfinite(self.W).all())


# --------------------------------------------------------------------------
# entry masks


@dataclass(frozen=True, eq=False)
class EntryMask:
    """Coordinates of one matrix that enter the reconstruction loss.

    In sparse mode ``rows``/``cols``/``indptr`` hold the coordinates in CSR
    order and ``values`` the observed matrix value at each of them (0 for
    sampled zeros). In dense mode every coordinate is active, the
    coordinate arrays are ``None`` and ``values`` is the dense matrix.
    """

    shape: tuple
    values: np.ndarray
    rows: Optional[np.ndarray] = None
    cols: Optional[np.ndarray] = None
    indptr: Optional[np.ndarray] = None

    @property
    def dense(self) -> bool:
        return self.rows is None

    @property
    def size(self) -> int:
        return self.shape[0] * self.shape[1] if self.dense else len(self.rows)

    def coordinates(self):
        """All active ``(rows, cols)`` in row-major order."""
        if self.dense:
            r, c = np.indices(self.shape)
            return r.ravel(), c.ravel()
        return self.rows, self.cols

    @classmethod
    def full(cls, matrix) -> "EntryMask":
        return cls(shape=matrix.shape, values=np.asarray(matrix.toarray(), dtype=np.float64))


@dataclass(frozen=True, eq=False)
class Masks:
    adjacency: List[EntryMask]
    content: List[EntryMask]
    ratio: float
    seed: int

    @property
    def dense(self) -> bool:
        return self.ratio == 0


def _sample_zero_coords(forbidden, n_rows, n_cols, count, rng):
    """Draw ``count`` distinct linear indices outside the sorted array ``forbidden``."""
    total = n_rows * n_cols
    available = total - len(forbidden)
    count = min(count, available)
    if count <= 0:
        return np.empty(0, dtype=np.int64)
    if 2 * count >= available:
        allowed = np.setdiff1d(np.arange(total, dtype=np.int64), forbidden, assume_unique=True)
        return np.sort(rng.choice(allowed, size=count, replace=False))

    chosen = np.empty(0, dtype=np.int64)
    while len(chosen) < count:
        need = count - len(chosen)
        draw = rng.integers(0, total, size=need + need // 4 + 16, dtype=np.int64)
        if len(forbidden):
            pos = np.minimum(np.searchsorted(forbidden, draw), len(forbidden) - 1)
            draw = draw[forbidden[pos] != draw]
        merged = np.concatenate([chosen, draw])
        _, first = np.unique(merged, return_index=True)
        chosen = merged[np.sort(first)][:count]
    return np.sort(chosen)


def _sampled_mask(matrix: sp.csr_matrix, ratio, rng, exclude_diagonal) -> EntryMask:
    n_rows, n_cols = matrix.shape
    coo = matrix.tocoo()
    nz = coo.row.astype(np.int64) * n_cols + coo.col
    order = np.argsort(nz, kind="stable")
    nz, nz_vals = nz[order], coo.data[order]

    forbidden = nz
    if exclude_diagonal:
        diag = np.arange(min(n_rows, n_cols), dtype=np.int64) * (n_cols + 1)
        forbidden = np.union1d(nz, diag)
    zeros = _sample_zero_coords(forbidden, n_rows, n_cols, int(np.floor(ratio * len(nz))), rng)

    lin = np.concatenate([nz, zeros])
    vals = np.concatenate([nz_vals, np.zeros(len(zeros))])
    order = np.argsort(lin, kind="stable")
    lin, vals = lin[order], vals[order]
    rows, cols = lin // n_cols, lin % n_cols
    indptr = np.searchsorted(rows, np.arange(n_rows + 1)).astype(np.int64)
    return EntryMask(shape=(n_rows, n_cols), values=vals, rows=rows, cols=cols, indptr=indptr)


def sample_active_mask(network: TemporalNetwork, ratio: float, seed: int) -> Masks:
    """Build the per-snapshot entry masks used by the reconstruction terms.

    Each mask holds every non-zero of the snapshot plus ``floor(ratio * nnz)``
    distinct zero coordinates drawn uniformly (the diagonal is never sampled
    for undirected adjacency). If fewer zeros exist, all of them are used.
    ``ratio == 0`` selects dense mode, where every coordinate is active.
    The same rule is applied to the content snapshots.
    """
    if not ratio >= 0:
        raise ValueError(f"ratio must be non-negative, got {ratio}")
    if ratio == 0:
        return Masks(
            [EntryMask.full(a) for a in network.adjacency],
            [EntryMask.full(c) for c in network.content],
            ratio=0.0,
            seed=seed,
        )
    adjacency, content = [], []
    for t in range(network.T):
        rng = np.random.default_rng([seed, t, 1])
        adjacency.append(_sampled_mask(network.adjacency[t], ratio, rng, not network.directed))
        rng = np.random.default_rng([seed, t, 2])
        content.append(_sampled_mask(network.content[t], ratio, rng, False))
    return Masks(adjacency, content, ratio=float(ratio), seed=seed)


# --------------------------------------------------------------------------
# objective, residuals, gradients


@dataclass(frozen=True, eq=False)
class Residuals:
    """Prediction errors at the active entries.

    ``delta_a[t]`` / ``delta_c[t]`` are CSR matrices supported on the mask in
    sparse mode and dense arrays in dense mode. ``delta_u[t] = U_t - U_{t+1}``
    with the last slice identically zero.
    """

    delta_a: list
    delta_c: list
    delta_u: np.ndarray


def _masked_residual(mask: EntryMask, left: np.ndarray, right: np.ndarray):
    if mask.dense:
        return mask.values - left @ right.T
    pred = np.einsum("ij,ij->i", left[mask.rows], right[mask.cols])
    return sp.csr_matrix((mask.values - pred, mask.cols, mask.indptr), shape=mask.shape)


def _check_shapes(network, model, masks):
    if (model.T, model.n, model.d) != (network.T, network.n, network.d):
        raise ValueError(
            f"model (T={model.T}, n={model.n}, d={model.d}) does not match "
            f"network (T={network.T}, n={network.n}, d={network.d})"
        )
    if len(masks.adjacency) != network.T or len(masks.content) != network.T:
        raise ValueError("masks do not cover every timestamp")


def compute_residuals(network: TemporalNetwork, model: FactorModel, masks: Masks) -> Residuals:
    _check_shapes(network, model, masks)
    U, V, W = model.U, model.V, model.W
    delta_a = [_masked_residual(masks.adjacency[t], U[t], V) for t in range(model.T)]
    delta_c = [_masked_residual(masks.content[t], U[t], W) for t in range(model.T)]
    delta_u = np.zeros_like(U)
    delta_u[:-1] = U[:-1] - U[1:]
    return Residuals(delta_a, delta_c, delta_u)


def _sumsq(x) -> float:
    data = x.data if sp.issparse(x) else np.ravel(x)
    return float(np.dot(data, data))


def objective_from_residuals(model: FactorModel, hp: Hyperparameters, res: Residuals) -> float:
    structural = sum(_sumsq(d) for d in res.delta_a)
    content = sum(_sumsq(d) for d in res.delta_c)
    norms = _sumsq(model.V) + _sumsq(model.W) + _sumsq(model.U)
    smooth = _sumsq(res.delta_u)
    return structural + hp.beta * content + hp.lambda1 * norms + hp.lambda2 * smooth


def evaluate_objective(network: TemporalNetwork, model: FactorModel, hp: Hyperparameters, masks: Masks) -> float:
    with np.errstate(over="ignore", invalid="ignore"):
        J = objective_from_residuals(model, hp, compute_residuals(network, model, masks))
    if not np.isfinite(J):
        raise DivergenceError(None, None)
    return J


@dataclass(frozen=True, eq=False)
class Gradients:
    U: np.ndarray
    V: np.ndarray
    W: np.ndarray


def compute_gradients(network: TemporalNetwork, model: FactorModel, hp: Hyperparameters, res: Residuals) -> Gradients:
    """Partial derivatives of J at the model the residuals were computed from.

    ``gradient_mode="exact"`` gives the true derivative of the smoothness
    term, which couples ``U_t`` to both neighbours. ``"paper-compat"`` keeps
    only the forward difference ``2 * lambda2 * (U_t - U_{t+1})``.
    """
    U, V, W = model.U, model.V, model.W
    lam1, lam2, beta = hp.lambda1, hp.lambda2, hp.beta

    temporal = res.delta_u.copy()
    if hp.gradient_mode == "exact":
        temporal[1:] -= res.delta_u[:-1]

    gU = np.empty_like(U)
    gV = 2 * lam1 * V
    gW = 2 * lam1 * W
    for t in range(model.T):
        dA, dC = res.delta_a[t], res.delta_c[t]
        gU[t] = 2 * lam1 * U[t] - 2 * (dA @ V + beta * (dC @ W)) + 2 * lam2 * temporal[t]
        gV -= 2 * (dA.T @ U[t])
        gW -= 2 * beta * (dC.T @ U[t])
    return Gradients(gU, gV, gW)


def gradient_step(model: FactorModel, grads: Gradients, alpha: float) -> FactorModel:
    """Simultaneous projected step ``X <- max(0, X - alpha * dJ/dX)``."""
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    with np.errstate(over="ignore", invalid="ignore"):
        U = np.maximum(model.U - alpha * grads.U, 0.0)
        V = np.maximum(model.V - alpha * grads.V, 0.0)
        W = np.maximum(model.W - alpha * grads.W, 0.0)
    if not (np.isfinite(U).all() and np.isfinite(V).all() and np.isfinite(W).all()):
        raise DivergenceError(None, None, "factor matrices are not finite")
    return FactorModel(U, V, W)


# --------------------------------------------------------------------------
# fitting


def initialize(network: TemporalNetwork, rank: int, seed: int) -> FactorModel:
    """Uniform(0, 1) initial factors, fully determined by ``seed``."""
    rng = np.random.default_rng(seed)
    U = rng.random((network.T, network.n, rank))
    V = rng.random((network.n, rank))
    W = rng.random((network.d, rank))
    return FactorModel(U, V, W)


@dataclass
class FitResult:
    model: FactorModel
    trace: np.ndarray
    hyperparameters: Hyperparameters
    masks: Masks = field(repr=False)
    iterations: int
    converged: bool
    halvings: int = 0

    @property
    def objective(self) -> float:
        return float(self.trace[-1])


def fit(
    network: TemporalNetwork,
    hp: Hyperparameters,
    *,
    init: Optional[FactorModel] = None,
    masks: Optional[Masks] = None,
    require_descent: bool = False,
) -> FitResult:
    """Run projected gradient descent from ``init`` (default: seeded uniform).

    ``trace[i]`` is the objective after ``i`` updates, so the trace has
    ``iterations + 1`` entries and ends with the objective of the returned
    model. Stops after ``hp.max_iters`` updates or once the relative
    objective change drops below ``hp.tol``.

    Raises ``DivergenceError`` if the objective stops being finite, and
    ``NonDescentError`` if ``require_descent`` is set and the objective
    increases.
    """
    model = init if init is not None else initialize(network, hp.rank, hp.seed)
    if model.rank != hp.rank:
        raise ValueError(f"initial model has rank {model.rank}, hyperparameters say {hp.rank}")
    if masks is None:
        masks = sample_active_mask(network, hp.neg_sample_ratio, hp.seed)
    _check_shapes(network, model, masks)

    trace = []
    converged = False
    iteration = 0
    with np.errstate(over="ignore", invalid="ignore"):
        while True:
            res = compute_residuals(network, model, masks)
            J = objective_from_residuals(model, hp, res)
            last = trace[-1] if trace else None
            if not np.isfinite(J):
                raise DivergenceError(iteration, last)
            if last is not None:
                if require_descent and J > last * (1 + DESCENT_RTOL):
                    raise NonDescentError(iteration, last, f"objective increased to {J!r}")
                if abs(last - J) / max(last, EPS) < hp.tol:
                    trace.append(J)
                    converged = True
                    break
            trace.append(J)
            if iteration == hp.max_iters:
                break
            grads = compute_gradients(network, model, hp, res)
            try:
                model = gradient_step(model, grads, hp.alpha)
            except DivergenceError as err:
                raise DivergenceError(iteration + 1, J, err.reason) from None
            iteration += 1
    return FitResult(model, np.asarray(trace), hp, masks, iteration, converged)


def fit_with_backoff(
    network: TemporalNetwork,
    hp: Hyperparameters,
    *,
    max_halvings: int = 3,
    require_descent: bool = True,
    init: Optional[FactorModel] = None,
    masks: Optional[Masks] = None,
) -> FitResult:
    """``fit``, restarting from the same initialization with half the step
    size whenever the run diverges (or, with ``require_descent``, whenever the
    objective goes up). ``result.hyperparameters.alpha`` is the step size
    that succeeded."""
    if masks is None:
        masks = sample_active_mask(network, hp.neg_sample_ratio, hp.seed)
    error = None
    for halvings in range(max_halvings + 1):
        try:
            result = fit(network, hp, init=init, masks=masks, require_descent=require_descent)
        except DivergenceError as err:
            error = err
            logger.info("alpha=%g failed (%s); halving", hp.alpha, err)
            hp = hp.replace(alpha=hp.alpha / 2)
            continue
        result.halvings = halvings
        return result
    raise error
