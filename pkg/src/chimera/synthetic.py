"""Planted-partition generator for dynamic attributed networks.

Nodes start in ``g`` near-equal groups. Every snapshot has exactly ``m``
undirected edges; each edge is intra-group with probability ``p`` and
otherwise joins two distinct, uniformly chosen groups. Each group owns a
block of ``words_per_group`` terms and every node emits ``tokens_per_node``
tokens from its group's block, with each token moved to another group's
block with probability ``word_crossover``. Between snapshots a node moves to
another group with probability ``transition``, with at most
``floor(max_transition_fraction * n)`` movers per step.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .network import TemporalNetwork


@dataclass(frozen=True)
class SyntheticConfig:
    n: int = 5000
    m: int = 20000
    g: int = 5
    words_per_group: int = 5
    T: int = 3
    p: float = 0.75
    #: ``None`` means ``1 - p``: words cross groups as often as edges do.
    word_crossover: Optional[float] = None
    transition: float = 0.05
    max_transition_fraction: float = 0.1
    tokens_per_node: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.g < 1 or self.T < 1 or self.words_per_group < 0:
            raise ValueError("n, g and T must be positive and words_per_group non-negative")
        if self.g > self.n:
            raise ValueError(f"cannot split {self.n} nodes into {self.g} groups")
        if not 0 < self.p <= 1:
            raise ValueError(f"p must lie in (0, 1], got {self.p}")
        if not 0 <= self.max_transition_fraction <= 1:
            raise ValueError("max_transition_fraction must lie in [0, 1]")
        if not 0 <= self.transition <= 1:
            raise ValueError("transition must lie in [0, 1]")
        if self.word_crossover is not None and not 0 <= self.word_crossover <= 1:
            raise ValueError("word_crossover must lie in [0, 1]")
        if self.m < 0 or self.m > self.n * (self.n - 1) // 2:
            raise ValueError(f"{self.m} edges do not fit in a simple graph on {self.n} nodes")
        if self.tokens_per_node < 0:
            raise ValueError("tokens_per_node must be non-negative")

    @property
    def crossover(self) -> float:
        return 1 - self.p if self.word_crossover is None else self.word_crossover

    @property
    def d(self) -> int:
        return self.g * self.words_per_group

    def replace(self, **changes) -> "SyntheticConfig":
        return dataclasses.replace(self, **changes)


@dataclass
class SyntheticDataset:
    network: TemporalNetwork
    truth: np.ndarray  # (T, n) group ids
    config: SyntheticConfig


def initial_groups(n, g, rng) -> np.ndarray:
    labels = np.arange(n) * g // n
    return rng.permutation(labels)


def transition_groups(labels, g, prob, max_fraction, rng) -> np.ndarray:
    n = len(labels)
    movers = np.flatnonzero(rng.random(n) < prob) if g > 1 else np.empty(0, dtype=int)
    cap = int(np.floor(max_fraction * n))
    if len(movers) > cap:
        movers = np.sort(rng.choice(movers, size=cap, replace=False))
    out = labels.copy()
    if len(movers):
        # a shift by 1..g-1 is a uniform choice among the other groups
        out[movers] = (labels[movers] + rng.integers(1, g, size=len(movers))) % g
    return out


def _draw_pairs(kind_intra, labels, members, g, rng):
    """One candidate endpoint pair per entry of ``kind_intra``."""
    k = len(kind_intra)
    u = np.empty(k, dtype=np.int64)
    v = np.empty(k, dtype=np.int64)

    intra = np.flatnonzero(kind_intra)
    if len(intra):
        u[intra] = rng.integers(0, len(labels), size=len(intra))
        for grp in np.unique(labels[u[intra]]):
            sel = intra[labels[u[intra]] == grp]
            v[sel] = members[grp][rng.integers(0, len(members[grp]), size=len(sel))]

    inter = np.flatnonzero(~kind_intra)
    if len(inter):
        ga = rng.integers(0, g, size=len(inter))
        gb = (ga + rng.integers(1, g, size=len(inter))) % g
        for grp in range(g):
            sel = inter[ga == grp]
            u[sel] = members[grp][rng.integers(0, len(members[grp]), size=len(sel))]
            sel = inter[gb == grp]
            v[sel] = members[grp][rng.integers(0, len(members[grp]), size=len(sel))]
    return u, v


def generate_edges(labels, m, p, rng, max_rounds=1000) -> np.ndarray:
    """Exactly ``m`` distinct undirected edges as an (m, 2) array with ``u < v``."""
    n = len(labels)
    g = int(labels.max()) + 1 if n else 1
    members = [np.flatnonzero(labels == grp) for grp in range(g)]
    sizes = np.array([len(x) for x in members])
    intra_capacity = int((sizes * (sizes - 1) // 2).sum())
    inter_capacity = n * (n - 1) // 2 - intra_capacity
    if g == 1 or (sizes > 0).sum() < 2:
        p = 1.0

    kind = rng.random(m) < p
    n_intra = int(kind.sum())
    if n_intra > intra_capacity or m - n_intra > inter_capacity:
        raise ValueError(
            f"cannot place {n_intra} intra-group and {m - n_intra} inter-group edges "
            f"(capacity {intra_capacity} / {inter_capacity})"
        )

    keys = np.full(m, -1, dtype=np.int64)
    pending = np.arange(m)
    for _ in range(max_rounds):
        if not len(pending):
            break
        u, v = _draw_pairs(kind[pending], labels, members, g, rng)
        lo, hi = np.minimum(u, v), np.maximum(u, v)
        cand = np.where(lo == hi, -1, lo * n + hi)
        keys[pending] = cand
        # keep the first occurrence of each key; everything else is redrawn
        valid = keys >= 0
        _, first = np.unique(keys[valid], return_index=True)
        keep = np.zeros(m, dtype=bool)
        keep[np.flatnonzero(valid)[first]] = True
        pending = np.flatnonzero(~keep)
        keys[pending] = -1
    else:
        raise ValueError(f"could not place {m} distinct edges")
    return np.stack([keys // n, keys % n], axis=1)


def generate_content(labels, g, words_per_group, tokens, crossover, rng) -> sp.csr_matrix:
    n = len(labels)
    d = g * words_per_group
    if d == 0 or tokens == 0:
        return sp.csr_matrix((n, d))
    owner = np.repeat(labels, tokens)
    group = owner.copy()
    if g > 1:
        moved = rng.random(len(owner)) < crossover
        group[moved] = (owner[moved] + rng.integers(1, g, size=int(moved.sum()))) % g
    word = group * words_per_group + rng.integers(0, words_per_group, size=len(owner))
    node = np.repeat(np.arange(n), tokens)
    return sp.csr_matrix((np.ones(len(node)), (node, word)), shape=(n, d))


def generate(config: SyntheticConfig) -> SyntheticDataset:
    rng = np.random.default_rng(config.seed)
    labels = initial_groups(config.n, config.g, rng)
    truth, adjacency, content = [], [], []
    for t in range(config.T):
        if t:
            labels = transition_groups(labels, config.g, config.transition, config.max_transition_fraction, rng)
        edges = generate_edges(labels, config.m, config.p, rng)
        a = sp.coo_matrix((np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(config.n, config.n))
        adjacency.append((a + a.T).tocsr())
        content.append(
            generate_content(labels, config.g, config.words_per_group, config.tokens_per_node, config.crossover, rng)
        )
        truth.append(labels.copy())
    network = TemporalNetwork(adjacency, content, directed=False)
    return SyntheticDataset(network, np.array(truth), config)
