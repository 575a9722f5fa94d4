"""Container for a dynamic attributed network: T snapshots over a fixed node set."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp


def _as_csr(matrix) -> sp.csr_matrix:
    if sp.issparse(matrix):
        out = sp.csr_matrix(matrix, dtype=np.float64)
    else:
        out = sp.csr_matrix(np.asarray(matrix, dtype=np.float64))
    out.sum_duplicates()
    out.eliminate_zeros()
    out.sort_indices()
    return out


@dataclass
class TemporalNetwork:
    """Snapshots ``A_t`` (n x n) and ``C_t`` (n x d) for t = 0..T-1.

    Matrices are stored as CSR with float64 entries. Explicit zeros are
    dropped, so ``nnz`` always counts the observed (non-zero) entries.
    """

    adjacency: Sequence
    content: Sequence
    directed: bool = False
    n: int = field(init=False)
    d: int = field(init=False)

    def __post_init__(self):
        self.adjacency = [_as_csr(a) for a in self.adjacency]
        self.content = [_as_csr(c) for c in self.content]
        if len(self.adjacency) < 1:
            raise ValueError("a temporal network needs at least one snapshot")
        if len(self.content) != len(self.adjacency):
            raise ValueError(
                f"got {len(self.adjacency)} adjacency and "
                f"{len(self.content)} content snapshots"
            )
        self.n = self.adjacency[0].shape[0]
        self.d = self.content[0].shape[1]
        if self.n < 1:
            raise ValueError("a temporal network needs at least one node")
        for t, (a, c) in enumerate(zip(self.adjacency, self.content)):
            if a.shape != (self.n, self.n):
                raise ValueError(f"adjacency[{t}] has shape {a.shape}, expected {(self.n, self.n)}")
            if c.shape != (self.n, self.d):
                raise ValueError(f"content[{t}] has shape {c.shape}, expected {(self.n, self.d)}")
            for name, m in (("adjacency", a), ("content", c)):
                if m.nnz and not np.all(np.isfinite(m.data)):
                    raise ValueError(f"{name}[{t}] has non-finite entries")
                if m.nnz and m.data.min() < 0:
                    raise ValueError(f"{name}[{t}] has negative entries")
            if not self.directed and (a != a.T).nnz:
                raise ValueError(f"adjacency[{t}] is not symmetric but the network is undirected")

    @property
    def T(self) -> int:
        return len(self.adjacency)

    def permuted(self, perm) -> "TemporalNetwork":
        """Relabel nodes so that new node ``i`` is old node ``perm[i]``."""
        perm = np.asarray(perm)
        return TemporalNetwork(
            [a[perm][:, perm] for a in self.adjacency],
            [c[perm] for c in self.content],
            directed=self.directed,
        )
