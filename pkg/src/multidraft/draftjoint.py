"""Joint distributions over ordered draft pairs, and draft samplers.

Two representations are used. `DenseJoint` holds a full V x V matrix and
serves the independent and without-replacement designs. `HubJoint` stores
only the hub row and column (O(V) memory), which is what keeps the hub
design linear in the vocabulary size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import DegenerateInput, InvalidArgument
from .simplex import EMPTY_RESIDUAL, sample_categorical, top_token


@dataclass(frozen=True)
class DenseJoint:
    matrix: np.ndarray

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def prob(self, x1: int, x2: int) -> float:
        return float(self.matrix[x1, x2])

    def to_dense(self) -> np.ndarray:
        return self.matrix

    def first_marginal(self) -> np.ndarray:
        return self.matrix.sum(axis=1)

    def support(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Arrays ``(x1, x2, mass)`` over pairs with positive mass, row-major."""
        x1, x2 = np.nonzero(self.matrix > 0)
        return x1, x2, self.matrix[x1, x2]


@dataclass(frozen=True)
class HubJoint:
    """Mass only on pairs containing the hub token.

    ``col[x] = Q(x, hub)`` and ``row[x] = Q(hub, x)``; both are zero at the
    hub index itself.
    """

    hub: int
    col: np.ndarray
    row: np.ndarray

    @property
    def size(self) -> int:
        return self.col.shape[0]

    def prob(self, x1: int, x2: int) -> float:
        if x2 == self.hub and x1 != self.hub:
            return float(self.col[x1])
        if x1 == self.hub and x2 != self.hub:
            return float(self.row[x2])
        return 0.0

    def to_dense(self) -> np.ndarray:
        m = np.zeros((self.size, self.size))
        m[:, self.hub] = self.col
        m[self.hub, :] = self.row
        return m

    def first_marginal(self) -> np.ndarray:
        out = self.col.copy()
        out[self.hub] = math.fsum(self.row)
        return out

    def support(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        others = np.flatnonzero(self.col > 0)
        row_idx = np.flatnonzero(self.row > 0)
        hub_c = np.full(others.size, self.hub)
        hub_r = np.full(row_idx.size, self.hub)
        x1 = np.concatenate([others, hub_r])
        x2 = np.concatenate([hub_c, row_idx])
        mass = np.concatenate([self.col[others], self.row[row_idx]])
        return x1, x2, mass


PairJoint = Union[DenseJoint, HubJoint]


def _check_not_degenerate(q: np.ndarray) -> int:
    a = top_token(q)
    if q[a] >= 1.0 - EMPTY_RESIDUAL:
        raise DegenerateInput(f"draft distribution is concentrated on token {a}")
    return a


def independent_joint(q) -> DenseJoint:
    q = np.asarray(q, dtype=np.float64)
    return DenseJoint(np.outer(q, q))


def wor_joint(q) -> DenseJoint:
    """Two draws without replacement: Q(x1, x2) = q(x1) q(x2) / (1 - q(x1))."""
    q = np.asarray(q, dtype=np.float64)
    _check_not_degenerate(q)
    if np.count_nonzero(q > 0) < 2:
        raise DegenerateInput("need at least two tokens with positive draft mass")
    total = math.fsum(q)
    # 1 - q(x1) as the sum of the other entries, accurate when q(x1) ~ 1
    rest = total - q
    for i in np.flatnonzero(q > 0.5 * total):
        rest[i] = math.fsum(np.delete(q, i))
    rest = np.where(rest > 0, rest, np.inf)
    m = q[:, None] * q[None, :] / rest[:, None]
    np.fill_diagonal(m, 0.0)
    return DenseJoint(m)


def hub_joint(q) -> HubJoint:
    q = np.asarray(q, dtype=np.float64)
    a = _check_not_degenerate(q)
    col = q.copy()
    col[a] = 0.0
    not_hub = math.fsum(col)
    row = q[a] * col / not_hub
    return HubJoint(a, col, row)


def sample_pair(joint: PairJoint, rng: np.random.Generator) -> tuple[int, int]:
    if isinstance(joint, HubJoint):
        # lay out [col..., row...] as one categorical over 2V outcomes
        idx = sample_categorical(np.concatenate([joint.col, joint.row]), rng)
        V = joint.size
        if idx < V:
            return idx, joint.hub
        return joint.hub, idx - V
    flat = joint.matrix.ravel()
    idx = sample_categorical(flat, rng)
    return divmod(idx, joint.size)


def sample_drafts_rrs(q, k: int, without_replacement: bool, rng: np.random.Generator) -> list[int]:
    """Draw k drafts from q, independently or sequentially without replacement."""
    q = np.asarray(q, dtype=np.float64)
    if k < 1:
        raise InvalidArgument("k must be at least 1")
    if not without_replacement:
        return [sample_categorical(q, rng) for _ in range(k)]
    if np.count_nonzero(q > 0) < k:
        raise DegenerateInput(f"fewer than {k} tokens with positive draft mass")
    w = q.copy()
    drafts = []
    for _ in range(k):
        x = sample_categorical(w, rng)
        drafts.append(x)
        w[x] = 0.0
    return drafts
