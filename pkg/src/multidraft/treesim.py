"""Token-tree decoding simulation.

A tree's root is the current context; every other node is a draft token, and
a node's children, in order, are the draft slots verified at that node.
Each simulated step walks down from the root, verifying one node at a time,
and ends with one bonus token: the residual sample after a rejection, or a
draw from the target at a leaf. Tokens per step therefore lie in
``[1, depth + 1]`` where ``depth`` counts draft levels.

Distributions are looked up by ``(step, node level)``, so siblings at the
same level share a (p, q) pair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Protocol

import numpy as np

from .draftjoint import sample_drafts_rrs
from .errors import InvalidArgument, ResourceLimit, TraceExhausted
from .simplex import sample_categorical
from .synthlab import LOGIT_LAWS, draw_logits, pair_from_logits
from .verify import RateVector, rrs_verify, single_draft_verify, spechub_step

SIM_METHODS = ("rrs", "rrsw", "spechub")
MAX_TREE_NODES = 1 << 16


@dataclass(frozen=True)
class TreeTopology:
    parents: tuple[int, ...]
    children: tuple[tuple[int, ...], ...]
    node_level: tuple[int, ...]

    @property
    def size(self) -> int:
        return len(self.parents)

    @property
    def root(self) -> int:
        return self.parents.index(-1)

    @property
    def levels(self) -> int:
        """Number of node levels, root included."""
        return max(self.node_level) + 1

    @property
    def depth(self) -> int:
        """Number of draft levels below the root."""
        return self.levels - 1

    @property
    def max_branching(self) -> int:
        return max(len(c) for c in self.children)

    def describe(self) -> str:
        return f"tree(nodes={self.size},levels={self.levels},branching<={self.max_branching})"


def load_tree(parents, max_nodes: int = MAX_TREE_NODES) -> TreeTopology:
    """Validate a parent vector (root marked -1). Children keep index order."""
    par = [int(x) for x in parents]
    n = len(par)
    if n == 0:
        raise InvalidArgument("tree needs at least one node")
    if n > max_nodes:
        raise ResourceLimit(f"tree has {n} nodes, cap is {max_nodes}")
    roots = [i for i, x in enumerate(par) if x == -1]
    if len(roots) != 1:
        raise InvalidArgument(f"tree must have exactly one root, found {len(roots)}")
    for i, x in enumerate(par):
        if x != -1 and not 0 <= x < n:
            raise InvalidArgument(f"node {i} has out-of-range parent {x}")
        if x == i:
            raise InvalidArgument(f"node {i} is its own parent")
    kids: list[list[int]] = [[] for _ in range(n)]
    for i, x in enumerate(par):
        if x >= 0:
            kids[x].append(i)
    level = [-1] * n
    level[roots[0]] = 0
    stack = [roots[0]]
    while stack:
        u = stack.pop()
        for v in kids[u]:
            level[v] = level[u] + 1
            stack.append(v)
    if min(level) < 0:
        raise InvalidArgument("parent vector contains a cycle")
    return TreeTopology(tuple(par), tuple(tuple(c) for c in kids), tuple(level))


def make_full_tree(branching: int, depth: int, max_nodes: int = MAX_TREE_NODES) -> TreeTopology:
    """Complete tree with `depth` node levels (root included)."""
    if branching < 1 or depth < 1:
        raise InvalidArgument("branching and depth must be at least 1")
    n = depth if branching == 1 else (branching ** depth - 1) // (branching - 1)
    if n > max_nodes:
        raise ResourceLimit(f"full tree would have {n} nodes, cap is {max_nodes}")
    # breadth-first numbering: parent of node i is (i - 1) // b
    return load_tree([-1] + [(i - 1) // branching for i in range(1, n)], max_nodes)


# ---------------------------------------------------------------- processes


class DistProcess(Protocol):
    def get(self, step: int, level: int) -> tuple[np.ndarray, np.ndarray]: ...

    def describe(self) -> str: ...


@dataclass(frozen=True)
class SyntheticProcess:
    """Toy-generator pairs, a pure function of ``(seed, step, level)``."""

    T: float
    lam: float
    V: int = 50
    seed: int = 0
    logits: str = "normal"

    def __post_init__(self):
        if not self.T > 0 or not 0 <= self.lam <= 1 or self.V < 2 or self.seed < 0:
            raise InvalidArgument("synthetic process needs T > 0, lam in [0, 1], V >= 2, seed >= 0")
        if self.logits not in LOGIT_LAWS:
            raise InvalidArgument(f"unknown logit law {self.logits!r}")

    def get(self, step: int, level: int):
        rng = np.random.default_rng([self.seed, 2, step, level])
        u_p, u_q = draw_logits(rng, self.V, self.logits)
        return pair_from_logits(u_p, u_q, self.T, self.lam)

    def describe(self) -> str:
        return f"synthetic:{self.T!r}:{self.lam!r}:{self.V}:{self.logits}:seed={self.seed}"


class TraceProcess:
    """Replays recorded pairs keyed by ``(step, level)``."""

    def __init__(self, records: Mapping[tuple[int, int], tuple[np.ndarray, np.ndarray]], label: str = "trace"):
        self._records = dict(records)
        self._label = label

    def __len__(self) -> int:
        return len(self._records)

    def covers(self, step: int, level: int) -> bool:
        return (step, level) in self._records

    def get(self, step: int, level: int):
        try:
            return self._records[(step, level)]
        except KeyError:
            raise TraceExhausted(
                f"trace has no record for step {step}, level {level} "
                f"({len(self._records)} records available)"
            ) from None

    def describe(self) -> str:
        return self._label


@dataclass(frozen=True)
class ConstantProcess:
    p: np.ndarray
    q: np.ndarray

    def get(self, step: int, level: int):
        return self.p, self.q

    def describe(self) -> str:
        return "constant"


# --------------------------------------------------------------- simulation


def _check_method(tree: TreeTopology, method: str) -> None:
    if method not in SIM_METHODS:
        raise InvalidArgument(f"method must be one of {SIM_METHODS}, got {method!r}")
    if method == "spechub" and any(len(c) > 2 for c in tree.children):
        raise InvalidArgument("spechub needs at most two children per node")


def _verify_node(method: str, p, q, k: int, rng):
    if k == 1:
        return single_draft_verify(p, q, sample_categorical(q, rng), rng)
    if method == "spechub":
        return spechub_step(p, q, rng)
    wor = method == "rrsw"
    return rrs_verify(p, q, sample_drafts_rrs(q, k, wor, rng), wor, rng)


def _walk(tree: TreeTopology, proc: DistProcess, method: str, step: int, rng) -> tuple[int, int | None]:
    node = tree.root
    accepted = 0
    root_position = None
    while True:
        p, q = proc.get(step, tree.node_level[node])
        kids = tree.children[node]
        if not kids:
            sample_categorical(p, rng)  # bonus token from the leaf's target
            return accepted + 1, root_position
        out = _verify_node(method, p, q, len(kids), rng)
        if out.accepted is None:
            return accepted + 1, root_position
        if node == tree.root:
            root_position = out.position
        accepted += 1
        node = kids[out.position - 1]


def simulate_step(tree: TreeTopology, proc: DistProcess, method: str, step: int,
                  rng: np.random.Generator) -> int:
    """Tokens produced in one step: accepted drafts on the path plus one bonus."""
    _check_method(tree, method)
    return _walk(tree, proc, method, step, rng)[0]


@dataclass(frozen=True)
class SimReport:
    steps: int
    mean_tokens_per_step: float
    std_error: float
    per_position_rates: RateVector
    method: str
    tree: str
    process: str


def run_sim(tree: TreeTopology, proc: DistProcess, method: str, steps: int,
            rng: np.random.Generator) -> SimReport:
    if steps < 1:
        raise InvalidArgument("steps must be at least 1")
    _check_method(tree, method)
    slots = max(len(tree.children[tree.root]), 1)
    tokens = np.empty(steps, dtype=np.int64)
    hits = np.zeros(slots, dtype=np.int64)
    for s in range(steps):
        tokens[s], pos = _walk(tree, proc, method, s, rng)
        if pos is not None:
            hits[pos - 1] += 1
    mean = math.fsum(tokens) / steps
    se = float(tokens.std(ddof=1)) / math.sqrt(steps) if steps > 1 else 0.0
    freq = hits / steps
    rates = RateVector(freq, stderr=np.sqrt(freq * (1 - freq) / steps))
    return SimReport(steps, mean, se, rates, method, tree.describe(), proc.describe())


def expected_tokens_given_rates(tree: TreeTopology, slot_rates) -> float:
    """E(node) = 1 + sum_i rate_i * E(child_i), with E(leaf) = 1."""
    rates = slot_rates.per_position if isinstance(slot_rates, RateVector) else slot_rates
    rates = np.asarray(rates, dtype=np.float64)
    if np.any(rates < 0) or math.fsum(rates) > 1 + 1e-12:
        raise InvalidArgument("slot rates must be non-negative and sum to at most 1")
    if rates.size < tree.max_branching:
        raise InvalidArgument(
            f"{rates.size} slot rates given but a node has {tree.max_branching} children"
        )
    value = [1.0] * tree.size
    for u in sorted(range(tree.size), key=lambda i: -tree.node_level[i]):
        kids = tree.children[u]
        if kids:
            value[u] = 1.0 + math.fsum(rates[i] * value[c] for i, c in enumerate(kids))
    return value[tree.root]
