"""Optimal two-draft acceptance via maximum flow.

The acceptance-only linear program for k = 2 is solved as a max-flow problem
on the token network (source -> token with the first-draft marginal, token ->
token with pair mass, token -> sink with target mass). Its value is the best
achievable acceptance probability; ``1 - value`` is the optimal membership
cost.

The solver works on a node-split copy of that network (each token gets a
"drafted first" node and an "accepted" node). Every flow on the split graph
is a flow on the token network of the same value and vice versa, but split
flows never relay mass token -> token -> token, so each witness maps onto
per-pair acceptance entries directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._dinic import Dinic
from .draftjoint import PairJoint
from .errors import ConsistencyError, InvalidArgument, ResourceLimit
from .simplex import EMPTY_RESIDUAL, sample_categorical
from .verify import UNSAMPLEABLE, VerifyOutcome, hub_acceptance, hub_tables

SCALE_BITS = 64
MAX_COUPLING_V = 16
PLAN_TOL = 1e-9


@dataclass(frozen=True)
class FlowNetwork:
    source_cap: np.ndarray  # g(s, v)
    sink_cap: np.ndarray  # g(v, t)
    edge_u: np.ndarray
    edge_v: np.ndarray
    edge_cap: np.ndarray  # g(u, v), u != v

    @property
    def size(self) -> int:
        return self.source_cap.size

    @property
    def n_edges(self) -> int:
        return self.edge_u.size


@dataclass(frozen=True)
class FlowResult:
    value: float
    source_flow: np.ndarray
    sink_flow: np.ndarray
    edge_flow: np.ndarray


def build_flow(joint: PairJoint, p) -> FlowNetwork:
    p = np.asarray(p, dtype=np.float64)
    if p.size != joint.size:
        raise InvalidArgument("joint and target have different vocabulary sizes")
    x1, x2, mass = joint.support()
    off = x1 != x2
    return FlowNetwork(
        source_cap=np.asarray(joint.first_marginal(), dtype=np.float64),
        sink_cap=p.copy(),
        edge_u=x1[off],
        edge_v=x2[off],
        edge_cap=mass[off],
    )


def _to_grid(x: np.ndarray, scale: int) -> list[int]:
    # floor keeps every integer flow feasible for the real capacities
    return [int(v) for v in np.floor(np.asarray(x) * scale)]


def max_flow(net: FlowNetwork, scale_bits: int = SCALE_BITS) -> FlowResult:
    """Exact max flow after snapping capacities down to a 2**-scale_bits grid.

    The reported value is within ``(V + edges) * 2**-scale_bits`` of the
    real-valued optimum.
    """
    V = net.size
    scale = 1 << scale_bits
    s, t = 0, 1
    src = lambda u: 2 + u  # noqa: E731
    snk = lambda u: 2 + V + u  # noqa: E731
    g = Dinic(2 + 2 * V)
    cs = _to_grid(net.source_cap, scale)
    ct = _to_grid(net.sink_cap, scale)
    ce = _to_grid(net.edge_cap, scale)
    s_edges = [g.add_edge(s, src(u), cs[u]) for u in range(V)]
    for u in range(V):
        g.add_edge(src(u), snk(u), cs[u])
    t_edges = [g.add_edge(snk(v), t, ct[v]) for v in range(V)]
    e_edges = [g.add_edge(src(int(u)), snk(int(v)), c)
               for u, v, c in zip(net.edge_u, net.edge_v, ce)]
    total = g.max_flow(s, t)
    return FlowResult(
        value=total / scale,
        source_flow=np.array([g.flow_on(e) for e in s_edges], dtype=np.float64) / scale,
        sink_flow=np.array([g.flow_on(e) for e in t_edges], dtype=np.float64) / scale,
        edge_flow=np.array([g.flow_on(e) for e in e_edges], dtype=np.float64) / scale,
    )


def optimal_acceptance(joint: PairJoint, p) -> float:
    """Best achievable total acceptance for drafts drawn from `joint`."""
    return max_flow(build_flow(joint, p)).value


# ------------------------------------------------------------------- plans


@dataclass(frozen=True)
class SimplifiedPlan:
    """Acceptance entries of a two-draft transport plan, on the support of Q.

    ``accept1[i]`` is the mass of pair ``(x1[i], x2[i])`` that accepts the
    first draft, ``accept2[i]`` the mass that accepts the second.
    """

    joint: PairJoint
    p: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    mass: np.ndarray
    accept1: np.ndarray
    accept2: np.ndarray
    _index: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self._index.update({(int(a), int(b)): i for i, (a, b) in enumerate(zip(self.x1, self.x2))})

    @property
    def size(self) -> int:
        return self.p.size

    def total(self) -> float:
        return math.fsum(self.accept1) + math.fsum(self.accept2)

    def accepted_per_token(self) -> np.ndarray:
        V = self.size
        return (np.bincount(self.x1, weights=self.accept1, minlength=V)
                + np.bincount(self.x2, weights=self.accept2, minlength=V))

    def leftover(self) -> np.ndarray:
        return np.maximum(self.mass - self.accept1 - self.accept2, 0.0)

    def target_residual(self) -> np.ndarray:
        return np.maximum(self.p - self.accepted_per_token(), 0.0)

    def entry(self, x1: int, x2: int) -> tuple[float, float, float]:
        i = self._index.get((x1, x2))
        if i is None:
            return 0.0, 0.0, 0.0
        return float(self.mass[i]), float(self.accept1[i]), float(self.accept2[i])

    def dense(self) -> tuple[np.ndarray, np.ndarray]:
        V = self.size
        a1 = np.zeros((V, V))
        a2 = np.zeros((V, V))
        a1[self.x1, self.x2] = self.accept1
        a2[self.x1, self.x2] = self.accept2
        return a1, a2

    def violations(self, tol: float = PLAN_TOL) -> list[str]:
        out = []
        if np.any(self.accept1 < -tol) or np.any(self.accept2 < -tol):
            out.append("negative acceptance entry")
        over = self.accept1 + self.accept2 - self.mass
        if np.any(over > tol):
            out.append(f"pair capacity exceeded by {over.max():.3e}")
        excess = self.accepted_per_token() - self.p
        if np.any(excess > tol):
            out.append(f"target mass exceeded by {excess.max():.3e}")
        return out


def plan_cost(plan: SimplifiedPlan) -> float:
    return 1.0 - plan.total()


def _waterfill(amount: float, room: np.ndarray) -> np.ndarray:
    """Spread `amount` over slots, largest room first, never exceeding room."""
    order = np.argsort(-room, kind="stable")
    r = room[order]
    before = np.concatenate([[0.0], np.cumsum(r)[:-1]])
    fill = np.clip(amount - before, 0.0, r)
    out = np.empty_like(room)
    out[order] = fill
    return out


def flow_to_plan(net: FlowNetwork, flow: FlowResult, joint: PairJoint, p) -> SimplifiedPlan:
    p = np.asarray(p, dtype=np.float64)
    x1, x2, mass = joint.support()
    edge_idx = {(int(u), int(v)): i for i, (u, v) in enumerate(zip(net.edge_u, net.edge_v))}
    accept2 = np.zeros(mass.size)
    for i, (u, v) in enumerate(zip(x1, x2)):
        j = edge_idx.get((int(u), int(v)))
        if j is not None:
            accept2[i] = flow.edge_flow[j]
    out_flow = np.bincount(net.edge_u, weights=flow.edge_flow, minlength=net.size)
    direct = flow.source_flow - out_flow
    if np.any(direct < -1e-12):
        raise ConsistencyError("witness flow relays mass between tokens")
    direct = np.maximum(direct, 0.0)
    accept1 = np.zeros(mass.size)
    order = np.argsort(x1, kind="stable")
    bounds = np.searchsorted(x1[order], np.arange(net.size + 1))
    for u in range(net.size):
        idx = order[bounds[u]:bounds[u + 1]]
        if direct[u] <= 0 or idx.size == 0:
            continue
        room = np.maximum(mass[idx] - accept2[idx], 0.0)
        if math.fsum(room) < direct[u] - 1e-12:
            raise ConsistencyError(f"first-slot acceptance of token {u} does not fit its pairs")
        accept1[idx] = _waterfill(direct[u], room)
    return SimplifiedPlan(joint, p, x1, x2, mass, accept1, accept2)


def optimal_plan(joint: PairJoint, p) -> tuple[SimplifiedPlan, FlowResult]:
    net = build_flow(joint, p)
    flow = max_flow(net)
    return flow_to_plan(net, flow, joint, p), flow


def spechub_plan(p, q) -> SimplifiedPlan:
    """The closed-form hub plan, written out as acceptance entries."""
    p = np.asarray(p, dtype=np.float64)
    t = hub_tables(p, q)
    acc = hub_acceptance(p, q)
    a = t.hub
    joint = t.joint
    x1, x2, mass = joint.support()
    accept1 = np.zeros(mass.size)
    accept2 = np.zeros(mass.size)
    col = x2 == a  # pairs (x, a)
    row = ~col  # pairs (a, x)
    accept1[col] = acc.slot1[x1[col]]
    if t.col_left_sum > 0:
        accept2[col] = acc.slot2[a] * t.col_left[x1[col]] / t.col_left_sum
    accept2[row] = acc.slot2[x2[row]]
    if t.row_left_sum > 0:
        accept1[row] = acc.slot1[a] * t.row_left[x2[row]] / t.row_left_sum
    return SimplifiedPlan(joint, p, x1, x2, mass, accept1, accept2)


# --------------------------------------------------------------- couplings


def reconstruct_full_coupling(plan: SimplifiedPlan) -> np.ndarray:
    """Expand a plan into the full tensor pi[x1, x2, y].

    Leftover pair mass is spread over targets in proportion to the
    unallocated target mass. For an optimal plan the unallocated mass of any
    token in a pair with leftover is zero, so only y outside the pair
    receives mass; for sub-optimal plans the same rule still yields a valid
    coupling.
    """
    V = plan.size
    if V > MAX_COUPLING_V:
        raise ResourceLimit(f"full coupling limited to V <= {MAX_COUPLING_V}, got {V}")
    pi = np.zeros((V, V, V))
    np.add.at(pi, (plan.x1, plan.x2, plan.x1), plan.accept1)
    np.add.at(pi, (plan.x1, plan.x2, plan.x2), plan.accept2)
    r = plan.target_residual()
    R = math.fsum(r)
    if R > 0:
        np.add.at(pi, (plan.x1, plan.x2), plan.leftover()[:, None] * (r / R)[None, :])
    return pi


def membership_cost(pi: np.ndarray) -> float:
    V = pi.shape[0]
    y = np.arange(V)
    hit = (y[:, None, None] == y[None, None, :]) | (y[None, :, None] == y[None, None, :])
    return math.fsum(pi[~hit])


def coupling_marginal_errors(pi: np.ndarray, joint: PairJoint, p) -> tuple[float, float]:
    """Max absolute deviation of (draft-pair marginal, target marginal)."""
    pair_err = np.abs(pi.sum(axis=2) - joint.to_dense()).max()
    target_err = np.abs(pi.sum(axis=(0, 1)) - np.asarray(p)).max()
    return float(pair_err), float(target_err)


# ---------------------------------------------------------------- execution


def otm_accept_rule(plan: SimplifiedPlan, pair: tuple[int, int], rng: np.random.Generator) -> VerifyOutcome:
    """Verify a sampled pair so that outcomes follow `plan`."""
    x1, x2 = int(pair[0]), int(pair[1])
    mass, a1, a2 = plan.entry(x1, x2)
    if mass <= UNSAMPLEABLE:
        raise InvalidArgument(f"pair {pair} has zero draft mass")
    u = rng.random()
    if u < a1 / mass:
        return VerifyOutcome(accepted=x1, position=1)
    if u < (a1 + a2) / mass:
        return VerifyOutcome(accepted=x2, position=2)
    r = plan.target_residual()
    R = math.fsum(r)
    res = r / R if R > EMPTY_RESIDUAL else plan.p
    return VerifyOutcome(residual=res, bonus=sample_categorical(res, rng))


def plan_output_dist(plan: SimplifiedPlan) -> np.ndarray:
    """Exact law of the token emitted by `otm_accept_rule` over pairs ~ Q."""
    r = plan.target_residual()
    R = math.fsum(r)
    res = r / R if R > EMPTY_RESIDUAL else plan.p
    return plan.accepted_per_token() + math.fsum(plan.leftover()) * res

