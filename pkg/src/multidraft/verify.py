"""Token-level draft verification.

Covers single-draft rejection sampling, recursive rejection sampling (with
and without replacement) and the hub-pair scheme. Each method has a
stochastic verifier, an analytic acceptance-rate calculator, and goes
through the exhaustive enumerator in `exact_output_dist` / `exact_rates`.

The enumerator and the samplers share the per-branch acceptance
probabilities (`_ratio`, `_rrs_stage`, `_hub_branches`), so the oracle
checks the algorithm as executed rather than a re-derivation of it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .draftjoint import HubJoint, hub_joint, sample_drafts_rrs, sample_pair
from .errors import InvalidArgument, ResourceLimit
from .simplex import EMPTY_RESIDUAL, overlap, residual, sample_categorical, top_token

METHODS = ("single", "rrs", "rrsw", "spechub")
UNSAMPLEABLE = 1e-300
MAX_EXACT_V = 16
MAX_EXACT_K = 3


@dataclass(frozen=True)
class VerifyOutcome:
    accepted: int | None = None
    position: int | None = None
    residual: np.ndarray | None = None
    bonus: int | None = None

    @property
    def token(self) -> int:
        return self.accepted if self.accepted is not None else self.bonus


@dataclass(frozen=True)
class RateVector:
    """Unconditional acceptance probability of each draft slot."""

    per_position: np.ndarray
    stderr: np.ndarray | None = None
    total_stderr: float | None = None
    fallback: bool = False

    @property
    def total(self) -> float:
        return math.fsum(self.per_position)

    def conditional(self) -> np.ndarray:
        """Acceptance rate of slot i given every earlier slot was rejected."""
        reach = 1.0 - np.concatenate([[0.0], np.cumsum(self.per_position)[:-1]])
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(reach > EMPTY_RESIDUAL, self.per_position / reach, 0.0)


def _ratio(num: float, den: float) -> float:
    """min(1, num / den) with den below UNSAMPLEABLE treated as zero."""
    if den <= UNSAMPLEABLE:
        return 1.0 if num > 0 else 0.0
    return min(1.0, num / den)


def _accept(p: np.ndarray, q: np.ndarray, x: int, rng: np.random.Generator) -> bool:
    return rng.random() < _ratio(p[x], q[x])


def _rejection_outcome(res: np.ndarray, rng: np.random.Generator) -> VerifyOutcome:
    mass = math.fsum(res)
    res = res / mass
    return VerifyOutcome(residual=res, bonus=sample_categorical(res, rng))


# ---------------------------------------------------------------- single / RRS


def single_draft_verify(p, q, x: int, rng: np.random.Generator) -> VerifyOutcome:
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if q[x] <= UNSAMPLEABLE:
        raise InvalidArgument(f"draft token {x} has zero draft probability")
    if _accept(p, q, x, rng):
        return VerifyOutcome(accepted=x, position=1)
    r, _ = residual(p, q)
    # empty residual: rejection had probability ~0, fall back to p itself
    return _rejection_outcome(p if r is None else r, rng)


def _rrs_stage(p_i: np.ndarray, q_i: np.ndarray, x: int, without_replacement: bool):
    """State after rejecting draft x at one stage.

    Returns ``(p_next, q_next)``; ``p_next`` is None when the residual is
    empty (the step is fully covered).
    """
    r = np.maximum(p_i - q_i, 0.0)
    mass = math.fsum(r)
    p_next = r / mass if mass > EMPTY_RESIDUAL else None
    if without_replacement:
        q_next = q_i.copy()
        q_next[x] = 0.0
        s = math.fsum(q_next)
        q_next = q_next / s if s > 0 else q_next
    else:
        q_next = q_i
    return p_next, q_next


def rrs_verify(p, q, drafts, without_replacement: bool, rng: np.random.Generator) -> VerifyOutcome:
    """Recursive rejection sampling over `drafts` in order."""
    p_i = np.asarray(p, dtype=np.float64)
    q_i = np.asarray(q, dtype=np.float64)
    drafts = list(drafts)
    if not drafts:
        raise InvalidArgument("need at least one draft")
    if without_replacement and len(drafts) > np.count_nonzero(q_i > 0):
        raise InvalidArgument("more drafts than tokens in the draft support")
    for i, x in enumerate(drafts):
        if q_i[x] <= UNSAMPLEABLE:
            raise InvalidArgument(f"draft {i + 1} (token {x}) is not sampleable at its stage")
        if _accept(p_i, q_i, x, rng):
            return VerifyOutcome(accepted=x, position=i + 1)
        p_next, q_i = _rrs_stage(p_i, q_i, x, without_replacement)
        if p_next is None:
            break
        p_i = p_next
    return _rejection_outcome(p_i, rng)


# -------------------------------------------------------------------- SpecHub


@dataclass(frozen=True)
class HubTables:
    """Closed-form quantities of the hub plan for one (p, q).

    Names follow the two residual passes: after column pairs ``(x, a)`` and
    after row pairs ``(a, x)``.
    """

    joint: HubJoint
    p: np.ndarray
    p1: np.ndarray  # target left after column pairs; p1[a] = p[a]
    col_left: np.ndarray  # Q'(x, a)
    row_left: np.ndarray  # Q'(a, x)
    p2: np.ndarray  # final residual, unnormalized
    row_left_sum: float
    col_left_sum: float
    hub_after_row: float  # p'(a) = max(p(a) - sum Q'(a, .), 0)

    @property
    def hub(self) -> int:
        return self.joint.hub


def hub_tables(p, q) -> HubTables:
    p = np.asarray(p, dtype=np.float64)
    joint = hub_joint(q)
    a = joint.hub
    qa = joint.col  # q off-hub, zero at a
    p1 = np.maximum(p - qa, 0.0)
    p1[a] = p[a]
    col_left = np.maximum(qa - p, 0.0)
    col_left[a] = 0.0
    row_left = np.maximum(joint.row - p1, 0.0)
    row_left[a] = 0.0
    p2 = np.maximum(p1 - joint.row, 0.0)
    row_left_sum = math.fsum(row_left)
    col_left_sum = math.fsum(col_left)
    hub_after_row = max(p[a] - row_left_sum, 0.0)
    p2[a] = max(hub_after_row - col_left_sum, 0.0)
    return HubTables(joint, p, p1, col_left, row_left, p2, row_left_sum, col_left_sum, hub_after_row)


def _hub_branches(t: HubTables, pair: tuple[int, int]):
    """Ordered candidate checks for one sampled pair.

    Returns ``[(token, position, probability), ...]`` where each probability
    is conditional on all earlier candidates being rejected.
    """
    x1, x2 = pair
    a = t.hub
    if x2 == a and x1 != a:
        return [
            (x1, 1, _ratio(t.p[x1], t.joint.col[x1])),
            (a, 2, _ratio(t.hub_after_row, t.col_left_sum)),
        ]
    if x1 == a and x2 != a:
        return [
            (x2, 2, _ratio(t.p1[x2], t.joint.row[x2])),
            (a, 1, _ratio(t.p[a], t.row_left_sum)),
        ]
    raise InvalidArgument(f"pair {pair} does not contain the hub token {a}")


def _hub_residual(t: HubTables) -> np.ndarray:
    for cand in (t.p2, t.p1, t.p):
        if math.fsum(cand) > EMPTY_RESIDUAL:
            return cand
    return t.p


def spechub_verify(p, q, pair: tuple[int, int], rng: np.random.Generator,
                   tables: HubTables | None = None) -> VerifyOutcome:
    t = tables if tables is not None else hub_tables(p, q)
    for token, position, prob in _hub_branches(t, pair):
        if rng.random() < prob:
            return VerifyOutcome(accepted=token, position=position)
    return _rejection_outcome(_hub_residual(t), rng)


def is_degenerate(q: np.ndarray) -> bool:
    return q[top_token(q)] >= 1.0 - EMPTY_RESIDUAL


def spechub_step(p, q, rng: np.random.Generator) -> VerifyOutcome:
    """Sample a hub pair and verify it; single-draft fallback for one-hot q."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if is_degenerate(q):
        return single_draft_verify(p, q, top_token(q), rng)
    t = hub_tables(p, q)
    return spechub_verify(p, q, sample_pair(t.joint, rng), rng, tables=t)


# ------------------------------------------------------------- analytic rates


def analytic_rates_rrs(p, q, k: int) -> RateVector:
    if k < 1:
        raise InvalidArgument("k must be at least 1")
    p_i = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    rates = np.zeros(k)
    reach = 1.0
    for i in range(k):
        alpha = overlap(p_i, q)
        rates[i] = reach * alpha
        reach *= 1.0 - alpha
        p_next, _ = residual(p_i, q)
        if p_next is None:
            break
        p_i = p_next
    return RateVector(rates)


@dataclass(frozen=True)
class HubAcceptance:
    """Accepted mass per token and slot under the hub plan."""

    slot1: np.ndarray
    slot2: np.ndarray
    hub: int

    @property
    def per_token(self) -> np.ndarray:
        return self.slot1 + self.slot2

    @property
    def hub_total(self) -> float:
        return float(self.slot1[self.hub] + self.slot2[self.hub])


def hub_acceptance(p, q) -> HubAcceptance:
    t = hub_tables(p, q)
    a = t.hub
    slot1 = np.minimum(t.p, t.joint.col)
    slot2 = np.minimum(t.p1, t.joint.row)
    slot1[a] = min(t.p[a], t.row_left_sum)
    slot2[a] = min(t.hub_after_row, t.col_left_sum)
    return HubAcceptance(slot1, slot2, a)


def analytic_rates_spechub(p, q) -> RateVector:
    acc = hub_acceptance(p, q)
    return RateVector(np.array([math.fsum(acc.slot1), math.fsum(acc.slot2)]))


# ---------------------------------------------------------------- Monte Carlo


def _one_trial(method: str, p, q, k: int, rng, tables) -> VerifyOutcome:
    if method == "single":
        return single_draft_verify(p, q, sample_categorical(q, rng), rng)
    if method in ("rrs", "rrsw"):
        wor = method == "rrsw"
        return rrs_verify(p, q, sample_drafts_rrs(q, k, wor, rng), wor, rng)
    if method == "spechub":
        if tables is None:
            return single_draft_verify(p, q, top_token(q), rng)
        return spechub_verify(p, q, sample_pair(tables.joint, rng), rng, tables=tables)
    raise InvalidArgument(f"unknown method {method!r}")


def _slot_count(method: str, k: int) -> int:
    if method == "single":
        return 1
    if method == "spechub":
        return 2
    return k


def mc_rates(method: str, p, q, k: int, trials: int, rng: np.random.Generator) -> RateVector:
    """Empirical per-slot acceptance frequencies over `trials` runs."""
    if trials < 1:
        raise InvalidArgument("trials must be at least 1")
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    slots = _slot_count(method, k)
    tables = None
    fallback = False
    if method == "spechub":
        if is_degenerate(q):
            fallback = True
        else:
            tables = hub_tables(p, q)
    counts = np.zeros(slots, dtype=np.int64)
    for _ in range(trials):
        out = _one_trial(method, p, q, k, rng, tables)
        if out.position is not None:
            counts[out.position - 1] += 1
    freq = counts / trials
    se = np.sqrt(freq * (1.0 - freq) / trials)
    tot = counts.sum() / trials
    return RateVector(freq, stderr=se, total_stderr=math.sqrt(tot * (1.0 - tot) / trials), fallback=fallback)


# ----------------------------------------------------------- exact enumeration


def _enumerate_rrs(p: np.ndarray, q: np.ndarray, k: int, wor: bool):
    V = p.size
    out = np.zeros(V)
    pos = np.zeros(k)

    def visit(i: int, p_i: np.ndarray, q_i: np.ndarray, weight: float):
        # weight: probability of reaching stage i with the current prefix
        for x in np.flatnonzero(q_i > UNSAMPLEABLE):
            w = weight * q_i[x]
            acc = _ratio(p_i[x], q_i[x])
            out[x] += w * acc
            pos[i] += w * acc
            rej = w * (1.0 - acc)
            if rej == 0.0:
                continue
            p_next, q_next = _rrs_stage(p_i, q_i, x, wor)
            if p_next is None:
                out[:] += rej * p_i
            elif i + 1 == k:
                out[:] += rej * p_next
            else:
                if wor and not np.any(q_next > UNSAMPLEABLE):
                    raise InvalidArgument("draft support exhausted before k draws")
                visit(i + 1, p_next, q_next, rej)

    visit(0, p, q, 1.0)
    return out, pos


def _enumerate_hub(p: np.ndarray, q: np.ndarray):
    V = p.size
    out = np.zeros(V)
    pos = np.zeros(2)
    if is_degenerate(q):
        a = top_token(q)
        acc = _ratio(p[a], q[a])
        out[a] += acc
        pos[0] += acc
        r, _ = residual(p, q)
        out += (1.0 - acc) * (p if r is None else r)
        return out, pos
    t = hub_tables(p, q)
    res = _hub_residual(t)
    res = res / math.fsum(res)
    x1s, x2s, masses = t.joint.support()
    for x1, x2, mass in zip(x1s, x2s, masses):
        reach = mass
        for token, position, prob in _hub_branches(t, (int(x1), int(x2))):
            out[token] += reach * prob
            pos[position - 1] += reach * prob
            reach *= 1.0 - prob
        out += reach * res
    return out, pos


def _enumerate(method: str, p, q, k: int):
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.size > MAX_EXACT_V:
        raise ResourceLimit(f"exact enumeration limited to V <= {MAX_EXACT_V}, got {p.size}")
    if method == "single":
        return _enumerate_rrs(p, q, 1, False)
    if method in ("rrs", "rrsw"):
        if not 1 <= k <= MAX_EXACT_K:
            raise ResourceLimit(f"exact enumeration limited to 1 <= k <= {MAX_EXACT_K}, got {k}")
        if method == "rrsw" and np.count_nonzero(q > UNSAMPLEABLE) < k:
            raise InvalidArgument(f"fewer than {k} tokens with positive draft mass")
        return _enumerate_rrs(p, q, k, method == "rrsw")
    if method == "spechub":
        return _enumerate_hub(p, q)
    raise InvalidArgument(f"unknown method {method!r}")


def exact_output_dist(method: str, p, q, k: int = 2) -> np.ndarray:
    """Exact marginal law of the emitted token, by exhaustive enumeration."""
    out, _ = _enumerate(method, p, q, k)
    return out


def exact_rates(method: str, p, q, k: int = 2) -> RateVector:
    """Exact per-slot acceptance probabilities, by exhaustive enumeration."""
    _, pos = _enumerate(method, p, q, k)
    return RateVector(pos)
