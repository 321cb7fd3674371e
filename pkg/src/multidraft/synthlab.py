"""Toy distribution pairs and the desk-scale acceptance experiments.

Each toy pair comes from two random logit vectors ``u_p`` and ``u_q``:
``p = softmax(u_p / T)`` and ``q = softmax((lam * u_p + (1 - lam) * u_q) / T)``.
The logit law is selectable. ``"normal"`` (standard normal entries) is the
default because it reproduces the reference toy acceptance table;
``"uniform"`` (entries in [0, 1)) is kept for the literal variant.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .coupling import optimal_acceptance
from .draftjoint import independent_joint, wor_joint
from .errors import InvalidArgument
from .simplex import overlap, softmax_with_temperature
from .verify import analytic_rates_rrs, analytic_rates_spechub, is_degenerate, mc_rates

LOGIT_LAWS = ("normal", "uniform")
TOY_METHODS = ("rrs", "rrsw", "otm", "otmw", "spechub")

# stream tags keep the draws for different purposes apart
_PAIR_STREAM = 0
_MC_STREAM = 1


@dataclass(frozen=True)
class ToyConfig:
    T: float
    lam: float
    V: int = 50
    n_pairs: int = 100
    mc_trials: int = 1000
    seed: int = 0
    logits: str = "normal"

    def __post_init__(self):
        if not (self.T > 0 and math.isfinite(self.T)):
            raise InvalidArgument(f"temperature must be positive, got {self.T!r}")
        if not 0.0 <= self.lam <= 1.0:
            raise InvalidArgument(f"lambda must lie in [0, 1], got {self.lam!r}")
        if self.V < 2:
            raise InvalidArgument("vocabulary size must be at least 2")
        if self.n_pairs < 1 or self.mc_trials < 1:
            raise InvalidArgument("n_pairs and mc_trials must be positive")
        if self.seed < 0:
            raise InvalidArgument("seed must be non-negative")
        if self.logits not in LOGIT_LAWS:
            raise InvalidArgument(f"logits must be one of {LOGIT_LAWS}, got {self.logits!r}")


def draw_logits(rng: np.random.Generator, V: int, law: str) -> tuple[np.ndarray, np.ndarray]:
    if law == "normal":
        return rng.standard_normal(V), rng.standard_normal(V)
    if law == "uniform":
        return rng.random(V), rng.random(V)
    raise InvalidArgument(f"unknown logit law {law!r}")


def pair_from_logits(u_p, u_q, T: float, lam: float) -> tuple[np.ndarray, np.ndarray]:
    u_p = np.asarray(u_p, dtype=np.float64)
    p = softmax_with_temperature(u_p, T)
    if lam == 1.0:
        return p, p.copy()
    return p, softmax_with_temperature(lam * u_p + (1.0 - lam) * np.asarray(u_q), T)


def gen_toy_pair(cfg: ToyConfig, index: int) -> tuple[np.ndarray, np.ndarray]:
    """Pair `index` of the experiment; independent of ``cfg.n_pairs``."""
    rng = np.random.default_rng([cfg.seed, _PAIR_STREAM, index])
    u_p, u_q = draw_logits(rng, cfg.V, cfg.logits)
    return pair_from_logits(u_p, u_q, cfg.T, cfg.lam)


@dataclass(frozen=True)
class ToyInstance:
    index: int
    values: dict  # method -> total acceptance
    rrsw_stderr: float | None
    spechub_fallback: bool


def evaluate_pair(cfg: ToyConfig, index: int, methods=TOY_METHODS) -> ToyInstance:
    p, q = gen_toy_pair(cfg, index)
    vals: dict[str, float] = {}
    se = None
    fallback = False
    one_hot = is_degenerate(q)
    for m in methods:
        if m == "rrs":
            vals[m] = analytic_rates_rrs(p, q, 2).total
        elif m == "rrsw":
            if one_hot:
                vals[m] = overlap(p, q)
                continue
            rng = np.random.default_rng([cfg.seed, _MC_STREAM, index])
            r = mc_rates("rrsw", p, q, 2, cfg.mc_trials, rng)
            vals[m], se = r.total, r.total_stderr
        elif m == "otm":
            vals[m] = optimal_acceptance(independent_joint(q), p)
        elif m == "otmw":
            vals[m] = overlap(p, q) if one_hot else optimal_acceptance(wor_joint(q), p)
        elif m == "spechub":
            fallback = one_hot
            vals[m] = overlap(p, q) if one_hot else analytic_rates_spechub(p, q).total
        else:
            raise InvalidArgument(f"unknown toy method {m!r}")
    return ToyInstance(index, vals, se, fallback)


@dataclass(frozen=True)
class ToyRow:
    method: str
    mean: float
    stderr: float
    T: float
    lam: float
    V: int
    n_pairs: int
    mc_trials: int
    fallbacks: int = 0

    def as_dict(self) -> dict:
        return asdict(self)


def _mean_se(xs) -> tuple[float, float]:
    xs = np.asarray(xs, dtype=np.float64)
    n = xs.size
    mean = math.fsum(xs) / n
    if n < 2:
        return mean, 0.0
    var = math.fsum((xs - mean) ** 2) / (n - 1)
    return mean, math.sqrt(var / n)


def summarize(cfg: ToyConfig, instances: list[ToyInstance], methods=TOY_METHODS) -> list[ToyRow]:
    rows = []
    for m in methods:
        mean, se = _mean_se([inst.values[m] for inst in instances])
        fb = sum(inst.spechub_fallback for inst in instances) if m == "spechub" else 0
        rows.append(ToyRow(m, mean, se, cfg.T, cfg.lam, cfg.V, cfg.n_pairs, cfg.mc_trials, fb))
    return rows


def toy_instances(cfg: ToyConfig, methods=TOY_METHODS) -> list[ToyInstance]:
    return [evaluate_pair(cfg, i, methods) for i in range(cfg.n_pairs)]


def toy_experiment(cfg: ToyConfig, methods=TOY_METHODS) -> list[ToyRow]:
    """Mean total two-draft acceptance per method over ``cfg.n_pairs`` pairs."""
    return summarize(cfg, toy_instances(cfg, methods), methods)


@dataclass(frozen=True)
class DecayTable:
    rrs: np.ndarray  # mean analytic rate per position, length k_max
    rrsw: np.ndarray  # mean Monte-Carlo rate per position
    rrsw_stderr: np.ndarray
    spechub: np.ndarray  # two positions

    @property
    def positions(self) -> np.ndarray:
        return np.arange(1, self.rrs.size + 1)


def decay_experiment(cfg: ToyConfig, k_max: int) -> DecayTable:
    if not 1 <= k_max <= cfg.V:
        raise InvalidArgument(f"k_max must lie in [1, V={cfg.V}], got {k_max}")
    rrs, rrsw, sh = [], [], []
    for i in range(cfg.n_pairs):
        p, q = gen_toy_pair(cfg, i)
        rrs.append(analytic_rates_rrs(p, q, k_max).per_position)
        rng = np.random.default_rng([cfg.seed, _MC_STREAM, i])
        rrsw.append(mc_rates("rrsw", p, q, k_max, cfg.mc_trials, rng).per_position)
        if is_degenerate(q):
            sh.append(np.array([overlap(p, q), 0.0]))
        else:
            sh.append(analytic_rates_spechub(p, q).per_position)
    rrsw = np.array(rrsw)
    se = rrsw.std(axis=0, ddof=1) / math.sqrt(cfg.n_pairs) if cfg.n_pairs > 1 else np.zeros(k_max)
    return DecayTable(np.mean(rrs, axis=0), rrsw.mean(axis=0), se, np.mean(sh, axis=0))
