"""Adversaries, feedback channels, and exact mixture-law diagnostics.

The hard adversary plants a hidden optimal subset: every round all arms sit
at the base level ``x0`` except that, with probability ``delta``, the planted
arms receive a uniformly permuted atom of the instance's exchangeable
support.  Any action that fails to cover the planted subset then sees the
same feedback law as the all-``x0`` world, which is what the closed-form
checks in this module verify.
"""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass

import numpy as np

from .analysis import bernoulli_kl
from .core import LinkFunction, SubsetAction
from .hardinstances import (
    DEFAULT_EQ_TOL,
    DEFAULT_GAP_TOL,
    HardInstance,
    verify_hard_instance,
)


@dataclass
class EnvRecord:
    """One interaction round: hidden values, action, feedback, realized reward.

    ``feedback`` is the Bernoulli outcome for binary channels; for the choice
    channel it is the purchased arm index, with -1 meaning no purchase.
    """

    t: int
    hidden_values: np.ndarray
    subset: SubsetAction
    feedback: int
    reward: float

    def __post_init__(self):
        if not 0.0 <= self.reward <= 1.0:
            raise ValueError("reward must lie in [0, 1]")


# ---------------------------------------------------------------------------
# Adversaries
# ---------------------------------------------------------------------------

class Adversary:
    """Reward-vector process.  ``history`` carries the full list of past
    :class:`EnvRecord` so user-supplied adaptive adversaries can react to the
    observable statistics; the adversaries shipped here ignore it."""

    n_arms: int

    def reward_vector(self, t: int, history, rng) -> np.ndarray:
        raise NotImplementedError


class StochasticAdversary(Adversary):
    """Plays one fixed reward vector every round."""

    def __init__(self, values):
        v = np.asarray(values, dtype=float)
        if np.any(v < 0) or np.any(v > 1):
            raise ValueError("values must lie in [0, 1]")
        self.values = v
        self.n_arms = v.size

    def reward_vector(self, t, history, rng):
        return self.values.copy()


class ObliviousAdversary(Adversary):
    """Plays a fixed per-round schedule of reward vectors."""

    def __init__(self, schedule):
        sched = np.atleast_2d(np.asarray(schedule, dtype=float))
        if np.any(sched < 0) or np.any(sched > 1):
            raise ValueError("schedule values must lie in [0, 1]")
        self.schedule = sched
        self.n_arms = sched.shape[1]

    def reward_vector(self, t, history, rng):
        if not 1 <= t <= self.schedule.shape[0]:
            raise ValueError(f"round {t} outside schedule of length {self.schedule.shape[0]}")
        return self.schedule[t - 1].copy()


class HardMixtureAdversary(Adversary):
    """Mixture adversary planting a hidden optimal subset.

    ``planted`` has ``instance.m`` arms: equal to the action size K for the
    general construction, or smaller for the low-degree polynomial variant
    where any action covering the planted set is optimal.  Refuses instances
    that fail independent verification.
    """

    def __init__(self, instance: HardInstance, link: LinkFunction, planted,
                 delta: float, n_arms: int, subset_size: int,
                 tol_eq: float = DEFAULT_EQ_TOL, tol_gap: float = DEFAULT_GAP_TOL):
        if not 0 < delta <= 1:
            raise ValueError("delta must lie in (0, 1]")
        planted = tuple(sorted(int(i) for i in planted))
        if len(planted) != instance.m or len(set(planted)) != instance.m:
            raise ValueError(f"planted subset must have {instance.m} distinct arms")
        if planted[0] < 0 or planted[-1] >= n_arms:
            raise ValueError("planted arm outside range")
        if instance.b != subset_size:
            raise ValueError("instance shift budget must equal the action size")
        if instance.m > subset_size:
            raise ValueError("planted subset cannot exceed the action size")
        report = verify_hard_instance(instance, link, tol_eq, tol_gap)
        if not report.valid:
            raise ValueError(f"refusing INVALID instance:\n{report}")
        self.instance = instance
        self.link = link
        self.planted = planted
        self.delta = float(delta)
        self.n_arms = int(n_arms)
        self.subset_size = int(subset_size)
        self._planted_arr = np.array(planted, dtype=np.int64)
        self._cum_weights = np.cumsum(instance.weights)
        self._cum_weights[-1] = 1.0

    def reward_vector(self, t, history, rng):
        inst = self.instance
        v = np.full(self.n_arms, inst.x0)
        if rng.random() < self.delta:
            atom = inst.support[int(np.searchsorted(self._cum_weights, rng.random(),
                                                    side="right"))]
            v[self._planted_arr] = atom[rng.permutation(inst.m)]
        return v


# ---------------------------------------------------------------------------
# Feedback channels
# ---------------------------------------------------------------------------

def bernoulli_feedback(mean: float, rng) -> int:
    """Binary reward with the given success probability."""
    if not -1e-12 <= mean <= 1 + 1e-12:
        raise ValueError(f"mean {mean} outside [0, 1]")
    return int(rng.random() < min(1.0, max(0.0, mean)))


def mnl_sample_choice(subset: SubsetAction, values, rng) -> int:
    """Sampled customer choice from the offered subset; -1 means no purchase.

    Item i is chosen with probability v_i / (1 + sum of offered v); the
    remaining mass is the no-purchase outcome.
    """
    v = np.asarray(values, dtype=float)
    idx = list(subset.indices)
    offered = v[idx]
    if np.any(offered < 0):
        raise ValueError("utilities must be nonnegative")
    total = 1.0 + float(offered.sum())
    u = rng.random() * total
    if u < 1.0:
        return -1
    acc = 1.0
    for arm, util in zip(idx, offered):
        acc += util
        if u < acc:
            return int(arm)
    return int(idx[-1])


def mnl_revenue(subset: SubsetAction, values, prices) -> float:
    """Expected revenue of an offered subset under multinomial-logit choice."""
    v = np.asarray(values, dtype=float)
    p = np.asarray(prices, dtype=float)
    if np.any(p < 0) or np.any(p > 1):
        raise ValueError("prices must lie in [0, 1]")
    idx = list(subset.indices)
    return float((p[idx] * v[idx]).sum() / (1.0 + v[idx].sum()))


# ---------------------------------------------------------------------------
# Exact mixture diagnostics
# ---------------------------------------------------------------------------

def mixture_mean_reward(instance: HardInstance, link: LinkFunction, delta: float,
                        overlap: int) -> float:
    """Exact expected reward of an action overlapping the planted set in
    ``overlap`` arms, averaged over the adversary's mixture."""
    if not 0 <= overlap <= instance.m:
        raise ValueError("overlap outside [0, m]")
    base = instance.baseline(link)
    inner = base if overlap == 0 else instance.moment_mean(link, overlap)
    return (1.0 - delta) * base + delta * inner


@dataclass
class MnlChoiceLaw:
    """Exact mixture choice probabilities, split by planted-set membership.

    ``planted_item`` / ``other_item`` are per-item probabilities; a slot is
    NaN when the action contains no item of that kind.
    """

    no_purchase: float
    planted_item: float
    other_item: float


def mnl_mixture_choice_law(instance: HardInstance, delta: float, overlap: int,
                           subset_size: int) -> MnlChoiceLaw:
    """Exact per-item mixture choice law for an action with ``overlap`` planted
    arms out of ``subset_size`` offered, under unit prices."""
    if not 0 <= overlap <= min(instance.m, subset_size):
        raise ValueError("invalid overlap")
    x0, m = instance.x0, instance.m
    k = subset_size

    base_total = 1.0 + k * x0
    p0 = (1.0 - delta) / base_total
    p_planted = (1.0 - delta) * x0 / base_total
    p_other = (1.0 - delta) * x0 / base_total

    n_combos = math.comb(m, overlap)
    atom_p0 = atom_planted = atom_other = 0.0
    for weight, atom in zip(instance.weights, instance.support):
        acc0 = acc_pl = acc_ot = 0.0
        for combo in itertools.combinations(range(m), overlap):
            chosen = atom[list(combo)]
            total = 1.0 + float(chosen.sum()) + (k - overlap) * x0
            acc0 += 1.0 / total
            acc_ot += x0 / total
            if overlap:
                acc_pl += float(chosen.mean()) / total
        atom_p0 += weight * acc0 / n_combos
        atom_other += weight * acc_ot / n_combos
        atom_planted += weight * acc_pl / n_combos

    p0 += delta * atom_p0
    p_other += delta * atom_other
    p_planted += delta * atom_planted
    return MnlChoiceLaw(
        no_purchase=p0,
        planted_item=p_planted if overlap > 0 else float("nan"),
        other_item=p_other if overlap < k else float("nan"),
    )


# ---------------------------------------------------------------------------
# Perturbation schedule
# ---------------------------------------------------------------------------

def kl_coefficient(instance: HardInstance, link: LinkFunction,
                   deltas=None) -> float:
    """Coefficient bounding the per-round KL between the uninformative and the
    planted-subset Bernoulli laws: KL <= (coeff * delta)**2 on the scanned
    mixture weights.

    Takes the supremum of sqrt(KL(q, q + delta * gamma)) / delta over a delta
    grid; the ratio is increasing in delta, so the bound extends to every
    smaller mixture weight.
    """
    q = instance.baseline(link)
    gamma = instance.gamma
    if gamma <= 0:
        raise ValueError("instance gap must be positive")
    if deltas is None:
        deltas = np.arange(1, 101) / 100.0
    best = 0.0
    for d in deltas:
        alt = q + d * gamma
        if alt >= 1.0 - 1e-12:
            continue
        best = max(best, math.sqrt(bernoulli_kl(q, alt)) / d)
    if best == 0.0:
        raise ValueError("no usable delta in the scan grid")
    return best


def delta_schedule(n_arms: int, subset_size: int, horizon: int, kl_coeff: float,
                   mode: str = "nonpoly", degree: int | None = None) -> float:
    """Mixture weight balancing per-round gap against total information leakage.

    General mode: min(1, sqrt(C(N, K)) / (2 * coeff * sqrt(T))).  Polynomial
    mode replaces the action count by C(N, d) and scales the horizon by the
    C(K, d) coverage multiplicity of size-d planted sets.
    """
    if kl_coeff <= 0:
        raise ValueError("kl_coeff must be positive")
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if mode == "nonpoly":
        num = math.sqrt(math.comb(n_arms, subset_size))
        den = 2.0 * kl_coeff * math.sqrt(horizon)
    elif mode == "poly":
        if degree is None or not 1 <= degree < subset_size:
            raise ValueError("poly mode needs a degree in [1, K)")
        num = math.sqrt(math.comb(n_arms, degree))
        den = 2.0 * kl_coeff * math.sqrt(math.comb(subset_size, degree) * horizon)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return min(1.0, num / den)


# ---------------------------------------------------------------------------
# Schedule I/O
# ---------------------------------------------------------------------------

def load_utility_schedule(path, n_arms: int | None = None) -> np.ndarray:
    """Load a per-round utility schedule from CSV with header ``t,v_0,...,v_{N-1}``."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[0] != "t":
            raise ValueError("schedule CSV must start with header t,v_0,...")
        width = len(header) - 1
        expected = [f"v_{i}" for i in range(width)]
        if header[1:] != expected:
            raise ValueError("schedule CSV columns must be v_0..v_{N-1} in order")
        if n_arms is not None and width != n_arms:
            raise ValueError(f"schedule has {width} arms, expected {n_arms}")
        rows = []
        for t, row in enumerate(reader, start=1):
            if int(row[0]) != t:
                raise ValueError("schedule rounds must be consecutive from 1")
            rows.append([float(x) for x in row[1:]])
    if not rows:
        raise ValueError("schedule CSV has no rounds")
    sched = np.asarray(rows, dtype=float)
    if np.any(sched < 0) or np.any(sched > 1):
        raise ValueError("schedule values must lie in [0, 1]")
    return sched
