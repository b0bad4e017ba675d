"""Core types: reward links, subset indexing, expected rewards, tensor features.

Arms are indexed ``0..N-1`` and an action is a size-``K`` subset.  Subsets are
ranked colexicographically through the combinatorial number system, which
gives O(K) conversions in both directions without materializing the full
C(N, K) action set.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache, reduce

import numpy as np

DEFAULT_ENUMERATION_CAP = 10**7


class CapExceededError(RuntimeError):
    """An enumeration would exceed the configured desk-scale cap."""


class LinkDomainError(ValueError):
    """A link function was evaluated outside its domain."""


class LinkRangeError(ValueError):
    """A link evaluation left [0, 1] where a reward was required."""


# ---------------------------------------------------------------------------
# Link functions
# ---------------------------------------------------------------------------

class LinkFunction:
    """Maps the summed values of a chosen subset to an expected reward.

    Subclasses implement ``_eval`` on float arrays; ``__call__`` accepts
    scalars or arrays and preserves the input shape.  ``_eval_scalar`` is a
    fast path for plain floats on the simulation hot loop.
    """

    def _eval(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _eval_scalar(self, x: float) -> float:
        return float(self._eval(np.asarray(x, dtype=float)))

    def __call__(self, x):
        if isinstance(x, (float, int)):
            return self._eval_scalar(float(x))
        arr = np.asarray(x, dtype=float)
        if arr.ndim == 0:
            return self._eval_scalar(float(arr))
        return np.asarray(self._eval(arr), dtype=float)


class MnlLink(LinkFunction):
    """Purchase probability x / (1 + x) of a unit-price multinomial-logit customer."""

    def _eval(self, x):
        if np.any(x < -1e-12):
            raise LinkDomainError("MNL link requires nonnegative inputs")
        x = np.maximum(x, 0.0)
        return x / (1.0 + x)

    def _eval_scalar(self, x):
        if x < -1e-12:
            raise LinkDomainError("MNL link requires nonnegative inputs")
        x = max(x, 0.0)
        return x / (1.0 + x)

    def __repr__(self):
        return "MnlLink()"


class PolynomialLink(LinkFunction):
    """Polynomial link with coefficients ordered from the constant to the leading term.

    Trailing zero coefficients are trimmed, so ``degree`` is the true degree.
    The [0, 1] range requirement is enforced where rewards are produced, not
    at construction, so arbitrary polynomials can still be lifted to tensor
    coefficient vectors.
    """

    def __init__(self, coefficients):
        coeffs = [float(c) for c in coefficients]
        if not coeffs:
            raise ValueError("at least one coefficient is required")
        while len(coeffs) > 1 and coeffs[-1] == 0.0:
            coeffs.pop()
        self.coefficients = tuple(coeffs)

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    def _eval(self, x):
        out = np.zeros_like(x)
        for c in reversed(self.coefficients):
            out = out * x + c
        return out

    def _eval_scalar(self, x):
        out = 0.0
        for c in reversed(self.coefficients):
            out = out * x + c
        return out

    def __repr__(self):
        return f"PolynomialLink({list(self.coefficients)})"


class TabulatedLink(LinkFunction):
    """Piecewise-linear link through a strictly increasing grid of (x, g(x)) pairs."""

    def __init__(self, xs, ys):
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        if xs.ndim != 1 or xs.shape != ys.shape or xs.size < 2:
            raise ValueError("grid needs matching 1-D xs/ys with at least two points")
        if not np.all(np.diff(xs) > 0):
            raise ValueError("grid abscissae must be strictly increasing")
        if np.any(ys < -1e-12) or np.any(ys > 1 + 1e-12):
            raise LinkRangeError("tabulated values must lie in [0, 1]")
        self.xs = xs
        self.ys = np.clip(ys, 0.0, 1.0)

    def _eval(self, x):
        lo, hi = self.xs[0], self.xs[-1]
        if np.any(x < lo - 1e-12) or np.any(x > hi + 1e-12):
            raise LinkDomainError(f"input outside tabulated domain [{lo}, {hi}]")
        return np.interp(np.clip(x, lo, hi), self.xs, self.ys)

    def __repr__(self):
        return f"TabulatedLink(<{self.xs.size} points on [{self.xs[0]}, {self.xs[-1]}]>)"


# ---------------------------------------------------------------------------
# Subset indexing (colexicographic / combinatorial number system)
# ---------------------------------------------------------------------------

def n_subsets(n_arms: int, subset_size: int) -> int:
    """Number of size-``subset_size`` subsets of ``n_arms`` arms."""
    _validate_dims(n_arms, subset_size)
    return math.comb(n_arms, subset_size)


def _validate_dims(n_arms, subset_size):
    if not (isinstance(n_arms, (int, np.integer)) and isinstance(subset_size, (int, np.integer))):
        raise ValueError("dimensions must be integers")
    if not 1 <= subset_size <= n_arms:
        raise ValueError(f"need 1 <= K <= N, got K={subset_size}, N={n_arms}")


def rank_subset(indices, n_arms: int, subset_size: int) -> int:
    """Colexicographic rank of a sorted index tuple among all size-K subsets."""
    _validate_dims(n_arms, subset_size)
    idx = [int(i) for i in indices]
    if len(idx) != subset_size:
        raise ValueError(f"expected {subset_size} indices, got {len(idx)}")
    if idx != sorted(set(idx)):
        raise ValueError("indices must be strictly increasing")
    if idx[0] < 0 or idx[-1] >= n_arms:
        raise ValueError("index out of range")
    return sum(math.comb(c, j + 1) for j, c in enumerate(idx))


def unrank_subset(rank: int, n_arms: int, subset_size: int) -> tuple[int, ...]:
    """Inverse of :func:`rank_subset`."""
    _validate_dims(n_arms, subset_size)
    total = math.comb(n_arms, subset_size)
    rank = int(rank)
    if not 0 <= rank < total:
        raise ValueError(f"rank {rank} outside [0, {total})")
    out = []
    rem = rank
    for j in range(subset_size, 0, -1):
        c = j - 1
        while math.comb(c + 1, j) <= rem:
            c += 1
        out.append(c)
        rem -= math.comb(c, j)
    return tuple(reversed(out))


@dataclass(frozen=True)
class SubsetAction:
    """A size-K subset of arms together with its colexicographic rank."""

    indices: tuple[int, ...]
    rank: int

    @classmethod
    def from_indices(cls, indices, n_arms: int) -> "SubsetAction":
        idx = tuple(int(i) for i in indices)
        return cls(idx, rank_subset(idx, n_arms, len(idx)))

    @classmethod
    def from_rank(cls, rank: int, n_arms: int, subset_size: int) -> "SubsetAction":
        return cls(unrank_subset(rank, n_arms, subset_size), int(rank))

    def __len__(self):
        return len(self.indices)


@dataclass(frozen=True)
class ProblemDims:
    """Shared problem dimensions: arms, subset size, horizon, optional degree."""

    n_arms: int
    subset_size: int
    horizon: int
    degree: int | None = None

    def __post_init__(self):
        _validate_dims(self.n_arms, self.subset_size)
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.degree is not None and self.degree < 1:
            raise ValueError("degree must be >= 1 when given")


@lru_cache(maxsize=32)
def all_subsets(n_arms: int, subset_size: int) -> tuple[np.ndarray, np.ndarray]:
    """All size-K subsets as an (A, K) index array plus their colex ranks.

    Rows are in lexicographic enumeration order; the second array carries the
    matching colexicographic ranks.  Both arrays are read-only and cached.
    """
    combos = np.array(
        list(itertools.combinations(range(n_arms), subset_size)), dtype=np.int64
    ).reshape(-1, subset_size)
    table = np.zeros((n_arms, subset_size + 1), dtype=np.int64)
    for c in range(n_arms):
        for j in range(subset_size + 1):
            table[c, j] = math.comb(c, j)
    ranks = np.zeros(combos.shape[0], dtype=np.int64)
    for j in range(subset_size):
        ranks += table[combos[:, j], j + 1]
    combos.setflags(write=False)
    ranks.setflags(write=False)
    return combos, ranks


# ---------------------------------------------------------------------------
# Rewards
# ---------------------------------------------------------------------------

def _check_values(values: np.ndarray):
    if np.any(values < -1e-12) or np.any(values > 1 + 1e-12):
        raise ValueError("reward-vector entries must lie in [0, 1]")


def _check_range(y):
    if np.any(np.asarray(y) < -1e-9) or np.any(np.asarray(y) > 1 + 1e-9):
        raise LinkRangeError("link produced a value outside [0, 1]")


def expected_reward(subset: SubsetAction, values, link: LinkFunction) -> float:
    """Expected reward ``g(sum of the chosen arms' values)``, clamped to [0, 1]."""
    v = np.asarray(values, dtype=float)
    if float(v.min()) < -1e-12 or float(v.max()) > 1 + 1e-12:
        raise ValueError("reward-vector entries must lie in [0, 1]")
    if subset.indices[-1] >= v.size:
        raise ValueError("subset index outside the reward vector")
    total = 0.0
    for i in subset.indices:
        total += v[i]
    y = link(float(total))
    if y < -1e-9 or y > 1 + 1e-9:
        raise LinkRangeError("link produced a value outside [0, 1]")
    return min(1.0, max(0.0, float(y)))


def best_subset(values, link: LinkFunction, n_arms: int, subset_size: int,
                cap: int = DEFAULT_ENUMERATION_CAP) -> tuple[SubsetAction, float]:
    """Exact argmax of the expected reward over all size-K subsets.

    Ties break toward the smallest colexicographic rank.  Raises
    :class:`CapExceededError` when C(N, K) exceeds ``cap``.
    """
    count = n_subsets(n_arms, subset_size)
    if count > cap:
        raise CapExceededError(f"C({n_arms},{subset_size})={count} exceeds cap {cap}")
    v = np.asarray(values, dtype=float)
    _check_values(v)
    if v.size != n_arms:
        raise ValueError("reward vector length must equal n_arms")
    combos, ranks = all_subsets(n_arms, subset_size)
    sums = v[combos].sum(axis=1)
    ys = np.asarray(link(sums), dtype=float)
    _check_range(ys)
    pick = np.lexsort((ranks, -ys))[0]
    action = SubsetAction(tuple(int(i) for i in combos[pick]), int(ranks[pick]))
    return action, min(1.0, max(0.0, float(ys[pick])))


# ---------------------------------------------------------------------------
# Tensorization
# ---------------------------------------------------------------------------

def tensor_features(subset: SubsetAction, n_arms: int, order: int,
                    cap: int = DEFAULT_ENUMERATION_CAP) -> np.ndarray:
    """Flattened ``order``-fold tensor power of the subset indicator vector.

    Entry at multi-index (i_1, ..., i_d) is 1 iff every i_j belongs to the
    subset; exactly K**order entries are one.
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    if n_arms ** order > cap:
        raise CapExceededError(f"{n_arms}**{order} exceeds cap {cap}")
    ind = np.zeros(n_arms)
    ind[list(subset.indices)] = 1.0
    out = ind
    for _ in range(order - 1):
        out = np.kron(out, ind)
    return out


def lift_reward_vector(values, link: PolynomialLink, subset_size: int, order: int,
                       cap: int = DEFAULT_ENUMERATION_CAP) -> np.ndarray:
    """Tensor coefficient vector whose pairing with any subset's order-d feature
    reproduces the polynomial reward of that subset exactly.

    The degree-j monomial contributes its coefficient times the j-fold tensor
    power of ``values`` padded with uniform 1/K factors, so that
    ``<lift, features(S)> == g(sum of values on S)`` for every size-K subset.
    """
    if not isinstance(link, PolynomialLink):
        raise ValueError("lift requires a polynomial link")
    if order < 1:
        raise ValueError("order must be >= 1")
    if link.degree > order:
        raise ValueError(f"polynomial degree {link.degree} exceeds tensor order {order}")
    v = np.asarray(values, dtype=float)
    n = v.size
    if n ** order > cap:
        raise CapExceededError(f"{n}**{order} exceeds cap {cap}")
    base = np.full(n, 1.0 / subset_size)
    lifted = np.zeros(n ** order)
    for j, coeff in enumerate(link.coefficients):
        if coeff == 0.0:
            continue
        parts = [v] * j + [base] * (order - j)
        lifted += coeff * reduce(np.kron, parts)
    return lifted
