"""The effective-number pruning rule.

Any real-valued score vector ``s`` is normalized to weights
``w_i = |s_i| / sum_j |s_j|`` on the probability simplex.  The built-in
keep threshold is the inverse Simpson index of those weights,

    n_eff = floor(1 / sum_i w_i**2),

optionally scaled by a coefficient ``beta`` and clipped to ``[1, N]``.
Keeping the ``keep_count`` largest-magnitude entries and zeroing the rest
yields a binary mask whose retained weight mass ``s_eff`` is reported
alongside the decision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    IndexOutOfRange,
    LengthMismatch,
    NonFiniteScore,
    NonPositiveBeta,
    ZeroScoreVector,
)

__all__ = [
    "SimplexPoint",
    "EmpDecision",
    "Partition",
    "normalize",
    "effective_number",
    "retained_mass",
    "emp_decide",
    "emp_decide_partitioned",
    "combine_min",
    "combined_mask",
    "partition_sparsity",
]

# Tolerance for the simplex sum-to-one invariant.
SIMPLEX_SUM_TOL = 1e-12

# 1/sum(w^2) lands a hair below an integer in float arithmetic whenever the
# true value is an exact integer (e.g. the uniform vector).  Values within
# this guard below an integer are rounded up before flooring.
_FLOOR_GUARD = 1e-9


def _guarded_floor(x: float) -> int:
    return int(math.floor(x + _FLOOR_GUARD))


def _as_scores(values, *, name: str = "scores") -> np.ndarray:
    """Validate and return scores as a 1-D float64 array.

    Raises NonFiniteScore on NaN/Inf and ValueError on empty input.
    """
    s = np.asarray(values, dtype=np.float64).ravel()
    if s.size == 0:
        raise ValueError(f"{name} must contain at least one entry")
    if not np.isfinite(s).all():
        raise NonFiniteScore(f"{name} contains NaN or infinite entries")
    return s


@dataclass
class SimplexPoint:
    """Nonnegative weights summing to 1, optionally sorted non-increasing."""

    weights: np.ndarray
    sorted_descending: bool = False

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64).ravel()
        if w.size == 0:
            raise ValueError("a simplex point needs at least one coordinate")
        if not np.isfinite(w).all():
            raise NonFiniteScore("simplex weights contain NaN or infinite entries")
        if (w < 0).any():
            raise ValueError("simplex weights must be nonnegative")
        if abs(float(w.sum()) - 1.0) > SIMPLEX_SUM_TOL:
            raise ValueError(f"simplex weights must sum to 1, got {w.sum()!r}")
        if self.sorted_descending and (np.diff(w) > 0).any():
            raise ValueError("weights flagged as sorted are not non-increasing")
        self.weights = w

    def __len__(self) -> int:
        return self.weights.size

    def sorted(self) -> "SimplexPoint":
        """Return the same mass re-ordered non-increasing."""
        if self.sorted_descending:
            return self
        return SimplexPoint(np.sort(self.weights)[::-1].copy(), sorted_descending=True)


@dataclass
class EmpDecision:
    """Outcome of one pruning decision on a score vector of length N."""

    n_eff: int
    beta: float
    keep_count: int
    s_eff: float
    mask: np.ndarray
    kept_indices: np.ndarray

    @property
    def size(self) -> int:
        return int(self.mask.size)

    @property
    def sparsity(self) -> float:
        """Fraction of entries dropped, 1 - keep_count/N."""
        return 1.0 - self.keep_count / self.mask.size


@dataclass
class Partition:
    """Disjoint index groups covering range(n), e.g. layers, tiles, rows."""

    groups: list[np.ndarray]
    n: int = field(init=False)

    def __post_init__(self):
        groups = [np.asarray(g, dtype=np.intp).ravel() for g in self.groups]
        if not groups:
            raise ValueError("partition needs at least one group")
        if any(g.size == 0 for g in groups):
            raise ValueError("partition groups must be non-empty")
        flat = np.concatenate(groups)
        n = flat.size
        seen = np.zeros(n, dtype=bool)
        if flat.min(initial=0) < 0 or flat.max(initial=-1) >= n:
            raise ValueError("partition indices must lie in [0, n)")
        seen[flat] = True
        if not seen.all() or np.unique(flat).size != n:
            raise ValueError("partition groups must be disjoint and cover range(n)")
        self.groups = groups
        self.n = n

    @classmethod
    def from_sizes(cls, sizes) -> "Partition":
        """Contiguous groups of the given sizes, in order."""
        edges = np.concatenate([[0], np.cumsum(np.asarray(sizes, dtype=np.intp))])
        return cls([np.arange(a, b) for a, b in zip(edges[:-1], edges[1:])])

    def __len__(self) -> int:
        return len(self.groups)


def normalize(scores) -> SimplexPoint:
    """Map scores to simplex weights |s_i| / sum|s_j|, in input order.

    Raises ZeroScoreVector when every entry is zero and NonFiniteScore on
    NaN/Inf input.
    """
    s = _as_scores(scores)
    mag = np.abs(s)
    total = float(mag.sum())
    if total == 0.0:
        raise ZeroScoreVector()
    return SimplexPoint(mag / total, sorted_descending=False)


def effective_number(point: SimplexPoint | np.ndarray) -> int:
    """Inverse Simpson index floor(1 / sum w_i^2) of a simplex point.

    Always in [1, N]; equals N exactly for the uniform vector thanks to the
    integer guard on the floor.
    """
    w = point.weights if isinstance(point, SimplexPoint) else np.asarray(point, dtype=np.float64)
    inv_simpson = 1.0 / float(w @ w)
    return max(1, min(w.size, _guarded_floor(inv_simpson)))


def retained_mass(point: SimplexPoint, k: int) -> float:
    """Sum of the k largest weights; 1 when k = N (up to the simplex tolerance)."""
    w = point.weights
    if not 1 <= k <= w.size:
        raise IndexOutOfRange(f"k={k} outside [1, {w.size}]")
    if point.sorted_descending:
        return float(w[:k].sum())
    return float(np.sort(w)[::-1][:k].sum())


def _validated_beta(beta) -> float:
    b = float(beta)
    if not math.isfinite(b) or b <= 0.0:
        raise NonPositiveBeta(f"beta must be a finite positive real, got {beta!r}")
    return b


def emp_decide(scores, beta: float = 1.0) -> EmpDecision:
    """Prune a score vector: keep the clip(floor(beta*n_eff), 1, N) largest |s|.

    Ties in |s| at the keep boundary resolve to the lower original index, so
    the mask is deterministic.  ``s_eff`` is computed as ratio of magnitude
    sums, which equals the retained simplex mass and is exactly 1.0 when
    everything is kept.
    """
    s = _as_scores(scores)
    b = _validated_beta(beta)
    mag = np.abs(s)
    total = float(mag.sum())
    if total == 0.0:
        raise ZeroScoreVector()
    n = s.size

    w = mag / total
    n_eff = max(1, min(n, _guarded_floor(1.0 / float(w @ w))))
    keep_count = max(1, min(n, _guarded_floor(b * n_eff)))

    # Stable argsort of -|s|: equal magnitudes keep ascending index order.
    order = np.argsort(-mag, kind="stable")
    kept = np.sort(order[:keep_count])
    mask = np.zeros(n, dtype=bool)
    mask[kept] = True
    s_eff = float(mag[kept].sum()) / total

    return EmpDecision(
        n_eff=n_eff,
        beta=b,
        keep_count=keep_count,
        s_eff=s_eff,
        mask=mask,
        kept_indices=kept,
    )


def emp_decide_partitioned(scores, partition: Partition, beta: float = 1.0) -> list[EmpDecision]:
    """Run emp_decide independently on each group's restriction of the scores.

    Decisions are returned in group order; masks and kept indices are local
    to each group (see ``combined_mask`` to reassemble a global mask).  A
    group whose scores are all zero raises ZeroScoreVector tagged with the
    group position.
    """
    s = _as_scores(scores)
    if s.size != partition.n:
        raise LengthMismatch(f"scores have length {s.size}, partition covers {partition.n}")
    b = _validated_beta(beta)
    decisions = []
    for gid, group in enumerate(partition.groups):
        try:
            decisions.append(emp_decide(s[group], b))
        except ZeroScoreVector:
            raise ZeroScoreVector(group=gid) from None
    return decisions


def combined_mask(decisions: list[EmpDecision], partition: Partition) -> np.ndarray:
    """Merge per-group masks back into a global boolean mask."""
    if len(decisions) != len(partition.groups):
        raise LengthMismatch("one decision per partition group is required")
    mask = np.zeros(partition.n, dtype=bool)
    for decision, group in zip(decisions, partition.groups):
        if decision.mask.size != group.size:
            raise LengthMismatch("decision mask does not match its group size")
        mask[group] = decision.mask
    return mask


def partition_sparsity(decisions: list[EmpDecision], n: int) -> float:
    """Global sparsity 1 - sum(keep_count)/n across per-group decisions."""
    kept = sum(d.keep_count for d in decisions)
    return 1.0 - kept / n


def combine_min(a, b) -> np.ndarray:
    """Elementwise min of |a| and |b|, a generic two-signal score combiner.

    Used to merge an incoming and an outgoing importance score into one
    per-node criterion; absolute values are taken defensively so sign
    conventions cannot flip the combination.
    """
    sa = _as_scores(a, name="a")
    sb = _as_scores(b, name="b")
    if sa.size != sb.size:
        raise LengthMismatch(f"length {sa.size} vs {sb.size}")
    return np.minimum(np.abs(sa), np.abs(sb))
