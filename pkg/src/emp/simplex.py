"""Simplex geometry behind the effective-number threshold.

The normalized weights live on the standard (N-1)-simplex.  Sorting the
coordinates non-increasing lands every point in one fundamental domain of
the permutation tiling; there, the level set where the effective number
equals ``nu`` is the slice of a spherical shell around the barycenter:
inside the ball of radius r_nu = sqrt(1/nu - 1/N) and strictly outside the
ball of radius r_{nu+1}.  The retained mass restricted to that domain is
``phi_nu``, the sum of the first ``nu`` coordinates.

This module provides the shell geometry (barycenters, radii, membership),
the extremal point achieving the infimum of ``phi_nu`` over the level set,
and an independent brute-force minimizer used to certify the closed form
at small N.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._parallel import ordered_map
from .bounds import tight_lower_bound
from .core import SimplexPoint
from .errors import DomainError, InfeasibleRegion, NotOnHyperplane

__all__ = [
    "OrderedSimplexPoint",
    "GeometryContext",
    "barycenter",
    "radius",
    "ball_membership",
    "extremal_point",
    "extremal_point_coordinates",
    "phi",
    "MinPhiResult",
    "brute_force_min_phi",
    "PropositionCheck",
    "VerificationReport",
    "verify_proposition",
]

# Membership calls classify a squared distance against a squared radius.
BOUNDARY_TOL = 1e-10
# Hyperplane residency asks only that the coordinates sum to 1 loosely.
HYPERPLANE_TOL = 1e-9


@dataclass
class OrderedSimplexPoint(SimplexPoint):
    """A simplex point whose coordinates are non-increasing."""

    sorted_descending: bool = True

    def __post_init__(self):
        self.sorted_descending = True
        super().__post_init__()


def barycenter(n: int, j: int) -> np.ndarray:
    """Barycenter b_[j]: first j coordinates 1/j, the rest 0."""
    n, j = int(n), int(j)
    if n < 1 or not 1 <= j <= n:
        raise DomainError(f"need 1 <= j <= n, got j={j}, n={n}")
    b = np.zeros(n)
    b[:j] = 1.0 / j
    return b


def radius(n: int, nu: int) -> float:
    """Shell radius r_nu = sqrt(1/nu - 1/n) about the barycenter."""
    n, nu = int(n), int(nu)
    if n < 1 or not 1 <= nu <= n:
        raise DomainError(f"need 1 <= nu <= n, got nu={nu}, n={n}")
    return math.sqrt(1.0 / nu - 1.0 / n)


@dataclass
class GeometryContext:
    """Precomputed barycenters and shell radii for dimension n."""

    n: int
    barycenters: np.ndarray = field(init=False)
    radii: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.n < 2:
            raise DomainError(f"n must be >= 2, got {self.n}")
        self.barycenters = np.stack([barycenter(self.n, j) for j in range(1, self.n + 1)])
        self.radii = np.array([radius(self.n, nu) for nu in range(1, self.n + 1)])

    def barycenter(self, j: int) -> np.ndarray:
        if not 1 <= j <= self.n:
            raise DomainError(f"j={j} outside [1, {self.n}]")
        return self.barycenters[j - 1]

    def radius(self, nu: int) -> float:
        if not 1 <= nu <= self.n:
            raise DomainError(f"nu={nu} outside [1, {self.n}]")
        return float(self.radii[nu - 1])


def ball_membership(w, nu: int, ctx: GeometryContext) -> str:
    """Classify w against the ball of radius r_nu: inside, boundary, or outside.

    The point must lie on the sum-to-one hyperplane (tolerance 1e-9);
    the squared distance to the barycenter is compared against
    1/nu - 1/n with boundary tolerance 1e-10.
    """
    w = np.asarray(w, dtype=np.float64).ravel()
    if w.size != ctx.n:
        raise DomainError(f"point has dimension {w.size}, context has {ctx.n}")
    if not 1 <= nu <= ctx.n:
        raise DomainError(f"nu={nu} outside [1, {ctx.n}]")
    if abs(float(w.sum()) - 1.0) > HYPERPLANE_TOL:
        raise NotOnHyperplane(f"coordinates sum to {w.sum()!r}, not 1")
    d2 = float(np.sum((w - ctx.barycenter(ctx.n)) ** 2))
    r2 = 1.0 / nu - 1.0 / ctx.n
    if abs(d2 - r2) <= BOUNDARY_TOL:
        return "boundary"
    return "inside" if d2 < r2 else "outside"


def extremal_point(n: int, nu: int) -> OrderedSimplexPoint:
    """Infimum point of phi_nu: the barycenter pushed toward the first vertex.

    Constructed vectorially as b_[n] + (r_{nu+1}/r_1) * (b_[1] - b_[n]);
    it sits on the inner shell boundary, where the effective-number ratio
    1/sum(w^2) equals exactly nu+1.
    """
    n, nu = int(n), int(nu)
    if n < 3 or not 2 <= nu <= n - 1:
        raise DomainError(f"need 2 <= nu <= n-1 with n >= 3, got nu={nu}, n={n}")
    center = barycenter(n, n)
    scale = radius(n, nu + 1) / radius(n, 1)
    return OrderedSimplexPoint(center + scale * (barycenter(n, 1) - center))


def extremal_point_coordinates(n: int, nu: int) -> OrderedSimplexPoint:
    """The same infimum point written out coordinate by coordinate.

    First coordinate 1/n * (1 + sqrt((n-1)(n-nu-1)/(nu+1))), the remaining
    n-1 all equal to 1/n * (1 - sqrt((n-nu-1)/((n-1)(nu+1)))).  Kept as an
    independently coded route so the two constructions can be checked
    against each other.
    """
    n, nu = int(n), int(nu)
    if n < 3 or not 2 <= nu <= n - 1:
        raise DomainError(f"need 2 <= nu <= n-1 with n >= 3, got nu={nu}, n={n}")
    first = 1.0 / n + (1.0 / n) * math.sqrt((n - 1) * (n - nu - 1) / (nu + 1))
    rest = (1.0 / n) * (1.0 - math.sqrt((n - nu - 1) / ((n - 1) * (nu + 1))))
    w = np.full(n, rest)
    w[0] = first
    return OrderedSimplexPoint(w)


def phi(w, nu: int) -> float:
    """Sum of the first nu coordinates of an ordered simplex point."""
    arr = w.weights if isinstance(w, SimplexPoint) else np.asarray(w, dtype=np.float64).ravel()
    if not 1 <= nu <= arr.size:
        raise DomainError(f"nu={nu} outside [1, {arr.size}]")
    return float(arr[:nu].sum())


@dataclass
class MinPhiResult:
    """Outcome of the brute-force minimization of phi_nu over one level set."""

    n: int
    nu: int
    min_value: float
    argmin: OrderedSimplexPoint
    feasible_samples: int
    budget: int
    seed: int


def _level_set_mask(points: np.ndarray, nu: int) -> np.ndarray:
    """Raw membership nu <= 1/sum(w^2) < nu+1, no integer guard."""
    inv = 1.0 / np.einsum("ij,ij->i", points, points)
    return (inv >= nu) & (inv < nu + 1)


def _in_level_set(w: np.ndarray, nu: int) -> bool:
    inv = 1.0 / float(w @ w)
    return nu <= inv < nu + 1


def _refine_min_phi(w0: np.ndarray, nu: int, rounds: int = 40, step0: float = 0.25) -> np.ndarray:
    """Derivative-free descent of phi_nu inside the level set.

    Starting from a feasible sorted point, greedily accepts moves that keep
    the point feasible and strictly shrink phi_nu, halving the step each
    round.  Three move families suffice to approach the infimum: mass
    transfers from a top coordinate to a tail coordinate, radial shrink
    toward the barycenter, and three-coordinate exchanges that trade top
    mass against the leading coordinate while preserving the norm to first
    order (the direction used in the extremality argument).
    """
    n = w0.size
    center = np.full(n, 1.0 / n)
    w = np.sort(w0)[::-1].copy()
    best = float(w[:nu].sum())

    def consider(cand: np.ndarray) -> bool:
        nonlocal w, best
        if (cand < 0.0).any():
            return False
        cand = np.sort(cand)[::-1]
        if not _in_level_set(cand, nu):
            return False
        value = float(cand[:nu].sum())
        if value < best - 1e-15:
            w, best = cand, value
            return True
        return False

    step = step0
    for _ in range(rounds):
        for _sweep in range(25):
            improved = False
            # Shrink toward the barycenter: approaches the inner shell
            # boundary where the infimum lives.
            improved |= consider(center + (1.0 - step) * (w - center))
            # Move mass from the counted block to the tail.
            for i in range(nu):
                if w[i] < step:
                    continue
                for j in range(nu, n):
                    cand = w.copy()
                    cand[i] -= step
                    cand[j] += step
                    improved |= consider(cand)
            # Three-coordinate exchange: raise w[0], lower w[i], raise w[j],
            # scaled so the norm is stationary to first order.
            for i in range(1, nu):
                for j in range(nu, n):
                    if w[i] <= w[j]:
                        continue
                    t = (w[j] - w[0]) / (w[i] - w[j])
                    direction = np.zeros(n)
                    direction[0] = 1.0
                    direction[i] = t
                    direction[j] = -(1.0 + t)
                    scale = np.abs(direction).max()
                    cand = w + (step / scale) * direction
                    improved |= consider(cand)
            if not improved:
                break
        step *= 0.5
    return w


def brute_force_min_phi(
    n: int, nu: int, budget: int = 200_000, seed: int = 0
) -> MinPhiResult:
    """Minimize phi_nu over the level set by sampling plus local descent.

    Stage one rejection-samples flat-Dirichlet points, sorts them
    non-increasing, and filters to the level set nu <= 1/sum(w^2) < nu+1.
    Stage two refines the best sample with the shrinking-step descent of
    ``_refine_min_phi``.  Deterministic for a fixed seed; raises
    InfeasibleRegion when no sample lands in the level set.
    """
    n, nu = int(n), int(nu)
    if n < 3 or not 2 <= nu <= n - 1:
        raise DomainError(f"need 2 <= nu <= n-1 with n >= 3, got nu={nu}, n={n}")
    if budget < 1:
        raise DomainError("budget must be positive")

    rng = np.random.default_rng(seed)
    best_w: np.ndarray | None = None
    best_phi = math.inf
    feasible = 0
    remaining = int(budget)
    chunk = 50_000
    while remaining > 0:
        m = min(chunk, remaining)
        remaining -= m
        gam = rng.gamma(1.0, 1.0, size=(m, n))
        pts = gam / gam.sum(axis=1, keepdims=True)
        pts = -np.sort(-pts, axis=1)
        mask = _level_set_mask(pts, nu)
        hits = pts[mask]
        feasible += hits.shape[0]
        if hits.shape[0]:
            values = hits[:, :nu].sum(axis=1)
            i = int(values.argmin())
            if values[i] < best_phi:
                best_phi = float(values[i])
                best_w = hits[i].copy()

    if best_w is None:
        raise InfeasibleRegion(
            f"no sample with effective-number level {nu} in {budget} draws (n={n})"
        )

    refined = _refine_min_phi(best_w, nu)
    refined_phi = float(refined[:nu].sum())
    if refined_phi < best_phi:
        best_w, best_phi = refined, refined_phi
    return MinPhiResult(
        n=n,
        nu=nu,
        min_value=best_phi,
        argmin=OrderedSimplexPoint(best_w),
        feasible_samples=feasible,
        budget=int(budget),
        seed=int(seed),
    )


@dataclass
class PropositionCheck:
    """Per-nu comparison of the brute-force minimum against the closed form."""

    nu: int
    closed_form: float
    brute_min: float
    feasible_samples: int
    point_value: float
    lower_ok: bool
    tightness_ok: bool
    point_value_ok: bool
    closure_ok: bool

    @property
    def passed(self) -> bool:
        return self.lower_ok and self.tightness_ok and self.point_value_ok and self.closure_ok


@dataclass
class VerificationReport:
    """Results of certifying the closed-form infimum for one dimension."""

    n: int
    budget: int
    seed: int
    checks: list[PropositionCheck]

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> list[PropositionCheck]:
        return [c for c in self.checks if not c.passed]


# Tolerances used by verify_proposition.
LOWER_TOL = 1e-9        # brute-force min may not undercut the closed form
TIGHTNESS_TOL = 1e-3    # ... and must approach it from above at least this close
POINT_TOL = 1e-12       # extremal-point value must match the closed form


def _check_one(n: int, nu: int, budget: int, seed: int) -> PropositionCheck:
    closed = tight_lower_bound(n, nu)
    result = brute_force_min_phi(n, nu, budget=budget, seed=seed)
    p = extremal_point(n, nu)
    point_value = phi(p, nu)
    d2 = float(np.sum((p.weights - 1.0 / n) ** 2))
    r2_inner = 1.0 / (nu + 1) - 1.0 / n
    return PropositionCheck(
        nu=nu,
        closed_form=closed,
        brute_min=result.min_value,
        feasible_samples=result.feasible_samples,
        point_value=point_value,
        lower_ok=result.min_value >= closed - LOWER_TOL,
        tightness_ok=result.min_value <= closed + TIGHTNESS_TOL,
        point_value_ok=abs(point_value - closed) <= POINT_TOL,
        # The extremal point sits on the inner shell boundary, which is the
        # closure of the (open on that side) level set.
        closure_ok=abs(d2 - r2_inner) <= 1e-12,
    )


def verify_proposition(
    n: int,
    nu_range=None,
    budget: int = 200_000,
    seed: int = 0,
) -> VerificationReport:
    """Certify the closed-form infimum for each nu via the brute-force oracle.

    For every nu (default 2..n-1), checks that the sampled-and-refined
    minimum never undercuts the closed form by more than 1e-9, approaches
    it within 1e-3, that the extremal point evaluates to the closed form
    within 1e-12, and that it lies in the closure of the level set.  A
    failed check is a reported failure, not an exception; sampler errors
    (InfeasibleRegion) do propagate.  Per-nu tasks fan out across threads
    when EMP_THREADS allows, merged deterministically in nu order.
    """
    n = int(n)
    if n < 3:
        raise DomainError(f"n must be >= 3, got {n}")
    if n > 12:
        raise DomainError("the brute-force oracle is limited to n <= 12")
    nus = list(nu_range) if nu_range is not None else list(range(2, n))
    for nu in nus:
        if not 2 <= nu <= n - 1:
            raise DomainError(f"nu={nu} outside [2, {n - 1}]")
    # Distinct per-nu seeds keep fan-out independent of scheduling.
    checks = ordered_map(
        lambda nu: _check_one(n, nu, budget, seed + 7919 * nu),
        nus,
    )
    return VerificationReport(n=n, budget=int(budget), seed=int(seed), checks=checks)
