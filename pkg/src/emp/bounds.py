"""Closed-form bounds on retained mass and on the pruning loss change.

For a nonzero score vector of length ``n`` with effective number ``nu``,
the retained mass obeys two lower bounds:

* trivial:  s_eff >= nu/n, exact and tolerance-free;
* tight:    s_eff >= nu/n + ((n-nu)/n) * sqrt((n-nu-1)/((nu+1)(n-1))),

the latter being the infimum of the retained mass over the level set where
the effective number equals ``nu`` (attained in the limit at the extremal
point constructed in :mod:`emp.simplex`).  The companion gap forms bound
``1 - s_eff`` from above.

The loss-change bounds translate a pruning ratio, a Hessian trace, and a
parameter displacement into an upper bound on the train-loss difference
between a dense model and its magnitude-pruned version.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError, MissingDeltaTheta

__all__ = [
    "BoundReport",
    "LossBoundInputs",
    "trivial_bound",
    "tight_lower_bound",
    "exact_gap_bound",
    "approx_upper_gap",
    "bound_report",
    "epsilon_bound_lemma",
    "epsilon_bound_asymptotic",
]


def _check_pair(n: int, nu: int) -> tuple[int, int]:
    n, nu = int(n), int(nu)
    if n < 2:
        raise DomainError(f"n must be >= 2, got {n}")
    if nu < 1 or nu > n:
        raise DomainError(f"nu={nu} outside [1, {n}]")
    return n, nu


def trivial_bound(n: int, nu: int) -> float:
    """The always-valid lower bound nu/n on the retained mass."""
    n, nu = _check_pair(n, nu)
    return nu / n


def tight_lower_bound(n: int, nu: int) -> float:
    """Infimum of the retained mass over score vectors with effective number nu.

    Special values: nu = n gives 1 (everything kept) and nu = 1 gives 1/2
    (the top weight alone carries at least half the mass).  For
    2 <= nu <= n-1 the closed form is

        nu/n + ((n-nu)/n) * sqrt((n-nu-1) / ((nu+1)(n-1))).
    """
    n, nu = _check_pair(n, nu)
    if nu == n:
        return 1.0
    if nu == 1:
        return 0.5
    return nu / n + (n - nu) / n * math.sqrt((n - nu - 1) / ((nu + 1) * (n - 1)))


def exact_gap_bound(n: int, nu: int) -> float:
    """Upper bound on 1 - s_eff; complements tight_lower_bound exactly."""
    n, nu = _check_pair(n, nu)
    if not 2 <= nu < n:
        raise DomainError(f"gap bound needs 2 <= nu < n, got nu={nu}, n={n}")
    return (n - nu) / n * (1.0 - math.sqrt((n - nu - 1) / ((nu + 1) * (n - 1))))


def approx_upper_gap(n: int, nu: int) -> float:
    """Large-n approximation ((n-nu)/n) * (1 - sqrt((n-nu)/(n*nu))) of the gap."""
    n, nu = _check_pair(n, nu)
    if not 2 <= nu < n:
        raise DomainError(f"approximate gap needs 2 <= nu < n, got nu={nu}, n={n}")
    return (n - nu) / n * (1.0 - math.sqrt((n - nu) / (n * nu)))


@dataclass
class BoundReport:
    """Bounds for one (n, nu) pair, optionally compared to an observed mass."""

    n: int
    nu: int
    trivial_bound: float
    tight_bound: float
    approx_bound: float | None
    observed_s_eff: float | None = None
    slack: float | None = None


def bound_report(n: int, nu: int, observed_s_eff: float | None = None) -> BoundReport:
    """Assemble trivial/tight/approximate bounds, with slack vs an observation.

    ``approx_bound`` is the approximate lower bound 1 - approx_upper_gap,
    defined only for 2 <= nu < n (None otherwise).  ``slack`` is
    observed - tight when an observation is supplied.
    """
    n, nu = _check_pair(n, nu)
    tight = tight_lower_bound(n, nu)
    approx = 1.0 - approx_upper_gap(n, nu) if 2 <= nu < n else None
    slack = None if observed_s_eff is None else observed_s_eff - tight
    return BoundReport(
        n=n,
        nu=nu,
        trivial_bound=trivial_bound(n, nu),
        tight_bound=tight,
        approx_bound=approx,
        observed_s_eff=observed_s_eff,
        slack=slack,
    )


@dataclass
class LossBoundInputs:
    """Measured quantities feeding the loss-change bounds.

    rho is the kept fraction k/N in (0, 1); theta_l1 the L1 norm of the
    dense parameters; trace_h the Hessian trace of the loss at the dense
    optimum; delta_theta_sq the squared L2 displacement between dense and
    pruned parameters (required by the exact-form bound only).
    """

    rho: float
    n: int
    theta_l1: float = 0.0
    trace_h: float = 0.0
    delta_theta_sq: float | None = None

    def __post_init__(self):
        if not (0.0 < self.rho < 1.0):
            raise DomainError(f"rho must lie in (0, 1), got {self.rho}")
        if self.n < 2:
            raise DomainError(f"n must be >= 2, got {self.n}")
        if self.trace_h < 0:
            raise DomainError("trace_h must be nonnegative")
        if self.theta_l1 < 0:
            raise DomainError("theta_l1 must be nonnegative")


def epsilon_bound_lemma(inp: LossBoundInputs) -> float:
    """Loss-change bound ((1-rho)/(2*N*rho)) * Tr(H) * ||theta* - theta_k||^2."""
    if inp.delta_theta_sq is None:
        raise MissingDeltaTheta("delta_theta_sq is required for the exact-form bound")
    return (1.0 - inp.rho) / (2.0 * inp.n * inp.rho) * inp.trace_h * inp.delta_theta_sq


def epsilon_bound_asymptotic(inp: LossBoundInputs) -> float:
    """Displacement-free bound valid as N grows.

    Returns ||theta*||_1^2 * Tr(H) * ((1-rho)^4 / (2 rho))
    * (1 - sqrt((1-rho)/(N rho)))^2.
    """
    rho, n = inp.rho, inp.n
    shape = (1.0 - rho) ** 4 / (2.0 * rho) * (1.0 - math.sqrt((1.0 - rho) / (n * rho))) ** 2
    return inp.theta_l1**2 * inp.trace_h * shape
