"""Scalar probability routines shared by the solvers.

Standard-normal quantiles, exact binomial tails, the penalty and scaled
demand derived from a service's reliability target, the minimal replica
count against the exact binomial law, and the penalty refinement that
makes the Gaussian surrogate agree with an integer replica count.
"""

import math
from dataclasses import dataclass

from . import _kernels

_SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class BinomialSpec:
    """Number of independent trials and per-trial success probability."""

    trials: int
    success_prob: float

    def __post_init__(self):
        if self.trials < 0:
            raise ValueError(f"trials must be >= 0, got {self.trials}")
        if not 0.0 <= self.success_prob <= 1.0:
            raise ValueError(f"success_prob must be in [0, 1], got {self.success_prob}")


def standard_normal_lower_tail(z: float) -> float:
    """P(Z <= -z) for a standard normal Z, accurate over the full double range."""
    return 0.5 * math.erfc(z / _SQRT2)


def normal_quantile(tail: float) -> float:
    """The z with P(Z <= -z) = tail, so z > 0 for tail < 1/2.

    Bisection on the monotone lower-tail function; the result satisfies
    |P(Z <= -z) - tail| <= 1e-12.
    """
    if not 0.0 < tail < 1.0:
        raise ValueError(f"tail must lie strictly inside (0, 1), got {tail}")
    lo, hi = -40.0, 40.0  # lower tail spans ~[1e-350, 1] on this bracket
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if standard_normal_lower_tail(mid) > tail:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15:
            break
    return 0.5 * (lo + hi)


def binomial_cdf(k: int, spec: BinomialSpec) -> float:
    """P(X <= k) for X ~ Binomial(spec), exact summation of the smaller tail.

    Relative error stays below ~1e-10 even for probabilities near 1e-17,
    which the rare-event validation relies on.
    """
    return _kernels.binom_cdf(int(k), spec.trials, spec.success_prob)


def derive_penalty(reliability: float, failure_prob: float) -> float:
    """Gaussian safety coefficient turning a reliability target into the
    deterministic surrogate constraint: z(reliability) * sqrt(f / (1 - f))."""
    if not 0.0 < failure_prob < 1.0:
        raise ValueError(f"failure_prob must lie in (0, 1), got {failure_prob}")
    z = normal_quantile(reliability)
    return z * math.sqrt(failure_prob / (1.0 - failure_prob))


def derive_scaled_demand(demand: float, failure_prob: float) -> float:
    """Demand inflated by the expected machine survival rate: d / (1 - f)."""
    if demand <= 0.0:
        raise ValueError(f"demand must be positive, got {demand}")
    if not 0.0 < failure_prob < 1.0:
        raise ValueError(f"failure_prob must lie in (0, 1), got {failure_prob}")
    return demand / (1.0 - failure_prob)


def failure_count_threshold(slice_cpu: float, demand: float) -> int:
    """Largest alive-machine count k that still fails the service.

    The service fails when k * slice < demand; the boundary k * slice ==
    demand counts as success, so the threshold is ceil(demand/slice) - 1.
    """
    return int(math.ceil(demand / slice_cpu)) - 1


def min_replicas_binomial(
    slice_cpu: float, demand: float, reliability: float, failure_prob: float
) -> int:
    """Smallest replica count whose exact binomial failure probability is
    strictly below the reliability target, given a fixed per-replica slice.

    Found by doubling the count until the constraint holds, then binary
    searching the bracket.
    """
    if slice_cpu <= 0.0:
        raise ValueError(f"slice must be positive, got {slice_cpu}")
    k = failure_count_threshold(slice_cpu, demand)
    p = 1.0 - failure_prob
    lo = 0  # zero replicas always fail
    hi = 1
    while _kernels.binom_cdf(k, hi, p) >= reliability:
        lo = hi
        hi *= 2
        if hi > 1 << 62:
            raise RuntimeError("replica search exceeded 2^62 machines")
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if _kernels.binom_cdf(k, mid, p) < reliability:
            hi = mid
        else:
            lo = mid
    return hi


def refine_penalty(replicas: int, slice_cpu: float, scaled_demand: float) -> float:
    """Penalty that makes the surrogate constraint an equality at the given
    integer replica count and slice: (n*A - K) / (A * sqrt(n)).

    Zero when n*A == K exactly (no safety margin); raises when n*A < K,
    since then no nonnegative penalty exists.
    """
    cushion = replicas * slice_cpu - scaled_demand
    if cushion < 0.0:
        raise ValueError(
            f"slice {slice_cpu} too small: {replicas} replicas provide "
            f"{replicas * slice_cpu} < scaled demand {scaled_demand}"
        )
    return cushion / (slice_cpu * math.sqrt(replicas))
