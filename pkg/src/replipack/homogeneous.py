"""Optimal solver for the capacity-relaxed placement problem.

With per-machine packing relaxed to aggregate memory and CPU budgets,
allocations that give a service the same slice on every host machine are
dominant, and the optimum is characterized by a common value of the
marginal CPU cost across services.  That balance multiplier is located by
a binary search whose per-service inner problem is a monotone cubic.

The refinement loop then replaces the Gaussian surrogate with the exact
binomial law: pick the minimal integer replica count for the current
slices, recalibrate each penalty so the surrogate is tight at that count,
and re-solve until the penalties settle.
"""

from dataclasses import dataclass

import numpy as np

from .model import HomogeneousPlan, Platform, Scenario
from .reliability import derive_penalty, derive_scaled_demand, min_replicas_binomial

# Penalties at or below zero (reliability targets >= 1/2) degenerate the
# cubic; they are clamped here and corrected by the binomial refinement.
PENALTY_FLOOR = 1e-6


@dataclass(frozen=True)
class RefinementState:
    """Outcome of the penalty refinement loop."""

    penalties: tuple[float, ...]
    iterations: int
    converged: bool
    epsilon: float


@dataclass(frozen=True)
class RefinementResult:
    plan: HomogeneousPlan  # integer replica counts, binomially safe
    state: RefinementState
    fractional_plan: HomogeneousPlan
    fractional_machines: float


def _as_arrays(penalties, scaled_demands):
    pen = np.asarray(penalties, dtype=float)
    dem = np.asarray(scaled_demands, dtype=float)
    if pen.shape != dem.shape or pen.ndim != 1 or pen.size == 0:
        raise ValueError("penalties and scaled demands must be equal-length 1-d sequences")
    if np.any(pen <= 0.0):
        raise ValueError("penalties must be strictly positive (clamp degenerate ones first)")
    if np.any(dem <= 0.0):
        raise ValueError("scaled demands must be strictly positive")
    return pen, dem


def _replica_counts(pen: np.ndarray, dem: np.ndarray, multiplier: float) -> np.ndarray:
    """Vectorized root of x (x - B)^2 = B K / |X| with x > B; returns n = x^2.

    The root exceeds both B and cbrt(BK/|X|); it is bounded above by
    max(2B, cbrt(4 B K / |X|)), and the cubic is increasing beyond B, so
    plain bisection applies.
    """
    target = -pen * dem / multiplier
    lo = np.maximum(pen, np.cbrt(target))
    hi = np.maximum(2.0 * pen, np.cbrt(4.0 * target))
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        below = mid * (mid - pen) ** 2 < target
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    x = 0.5 * (lo + hi)
    return x * x


def replica_count_for_multiplier(penalty: float, scaled_demand: float, multiplier: float) -> float:
    """Fractional replica count at which the service's marginal CPU cost
    equals the given (negative) balance multiplier."""
    if penalty <= 0.0:
        raise ValueError(f"penalty must be positive, got {penalty}")
    if scaled_demand <= 0.0:
        raise ValueError(f"scaled demand must be positive, got {scaled_demand}")
    if multiplier >= 0.0:
        raise ValueError(f"multiplier must be negative, got {multiplier}")
    return float(
        _replica_counts(np.array([penalty]), np.array([scaled_demand]), multiplier)[0]
    )


def bounds_for_multiplier(penalties, scaled_demands, mem_over_cpu: float):
    """Bracket [X_lo, X_hi] for the optimal balance multiplier.

    Evaluates the marginal cost at each service's single-service optimum
    n*_i (the root of n - B sqrt(n) = (M/C) K); the true multiplier lies
    between the smallest and largest of those.
    """
    pen, dem = _as_arrays(penalties, scaled_demands)
    sqrt_nstar = 0.5 * (pen + np.sqrt(pen**2 + 4.0 * mem_over_cpu * dem))
    per_service = -pen * dem / (sqrt_nstar * (sqrt_nstar - pen) ** 2)
    return float(per_service.min()), float(per_service.max())


def _cpu_need(pen: np.ndarray, dem: np.ndarray, counts: np.ndarray) -> np.ndarray:
    return dem / (1.0 - pen / np.sqrt(counts))


def solve_balance(penalties, scaled_demands, platform: Platform):
    """Multiplier X* and replica counts equalizing both relaxed budgets.

    sum_i n_i(X) grows with X while the total CPU need shrinks, so the
    X with sum n_i(X) = (M/C) * sum K_i / (1 - B_i / sqrt(n_i(X)))
    is unique; bisection inside the bracket from bounds_for_multiplier.
    """
    pen, dem = _as_arrays(penalties, scaled_demands)
    moc = platform.mem_capacity / platform.cpu_capacity

    def imbalance(mult):
        counts = _replica_counts(pen, dem, mult)
        lhs = counts.sum()
        rhs = moc * _cpu_need(pen, dem, counts).sum()
        return lhs - rhs, lhs, rhs, counts

    lo, hi = bounds_for_multiplier(pen, dem, moc)
    gap_lo, _, _, counts_lo = imbalance(lo)
    if lo == hi or gap_lo >= 0.0:
        return lo, counts_lo
    gap_hi, lhs, rhs, counts = imbalance(hi)
    if gap_hi <= 0.0:
        return hi, counts
    scale = max(abs(lo), abs(hi))
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        gap, lhs, rhs, counts = imbalance(mid)
        if gap < 0.0:
            lo = mid
        else:
            hi = mid
        if abs(gap) <= 1e-12 * max(lhs, rhs) or hi - lo <= 1e-15 * scale:
            return mid, counts
    raise RuntimeError(
        f"balance search failed to converge: bracket [{lo}, {hi}], residual {gap}"
    )


def solve_homogeneous(penalties, scaled_demands, platform: Platform):
    """Relaxed optimum: fractional plan plus its (fractional) machine count.

    Slices come from the tight surrogate constraint, A = K / (n - B sqrt(n)),
    and both aggregate budgets hold with equality at the returned count.
    """
    pen, dem = _as_arrays(penalties, scaled_demands)
    _, counts = solve_balance(pen, dem, platform)
    slices = dem / (counts - pen * np.sqrt(counts))
    machines = counts.sum() / platform.mem_capacity
    plan = HomogeneousPlan(tuple(counts), tuple(slices))
    return plan, float(machines)


def _min_counts_for_slice_cap(pen: np.ndarray, dem: np.ndarray, cpu_capacity: float):
    """Replica counts at which the tight slice exactly fills one machine."""
    root = 0.5 * (pen + np.sqrt(pen**2 + 4.0 * dem / cpu_capacity))
    return root * root


def _capped_relaxed_solve(pen, dem, platform):
    """Relaxed solve, then raise any count whose slice would exceed one
    machine's CPU (the packing stage cannot place such a slice)."""
    _, counts = solve_balance(pen, dem, platform)
    machines = counts.sum() / platform.mem_capacity
    floor_counts = _min_counts_for_slice_cap(pen, dem, platform.cpu_capacity)
    counts = np.maximum(counts, floor_counts)
    slices = dem / (counts - pen * np.sqrt(counts))
    return counts, slices, float(machines)


def iterate_refinement(
    scenario: Scenario, epsilon: float = 1e-6, iteration_cap: int = 50
) -> RefinementResult:
    """Alternate the relaxed solve with exact binomial replica counts until
    no penalty moves by more than epsilon.

    Each pass solves the relaxed problem at the current penalties, finds
    the minimal integer replica count that meets each service's exact
    binomial constraint at the resulting slice, and resets the penalty so
    the surrogate is an equality at that integer count.  A repeat of an
    earlier penalty vector (a cycle) or the iteration cap stops the loop
    with converged=False; the last iterate is returned either way.
    """
    platform = scenario.platform
    fail = platform.failure_prob
    demands = np.array([svc.demand for svc in scenario.services])
    targets_rel = [svc.reliability for svc in scenario.services]
    dem = np.array([derive_scaled_demand(d, fail) for d in demands])
    pen = np.array([max(derive_penalty(r, fail), PENALTY_FLOOR) for r in targets_rel])

    history = [pen.copy()]
    converged = False
    iterations = 0
    counts = slices = int_counts = None
    machines_frac = 0.0
    while iterations < iteration_cap:
        iterations += 1
        counts, slices, machines_frac = _capped_relaxed_solve(pen, dem, platform)
        int_counts = np.array(
            [
                min_replicas_binomial(slices[i], demands[i], targets_rel[i], fail)
                for i in range(len(demands))
            ]
        )
        cushion = int_counts * slices - dem
        new_pen = np.where(
            cushion > 0.0, cushion / (slices * np.sqrt(int_counts)), PENALTY_FLOOR
        )
        new_pen = np.maximum(new_pen, PENALTY_FLOOR)
        delta = float(np.max(np.abs(new_pen - pen)))
        if delta <= epsilon:
            pen = new_pen
            converged = True
            break
        if any(float(np.max(np.abs(new_pen - old))) <= epsilon for old in history[:-1]):
            pen = new_pen  # cycle detected; keep the last iterate
            break
        pen = new_pen
        history.append(pen.copy())

    state = RefinementState(
        penalties=tuple(pen), iterations=iterations, converged=converged, epsilon=epsilon
    )
    plan = HomogeneousPlan(tuple(int(n) for n in int_counts), tuple(slices))
    fractional = HomogeneousPlan(tuple(counts), tuple(slices))
    return RefinementResult(
        plan=plan,
        state=state,
        fractional_plan=fractional,
        fractional_machines=machines_frac,
    )
