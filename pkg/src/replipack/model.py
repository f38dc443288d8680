"""Domain records, plan representations, validation and JSON round-trips.

All types are immutable value records and safe to share across workers.
Service ids are dense integers 0..ns-1; configurations store only their
nonzero fractions (a machine hosts at most ``mem_capacity`` services).

Numeric comparisons against capacities use a relative slack of 1e-9 so
that plans surviving float arithmetic still validate; a fraction within
1e-12 of 0 or 1 counts as integral.
"""

import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from . import reliability

REL_EPS = 1e-9
FRAC_EPS = 1e-12


@dataclass(frozen=True)
class Platform:
    """Homogeneous machine pool: CPU units, memory slots and failure rate."""

    cpu_capacity: float
    mem_capacity: int
    failure_prob: float

    def __post_init__(self):
        if self.cpu_capacity <= 0.0:
            raise ValueError(f"cpu_capacity must be positive, got {self.cpu_capacity}")
        if int(self.mem_capacity) != self.mem_capacity or self.mem_capacity < 1:
            raise ValueError(f"mem_capacity must be an integer >= 1, got {self.mem_capacity}")
        if not 0.0 < self.failure_prob < 1.0:
            raise ValueError(f"failure_prob must lie in (0, 1), got {self.failure_prob}")


@dataclass(frozen=True)
class Service:
    id: int
    demand: float
    reliability: float

    def __post_init__(self):
        if self.demand <= 0.0:
            raise ValueError(f"service {self.id}: demand must be positive")
        if not 0.0 < self.reliability < 1.0:
            raise ValueError(f"service {self.id}: reliability must lie strictly in (0, 1)")


@dataclass(frozen=True)
class ServiceDerived:
    """Quantities the solvers work with: scaled demand and Gaussian penalty."""

    scaled_demand: float
    penalty: float

    @classmethod
    def from_service(cls, service: Service, failure_prob: float) -> "ServiceDerived":
        return cls(
            scaled_demand=reliability.derive_scaled_demand(service.demand, failure_prob),
            penalty=reliability.derive_penalty(service.reliability, failure_prob),
        )


@dataclass(frozen=True)
class Scenario:
    platform: Platform
    services: tuple[Service, ...]
    rng_seed: int

    def __post_init__(self):
        if not self.services:
            raise ValueError("scenario needs at least one service")
        for expected, svc in enumerate(self.services):
            if svc.id != expected:
                raise ValueError(f"service ids must be dense 0..ns-1, got {svc.id} at {expected}")

    @property
    def num_services(self) -> int:
        return len(self.services)


@dataclass(frozen=True)
class HomogeneousPlan:
    """Per-service replica count and per-replica CPU slice.

    Counts are fractional for the relaxed optimum and integers after the
    binomial refinement.
    """

    replica_counts: tuple[float, ...]
    slices: tuple[float, ...]

    def __post_init__(self):
        if len(self.replica_counts) != len(self.slices):
            raise ValueError("replica_counts and slices must have equal length")
        if any(n <= 0 for n in self.replica_counts) or any(a <= 0 for a in self.slices):
            raise ValueError("replica counts and slices must be positive")

    @property
    def is_integral(self) -> bool:
        return all(abs(n - round(n)) <= FRAC_EPS for n in self.replica_counts)


@dataclass(frozen=True)
class Configuration:
    """Nonzero service fractions hosted by one machine, sorted by service id."""

    fractions: tuple[tuple[int, float], ...]

    @classmethod
    def from_dict(cls, fractions: Mapping[int, float]) -> "Configuration":
        items = tuple(sorted((int(i), float(x)) for i, x in fractions.items() if x != 0.0))
        return cls(items)

    def as_dict(self) -> dict[int, float]:
        return dict(self.fractions)

    def fraction_of(self, service_id: int) -> float:
        for sid, x in self.fractions:
            if sid == service_id:
                return x
        return 0.0


def _is_fractional(x: float) -> bool:
    return FRAC_EPS < x < 1.0 - FRAC_EPS


def validate_configuration(
    config: Configuration, slices: Iterable[float], platform: Platform
) -> bool:
    """True iff the configuration fits one machine and is almost-full.

    Checks the memory slots (one per nonzero fraction), the CPU budget
    sum(x_i * A_i) <= C, and that at most one fraction is strictly
    between 0 and 1.  Unknown service ids or fractions outside [0, 1]
    raise ValueError.
    """
    slices = list(slices)
    slots = 0
    cpu = 0.0
    split_count = 0
    for sid, x in config.fractions:
        if sid < 0 or sid >= len(slices):
            raise ValueError(f"configuration references unknown service id {sid}")
        if x < -FRAC_EPS or x > 1.0 + FRAC_EPS:
            raise ValueError(f"fraction of service {sid} outside [0, 1]: {x}")
        if slices[sid] <= 0.0:
            raise ValueError(f"slice of service {sid} must be positive")
        if x > FRAC_EPS:
            slots += 1
            cpu += x * slices[sid]
            if _is_fractional(x):
                split_count += 1
    if slots > platform.mem_capacity:
        return False
    if cpu > platform.cpu_capacity * (1.0 + REL_EPS):
        return False
    return split_count <= 1


@dataclass(frozen=True)
class AllocationPlan:
    """Machine packing: configurations with multiplicities plus the
    per-service slice sizes and replica targets they were built for."""

    configurations: tuple[Configuration, ...]
    multiplicities: tuple[float, ...]
    slices: tuple[float, ...]
    targets: tuple[float, ...] = field(default=())

    def __post_init__(self):
        if len(self.configurations) != len(self.multiplicities):
            raise ValueError("configurations and multiplicities must have equal length")
        if any(lam < 0 for lam in self.multiplicities):
            raise ValueError("multiplicities must be nonnegative")

    @property
    def machines_used(self) -> float:
        return sum(self.multiplicities)

    @property
    def is_integral(self) -> bool:
        return all(abs(lam - round(lam)) <= FRAC_EPS for lam in self.multiplicities)

    def allocated_cpu(self, service_id: int) -> float:
        return sum(
            lam * cfg.fraction_of(service_id) * self.slices[service_id]
            for cfg, lam in zip(self.configurations, self.multiplicities)
        )

    def covers_targets(self) -> bool:
        """Whether sum_c lambda_c * x_{i,c} >= n_i holds for every service."""
        if not self.targets:
            return True
        for sid, target in enumerate(self.targets):
            covered = sum(
                lam * cfg.fraction_of(sid)
                for cfg, lam in zip(self.configurations, self.multiplicities)
            )
            if covered < target * (1.0 - REL_EPS) - REL_EPS:
                return False
        return True


def expand_plan(plan: AllocationPlan) -> list[dict[int, float]]:
    """Concretize an integral plan into one CPU-assignment map per machine.

    Machine j from configuration c grants x_{i,c} * A_i CPU to service i.
    Machines appear in configuration order, lambda_c copies each.
    """
    machines: list[dict[int, float]] = []
    for cfg, lam in zip(plan.configurations, plan.multiplicities):
        if abs(lam - round(lam)) > FRAC_EPS:
            raise ValueError(f"multiplicity {lam} is not integral; round the plan first")
        assignment = {sid: x * plan.slices[sid] for sid, x in cfg.fractions if x > FRAC_EPS}
        machines.extend(assignment.copy() for _ in range(int(round(lam))))
    return machines


# ---------------------------------------------------------------------------
# JSON round-trips.  Formats are documented in schemas/scenario.schema.json
# and schemas/plan.schema.json at the repository root.


def scenario_to_dict(scenario: Scenario) -> dict:
    return {
        "platform": {
            "cpu": scenario.platform.cpu_capacity,
            "mem": scenario.platform.mem_capacity,
            "fail": scenario.platform.failure_prob,
        },
        "services": [
            {"demand": svc.demand, "reliability": svc.reliability} for svc in scenario.services
        ],
        "seed": scenario.rng_seed,
    }


def scenario_from_dict(data: Mapping) -> Scenario:
    plat = data["platform"]
    platform = Platform(
        cpu_capacity=float(plat["cpu"]),
        mem_capacity=int(plat["mem"]),
        failure_prob=float(plat["fail"]),
    )
    services = tuple(
        Service(id=i, demand=float(svc["demand"]), reliability=float(svc["reliability"]))
        for i, svc in enumerate(data["services"])
    )
    return Scenario(platform=platform, services=services, rng_seed=int(data["seed"]))


def plan_to_dict(plan: AllocationPlan) -> dict:
    data = {
        "slices": list(plan.slices),
        "configurations": [
            {str(sid): x for sid, x in cfg.fractions} for cfg in plan.configurations
        ],
        "multiplicities": list(plan.multiplicities),
    }
    if plan.targets:
        data["targets"] = list(plan.targets)
    return data


def plan_from_dict(data: Mapping) -> AllocationPlan:
    configurations = tuple(
        Configuration.from_dict({int(sid): float(x) for sid, x in cfg.items()})
        for cfg in data["configurations"]
    )
    return AllocationPlan(
        configurations=configurations,
        multiplicities=tuple(float(lam) for lam in data["multiplicities"]),
        slices=tuple(float(a) for a in data["slices"]),
        targets=tuple(float(n) for n in data.get("targets", ())),
    )


def save_scenario(scenario: Scenario, path) -> None:
    with open(path, "w") as fh:
        json.dump(scenario_to_dict(scenario), fh, indent=2)


def load_scenario(path) -> Scenario:
    with open(path) as fh:
        return scenario_from_dict(json.load(fh))


def save_plan(plan: AllocationPlan, path) -> None:
    with open(path, "w") as fh:
        json.dump(plan_to_dict(plan), fh, indent=2)


def load_plan(path) -> AllocationPlan:
    with open(path) as fh:
        return plan_from_dict(json.load(fh))
