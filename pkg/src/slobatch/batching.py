"""Multi-application batching calculus: equivalent timeouts, cost, batch feasibility.

When several applications share one request buffer, each with its own
batching timeout, the expected wait of the first buffered request before
dispatch (the *equivalent batching timeout*) follows from the Poisson arrival
mix: with two applications ordered so t1 <= t2,

    T = t1 + (r2 / (r1 + r2)) * (1 - exp(-r1 * (t2 - t1))) / r1.

Larger groups fold this pairwise, ascending by timeout, with the accumulator
acting as a pseudo-application carrying the merged rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

from .errors import IncompleteGroupError, MisorderedTimeoutsError
from .perf import FunctionConfig, FunctionKind, predict_cpu, predict_gpu
from .profiles import ModelProfile, PricingConfig

_RATE_SUM_RTOL = 1e-12


@dataclass(frozen=True)
class AppSpec:
    """One inference application: latency SLO (seconds) and arrival rate (req/s)."""

    id: str
    slo: float
    rate: float

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("app id must be nonempty")
        if not (self.slo > 0 and self.rate > 0):
            raise ValueError(f"slo and rate must be positive: {self}")


@dataclass(frozen=True, eq=False)
class Group:
    """An ordered set of applications whose requests are batched together.

    ``apps`` must be sorted ascending by SLO. ``timeouts`` (app id -> seconds)
    is set by the provisioner once a candidate configuration fixes the
    worst-case execution latency; it may be absent while searching.
    """

    apps: tuple[AppSpec, ...]
    timeouts: Mapping[str, float] | None = None
    rate: float | None = None

    def __post_init__(self) -> None:
        if not self.apps:
            raise ValueError("group must contain at least one app")
        slos = [a.slo for a in self.apps]
        if any(b < a for a, b in zip(slos, slos[1:])):
            raise ValueError("group apps must be sorted ascending by SLO")
        ids = [a.id for a in self.apps]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate app ids in group: {ids}")
        member_sum = math.fsum(a.rate for a in self.apps)
        if self.rate is None:
            object.__setattr__(self, "rate", member_sum)
        elif abs(self.rate - member_sum) > _RATE_SUM_RTOL * member_sum:
            raise ValueError(
                f"group rate {self.rate} does not equal member sum {member_sum}"
            )
        if self.timeouts is not None:
            missing = [a.id for a in self.apps if a.id not in self.timeouts]
            if missing:
                raise ValueError(f"timeouts missing for apps: {missing}")
            if any(self.timeouts[a.id] < 0 for a in self.apps):
                raise ValueError("timeouts must be nonnegative")

    @property
    def app_ids(self) -> tuple[str, ...]:
        return tuple(a.id for a in self.apps)

    @property
    def min_slo(self) -> float:
        return self.apps[0].slo


def make_group(apps: list[AppSpec] | tuple[AppSpec, ...],
               timeouts: Mapping[str, float] | None = None) -> Group:
    """Build a Group, sorting members ascending by (slo, id)."""
    ordered = tuple(sorted(apps, key=lambda a: (a.slo, a.id)))
    return Group(apps=ordered, timeouts=timeouts)


def equivalent_timeout_pair(r1: float, t1: float, r2: float, t2: float) -> float:
    """Expected first-request wait for two Poisson streams with timeouts t1 <= t2.

    Arguments are not reordered silently; misordered timeouts raise so the
    iterative fold over larger groups stays deterministic.
    """
    if r1 <= 0 or r2 <= 0:
        raise ValueError("rates must be positive")
    if t1 > t2:
        raise MisorderedTimeoutsError(f"t1 ({t1}) must not exceed t2 ({t2})")
    eta2 = r2 / (r1 + r2)
    return t1 + eta2 * (1.0 - math.exp(-r1 * (t2 - t1))) / r1


def equivalent_timeout_fold(pairs: list[tuple[float, float]]) -> float:
    """Fold (rate, timeout) pairs, ascending by timeout, into one equivalent timeout.

    The accumulator is treated as a pseudo-application whose rate is the sum
    of the rates merged so far; its equivalent timeout never exceeds the next
    member's timeout, so the pairwise ordering precondition holds at every
    step.
    """
    if not pairs:
        raise ValueError("need at least one (rate, timeout) pair")
    ordered = sorted(pairs, key=lambda p: p[1])
    acc_rate, acc_timeout = ordered[0]
    for rate, timeout in ordered[1:]:
        acc_timeout = equivalent_timeout_pair(acc_rate, acc_timeout, rate, timeout)
        acc_rate += rate
    return acc_timeout


def equivalent_timeout_group(group: Group) -> float:
    """Equivalent batching timeout of a group with all member timeouts set."""
    if group.timeouts is None:
        raise IncompleteGroupError("group has no timeouts set")
    missing = [a.id for a in group.apps if a.id not in group.timeouts]
    if missing:
        raise IncompleteGroupError(f"timeouts missing for apps: {missing}")
    return equivalent_timeout_fold(
        [(a.rate, group.timeouts[a.id]) for a in group.apps]
    )


def cost_per_request(
    profile: ModelProfile,
    pricing: PricingConfig,
    config: FunctionConfig,
    batch: int,
) -> float:
    """Average monetary cost of one request: resource-seconds at the average
    latency plus the per-invocation constant, amortized over the batch."""
    if config.kind is FunctionKind.CPU:
        avg = predict_cpu(profile, config.cores, batch).avg
        resource_rate = config.cores * pricing.k1
    else:
        avg = predict_gpu(profile, config.mem, batch).avg
        resource_rate = config.mem * pricing.k2
    return (avg * resource_rate + pricing.k3) / batch


def feasible_batch(rate: float, eq_timeout: float, batch: int) -> bool:
    """Whether ``batch`` requests accumulate within one equivalent timeout.

    The first request plus the expected arrivals over the wait window must
    reach the batch size: floor(rate * eq_timeout) + 1 >= batch.
    """
    if rate <= 0:
        raise ValueError("rate must be positive")
    if eq_timeout < 0:
        raise ValueError("eq_timeout must be nonnegative")
    if batch < 1:
        raise ValueError("batch must be >= 1")
    return math.floor(rate * eq_timeout) + 1 >= batch
