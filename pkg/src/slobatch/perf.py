"""Pure latency predictors for CPU and GPU function configurations.

CPU latency follows the fitted exponential decay in allocated vCPU cores,
with separate coefficient sets for the average and the maximum. GPU latency
derives from the base line ``l0 = xi1*b + xi2`` measured on an exclusively
owned device: with a fractional allocation of ``mem`` units out of ``m_max``
the function owns one ``mem*tau`` slice per ``m_max*tau`` cycle, stretching
the average by ``m_max/mem`` and bounding the worst case by one preempted gap
per started slice of work.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .errors import OutOfRangeError, UnknownBatchError
from .profiles import ModelProfile

_RANGE_EPS = 1e-9


class FunctionKind(str, Enum):
    CPU = "cpu"
    GPU = "gpu"


@dataclass(frozen=True)
class FunctionConfig:
    """A provisioned function: CPU with ``cores`` vCPUs, or GPU with ``mem`` units.

    The inactive resource is zero by convention, so a single (cores, mem)
    pair also encodes the kind.
    """

    kind: FunctionKind
    cores: float = 0.0
    mem: int = 0

    def __post_init__(self) -> None:
        if self.kind is FunctionKind.CPU and not (self.cores > 0 and self.mem == 0):
            raise ValueError(f"CPU config needs cores > 0 and mem == 0: {self}")
        if self.kind is FunctionKind.GPU and not (self.mem >= 1 and self.cores == 0):
            raise ValueError(f"GPU config needs mem >= 1 and cores == 0: {self}")


@dataclass(frozen=True)
class LatencyEstimate:
    avg: float
    max: float


def predict_cpu(profile: ModelProfile, cores: float, batch: int) -> LatencyEstimate:
    """Average and maximum latency of one batch on a CPU function."""
    if batch not in profile.cpu_avg:
        raise UnknownBatchError(
            f"batch {batch} has no fitted CPU coefficients (profiled: {profile.cpu_batches})"
        )
    lo, hi, _ = profile.cpu_core_range
    if not (lo - _RANGE_EPS <= cores <= hi + _RANGE_EPS):
        raise OutOfRangeError(f"cores {cores} outside configured range [{lo}, {hi}]")
    return LatencyEstimate(
        avg=profile.cpu_avg[batch].predict(cores),
        max=profile.cpu_max[batch].predict(cores),
    )


def predict_gpu_base(profile: ModelProfile, batch: int) -> float:
    """Latency of one batch on an exclusively owned GPU (memory = m_max)."""
    lo, hi = profile.gpu_batch_range
    if not (lo <= batch <= hi):
        raise OutOfRangeError(f"gpu batch {batch} outside configured range [{lo}, {hi}]")
    return profile.gpu.base_latency(batch)


def predict_gpu(profile: ModelProfile, mem: int, batch: int) -> LatencyEstimate:
    """Average and maximum latency of one batch on a time-sliced GPU function.

    Memory demand is deliberately not checked here; the provisioner owns that
    constraint. With ``mem == m_max`` average and maximum coincide with the
    base latency.
    """
    m_max = profile.platform.m_max
    if not (1 <= mem <= m_max):
        raise OutOfRangeError(f"gpu memory {mem} outside [1, {m_max}]")
    l0 = predict_gpu_base(profile, batch)
    if mem == m_max:
        return LatencyEstimate(avg=l0, max=l0)
    tau = profile.platform.tau
    avg = (m_max / mem) * l0
    mx = math.ceil(l0 / (mem * tau)) * ((m_max - mem) * tau) + l0
    return LatencyEstimate(avg=avg, max=mx)
