"""Fitted workload coefficients, platform constants, and the fitting routines.

A :class:`ModelProfile` bundles everything the predictors and the provisioner
need about one DNN workload: per-batch CPU latency coefficients (average and
maximum variants), the GPU latency line, the GPU memory demand model, and the
platform constants of the time-sliced GPU runtime. Profiles are immutable
after construction; re-fitting produces a new profile.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import (
    EstimationFailureError,
    InsufficientDataError,
    InvalidSampleError,
    ProfileValidationError,
)

PROFILE_FORMAT_VERSION = 1

# Defaults mirroring common public-cloud function offerings (vCPU grid of
# 0.05 cores up to 16, a 24-unit GPU in 1-unit slices).
DEFAULT_CPU_CORE_RANGE = (0.05, 16.0, 0.05)
DEFAULT_CPU_BATCH_RANGE = (1, 4)
DEFAULT_GPU_BATCH_RANGE = (1, 32)
DEFAULT_M_MAX = 24
DEFAULT_MEM_STEP = 1
DEFAULT_TAU = 0.002

# Scan range used by estimate_tau when none is configured.
DEFAULT_TAU_RANGE = (1e-4, 0.1)


@dataclass(frozen=True)
class CpuLatencyCoeffs:
    """Exponential-decay latency model for one CPU batch size.

    latency(c) = alpha * exp(-c / beta) + gamma, for c allocated vCPU cores.
    """

    alpha: float
    beta: float
    gamma: float

    def predict(self, cores: float) -> float:
        return self.alpha * math.exp(-cores / self.beta) + self.gamma


@dataclass(frozen=True)
class GpuLatencyCoeffs:
    """Linear batch-size latency model on an exclusively-owned GPU."""

    xi1: float
    xi2: float

    def base_latency(self, batch: int) -> float:
        return self.xi1 * batch + self.xi2


@dataclass(frozen=True)
class GpuPlatform:
    """Time-slicing constants of the GPU runtime.

    The scheduler splits each cycle of ``m_max * tau`` seconds into ``m_max``
    unit slices; a function holding ``m`` memory units owns one contiguous
    slice of ``m * tau`` per cycle.
    """

    m_max: int
    tau: float
    mem_step: int = 1

    @property
    def cycle(self) -> float:
        return self.m_max * self.tau


@dataclass(frozen=True)
class MemoryDemandModel:
    """GPU memory demand as an affine function of batch size."""

    mu0: float
    mu1: float

    def demand(self, batch: int) -> float:
        return self.mu0 + self.mu1 * batch


@dataclass(frozen=True)
class PricingConfig:
    """Unit prices: k1 per vCPU-second, k2 per GPU-memory-unit-second, k3 per invocation."""

    k1: float
    k2: float
    k3: float


@dataclass(frozen=True, eq=False)
class ModelProfile:
    """Immutable bundle of fitted coefficients plus search-space ranges."""

    cpu_avg: dict[int, CpuLatencyCoeffs]
    cpu_max: dict[int, CpuLatencyCoeffs]
    gpu: GpuLatencyCoeffs
    mem: MemoryDemandModel
    platform: GpuPlatform
    cpu_core_range: tuple[float, float, float] = DEFAULT_CPU_CORE_RANGE
    cpu_batch_range: tuple[int, int] = DEFAULT_CPU_BATCH_RANGE
    gpu_batch_range: tuple[int, int] = DEFAULT_GPU_BATCH_RANGE

    @cached_property
    def cpu_batches(self) -> tuple[int, ...]:
        return tuple(sorted(self.cpu_avg))

    @cached_property
    def core_grid(self) -> tuple[float, ...]:
        lo, hi, step = self.cpu_core_range
        n = int(round((hi - lo) / step)) + 1
        return tuple(lo + i * step for i in range(n))

    @cached_property
    def mem_grid(self) -> tuple[int, ...]:
        step = self.platform.mem_step
        return tuple(range(step, self.platform.m_max + 1, step))

    def core_index(self, cores: float) -> int:
        """Index of the grid point nearest ``cores`` (which should lie on the grid)."""
        lo, _, step = self.cpu_core_range
        return int(round((cores - lo) / step))


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def validate_model_profile(profile: ModelProfile) -> None:
    """Check every profile invariant; raise ProfileValidationError on the first failure.

    Runs the full-grid consistency check (max-variant prediction must dominate
    the avg-variant at every (batch, cores) point), so call it once at load
    time rather than per prediction.
    """
    lo, hi, step = profile.cpu_core_range
    if not (lo > 0 and step > 0 and hi >= lo):
        raise ProfileValidationError(f"invalid cpu core range {profile.cpu_core_range}")
    b_lo, b_hi = profile.cpu_batch_range
    if b_lo != 1 or b_hi < b_lo:
        raise ProfileValidationError(f"invalid cpu batch range {profile.cpu_batch_range}")
    g_lo, g_hi = profile.gpu_batch_range
    if g_lo != 1 or g_hi < 1:
        raise ProfileValidationError(f"invalid gpu batch range {profile.gpu_batch_range}")

    expected = set(range(b_lo, b_hi + 1))
    if set(profile.cpu_avg) != expected or set(profile.cpu_max) != expected:
        raise ProfileValidationError(
            "cpu_avg/cpu_max batch keys must both cover "
            f"{sorted(expected)}; got avg={sorted(profile.cpu_avg)} max={sorted(profile.cpu_max)}"
        )

    for name, table in (("cpu_avg", profile.cpu_avg), ("cpu_max", profile.cpu_max)):
        for b, c in table.items():
            if not (c.alpha > 0 and c.beta > 0 and c.gamma >= 0):
                raise ProfileValidationError(f"{name}[{b}] violates alpha>0, beta>0, gamma>=0: {c}")

    if not (profile.gpu.xi1 > 0 and profile.gpu.xi2 >= 0):
        raise ProfileValidationError(f"gpu coefficients violate xi1>0, xi2>=0: {profile.gpu}")
    if not (profile.mem.mu0 >= 0 and profile.mem.mu1 >= 0):
        raise ProfileValidationError(f"memory demand model must be nonnegative: {profile.mem}")

    plat = profile.platform
    if not (plat.m_max >= 1 and plat.tau > 0 and plat.mem_step >= 1):
        raise ProfileValidationError(f"invalid platform constants: {plat}")
    if plat.m_max % plat.mem_step != 0:
        raise ProfileValidationError(
            f"mem_step {plat.mem_step} must divide m_max {plat.m_max}"
        )

    # Hard load-time check: the max-variant curve must dominate the avg curve
    # at every grid point, otherwise SLO checks would be optimistic.
    grid = np.asarray(profile.core_grid)
    for b in profile.cpu_batches:
        a = profile.cpu_avg[b]
        m = profile.cpu_max[b]
        avg_pred = a.alpha * np.exp(-grid / a.beta) + a.gamma
        max_pred = m.alpha * np.exp(-grid / m.beta) + m.gamma
        bad = np.nonzero(max_pred < avg_pred - 1e-12)[0]
        if bad.size:
            c = grid[bad[0]]
            raise ProfileValidationError(
                f"max-variant latency below avg-variant at batch={b}, cores={c:.2f}"
            )


# ---------------------------------------------------------------------------
# Fitting
# ---------------------------------------------------------------------------

_GAMMA_SCAN_POINTS = 200
_GAMMA_REFINE_TOL = 1e-9
_FLAT_BETA = 1e18


def _log_linear_fit(cores: np.ndarray, lats: np.ndarray, gamma: float):
    """Closed-form regression of log(latency - gamma) on cores.

    Returns (alpha, beta, ssr) where ssr is the sum of squared residuals of
    the full exponential model in the original (non-log) space.
    """
    y = np.log(lats - gamma)
    cx = cores - cores.mean()
    denom = float(cx @ cx)
    slope = float(cx @ (y - y.mean())) / denom
    intercept = float(y.mean() - slope * cores.mean())
    if slope >= -1e-300:
        # Non-decaying data for this gamma: fall back to an (almost) flat
        # exponential so the model stays well-defined.
        alpha = math.exp(intercept)
        beta = _FLAT_BETA
    else:
        beta = -1.0 / slope
        alpha = math.exp(intercept)
    pred = alpha * np.exp(-cores / beta) + gamma
    ssr = float(((pred - lats) ** 2).sum())
    return alpha, beta, ssr


def fit_cpu_coeffs(
    samples: list[tuple[float, float]], which: str = "avg"
) -> tuple[CpuLatencyCoeffs, float]:
    """Fit (alpha, beta, gamma) of the exponential-decay CPU latency model.

    ``samples`` holds (cores, latency_seconds) pairs for one batch size. The
    fit minimizes the sum of squared residuals in the original latency space
    via a deterministic outer scan over gamma (200 uniform points on
    [0, min(latency)) plus golden-section refinement to 1e-9) with a
    closed-form log-space regression for (alpha, beta) at each gamma.

    Returns (coefficients, residual RMS). ``which`` is accepted for symmetry
    with the two coefficient variants; it does not change the algorithm.
    """
    if which not in ("avg", "max"):
        raise ValueError(f"which must be 'avg' or 'max', got {which!r}")
    if not samples:
        raise InsufficientDataError("no samples provided")
    cores = np.asarray([s[0] for s in samples], dtype=float)
    lats = np.asarray([s[1] for s in samples], dtype=float)
    if np.any(lats <= 0):
        raise InvalidSampleError("latencies must be positive")
    if np.any(cores <= 0):
        raise InvalidSampleError("core counts must be positive")
    if len(np.unique(cores)) < 4:
        raise InsufficientDataError("need samples at >= 4 distinct core counts")

    mean_lat = float(lats.mean())
    raw_slope = float(np.polyfit(cores, lats, 1)[0])
    if raw_slope >= 0:
        # Flat or increasing data carries no exponential decay; return the
        # degenerate fit gamma ~= mean latency, alpha ~= 0.
        alpha = max(1e-9 * mean_lat, 1e-300)
        beta = 1.0
        gamma = mean_lat - alpha * float(np.exp(-cores / beta).mean())
        pred = alpha * np.exp(-cores / beta) + gamma
        rms = float(np.sqrt(((pred - lats) ** 2).mean()))
        return CpuLatencyCoeffs(alpha, beta, max(gamma, 0.0)), rms

    min_lat = float(lats.min())
    gammas = min_lat * np.arange(_GAMMA_SCAN_POINTS) / _GAMMA_SCAN_POINTS
    ssrs = np.array([_log_linear_fit(cores, lats, g)[2] for g in gammas])
    best = int(np.argmin(ssrs))  # first minimum, i.e. ties break toward smaller gamma

    lo = gammas[best - 1] if best > 0 else gammas[0]
    hi = gammas[best + 1] if best + 1 < len(gammas) else min_lat * (1 - 1e-12)
    gamma = _golden_section(lambda g: _log_linear_fit(cores, lats, g)[2], lo, hi)

    alpha, beta, ssr = _log_linear_fit(cores, lats, gamma)
    rms = math.sqrt(ssr / len(lats))
    return CpuLatencyCoeffs(alpha, beta, max(gamma, 0.0)), rms


def _golden_section(f, lo: float, hi: float, tol: float = _GAMMA_REFINE_TOL) -> float:
    """Golden-section minimization; equal evaluations keep the left interval."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = hi - invphi * (hi - lo)
    d = lo + invphi * (hi - lo)
    fc, fd = f(c), f(d)
    while hi - lo > tol:
        if fc <= fd:
            hi, d, fd = d, c, fc
            c = hi - invphi * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + invphi * (hi - lo)
            fd = f(d)
    return lo


def fit_gpu_coeffs(samples: list[tuple[int, float]]) -> tuple[GpuLatencyCoeffs, float]:
    """Least-squares line through (batch, latency) samples; slope=xi1, intercept=xi2.

    A non-positive fitted slope is returned as-is with an ill-conditioned
    profile warning; profile validation rejects it if the coefficients are
    later assembled into a ModelProfile.
    """
    if not samples:
        raise InsufficientDataError("no samples provided")
    batches = np.asarray([s[0] for s in samples], dtype=float)
    lats = np.asarray([s[1] for s in samples], dtype=float)
    if np.any(lats <= 0):
        raise InvalidSampleError("latencies must be positive")
    if len(np.unique(batches)) < 2:
        raise InsufficientDataError("need samples at >= 2 distinct batch sizes")

    xi1, xi2 = (float(v) for v in np.polyfit(batches, lats, 1))
    if xi1 <= 0:
        warnings.warn(
            f"fitted GPU latency slope is non-positive ({xi1:.3g}); profile is ill-conditioned",
            RuntimeWarning,
            stacklevel=2,
        )
    pred = xi1 * batches + xi2
    rms = float(np.sqrt(((pred - lats) ** 2).mean()))
    return GpuLatencyCoeffs(xi1, xi2), rms


def estimate_tau(
    l0: float,
    observed_lmax: float,
    mem: int,
    m_max: int,
    tau_range: tuple[float, float] = DEFAULT_TAU_RANGE,
) -> float:
    """Solve the worst-case time-slicing latency relation for the unit slice tau.

    The relation ceil(l0 / (mem*tau)) * (m_max - mem) * tau + l0 = observed_lmax
    is piecewise linear in tau with one exact candidate per ceiling branch, so
    branch candidates are enumerated in closed form and checked for
    consistency; a dense grid scan backs this up for noisy observations. When
    several tau values explain the observation equally well (the relation
    aliases), the largest in-range value is returned for determinism.
    """
    if observed_lmax <= l0:
        raise ValueError(f"observed_lmax ({observed_lmax}) must exceed l0 ({l0})")
    if not (1 <= mem < m_max):
        raise ValueError(f"mem must satisfy 1 <= mem < m_max, got mem={mem}, m_max={m_max}")
    if l0 <= 0:
        raise ValueError("l0 must be positive")

    tau_min, tau_max = tau_range
    gap = m_max - mem
    extra = observed_lmax - l0

    candidates: list[tuple[float, float]] = []  # (abs error, tau)
    k_limit = int(extra / (gap * tau_min)) + 1
    for k in range(1, min(k_limit, 200_000) + 1):
        tau_k = extra / (k * gap)
        if not (tau_min < tau_k <= tau_max):
            continue
        x = l0 / (mem * tau_k)
        if x <= k * (1 + 1e-9) and x > (k - 1) * (1 - 1e-9):
            pred = k * gap * tau_k + l0
            candidates.append((abs(pred - observed_lmax), tau_k))

    if not candidates:
        taus = np.linspace(tau_min, tau_max, 20_001)[1:]
        preds = np.ceil(l0 / (mem * taus)) * gap * taus + l0
        errs = np.abs(preds - observed_lmax)
        best = float(errs.min())
        # Ties resolve to the largest tau: scan from the right.
        idx = len(errs) - 1 - int(np.argmax(errs[::-1] <= best * (1 + 1e-12)))
        candidates.append((float(errs[idx]), float(taus[idx])))

    best_err = min(e for e, _ in candidates)
    tol = max(best_err * (1 + 1e-12), 1e-15 * observed_lmax)
    tau = max(t for e, t in candidates if e <= tol)
    if best_err > 0.10 * observed_lmax:
        raise EstimationFailureError(
            f"no tau in ({tau_min}, {tau_max}] brings the prediction within 10% of "
            f"the observation (best error {best_err:.3g}s)"
        )
    return tau


# ---------------------------------------------------------------------------
# Profile file I/O
# ---------------------------------------------------------------------------

def profile_to_dict(profile: ModelProfile) -> dict:
    return {
        "format_version": PROFILE_FORMAT_VERSION,
        "cpu_avg": [
            {"batch": b, "alpha": c.alpha, "beta": c.beta, "gamma": c.gamma}
            for b, c in sorted(profile.cpu_avg.items())
        ],
        "cpu_max": [
            {"batch": b, "alpha": c.alpha, "beta": c.beta, "gamma": c.gamma}
            for b, c in sorted(profile.cpu_max.items())
        ],
        "gpu": {"xi1": profile.gpu.xi1, "xi2": profile.gpu.xi2},
        "mem": {"mu0": profile.mem.mu0, "mu1": profile.mem.mu1},
        "platform": {
            "m_max": profile.platform.m_max,
            "tau": profile.platform.tau,
            "mem_step": profile.platform.mem_step,
        },
        "ranges": {
            "cpu_cores": list(profile.cpu_core_range),
            "cpu_batch": list(profile.cpu_batch_range),
            "gpu_batch": list(profile.gpu_batch_range),
            "gpu_mem_step": profile.platform.mem_step,
        },
    }


def profile_from_dict(doc: dict) -> ModelProfile:
    try:
        ranges = doc.get("ranges", {})
        platform_doc = doc.get("platform", {})
        mem_step = int(platform_doc.get("mem_step", ranges.get("gpu_mem_step", DEFAULT_MEM_STEP)))
        if "gpu_mem_step" in ranges and int(ranges["gpu_mem_step"]) != mem_step:
            raise ProfileValidationError(
                "ranges.gpu_mem_step disagrees with platform.mem_step"
            )
        platform = GpuPlatform(
            m_max=int(platform_doc.get("m_max", DEFAULT_M_MAX)),
            tau=float(platform_doc.get("tau", DEFAULT_TAU)),
            mem_step=mem_step,
        )
        cpu_avg = {
            int(row["batch"]): CpuLatencyCoeffs(float(row["alpha"]), float(row["beta"]), float(row["gamma"]))
            for row in doc.get("cpu_avg", [])
        }
        cpu_max = {
            int(row["batch"]): CpuLatencyCoeffs(float(row["alpha"]), float(row["beta"]), float(row["gamma"]))
            for row in doc.get("cpu_max", [])
        }
        gpu_doc = doc.get("gpu", {})
        gpu = GpuLatencyCoeffs(float(gpu_doc.get("xi1", 0.0)), float(gpu_doc.get("xi2", 0.0)))
        mem_doc = doc.get("mem", {})
        mem = MemoryDemandModel(float(mem_doc.get("mu0", 0.0)), float(mem_doc.get("mu1", 0.0)))
        profile = ModelProfile(
            cpu_avg=cpu_avg,
            cpu_max=cpu_max,
            gpu=gpu,
            mem=mem,
            platform=platform,
            cpu_core_range=tuple(ranges.get("cpu_cores", DEFAULT_CPU_CORE_RANGE)),
            cpu_batch_range=tuple(ranges.get("cpu_batch", DEFAULT_CPU_BATCH_RANGE)),
            gpu_batch_range=tuple(ranges.get("gpu_batch", DEFAULT_GPU_BATCH_RANGE)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ProfileValidationError(f"malformed profile document: {exc}") from exc
    return profile


def load_model_profile(path: str | Path) -> ModelProfile:
    """Load and fully validate a profile file; any violation is a hard error."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    profile = profile_from_dict(doc)
    validate_model_profile(profile)
    return profile


def save_model_profile(profile: ModelProfile, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(profile_to_dict(profile), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
