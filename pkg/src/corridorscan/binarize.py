"""Congested/uncongested split of a speed grid.

The operative threshold is chosen by Otsu's method on the histogram of
speeds normalized by free-flow speed, then run through a guard band: a cut
outside [theta1*u_free, theta2*u_free] means the day held only one traffic
regime, and the last accepted threshold is reused instead.

A two-component lognormal mixture fit is available as a bimodality
diagnostic; it never gates the pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DegenerateDataError, TooFewSamplesError
from .grid import DetectionConfig, SpeedGrid

DEFAULT_BIN_COUNT = 256


@dataclass(frozen=True)
class Histogram:
    """Probability histogram of normalized speed over [0, 1]."""

    probabilities: np.ndarray
    bin_edges: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=float)
        e = np.asarray(self.bin_edges, dtype=float)
        object.__setattr__(self, "probabilities", p)
        object.__setattr__(self, "bin_edges", e)
        if e.size != p.size + 1:
            raise ValueError("need bin_count + 1 edges")
        if np.any(p < 0):
            raise ValueError("bin probabilities must be >= 0")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("bin probabilities must sum to 1")
        if np.any(np.diff(e) <= 0) or abs(e[0]) > 1e-12 or abs(e[-1] - 1.0) > 1e-12:
            raise ValueError("edges must increase and span [0, 1]")

    @property
    def bin_count(self) -> int:
        return self.probabilities.size


@dataclass(frozen=True)
class OtsuResult:
    """Chosen cut and its class statistics.

    cut_index is 1-based: the low class is bins 1..cut_index.  Class means
    and variances are in normalized-speed units.
    """

    cut_index: int
    threshold_normalized: float
    threshold_mph: float
    within_class_variance: float
    class_probs: tuple[float, float]
    class_means: tuple[float, float]
    class_variances: tuple[float, float]


@dataclass(frozen=True)
class ThresholdState:
    """Carries the operative threshold u_star and the last accepted u_pre across days."""

    u_star: float
    u_pre: float
    guard_triggered: bool = False

    @classmethod
    def seeded(cls, config: DetectionConfig) -> "ThresholdState":
        seed = config.seed_threshold_mph
        return cls(u_star=seed, u_pre=seed, guard_triggered=False)


def speed_histogram(grid: SpeedGrid, u_free: float, bin_count: int = DEFAULT_BIN_COUNT) -> Histogram:
    """Histogram of observed (non-missing) speeds normalized by u_free.

    Values above u_free clamp to 1.
    """
    samples = grid.values[~grid.missing_mask]
    if samples.size == 0:
        raise DegenerateDataError("no observed speed samples")
    normalized = np.minimum(samples / u_free, 1.0)
    edges = np.linspace(0.0, 1.0, bin_count + 1)
    counts, _ = np.histogram(normalized, bins=edges)
    return Histogram(counts / counts.sum(), edges)


def otsu_cut(probabilities: np.ndarray) -> tuple[int, np.ndarray]:
    """Minimize the weighted within-class variance over all histogram cuts.

    Returns the 1-based cut index t (low class = bins 1..t) and the per-cut
    within-class variance curve in bin-index units (inf where a class is
    empty).  Ties resolve to the lowest cut.
    """
    p = np.asarray(probabilities, dtype=float)
    l = p.size
    idx = np.arange(1, l + 1, dtype=float)
    c0 = np.cumsum(p)
    c1 = np.cumsum(p * idx)
    c2 = np.cumsum(p * idx * idx)
    q1 = c0[:-1]
    q2 = c0[-1] - q1
    valid = (q1 > 0) & (q2 > 0)
    within = np.full(l - 1, np.inf)
    if valid.any():
        with np.errstate(divide="ignore", invalid="ignore"):
            mu1 = c1[:-1] / q1
            mu2 = (c1[-1] - c1[:-1]) / q2
            var1 = c2[:-1] / q1 - mu1 * mu1
            var2 = (c2[-1] - c2[:-1]) / q2 - mu2 * mu2
        # cumulative-moment differencing can go a hair below zero on
        # single-valued classes; clip so the curve stays a variance
        var1 = np.maximum(var1, 0.0)
        var2 = np.maximum(var2, 0.0)
        w = q1 * var1 + q2 * var2
        within[valid] = w[valid]
    if not valid.any():
        raise DegenerateDataError("all samples fall into a single histogram bin")
    t = int(np.argmin(within)) + 1
    return t, within


def otsu_from_histogram(hist: Histogram, u_free: float) -> OtsuResult:
    t, within = otsu_cut(hist.probabilities)
    p = hist.probabilities
    l = hist.bin_count
    idx = np.arange(1, l + 1, dtype=float)
    q1 = p[:t].sum()
    q2 = p[t:].sum()
    mu1 = float((idx[:t] * p[:t]).sum() / q1)
    mu2 = float((idx[t:] * p[t:]).sum() / q2)
    var1 = float(((idx[:t] - mu1) ** 2 * p[:t]).sum() / q1)
    var2 = float(((idx[t:] - mu2) ** 2 * p[t:]).sum() / q2)
    threshold_normalized = float(hist.bin_edges[t])

    def norm_mean(m: float) -> float:
        return (m - 0.5) / l

    return OtsuResult(
        cut_index=t,
        threshold_normalized=threshold_normalized,
        threshold_mph=threshold_normalized * u_free,
        within_class_variance=float(within[t - 1]) / (l * l),
        class_probs=(float(q1), float(q2)),
        class_means=(norm_mean(mu1), norm_mean(mu2)),
        class_variances=(var1 / (l * l), var2 / (l * l)),
    )


def otsu_threshold(grid: SpeedGrid, u_free: float, bin_count: int = DEFAULT_BIN_COUNT) -> OtsuResult:
    """Otsu threshold of a day's observed speeds; raises DegenerateDataError
    when the data occupy a single bin (single traffic regime)."""
    if bin_count < 2:
        raise ValueError("bin_count must be >= 2")
    return otsu_from_histogram(speed_histogram(grid, u_free, bin_count), u_free)


def guard_threshold(
    result: Optional[OtsuResult], state: ThresholdState, config: DetectionConfig
) -> ThresholdState:
    """Accept the day's cut only inside the theta band; otherwise reuse u_pre.

    Pass result=None when Otsu was degenerate.  The band is closed on both
    ends.
    """
    lo = config.theta1 * config.u_free
    hi = config.theta2 * config.u_free
    if result is not None and lo <= result.threshold_mph <= hi:
        return ThresholdState(u_star=result.threshold_mph, u_pre=result.threshold_mph, guard_triggered=False)
    return ThresholdState(u_star=state.u_pre, u_pre=state.u_pre, guard_triggered=True)


def binarize_speed(grid: SpeedGrid, u_star: float) -> np.ndarray:
    """0/1 grid, 1 = congested (speed strictly below u_star)."""
    if u_star < 0:
        raise ValueError("u_star must be >= 0")
    return (grid.values < u_star).astype(np.uint8)


@dataclass(frozen=True)
class MixtureFit:
    """Two-component lognormal mixture of speeds (normal mixture on log-speed)."""

    weight: float
    mu1: float
    mu2: float
    sigma1: float
    sigma2: float
    log_likelihood: float
    converged: bool
    iterations: int


_SIGMA_FLOOR = 1e-6


def _mixture_log_likelihood(x, w, mu1, s1, mu2, s2):
    comp1 = w * np.exp(-0.5 * ((x - mu1) / s1) ** 2) / (np.sqrt(2 * np.pi) * s1)
    comp2 = (1 - w) * np.exp(-0.5 * ((x - mu2) / s2) ** 2) / (np.sqrt(2 * np.pi) * s2)
    return float(np.log(np.maximum(comp1 + comp2, 1e-300)).sum())


def fit_speed_mixture(
    grid: SpeedGrid, max_iterations: int = 200, tolerance: float = 1e-8
) -> MixtureFit:
    """EM fit of a two-component normal mixture on log-speeds.

    Deterministic median-split initialization; components are ordered so
    mu1 <= mu2.  Non-convergence returns the best-so-far fit with
    converged=False rather than raising.
    """
    samples = grid.values[~grid.missing_mask]
    samples = samples[samples > 0]
    if samples.size < 10:
        raise TooFewSamplesError(f"need >= 10 positive samples, have {samples.size}")
    x = np.log(samples.astype(float))

    median = np.median(x)
    low = x[x <= median]
    high = x[x > median]
    if high.size == 0:  # all samples equal
        low, high = x, x
    mu1, mu2 = float(low.mean()), float(high.mean())
    s1 = max(float(low.std()), _SIGMA_FLOOR)
    s2 = max(float(high.std()), _SIGMA_FLOOR)
    w = 0.5

    ll = _mixture_log_likelihood(x, w, mu1, s1, mu2, s2)
    converged = False
    iterations = 0
    for iterations in range(1, max_iterations + 1):
        # E step
        p1 = w * np.exp(-0.5 * ((x - mu1) / s1) ** 2) / (np.sqrt(2 * np.pi) * s1)
        p2 = (1 - w) * np.exp(-0.5 * ((x - mu2) / s2) ** 2) / (np.sqrt(2 * np.pi) * s2)
        total = np.maximum(p1 + p2, 1e-300)
        r1 = p1 / total
        # M step
        n1 = r1.sum()
        n2 = x.size - n1
        if n1 <= 0 or n2 <= 0:
            break
        mu1 = float((r1 * x).sum() / n1)
        mu2 = float(((1 - r1) * x).sum() / n2)
        s1 = max(float(np.sqrt((r1 * (x - mu1) ** 2).sum() / n1)), _SIGMA_FLOOR)
        s2 = max(float(np.sqrt(((1 - r1) * (x - mu2) ** 2).sum() / n2)), _SIGMA_FLOOR)
        w = float(np.clip(n1 / x.size, 1e-9, 1 - 1e-9))
        new_ll = _mixture_log_likelihood(x, w, mu1, s1, mu2, s2)
        if abs(new_ll - ll) < tolerance:
            ll = new_ll
            converged = True
            break
        ll = new_ll

    if mu1 > mu2:
        mu1, mu2 = mu2, mu1
        s1, s2 = s2, s1
        w = 1 - w
    return MixtureFit(
        weight=w,
        mu1=mu1,
        mu2=mu2,
        sigma1=s1,
        sigma2=s2,
        log_likelihood=ll,
        converged=converged,
        iterations=iterations,
    )
