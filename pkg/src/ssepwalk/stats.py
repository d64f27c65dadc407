"""Statistical utilities used by the harness and its tests.

Only what the experiments need: normal-approximation confidence intervals,
a one-sample Kolmogorov-Smirnov normality test, Wilson intervals for
exceedance probabilities, and two concentration bounds used as callable
oracles by the Monte-Carlo property tests.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class TooFewSamples(ValueError):
    pass


class DegenerateWeights(ValueError):
    pass


# Standard-normal quantiles Phi^{-1}(0.975) and Phi^{-1}(0.995).
Z_95 = 1.959963984540054
Z_99 = 2.5758293035489004
_Z = {0.95: Z_95, 0.99: Z_99}


@dataclass(frozen=True)
class SampleSummary:
    n: int
    mean: float
    variance: float
    min: float
    max: float

    @classmethod
    def from_samples(cls, samples) -> "SampleSummary":
        xs = np.asarray(samples, dtype=np.float64)
        if xs.size < 1:
            raise TooFewSamples("need at least one sample")
        variance = float(xs.var(ddof=1)) if xs.size > 1 else 0.0
        return cls(
            n=int(xs.size),
            mean=float(xs.mean()),
            variance=max(variance, 0.0),
            min=float(xs.min()),
            max=float(xs.max()),
        )


def mean_ci(samples, level: float = 0.99) -> tuple[float, float]:
    """Sample mean and normal-approximation CI half-width z * s / sqrt(n)."""
    if level not in _Z:
        raise ValueError(f"level must be one of {sorted(_Z)}, got {level}")
    xs = np.asarray(samples, dtype=np.float64)
    if xs.size < 2:
        raise TooFewSamples("confidence interval needs n >= 2")
    s = float(xs.std(ddof=1))
    return float(xs.mean()), _Z[level] * s / math.sqrt(xs.size)


def wilson_ci(successes: int, trials: int, level: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        raise TooFewSamples("wilson_ci needs trials >= 1")
    z = _Z[level]
    p = successes / trials
    denom = 1.0 + z * z / trials
    centre = (p + z * z / (2 * trials)) / denom
    half = (z / denom) * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials))
    return max(0.0, centre - half), min(1.0, centre + half)


def _standard_normal_cdf(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def _kolmogorov_sf(x: float) -> float:
    """Survival function of the Kolmogorov distribution, Q(x) = 2 sum (-1)^{k-1} e^{-2k^2x^2}."""
    if x <= 0.05:
        return 1.0
    total = 0.0
    for k in range(1, 101):
        term = 2.0 * (-1.0) ** (k - 1) * math.exp(-2.0 * k * k * x * x)
        total += term
        if abs(term) < 1e-16:
            break
    return min(1.0, max(0.0, total))


def ks_normal(samples) -> tuple[float, float]:
    """One-sample KS test against the standard normal.

    Returns (D, p) with the p-value from the asymptotic Kolmogorov
    distribution of sqrt(n) D.
    """
    xs = np.sort(np.asarray(samples, dtype=np.float64))
    n = xs.size
    if n < 20:
        raise TooFewSamples("KS test needs n >= 20")
    cdf = np.array([_standard_normal_cdf(float(x)) for x in xs])
    i = np.arange(1, n + 1)
    d_plus = float(np.max(i / n - cdf))
    d_minus = float(np.max(cdf - (i - 1) / n))
    d = max(d_plus, d_minus)
    return d, _kolmogorov_sf(math.sqrt(n) * d)


def hoeffding_bound(weights, threshold: float) -> float:
    """Tail bound 2 exp(-t^2 / (2 sum b_j^2)) for |sum b_j Z_j| with |Z|<=1, EZ=0."""
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    bs = np.asarray(weights, dtype=np.float64)
    ssq = float(np.sum(bs * bs))
    if ssq == 0.0:
        raise DegenerateWeights("all weights are zero")
    return 2.0 * math.exp(-threshold * threshold / (2.0 * ssq))


def gaussian_tail_bound(delta: float, sigma_sq: float) -> float:
    """Bound sqrt(2 pi sigma^2) exp(-delta^2 / (2 sigma^2)) on the integral
    of exp(-x^2 / (2 sigma^2)) over [delta, infinity)."""
    if delta <= 0 or sigma_sq <= 0:
        raise ValueError("delta and sigma_sq must be positive")
    return math.sqrt(2.0 * math.pi * sigma_sq) * math.exp(
        -delta * delta / (2.0 * sigma_sq)
    )
