"""HSIC independence tests and Fisher's combination of p-values."""

import logging
import math
from typing import NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.distance import pdist
from scipy.stats import chi2, gamma

from . import MIN_HSIC_SAMPLES, P_VALUE_FLOOR
from .models import HsicResult

_LOG = logging.getLogger(__name__)


class HsicOptions(NamedTuple):
    """
    How HSIC p-values are computed.

    :param permutations: shuffle count for the permutation null, or None for the
        gamma approximation
    :param subsample_cap: subsample to this many points when n exceeds it, or
        None to always use every sample
    :param seed: seed for shuffles and subsampling
    """

    permutations: Optional[int] = None
    subsample_cap: Optional[int] = None
    seed: int = 0

    def validate(self):
        """
        Check the settings.

        :raises ValueError: if the shuffle count is not positive or the cap is
            below the HSIC minimum sample size
        """
        if self.permutations is not None and self.permutations < 1:
            raise ValueError(
                f"the shuffle count must be positive, got {self.permutations}"
            )
        if self.subsample_cap is not None and self.subsample_cap < MIN_HSIC_SAMPLES:
            raise ValueError(
                f"subsample cap below minimum {MIN_HSIC_SAMPLES}: {self.subsample_cap}"
            )


def median_bandwidth(x: np.ndarray) -> float:
    """
    Get the median pairwise distance between samples.

    Falls back to the median of the non-zero distances when ties make the
    median zero. Returns 0 for a constant vector.
    """
    distances = pdist(np.asarray(x, dtype=float).reshape(-1, 1))
    width = float(np.median(distances))
    if width > 0.0:
        return width
    positive = distances[distances > 0.0]
    if positive.size == 0:
        return 0.0
    return float(np.median(positive))


def _centered_gram(x: np.ndarray, width: float) -> Tuple[np.ndarray, np.ndarray]:
    diff = x[:, None] - x[None, :]
    gram = np.exp(-(diff**2) / (2.0 * width**2))
    centered = (
        gram
        - gram.mean(axis=0, keepdims=True)
        - gram.mean(axis=1, keepdims=True)
        + gram.mean()
    )
    return gram, centered


def _prepare(u, v, options: HsicOptions):
    u = np.asarray(u, dtype=float).ravel()
    v = np.asarray(v, dtype=float).ravel()
    if u.shape != v.shape:
        raise ValueError(f"vectors differ in length: {u.size} and {v.size}")
    if u.size < MIN_HSIC_SAMPLES:
        raise ValueError(
            f"HSIC needs at least {MIN_HSIC_SAMPLES} samples, got {u.size}"
        )
    options.validate()
    cap = options.subsample_cap
    if cap is not None and u.size > cap:
        rng = np.random.default_rng(options.seed)
        keep = np.sort(rng.choice(u.size, size=cap, replace=False))
        u, v = u[keep], v[keep]
    return u, v


def _degenerate(width_u: float, width_v: float, method: str) -> HsicResult:
    _LOG.debug("degenerate HSIC input, widths %g and %g", width_u, width_v)
    return HsicResult(
        statistic=0.0,
        p_value=1.0,
        bandwidth_u=width_u,
        bandwidth_v=width_v,
        degenerate=True,
        method=method,
    )


def hsic_gamma_test(u, v, options: HsicOptions = HsicOptions()) -> HsicResult:
    """
    Test independence of u and v using the gamma approximation of the null.

    The statistic is ``trace(K H L H) / n``, i.e. n times the biased HSIC
    estimate, with Gaussian kernels whose widths are the median pairwise
    distances. A constant input is reported as independent with p-value 1.
    """
    u, v = _prepare(u, v, options)
    n = u.size
    width_u = median_bandwidth(u)
    width_v = median_bandwidth(v)
    if width_u == 0.0 or width_v == 0.0:
        return _degenerate(width_u, width_v, "gamma")

    gram_u, centered_u = _centered_gram(u, width_u)
    gram_v, centered_v = _centered_gram(v, width_v)
    statistic = float(np.sum(centered_u * centered_v) / n)

    variance = (centered_u * centered_v / 6.0) ** 2
    variance = (np.sum(variance) - np.trace(variance)) / n / (n - 1)
    variance *= 72.0 * (n - 4) * (n - 5) / n / (n - 1) / (n - 2) / (n - 3)

    mu_u = (np.sum(gram_u) - np.trace(gram_u)) / n / (n - 1)
    mu_v = (np.sum(gram_v) - np.trace(gram_v)) / n / (n - 1)
    mean = (1.0 + mu_u * mu_v - mu_u - mu_v) / n

    if not (variance > 0.0 and mean > 0.0):
        return _degenerate(width_u, width_v, "gamma")

    shape = mean**2 / variance
    scale = variance * n / mean
    p_value = float(gamma.sf(statistic, shape, scale=scale))
    return HsicResult(
        statistic=max(statistic, 0.0),
        p_value=min(max(p_value, 0.0), 1.0),
        bandwidth_u=width_u,
        bandwidth_v=width_v,
    )


def hsic_permutation_test(
    u, v, permutations: int, options: HsicOptions = HsicOptions()
) -> HsicResult:
    """
    Test independence of u and v against a permutation null.

    The p-value is ``(1 + #{shuffled >= observed}) / (1 + permutations)``.
    """
    if permutations < 1:
        raise ValueError(f"permutations must be positive, got {permutations}")
    u, v = _prepare(u, v, options)
    n = u.size
    width_u = median_bandwidth(u)
    width_v = median_bandwidth(v)
    if width_u == 0.0 or width_v == 0.0:
        return _degenerate(width_u, width_v, "permutation")

    _, centered_u = _centered_gram(u, width_u)
    _, centered_v = _centered_gram(v, width_v)
    statistic = float(np.sum(centered_u * centered_v) / n)

    rng = np.random.default_rng(options.seed)
    exceed = 0
    for _ in range(permutations):
        order = rng.permutation(n)
        shuffled = centered_v[np.ix_(order, order)]
        if np.sum(centered_u * shuffled) / n >= statistic:
            exceed += 1
    return HsicResult(
        statistic=max(statistic, 0.0),
        p_value=(1 + exceed) / (1 + permutations),
        bandwidth_u=width_u,
        bandwidth_v=width_v,
        method="permutation",
    )


def hsic_test(u, v, options: HsicOptions = HsicOptions()) -> HsicResult:
    """Test independence of u and v with the null selected by options."""
    if options.permutations:
        return hsic_permutation_test(u, v, options.permutations, options)
    return hsic_gamma_test(u, v, options)


def fisher_combine(
    p_values: Sequence[float], floor: float = P_VALUE_FLOOR
) -> Tuple[float, float]:
    """
    Combine p-values with Fisher's method.

    Each p-value is clamped to ``floor`` before taking logs so the statistic
    stays finite. The tests combined by the ordering algorithm share data, so
    the chi-square reference is an approximation there.

    :returns (statistic, combined p-value) with 2k degrees of freedom
    """
    if len(p_values) == 0:
        raise ValueError("at least one p-value is required")
    for value in p_values:
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"p-value out of range: {value}")
    statistic = -2.0 * math.fsum(math.log(max(value, floor)) for value in p_values)
    statistic = max(statistic, 0.0)
    combined = float(chi2.sf(statistic, 2 * len(p_values)))
    return statistic, combined


def bonferroni_threshold(alpha: float, p: int) -> float:
    """Divide the significance level by the largest number of tests, p - 1."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if p < 2:
        raise ValueError(f"at least 2 variables are required, got {p}")
    return alpha / (p - 1)
