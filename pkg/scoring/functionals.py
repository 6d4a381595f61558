"""
functionals.py

Empirical and closed-form values of the functionals estimated by the scores:
the tau-quantile set, lower and upper expected shortfall, and the composite
triplet of the gamma distribution. The grid-search minimisers in this module
are brute-force oracles for the consistency of the scores in `scores.py`.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .domain import CompositeTriplet, TripletBatch, check_probability
from .exceptions import DomainError
from .scores import composite_score_arrays, s_pair


@dataclass(frozen=True)
class QuantileSet:
    """Closed interval [lower, upper] of tau-quantiles of a distribution."""

    lower: float
    upper: float


@dataclass(frozen=True)
class GammaParams:
    """
    Gamma distribution parametrised by mean and shape.

    Attributes:
        mu (float): Mean, > 0.
        gamma_shape (float): Shape gamma, > 0; the scale is mu / gamma_shape.
    """

    mu: float
    gamma_shape: float

    def __post_init__(self):
        if not (math.isfinite(self.mu) and self.mu > 0):
            raise DomainError(f"gamma mean must be positive, got {self.mu!r}")
        if not (math.isfinite(self.gamma_shape) and self.gamma_shape > 0):
            raise DomainError(f"gamma shape must be positive, got {self.gamma_shape!r}")

    @property
    def scale(self):
        return self.mu / self.gamma_shape


@dataclass(frozen=True)
class GridSpec:
    """Equally spaced grid start, start + step, ..., up to stop (inclusive within rounding)."""

    start: float
    stop: float
    step: float

    def __post_init__(self):
        if not (self.step > 0 and self.stop >= self.start):
            raise DomainError(f"invalid grid {self}")

    def points(self):
        count = int(math.floor((self.stop - self.start) / self.step + 1e-9)) + 1
        return self.start + self.step * np.arange(count)

    def covers(self, low, high):
        points = self.points()
        return points[0] <= low + 1e-12 and points[-1] >= high - 1e-9


def _sorted_sample(sample):
    x = np.sort(np.asarray(sample, dtype=float).reshape(-1))
    if x.size == 0:
        raise DomainError("sample must not be empty")
    if not np.all(np.isfinite(x)):
        raise DomainError("sample must be finite")
    return x


def empirical_quantile_set(sample, tau):
    """
    Set of t with F_n(t-) <= tau <= F_n(t) for the empirical distribution.

    The lower endpoint is the left-continuous generalised inverse
    inf{t : F_n(t) >= tau}. When n * tau is an integer k the set is the
    interval [x_(k), x_(k+1)], otherwise the single order statistic
    x_(ceil(n tau)).

    Parameters:
        sample (array-like): Nonempty sample.
        tau (float): Probability level in (0, 1).

    Returns:
        QuantileSet
    """
    tau = check_probability(tau)
    x = _sorted_sample(sample)
    n = x.size
    position = n * tau
    k = int(round(position))
    if 1 <= k < n and math.isclose(position, k, rel_tol=1e-12):
        return QuantileSet(float(x[k - 1]), float(x[k]))
    j = min(max(int(math.ceil(position)), 1), n)
    return QuantileSet(float(x[j - 1]), float(x[j - 1]))


def _lower_weights(n, tau):
    """Lebesgue measure of ((i-1)/n, i/n] intersected with (0, tau], for i = 1..n."""
    return np.clip(n * tau - np.arange(n), 0.0, 1.0) / n


def empirical_es(sample, tau):
    """
    Lower and upper expected shortfall of the empirical distribution.

    ES-(tau) = (1/tau) int_0^tau F_n^{-1}(u) du and
    ES+(tau) = (1/(1-tau)) int_tau^1 F_n^{-1}(u) du, integrated exactly over the
    step function F_n^{-1}; the order statistic straddling n * tau gets a
    fractional weight.

    Returns:
        tuple: (ES-, ES+), with tau ES- + (1 - tau) ES+ equal to the sample mean.
    """
    tau = check_probability(tau)
    x = _sorted_sample(sample)
    n = x.size
    lower_w = _lower_weights(n, tau)
    upper_w = 1.0 / n - lower_w
    return float(lower_w @ x / tau), float(upper_w @ x / (1 - tau))


def es_via_minimization(sample, tau, grid: GridSpec):
    """
    Lower and upper ES as minimal expected relaxed quantile scores.

    ES- = -(1/tau) min_v mean S-(Y_i; v) and ES+ = (1/(1-tau)) min_v mean S+(Y_i; v),
    minimised over the grid points. Serves as an independent check of
    `empirical_es`.

    Raises:
        DomainError: if the grid does not cover [min(sample), max(sample)].
    """
    tau = check_probability(tau)
    x = _sorted_sample(sample)
    if not grid.covers(x[0], x[-1]):
        raise DomainError(f"grid {grid} does not cover the sample range [{x[0]}, {x[-1]}]")
    points = grid.points()
    s_minus, s_plus = s_pair(x[None, :], points[:, None], tau)
    return (
        float(-s_minus.mean(axis=1).min() / tau),
        float(s_plus.mean(axis=1).min() / (1 - tau)),
    )


def gamma_triplets(mu, gamma_shape, tau):
    """
    Composite triplets of gamma distributions with means `mu` and a common shape.

    v solves Gamma_{gamma, mu}(v) = tau, and with the shape-(gamma + 1)
    distribution function of the same scale mu / gamma,
        e- = mu Gamma_{gamma+1}(v) / tau,  e+ = mu (1 - Gamma_{gamma+1}(v)) / (1 - tau).

    Parameters:
        mu (array-like): Positive means.
        gamma_shape (float): Positive shape.
        tau (float): Probability level.

    Returns:
        TripletBatch
    """
    tau = check_probability(tau)
    mu = np.asarray(mu, dtype=float).reshape(-1)
    if not (np.all(np.isfinite(mu)) and np.all(mu > 0)):
        raise DomainError("gamma means must be positive")
    if not (math.isfinite(gamma_shape) and gamma_shape > 0):
        raise DomainError(f"gamma shape must be positive, got {gamma_shape!r}")
    standardised = special.gammaincinv(gamma_shape, tau)
    below = special.gammainc(gamma_shape + 1.0, standardised)
    above = special.gammaincc(gamma_shape + 1.0, standardised)
    v = mu / gamma_shape * standardised
    return TripletBatch(mu * below / tau, v, mu * above / (1 - tau))


def gamma_triplet(p: GammaParams, tau):
    """Composite triplet of a single gamma distribution, see `gamma_triplets`."""
    return gamma_triplets([p.mu], p.gamma_shape, tau)[0]


def composite_grid_argmin(sample, spec, grid: GridSpec):
    """
    Brute-force minimiser of the mean composite score over ordered grid triplets.

    For every grid value of v the mean score is evaluated on all grid pairs
    e- <= v <= e+.

    Returns:
        CompositeTriplet: the grid triplet with the smallest mean score.
    """
    x = _sorted_sample(sample)
    points = grid.points()
    best_value, best = np.inf, None
    for i, v in enumerate(points):
        e_minus = points[: i + 1][:, None, None]
        e_plus = points[i:][None, :, None]
        losses = composite_score_arrays(x[None, None, :], e_minus, v, e_plus, spec)
        mean_loss = losses.mean(axis=2)
        j, k = np.unravel_index(np.argmin(mean_loss), mean_loss.shape)
        if mean_loss[j, k] < best_value:
            best_value = mean_loss[j, k]
            best = (float(points[j]), float(v), float(points[i + k]))
    return CompositeTriplet(*best)
