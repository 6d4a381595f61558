"""
simulate.py

Synthetic claim-size generators with closed-form composite triplets as
ground truth. Features are independent Uniform(0, 1) draws behind the
constant column.
"""

import logging

import numpy as np
from scipy import special, stats

from scoring.domain import TripletBatch, check_probability
from scoring.exceptions import DomainError
from scoring.functionals import gamma_triplets

from .datasets import INTERCEPT, Dataset, FeatureKind, FeatureMeta

logger = logging.getLogger(__name__)


def _coefficients(name, values):
    coeff = np.asarray(values, dtype=float).reshape(-1)
    if coeff.size == 0:
        raise DomainError(f"{name} needs at least the intercept coefficient")
    if not np.all(np.isfinite(coeff)):
        raise DomainError(f"{name} must be finite")
    return coeff


def _design(rng, n, width):
    if int(n) != n or n < 1:
        raise DomainError(f"n must be a positive integer, got {n!r}")
    features = np.column_stack([np.ones(n), rng.uniform(size=(n, width - 1))])
    meta = [INTERCEPT] + [
        FeatureMeta(f"x{j}", FeatureKind.CONTINUOUS, minimum=0.0, maximum=1.0) for j in range(1, width)
    ]
    return features, tuple(meta)


def softplus(x):
    return np.logaddexp(0.0, x)


def simulate_gamma(n, seed, coeff_mu, gamma_shape, tau):
    """
    Gamma claims with log-linear mean.

    mu(x) = exp(<coeff_mu, x>) and Y | x ~ Gamma(shape gamma, scale mu(x) / gamma).

    Parameters:
        n (int): Number of rows.
        seed (int): Seed of the numpy Generator.
        coeff_mu (array-like): Intercept followed by one coefficient per feature.
        gamma_shape (float): Common shape gamma > 0.
        tau (float): Level of the truth triplets.

    Returns:
        Dataset: with truth = gamma_triplets(mu(x), gamma, tau).
    """
    tau = check_probability(tau)
    coeff = _coefficients("coeff_mu", coeff_mu)
    if not (np.isfinite(gamma_shape) and gamma_shape > 0):
        raise DomainError(f"gamma_shape must be positive, got {gamma_shape!r}")
    rng = np.random.default_rng(seed)
    features, meta = _design(rng, n, coeff.size)
    mu = np.exp(features @ coeff)
    responses = rng.gamma(gamma_shape, mu / gamma_shape)
    logger.info("simulated %d gamma claims (shape %s, mean %.4g)", n, gamma_shape, responses.mean())
    return Dataset(responses, features, meta, truth=gamma_triplets(mu, gamma_shape, tau))


def lognormal_triplets(m, s, tau):
    """
    Composite triplets of lognormal distributions, log Y ~ N(m, s^2).

        v = exp(m + s z),  e+ = exp(m + s^2 / 2) N(s - z) / (1 - tau),
        e- = exp(m + s^2 / 2) N(z - s) / tau,  with z the standard normal tau-quantile.
    """
    tau = check_probability(tau)
    m = np.asarray(m, dtype=float).reshape(-1)
    s = np.broadcast_to(np.asarray(s, dtype=float), m.shape)
    if not np.all(s > 0):
        raise DomainError("lognormal scale must be positive")
    z = special.ndtri(tau)
    mean = np.exp(m + 0.5 * s**2)
    return TripletBatch(
        mean * stats.norm.cdf(z - s) / tau,
        np.exp(m + s * z),
        mean * stats.norm.cdf(s - z) / (1 - tau),
    )


def simulate_lognormal(n, seed, coeff_m, coeff_s, tau):
    """
    Heteroskedastic lognormal claims: log Y ~ N(<coeff_m, x>, softplus(<coeff_s, x>)^2).

    Returns:
        Dataset: with truth = lognormal_triplets(m(x), s(x), tau).
    """
    tau = check_probability(tau)
    coeff_m = _coefficients("coeff_m", coeff_m)
    coeff_s = _coefficients("coeff_s", coeff_s)
    if coeff_m.size != coeff_s.size:
        raise DomainError("coeff_m and coeff_s must have the same length")
    rng = np.random.default_rng(seed)
    features, meta = _design(rng, n, coeff_m.size)
    m = features @ coeff_m
    s = softplus(features @ coeff_s)
    responses = np.exp(m + s * rng.standard_normal(n))
    logger.info("simulated %d lognormal claims (mean %.4g)", n, responses.mean())
    return Dataset(responses, features, meta, truth=lognormal_triplets(m, s, tau))
