"""
benchmark.py

Reference model for the composite regression: a gamma mean network with a
constant shape, whose triplets follow in closed form from the fitted means.
"""

import logging

import numpy as np

from scoring.exceptions import DomainError
from scoring.functionals import gamma_triplets
from scoring.identification import calibration_report
from scoring.scores import bregman_loss

logger = logging.getLogger(__name__)


def deviance_dispersion(y, mu, n_params):
    """
    Deviance estimate of the gamma dispersion 1 / gamma,

        sum of unit gamma deviances / (n - n_params).

    Raises:
        DomainError: if there are not more observations than parameters.
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    mu = np.asarray(mu, dtype=float).reshape(-1)
    if y.shape != mu.shape:
        raise DomainError(f"{mu.size} fitted means but {y.size} responses")
    dof = y.size - int(n_params)
    if dof < 1:
        raise DomainError(f"{y.size} observations do not exceed {n_params} parameters")
    return float(np.sum(bregman_loss(y, mu, 0.0)) / dof)


def gamma_benchmark(mean_model, learn, test, tau):
    """
    Composite triplets of the fitted gamma model on the test data.

    The shape is estimated once on the learn data from the deviance
    dispersion of `mean_model`.

    Parameters:
        mean_model (FittedModel): Mean network fitted under gamma deviance.
        learn (Dataset): Data the dispersion is estimated on.
        test (Dataset): Data the triplets and calibration are computed on.
        tau (float): Probability level.

    Returns:
        dict: dispersion, gamma_shape, triplets (TripletBatch) and
            calibration (CalibrationReport).
    """
    dispersion = deviance_dispersion(
        learn.responses, mean_model.predict_mean(learn.features), mean_model.config.parameter_count
    )
    if not dispersion > 0:
        raise DomainError("fitted gamma model has zero deviance")
    shape = 1.0 / dispersion
    triplets = gamma_triplets(mean_model.predict_mean(test.features), shape, tau)
    logger.info("gamma benchmark: dispersion %.6g, shape %.6g", dispersion, shape)
    return {
        "dispersion": dispersion,
        "gamma_shape": shape,
        "triplets": triplets,
        "calibration": calibration_report(triplets, test.responses, tau),
    }
