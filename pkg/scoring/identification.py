"""
identification.py

Identification (moment) functions of the composite triplet and the empirical
out-of-sample calibration statistics built from them: the coverage ratio of
the quantile and the lower/upper ES identifications.
"""

from dataclasses import dataclass

import numpy as np

from .domain import CompositeTriplet, as_triplet_batch, check_probability
from .exceptions import DomainError
from .scores import s_pair


@dataclass(frozen=True)
class CalibrationReport:
    """
    Out-of-sample calibration of composite triplet predictions.

    Attributes:
        coverage (float): Share of observations at or below the predicted quantile.
        v_minus (float): Mean lower-ES identification, in claim units.
        v_plus (float): Mean upper-ES identification, in claim units.
        n (int): Number of observations.
        tau (float): Probability level of the predictions.
        v_minus_se (float): Monte Carlo standard error of v_minus.
        v_plus_se (float): Monte Carlo standard error of v_plus.
        mean_prediction (float): Mean of tau e- + (1 - tau) e+.
        mean_observation (float): Mean observation.
    """

    coverage: float
    v_minus: float
    v_plus: float
    n: int
    tau: float
    v_minus_se: float = 0.0
    v_plus_se: float = 0.0
    mean_prediction: float = 0.0
    mean_observation: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.coverage <= 1.0:
            raise DomainError(f"coverage must lie in [0, 1], got {self.coverage}")
        if self.n < 1:
            raise DomainError("calibration needs at least one observation")


def identification_values(y, e_minus, v, e_plus, tau):
    """
    Vectorised identification function V(y; e-, v, e+).

    Returns:
        np.ndarray: shape (n, 3) with columns
            e- + S-(y; v) / tau,  1{y <= v} - tau,  e+ - S+(y; v) / (1 - tau).
    """
    tau = check_probability(tau)
    y = np.asarray(y, dtype=float)
    v = np.asarray(v, dtype=float)
    s_minus, s_plus = s_pair(y, v, tau)
    return np.column_stack(
        np.broadcast_arrays(
            np.asarray(e_minus) + s_minus / tau,
            (y <= v).astype(float) - tau,
            np.asarray(e_plus) - s_plus / (1 - tau),
        )
    )


def identification_V(y, t: CompositeTriplet, tau):
    """
    Strict identification function of (ES-, q_tau, ES+) at one observation.

    Parameters:
        y (float): Observation.
        t (CompositeTriplet): Prediction.
        tau (float): Probability level.

    Returns:
        tuple: the three components of V.
    """
    row = identification_values(np.array([y]), t.e_minus, t.v, t.e_plus, tau)[0]
    return tuple(float(x) for x in row)


def transformed_identification_V(y, t: CompositeTriplet, tau):
    """
    Full-rank linear transform of V whose first component identifies the mean:
    (tau e- + (1 - tau) e+ - y, 1{y <= v} - tau, e+ - S+(y; v) / (1 - tau)).
    """
    tau = check_probability(tau)
    transform = np.array([[tau, 0.0, 1 - tau], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    return tuple(float(x) for x in transform @ np.array(identification_V(y, t, tau)))


def _check_lengths(predictions, observations):
    batch = as_triplet_batch(predictions)
    y = np.asarray(observations, dtype=float).reshape(-1)
    if len(batch) != len(y):
        raise DomainError(
            f"{len(batch)} predictions but {len(y)} observations"
        )
    if len(y) == 0:
        raise DomainError("calibration needs at least one observation")
    return batch, y


def expanded_identifications(predictions, observations, tau):
    """
    v_minus and v_plus written out as empirical averages:

        v- = mean[ e- - y 1{y <= v} / tau + v (1{y <= v} - tau) / tau ]
        v+ = mean[ e+ - y 1{y > v} / (1 - tau) - v (1 - tau - 1{y > v}) / (1 - tau) ]
    """
    tau = check_probability(tau)
    batch, y = _check_lengths(predictions, observations)
    below = (y <= batch.v).astype(float)
    above = 1.0 - below
    v_minus = np.mean(batch.e_minus - y * below / tau + batch.v / tau * (below - tau))
    v_plus = np.mean(
        batch.e_plus - y * above / (1 - tau) - batch.v / (1 - tau) * (1 - tau - above)
    )
    return float(v_minus), float(v_plus)


def calibration_report(predictions, observations, tau):
    """
    Coverage ratio and mean lower/upper ES identifications of predictions.

    Parameters:
        predictions (TripletBatch | list[CompositeTriplet]): Predicted triplets.
        observations (array-like): Observed responses, same length.
        tau (float): Probability level.

    Returns:
        CalibrationReport

    Raises:
        DomainError: on a length mismatch or empty input.
    """
    tau = check_probability(tau)
    batch, y = _check_lengths(predictions, observations)
    values = identification_values(y, batch.e_minus, batch.v, batch.e_plus, tau)
    n = len(y)
    spread = values.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros(3)
    return CalibrationReport(
        coverage=float(np.mean(y <= batch.v)),
        v_minus=float(values[:, 0].mean()),
        v_plus=float(values[:, 2].mean()),
        n=n,
        tau=tau,
        v_minus_se=float(spread[0]),
        v_plus_se=float(spread[2]),
        mean_prediction=float(batch.mean_recombination(tau).mean()),
        mean_observation=float(y.mean()),
    )


def quantile_coverage(quantiles, observations):
    """
    Coverage ratios of multi-quantile predictions.

    Parameters:
        quantiles (np.ndarray): shape (n, K), one column per probability level.
        observations (array-like): n responses.

    Returns:
        np.ndarray: K shares of observations at or below each predicted quantile.
    """
    quantiles = np.asarray(quantiles, dtype=float)
    y = np.asarray(observations, dtype=float).reshape(-1)
    if quantiles.ndim != 2 or quantiles.shape[0] != len(y) or len(y) == 0:
        raise DomainError("quantile predictions must be an (n, K) array matching the observations")
    return (y[:, None] <= quantiles).mean(axis=0)
