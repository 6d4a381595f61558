"""
scores.py

Strictly consistent scoring functions for the tau-quantile, the mean and the
composite triplet (lower ES, tau-quantile, upper ES), together with their
derivatives in the prediction arguments.

Every function accepts numpy arrays as well as Python scalars and returns a
float when all inputs are scalars. The scalar entry points
(`composite_score`, `composite_score_gradient`) validate their inputs; the
array entry point `composite_score_arrays` is what training calls and assumes
valid inputs.
"""

import numpy as np

from .domain import CompositeTriplet, ScoreForm, ScoreSpec, check_probability
from .exceptions import DomainError
from .phi import PHI_FLOOR, check_positive, scalar_or_array, scaled_phi, tweedie_phi


def pinball_loss(y, a, tau):
    """
    Pinball loss (y - a)(tau - 1{y <= a}).

    Parameters:
        y: Observation(s).
        a: Quantile prediction(s).
        tau (float): Probability level in (0, 1).

    Returns:
        float | np.ndarray: Nonnegative loss, zero iff y == a.
    """
    tau = check_probability(tau)
    y_arr = np.asarray(y, dtype=float)
    a_arr = np.asarray(a, dtype=float)
    below = (y_arr <= a_arr).astype(float)
    return scalar_or_array((y_arr - a_arr) * (tau - below), y, a)


def s_pair(y, a, tau):
    """
    The relaxed quantile scores (S-, S+).

    S-(y; a) = (1{y <= a} - tau) a - 1{y <= a} y and S+ = S- + y, so that the
    pinball loss equals S- + tau y.

    Returns:
        tuple: (S-, S+) as floats or arrays.
    """
    tau = check_probability(tau)
    y_arr = np.asarray(y, dtype=float)
    a_arr = np.asarray(a, dtype=float)
    below = (y_arr <= a_arr).astype(float)
    s_minus = (below - tau) * a_arr - below * y_arr
    s_plus = s_minus + y_arr
    return scalar_or_array(s_minus, y, a), scalar_or_array(s_plus, y, a)


def bregman_loss(y, a, b):
    """
    Bregman divergence of phi_b, i.e. the Tweedie deviance with power p = 2 - b
    whenever b is outside (1, 2).

    Parameters:
        y: Positive observation(s).
        a: Positive mean prediction(s).
        b (float): Family index.

    Returns:
        float | np.ndarray: Nonnegative loss, zero iff y == a.
    """
    b = float(b)
    y_arr = np.maximum(check_positive("y", y), PHI_FLOOR)
    a_arr = np.maximum(check_positive("a", a), PHI_FLOOR)
    if b == 0.0:
        value = 2.0 * (np.log(a_arr / y_arr) + (y_arr - a_arr) / a_arr)
    elif b == 1.0:
        value = 2.0 * (y_arr * np.log(y_arr / a_arr) + a_arr - y_arr)
    else:
        value = 2.0 * (
            y_arr ** b / (b * (b - 1.0))
            - y_arr * a_arr ** (b - 1.0) / (b - 1.0)
            + a_arr ** b / b
        )
    return scalar_or_array(np.maximum(value, 0.0), y, a)


def bregman_loss_gradient(y, a, b):
    """Derivative of bregman_loss in a: phi_b''(a) (a - y)."""
    a_arr = np.asarray(a, dtype=float)
    return tweedie_phi(b, a_arr, 2) * (a_arr - np.asarray(y, dtype=float))


def increasing_slope(spec: ScoreSpec, e_minus, e_plus):
    """
    Slope of G_{e-,e+}(v) = g(v) + d1Phi v / tau - d2Phi v / (1 - tau).

    The v-derivative of the composite score is (1{y <= v} - tau) times this
    slope, so a positive slope makes the quantile component strictly
    consistent.
    """
    return spec.increasing_slope(e_minus, e_plus)


def composite_score_arrays(y, e_minus, v, e_plus, spec: ScoreSpec, with_gradient=False):
    """
    Vectorised composite score L(y; e-, v, e+) for the three Phi forms.

    Parameters:
        y, e_minus, v, e_plus (np.ndarray): Broadcastable positive arrays.
        spec (ScoreSpec): Score description.
        with_gradient (bool): Also return the partial derivatives.

    Returns:
        np.ndarray or tuple: The losses, or (losses, d/de-, d/dv, d/de+).
        At y == v the indicator 1{y <= v} is used as is.
    """
    tau = spec.tau
    y = np.asarray(y, dtype=float)
    e_minus = np.asarray(e_minus, dtype=float)
    v = np.asarray(v, dtype=float)
    e_plus = np.asarray(e_plus, dtype=float)

    below = (y <= v).astype(float)
    s_minus = (below - tau) * v - below * y
    s_plus = s_minus + y

    loss = spec.g_scale * (y - v) * (tau - below)
    d_minus = np.zeros(np.broadcast(y, e_minus).shape)
    d_plus = np.zeros(np.broadcast(y, e_plus).shape)

    if spec.form in (ScoreForm.ADDITIVE, ScoreForm.REVELATION_MINUS):
        gap = e_minus + s_minus / tau
        loss = (
            loss
            + scaled_phi(spec.phi_minus, e_minus, 1) * gap
            - scaled_phi(spec.phi_minus, e_minus, 0)
            + scaled_phi(spec.phi_minus, y, 0)
        )
        d_minus = d_minus + scaled_phi(spec.phi_minus, e_minus, 2) * gap

    if spec.form in (ScoreForm.ADDITIVE, ScoreForm.REVELATION_PLUS):
        gap = e_plus - s_plus / (1 - tau)
        loss = (
            loss
            + scaled_phi(spec.phi_plus, e_plus, 1) * gap
            - scaled_phi(spec.phi_plus, e_plus, 0)
            + scaled_phi(spec.phi_plus, y, 0)
        )
        d_plus = d_plus + scaled_phi(spec.phi_plus, e_plus, 2) * gap

    if spec.form in (ScoreForm.REVELATION_PLUS, ScoreForm.REVELATION_MINUS):
        mean = tau * e_minus + (1 - tau) * e_plus
        loss = (
            loss
            + scaled_phi(spec.phi, mean, 1) * (mean - y)
            - scaled_phi(spec.phi, mean, 0)
            + scaled_phi(spec.phi, y, 0)
        )
        d_mean = scaled_phi(spec.phi, mean, 2) * (mean - y)
        d_minus = d_minus + tau * d_mean
        d_plus = d_plus + (1 - tau) * d_mean

    if not with_gradient:
        return loss
    d_v = (below - tau) * increasing_slope(spec, e_minus, e_plus)
    return loss, d_minus, d_v, d_plus


def _check_score_inputs(y, t, spec):
    if not isinstance(spec, ScoreSpec):
        raise DomainError(f"spec must be a ScoreSpec, got {type(spec).__name__}")
    if not isinstance(t, CompositeTriplet):
        raise DomainError(f"t must be a CompositeTriplet, got {type(t).__name__}")
    if not (np.isfinite(y) and y > 0):
        raise DomainError(f"y must be positive, got {y!r}")


def composite_score(y, t: CompositeTriplet, spec: ScoreSpec):
    """
    Composite score of one observation against one triplet prediction.

    Parameters:
        y (float): Positive observation.
        t (CompositeTriplet): Prediction (e-, v, e+).
        spec (ScoreSpec): Score description.

    Returns:
        float: L(y; e-, v, e+) >= 0, with L(y; y, y, y) = 0.

    Raises:
        DomainError: for an invalid spec, triplet or observation.
    """
    _check_score_inputs(y, t, spec)
    return float(composite_score_arrays(y, t.e_minus, t.v, t.e_plus, spec))


def composite_score_gradient(y, t: CompositeTriplet, spec: ScoreSpec):
    """
    Partial derivatives (dL/de-, dL/dv, dL/de+) of the composite score.

    At the kink y == v the branch 1{y <= v} = 1 is returned.
    """
    _check_score_inputs(y, t, spec)
    _, d_minus, d_v, d_plus = composite_score_arrays(
        y, t.e_minus, t.v, t.e_plus, spec, with_gradient=True
    )
    return float(d_minus), float(d_v), float(d_plus)


def mean_bregman_loss(y, a, b):
    """Average Bregman (Tweedie deviance) loss of mean predictions `a`."""
    return float(np.mean(bregman_loss(np.asarray(y, dtype=float), np.asarray(a, dtype=float), b)))
