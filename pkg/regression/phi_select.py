"""
phi_select.py

Data-driven choice of the Tweedie members (b, c) entering the composite
score. Squared Pearson residuals of a pre-fitted mean model are regressed on
the fitted means on the log-log scale,

    log (y - mu)^2 = intercept + slope * log mu,

which reads off a variance function V(mu) proportional to mu^(2 - b). The
regression is run on all claims, on the claims above the pre-fitted
tau-quantile (upper ES) and on those at or below it (lower ES).
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np
from scipy import stats

from claims.datasets import Dataset
from scoring.domain import PhiIndex, ScoreForm, ScoreSpec, check_probability
from scoring.exceptions import DomainError, InfeasibleSpecError

from .network import HeadType, NetworkConfig
from .objectives import BregmanObjective, PinballObjective
from .train import fit

logger = logging.getLogger(__name__)

RESIDUAL_FLOOR = 1e-12


class LogLogFit(NamedTuple):
    b: float
    c: float
    intercept: float
    slope: float

    def phi_index(self):
        return PhiIndex(self.b, self.c)


def residual_loglog_regression(mu_hat, y):
    """
    OLS of log squared Pearson residuals on log fitted means.

    Parameters:
        mu_hat (array-like): Positive fitted means.
        y (array-like): Positive responses, same length.

    Returns:
        LogLogFit: b = 2 - slope, c = 2 exp(intercept).

    Raises:
        DomainError: on length mismatch, nonpositive means, fewer than 3
            points or constant fitted means.
    """
    mu_hat = np.asarray(mu_hat, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    if mu_hat.shape != y.shape:
        raise DomainError(f"{mu_hat.size} fitted means but {y.size} responses")
    if mu_hat.size < 3:
        raise DomainError(f"the residual regression needs at least 3 points, got {mu_hat.size}")
    if not np.all(mu_hat > 0):
        raise DomainError("fitted means must be positive")
    x = np.log(mu_hat)
    if np.ptp(x) == 0:
        raise DomainError("fitted means are constant; the residual regression is undefined")
    r = np.log(np.maximum((y - mu_hat) ** 2, RESIDUAL_FLOOR))
    result = stats.linregress(x, r)
    slope, intercept = float(result.slope), float(result.intercept)
    return LogLogFit(b=2.0 - slope, c=2.0 * math.exp(intercept), intercept=intercept, slope=slope)


@dataclass(frozen=True)
class PhiSelection:
    """
    The three residual regressions and the score form they allow.

    Attributes:
        all_claims (LogLogFit): Fit on the whole sample, used for phi.
        large_claims (LogLogFit): Fit above the tau-quantile, used for phi_plus.
        small_claims (LogLogFit): Fit at or below the tau-quantile, used for phi_minus.
        chosen_form (ScoreForm)
        spec (ScoreSpec): Spec assembled from the fits.
    """

    all_claims: LogLogFit
    large_claims: LogLogFit
    small_claims: LogLogFit
    chosen_form: ScoreForm
    spec: ScoreSpec

    def columns(self):
        return {"all": self.all_claims, "large": self.large_claims, "small": self.small_claims}

    def as_table(self, digits=4):
        """Text table: one row per regression quantity, one column per subset."""
        header = f"{'':<10}" + "".join(f"{name:>14}" for name in self.columns())
        lines = [header]
        for row in ("intercept", "slope", "b", "c"):
            cells = "".join(f"{getattr(fit_, row):>14.{digits}f}" for fit_ in self.columns().values())
            lines.append(f"{row:<10}{cells}")
        lines.append(f"form: {self.chosen_form.value}")
        return "\n".join(lines)


def assemble_spec(all_claims, large_claims, small_claims, tau, g_scale=1.0):
    """
    Pick the score form that the fitted indices allow.

    ADDITIVE when b- > 1 and b+ < 1, otherwise REVELATION_PLUS when b+ < 1,
    otherwise REVELATION_MINUS when b- > 1.

    Returns:
        PhiSelection

    Raises:
        InfeasibleSpecError: if neither sign constraint holds.
    """
    tau = check_probability(tau)
    minus_ok, plus_ok = small_claims.b > 1, large_claims.b < 1
    if minus_ok and plus_ok:
        spec = ScoreSpec(
            ScoreForm.ADDITIVE,
            tau,
            phi_minus=small_claims.phi_index(),
            phi_plus=large_claims.phi_index(),
            g_scale=g_scale,
        )
    elif plus_ok:
        spec = ScoreSpec(
            ScoreForm.REVELATION_PLUS,
            tau,
            phi=all_claims.phi_index(),
            phi_plus=large_claims.phi_index(),
            g_scale=g_scale,
        )
    elif minus_ok:
        spec = ScoreSpec(
            ScoreForm.REVELATION_MINUS,
            tau,
            phi=all_claims.phi_index(),
            phi_minus=small_claims.phi_index(),
            g_scale=g_scale,
        )
    else:
        raise InfeasibleSpecError(
            "no feasible score form: need b- > 1 or b+ < 1, fitted "
            f"b = {all_claims.b:.6g} (all), {large_claims.b:.6g} (large), {small_claims.b:.6g} (small)"
        )
    logger.info("selected %s score (b all %.4f, large %.4f, small %.4f)", spec.form.value, all_claims.b, large_claims.b, small_claims.b)
    return PhiSelection(all_claims, large_claims, small_claims, spec.form, spec)


def fit_mean_model(dataset: Dataset, network_cfg: NetworkConfig, train_cfg, b=0.0, test=None):
    """
    Pre-fit of the conditional mean under the Bregman loss of phi_b (gamma
    deviance for b = 0). The head of `network_cfg` is replaced by a mean head.

    Returns:
        FitReport
    """
    cfg = replace(network_cfg, head=HeadType.MEAN, levels=())
    return fit(dataset, cfg, train_cfg, BregmanObjective(b), test=test)


def fit_quantile_model(dataset: Dataset, network_cfg: NetworkConfig, train_cfg, tau, test=None):
    """Pre-fit of the conditional tau-quantile with a single-level quantile head."""
    cfg = replace(network_cfg, head=HeadType.MULTI_QUANTILE_ADDITIVE, levels=(tau,))
    return fit(dataset, cfg, train_cfg, PinballObjective((tau,)), test=test)


def select_composite_spec(
    dataset: Dataset,
    tau,
    pre_mean_model,
    pre_quantile_model,
    network_cfg=None,
    train_cfg=None,
    refit=True,
    g_scale=1.0,
):
    """
    Run the three residual regressions and assemble a ScoreSpec.

    The sample is split into I- = {y <= Q(x)} and I+ = {y > Q(x)} with the
    pre-fitted quantile model. With `refit` a separate mean model is fitted on
    each part (needs `network_cfg` and `train_cfg`); otherwise the pre-fitted
    mean model is used on both parts.

    Parameters:
        dataset (Dataset): Learn data.
        tau (float): Level of the composite triplet.
        pre_mean_model (FittedModel): Mean model on the whole sample.
        pre_quantile_model (FittedModel): Model predicting the tau-quantile.

    Returns:
        tuple[ScoreSpec, PhiSelection]

    Raises:
        InfeasibleSpecError: no form satisfies the sign constraints.
        DomainError: a part of the split is too small to regress on.
    """
    tau = check_probability(tau)
    mu = pre_mean_model.predict_mean(dataset.features)
    q = pre_quantile_model.predict_quantile(dataset.features, tau)
    below = dataset.responses <= q
    small_rows, large_rows = np.flatnonzero(below), np.flatnonzero(~below)
    logger.info("phi selection: %d claims at or below the %.3g-quantile, %d above", small_rows.size, tau, large_rows.size)

    all_claims = residual_loglog_regression(mu, dataset.responses)
    if refit:
        if network_cfg is None or train_cfg is None:
            raise DomainError("refitting the subset means needs a network and a training configuration")
        fits = []
        for rows in (large_rows, small_rows):
            part = dataset.subset(rows)
            model = fit_mean_model(part, network_cfg, train_cfg).model
            fits.append(residual_loglog_regression(model.predict_mean(part.features), part.responses))
        large_claims, small_claims = fits
    else:
        large_claims = residual_loglog_regression(mu[large_rows], dataset.responses[large_rows])
        small_claims = residual_loglog_regression(mu[small_rows], dataset.responses[small_rows])

    selection = assemble_spec(all_claims, large_claims, small_claims, tau, g_scale)
    return selection.spec, selection
