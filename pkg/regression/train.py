"""
train.py

M-estimation of network weights: mini-batch adaptive-moment descent on the
mean objective, early stopping on a validation split, several starting
points and averaging of their predictions.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd
from django.conf import settings
from joblib import Parallel, delayed

from claims.datasets import Dataset, stratified_indices
from scoring.domain import TripletBatch
from scoring.exceptions import DomainError, TrainingError
from scoring.functionals import empirical_quantile_set
from scoring.identification import calibration_report, quantile_coverage
from scoring.scores import pinball_loss

from .network import HeadType, NetworkConfig, NetworkParams, head_bias_from_sample, init_params, loss_and_gradient, predict_outputs
from .objectives import PinballObjective

logger = logging.getLogger(__name__)

MIN_LEARN_ROWS = 10


@dataclass(frozen=True)
class TrainConfig:
    """
    Optimisation settings.

    Attributes:
        batch_size (int): Rows per gradient step.
        max_epochs (int): Upper bound on passes over the training split.
        patience (int): Epochs without a validation improvement before stopping.
        learning_rate (float): Step size.
        moment_decays (tuple[float, float]): Decay rates of the first and second moments.
        n_starts (int): Number of starting points whose predictions are averaged.
        val_fraction (float): Share of the learn data held out for early stopping.
        eta_weights (tuple[float] | None): Pinball weights; None chooses them
            with `auto_eta`.
        seed (int): Seed of the split and of the mini-batch order of start k (seed + k).
        nesterov (bool): Nesterov form of the moment update.
        init_from_data (bool): Start head biases at the empirical functionals
            of the training responses.
        epsilon (float): Denominator guard of the update.
    """

    batch_size: int = 512
    max_epochs: int = 500
    patience: int = 15
    learning_rate: float = 1e-3
    moment_decays: tuple = (0.9, 0.999)
    n_starts: int = 5
    val_fraction: float = 0.2
    eta_weights: Optional[tuple] = None
    seed: int = 0
    nesterov: bool = True
    init_from_data: bool = True
    epsilon: float = 1e-7

    def __post_init__(self):
        for name in ("batch_size", "max_epochs", "patience", "n_starts"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise DomainError(f"{name} must be a positive integer, got {value!r}")
        if not self.learning_rate > 0:
            raise DomainError(f"learning_rate must be positive, got {self.learning_rate!r}")
        if len(self.moment_decays) != 2 or not all(0.0 < d < 1.0 for d in self.moment_decays):
            raise DomainError(f"moment_decays must be two numbers in (0, 1), got {self.moment_decays!r}")
        if not 0.0 < self.val_fraction < 1.0:
            raise DomainError(f"val_fraction must lie in (0, 1), got {self.val_fraction!r}")
        if self.eta_weights is not None:
            object.__setattr__(self, "eta_weights", tuple(float(w) for w in self.eta_weights))
            if not all(w > 0 for w in self.eta_weights):
                raise DomainError("eta_weights must be positive")

    def to_dict(self):
        return {
            "batch_size": self.batch_size,
            "max_epochs": self.max_epochs,
            "patience": self.patience,
            "learning_rate": self.learning_rate,
            "moment_decays": list(self.moment_decays),
            "n_starts": self.n_starts,
            "val_fraction": self.val_fraction,
            "eta_weights": None if self.eta_weights is None else list(self.eta_weights),
            "seed": self.seed,
            "nesterov": self.nesterov,
        }


class AdaptiveMomentOptimizer:
    """
    Bias-corrected adaptive-moment update of a flat parameter vector, with an
    optional Nesterov look-ahead on the first moment.
    """

    def __init__(self, size, learning_rate=1e-3, decays=(0.9, 0.999), nesterov=True, epsilon=1e-7):
        self.learning_rate = learning_rate
        self.beta_1, self.beta_2 = decays
        self.nesterov = nesterov
        self.epsilon = epsilon
        self.iterations = 0
        self.momentum = np.zeros(size)
        self.cache = np.zeros(size)

    def step(self, theta, grad):
        self.iterations += 1
        t = self.iterations
        self.momentum = self.beta_1 * self.momentum + (1 - self.beta_1) * grad
        self.cache = self.beta_2 * self.cache + (1 - self.beta_2) * grad**2
        if self.nesterov:
            momentum_corrected = self.beta_1 * self.momentum / (1 - self.beta_1 ** (t + 1)) + (1 - self.beta_1) * grad / (1 - self.beta_1**t)
        else:
            momentum_corrected = self.momentum / (1 - self.beta_1**t)
        cache_corrected = self.cache / (1 - self.beta_2**t)
        return theta - self.learning_rate * momentum_corrected / (np.sqrt(cache_corrected) + self.epsilon)


def split_learn(dataset: Dataset, val_fraction, seed):
    """
    Train/validation partition of the learn data, stratified by response decile.

    Raises:
        DomainError: for fewer than 10 rows or a degenerate fraction.
    """
    if dataset.n < MIN_LEARN_ROWS:
        raise DomainError(f"need at least {MIN_LEARN_ROWS} learn rows, got {dataset.n}")
    train_rows, val_rows = stratified_indices(dataset.responses, val_fraction, seed)
    return dataset.subset(train_rows), dataset.subset(val_rows)


def auto_eta(dataset, levels):
    """
    Pinball weights that equalise the intercept-only losses.

    eta_j = 1 / mean pinball loss of the empirical tau_j-quantile; a zero
    loss (constant sample) gives eta_j = 1.

    Parameters:
        dataset (Dataset | array-like): Training data or its responses.
        levels (sequence[float]): Quantile levels.

    Returns:
        np.ndarray: one positive weight per level.
    """
    y = dataset.responses if isinstance(dataset, Dataset) else np.asarray(dataset, dtype=float).reshape(-1)
    weights = []
    for tau in levels:
        q = empirical_quantile_set(y, tau).lower
        loss = float(np.mean(pinball_loss(y, q, tau)))
        weights.append(1.0 / loss if loss > 0 else 1.0)
    return np.array(weights)


@dataclass
class StartResult:
    """
    Outcome of one starting point.

    Attributes:
        index (int): Start number k; its weights are drawn with NetworkConfig.seed + k
            and its mini-batches with TrainConfig.seed + k.
        params (NetworkParams | None): Weights of the best validation epoch, None if the start failed.
        trace (list[tuple]): (epoch, train_loss, val_loss) per recorded epoch, epoch 0 = initial weights.
        best_epoch (int): Epoch whose weights were kept.
        best_val_loss (float): Validation loss of that epoch.
        failure (str | None): Reason the start was abandoned.
    """

    index: int
    params: Optional[NetworkParams]
    trace: list = field(default_factory=list)
    best_epoch: int = 0
    best_val_loss: float = math.inf
    failure: Optional[str] = None


def _fit_start(index, train, val, cfg, train_cfg, objective, head_bias):
    rng = np.random.default_rng(train_cfg.seed + index)
    params = init_params(cfg, np.random.default_rng(cfg.seed + index), head_bias)
    theta = params.to_vector()
    optimizer = AdaptiveMomentOptimizer(
        theta.size, train_cfg.learning_rate, train_cfg.moment_decays, train_cfg.nesterov, train_cfg.epsilon
    )

    def losses(theta):
        current = NetworkParams.from_vector(theta, cfg)
        return (
            objective.loss(train.responses, predict_outputs(train.features, current, cfg)),
            objective.loss(val.responses, predict_outputs(val.features, current, cfg)),
        )

    train_loss, val_loss = losses(theta)
    result = StartResult(index, None, [(0, train_loss, val_loss)], 0, val_loss)
    best_theta, waited = theta.copy(), 0
    logger.info("start %d: initial train loss %.6g, validation loss %.6g", index, train_loss, val_loss)

    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(1, train_cfg.max_epochs + 1):
            order = rng.permutation(train.n)
            for begin in range(0, train.n, train_cfg.batch_size):
                rows = order[begin : begin + train_cfg.batch_size]
                current = NetworkParams.from_vector(theta, cfg)
                _, grads = loss_and_gradient(train.features[rows], train.responses[rows], current, cfg, objective)
                theta = optimizer.step(theta, grads.to_vector())
            train_loss, val_loss = losses(theta)
            if not (np.all(np.isfinite(theta)) and math.isfinite(train_loss) and math.isfinite(val_loss)):
                result.failure = f"non-finite loss at epoch {epoch}"
                logger.warning("start %d abandoned: %s", index, result.failure)
                return result
            result.trace.append((epoch, train_loss, val_loss))
            logger.debug("start %d epoch %d: train %.6g, validation %.6g", index, epoch, train_loss, val_loss)
            if val_loss < result.best_val_loss:
                result.best_val_loss, result.best_epoch, best_theta, waited = val_loss, epoch, theta.copy(), 0
            else:
                waited += 1
                if waited >= train_cfg.patience:
                    break

    result.params = NetworkParams.from_vector(best_theta, cfg)
    logger.info(
        "start %d: stopped after epoch %d, best epoch %d, validation loss %.6g",
        index,
        result.trace[-1][0],
        result.best_epoch,
        result.best_val_loss,
    )
    return result


class FittedModel:
    """
    A trained network: configuration, objective and the weights of every
    successful start. Predictions are averaged over starts on the response
    scale.

    Attributes:
        config (NetworkConfig)
        objective: Objective the weights were fitted with.
        params (list[NetworkParams])
        encoder (FeatureEncoder | None): Encoder of the learn data, for model files.
    """

    def __init__(self, config: NetworkConfig, objective, params, encoder=None):
        if not params:
            raise TrainingError("a fitted model needs at least one set of weights")
        self.config = config
        self.objective = objective
        self.params = list(params)
        self.encoder = encoder

    def predict(self, features):
        """Averaged head outputs, shape (n, K)."""
        return np.mean([predict_outputs(features, p, self.config) for p in self.params], axis=0)

    def predict_triplets(self, features):
        if self.config.head != HeadType.COMPOSITE_ADDITIVE:
            raise DomainError(f"a {self.config.head.value} model does not predict triplets")
        out = self.predict(features)
        return TripletBatch(out[:, 0], out[:, 1], out[:, 2])

    def predict_mean(self, features):
        """Conditional means: the mean head output, or the recombined triplet."""
        if self.config.head == HeadType.MEAN:
            return self.predict(features)[:, 0]
        return self.predict_triplets(features).mean_recombination(self.config.tau)

    def predict_quantile(self, features, tau):
        if self.config.head.is_quantile and tau in self.config.levels:
            return self.predict(features)[:, self.config.levels.index(tau)]
        if self.config.head == HeadType.COMPOSITE_ADDITIVE and tau == self.config.tau:
            return self.predict(features)[:, 1]
        raise DomainError(f"model does not predict the {tau}-quantile")


@dataclass
class FitReport:
    """
    Result of `fit`.

    Attributes:
        model (FittedModel): Averaged predictor.
        starts (list[StartResult]): One entry per start, failed ones included.
        train_size, val_size (int): Sizes of the split learn data.
        test_predictions (np.ndarray | None): Averaged outputs on the test data.
        test_loss (float | None): Objective on the test data.
        calibration (CalibrationReport | None): Composite models only.
        coverage (np.ndarray | None): Per-level coverage of quantile models.
        level_losses (np.ndarray | None): Per-level mean pinball losses on the test data.
    """

    model: FittedModel
    starts: list
    train_size: int
    val_size: int
    test_predictions: Optional[np.ndarray] = None
    test_loss: Optional[float] = None
    calibration: object = None
    coverage: Optional[np.ndarray] = None
    level_losses: Optional[np.ndarray] = None

    @property
    def objective(self):
        return self.model.objective

    def traces_frame(self):
        rows = [(s.index, *entry) for s in self.starts for entry in s.trace]
        return pd.DataFrame(rows, columns=["start", "epoch", "train_loss", "val_loss"])


def evaluate_model(model: FittedModel, data: Dataset):
    """
    Out-of-sample statistics of a model on a dataset.

    Returns:
        dict: predictions, loss and, depending on the head, the calibration
            report or the per-level coverage and pinball losses.
    """
    outputs = model.predict(data.features)
    result = {"predictions": outputs, "loss": model.objective.loss(data.responses, outputs)}
    if model.config.head == HeadType.COMPOSITE_ADDITIVE:
        batch = TripletBatch(outputs[:, 0], outputs[:, 1], outputs[:, 2])
        result["calibration"] = calibration_report(batch, data.responses, model.config.tau)
    elif model.config.head.is_quantile:
        result["coverage"] = quantile_coverage(outputs, data.responses)
        result["level_losses"] = PinballObjective(model.config.levels).level_losses(data.responses, outputs).mean(axis=0)
    return result


def fit(dataset: Dataset, network_cfg: NetworkConfig, train_cfg: TrainConfig, objective, test=None, encoder=None, n_jobs=None):
    """
    Fit a network by minimising the mean objective.

    The learn data are split into training and validation parts. Every start
    k runs adaptive-moment descent from its own initial weights, drawn with
    NetworkConfig.seed + k, records the training and validation losses after
    every epoch and keeps the weights of the epoch with the smallest
    validation loss. Starts whose loss becomes non-finite are dropped.

    Parameters:
        dataset (Dataset): Learn data.
        network_cfg (NetworkConfig): Architecture; input_dim must match the data.
        train_cfg (TrainConfig): Optimisation settings.
        objective: Objective compatible with the head. Pinball weights that
            are not set are taken from train_cfg.eta_weights or `auto_eta`.
        test (Dataset | None): Data for the out-of-sample statistics.
        encoder (FeatureEncoder | None): Stored on the fitted model.
        n_jobs (int | None): joblib workers; defaults to DEEPCOMPOSITE_N_JOBS.

    Returns:
        FitReport

    Raises:
        ConfigurationError: objective and head do not fit together.
        DomainError: data and configuration do not fit together.
        TrainingError: every start failed.
    """
    objective.check(network_cfg)
    if dataset.input_dim != network_cfg.input_dim:
        raise DomainError(f"data have {dataset.input_dim} features, the network expects {network_cfg.input_dim}")
    train, val = split_learn(dataset, train_cfg.val_fraction, train_cfg.seed)
    if isinstance(objective, PinballObjective) and objective.weights is None:
        weights = train_cfg.eta_weights if train_cfg.eta_weights is not None else auto_eta(train, objective.levels)
        objective = objective.with_weights(weights)
        logger.info("pinball weights %s", np.round(objective.weights, 6).tolist())

    head_bias = head_bias_from_sample(network_cfg, train.responses) if train_cfg.init_from_data else None
    n_jobs = getattr(settings, "DEEPCOMPOSITE_N_JOBS", 1) if n_jobs is None else n_jobs
    logger.info(
        "fitting %s head on %d training and %d validation rows, %d starts",
        network_cfg.head.value,
        train.n,
        val.n,
        train_cfg.n_starts,
    )
    starts = Parallel(n_jobs=n_jobs)(
        delayed(_fit_start)(k, train, val, network_cfg, train_cfg, objective, head_bias)
        for k in range(train_cfg.n_starts)
    )
    good = [s.params for s in starts if s.params is not None]
    if not good:
        raise TrainingError(f"all {len(starts)} starts failed: {starts[0].failure}")

    report = FitReport(FittedModel(network_cfg, objective, good, encoder), list(starts), train.n, val.n)
    if test is not None:
        stats = evaluate_model(report.model, test)
        report.test_predictions = stats["predictions"]
        report.test_loss = stats["loss"]
        report.calibration = stats.get("calibration")
        report.coverage = stats.get("coverage")
        report.level_losses = stats.get("level_losses")
    return report
