"""
network.py

Feed-forward tanh network z = z^(d) o ... o z^(1) with output heads whose
predictions are monotone by construction, and exact backpropagation of an
objective through heads and layers.

Representation conventions:
    - a feature row x has r0 + 1 entries, the first one the constant 1;
    - layer m has a weight matrix of shape (r_m, r_{m-1} + 1) whose column 0
      is the bias;
    - the representation z has r_d + 1 entries, again with a leading 1;
    - the K head vectors are the rows of a (K, r_d + 1) matrix, column 0 the bias.
"""

import enum
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from scoring.domain import CompositeTriplet, check_probability
from scoring.exceptions import ConfigurationError, DomainError
from scoring.functionals import empirical_es, empirical_quantile_set

logger = logging.getLogger(__name__)

# Inner products are clamped to this range before the exp/sigmoid links.
ETA_CLAMP = 30.0


class Activation(str, enum.Enum):
    TANH = "tanh"


class Link(str, enum.Enum):
    LOG = "log"


class HeadType(str, enum.Enum):
    """Output head of the network."""

    MULTI_QUANTILE_ADDITIVE = "multi_quantile_additive"
    MULTI_QUANTILE_MULTIPLICATIVE = "multi_quantile_multiplicative"
    COMPOSITE_ADDITIVE = "composite_additive"
    MEAN = "mean"

    @property
    def is_quantile(self):
        return self in (HeadType.MULTI_QUANTILE_ADDITIVE, HeadType.MULTI_QUANTILE_MULTIPLICATIVE)


@dataclass(frozen=True)
class NetworkConfig:
    """
    Architecture of a network.

    Attributes:
        input_dim (int): Number of features r0, without the constant column.
        hidden_dims (tuple[int]): (r1, ..., rd), nonempty.
        head (HeadType): Output head.
        levels (tuple[float]): Strictly increasing probability levels of a
            quantile head, or the single tau of the composite head. Empty for
            the mean head.
        activation (Activation): Hidden-layer activation.
        link (Link): Link of the positive outputs.
        seed (int): Seed of the weight initialisation; start k of a fit uses seed + k.
        intercept_only (bool): Freeze every weight except the head biases at 0.
    """

    input_dim: int
    hidden_dims: tuple = (20, 15, 10)
    head: HeadType = HeadType.COMPOSITE_ADDITIVE
    levels: tuple = (0.9,)
    activation: Activation = Activation.TANH
    link: Link = Link.LOG
    seed: int = 0
    intercept_only: bool = False

    def __post_init__(self):
        object.__setattr__(self, "head", HeadType(self.head))
        object.__setattr__(self, "activation", Activation(self.activation))
        object.__setattr__(self, "link", Link(self.link))
        object.__setattr__(self, "hidden_dims", tuple(int(r) for r in self.hidden_dims))
        object.__setattr__(self, "levels", tuple(float(t) for t in self.levels))

        if int(self.input_dim) != self.input_dim or self.input_dim < 0:
            raise DomainError(f"input_dim must be a nonnegative integer, got {self.input_dim!r}")
        if not self.hidden_dims or any(r < 1 for r in self.hidden_dims):
            raise DomainError(f"hidden_dims must be a nonempty list of positive counts, got {self.hidden_dims}")
        for tau in self.levels:
            check_probability(tau, "level")
        if any(b <= a for a, b in zip(self.levels, self.levels[1:])):
            raise DomainError(f"levels must be strictly increasing, got {self.levels}")

        if self.head.is_quantile and not self.levels:
            raise ConfigurationError("a quantile head needs at least one level")
        if self.head == HeadType.COMPOSITE_ADDITIVE and len(self.levels) != 1:
            raise ConfigurationError("the composite head needs exactly one level tau")
        if self.head == HeadType.MEAN and self.levels:
            raise ConfigurationError("the mean head takes no levels")

    @property
    def n_outputs(self):
        if self.head == HeadType.COMPOSITE_ADDITIVE:
            return 3
        if self.head == HeadType.MEAN:
            return 1
        return len(self.levels)

    @property
    def tau(self):
        if self.head != HeadType.COMPOSITE_ADDITIVE:
            raise ConfigurationError(f"{self.head.value} head has no single level tau")
        return self.levels[0]

    @property
    def layer_shapes(self):
        dims = (self.input_dim,) + self.hidden_dims
        return [(dims[m + 1], dims[m] + 1) for m in range(len(self.hidden_dims))]

    @property
    def head_shape(self):
        return (self.n_outputs, self.hidden_dims[-1] + 1)

    @property
    def shape_header(self):
        """Shapes of the parameter blocks in vector order: layers, then heads."""
        return self.layer_shapes + [self.head_shape]

    @property
    def parameter_count(self):
        return sum(rows * cols for rows, cols in self.shape_header)

    def to_dict(self):
        out = asdict(self)
        out.update(
            head=self.head.value,
            activation=self.activation.value,
            link=self.link.value,
            hidden_dims=list(self.hidden_dims),
            levels=list(self.levels),
        )
        return out

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


@dataclass
class NetworkParams:
    """
    Weights of a network.

    Attributes:
        layers (list[np.ndarray]): One (r_m, r_{m-1} + 1) matrix per hidden layer.
        heads (np.ndarray): (K, r_d + 1) head vectors.
    """

    layers: list
    heads: np.ndarray = field(default=None)

    @property
    def shapes(self):
        return [w.shape for w in self.layers] + [self.heads.shape]

    def to_vector(self):
        return np.concatenate([w.ravel() for w in self.layers] + [self.heads.ravel()])

    @classmethod
    def from_vector(cls, vector, cfg: NetworkConfig):
        vector = np.asarray(vector, dtype=float).reshape(-1)
        if vector.size != cfg.parameter_count:
            raise DomainError(f"parameter vector has {vector.size} entries, the network {cfg.parameter_count}")
        blocks, offset = [], 0
        for rows, cols in cfg.shape_header:
            blocks.append(vector[offset : offset + rows * cols].reshape(rows, cols).copy())
            offset += rows * cols
        return cls(layers=blocks[:-1], heads=blocks[-1])

    def copy(self):
        return NetworkParams([w.copy() for w in self.layers], self.heads.copy())


def glorot_uniform(rng, fan_out, fan_in):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


def init_params(cfg: NetworkConfig, rng=None, head_bias=None):
    """
    Symmetric uniform initialisation with zero biases.

    Parameters:
        cfg (NetworkConfig): Architecture.
        rng (np.random.Generator | None): Defaults to default_rng(cfg.seed).
        head_bias (array-like | None): Initial head biases, e.g. from
            `head_bias_from_sample`.

    Returns:
        NetworkParams
    """
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    layers = []
    for rows, cols in cfg.layer_shapes:
        w = np.zeros((rows, cols))
        if not cfg.intercept_only:
            w[:, 1:] = glorot_uniform(rng, rows, cols - 1)
        layers.append(w)
    heads = np.zeros(cfg.head_shape)
    if not cfg.intercept_only:
        heads[:, 1:] = glorot_uniform(rng, cfg.head_shape[0], cfg.head_shape[1] - 1)
    if head_bias is not None:
        heads[:, 0] = np.asarray(head_bias, dtype=float).reshape(-1)
    return NetworkParams(layers, heads)


def _logit(p):
    return math.log(p / (1.0 - p))


def head_bias_from_sample(cfg: NetworkConfig, y):
    """
    Head biases for which the network without features predicts the
    empirical functionals of the sample y.
    """
    y = np.asarray(y, dtype=float)
    floor = 1e-6 * float(np.mean(y))
    if cfg.head == HeadType.MEAN:
        return np.array([math.log(np.mean(y))])
    if cfg.head == HeadType.COMPOSITE_ADDITIVE:
        tau = cfg.tau
        lower, upper = empirical_es(y, tau)
        q = empirical_quantile_set(y, tau)
        v = 0.5 * (q.lower + q.upper)
        return np.log([max(lower, floor), max(v - lower, floor), max(upper - v, floor)])

    quantiles = [empirical_quantile_set(y, tau) for tau in cfg.levels]
    values = np.maximum.accumulate([max(0.5 * (q.lower + q.upper), floor) for q in quantiles])
    values = values + floor * np.arange(len(values))
    if cfg.head == HeadType.MULTI_QUANTILE_ADDITIVE:
        return np.log(np.diff(values, prepend=0.0))
    bias = [math.log(values[-1])]
    for j in range(len(values) - 2, -1, -1):
        bias.insert(0, _logit(values[j] / values[j + 1]))
    return np.array(bias)


def _check_features(X, cfg):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != cfg.input_dim + 1:
        raise DomainError(
            f"feature rows must have {cfg.input_dim + 1} entries (leading 1), got shape {X.shape}"
        )
    return X


def _with_constant(h):
    return np.hstack([np.ones((h.shape[0], 1)), h])


def _representations(X, params):
    """Activations of every layer, each with the leading constant column."""
    activations = [X]
    for w in params.layers:
        activations.append(_with_constant(np.tanh(activations[-1] @ w.T)))
    return activations


def forward_representation(x, params: NetworkParams, cfg: NetworkConfig):
    """
    Representation z^(d:1)(x) of a single feature row.

    Parameters:
        x (array-like): r0 + 1 entries, the first one 1.

    Returns:
        np.ndarray: r_d + 1 entries, the first one 1.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != cfg.input_dim + 1:
        raise DomainError(f"x must have {cfg.input_dim + 1} entries (leading 1), got {x.size}")
    return _representations(x[None, :], params)[-1][0]


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _head_outputs(eta, head):
    """Head outputs (n, K) from clamped inner products (n, K)."""
    if head in (HeadType.MULTI_QUANTILE_ADDITIVE, HeadType.COMPOSITE_ADDITIVE):
        return np.cumsum(np.exp(eta), axis=1)
    if head == HeadType.MEAN:
        return np.exp(eta)
    out = np.empty_like(eta)
    out[:, -1] = np.exp(eta[:, -1])
    for j in range(eta.shape[1] - 2, -1, -1):
        out[:, j] = sigmoid(eta[:, j]) * out[:, j + 1]
    return out


def _head_backward(eta, outputs, grad_out, head):
    """Gradient with respect to the clamped inner products."""
    if head in (HeadType.MULTI_QUANTILE_ADDITIVE, HeadType.COMPOSITE_ADDITIVE):
        tail = np.cumsum(grad_out[:, ::-1], axis=1)[:, ::-1]
        return np.exp(eta) * tail
    if head == HeadType.MEAN:
        return grad_out * outputs
    d_eta = np.empty_like(eta)
    carry = grad_out.copy()
    for j in range(eta.shape[1] - 1):
        s = sigmoid(eta[:, j])
        d_eta[:, j] = carry[:, j] * outputs[:, j + 1] * s * (1.0 - s)
        carry[:, j + 1] += carry[:, j] * s
    d_eta[:, -1] = carry[:, -1] * outputs[:, -1]
    return d_eta


def _inner_products(betas, z):
    betas = np.atleast_2d(np.asarray(betas, dtype=float))
    z = np.asarray(z, dtype=float).reshape(-1)
    if betas.shape[1] != z.size:
        raise DomainError(f"head vectors of length {betas.shape[1]} do not match a representation of {z.size}")
    return np.clip(betas @ z, -ETA_CLAMP, ETA_CLAMP)[None, :]


def head_multi_quantile_additive(z, betas, levels):
    """Q_1 = exp<b_1, z>, Q_{j+1} = Q_j + exp<b_{j+1}, z>."""
    if len(betas) != len(levels):
        raise DomainError(f"{len(betas)} head vectors for {len(levels)} levels")
    return _head_outputs(_inner_products(betas, z), HeadType.MULTI_QUANTILE_ADDITIVE)[0].tolist()


def head_multi_quantile_multiplicative(z, betas, levels):
    """Q_K = exp<b_K, z>, Q_j = sigmoid(<b_j, z>) Q_{j+1}."""
    if len(betas) != len(levels):
        raise DomainError(f"{len(betas)} head vectors for {len(levels)} levels")
    return _head_outputs(_inner_products(betas, z), HeadType.MULTI_QUANTILE_MULTIPLICATIVE)[0].tolist()


def head_composite(z, beta1, beta2, beta3):
    """e- = exp<b1, z>, v = e- + exp<b2, z>, e+ = v + exp<b3, z>."""
    outputs = _head_outputs(_inner_products([beta1, beta2, beta3], z), HeadType.COMPOSITE_ADDITIVE)[0]
    return CompositeTriplet(*map(float, outputs))


def predict_outputs(X, params: NetworkParams, cfg: NetworkConfig):
    """Head outputs (n, K) of a batch of feature rows."""
    X = _check_features(X, cfg)
    z = _representations(X, params)[-1]
    eta = np.clip(z @ params.heads.T, -ETA_CLAMP, ETA_CLAMP)
    return _head_outputs(eta, cfg.head)


def loss_and_gradient(X, y, params: NetworkParams, cfg: NetworkConfig, objective):
    """
    Mean batch objective and its gradient with respect to every weight.

    Parameters:
        X (np.ndarray): (n, r0 + 1) feature rows.
        y (np.ndarray): n responses.
        params (NetworkParams): Current weights.
        cfg (NetworkConfig): Architecture.
        objective: PinballObjective, CompositeObjective or BregmanObjective.

    Returns:
        tuple: (loss, NetworkParams of gradients)

    Raises:
        ConfigurationError: if the objective does not fit the head.
    """
    objective.check(cfg)
    X = _check_features(X, cfg)
    y = np.asarray(y, dtype=float).reshape(-1)
    n = len(y)
    activations = _representations(X, params)
    z = activations[-1]
    raw = z @ params.heads.T
    eta = np.clip(raw, -ETA_CLAMP, ETA_CLAMP)
    outputs = _head_outputs(eta, cfg.head)

    losses, grad_out = objective.losses_and_gradient(y, outputs)
    d_eta = _head_backward(eta, outputs, grad_out / n, cfg.head)
    d_eta = d_eta * ((raw > -ETA_CLAMP) & (raw < ETA_CLAMP))

    d_heads = d_eta.T @ z
    d_layers = [None] * len(params.layers)
    d_a = d_eta @ params.heads
    for m in range(len(params.layers) - 1, -1, -1):
        h = activations[m + 1][:, 1:]
        d_pre = d_a[:, 1:] * (1.0 - h**2)
        d_layers[m] = d_pre.T @ activations[m]
        if m:
            d_a = d_pre @ params.layers[m]

    grads = NetworkParams(d_layers, d_heads)
    if cfg.intercept_only:
        grads = NetworkParams([np.zeros_like(w) for w in d_layers], np.zeros_like(d_heads))
        grads.heads[:, 0] = d_heads[:, 0]
    return float(np.mean(losses)), grads


def gradient(X, y, params: NetworkParams, cfg: NetworkConfig, objective):
    """Gradient of the mean batch objective, shaped like `params`."""
    return loss_and_gradient(X, y, params, cfg, objective)[1]
