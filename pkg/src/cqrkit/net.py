"""Composite quantile-regression network with Monte-Carlo dropout.

One hidden layer of rectified linear units feeds a linear layer with one
output per quantile level. Training minimises the mean pinball loss over
all levels with Adam; inference averages many dropout-perturbed passes.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

N_LEVELS = 101
PARAM_NAMES = ("W1", "b1", "W2", "b2")

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class TrainingDiverged(FloatingPointError):
    """Raised when the training loss becomes non-finite."""


@dataclass(frozen=True)
class NetConfig:
    hidden_units: int = 32
    dropout_rate: float = 0.2
    learning_rate: float = 0.01
    epochs: int = 10
    batch_size: int = 64
    mc_samples: int = 1000
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.dropout_rate < 1:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        for name in ("hidden_units", "epochs", "batch_size", "mc_samples"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")


@dataclass(frozen=True, eq=False)
class QuantileGrid:
    """Ordered, symmetric quantile levels; the default is ``k / 100`` for k = 0..100."""

    levels: np.ndarray = field(default_factory=lambda: np.arange(N_LEVELS) / (N_LEVELS - 1))

    def __post_init__(self):
        levels = np.asarray(self.levels, dtype=float)
        if levels.shape != (N_LEVELS,):
            raise ValueError(f"a quantile grid has exactly {N_LEVELS} levels")
        if np.any(np.diff(levels) <= 0):
            raise ValueError("quantile levels must be strictly increasing")
        if levels[0] < 0 or levels[-1] > 1:
            raise ValueError("quantile levels must lie in [0, 1]")
        if not np.allclose(levels + levels[::-1], 1.0, rtol=0, atol=1e-12):
            raise ValueError("quantile levels must be symmetric around 0.5")
        levels.setflags(write=False)
        object.__setattr__(self, "levels", levels)

    def __len__(self):
        return len(self.levels)

    def __eq__(self, other):
        return isinstance(other, QuantileGrid) and np.array_equal(self.levels, other.levels)

    def __hash__(self):
        return hash(self.levels.tobytes())

    def pairs(self):
        """Index pairs ``(k, 100 - k)`` that bracket a central interval with miscoverage > 0."""
        last = len(self) - 1
        return [(k, last - k) for k in range(last // 2) if 0 < 2 * self.levels[k] < 1]


@dataclass(eq=False)
class Network:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    grid: QuantileGrid
    config: NetConfig

    @property
    def input_dim(self):
        return self.W1.shape[0]

    def params(self):
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def copy(self):
        return Network(*(p.copy() for p in self.params().values()), self.grid, self.config)

    def to_dict(self):
        out = {"config": asdict(self.config), "grid": self.grid.levels.tolist()}
        for name, p in self.params().items():
            out[name] = {"shape": list(p.shape), "data": p.ravel().tolist()}
        return out

    @classmethod
    def from_dict(cls, d):
        params = [np.asarray(d[name]["data"], dtype=float).reshape(d[name]["shape"])
                  for name in PARAM_NAMES]
        return cls(*params, QuantileGrid(np.asarray(d["grid"])), NetConfig(**d["config"]))


@dataclass(eq=False)
class QuantileEstimates:
    """Predicted quantile values, shape ``(101,)`` or ``(n, 101)``, non-decreasing."""

    values: np.ndarray
    grid: QuantileGrid

    def __len__(self):
        return 1 if self.values.ndim == 1 else self.values.shape[0]


def _streams(seed):
    """Independent generators for initialisation, batch shuffling and dropout."""
    init, shuffle, dropout = np.random.SeedSequence(seed).spawn(3)
    return np.random.default_rng(init), shuffle, np.random.default_rng(dropout)


def init_network(input_dim, grid: QuantileGrid | None = None,
                 config: NetConfig | None = None) -> Network:
    """He-normal weights drawn from ``config.seed``, zero biases."""
    if input_dim < 1:
        raise ValueError("input_dim must be at least 1")
    grid = grid or QuantileGrid()
    config = config or NetConfig()
    rng, _, _ = _streams(config.seed)
    h = config.hidden_units
    W1 = rng.normal(0.0, np.sqrt(2.0 / input_dim), size=(input_dim, h))
    W2 = rng.normal(0.0, np.sqrt(2.0 / h), size=(h, len(grid)))
    return Network(W1, np.zeros(h), W2, np.zeros(len(grid)), grid, config)


def dropout_mask(shape, rate, rng):
    """Inverted-dropout mask: kept units are scaled by ``1 / (1 - rate)``."""
    keep = 1.0 - rate
    return (rng.random(shape) < keep) / keep


def _check_input(net, x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != net.input_dim:
        raise ValueError(f"expected {net.input_dim} features, got {x.shape[-1]}")
    return x


def forward(net: Network, x, dropout_active=False, rng=None, mask=None):
    """Raw quantile outputs for one row ``(d,)`` or a batch ``(n, d)``.

    With ``dropout_active`` a fresh inverted-dropout mask is drawn from
    ``rng``; an explicit ``mask`` (already scaled) overrides that.
    """
    x = _check_input(net, x)
    h = np.maximum(x @ net.W1 + net.b1, 0.0)
    if mask is not None:
        h = h * mask
    elif dropout_active and net.config.dropout_rate > 0:
        if rng is None:
            raise ValueError("dropout_active needs an rng")
        h = h * dropout_mask(h.shape, net.config.dropout_rate, rng)
    return h @ net.W2 + net.b2


def pinball_loss(pred, y, grid: QuantileGrid | None = None):
    """Mean pinball loss over the quantile levels, averaged over rows.

    ``pred`` has shape ``(101,)`` or ``(n, 101)``; ``y`` is a scalar or ``(n,)``.
    """
    levels = (grid or QuantileGrid()).levels
    pred = np.asarray(pred, dtype=float)
    u = np.asarray(y, dtype=float)[..., None] - pred
    loss = u * (levels - (u < 0))
    return float(loss.mean())


def loss_and_grad(net: Network, X, y, mask=None):
    """Pinball loss of a batch and its gradient with respect to every parameter.

    ``mask`` is an optional scaled dropout mask of shape ``(n, hidden_units)``.
    """
    X = np.atleast_2d(_check_input(net, X))
    y = np.asarray(y, dtype=float).reshape(-1)
    n = X.shape[0]
    levels = net.grid.levels

    z = X @ net.W1 + net.b1
    h = np.maximum(z, 0.0)
    hd = h if mask is None else h * mask
    out = hd @ net.W2 + net.b2

    u = y[:, None] - out
    below = u < 0
    loss = float((u * (levels - below)).mean())

    # d loss / d out for the mean over n rows and Q levels
    d_out = (below - levels) / (n * len(levels))
    d_hd = d_out @ net.W2.T
    d_h = d_hd if mask is None else d_hd * mask
    d_z = d_h * (z > 0)
    grads = {
        "W1": X.T @ d_z,
        "b1": d_z.sum(axis=0),
        "W2": hd.T @ d_out,
        "b2": d_out.sum(axis=0),
    }
    return loss, grads


def train(X, y, grid: QuantileGrid | None = None, config: NetConfig | None = None,
          callback=None) -> Network:
    """Fit a network on standardized features ``X`` and targets ``y``.

    Each epoch visits the rows in a fresh shuffled order (the last partial
    batch is kept) and applies one Adam step per mini-batch with dropout
    active. ``callback(epoch, mean_loss)`` is invoked after every epoch.

    Raises
    ------
    TrainingDiverged
        If a batch loss becomes non-finite.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).reshape(-1)
    if X.shape[0] == 0:
        raise ValueError("training set is empty")
    if X.shape[0] != y.shape[0]:
        raise ValueError("X and y have different numbers of rows")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("training data contain non-finite values")

    config = config or NetConfig()
    net = init_network(X.shape[1], grid, config)
    _, shuffle_seq, drop_rng = _streams(config.seed)
    epoch_seqs = shuffle_seq.spawn(config.epochs)

    params = net.params()
    m = {k: np.zeros_like(v) for k, v in params.items()}
    v = {k: np.zeros_like(p) for k, p in params.items()}
    lr = config.learning_rate
    step = 0
    n = X.shape[0]
    for epoch in range(config.epochs):
        order = np.random.default_rng(epoch_seqs[epoch]).permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            mask = None
            if config.dropout_rate > 0:
                mask = dropout_mask((idx.size, config.hidden_units), config.dropout_rate, drop_rng)
            loss, grads = loss_and_grad(net, X[idx], y[idx], mask)
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, step {step}; "
                    "lower the learning rate or check the inputs")
            step += 1
            total += loss * idx.size
            c1 = 1 - ADAM_BETA1 ** step
            c2 = 1 - ADAM_BETA2 ** step
            for k, p in params.items():
                g = grads[k]
                m[k] = ADAM_BETA1 * m[k] + (1 - ADAM_BETA1) * g
                v[k] = ADAM_BETA2 * v[k] + (1 - ADAM_BETA2) * g * g
                p -= lr * (m[k] / c1) / (np.sqrt(v[k] / c2) + ADAM_EPS)
        if callback is not None:
            callback(epoch, total / n)
    return net


def _mc_mean(net: Network, X, keep_counts, mc_samples):
    # The output layer is affine, so the mean over passes only needs the
    # mean dropout mask: how often each hidden unit survived.
    h = np.maximum(X @ net.W1 + net.b1, 0.0)
    keep = 1.0 - net.config.dropout_rate
    return (h * (keep_counts / (mc_samples * keep))) @ net.W2 + net.b2


def mc_predict(net: Network, X, mc_samples=None, seed=0) -> QuantileEstimates:
    """Monte-Carlo dropout quantile estimates, sorted along the quantile axis.

    The mean of ``mc_samples`` dropout passes is taken per quantile output
    and the result is then sorted so quantiles never cross. Per-unit survival
    counts are drawn as binomials, which has exactly the distribution of
    summing that many independent Bernoulli masks.
    """
    mc_samples = net.config.mc_samples if mc_samples is None else mc_samples
    if mc_samples < 1:
        raise ValueError("mc_samples must be at least 1")
    x = _check_input(net, X)
    X2 = np.atleast_2d(x)
    keep = 1.0 - net.config.dropout_rate
    rng = np.random.default_rng(seed)
    counts = rng.binomial(mc_samples, keep, size=(X2.shape[0], net.config.hidden_units))
    out = np.sort(_mc_mean(net, X2, counts, mc_samples), axis=1)
    return QuantileEstimates(out[0] if x.ndim == 1 else out, net.grid)
