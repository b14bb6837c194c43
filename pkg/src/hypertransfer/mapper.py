"""Rank-aligned pairing and the learned config-to-config transfer function.

The transfer function g maps unit configs of the source task to unit
configs of the target task.  Its training set pairs two Latin hypercube
sample arrays by rank: one array sorted by the source surrogate's predicted
value, the other by the target surrogate's.  Same-rank pairs have perfectly
correlated predicted errors by construction, so driving down the mean
squared distance between g(input) and the same-rank target pulls the
surrogate values of g's outputs into alignment with the source values --
without ever differentiating through a correlation of two surrogates.

g itself is a one-hidden-layer network, sigmoid throughout, with hidden
width 20k for k axes.  The sigmoid output layer confines outputs to the
unit cube, so mapped configs can always be denormalized into the box.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np
from scipy.special import expit
from scipy.stats import rankdata

from .sampling import latin_hypercube
from .surrogate import RbfSurrogate

HIDDEN_PER_AXIS = 20

# Largest double below 1; forward outputs are clamped into
# [tiny, 1 - 2^-53] so saturation can never emit an exact 0 or 1.
_ONE_BELOW = 1.0 - 2.0**-53


class ZeroVarianceError(ValueError):
    """Pearson correlation is undefined for a constant sequence."""


class TrainingDivergedError(RuntimeError):
    """Raised when the training loss becomes non-finite."""

    def __init__(self, epoch: int):
        super().__init__(f"non-finite loss at epoch {epoch}")
        self.epoch = epoch


@dataclass(frozen=True)
class RankPairDataset:
    """Same-rank (input, target) unit-config pairs, the mapper training set.

    inputs[i] has the i-th smallest source-surrogate value of its batch and
    targets[i] the i-th smallest target-surrogate value of its own batch.
    """

    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        targets = np.atleast_2d(np.asarray(self.targets, dtype=float))
        if inputs.shape != targets.shape:
            raise ValueError(
                f"inputs {inputs.shape} and targets {targets.shape} differ"
            )
        inputs.setflags(write=False)
        targets.setflags(write=False)
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "targets", targets)

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def k(self) -> int:
        return self.inputs.shape[1]


def build_rank_pairs(
    surr_source: RbfSurrogate,
    surr_target: RbfSurrogate,
    n: int,
    seed: int | np.random.SeedSequence,
    batches: tuple[np.ndarray, np.ndarray] | None = None,
) -> RankPairDataset:
    """Draw two independent LHS batches of size n and pair them by rank.

    Batch A is sorted ascending by the source surrogate's prediction, batch
    B by the target surrogate's; ties break by sample index (stable sort),
    so the pairing depends on predicted values only through their ordering.
    Deterministic given the seed.

    ``batches`` overrides the two draws; it exists so tests can force both
    arrays identical (with equal surrogates the pairing is then exactly
    the identity).
    """
    if surr_source.k != surr_target.k:
        raise ValueError(
            f"surrogate dimensions differ: {surr_source.k} vs {surr_target.k}"
        )
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if batches is None:
        child_a, child_b = np.random.SeedSequence(seed).spawn(2)
        batch_a = latin_hypercube(n, surr_source.k, np.random.default_rng(child_a))
        batch_b = latin_hypercube(n, surr_source.k, np.random.default_rng(child_b))
    else:
        batch_a = np.atleast_2d(np.asarray(batches[0], dtype=float))
        batch_b = np.atleast_2d(np.asarray(batches[1], dtype=float))
    order_a = np.argsort(surr_source.predict_batch(batch_a), kind="stable")
    order_b = np.argsort(surr_target.predict_batch(batch_b), kind="stable")
    return RankPairDataset(inputs=batch_a[order_a], targets=batch_b[order_b])


@dataclass(frozen=True)
class MapperNetwork:
    """Parameters of the transfer function g.

    One hidden layer of width h = 20k, sigmoid activations on both layers:
    g(u) = sigmoid(W2 sigmoid(W1 u + b1) + b2).
    """

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        for name in ("W1", "b1", "W2", "b2"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        h, k = self.W1.shape
        if self.b1.shape != (h,):
            raise ValueError(f"b1 must have shape ({h},)")
        if self.W2.shape != (k, h):
            raise ValueError(f"W2 must have shape ({k}, {h})")
        if self.b2.shape != (k,):
            raise ValueError(f"b2 must have shape ({k},)")
        for name in ("W1", "b1", "W2", "b2"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} contains non-finite values")

    @property
    def k(self) -> int:
        return self.W1.shape[1]

    @property
    def hidden(self) -> int:
        return self.W1.shape[0]

    @classmethod
    def initialize(cls, k: int, rng: np.random.Generator,
                   hidden: int | None = None) -> MapperNetwork:
        """Seeded uniform init, each layer within +/- 1/sqrt(fan-in)."""
        h = HIDDEN_PER_AXIS * k if hidden is None else hidden
        s1, s2 = 1.0 / np.sqrt(k), 1.0 / np.sqrt(h)
        return cls(
            W1=rng.uniform(-s1, s1, size=(h, k)),
            b1=rng.uniform(-s1, s1, size=h),
            W2=rng.uniform(-s2, s2, size=(k, h)),
            b2=rng.uniform(-s2, s2, size=k),
        )

    def _hidden_out(self, batch: np.ndarray) -> np.ndarray:
        return expit(batch @ self.W1.T + self.b1)

    def forward_batch(self, batch: np.ndarray) -> np.ndarray:
        """Map an (m, k) batch of unit configs; rows strictly inside (0,1)^k."""
        batch = np.atleast_2d(np.asarray(batch, dtype=float))
        if batch.shape[1] != self.k:
            raise ValueError(f"expected {self.k} columns, got {batch.shape[1]}")
        out = expit(self._hidden_out(batch) @ self.W2.T + self.b2)
        # expit underflows to exactly 0.0 / 1.0 for |z| beyond ~745; clamp so
        # the open-interval contract survives saturated parameters.
        return np.clip(out, np.finfo(float).tiny, _ONE_BELOW)

    def forward(self, unit: np.ndarray) -> np.ndarray:
        """Map one unit config through g."""
        unit = np.asarray(unit, dtype=float)
        if unit.shape != (self.k,):
            raise ValueError(f"expected a vector of length {self.k}, "
                             f"got shape {unit.shape}")
        return self.forward_batch(unit[None, :])[0]

    def save(self, path) -> None:
        """Flat text serialization: 'k h' header, then W1, b1, W2, b2 blocks
        (one row per line), full float precision."""
        with open(path, "w") as fh:
            fh.write(f"{self.k} {self.hidden}\n")
            for block in (self.W1, np.atleast_2d(self.b1),
                          self.W2, np.atleast_2d(self.b2)):
                for row in block:
                    fh.write(" ".join(repr(float(v)) for v in row) + "\n")

    @classmethod
    def load(cls, path) -> MapperNetwork:
        with open(path) as fh:
            k, h = (int(v) for v in fh.readline().split())
            rows = [np.array([float(v) for v in line.split()])
                    for line in fh if line.strip()]
        if len(rows) != h + k + 2:
            raise ValueError(
                f"{path}: expected {h + k + 2} parameter rows, got {len(rows)}"
            )
        return cls(
            W1=np.vstack(rows[:h]),
            b1=rows[h],
            W2=np.vstack(rows[h + 1:h + 1 + k]),
            b2=rows[h + 1 + k],
        )


@dataclass(frozen=True)
class MapperGradients:
    """Gradients of the batch-mean MSE with respect to each parameter."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray


def _raw_forward(w1, b1, w2, b2, batch):
    hidden = expit(batch @ w1.T + b1)
    return hidden, expit(hidden @ w2.T + b2)


def _raw_backprop(w1, b1, w2, b2, inputs, targets):
    """Gradients of batch-mean MSE; returns (dW1, db1, dW2, db2)."""
    m = inputs.shape[0]
    hidden, out = _raw_forward(w1, b1, w2, b2, inputs)
    d_z2 = (2.0 * (out - targets) / m) * out * (1.0 - out)
    d_z1 = (d_z2 @ w2) * hidden * (1.0 - hidden)
    return (d_z1.T @ inputs, d_z1.sum(axis=0),
            d_z2.T @ hidden, d_z2.sum(axis=0))


def _raw_mse(w1, b1, w2, b2, inputs, targets):
    diff = _raw_forward(w1, b1, w2, b2, inputs)[1] - targets
    return float(np.sum(diff * diff) / diff.shape[0])


def mse_loss(net: MapperNetwork, inputs: np.ndarray,
             targets: np.ndarray) -> float:
    """Mean over the batch of the squared Euclidean output error."""
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    return _raw_mse(net.W1, net.b1, net.W2, net.b2, inputs, targets)


def gradient(net: MapperNetwork, inputs: np.ndarray,
             targets: np.ndarray) -> MapperGradients:
    """Exact backpropagated gradients of ``mse_loss`` over the batch.

    Duplicating every pair leaves the gradient unchanged (the loss is a
    batch mean).
    """
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    if inputs.shape != targets.shape or inputs.shape[1] != net.k:
        raise ValueError(
            f"batch shapes {inputs.shape} / {targets.shape} do not match a "
            f"k = {net.k} network"
        )
    d_w1, d_b1, d_w2, d_b2 = _raw_backprop(
        net.W1, net.b1, net.W2, net.b2, inputs, targets
    )
    return MapperGradients(W1=d_w1, b1=d_b1, W2=d_w2, b2=d_b2)


@dataclass(frozen=True)
class TrainSettings:
    """Optimizer knobs for fitting the transfer function.

    Defaults are sized so the identity map trains to holdout MSE below 1e-3
    at k = 8 within seconds.
    """

    learning_rate: float = 0.1
    momentum: float = 0.9
    batch_size: int = 64
    max_epochs: int = 500
    patience: int = 25
    holdout_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 < self.momentum < 1.0:
            raise ValueError("momentum must be in (0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.max_epochs < 0:
            raise ValueError("max_epochs must be >= 0")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if not 0.0 < self.holdout_fraction < 0.5:
            raise ValueError("holdout_fraction must be in (0, 0.5)")


def train(data: RankPairDataset, settings: TrainSettings) -> MapperNetwork:
    """Fit g by mini-batch gradient descent with momentum.

    Trains on a (1 - holdout) split, evaluates holdout MSE after every
    epoch, and stops once the holdout has not improved for
    ``settings.patience`` epochs (or at ``max_epochs``).  Returns the
    parameters that achieved the best holdout MSE.  Deterministic given
    the settings seed; with max_epochs = 0 the freshly initialized network
    is returned unchanged.
    """
    n = len(data)
    if n < 10:
        raise ValueError(f"need at least 10 rank pairs to train, got {n}")
    rng = np.random.default_rng(settings.seed)
    net = MapperNetwork.initialize(data.k, rng)
    if settings.max_epochs == 0:
        return net

    order = rng.permutation(n)
    n_hold = max(1, int(round(n * settings.holdout_fraction)))
    hold_x = data.inputs[order[:n_hold]]
    hold_t = data.targets[order[:n_hold]]
    train_x = data.inputs[order[n_hold:]]
    train_t = data.targets[order[n_hold:]]
    n_train = train_x.shape[0]

    params = [net.W1.copy(), net.b1.copy(), net.W2.copy(), net.b2.copy()]
    velocity = [np.zeros_like(p) for p in params]

    best = [p.copy() for p in params]
    best_mse = _raw_mse(*params, hold_x, hold_t)
    stale = 0
    for epoch in range(settings.max_epochs):
        perm = rng.permutation(n_train)
        for start in range(0, n_train, settings.batch_size):
            idx = perm[start:start + settings.batch_size]
            grads = _raw_backprop(*params, train_x[idx], train_t[idx])
            for p, v, g in zip(params, velocity, grads):
                v *= settings.momentum
                v -= settings.learning_rate * g
                p += v
        mse = _raw_mse(*params, hold_x, hold_t)
        if not np.isfinite(mse):
            raise TrainingDivergedError(epoch)
        if mse < best_mse:
            best_mse = mse
            best = [p.copy() for p in params]
            stale = 0
        else:
            stale += 1
            if stale >= settings.patience:
                break
    return MapperNetwork(W1=best[0], b1=best[1], W2=best[2], b2=best[3])


def correlation(a: np.ndarray, b: np.ndarray,
                kind: Literal["pearson", "spearman"] = "pearson") -> float:
    """Pearson or Spearman (rank) correlation of two equal-length vectors.

    Used for diagnostics and acceptance checks only; the training loss never
    touches it.  Raises :class:`ZeroVarianceError` for a constant input,
    which Pearson cannot normalize.
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")
    if a.shape[0] < 2:
        raise ValueError("need at least two values")
    if kind == "spearman":
        a, b = rankdata(a), rankdata(b)
    elif kind != "pearson":
        raise ValueError(f"unknown correlation kind {kind!r}")
    a_c = a - a.mean()
    b_c = b - b.mean()
    denom = np.sqrt(np.sum(a_c * a_c) * np.sum(b_c * b_c))
    if denom == 0.0:
        raise ZeroVarianceError(f"{kind} correlation of a constant sequence")
    return float(np.clip(np.dot(a_c, b_c) / denom, -1.0, 1.0))
