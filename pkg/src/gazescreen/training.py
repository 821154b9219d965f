"""Training loop: Adam optimization, early stopping, deterministic seeding.

Given one seed, a training run is bitwise reproducible: initialization,
shuffling, dropout, and the validation split all draw from a single
generator in a fixed order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import layers, network
from .network import ModelParams, ModelSpec


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 32
    epochs: int = 100
    patience: int = 10
    val_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size <= 0:
            raise ValueError("learning_rate and batch_size must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1 and self.epsilon > 0):
            raise ValueError("invalid Adam coefficients")
        if self.epochs < 0 or self.patience < 0:
            raise ValueError("epochs and patience must be nonnegative")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in [0, 1)")


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(
    params: ModelParams,
    grads: ModelParams,
    state: AdamState,
    config: TrainConfig,
) -> tuple[ModelParams, AdamState]:
    """One bias-corrected Adam update, in place; returns (params, state)."""
    state.t += 1
    t = state.t
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient in {name}")
        m = state.m.setdefault(name, np.zeros_like(g))
        v = state.v.setdefault(name, np.zeros_like(g))
        m += (1.0 - config.beta1) * (g - m)
        v += (1.0 - config.beta2) * (g * g - v)
        m_hat = m / (1.0 - config.beta1**t)
        v_hat = v / (1.0 - config.beta2**t)
        params[name] -= config.learning_rate * m_hat / (np.sqrt(v_hat) + config.epsilon)
    return params, state


def _batch_loss_and_dlogit(
    logit: np.ndarray, y: np.ndarray, objective: str
) -> tuple[float, np.ndarray]:
    if objective == "bce":
        p = layers.sigmoid_forward(logit)
        # Fused sigmoid + cross-entropy gradient; numerically stable.
        return layers.bce_loss(p, y), (p - y) / y.shape[0]
    return layers.mse_loss(logit, y), layers.mse_loss_grad(logit, y)


def _eval_loss(
    spec: ModelSpec, params: ModelParams, x: np.ndarray, y: np.ndarray, objective: str
) -> float:
    logit = network.logits(spec, params, x)
    if objective == "bce":
        return layers.bce_loss(layers.sigmoid_forward(logit), y)
    return layers.mse_loss(logit, y)


def train(
    spec: ModelSpec,
    x: np.ndarray,
    y: np.ndarray,
    config: TrainConfig,
    objective: str | None = None,
    params: ModelParams | None = None,
) -> tuple[ModelParams, dict[str, list[float]]]:
    """Train (or fine-tune, when ``params`` is given) and return loss history.

    The objective defaults to the one matching the head: binary cross-entropy
    for sigmoid, mean squared error for linear. A ``val_fraction`` slice of
    the data is held out for early stopping (patience on validation loss);
    with too little data the split is skipped and training runs all epochs.
    """
    if objective is None:
        objective = "bce" if spec.head == "sigmoid" else "mse"
    if objective not in ("bce", "mse"):
        raise ValueError(f"objective must be 'bce' or 'mse', got {objective!r}")
    if (objective == "bce") != (spec.head == "sigmoid"):
        raise ValueError(f"objective {objective!r} does not match head {spec.head!r}")
    n = x.shape[0]
    if n == 0:
        raise ValueError("training set is empty")

    rng = np.random.default_rng(config.seed)
    if params is None:
        params = network.init_params(spec, rng)
    else:
        network.check_shapes(spec, params)
        params = network.clone_params(params)

    n_val = int(np.floor(config.val_fraction * n))
    if n_val >= 1 and n - n_val >= 2:
        order = rng.permutation(n)
        val_idx, train_idx = order[:n_val], order[n_val:]
    else:
        val_idx, train_idx = np.array([], dtype=int), np.arange(n)
    x_train, y_train = x[train_idx], y[train_idx]
    x_val, y_val = x[val_idx], y[val_idx]

    if len(x_train) < 2:
        raise ValueError(
            "training needs at least 2 examples (batch normalization statistics); "
            "duplicate the example for single-instance sanity checks"
        )

    history: dict[str, list[float]] = {"train_loss": [], "val_loss": []}
    state = AdamState()
    best_val = np.inf
    best_params = network.clone_params(params)
    stale = 0

    for _ in range(config.epochs):
        order = rng.permutation(len(x_train))
        batches = [
            order[start : start + config.batch_size]
            for start in range(0, len(order), config.batch_size)
        ]
        # A trailing singleton batch would break training-mode batch norm.
        if len(batches) > 1 and len(batches[-1]) == 1:
            batches[-2] = np.concatenate([batches[-2], batches[-1]])
            batches.pop()

        epoch_loss = 0.0
        for idx in batches:
            logit, cache = network.forward(
                spec, params, x_train[idx], training=True, rng=rng
            )
            loss, dlogit = _batch_loss_and_dlogit(logit, y_train[idx], objective)
            grads, _ = network.backward(spec, params, cache, dlogit)
            adam_step(params, grads, state, config)
            epoch_loss += loss * len(idx)
        history["train_loss"].append(epoch_loss / len(x_train))

        if len(x_val) > 0:
            val_loss = _eval_loss(spec, params, x_val, y_val, objective)
            history["val_loss"].append(val_loss)
            if val_loss < best_val:
                best_val = val_loss
                best_params = network.clone_params(params)
                stale = 0
            else:
                stale += 1
                if stale >= config.patience:
                    return best_params, history
        else:
            history["val_loss"].append(float("nan"))

    if len(x_val) > 0 and np.isfinite(best_val):
        return best_params, history
    return params, history
