"""Adam training loop with control pairing, seeding, and checkpointing.

A run is a pure function of the dataset bytes, the configs, and the seed:
shuffling, pairing, initialization, and reparameterization noise each come
from their own named substream of one counter-based source.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Any, Callable

import numpy as np

from .model import (
    ModelConfig,
    ModelParams,
    init_params,
    loss_and_grads,
    zeros_like_params,
)
from .numerics import DegenerateInputError, RngStream
from .objective import LossBreakdown, LossWeights, ScheduleConfig, schedule


class TrainingDiverged(RuntimeError):
    """Raised when the loss goes non-finite; carries the last good state."""

    def __init__(self, message: str, params: ModelParams, history: list[dict[str, float]]):
        super().__init__(message)
        self.params = params
        self.history = history


@dataclass
class TrainConfig:
    batch_size: int = 64
    epochs: int = 100
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    weights: LossWeights = field(
        default_factory=lambda: LossWeights(beta_nu=1.5e-5, beta_iota=5e-4, alpha=0.1)
    )
    warmup_frac: float = 0.1
    align_on_samples: bool = False
    checkpoint_every: int = 0  # 0: no intermediate checkpoints

    def validate(self) -> None:
        if self.batch_size < 1:
            raise DegenerateInputError("batch_size must be at least 1")
        if self.learning_rate <= 0:
            raise DegenerateInputError("learning_rate must be positive")

    @classmethod
    def simulation(cls, seed: int = 0, alpha: float = 0.1) -> "TrainConfig":
        return cls(
            learning_rate=1e-3,
            weights=LossWeights(beta_nu=1.5e-5, beta_iota=5e-4, alpha=alpha),
            seed=seed,
        )

    @classmethod
    def real_protocol(cls, seed: int = 0, alpha: float = 0.05) -> "TrainConfig":
        return cls(
            learning_rate=1e-4,
            weights=LossWeights(beta_nu=1e-2, beta_iota=1e-2, alpha=alpha),
            seed=seed,
        )

    def to_json_dict(self) -> dict[str, Any]:
        doc = asdict(self)
        doc["weights"] = {
            "beta_nu": self.weights.beta_nu,
            "beta_iota": self.weights.beta_iota,
            "alpha": self.weights.alpha,
        }
        return doc

    @classmethod
    def from_json_dict(cls, doc: dict[str, Any]) -> "TrainConfig":
        doc = dict(doc)
        doc["weights"] = LossWeights(**doc["weights"])
        return cls(**doc)


@dataclass
class AdamState:
    m: ModelParams
    v: ModelParams
    step: int = 0

    @classmethod
    def zeros(cls, params: ModelParams) -> "AdamState":
        return cls(m=zeros_like_params(params), v=zeros_like_params(params), step=0)


def adam_step(
    params: ModelParams,
    grads: ModelParams,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """In-place bias-corrected Adam update."""
    state.step += 1
    t = state.step
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient in group {name}")
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1 - beta1) * g
        v *= beta2
        v += (1 - beta2) * g * g
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        params[name] -= lr * m_hat / (np.sqrt(v_hat) + eps)


def pair_controls(
    batch_size: int, control_rows: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Uniform with-replacement control index per batch item."""
    control_rows = np.asarray(control_rows)
    if control_rows.size == 0:
        raise DegenerateInputError("empty control pool")
    picks = rng.integers(0, control_rows.size, size=batch_size)
    return control_rows[picks]


@dataclass
class TrainInputs:
    """Minimal training view of a dataset: observations, condition vectors,
    and the indices of the unperturbed rows."""

    x: np.ndarray
    u: np.ndarray
    control_rows: np.ndarray


def train(
    data: TrainInputs,
    model_config: ModelConfig,
    train_config: TrainConfig,
    progress: Callable[[dict[str, Any]], None] | None = None,
    checkpoint_writer: Callable[[int, ModelParams, AdamState], None] | None = None,
) -> tuple[ModelParams, list[dict[str, float]]]:
    """Optimize the model; returns (params, per-epoch history).

    History rows carry the mean loss components of each epoch plus the
    scheduled weights. Divergence aborts with the last finished epoch's
    parameters attached to the exception.
    """
    train_config.validate()
    model_config.validate()
    if data.control_rows.size == 0:
        raise DegenerateInputError("dataset has no control rows")
    n = data.x.shape[0]

    rng = RngStream(train_config.seed)
    params = init_params(model_config, rng.stream("init"))
    adam = AdamState.zeros(params)
    data_stream = rng.stream("data")
    pair_stream = rng.stream("pairing")
    reparam_stream = rng.stream("reparameterization")
    sched = ScheduleConfig(
        target=train_config.weights,
        epochs=train_config.epochs,
        warmup_frac=train_config.warmup_frac,
    )

    history: list[dict[str, float]] = []
    last_good = {k: v.copy() for k, v in params.items()}
    n_batches = max(1, math.ceil(n / train_config.batch_size))
    for epoch in range(train_config.epochs):
        weights = schedule(epoch, sched)
        order = data_stream.permutation(n)
        sums = {"rec": 0.0, "kl_nu": 0.0, "kl_iota": 0.0, "contrast": 0.0, "total": 0.0}
        for start in range(0, n, train_config.batch_size):
            batch = order[start : start + train_config.batch_size]
            ctrl = pair_controls(batch.size, data.control_rows, pair_stream)
            eps = (
                reparam_stream.standard_normal((batch.size, model_config.d_nu)),
                reparam_stream.standard_normal((batch.size, model_config.d_iota)),
                reparam_stream.standard_normal((batch.size, model_config.d_iota)),
            )
            try:
                breakdown, grads = loss_and_grads(
                    params,
                    model_config,
                    data.x[batch],
                    data.x[ctrl],
                    data.u[batch],
                    eps,
                    weights,
                    align_on_samples=train_config.align_on_samples,
                )
                if not breakdown.is_finite():
                    raise FloatingPointError("non-finite loss")
                adam_step(
                    params,
                    grads,
                    adam,
                    lr=train_config.learning_rate,
                    beta1=train_config.adam_beta1,
                    beta2=train_config.adam_beta2,
                    eps=train_config.adam_eps,
                )
            except FloatingPointError as exc:
                raise TrainingDiverged(
                    f"training diverged at epoch {epoch}: {exc}", last_good, history
                ) from exc
            for key in ("rec", "kl_nu", "kl_iota", "contrast", "total"):
                sums[key] += getattr(breakdown, key)
        row = {
            "epoch": float(epoch),
            **{k: v / n_batches for k, v in sums.items()},
            "beta_nu": weights.beta_nu,
            "beta_iota": weights.beta_iota,
            "alpha": weights.alpha,
        }
        history.append(row)
        last_good = {k: v.copy() for k, v in params.items()}
        if progress is not None:
            progress(row)
        if (
            checkpoint_writer is not None
            and train_config.checkpoint_every > 0
            and (epoch + 1) % train_config.checkpoint_every == 0
        ):
            checkpoint_writer(epoch, params, adam)
    return params, history


HISTORY_COLUMNS = [
    "epoch",
    "rec",
    "kl_nu",
    "kl_iota",
    "contrast",
    "total",
    "beta_nu",
    "beta_iota",
    "alpha",
]


def history_to_csv(history: list[dict[str, float]]) -> str:
    lines = [",".join(HISTORY_COLUMNS)]
    for row in history:
        lines.append(",".join(repr(row[c]) for c in HISTORY_COLUMNS))
    return "\n".join(lines) + "\n"
