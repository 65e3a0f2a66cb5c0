"""Training loss: weighted reconstruction/KL terms plus contrastive alignment.

The responsive-block KL is evaluated in noise coordinates. Both the
posterior and the conditional prior push a diagonal Gaussian through the
same unit-determinant triangular map, and KL divergence is invariant under
a shared invertible transform, so the divergence of the pushforwards equals
the divergence of the base distributions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import DegenerateInputError


@dataclass(frozen=True)
class LossWeights:
    beta_nu: float
    beta_iota: float
    alpha: float

    def validate(self) -> None:
        if min(self.beta_nu, self.beta_iota, self.alpha) < 0:
            raise DegenerateInputError("loss weights must be nonnegative")


@dataclass(frozen=True)
class LossBreakdown:
    rec: float
    kl_nu: float
    kl_iota: float
    contrast: float
    total: float
    weights_used: LossWeights

    def is_finite(self) -> bool:
        return all(
            np.isfinite(v) for v in (self.rec, self.kl_nu, self.kl_iota, self.contrast, self.total)
        )


@dataclass(frozen=True)
class ScheduleConfig:
    """Linear warm-up of the KL weights over the first fraction of epochs;
    the alignment weight stays at its target throughout."""

    target: LossWeights
    epochs: int
    warmup_frac: float = 0.1


def recon_loss(x: np.ndarray, x_hat: np.ndarray) -> float:
    """Mean over the batch of the squared Euclidean reconstruction error."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    x_hat = np.atleast_2d(np.asarray(x_hat, dtype=float))
    if x.shape != x_hat.shape:
        raise DegenerateInputError(f"shape mismatch: {x.shape} vs {x_hat.shape}")
    return float(np.mean(np.sum((x - x_hat) ** 2, axis=1)))


def _kl_to_unit_var(mu_q: np.ndarray, var_q: np.ndarray, mu_p: np.ndarray) -> np.ndarray:
    """Row-wise KL(N(mu_q, var_q) || N(mu_p, I)) for batched diagonal stats."""
    if np.any(var_q <= 0):
        raise DegenerateInputError("variances must be strictly positive")
    return 0.5 * np.sum(var_q + (mu_p - mu_q) ** 2 - 1.0 - np.log(var_q), axis=1)


def kl_nu(mu_base: np.ndarray, var_base: np.ndarray, noise_mean: np.ndarray) -> float:
    """Noise-space KL of the responsive block against its conditional prior.

    ``noise_mean`` is the condition-mapped prior noise mean; the prior noise
    variance is fixed at one. Batch inputs reduce by the arithmetic mean.
    """
    mu_base = np.atleast_2d(np.asarray(mu_base, dtype=float))
    var_base = np.atleast_2d(np.asarray(var_base, dtype=float))
    noise_mean = np.atleast_2d(np.asarray(noise_mean, dtype=float))
    return float(np.mean(_kl_to_unit_var(mu_base, var_base, noise_mean)))


def kl_iota(
    mu_1: np.ndarray, var_1: np.ndarray, mu_2: np.ndarray, var_2: np.ndarray
) -> float:
    """Sum of the closed-form KLs of both invariant posteriors against the
    standard normal prior, batch-averaged."""
    mu_1 = np.atleast_2d(np.asarray(mu_1, dtype=float))
    var_1 = np.atleast_2d(np.asarray(var_1, dtype=float))
    mu_2 = np.atleast_2d(np.asarray(mu_2, dtype=float))
    var_2 = np.atleast_2d(np.asarray(var_2, dtype=float))
    zeros = np.zeros_like(mu_1)
    per_row = _kl_to_unit_var(mu_1, var_1, zeros) + _kl_to_unit_var(mu_2, var_2, zeros)
    return float(np.mean(per_row))


def contrast_loss(mu_iota_x: np.ndarray, mu_iota_ctrl: np.ndarray) -> float:
    """Mean squared distance between the invariant posterior means of a
    sample and its paired control."""
    a = np.atleast_2d(np.asarray(mu_iota_x, dtype=float))
    b = np.atleast_2d(np.asarray(mu_iota_ctrl, dtype=float))
    if a.shape != b.shape:
        raise DegenerateInputError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.mean(np.sum((a - b) ** 2, axis=1)))


def schedule(epoch: int, config: ScheduleConfig) -> LossWeights:
    """Weights for a given epoch under the configured warm-up."""
    if epoch < 0:
        raise DegenerateInputError("epoch must be nonnegative")
    warmup = config.warmup_frac * config.epochs
    if warmup <= 0:
        frac = 1.0
    else:
        frac = min(1.0, epoch / warmup)
    return LossWeights(
        beta_nu=frac * config.target.beta_nu,
        beta_iota=frac * config.target.beta_iota,
        alpha=config.target.alpha,
    )


def total_loss(
    rec: float, kl_nu_val: float, kl_iota_val: float, contrast: float, weights: LossWeights
) -> LossBreakdown:
    weights.validate()
    components = (rec, kl_nu_val, kl_iota_val, contrast)
    if not all(np.isfinite(v) for v in components):
        raise FloatingPointError(f"non-finite loss component: {components}")
    total = (
        rec
        + weights.beta_nu * kl_nu_val
        + weights.beta_iota * kl_iota_val
        + weights.alpha * contrast
    )
    return LossBreakdown(
        rec=float(rec),
        kl_nu=float(kl_nu_val),
        kl_iota=float(kl_iota_val),
        contrast=float(contrast),
        total=float(total),
        weights_used=weights,
    )
