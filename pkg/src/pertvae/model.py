"""Encoder, condition-mapped structural reparameterization, and decoder.

Parameters live in a flat name-to-array dict so the optimizer, the
checkpoint format, and the gradient checker all iterate the same groups.
Gradients are computed by hand-written reverse passes; the finite-difference
checker in :mod:`pertvae.numerics` validates every group.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict, field
from typing import Any, Iterable

import numpy as np

from .numerics import DegenerateInputError, RngStream
from .objective import LossBreakdown, LossWeights
from . import objective

LEAKY_SLOPE = 0.01
LOGVAR_MIN, LOGVAR_MAX = -10.0, 10.0

ModelParams = dict[str, np.ndarray]


@dataclass
class ModelConfig:
    x_dim: int
    d_nu: int
    d_iota: int
    u_dim: int
    hidden_dim: int = 256
    encoder_layers: int = 2

    def validate(self) -> None:
        if min(self.d_nu, self.d_iota, self.hidden_dim, self.x_dim, self.u_dim) < 1:
            raise DegenerateInputError("all model dimensions must be positive")
        if self.encoder_layers != 2:
            raise DegenerateInputError("only the two-layer encoder is supported")

    @property
    def d_z(self) -> int:
        return self.d_nu + self.d_iota

    @property
    def n_lower(self) -> int:
        return self.d_nu * (self.d_nu - 1) // 2

    def to_json_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_json_dict(cls, doc: dict[str, Any]) -> "ModelConfig":
        return cls(**doc)


def param_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    h, dx, du = config.hidden_dim, config.x_dim, config.u_dim
    dn, di, dz = config.d_nu, config.d_iota, config.d_z
    return {
        "enc_w1": (h, dx),
        "enc_b1": (h,),
        "enc_w2": (h, h),
        "enc_b2": (h,),
        "nu_head_w": (2 * dn, h + du),
        "nu_head_b": (2 * dn,),
        "iota_head_w": (2 * di, h),
        "iota_head_b": (2 * di,),
        "cond_vv_w": (config.n_lower, du),
        "cond_vv_b": (config.n_lower,),
        "cond_vi_w": (dn * di, du),
        "cond_vi_b": (dn * di,),
        "cond_mu_w": (dn, du),
        "cond_mu_b": (dn,),
        "dec_w1": (h, dz),
        "dec_b1": (h,),
        "dec_w2": (dx, h),
        "dec_b2": (dx,),
    }


def init_params(config: ModelConfig, gen: np.random.Generator) -> ModelParams:
    """Uniform +-1/sqrt(fan_in) weights, zero biases; the condition maps start
    at exactly zero so training begins at the no-edge reference mechanism."""
    config.validate()
    params: ModelParams = {}
    for name, shape in param_shapes(config).items():
        if name.startswith("cond_") or len(shape) == 1:
            params[name] = np.zeros(shape)
        else:
            bound = 1.0 / np.sqrt(shape[1])
            params[name] = gen.uniform(-bound, bound, size=shape)
    return params


def zeros_like_params(params: ModelParams) -> ModelParams:
    return {k: np.zeros_like(v) for k, v in params.items()}


def _leaky(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, x, LEAKY_SLOPE * x)


def _leaky_grad(pre: np.ndarray) -> np.ndarray:
    return np.where(pre > 0, 1.0, LEAKY_SLOPE)


def _lower_indices(d_nu: int) -> tuple[np.ndarray, np.ndarray]:
    return np.tril_indices(d_nu, k=-1)


def _solve_batch(lam: np.ndarray, b: np.ndarray) -> np.ndarray:
    z = b.copy()
    for j in range(1, b.shape[1]):
        z[:, j] += np.einsum("nk,nk->n", lam[:, j, :j], z[:, :j])
    return z


def _solve_transpose_batch(lam: np.ndarray, g: np.ndarray) -> np.ndarray:
    s = g.copy()
    for j in range(g.shape[1] - 2, -1, -1):
        s[:, j] += np.einsum("nk,nk->n", lam[:, j + 1 :, j], s[:, j + 1 :])
    return s


# --------------------------------------------------------------------------- #
# forward pieces
# --------------------------------------------------------------------------- #


def encode(params: ModelParams, config: ModelConfig, x: np.ndarray) -> np.ndarray:
    """Deterministic feature vector from the two-layer rectified encoder."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != config.x_dim:
        raise DegenerateInputError(f"input width {x.shape[1]} != x_dim {config.x_dim}")
    if not np.all(np.isfinite(x)):
        raise DegenerateInputError("non-finite encoder input")
    h1 = _leaky(x @ params["enc_w1"].T + params["enc_b1"])
    return _leaky(h1 @ params["enc_w2"].T + params["enc_b2"])


def condition_maps(
    params: ModelParams, config: ModelConfig, u: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Affine maps from the condition vector to the structural parameters.

    Returns per-row (Lambda_vv, Lambda_vi, mu) with Lambda_vv strictly lower
    triangular by construction: the map emits only the lower entries and the
    rest are exact zeros.
    """
    u = np.atleast_2d(np.asarray(u, dtype=float))
    if u.shape[1] != config.u_dim:
        raise DegenerateInputError(f"condition width {u.shape[1]} != u_dim {config.u_dim}")
    n = u.shape[0]
    lvv = u @ params["cond_vv_w"].T + params["cond_vv_b"]
    lvi = u @ params["cond_vi_w"].T + params["cond_vi_b"]
    mu = u @ params["cond_mu_w"].T + params["cond_mu_b"]
    lam_vv = np.zeros((n, config.d_nu, config.d_nu))
    rows, cols = _lower_indices(config.d_nu)
    lam_vv[:, rows, cols] = lvv
    lam_vi = lvi.reshape(n, config.d_nu, config.d_iota)
    return lam_vv, lam_vi, mu


def reparam_structural(
    mu_base: np.ndarray,
    sigma_base: np.ndarray,
    eps: np.ndarray,
    z_iota: np.ndarray,
    lam_vv: np.ndarray,
    lam_vi: np.ndarray,
    mu_u: np.ndarray,
) -> np.ndarray:
    """Base draw plus the triangular structural transform.

    z_base = mu + sigma*eps; the responsive latent solves
    (I - Lambda_vv) z = z_base + Lambda_vi z_iota + mu(u).
    """
    z_base = mu_base + sigma_base * eps
    rhs = z_base + np.einsum("nij,nj->ni", lam_vi, z_iota) + mu_u
    return _solve_batch(lam_vv, rhs)


def decode(params: ModelParams, config: ModelConfig, z_nu: np.ndarray, z_iota: np.ndarray) -> np.ndarray:
    z = np.concatenate([np.atleast_2d(z_nu), np.atleast_2d(z_iota)], axis=1)
    g1 = _leaky(z @ params["dec_w1"].T + params["dec_b1"])
    return g1 @ params["dec_w2"].T + params["dec_b2"]


@dataclass
class ForwardOutput:
    """Posterior statistics, sampled latents, and the reconstruction."""

    mu_nu_base: np.ndarray
    logvar_nu: np.ndarray
    mu_iota_1: np.ndarray
    logvar_iota_1: np.ndarray
    mu_iota_2: np.ndarray
    logvar_iota_2: np.ndarray
    z_tilde_nu: np.ndarray
    z_nu: np.ndarray
    z_iota_1: np.ndarray
    z_iota_2: np.ndarray
    x_hat: np.ndarray
    lam_vv: np.ndarray
    lam_vi: np.ndarray
    mu_u: np.ndarray
    structural_residual: float
    cache: dict[str, np.ndarray] = field(repr=False, default_factory=dict)


def _draw_eps(
    rng: np.random.Generator, n: int, config: ModelConfig
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    return (
        rng.standard_normal((n, config.d_nu)),
        rng.standard_normal((n, config.d_iota)),
        rng.standard_normal((n, config.d_iota)),
    )


def forward(
    params: ModelParams,
    config: ModelConfig,
    x: np.ndarray,
    x_ctrl: np.ndarray,
    u: np.ndarray,
    rng: np.random.Generator | None = None,
    eps: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None,
) -> ForwardOutput:
    """Full stochastic pass: encode both inputs, sample the three noise
    blocks, apply the structural transform, decode."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    xc = np.atleast_2d(np.asarray(x_ctrl, dtype=float))
    u = np.atleast_2d(np.asarray(u, dtype=float))
    n = x.shape[0]
    if eps is None:
        if rng is None:
            raise DegenerateInputError("forward needs either rng or explicit eps")
        eps = _draw_eps(rng, n, config)
    eps_nu, eps_i1, eps_i2 = eps

    a1 = x @ params["enc_w1"].T + params["enc_b1"]
    h1 = _leaky(a1)
    a2 = h1 @ params["enc_w2"].T + params["enc_b2"]
    h = _leaky(a2)
    a1c = xc @ params["enc_w1"].T + params["enc_b1"]
    h1c = _leaky(a1c)
    a2c = h1c @ params["enc_w2"].T + params["enc_b2"]
    hc = _leaky(a2c)

    hu = np.concatenate([h, u], axis=1)
    p_nu = hu @ params["nu_head_w"].T + params["nu_head_b"]
    mu_nu_base, logvar_nu_raw = p_nu[:, : config.d_nu], p_nu[:, config.d_nu :]
    logvar_nu = np.clip(logvar_nu_raw, LOGVAR_MIN, LOGVAR_MAX)

    p_i1 = h @ params["iota_head_w"].T + params["iota_head_b"]
    mu_i1, logvar_i1_raw = p_i1[:, : config.d_iota], p_i1[:, config.d_iota :]
    logvar_i1 = np.clip(logvar_i1_raw, LOGVAR_MIN, LOGVAR_MAX)
    p_i2 = hc @ params["iota_head_w"].T + params["iota_head_b"]
    mu_i2, logvar_i2_raw = p_i2[:, : config.d_iota], p_i2[:, config.d_iota :]
    logvar_i2 = np.clip(logvar_i2_raw, LOGVAR_MIN, LOGVAR_MAX)

    sigma_nu = np.exp(0.5 * logvar_nu)
    sigma_i1 = np.exp(0.5 * logvar_i1)
    sigma_i2 = np.exp(0.5 * logvar_i2)
    z_tilde = mu_nu_base + sigma_nu * eps_nu
    z_i1 = mu_i1 + sigma_i1 * eps_i1
    z_i2 = mu_i2 + sigma_i2 * eps_i2

    lam_vv, lam_vi, mu_u = condition_maps(params, config, u)
    rhs = z_tilde + np.einsum("nij,nj->ni", lam_vi, z_i1) + mu_u
    z_nu = _solve_batch(lam_vv, rhs)
    residual = float(
        np.max(np.abs(z_nu - np.einsum("nij,nj->ni", lam_vv, z_nu) - rhs), initial=0.0)
    )

    z_cat = np.concatenate([z_nu, z_i1], axis=1)
    c1 = z_cat @ params["dec_w1"].T + params["dec_b1"]
    g1 = _leaky(c1)
    x_hat = g1 @ params["dec_w2"].T + params["dec_b2"]
    if not np.all(np.isfinite(x_hat)):
        raise FloatingPointError("non-finite activations in the forward pass")

    cache = {
        "x": x, "xc": xc, "u": u, "hu": hu,
        "a1": a1, "h1": h1, "a2": a2, "h": h,
        "a1c": a1c, "h1c": h1c, "a2c": a2c, "hc": hc,
        "logvar_nu_raw": logvar_nu_raw, "logvar_i1_raw": logvar_i1_raw,
        "logvar_i2_raw": logvar_i2_raw,
        "eps_nu": eps_nu, "eps_i1": eps_i1, "eps_i2": eps_i2,
        "sigma_nu": sigma_nu, "sigma_i1": sigma_i1, "sigma_i2": sigma_i2,
        "rhs": rhs, "c1": c1, "g1": g1, "z_cat": z_cat,
    }
    return ForwardOutput(
        mu_nu_base=mu_nu_base,
        logvar_nu=logvar_nu,
        mu_iota_1=mu_i1,
        logvar_iota_1=logvar_i1,
        mu_iota_2=mu_i2,
        logvar_iota_2=logvar_i2,
        z_tilde_nu=z_tilde,
        z_nu=z_nu,
        z_iota_1=z_i1,
        z_iota_2=z_i2,
        x_hat=x_hat,
        lam_vv=lam_vv,
        lam_vi=lam_vi,
        mu_u=mu_u,
        structural_residual=residual,
        cache=cache,
    )


def represent(
    params: ModelParams, config: ModelConfig, x: np.ndarray, u: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Posterior-mean latents (noise set to zero): (z_nu, z_iota)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    u = np.atleast_2d(np.asarray(u, dtype=float))
    h = encode(params, config, x)
    hu = np.concatenate([h, u], axis=1)
    p_nu = hu @ params["nu_head_w"].T + params["nu_head_b"]
    mu_nu_base = p_nu[:, : config.d_nu]
    p_i = h @ params["iota_head_w"].T + params["iota_head_b"]
    mu_iota = p_i[:, : config.d_iota]
    lam_vv, lam_vi, mu_u = condition_maps(params, config, u)
    rhs = mu_nu_base + np.einsum("nij,nj->ni", lam_vi, mu_iota) + mu_u
    z_nu = _solve_batch(lam_vv, rhs)
    return z_nu, mu_iota


def predict(
    params: ModelParams,
    config: ModelConfig,
    x_ctrl: np.ndarray,
    u: np.ndarray,
    n_samples: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Virtual cells for condition ``u`` from a control profile.

    The invariant latent is drawn from its posterior given the control cell;
    the responsive latent follows the learned mechanism with unit noise
    variance around the condition-mapped noise mean; both decode together.
    Supports two-hot ``u`` for unseen double perturbations.
    """
    if not isinstance(params, dict) or "enc_w1" not in params:
        raise DegenerateInputError("model parameters are missing or uninitialized")
    if n_samples == 0:
        return np.zeros((0, config.x_dim))
    x_ctrl = np.atleast_2d(np.asarray(x_ctrl, dtype=float))
    u = np.asarray(u, dtype=float).reshape(1, config.u_dim)
    h = encode(params, config, x_ctrl)
    p_i = h @ params["iota_head_w"].T + params["iota_head_b"]
    mu_iota = p_i[:, : config.d_iota]
    sigma_iota = np.exp(0.5 * np.clip(p_i[:, config.d_iota :], LOGVAR_MIN, LOGVAR_MAX))
    lam_vv, lam_vi, mu_u = condition_maps(params, config, u)
    lam_vv = np.broadcast_to(lam_vv[0], (n_samples, config.d_nu, config.d_nu))
    z_iota = mu_iota + sigma_iota * rng.standard_normal((n_samples, config.d_iota))
    noise = mu_u[0] + rng.standard_normal((n_samples, config.d_nu))
    rhs = noise + z_iota @ lam_vi[0].T
    z_nu = _solve_batch(lam_vv, rhs)
    return decode(params, config, z_nu, z_iota)


# --------------------------------------------------------------------------- #
# loss and gradients
# --------------------------------------------------------------------------- #


def loss_and_grads(
    params: ModelParams,
    config: ModelConfig,
    x: np.ndarray,
    x_ctrl: np.ndarray,
    u: np.ndarray,
    eps: tuple[np.ndarray, np.ndarray, np.ndarray],
    weights: LossWeights,
    align_on_samples: bool = False,
) -> tuple[LossBreakdown, ModelParams]:
    """Total training loss with analytic gradients for every parameter group.

    The reverse pass mirrors the forward graph exactly; all batch reductions
    are arithmetic means.
    """
    out = forward(params, config, x, x_ctrl, u, eps=eps)
    c = out.cache
    n = c["x"].shape[0]
    d_nu, d_iota = config.d_nu, config.d_iota

    rec = objective.recon_loss(c["x"], out.x_hat)
    var_nu = np.exp(out.logvar_nu)
    kl_nu = objective.kl_nu(out.mu_nu_base, var_nu, out.mu_u)
    var_i1 = np.exp(out.logvar_iota_1)
    var_i2 = np.exp(out.logvar_iota_2)
    kl_iota = objective.kl_iota(out.mu_iota_1, var_i1, out.mu_iota_2, var_i2)
    if align_on_samples:
        contrast = float(np.mean(np.sum((out.z_iota_1 - out.z_iota_2) ** 2, axis=1)))
    else:
        contrast = objective.contrast_loss(out.mu_iota_1, out.mu_iota_2)
    breakdown = objective.total_loss(rec, kl_nu, kl_iota, contrast, weights)

    grads = zeros_like_params(params)
    bn, bi, al = weights.beta_nu, weights.beta_iota, weights.alpha

    # reconstruction -> decoder
    d_xhat = 2.0 * (out.x_hat - c["x"]) / n
    grads["dec_w2"] += d_xhat.T @ c["g1"]
    grads["dec_b2"] += d_xhat.sum(axis=0)
    d_g1 = d_xhat @ params["dec_w2"]
    d_c1 = d_g1 * _leaky_grad(c["c1"])
    grads["dec_w1"] += d_c1.T @ c["z_cat"]
    grads["dec_b1"] += d_c1.sum(axis=0)
    d_zcat = d_c1 @ params["dec_w1"]
    d_znu = d_zcat[:, :d_nu].copy()
    d_zi1 = d_zcat[:, d_nu:].copy()

    # structural solve: (I - L)^T s = dL/dz_nu
    s = _solve_transpose_batch(out.lam_vv, d_znu)
    d_lam_vv = np.einsum("ni,nk->nik", s, out.z_nu)
    d_lam_vi = np.einsum("ni,nk->nik", s, out.z_iota_1)
    d_zi1 += np.einsum("nij,ni->nj", out.lam_vi, s)
    d_mu_u = s.copy()
    d_ztilde = s

    # noise-space KL terms
    d_mu_nu_base = bn * (out.mu_nu_base - out.mu_u) / n
    d_mu_u += bn * (out.mu_u - out.mu_nu_base) / n
    d_logvar_nu = bn * 0.5 * (var_nu - 1.0) / n

    # base reparameterization
    d_mu_nu_base = d_mu_nu_base + d_ztilde
    d_logvar_nu = d_logvar_nu + d_ztilde * c["eps_nu"] * c["sigma_nu"] * 0.5

    # invariant KLs and alignment
    d_mu_i1 = bi * out.mu_iota_1 / n
    d_logvar_i1 = bi * 0.5 * (var_i1 - 1.0) / n
    d_mu_i2 = bi * out.mu_iota_2 / n
    d_logvar_i2 = bi * 0.5 * (var_i2 - 1.0) / n
    if align_on_samples:
        d_zi1 = d_zi1 + al * 2.0 * (out.z_iota_1 - out.z_iota_2) / n
        d_zi2 = al * 2.0 * (out.z_iota_2 - out.z_iota_1) / n
    else:
        d_mu_i1 = d_mu_i1 + al * 2.0 * (out.mu_iota_1 - out.mu_iota_2) / n
        d_mu_i2 = d_mu_i2 + al * 2.0 * (out.mu_iota_2 - out.mu_iota_1) / n
        d_zi2 = np.zeros_like(out.z_iota_2)

    d_mu_i1 = d_mu_i1 + d_zi1
    d_logvar_i1 = d_logvar_i1 + d_zi1 * c["eps_i1"] * c["sigma_i1"] * 0.5
    d_mu_i2 = d_mu_i2 + d_zi2
    d_logvar_i2 = d_logvar_i2 + d_zi2 * c["eps_i2"] * c["sigma_i2"] * 0.5

    # clamp pass-through only strictly inside the interval
    def clamp_mask(raw: np.ndarray) -> np.ndarray:
        return ((raw > LOGVAR_MIN) & (raw < LOGVAR_MAX)).astype(float)

    d_logvar_nu = d_logvar_nu * clamp_mask(c["logvar_nu_raw"])
    d_logvar_i1 = d_logvar_i1 * clamp_mask(c["logvar_i1_raw"])
    d_logvar_i2 = d_logvar_i2 * clamp_mask(c["logvar_i2_raw"])

    # condition maps (affine in u)
    rows, cols = _lower_indices(d_nu)
    d_lvv_flat = d_lam_vv[:, rows, cols]
    grads["cond_vv_w"] += d_lvv_flat.T @ c["u"]
    grads["cond_vv_b"] += d_lvv_flat.sum(axis=0)
    d_lvi_flat = d_lam_vi.reshape(n, d_nu * d_iota)
    grads["cond_vi_w"] += d_lvi_flat.T @ c["u"]
    grads["cond_vi_b"] += d_lvi_flat.sum(axis=0)
    grads["cond_mu_w"] += d_mu_u.T @ c["u"]
    grads["cond_mu_b"] += d_mu_u.sum(axis=0)

    # heads
    d_pnu = np.concatenate([d_mu_nu_base, d_logvar_nu], axis=1)
    grads["nu_head_w"] += d_pnu.T @ c["hu"]
    grads["nu_head_b"] += d_pnu.sum(axis=0)
    d_h = (d_pnu @ params["nu_head_w"])[:, : config.hidden_dim]

    d_pi1 = np.concatenate([d_mu_i1, d_logvar_i1], axis=1)
    grads["iota_head_w"] += d_pi1.T @ c["h"]
    grads["iota_head_b"] += d_pi1.sum(axis=0)
    d_h = d_h + d_pi1 @ params["iota_head_w"]

    d_pi2 = np.concatenate([d_mu_i2, d_logvar_i2], axis=1)
    grads["iota_head_w"] += d_pi2.T @ c["hc"]
    grads["iota_head_b"] += d_pi2.sum(axis=0)
    d_hc = d_pi2 @ params["iota_head_w"]

    # encoder on x
    d_a2 = d_h * _leaky_grad(c["a2"])
    grads["enc_w2"] += d_a2.T @ c["h1"]
    grads["enc_b2"] += d_a2.sum(axis=0)
    d_h1 = d_a2 @ params["enc_w2"]
    d_a1 = d_h1 * _leaky_grad(c["a1"])
    grads["enc_w1"] += d_a1.T @ c["x"]
    grads["enc_b1"] += d_a1.sum(axis=0)

    # encoder on the paired control
    d_a2c = d_hc * _leaky_grad(c["a2c"])
    grads["enc_w2"] += d_a2c.T @ c["h1c"]
    grads["enc_b2"] += d_a2c.sum(axis=0)
    d_h1c = d_a2c @ params["enc_w2"]
    d_a1c = d_h1c * _leaky_grad(c["a1c"])
    grads["enc_w1"] += d_a1c.T @ c["xc"]
    grads["enc_b1"] += d_a1c.sum(axis=0)

    return breakdown, grads


# --------------------------------------------------------------------------- #
# checkpoints
# --------------------------------------------------------------------------- #


def save_checkpoint(
    path: str,
    config: ModelConfig,
    params: ModelParams,
    epoch: int = 0,
    optimizer_state: dict[str, Any] | None = None,
    rng_state: dict[str, Any] | None = None,
) -> None:
    """Single binary document with config, tensors, optimizer state, epoch,
    and RNG state."""
    arrays = {f"param::{k}": v for k, v in params.items()}
    if optimizer_state:
        arrays.update({f"adam_m::{k}": v for k, v in optimizer_state["m"].items()})
        arrays.update({f"adam_v::{k}": v for k, v in optimizer_state["v"].items()})
    meta = {
        "config": config.to_json_dict(),
        "epoch": int(epoch),
        "adam_step": int(optimizer_state["step"]) if optimizer_state else None,
        "rng_state": rng_state,
    }
    arrays["meta_json"] = np.array(json.dumps(meta, sort_keys=True))
    np.savez(path, **arrays)


def load_checkpoint(path: str) -> dict[str, Any]:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta_json"]))
        params = {
            k.split("::", 1)[1]: data[k] for k in data.files if k.startswith("param::")
        }
        adam_m = {k.split("::", 1)[1]: data[k] for k in data.files if k.startswith("adam_m::")}
        adam_v = {k.split("::", 1)[1]: data[k] for k in data.files if k.startswith("adam_v::")}
    config = ModelConfig.from_json_dict(meta["config"])
    out: dict[str, Any] = {
        "config": config,
        "params": params,
        "epoch": meta["epoch"],
        "rng_state": meta.get("rng_state"),
    }
    if adam_m:
        out["optimizer_state"] = {"m": adam_m, "v": adam_v, "step": meta["adam_step"]}
    return out


def flatten_group(params: ModelParams, name: str) -> np.ndarray:
    return params[name].ravel().copy()


def with_group(params: ModelParams, name: str, flat: np.ndarray) -> ModelParams:
    clone = dict(params)
    clone[name] = np.asarray(flat, dtype=float).reshape(params[name].shape)
    return clone


def param_group_names(params: ModelParams) -> Iterable[str]:
    return sorted(params.keys())
