"""Latent structural causal model over invariant and responsive blocks.

The latent vector splits into an invariant block ``z_iota`` and a
perturbation-responsive block ``z_nu``. Each environment ``u`` carries its
own strictly-lower-triangular weights and noise parameters for the
responsive block; environment 0 is the unperturbed reference.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .numerics import (
    DegenerateInputError,
    rank,
    unit_lower_solve_batch,
)

RANK_TOL = 1e-8
INTERVENTION_TOL = 1e-12


@dataclass
class ScmParams:
    """Structural weights and per-environment noise parameters.

    Shapes: ``lambda_ii`` is (d_iota, d_iota); ``lambda_vv`` is
    (n_envs, d_nu, d_nu); ``lambda_vi`` is (n_envs, d_nu, d_iota);
    ``mu_nu``/``beta_nu`` are (n_envs, d_nu); ``mu_iota``/``beta_iota``
    are (d_iota,). All triangular factors are strictly lower.
    """

    d_iota: int
    d_nu: int
    n_envs: int
    lambda_ii: np.ndarray
    lambda_vv: np.ndarray
    lambda_vi: np.ndarray
    mu_nu: np.ndarray
    beta_nu: np.ndarray
    mu_iota: np.ndarray
    beta_iota: np.ndarray

    def __post_init__(self) -> None:
        self.lambda_ii = np.asarray(self.lambda_ii, dtype=float)
        self.lambda_vv = np.asarray(self.lambda_vv, dtype=float)
        self.lambda_vi = np.asarray(self.lambda_vi, dtype=float)
        self.mu_nu = np.asarray(self.mu_nu, dtype=float)
        self.beta_nu = np.asarray(self.beta_nu, dtype=float)
        self.mu_iota = np.asarray(self.mu_iota, dtype=float)
        self.beta_iota = np.asarray(self.beta_iota, dtype=float)
        self.validate()

    def validate(self) -> None:
        di, dn, ne = self.d_iota, self.d_nu, self.n_envs
        expected = {
            "lambda_ii": (di, di),
            "lambda_vv": (ne, dn, dn),
            "lambda_vi": (ne, dn, di),
            "mu_nu": (ne, dn),
            "beta_nu": (ne, dn),
            "mu_iota": (di,),
            "beta_iota": (di,),
        }
        for name, shape in expected.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise DegenerateInputError(f"{name} has shape {arr.shape}, expected {shape}")
        if np.max(np.abs(np.triu(self.lambda_ii))) > 0:
            raise DegenerateInputError("lambda_ii must be strictly lower triangular")
        for e in range(ne):
            if np.max(np.abs(np.triu(self.lambda_vv[e]))) > 0:
                raise DegenerateInputError(f"lambda_vv[{e}] must be strictly lower triangular")
        if np.any(self.beta_nu <= 0) or np.any(self.beta_iota <= 0):
            raise DegenerateInputError("all noise scales must be positive")

    @property
    def d(self) -> int:
        return self.d_iota + self.d_nu

    def full_lambda(self, env: int) -> np.ndarray:
        """Block matrix over (z_iota, z_nu) with the invariant block first."""
        d = self.d
        lam = np.zeros((d, d))
        lam[: self.d_iota, : self.d_iota] = self.lambda_ii
        lam[self.d_iota :, : self.d_iota] = self.lambda_vi[env]
        lam[self.d_iota :, self.d_iota :] = self.lambda_vv[env]
        return lam

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "d_iota": self.d_iota,
            "d_nu": self.d_nu,
            "n_envs": self.n_envs,
            "lambda_ii": self.lambda_ii.tolist(),
            "lambda_vv": self.lambda_vv.tolist(),
            "lambda_vi": self.lambda_vi.tolist(),
            "mu_nu": self.mu_nu.tolist(),
            "beta_nu": self.beta_nu.tolist(),
            "mu_iota": self.mu_iota.tolist(),
            "beta_iota": self.beta_iota.tolist(),
        }

    @classmethod
    def from_json_dict(cls, doc: dict[str, Any]) -> "ScmParams":
        return cls(
            d_iota=int(doc["d_iota"]),
            d_nu=int(doc["d_nu"]),
            n_envs=int(doc["n_envs"]),
            lambda_ii=np.array(doc["lambda_ii"], dtype=float),
            lambda_vv=np.array(doc["lambda_vv"], dtype=float),
            lambda_vi=np.array(doc["lambda_vi"], dtype=float),
            mu_nu=np.array(doc["mu_nu"], dtype=float),
            beta_nu=np.array(doc["beta_nu"], dtype=float),
            mu_iota=np.array(doc["mu_iota"], dtype=float),
            beta_iota=np.array(doc["beta_iota"], dtype=float),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ScmParams":
        return cls.from_json_dict(json.loads(text))


@dataclass
class LatentSample:
    """Latent draws plus the exogenous noise that generated them."""

    z_iota: np.ndarray
    z_nu: np.ndarray
    n_iota: np.ndarray
    n_nu: np.ndarray
    env: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    def concat_z(self) -> np.ndarray:
        return np.concatenate([self.z_iota, self.z_nu], axis=1)


def structural_sample(
    params: ScmParams, env: int, n: int, rng: np.random.Generator
) -> LatentSample:
    """Draw ``n`` latent rows from environment ``env``.

    Exogenous noise is Gaussian; the latent blocks solve their triangular
    structural systems exactly.
    """
    if not 0 <= env < params.n_envs:
        raise DegenerateInputError(f"environment {env} out of range (n_envs={params.n_envs})")
    n_iota = params.mu_iota + np.sqrt(params.beta_iota) * rng.standard_normal((n, params.d_iota))
    lam_ii = np.broadcast_to(params.lambda_ii, (n, params.d_iota, params.d_iota))
    z_iota = unit_lower_solve_batch(lam_ii, n_iota)

    n_nu = params.mu_nu[env] + np.sqrt(params.beta_nu[env]) * rng.standard_normal((n, params.d_nu))
    rhs = n_nu + z_iota @ params.lambda_vi[env].T
    lam_vv = np.broadcast_to(params.lambda_vv[env], (n, params.d_nu, params.d_nu))
    z_nu = unit_lower_solve_batch(lam_vv, rhs)
    return LatentSample(
        z_iota=z_iota,
        z_nu=z_nu,
        n_iota=n_iota,
        n_nu=n_nu,
        env=np.full(n, env, dtype=int),
    )


def z_to_noise(
    params: ScmParams, env: int, z_iota: np.ndarray, z_nu: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Invert the structural equations: ``n = (I - Lambda(u)) z``."""
    z_iota = np.atleast_2d(np.asarray(z_iota, dtype=float))
    z_nu = np.atleast_2d(np.asarray(z_nu, dtype=float))
    if z_iota.shape[1] != params.d_iota or z_nu.shape[1] != params.d_nu:
        raise DegenerateInputError("latent block widths do not match the parameters")
    n_iota = z_iota - z_iota @ params.lambda_ii.T
    n_nu = z_nu - z_nu @ params.lambda_vv[env].T - z_iota @ params.lambda_vi[env].T
    return n_iota, n_nu


def delta_eta(params: ScmParams, env: int) -> np.ndarray:
    """Natural-parameter difference of environment ``env`` vs the reference.

    Concatenates the mean-over-variance shift and the negative half shift of
    the inverse variances, elementwise over the responsive block.
    """
    if env == 0:
        raise DegenerateInputError("delta_eta is defined for non-reference environments")
    mu_e, beta_e = params.mu_nu[env], params.beta_nu[env]
    mu_0, beta_0 = params.mu_nu[0], params.beta_nu[0]
    first = mu_e / beta_e - mu_0 / beta_0
    second = -0.5 * (1.0 / beta_e - 1.0 / beta_0)
    return np.concatenate([first, second])


def check_environment_sufficiency(params: ScmParams) -> dict[str, Any]:
    """Rank audit of the stacked natural-parameter differences.

    Component-wise recovery of the responsive block needs the stacked
    differences to span a 2*d_nu dimensional space.
    """
    required = 2 * params.d_nu
    if params.n_envs < required + 1:
        raise DegenerateInputError(
            f"need at least {required + 1} environments, have {params.n_envs}"
        )
    stacked = np.stack([delta_eta(params, e) for e in range(1, params.n_envs)])
    r = rank(stacked, tol=RANK_TOL)
    return {"rank": r, "required": required, "sufficient": r == required}


def check_intervention_sufficiency(params: ScmParams) -> np.ndarray:
    """Per-node flags: node i passes iff some environment removes all of its
    incoming responsive-block weights (row i of both lambda factors zero)."""
    flags = np.zeros(params.d_nu, dtype=bool)
    for i in range(params.d_nu):
        for e in range(params.n_envs):
            row_vv = params.lambda_vv[e, i, :]
            row_vi = params.lambda_vi[e, i, :]
            if np.max(np.abs(row_vv), initial=0.0) <= INTERVENTION_TOL and np.max(
                np.abs(row_vi), initial=0.0
            ) <= INTERVENTION_TOL:
                flags[i] = True
                break
    return flags
