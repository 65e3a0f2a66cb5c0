"""Synthetic perturbation data: a seeded ground truth plus mixed observations.

The generator draws a random latent causal model whose environments satisfy
both identifiability audits by construction, then pushes latent samples
through an injective nonlinear mixing (well-conditioned square layers with a
leaky rectifier, followed by a full-column-rank linear lift).
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from typing import Any

import numpy as np

from .numerics import DegenerateInputError, RngStream, rank
from .scm import (
    LatentSample,
    ScmParams,
    check_environment_sufficiency,
    check_intervention_sufficiency,
    structural_sample,
)

MAX_RESAMPLE_ATTEMPTS = 100
MAX_LAYER_CONDITION = 100.0
MIXING_LEAKY_SLOPE = 0.2


@dataclass
class SynthConfig:
    """Simulation defaults: 500 observed dims, 4 responsive + 7 invariant
    latents, 12 environments, 3000/1000 train/test rows."""

    x_dim: int = 500
    d_nu: int = 4
    d_iota: int = 7
    n_envs: int = 12
    n_train: int = 3000
    n_test: int = 1000
    weight_range: tuple[float, float] = (0.3, 0.9)
    edge_prob: float = 0.5
    mixing_layers: int = 3
    leaky_slope: float = MIXING_LEAKY_SLOPE
    hard_interventions: int | None = None  # defaults to d_nu
    require_sufficiency: bool = True
    seed: int = 0

    @property
    def n_hard(self) -> int:
        return self.d_nu if self.hard_interventions is None else self.hard_interventions

    def validate(self) -> None:
        if self.x_dim < self.d_nu + self.d_iota:
            raise DegenerateInputError("x_dim must be at least the latent dimension")
        if self.require_sufficiency and self.n_envs < 2 * self.d_nu + 1:
            raise DegenerateInputError(
                f"environment sufficiency needs at least {2 * self.d_nu + 1} environments, "
                f"have {self.n_envs}"
            )
        if self.n_hard > self.n_envs - 1:
            raise DegenerateInputError("more hard interventions than environments")

    def to_json_dict(self) -> dict[str, Any]:
        doc = asdict(self)
        doc["weight_range"] = list(self.weight_range)
        return doc

    @classmethod
    def from_json_dict(cls, doc: dict[str, Any]) -> "SynthConfig":
        doc = dict(doc)
        doc["weight_range"] = tuple(doc["weight_range"])
        return cls(**doc)


@dataclass
class GroundTruth:
    """Latent causal model plus the mixing that produced the observations."""

    scm: ScmParams
    layer_weights: list[np.ndarray]
    layer_biases: list[np.ndarray]
    lift: np.ndarray
    leaky_slope: float = MIXING_LEAKY_SLOPE

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "scm": self.scm.to_json_dict(),
            "layer_weights": [w.tolist() for w in self.layer_weights],
            "layer_biases": [b.tolist() for b in self.layer_biases],
            "lift": self.lift.tolist(),
            "leaky_slope": self.leaky_slope,
        }

    @classmethod
    def from_json_dict(cls, doc: dict[str, Any]) -> "GroundTruth":
        return cls(
            scm=ScmParams.from_json_dict(doc["scm"]),
            layer_weights=[np.array(w, dtype=float) for w in doc["layer_weights"]],
            layer_biases=[np.array(b, dtype=float) for b in doc["layer_biases"]],
            lift=np.array(doc["lift"], dtype=float),
            leaky_slope=float(doc["leaky_slope"]),
        )


@dataclass
class SynthDataset:
    """Observations with environment labels and the true latents."""

    x: np.ndarray
    env: np.ndarray
    z_true: LatentSample

    @property
    def control_rows(self) -> np.ndarray:
        return np.flatnonzero(self.env == 0)

    @property
    def n(self) -> int:
        return self.x.shape[0]


def _leaky(x: np.ndarray, slope: float) -> np.ndarray:
    return np.where(x > 0, x, slope * x)


def _draw_strictly_lower(
    rows: int, cols: int, edge_prob: float, lo: float, hi: float, rng: np.random.Generator
) -> np.ndarray:
    """Random signed weights in the magnitude band; square shapes keep only
    the strictly lower triangle."""
    mask = rng.random((rows, cols)) < edge_prob
    mag = rng.uniform(lo, hi, size=(rows, cols))
    sign = rng.choice([-1.0, 1.0], size=(rows, cols))
    w = mask * sign * mag
    if rows == cols:
        w = np.tril(w, k=-1)
    return w


def _draw_conditioned_square(d: int, rng: np.random.Generator) -> np.ndarray:
    """Column-normalized random square matrix with bounded condition number."""
    for _ in range(1000):
        a = rng.uniform(-1.0, 1.0, size=(d, d))
        a /= np.sqrt((a**2).sum(axis=0, keepdims=True))
        if np.linalg.cond(a) <= MAX_LAYER_CONDITION:
            return a
    raise DegenerateInputError("could not draw a well-conditioned mixing layer")


def sample_ground_truth(config: SynthConfig, rng: RngStream) -> GroundTruth:
    """Draw a ground truth whose environments pass both audits.

    Environments 1..n_hard are hard interventions (environment i removes
    every incoming weight of responsive node i); the reference environment 0
    has no responsive edges and standard noise. Noise parameters are
    redrawn until the environment-sufficiency audit passes.
    """
    config.validate()
    lo, hi = config.weight_range
    gen = rng.stream("scm")
    d_nu, d_iota, n_envs = config.d_nu, config.d_iota, config.n_envs

    lambda_ii = _draw_strictly_lower(d_iota, d_iota, config.edge_prob, lo, hi, gen)
    lambda_vv = np.zeros((n_envs, d_nu, d_nu))
    lambda_vi = np.zeros((n_envs, d_nu, d_iota))
    for e in range(1, n_envs):
        lambda_vv[e] = _draw_strictly_lower(d_nu, d_nu, config.edge_prob, lo, hi, gen)
        lambda_vi[e] = _draw_strictly_lower(d_nu, d_iota, config.edge_prob, lo, hi, gen)
        if 1 <= e <= config.n_hard:
            node = e - 1
            lambda_vv[e, node, :] = 0.0
            lambda_vi[e, node, :] = 0.0

    scm = None
    for _ in range(MAX_RESAMPLE_ATTEMPTS):
        mu_nu = np.zeros((n_envs, d_nu))
        beta_nu = np.ones((n_envs, d_nu))
        mu_nu[1:] = gen.uniform(-2.0, 2.0, size=(n_envs - 1, d_nu))
        beta_nu[1:] = gen.uniform(0.5, 2.0, size=(n_envs - 1, d_nu))
        candidate = ScmParams(
            d_iota=d_iota,
            d_nu=d_nu,
            n_envs=n_envs,
            lambda_ii=lambda_ii,
            lambda_vv=lambda_vv,
            lambda_vi=lambda_vi,
            mu_nu=mu_nu,
            beta_nu=beta_nu,
            mu_iota=np.zeros(d_iota),
            beta_iota=np.ones(d_iota),
        )
        if not config.require_sufficiency:
            scm = candidate
            break
        if check_environment_sufficiency(candidate)["sufficient"]:
            scm = candidate
            break
    if scm is None:
        raise DegenerateInputError(
            f"noise parameters failed the sufficiency audit {MAX_RESAMPLE_ATTEMPTS} times; "
            "the configuration is over-constrained"
        )
    if config.require_sufficiency and not np.all(check_intervention_sufficiency(scm)):
        raise DegenerateInputError("constructed hard interventions failed the audit")

    mix_gen = rng.stream("mixing")
    d = d_iota + d_nu
    layer_weights = [_draw_conditioned_square(d, mix_gen) for _ in range(config.mixing_layers)]
    layer_biases = [mix_gen.uniform(-0.1, 0.1, size=d) for _ in range(config.mixing_layers)]
    for _ in range(100):
        lift = mix_gen.standard_normal((config.x_dim, d)) / np.sqrt(d)
        if rank(lift) == d:
            break
    else:  # pragma: no cover - full rank holds almost surely
        raise DegenerateInputError("could not draw a full-column-rank lift")
    return GroundTruth(
        scm=scm,
        layer_weights=layer_weights,
        layer_biases=layer_biases,
        lift=lift,
        leaky_slope=config.leaky_slope,
    )


def mix(gt: GroundTruth, z: np.ndarray) -> np.ndarray:
    """Push latent rows through the layer stack and the linear lift."""
    h = np.asarray(z, dtype=float)
    if h.ndim == 1:
        h = h[None, :]
    if h.shape[1] != gt.lift.shape[1]:
        raise DegenerateInputError(
            f"latent width {h.shape[1]} does not match the mixing ({gt.lift.shape[1]})"
        )
    for w, b in zip(gt.layer_weights, gt.layer_biases):
        h = _leaky(h @ w.T + b, gt.leaky_slope)
    return h @ gt.lift.T


def _sample_split(
    gt: GroundTruth, config: SynthConfig, n_rows: int, gen: np.random.Generator
) -> SynthDataset:
    """Rows split evenly across environments; the remainder goes to the
    reference environment."""
    n_envs = config.n_envs
    base = n_rows // n_envs
    counts = [base + (n_rows - base * n_envs if e == 0 else 0) for e in range(n_envs)]
    blocks = [structural_sample(gt.scm, env=e, n=c, rng=gen) for e, c in enumerate(counts)]
    sample = LatentSample(
        z_iota=np.concatenate([b.z_iota for b in blocks]),
        z_nu=np.concatenate([b.z_nu for b in blocks]),
        n_iota=np.concatenate([b.n_iota for b in blocks]),
        n_nu=np.concatenate([b.n_nu for b in blocks]),
        env=np.concatenate([b.env for b in blocks]),
    )
    x = mix(gt, sample.concat_z())
    return SynthDataset(x=x, env=sample.env.copy(), z_true=sample)


def generate(config: SynthConfig) -> tuple[SynthDataset, SynthDataset, GroundTruth]:
    """Generate seeded (train, test, ground_truth) for the simulation protocol."""
    config.validate()
    rng = RngStream(config.seed)
    gt = sample_ground_truth(config, rng)
    train = _sample_split(gt, config, config.n_train, rng.stream("data_train"))
    test = _sample_split(gt, config, config.n_test, rng.stream("data_test"))
    return train, test, gt
