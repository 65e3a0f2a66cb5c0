"""Reference predictors: additive pseudobulk shifts and PCA pipelines."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import DegenerateInputError, rank


@dataclass
class AdditiveModel:
    """Control mean plus one learned shift vector per seen single perturbation."""

    ctrl_mean: np.ndarray
    deltas: dict[int, np.ndarray] = field(default_factory=dict)


def additive_fit(
    single_pseudobulks: dict[int, np.ndarray], ctrl_mean: np.ndarray
) -> AdditiveModel:
    """Each single perturbation's shift is its pseudobulk minus control."""
    ctrl_mean = np.asarray(ctrl_mean, dtype=float)
    if ctrl_mean.ndim != 1:
        raise DegenerateInputError("control mean must be a vector")
    deltas = {
        int(key): np.asarray(mean, dtype=float) - ctrl_mean
        for key, mean in single_pseudobulks.items()
    }
    return AdditiveModel(ctrl_mean=ctrl_mean, deltas=deltas)


def additive_predict(model: AdditiveModel, pair: tuple[int, ...]) -> np.ndarray:
    """Control mean plus the sum of the singles' shifts."""
    out = model.ctrl_mean.copy()
    for target in pair:
        if target not in model.deltas:
            raise DegenerateInputError(f"perturbation {target} not seen during fitting")
        out += model.deltas[target]
    return out


@dataclass
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # (genes, p), orthonormal columns
    explained_variance: np.ndarray

    @property
    def p(self) -> int:
        return self.components.shape[1]

    def project(self, x: np.ndarray) -> np.ndarray:
        return (np.atleast_2d(x) - self.mean) @ self.components

    def reconstruct(self, scores: np.ndarray) -> np.ndarray:
        return np.atleast_2d(scores) @ self.components.T + self.mean


POWER_ITERS = 500
POWER_TOL = 1e-10


def pca_fit(x: np.ndarray, p: int, seed: int = 0) -> PcaModel:
    """Top-p principal directions via power iteration with deflation.

    Works on the centered covariance through matrix-vector products only.
    Sign convention: the largest-magnitude loading of each component is
    positive, which makes the decomposition deterministic.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n, g = x.shape
    if p > min(n, g):
        raise DegenerateInputError(f"p={p} exceeds min(n, genes)={min(n, g)}")
    mean = x.mean(axis=0)
    xc = x - mean
    denom = max(1, n - 1)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), 0x9CA])))

    components = np.zeros((g, p))
    variances = np.zeros(p)
    for j in range(p):
        v = rng.standard_normal(g)
        v /= np.linalg.norm(v)
        lam = 0.0
        for _ in range(POWER_ITERS):
            w = xc.T @ (xc @ v) / denom
            if j > 0:
                basis = components[:, :j]
                w -= basis @ (basis.T @ w)
            norm = np.linalg.norm(w)
            if norm == 0.0:
                break
            v_new = w / norm
            if np.abs(np.dot(v_new, v)) > 1.0 - POWER_TOL:
                v = v_new
                lam = norm
                break
            v = v_new
            lam = norm
        pivot = np.argmax(np.abs(v))
        if v[pivot] < 0:
            v = -v
        components[:, j] = v
        variances[j] = lam
    return PcaModel(mean=mean, components=components, explained_variance=variances)


@dataclass
class PcaAdditiveModel:
    """Additive shift model fitted in a PCA score space."""

    pca: PcaModel
    ctrl_score: np.ndarray
    deltas: dict[int, np.ndarray] = field(default_factory=dict)


def pca_additive_fit(
    pca: PcaModel, single_pseudobulks: dict[int, np.ndarray], ctrl_mean: np.ndarray
) -> PcaAdditiveModel:
    ctrl_score = pca.project(ctrl_mean)[0]
    deltas = {
        int(key): pca.project(mean)[0] - ctrl_score
        for key, mean in single_pseudobulks.items()
    }
    return PcaAdditiveModel(pca=pca, ctrl_score=ctrl_score, deltas=deltas)


def pca_additive_predict(model: PcaAdditiveModel, pair: tuple[int, ...]) -> np.ndarray:
    score = model.ctrl_score.copy()
    for target in pair:
        if target not in model.deltas:
            raise DegenerateInputError(f"perturbation {target} not seen during fitting")
        score += model.deltas[target]
    return model.pca.reconstruct(score)[0]


def reconstruction_error(pca: PcaModel, x: np.ndarray) -> float:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    round_trip = pca.reconstruct(pca.project(x))
    return float(np.sqrt(np.mean((x - round_trip) ** 2)))


def data_rank(x: np.ndarray, tol: float = 1e-8) -> int:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return rank(x - x.mean(axis=0), tol=tol)
