"""Quantitative metrics: matched-correlation recovery, block regression,
population fidelity, pseudobulk deltas, DE-gene diagnostics, linear probing,
and the perturbation hit map.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from typing import Any

import numpy as np

from .numerics import (
    DegenerateInputError,
    linear_sum_assignment,
    ols_r2,
    pearson_with_flag,
)


def mcc(z_true: np.ndarray, z_learned: np.ndarray) -> float:
    """Mean of the optimally matched absolute correlations.

    Invariant to column permutation, nonzero scaling, and sign flips of
    either argument; collapsed (constant) components correlate as zero.
    """
    z_true = np.asarray(z_true, dtype=float)
    z_learned = np.asarray(z_learned, dtype=float)
    if z_true.shape != z_learned.shape:
        raise DegenerateInputError(f"shape mismatch: {z_true.shape} vs {z_learned.shape}")
    d = z_true.shape[1]
    corr = np.zeros((d, d))
    for i in range(d):
        for j in range(d):
            r, _ = pearson_with_flag(z_true[:, i], z_learned[:, j])
            corr[i, j] = abs(r)
    assignment = linear_sum_assignment(corr, maximize=True)
    return float(assignment.total_cost / d)


def mcc_permutation(z_true: np.ndarray, z_learned: np.ndarray) -> tuple[float, tuple[int, ...]]:
    """MCC together with the matched learned-column per true-column."""
    z_true = np.asarray(z_true, dtype=float)
    z_learned = np.asarray(z_learned, dtype=float)
    d = z_true.shape[1]
    corr = np.zeros((d, d))
    for i in range(d):
        for j in range(d):
            r, _ = pearson_with_flag(z_true[:, i], z_learned[:, j])
            corr[i, j] = abs(r)
    assignment = linear_sum_assignment(corr, maximize=True)
    return float(assignment.total_cost / d), assignment.permutation


def block_r2(z_true_block: np.ndarray, z_learned_block: np.ndarray) -> float:
    """Affine regression of the true block on the learned block; values near
    one certify block-level recovery."""
    return ols_r2(z_learned_block, z_true_block)


def population_metrics(generated: np.ndarray, observed: np.ndarray) -> dict[str, float]:
    """Mean-profile fidelity: RMSE between the two mean vectors and the
    regression R-squared of observed means on generated means over genes."""
    generated = np.atleast_2d(np.asarray(generated, dtype=float))
    observed = np.atleast_2d(np.asarray(observed, dtype=float))
    gen_mean = generated.mean(axis=0)
    obs_mean = observed.mean(axis=0)
    rmse = float(np.sqrt(np.mean((gen_mean - obs_mean) ** 2)))
    r2 = ols_r2(gen_mean[:, None], obs_mean[:, None])
    return {"rmse": rmse, "r2_population": float(r2)}


def pseudobulk_metrics(
    pred_mean: np.ndarray, obs_mean: np.ndarray, ctrl_mean: np.ndarray
) -> dict[str, float]:
    """Condition-level error and the correlation of predicted vs observed
    expression changes relative to control."""
    pred_mean = np.asarray(pred_mean, dtype=float)
    obs_mean = np.asarray(obs_mean, dtype=float)
    ctrl_mean = np.asarray(ctrl_mean, dtype=float)
    if not (pred_mean.shape == obs_mean.shape == ctrl_mean.shape):
        raise DegenerateInputError("gene dimensions differ")
    l2 = float(np.linalg.norm(pred_mean - obs_mean))
    delta_r, degenerate = pearson_with_flag(pred_mean - ctrl_mean, obs_mean - ctrl_mean)
    return {"l2": l2, "delta_pearson": float(delta_r), "delta_degenerate": bool(degenerate)}


def de_gene_indices(obs_mean: np.ndarray, ctrl_mean: np.ndarray, k: int) -> np.ndarray:
    """Top-k genes by absolute mean shift; ties break toward lower index."""
    shift = np.abs(np.asarray(obs_mean, dtype=float) - np.asarray(ctrl_mean, dtype=float))
    if k > shift.size:
        raise DegenerateInputError(f"k={k} exceeds gene count {shift.size}")
    order = np.lexsort((np.arange(shift.size), -shift))
    return np.sort(order[:k])


def de_gene_metrics(
    pred_cells: np.ndarray,
    obs_cells: np.ndarray,
    ctrl_cells: np.ndarray,
    k: int = 20,
) -> dict[str, float]:
    """Population metrics restricted to the k most shifted genes."""
    pred_cells = np.atleast_2d(np.asarray(pred_cells, dtype=float))
    obs_cells = np.atleast_2d(np.asarray(obs_cells, dtype=float))
    ctrl_cells = np.atleast_2d(np.asarray(ctrl_cells, dtype=float))
    idx = de_gene_indices(obs_cells.mean(axis=0), ctrl_cells.mean(axis=0), k)
    sub = population_metrics(pred_cells[:, idx], obs_cells[:, idx])
    return {"de_rmse": sub["rmse"], "de_r2": sub["r2_population"]}


# --------------------------------------------------------------------------- #
# linear probe
# --------------------------------------------------------------------------- #

PROBE_ITERS = 500
PROBE_LR = 0.1
PROBE_L2 = 1e-4


def _stratified_split(
    labels: np.ndarray, rng: np.random.Generator, train_frac: float = 0.8
) -> tuple[np.ndarray, np.ndarray]:
    train_idx: list[np.ndarray] = []
    test_idx: list[np.ndarray] = []
    for cls in np.unique(labels):
        members = np.flatnonzero(labels == cls)
        members = members[rng.permutation(members.size)]
        n_train = max(1, int(round(train_frac * members.size)))
        if n_train == members.size and members.size > 1:
            n_train -= 1
        train_idx.append(members[:n_train])
        test_idx.append(members[n_train:])
    return np.concatenate(train_idx), np.concatenate(test_idx)


def linear_probe(
    representations: np.ndarray, labels: np.ndarray, split_seed: int = 0
) -> float:
    """Held-out accuracy of a multinomial softmax probe on frozen features.

    Features are standardized with training statistics; the probe trains by
    full-batch gradient descent (500 iterations, lr 0.1, l2 1e-4) on an
    80/20 stratified split.
    """
    x = np.atleast_2d(np.asarray(representations, dtype=float))
    y = np.asarray(labels)
    classes, y_enc = np.unique(y, return_inverse=True)
    n_classes = classes.size
    if n_classes < 2:
        raise DegenerateInputError("probe needs at least two classes")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(split_seed), 0x9E37])))
    train_idx, test_idx = _stratified_split(y_enc, rng)
    if test_idx.size == 0:
        raise DegenerateInputError("stratified split produced an empty test set")
    mean = x[train_idx].mean(axis=0)
    std = x[train_idx].std(axis=0)
    std[std == 0] = 1.0
    xt = (x[train_idx] - mean) / std
    xe = (x[test_idx] - mean) / std
    yt = y_enc[train_idx]

    n, d = xt.shape
    w = np.zeros((n_classes, d))
    b = np.zeros(n_classes)
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), yt] = 1.0
    for _ in range(PROBE_ITERS):
        logits = xt @ w.T + b
        logits -= logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        p /= p.sum(axis=1, keepdims=True)
        err = (p - onehot) / n
        grad_w = err.T @ xt + PROBE_L2 * w
        grad_b = err.sum(axis=0)
        w -= PROBE_LR * grad_w
        b -= PROBE_LR * grad_b
    pred = np.argmax(xe @ w.T + b, axis=1)
    return float(np.mean(pred == y_enc[test_idx]))


# --------------------------------------------------------------------------- #
# hit map
# --------------------------------------------------------------------------- #


@dataclass
class HitMap:
    """Absolute responsive-latent shifts (components x perturbations)."""

    magnitudes: np.ndarray
    condition_ids: list[int]
    hits: np.ndarray  # argmax component per condition column

    def to_csv(self) -> str:
        header = "component," + ",".join(f"cond_{c}" for c in self.condition_ids)
        lines = [header]
        for i in range(self.magnitudes.shape[0]):
            vals = ",".join(repr(float(v)) for v in self.magnitudes[i])
            lines.append(f"{i},{vals}")
        lines.append("hit," + ",".join(str(int(h)) for h in self.hits))
        return "\n".join(lines) + "\n"


def hit_map_from_latents(
    z_nu: np.ndarray, condition: np.ndarray, control_id: int = 0
) -> HitMap:
    """Hit map from responsive latents and a per-row condition label.

    Each column holds the absolute mean shift of every component for one
    non-control condition relative to the control rows.
    """
    z_nu = np.atleast_2d(np.asarray(z_nu, dtype=float))
    condition = np.asarray(condition)
    ctrl_rows = condition == control_id
    if not np.any(ctrl_rows):
        raise DegenerateInputError("no control rows for the hit map")
    ctrl_mean = z_nu[ctrl_rows].mean(axis=0)
    cond_ids = [int(c) for c in np.unique(condition) if c != control_id]
    cols = []
    for cid in cond_ids:
        members = condition == cid
        if not np.any(members):
            raise DegenerateInputError(f"condition {cid} has zero cells")
        cols.append(np.abs(z_nu[members].mean(axis=0) - ctrl_mean))
    magnitudes = np.stack(cols, axis=1) if cols else np.zeros((z_nu.shape[1], 0))
    hits = magnitudes.argmax(axis=0) if magnitudes.size else np.zeros(0, dtype=int)
    return HitMap(magnitudes=magnitudes, condition_ids=cond_ids, hits=hits)


# --------------------------------------------------------------------------- #
# report container
# --------------------------------------------------------------------------- #


@dataclass
class EvalReport:
    """All scalar metrics plus per-condition tables."""

    mcc_nu: float | None = None
    r2_block_nu: float | None = None
    r2_block_iota: float | None = None
    rmse: float | None = None
    r2_population: float | None = None
    pseudobulk_l2: float | None = None
    delta_pearson: float | None = None
    de_rmse: float | None = None
    de_r2: float | None = None
    probe_accuracy: float | None = None
    probe_accuracy_pca: float | None = None
    per_condition: list[dict[str, Any]] = field(default_factory=list)
    metadata: dict[str, Any] = field(default_factory=dict)

    def to_json_dict(self) -> dict[str, Any]:
        return asdict(self)

    PER_CONDITION_COLUMNS = (
        "condition",
        "n_observed",
        "n_generated",
        "rmse",
        "r2_population",
        "l2",
        "delta_pearson",
        "de_rmse",
        "de_r2",
    )

    def per_condition_csv(self) -> str:
        lines = [",".join(self.PER_CONDITION_COLUMNS)]
        for row in self.per_condition:
            lines.append(
                ",".join(
                    repr(row[c]) if isinstance(row.get(c), float) else str(row.get(c, ""))
                    for c in self.PER_CONDITION_COLUMNS
                )
            )
        return "\n".join(lines) + "\n"
