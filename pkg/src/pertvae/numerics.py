"""Dense linear algebra, probability kernels, and validation utilities.

Everything in this module is deterministic and pure; random draws only
happen through explicit :class:`RngStream` substreams so that a single
seed reproduces an entire experiment bit-for-bit.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.optimize


class DegenerateInputError(ValueError):
    """Raised when an input is outside an operation's domain."""


# --------------------------------------------------------------------------- #
# seeded randomness
# --------------------------------------------------------------------------- #


class RngStream:
    """Counter-based random source with named, independent substreams.

    Substreams are derived from ``(seed, crc32(purpose), index)`` through a
    Philox counter generator, so the same seed yields the same draws on any
    platform and the draws of one purpose never shift when another purpose
    consumes more randomness.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)

    def stream(self, purpose: str, index: int = 0) -> np.random.Generator:
        key = zlib.crc32(purpose.encode("utf-8"))
        seq = np.random.SeedSequence([self.seed, key, int(index)])
        return np.random.Generator(np.random.Philox(seq))


# --------------------------------------------------------------------------- #
# triangular systems
# --------------------------------------------------------------------------- #


def _check_strictly_lower(mat: np.ndarray, tol: float = 0.0) -> None:
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise DegenerateInputError(f"expected a square matrix, got {mat.shape}")
    upper = np.triu(mat)
    if np.max(np.abs(upper)) > tol:
        raise DegenerateInputError("matrix has entries on or above the diagonal")


def unit_lower_solve(lam: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``(I - lam) z = b`` by forward substitution.

    ``lam`` must be strictly lower triangular; no inverse is formed.
    """
    lam = np.asarray(lam, dtype=float)
    b = np.asarray(b, dtype=float)
    _check_strictly_lower(lam)
    if b.shape[-1] != lam.shape[0]:
        raise DegenerateInputError(
            f"dimension mismatch: matrix {lam.shape} vs vector {b.shape}"
        )
    z = b.astype(float).copy()
    for i in range(1, lam.shape[0]):
        z[..., i] += z[..., :i] @ lam[i, :i]
    return z


def unit_lower_solve_batch(lam: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise ``(I - lam_i) z_i = b_i`` for a batch of triangular systems.

    ``lam`` has shape (n, d, d) with each slice strictly lower triangular,
    ``b`` has shape (n, d).
    """
    lam = np.asarray(lam, dtype=float)
    b = np.asarray(b, dtype=float)
    n, d = b.shape
    z = b.copy()
    for j in range(1, d):
        z[:, j] += np.einsum("nk,nk->n", lam[:, j, :j], z[:, :j])
    return z


def unit_lower_solve_transpose_batch(lam: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Row-wise ``(I - lam_i)^T s_i = g_i`` by back substitution."""
    lam = np.asarray(lam, dtype=float)
    g = np.asarray(g, dtype=float)
    n, d = g.shape
    s = g.copy()
    for j in range(d - 2, -1, -1):
        s[:, j] += np.einsum("nk,nk->n", lam[:, j + 1 :, j], s[:, j + 1 :])
    return s


# --------------------------------------------------------------------------- #
# probability kernels
# --------------------------------------------------------------------------- #


def gauss_kl_diag(
    mu_q: np.ndarray,
    var_q: np.ndarray,
    mu_p: np.ndarray,
    var_p: np.ndarray,
) -> float:
    """KL divergence between diagonal Gaussians, KL(q || p)."""
    mu_q, var_q = np.asarray(mu_q, dtype=float), np.asarray(var_q, dtype=float)
    mu_p, var_p = np.asarray(mu_p, dtype=float), np.asarray(var_p, dtype=float)
    if np.any(var_q <= 0) or np.any(var_p <= 0):
        raise DegenerateInputError("variances must be strictly positive")
    terms = var_q / var_p + (mu_p - mu_q) ** 2 / var_p - 1.0 + np.log(var_p / var_q)
    return float(0.5 * np.sum(terms))


def pearson_with_flag(x: np.ndarray, y: np.ndarray) -> tuple[float, bool]:
    """Pearson correlation plus a degeneracy flag.

    A constant argument makes the correlation undefined; in that case the
    value 0.0 is returned with ``degenerate=True`` so aggregate metrics over
    collapsed components stay defined.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise DegenerateInputError(f"length mismatch: {x.shape} vs {y.shape}")
    xc = x - x.mean()
    yc = y - y.mean()
    sx = np.sqrt(np.sum(xc * xc))
    sy = np.sqrt(np.sum(yc * yc))
    if sx == 0.0 or sy == 0.0:
        return 0.0, True
    return float(np.sum(xc * yc) / (sx * sy)), False


def pearson(x: np.ndarray, y: np.ndarray) -> float:
    return pearson_with_flag(x, y)[0]


# --------------------------------------------------------------------------- #
# assignment
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class Assignment:
    """Optimal row-to-column matching of a square cost matrix."""

    permutation: tuple[int, ...]
    total_cost: float


def linear_sum_assignment(cost: np.ndarray, maximize: bool = False) -> Assignment:
    """Exact optimal assignment (Hungarian-style) of a square cost matrix."""
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise DegenerateInputError(f"cost matrix must be square, got {cost.shape}")
    if not np.all(np.isfinite(cost)):
        raise DegenerateInputError("cost matrix must be finite")
    rows, cols = scipy.optimize.linear_sum_assignment(cost, maximize=maximize)
    perm = tuple(int(c) for c in cols[np.argsort(rows)])
    total = float(cost[rows, cols].sum())
    return Assignment(permutation=perm, total_cost=total)


# --------------------------------------------------------------------------- #
# regression and rank
# --------------------------------------------------------------------------- #

OLS_JITTER = 1e-8


def ols_fit(predictors: np.ndarray, targets: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares fit ``targets ~ predictors @ W + b`` via normal equations.

    A ridge jitter of ``OLS_JITTER`` on the Gram diagonal keeps collinear
    predictors solvable. Returns (W, b).
    """
    x = np.asarray(predictors, dtype=float)
    t = np.asarray(targets, dtype=float)
    if t.ndim == 1:
        t = t[:, None]
    n, p = x.shape
    x1 = np.concatenate([x, np.ones((n, 1))], axis=1)
    gram = x1.T @ x1
    gram[np.diag_indices_from(gram)] += OLS_JITTER
    try:
        coef = np.linalg.solve(gram, x1.T @ t)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - jitter makes this rare
        raise DegenerateInputError("rank-deficient Gram matrix beyond jitter") from exc
    if not np.all(np.isfinite(coef)):
        raise DegenerateInputError("rank-deficient Gram matrix beyond jitter")
    return coef[:-1], coef[-1]


def ols_r2(predictors: np.ndarray, targets: np.ndarray) -> float:
    """Coefficient of determination of an affine least-squares fit.

    Multi-output targets aggregate residual and total sums of squares over
    all columns.
    """
    x = np.asarray(predictors, dtype=float)
    t = np.asarray(targets, dtype=float)
    if t.ndim == 1:
        t = t[:, None]
    n, p = x.shape
    if n <= p:
        raise DegenerateInputError(f"need more rows ({n}) than predictors ({p})")
    w, b = ols_fit(x, t)
    pred = x @ w + b
    ss_res = float(np.sum((t - pred) ** 2))
    ss_tot = float(np.sum((t - t.mean(axis=0)) ** 2))
    if ss_tot == 0.0:
        return 1.0 if ss_res == 0.0 else 0.0
    return 1.0 - ss_res / ss_tot


def rank(mat: np.ndarray, tol: float = 1e-8) -> int:
    """Numerical rank: singular values below ``tol * largest`` count as zero."""
    mat = np.asarray(mat, dtype=float)
    if mat.size == 0:
        return 0
    sv = np.linalg.svd(mat, compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return 0
    return int(np.sum(sv > tol * sv[0]))


# --------------------------------------------------------------------------- #
# gradient validation
# --------------------------------------------------------------------------- #


def finite_diff_check(
    loss: Callable[[np.ndarray], float],
    params: np.ndarray,
    analytic_grad: np.ndarray,
    step: float = 1e-5,
) -> float:
    """Max relative error between ``analytic_grad`` and central differences.

    Relative error per coordinate is |g_fd - g_an| / max(1e-8, |g_fd| + |g_an|).
    """
    params = np.asarray(params, dtype=float)
    grad = np.asarray(analytic_grad, dtype=float)
    if params.shape != grad.shape:
        raise DegenerateInputError("params and gradient shapes differ")
    if step <= 0:
        raise DegenerateInputError("step must be positive")
    worst = 0.0
    for i in range(params.size):
        probe = params.copy()
        probe.flat[i] += step
        up = float(loss(probe))
        probe.flat[i] -= 2 * step
        down = float(loss(probe))
        if not (np.isfinite(up) and np.isfinite(down)):
            raise DegenerateInputError("loss is not finite at a probe point")
        g_fd = (up - down) / (2 * step)
        g_an = grad.flat[i]
        err = abs(g_fd - g_an) / max(1e-8, abs(g_fd) + abs(g_an))
        worst = max(worst, err)
    return worst


def brute_force_assignment(cost: np.ndarray, maximize: bool = False) -> Assignment:
    """Exhaustive-search assignment oracle for small matrices."""
    import itertools

    cost = np.asarray(cost, dtype=float)
    n = cost.shape[0]
    best_perm: Sequence[int] | None = None
    best_total = None
    for perm in itertools.permutations(range(n)):
        total = float(sum(cost[i, perm[i]] for i in range(n)))
        if best_total is None or (total > best_total if maximize else total < best_total):
            best_total = total
            best_perm = perm
    assert best_perm is not None and best_total is not None
    return Assignment(permutation=tuple(best_perm), total_cost=best_total)
