"""Grid-based log-likelihood of the conditional density model.

The model is f(y|x) proportional to exp(theta^T h(x, y)) with the normalizing
integral replaced by a sum over the m shared background points. Everything
here drops the constant grid cell volume, so the stored per-observation
log-normalizers alpha_i make the *discrete* sums equal one, not the integral.
Proper density normalization happens in the density module.

All reductions run in a fixed chunked order so results are bitwise
reproducible run to run.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .dataset import BackgroundGrid, Dataset
from .errors import DataError
from .feature_map import FeatureMap, evaluate_block, evaluate_pairs

# Groups are processed in blocks of this many observations; bounds transient
# memory at chunk*m*d floats without changing any result.
CHUNK = 1024


@dataclass(frozen=True)
class ModelState:
    """Slopes theta and per-observation log-normalizers alpha."""

    theta: np.ndarray  # (d,)
    alpha: np.ndarray  # (n,)

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        alpha = np.asarray(self.alpha, dtype=float)
        if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(alpha))):
            raise DataError("model state must be finite")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "alpha", alpha)

    def eta(self, W: float) -> np.ndarray:
        """Offsets for the weighted logistic regression: alpha - log W."""
        return self.alpha - np.log(W)


class FeatureChunks:
    """Group-chunked feature blocks for one (dataset, grid, feature map).

    Iterating yields (slice, case_features (B,d), control_features (B,m,d)).
    Transient memory stays bounded by one chunk; when the whole dataset fits
    in a single chunk that one block is kept and reused across passes.
    """

    def __init__(self, dataset: Dataset, grid: BackgroundGrid, fm: FeatureMap,
                 chunk: int = CHUNK):
        self.dataset = dataset
        self.grid = grid
        self.fm = fm
        self.chunk = chunk
        self._single = None
        if dataset.n <= chunk:
            self._single = self._build(slice(0, dataset.n))

    def _build(self, sl: slice):
        X = self.dataset.xs[sl]
        case = evaluate_pairs(self.fm, X, self.dataset.ys[sl])
        ctrl = evaluate_block(self.fm, X, self.grid.points)
        if not (np.all(np.isfinite(case)) and np.all(np.isfinite(ctrl))):
            raise DataError("basis produced non-finite values")
        return sl, case, ctrl

    def __iter__(self):
        if self._single is not None:
            yield self._single
            return
        n = self.dataset.n
        for start in range(0, n, self.chunk):
            yield self._build(slice(start, min(start + self.chunk, n)))


def iter_chunks(dataset: Dataset, grid: BackgroundGrid, fm: FeatureMap,
                chunk: int = CHUNK):
    """Yield (slice, case_features (B,d), control_features (B,m,d)) blocks."""
    yield from FeatureChunks(dataset, grid, fm, chunk)


def _case_and_lse(theta, dataset, grid, fm, chunks=None):
    """Per-observation case kernel values and log-sum-exp over the grid."""
    theta = np.asarray(theta, dtype=float)
    g_case = np.empty(dataset.n)
    lse = np.empty(dataset.n)
    for sl, case, ctrl in chunks or iter_chunks(dataset, grid, fm):
        g_case[sl] = case @ theta
        lse[sl] = logsumexp(ctrl @ theta, axis=1)
    return g_case, lse


def target_loglik(theta, dataset: Dataset, grid: BackgroundGrid, fm: FeatureMap) -> float:
    """sum_i [theta^T h(x_i,y_i) - log sum_j exp(theta^T h(x_i,y_j))]."""
    g_case, lse = _case_and_lse(theta, dataset, grid, fm)
    return float(np.sum(g_case - lse))


def target_score(theta, dataset: Dataset, grid: BackgroundGrid, fm: FeatureMap) -> np.ndarray:
    """Gradient of target_loglik: case features minus softmax-averaged grid features."""
    theta = np.asarray(theta, dtype=float)
    d = fm.out_dim
    score = np.zeros(d)
    for sl, case, ctrl in iter_chunks(dataset, grid, fm):
        G = ctrl @ theta  # (B, m)
        P = np.exp(G - logsumexp(G, axis=1, keepdims=True))
        score += case.sum(axis=0)
        score -= ctrl.reshape(-1, d).T @ P.ravel()
    return score


def target_hessian(theta, dataset: Dataset, grid: BackgroundGrid, fm: FeatureMap) -> np.ndarray:
    """Hessian of target_loglik: minus the summed softmax covariances of h."""
    theta = np.asarray(theta, dtype=float)
    d = fm.out_dim
    H = np.zeros((d, d))
    for sl, case, ctrl in iter_chunks(dataset, grid, fm):
        G = ctrl @ theta
        P = np.exp(G - logsumexp(G, axis=1, keepdims=True))
        mean = np.einsum("bm,bmk->bk", P, ctrl)  # (B, d)
        F = ctrl.reshape(-1, d)
        H -= (F * P.ravel()[:, None]).T @ F
        H += mean.T @ mean
    return H


def alpha_closed_form(theta, dataset: Dataset, grid: BackgroundGrid, fm: FeatureMap) -> np.ndarray:
    """alpha_i = -log sum_j exp(theta^T h(x_i, y_j)).

    Plugging this alpha into complete_loglik makes every penalty term
    sum_j exp(alpha_i + theta^T h(x_i, y_j)) equal exactly 1.
    """
    _, lse = _case_and_lse(theta, dataset, grid, fm)
    return -lse


def complete_loglik(alpha, theta, dataset: Dataset, grid: BackgroundGrid, fm: FeatureMap) -> float:
    """sum_i [alpha_i + theta^T h(x_i,y_i) - sum_j exp(alpha_i + theta^T h(x_i,y_j))].

    Returns -inf if the penalty term genuinely overflows.
    """
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape != (dataset.n,):
        raise DataError(f"alpha has shape {alpha.shape}, expected ({dataset.n},)")
    g_case, lse = _case_and_lse(theta, dataset, grid, fm)
    log_penalty = alpha + lse  # log sum_j exp(alpha_i + g_ij), computed stably
    if np.any(log_penalty > 700.0):
        return float("-inf")
    return float(np.sum(alpha + g_case - np.exp(log_penalty)))
