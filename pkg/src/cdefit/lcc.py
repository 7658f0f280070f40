"""Local case-control subsampling of the weighted logistic regression.

A pilot slope estimate defines per-row acceptance probabilities |z - p~|
with p~ = logistic(pilot^T h(x, y)) and no group offset. Fitting the
offset-kept regression on the accepted rows estimates theta - pilot, so the
pilot is added back afterwards.

Row r draws its uniform from counter slot r of a Philox stream keyed by the
seed, so any parallel partition of the rows reproduces the same subsample.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import DataError, EmptySubsampleError
from .feature_map import FeatureMap, evaluate, evaluate_block, evaluate_pairs
from .likelihood import iter_chunks
from .wlr import SolverConfig, WLRProblem, WLRRows, fit_wlr_rows

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Pilot:
    """Preliminary slope estimate driving the acceptance probabilities."""

    theta_tilde: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.theta_tilde, dtype=float)
        if t.ndim != 1 or not np.all(np.isfinite(t)):
            raise DataError("pilot estimate must be a finite vector")
        object.__setattr__(self, "theta_tilde", t)


@dataclass(frozen=True)
class Subsample:
    """Accepted virtual-row indices (cases first, then controls)."""

    indices: np.ndarray  # sorted row indices into the WLRProblem enumeration
    seed: int
    n_cases: int
    n_controls: int

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        if idx.size and np.any(np.diff(idx) <= 0):
            raise DataError("subsample indices must be unique and ascending")
        if self.n_cases + self.n_controls != idx.size:
            raise DataError("case/control counts do not match the index list")
        object.__setattr__(self, "indices", idx)

    @property
    def size(self) -> int:
        return self.indices.size


def acceptance_prob(pilot: Pilot, z: int, x, y, fm: FeatureMap) -> float:
    """|z - p~(x, y)|: 1 - p~ for cases, p~ for controls."""
    if z not in (0, 1):
        raise DataError("z must be 0 or 1")
    p = float(expit(evaluate(fm, x, y) @ pilot.theta_tilde))
    return 1.0 - p if z == 1 else p


def acceptance_probs(problem: WLRProblem, pilot: Pilot) -> np.ndarray:
    """Acceptance probability of every virtual row, in row order."""
    n, m = problem.dataset.n, problem.grid.m
    theta = pilot.theta_tilde
    a = np.empty(n * (1 + m))
    for sl, case, ctrl in iter_chunks(problem.dataset, problem.grid, problem.fm):
        a[sl] = expit(-(case @ theta))  # cases: 1 - p~
        block = expit(ctrl @ theta)     # controls: p~
        a[n + sl.start * m: n + sl.stop * m] = block.ravel()
    return a


def _row_uniforms(seed: int, n_rows: int) -> np.ndarray:
    """Uniform for row r = counter slot r of a Philox stream keyed by seed."""
    gen = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
    return gen.random(n_rows)


def subsample(problem: WLRProblem, pilot: Pilot, seed: int) -> Subsample:
    """Accept each row independently with its acceptance probability."""
    n, m = problem.dataset.n, problem.grid.m
    a = acceptance_probs(problem, pilot)
    u = _row_uniforms(seed, a.size)
    accepted = np.flatnonzero(u < a)
    n_cases = int(np.searchsorted(accepted, n))
    if accepted.size == 0:
        raise EmptySubsampleError(
            "acceptance sampling rejected every row; use a less extreme pilot "
            "or a different seed"
        )
    return Subsample(indices=accepted, seed=seed,
                     n_cases=n_cases, n_controls=accepted.size - n_cases)


def subsample_rows(problem: WLRProblem, sub: Subsample) -> WLRRows:
    """Materialize the accepted rows with their original weights and offsets."""
    n, m = problem.dataset.n, problem.grid.m
    case_idx = sub.indices[:sub.n_cases]
    ctrl_flat = sub.indices[sub.n_cases:] - n
    ctrl_i, ctrl_j = np.divmod(ctrl_flat, m)
    case_feats = evaluate_pairs(problem.fm, problem.dataset.xs[case_idx],
                                problem.dataset.ys[case_idx])
    ctrl_feats = evaluate_pairs(problem.fm, problem.dataset.xs[ctrl_i],
                                problem.grid.points[ctrl_j])
    r = sub.size
    z = np.zeros(r)
    z[:sub.n_cases] = 1.0
    weights = np.full(r, problem.W)
    weights[:sub.n_cases] = 1.0
    offsets = np.concatenate([problem.eta[case_idx], problem.eta[ctrl_i]])
    features = np.concatenate([case_feats, ctrl_feats], axis=0)
    return WLRRows(z=z, weights=weights, offsets=offsets, features=features)


def fit_lcc(problem: WLRProblem, pilot: Pilot, seed: int,
            cfg: SolverConfig | None = None) -> np.ndarray:
    """Subsample, fit on the accepted rows, and add the pilot back."""
    theta_s, _, _ = fit_lcc_diag(problem, pilot, seed, cfg)
    return theta_s + pilot.theta_tilde


def fit_lcc_diag(problem: WLRProblem, pilot: Pilot, seed: int,
                 cfg: SolverConfig | None = None):
    """Uncorrected subsample fit theta_S plus (diagnostics, subsample)."""
    sub = subsample(problem, pilot, seed)
    rows = subsample_rows(problem, sub)
    d = problem.fm.out_dim
    distinct = np.unique(rows.features, axis=0).shape[0]
    if distinct < d + 1:
        # Rank-deficient draw: a Newton step would abort, so escalate to the
        # full problem for this update (caller sees theta_S = fit - pilot).
        log.warning("subsample has %d distinct feature rows (< d+1=%d); "
                    "falling back to the full problem", distinct, d + 1)
        from .wlr import fit_wlr_fixed_offsets_diag
        theta, diag = fit_wlr_fixed_offsets_diag(problem, pilot.theta_tilde, cfg)
        return theta - pilot.theta_tilde, diag, sub
    theta_s, diag = fit_wlr_rows(rows, np.zeros(d), cfg,
                                 n_scale=problem.dataset.n)
    return theta_s, diag, sub
