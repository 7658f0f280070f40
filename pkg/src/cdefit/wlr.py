"""Weighted logistic regression with fixed per-group offsets.

This is the slope-update step of the alternating fit: n case rows (z=1,
weight 1) and n*m control rows (z=0, weight W) share a per-group offset
eta_i, and theta maximizes the weighted Bernoulli log-likelihood

    sum_rows w * [z*(offset + theta^T f) - log(1 + exp(offset + theta^T f))].

Rows are never materialized as an (n + n*m) x d design; gradient and Hessian
accumulate group-chunk by group-chunk in a fixed order. A small explicit-row
variant (WLRRows) backs subsampled fits and toy problems.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .dataset import BackgroundGrid, Dataset
from .errors import DataError, DivergenceError, NonConvergenceError
from .feature_map import FeatureMap
from .likelihood import FeatureChunks

log = logging.getLogger(__name__)

# Iterates beyond this norm are treated as separation-driven divergence.
_DIVERGENCE_NORM = 1e6
_MAX_RIDGE = 1e-2


@dataclass(frozen=True)
class SolverConfig:
    max_newton_iters: int = 50
    grad_tol: float = 1e-8  # on ||gradient||_inf / n
    ridge: float = 1e-8
    step_halving_max: int = 30

    def __post_init__(self):
        if min(self.max_newton_iters, self.grad_tol, self.ridge,
               self.step_halving_max) <= 0:
            raise DataError("solver config fields must be positive")


@dataclass(frozen=True)
class WLRProblem:
    """Virtual enumeration of the n cases and n*m controls.

    Row r < n is case r (z=1, weight 1, offset eta[r], features h(x_r, y_r));
    row n + i*m + j is control (i, j) (z=0, weight W, offset eta[i], features
    h(x_i, y^(j))). Feature rows are built on demand from the parts.
    """

    dataset: Dataset
    grid: BackgroundGrid
    fm: FeatureMap
    eta: np.ndarray  # (n,)
    W: float
    chunks: FeatureChunks | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        eta = np.asarray(self.eta, dtype=float)
        if eta.shape != (self.dataset.n,):
            raise DataError(f"eta has shape {eta.shape}, expected ({self.dataset.n},)")
        if not np.all(np.isfinite(eta)):
            raise DataError("offsets must be finite")
        if not self.W > 0:
            raise DataError("W must be positive")
        object.__setattr__(self, "eta", eta)
        if self.chunks is None:
            object.__setattr__(
                self, "chunks", FeatureChunks(self.dataset, self.grid, self.fm))

    @property
    def n_rows(self) -> int:
        return self.dataset.n * (1 + self.grid.m)


@dataclass(frozen=True)
class WLRRows:
    """Materialized weighted logistic rows, for subsamples and small problems."""

    z: np.ndarray        # (r,) in {0, 1}
    weights: np.ndarray  # (r,) > 0
    offsets: np.ndarray  # (r,)
    features: np.ndarray  # (r, d)

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        off = np.asarray(self.offsets, dtype=float)
        feats = np.asarray(self.features, dtype=float)
        r = z.shape[0]
        if w.shape != (r,) or off.shape != (r,) or feats.shape[:1] != (r,):
            raise DataError("row arrays must share their leading dimension")
        if not np.all((z == 0) | (z == 1)):
            raise DataError("z must be 0/1")
        if not np.all(w > 0):
            raise DataError("row weights must be positive")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "offsets", off)
        object.__setattr__(self, "features", feats)


def _problem_fgh(problem: WLRProblem, theta, want_grad=True, want_hess=True):
    theta = np.asarray(theta, dtype=float)
    d = problem.fm.out_dim
    W = problem.W
    f = 0.0
    g = np.zeros(d) if want_grad else None
    A = np.zeros((d, d)) if want_hess else None  # negated Hessian
    for sl, case, ctrl in problem.chunks:
        eta = problem.eta[sl]
        s = eta + case @ theta            # (B,) case linear predictors
        S = eta[:, None] + ctrl @ theta   # (B, m) control linear predictors
        f += float(np.sum(s - np.logaddexp(0.0, s)))
        f -= W * float(np.sum(np.logaddexp(0.0, S)))
        if want_grad or want_hess:
            p = expit(S)
            F = ctrl.reshape(-1, d)
        if want_grad:
            g += case.T @ expit(-s)       # z - p with z = 1
            g -= W * (F.T @ p.ravel())
        if want_hess:
            wc = expit(s) * expit(-s)
            A += (case * wc[:, None]).T @ case
            Wc = (p * expit(-S)).ravel()
            A += W * ((F * Wc[:, None]).T @ F)
    return f, g, A


def _rows_fgh(rows: WLRRows, theta, want_grad=True, want_hess=True):
    theta = np.asarray(theta, dtype=float)
    s = rows.offsets + rows.features @ theta
    f = float(np.sum(rows.weights * (rows.z * s - np.logaddexp(0.0, s))))
    g = A = None
    if want_grad:
        g = rows.features.T @ (rows.weights * (rows.z - expit(s)))
    if want_hess:
        wgt = rows.weights * expit(s) * expit(-s)
        A = (rows.features * wgt[:, None]).T @ rows.features
    return f, g, A


def wlr_loglik(problem: WLRProblem, theta) -> float:
    return _problem_fgh(problem, theta, want_grad=False, want_hess=False)[0]


def wlr_gradient(problem: WLRProblem, theta) -> np.ndarray:
    return _problem_fgh(problem, theta, want_hess=False)[1]


def wlr_hessian(problem: WLRProblem, theta) -> np.ndarray:
    return -_problem_fgh(problem, theta, want_grad=False)[2]


def rows_loglik(rows: WLRRows, theta) -> float:
    return _rows_fgh(rows, theta, want_grad=False, want_hess=False)[0]


def rows_gradient(rows: WLRRows, theta) -> np.ndarray:
    return _rows_fgh(rows, theta, want_hess=False)[1]


def rows_hessian(rows: WLRRows, theta) -> np.ndarray:
    return -_rows_fgh(rows, theta, want_grad=False)[2]


def fit_wlr_fixed_offsets(problem: WLRProblem, init, cfg: SolverConfig | None = None) -> np.ndarray:
    """Maximize the weighted logistic log-likelihood over theta, offsets fixed."""
    theta, _ = fit_wlr_fixed_offsets_diag(problem, init, cfg)
    return theta


def fit_wlr_fixed_offsets_diag(problem: WLRProblem, init, cfg: SolverConfig | None = None):
    """fit_wlr_fixed_offsets plus a diagnostics dict (iterations, grad norm, ridge)."""
    cfg = cfg or SolverConfig()
    return _newton(
        lambda t, wg=True, wh=True: _problem_fgh(problem, t, wg, wh),
        init, cfg, n_scale=problem.dataset.n,
    )


def fit_wlr_rows(rows: WLRRows, init, cfg: SolverConfig | None = None, n_scale: int | None = None):
    """Newton fit on materialized rows; returns (theta, diagnostics)."""
    cfg = cfg or SolverConfig()
    if n_scale is None:
        n_scale = max(1, int(np.sum(rows.z)))
    return _newton(
        lambda t, wg=True, wh=True: _rows_fgh(rows, t, wg, wh),
        init, cfg, n_scale=n_scale,
    )


def _newton(fgh, init, cfg: SolverConfig, n_scale: int):
    """Damped Newton ascent with ridge escalation on singular Hessians.

    The objective never decreases across accepted steps; failure to make an
    ascent step at the largest ridge raises NonConvergenceError carrying the
    last iterate.
    """
    theta = np.array(init, dtype=float)
    if not np.all(np.isfinite(theta)):
        raise DataError("initial theta must be finite")
    d = theta.shape[0]
    tol = cfg.grad_tol * n_scale
    ridge_used = cfg.ridge
    f, g, A = fgh(theta)
    for it in range(cfg.max_newton_iters):
        gnorm = float(np.max(np.abs(g)))
        if gnorm <= tol:
            if gnorm == 0.0 and float(np.max(np.abs(A))) == 0.0:
                log.warning("flat WLR objective: zero gradient and Hessian")
            return theta, {"newton_iters": it, "grad_norm": gnorm, "ridge": ridge_used}
        accepted = False
        ridge = cfg.ridge
        # near the optimum the true improvement drops below the objective's
        # floating-point resolution; steps within a few ulps still ascend
        f_slack = 4.0 * np.finfo(float).eps * max(1.0, abs(f))
        while ridge <= _MAX_RIDGE:
            try:
                step = np.linalg.solve(A + ridge * np.eye(d), g)
            except np.linalg.LinAlgError:
                step = None
            if step is not None and np.all(np.isfinite(step)):
                scale = 1.0
                for _ in range(cfg.step_halving_max):
                    cand = theta + scale * step
                    # one full pass: its f decides acceptance and its (g, A)
                    # seed the next iteration
                    fc, gc, Ac = fgh(cand)
                    if np.isfinite(fc) and fc >= f - f_slack:
                        accepted = True
                        break
                    scale *= 0.5
                if accepted:
                    ridge_used = max(ridge_used, ridge)
                    break
            ridge *= 10.0
        if not accepted:
            raise NonConvergenceError(
                f"no ascent step found at ridge {_MAX_RIDGE:g} "
                f"(iteration {it}, |grad|={gnorm:.3g})",
                theta=theta,
                diagnostics={"newton_iters": it, "grad_norm": gnorm, "ridge": ridge_used},
            )
        theta, f, g, A = cand, fc, gc, Ac
        if float(np.max(np.abs(theta))) > _DIVERGENCE_NORM:
            raise DivergenceError(
                f"theta norm {np.max(np.abs(theta)):.3g} exceeds {_DIVERGENCE_NORM:g}; "
                "the rows are likely separated"
            )
    gnorm = float(np.max(np.abs(g)))
    if gnorm <= tol:
        return theta, {"newton_iters": cfg.max_newton_iters, "grad_norm": gnorm,
                       "ridge": ridge_used}
    raise NonConvergenceError(
        f"gradient norm {gnorm:.3g} above tolerance {tol:.3g} "
        f"after {cfg.max_newton_iters} Newton iterations",
        theta=theta,
        diagnostics={"newton_iters": cfg.max_newton_iters, "grad_norm": gnorm,
                     "ridge": ridge_used},
    )
