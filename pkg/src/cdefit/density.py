"""Conditional density, cdf, quantiles and means from a fitted kernel.

Normalization uses trapezoid quadrature on a regular lattice over the working
domain, deliberately finer than (and decoupled from) the fitting grid. When
the response was mapped through the logistic function before fitting, all
evaluations accept original-scale y and apply the change of variables.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logit

from .dataset import Domain, IDENTITY, LOGISTIC, TRANSFORMS
from .errors import DataError
from .feature_map import FeatureMap, evaluate_grid

DEFAULT_QUAD_POINTS = 1000


def default_quad_points(m: int) -> int:
    """10 quadrature nodes per background point, at least 1000."""
    return max(10 * m, DEFAULT_QUAD_POINTS)


@dataclass(frozen=True)
class ConditionalDensity:
    fm: FeatureMap
    theta: np.ndarray
    domain: Domain
    transform: str = IDENTITY
    quad_points: int = DEFAULT_QUAD_POINTS
    clamp_outside: bool = False  # out-of-domain pdf is 0 instead of an error

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        if theta.shape != (self.fm.out_dim,):
            raise DataError(
                f"theta has shape {theta.shape}, feature map expects ({self.fm.out_dim},)"
            )
        if self.quad_points < 2:
            raise DataError("quad_points must be at least 2")
        if self.transform not in TRANSFORMS:
            raise DataError(f"unknown transform {self.transform!r}")
        object.__setattr__(self, "theta", theta)

    # -- working-scale machinery ------------------------------------------

    def _lattice(self, points: int | None = None) -> np.ndarray:
        return np.linspace(self.domain.lo, self.domain.hi,
                           points or self.quad_points)

    def _log_kernel(self, x, ys: np.ndarray) -> np.ndarray:
        return evaluate_grid(self.fm, x, ys) @ self.theta

    def _normalized_lattice(self, x, points: int | None = None):
        """Lattice nodes, pdf values on them, and the stabilizing constants."""
        ys = self._lattice(points)
        g = self._log_kernel(x, ys)
        g_max = float(g.max())
        w = np.exp(g - g_max)
        norm = float(np.trapezoid(w, ys))
        return ys, w / norm, g_max, norm

    def _to_working(self, y):
        y = np.asarray(y, dtype=float)
        if self.transform == LOGISTIC:
            return expit(y), expit(y) * expit(-y)  # value, jacobian dy_work/dy
        out = np.where((y < self.domain.lo) | (y > self.domain.hi), np.nan, y)
        if np.any(np.isnan(out)):
            if not self.clamp_outside:
                raise DataError(
                    f"y outside the domain [{self.domain.lo}, {self.domain.hi}]"
                )
        return out, np.ones_like(y)

    # -- public surface ----------------------------------------------------

    def pdf(self, x, y):
        """Density at y (original scale), conditional on x."""
        t, jac = self._to_working(y)
        ys, dens, g_max, norm = self._normalized_lattice(x)
        inside = ~np.isnan(t)
        out = np.zeros_like(np.asarray(t, dtype=float))
        if np.any(inside):
            g = self._log_kernel(x, np.atleast_1d(t[inside]))
            out[inside] = np.exp(g - g_max) / norm
        out = out * jac
        return float(out) if np.isscalar(y) or np.ndim(y) == 0 else out

    def cdf(self, x, y):
        """P(Y <= y | x), monotone with cdf(lo) = 0 and cdf(hi) = 1."""
        t, _ = self._to_working(y)
        ys, cum = self._cdf_nodes(x)
        out = np.interp(np.nan_to_num(t, nan=self.domain.hi), ys, cum)
        if self.transform == IDENTITY and self.clamp_outside:
            out = np.where(np.asarray(y) < self.domain.lo, 0.0, out)
            out = np.where(np.asarray(y) > self.domain.hi, 1.0, out)
        return float(out) if np.ndim(y) == 0 else out

    def quantile(self, x, p):
        """Pseudo-inverse of the cdf by monotone interpolation."""
        p_arr = np.asarray(p, dtype=float)
        if np.any((p_arr <= 0) | (p_arr >= 1)):
            raise DataError("quantile levels must lie strictly inside (0, 1)")
        ys, cum = self._cdf_nodes(x)
        q = np.interp(p_arr, cum, ys)
        if self.transform == LOGISTIC:
            q = logit(q)
        return float(q) if np.ndim(p) == 0 else q

    def cond_mean(self, x) -> float:
        """First moment by quadrature (original scale)."""
        ys, dens, _, _ = self._normalized_lattice(x)
        if self.transform == IDENTITY:
            return float(np.trapezoid(ys * dens, ys))
        # Original-scale mean of a logistic-transformed fit: integrate
        # logit(t) * f(t) over the interior nodes (logit diverges at 0 and 1,
        # integrably; endpoint cells are dropped).
        interior = slice(1, -1)
        return float(np.trapezoid(logit(ys[interior]) * dens[interior],
                                  ys[interior]))

    def _cdf_nodes(self, x):
        ys, dens, _, _ = self._normalized_lattice(x)
        cum = np.concatenate([[0.0], np.cumsum(
            0.5 * (dens[1:] + dens[:-1]) * np.diff(ys))])
        cum /= cum[-1]
        return ys, cum

    def normalization(self, x, points: int | None = None) -> float:
        """integral of pdf over the domain on an independent lattice (~1)."""
        ys = self._lattice(points or 10 * self.quad_points)
        g = self._log_kernel(x, ys)
        g_max = float(g.max())
        fine = float(np.trapezoid(np.exp(g - g_max), ys))
        _, _, g_max0, norm0 = self._normalized_lattice(x)
        return fine * np.exp(g_max - g_max0) / norm0
