"""Basis expansions h(x, y) for the log-linear kernel theta^T h(x, y).

Every basis term must genuinely depend on y: a term constant in y would be
absorbed by the per-observation intercepts and leave theta unidentified.
Monomial terms enforce this structurally (y-exponent >= 1); opaque callable
terms are probed numerically at construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DataError

# Probe lattice for the constant-in-y check on opaque terms. Two x probes so
# a term that degenerates at a special x (e.g. x*y at x=0) is still accepted.
_PROBE_YS = np.array([-0.7, 0.13, 0.9])
_PROBE_XS = (0.37, -0.61)


@dataclass(frozen=True)
class MonomialTerm:
    """One basis monomial prod_k x_k^{a_k} * y^b with b >= 1."""

    x_exponents: tuple[int, ...]
    y_exponent: int

    def __post_init__(self):
        if self.y_exponent < 1:
            raise DataError(
                f"monomial y-exponent must be >= 1, got {self.y_exponent} "
                "(a term constant in y is absorbed by the group intercepts)"
            )
        if any(a < 0 for a in self.x_exponents):
            raise DataError("monomial x-exponents must be nonnegative")


@dataclass(frozen=True)
class OpaqueTerm:
    """User-supplied basis function f(x, y) -> array, numpy-broadcasting.

    ``fn`` receives x with shape (..., x_dim) and y with shape (...) and must
    return an array of shape (...). It bypasses monomial validation but must
    vary with y on the construction probe lattice.
    """

    name: str
    fn: Callable[[np.ndarray, np.ndarray], np.ndarray] = field(compare=False)


@dataclass(frozen=True)
class FeatureMap:
    """Ordered basis h(x, y) in R^d for the kernel theta^T h(x, y)."""

    x_dim: int
    terms: tuple[MonomialTerm | OpaqueTerm, ...]

    def __post_init__(self):
        if self.x_dim < 1:
            raise DataError("x_dim must be >= 1")
        if len(self.terms) < 1:
            raise DataError("a feature map needs at least one basis term")
        for term in self.terms:
            if isinstance(term, MonomialTerm):
                if len(term.x_exponents) != self.x_dim:
                    raise DataError(
                        f"monomial has {len(term.x_exponents)} x-exponents, "
                        f"feature map has x_dim={self.x_dim}"
                    )
            else:
                _probe_opaque_term(term, self.x_dim)

    @property
    def out_dim(self) -> int:
        return len(self.terms)


def _probe_opaque_term(term: OpaqueTerm, x_dim: int) -> None:
    """Reject opaque terms that are constant in y on a 3-point probe."""
    for x_fill in _PROBE_XS:
        x = np.full((len(_PROBE_YS), x_dim), x_fill)
        vals = np.asarray(term.fn(x, _PROBE_YS), dtype=float)
        if vals.shape != _PROBE_YS.shape:
            raise DataError(
                f"opaque term {term.name!r} returned shape {vals.shape}, "
                f"expected {_PROBE_YS.shape}"
            )
        if not np.all(vals == vals[0]):
            return
    raise DataError(
        f"opaque term {term.name!r} is constant in y on the probe lattice"
    )


def kernel_a() -> FeatureMap:
    """Basis (y, x*y): exponential-family rate linear in x."""
    return polynomial_kernel(1, 1)


def kernel_b() -> FeatureMap:
    """Basis (y, x*y, x^2*y): rate quadratic in x."""
    return polynomial_kernel(2, 1)


def polynomial_kernel(x_degree: int, y_degree: int, x_dim: int = 1) -> FeatureMap:
    """All monomials x^a y^b with 0 <= a <= x_degree and 1 <= b <= y_degree.

    Only x_dim=1 monomial enumeration is provided; higher-dimensional x takes
    explicit term lists.
    """
    if x_degree < 0:
        raise DataError("x_degree must be >= 0")
    if y_degree < 1:
        raise DataError("y_degree must be >= 1 (y^0 terms are not allowed)")
    if x_dim != 1:
        raise DataError("polynomial_kernel enumerates monomials for x_dim=1 only")
    terms = tuple(
        MonomialTerm(x_exponents=(a,), y_exponent=b)
        for b in range(1, y_degree + 1)
        for a in range(0, x_degree + 1)
    )
    return FeatureMap(x_dim=1, terms=terms)


def parse_kernel(spec: str) -> FeatureMap:
    """Build a feature map from a CLI kernel string: "A", "B" or "poly:<xd>,<yd>"."""
    s = spec.strip()
    if s == "A":
        return kernel_a()
    if s == "B":
        return kernel_b()
    if s.startswith("poly:"):
        body = s[len("poly:"):]
        parts = body.split(",")
        if len(parts) != 2:
            raise DataError(f"bad kernel spec {spec!r}: expected poly:<x_degree>,<y_degree>")
        try:
            xd, yd = int(parts[0]), int(parts[1])
        except ValueError as exc:
            raise DataError(f"bad kernel spec {spec!r}: degrees must be integers") from exc
        return polynomial_kernel(xd, yd)
    raise DataError(f"unknown kernel spec {spec!r}: use A, B or poly:<x_degree>,<y_degree>")


def kernel_spec_string(fm: FeatureMap) -> str | None:
    """Inverse of parse_kernel for the kernels it can produce, else None."""
    if any(isinstance(t, OpaqueTerm) for t in fm.terms) or fm.x_dim != 1:
        return None
    got = {(t.x_exponents[0], t.y_exponent) for t in fm.terms}
    xd = max(a for a, _ in got)
    yd = max(b for _, b in got)
    want = {(a, b) for b in range(1, yd + 1) for a in range(0, xd + 1)}
    if got != want:
        return None
    if (xd, yd) == (1, 1):
        return "A"
    if (xd, yd) == (2, 1):
        return "B"
    return f"poly:{xd},{yd}"


def _check_x(fm: FeatureMap, x: np.ndarray) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (fm.x_dim,):
        raise DataError(f"x has shape {x.shape}, feature map expects ({fm.x_dim},)")
    return x


def evaluate(fm: FeatureMap, x, y) -> np.ndarray:
    """h(x, y) as a length-d vector."""
    x = _check_x(fm, x)
    y = float(y)
    if not np.isfinite(y):
        raise DataError(f"y must be finite, got {y}")
    return evaluate_block(fm, x[None, :], np.array([y]))[0, 0]


def evaluate_grid(fm: FeatureMap, x, ys) -> np.ndarray:
    """Rows h(x, ys[j]): an (m, d) matrix for a single x."""
    x = _check_x(fm, x)
    ys = np.asarray(ys, dtype=float)
    if ys.ndim != 1:
        raise DataError("ys must be one-dimensional")
    if not np.all(np.isfinite(ys)):
        raise DataError("ys must be finite")
    return evaluate_block(fm, x[None, :], ys)[0]


def evaluate_block(fm: FeatureMap, X: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Features for a block of rows crossed with grid points: (B, m, d).

    X is (B, x_dim), ys is (m,); output [b, j, k] = h_k(X[b], ys[j]). Used to
    stream group blocks without ever holding the full n*m design.
    """
    B, m = X.shape[0], ys.shape[0]
    out = np.empty((B, m, fm.out_dim))
    for k, term in enumerate(fm.terms):
        if isinstance(term, MonomialTerm):
            xpart = _monomial_x(X, term.x_exponents)  # (B,)
            ypart = ys ** term.y_exponent  # (m,)
            out[:, :, k] = xpart[:, None] * ypart[None, :]
        else:
            out[:, :, k] = term.fn(X[:, None, :], ys[None, :])
    return out


def evaluate_pairs(fm: FeatureMap, X: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Features for paired rows (X[b], ys[b]): a (B, d) matrix."""
    B = X.shape[0]
    out = np.empty((B, fm.out_dim))
    for k, term in enumerate(fm.terms):
        if isinstance(term, MonomialTerm):
            out[:, k] = _monomial_x(X, term.x_exponents) * ys ** term.y_exponent
        else:
            out[:, k] = term.fn(X, ys)
    return out


def _monomial_x(X: np.ndarray, x_exponents: tuple[int, ...]) -> np.ndarray:
    part = np.ones(X.shape[0])
    for dim, a in enumerate(x_exponents):
        if a:
            part = part * X[:, dim] ** a
    return part
