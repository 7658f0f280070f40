"""Observations, the bounded response domain and the shared background grid."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logit

from .errors import DataError, DegenerateDomainError, ParseError

IDENTITY = "identity"
LOGISTIC = "logistic"
TRANSFORMS = (IDENTITY, LOGISTIC)

REGULAR = "regular"
UNIFORM_RANDOM = "uniform_random"
GRID_SCHEMES = (REGULAR, UNIFORM_RANDOM)


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr, dtype=float)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Dataset:
    """n observations (x_i, y_i); ys are stored in working scale."""

    xs: np.ndarray  # (n, x_dim)
    ys: np.ndarray  # (n,)
    transform: str = IDENTITY

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=float)
        if xs.ndim == 1:
            xs = xs[:, None]
        ys = np.asarray(self.ys, dtype=float)
        if xs.ndim != 2 or ys.ndim != 1 or xs.shape[0] != ys.shape[0]:
            raise DataError(f"inconsistent shapes: xs {xs.shape}, ys {ys.shape}")
        if xs.shape[0] < 1:
            raise DataError("need at least one observation")
        if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
            raise DataError("observations must be finite")
        if self.transform not in TRANSFORMS:
            raise DataError(f"unknown transform {self.transform!r}")
        if self.transform == LOGISTIC and not np.all((ys > 0) & (ys < 1)):
            raise DataError("logistic-transformed responses must lie in (0, 1)")
        object.__setattr__(self, "xs", _freeze(xs))
        object.__setattr__(self, "ys", _freeze(ys))

    @property
    def n(self) -> int:
        return self.xs.shape[0]

    @property
    def x_dim(self) -> int:
        return self.xs.shape[1]


@dataclass(frozen=True)
class Domain:
    """Bounded interval S = [lo, hi] the response is integrated over."""

    lo: float
    hi: float

    def __post_init__(self):
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)):
            raise DataError("domain bounds must be finite")
        if not self.lo < self.hi:
            raise DataError(f"domain needs lo < hi, got [{self.lo}, {self.hi}]")

    @property
    def volume(self) -> float:
        return self.hi - self.lo


@dataclass(frozen=True)
class BackgroundGrid:
    """The m shared background points y^(1) <= ... <= y^(m) inside the domain."""

    points: np.ndarray
    scheme: str
    seed: int
    domain: Domain

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1 or pts.shape[0] < 2:
            raise DataError("background grid needs at least 2 points")
        if np.any(np.diff(pts) < 0):
            raise DataError("background points must be sorted ascending")
        if pts[0] < self.domain.lo or pts[-1] > self.domain.hi:
            raise DataError("background points must lie inside the domain")
        if self.scheme not in GRID_SCHEMES:
            raise DataError(f"unknown grid scheme {self.scheme!r}")
        object.__setattr__(self, "points", _freeze(pts))

    @property
    def m(self) -> int:
        return self.points.shape[0]


def domain_from_data(ys) -> Domain:
    """S = [min y, max y] of the observed responses."""
    ys = np.asarray(ys, dtype=float)
    if ys.size < 2:
        raise DataError("need at least 2 responses to form a domain")
    lo, hi = float(ys.min()), float(ys.max())
    if lo == hi:
        raise DegenerateDomainError(
            f"all responses equal {lo}; the data span no interval"
        )
    return Domain(lo, hi)


def apply_logistic(ys) -> tuple[np.ndarray, Domain]:
    """Map responses through y -> 1/(1+e^-y); the domain becomes [0, 1]."""
    ys = np.asarray(ys, dtype=float)
    if not np.all(np.isfinite(ys)):
        raise DataError("responses must be finite")
    return expit(ys), Domain(0.0, 1.0)


def invert_logistic(ts) -> np.ndarray:
    """Inverse of apply_logistic: t -> log(t/(1-t))."""
    return logit(np.asarray(ts, dtype=float))


def make_grid(domain: Domain, m: int, scheme: str = REGULAR, seed: int = 0) -> BackgroundGrid:
    """Regular (endpoints included) or seeded uniform-random background points."""
    if m < 2:
        raise DataError(f"need m >= 2 background points, got {m}")
    if scheme == REGULAR:
        pts = np.linspace(domain.lo, domain.hi, m)
    elif scheme == UNIFORM_RANDOM:
        rng = np.random.default_rng(seed)
        pts = np.sort(rng.uniform(domain.lo, domain.hi, size=m))
    else:
        raise DataError(f"unknown grid scheme {scheme!r}")
    return BackgroundGrid(points=pts, scheme=scheme, seed=seed, domain=domain)


def load_csv(path) -> Dataset:
    """Read a dataset CSV with header x1,...,xp,y.

    Raises ParseError naming the offending 1-based data row on ragged rows,
    blank or non-numeric cells.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file: missing header") from None
        header = [c.strip() for c in header]
        p = len(header) - 1
        expected = [f"x{i + 1}" for i in range(p)] + ["y"]
        if p < 1 or header != expected:
            raise ParseError(
                f"bad header {header}: expected x1,...,xp,y"
            )
        xs, ys = [], []
        for row_idx, row in enumerate(reader, start=1):
            if len(row) != p + 1:
                raise ParseError(
                    f"row {row_idx}: expected {p + 1} cells, got {len(row)}",
                    row=row_idx,
                )
            try:
                vals = [float(c) for c in row]
            except ValueError:
                raise ParseError(
                    f"row {row_idx}: non-numeric cell in {row}", row=row_idx
                ) from None
            xs.append(vals[:p])
            ys.append(vals[p])
    if not xs:
        raise ParseError("no data rows")
    return Dataset(xs=np.array(xs), ys=np.array(ys))


def save_csv(dataset: Dataset, path) -> None:
    """Write the dataset with full round-trip precision."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{i + 1}" for i in range(dataset.x_dim)] + ["y"])
        for x_row, y in zip(dataset.xs, dataset.ys):
            writer.writerow([repr(float(v)) for v in x_row] + [repr(float(y))])
