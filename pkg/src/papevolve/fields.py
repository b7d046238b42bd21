"""Spatial grid fields and Lebesgue/Lorentz norm computations.

Fields live on a uniform node grid over the box [-R, R]^d (nodes
x_i = -R + i*h, h = 2R/n, the +R face excluded so the grid is
FFT-compatible).  All norms are built from the distribution function of
the sampled values under the counting measure weighted by the cell
volume h^d, i.e. from the decreasing rearrangement evaluated on cells
of measure h^d.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

INF = math.inf


@dataclass(frozen=True)
class GridSpec:
    """Uniform spatial grid on [-R, R]^d with n nodes per axis."""

    d: int
    n: int
    R: float

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValueError(f"grid dimension must be 1, 2 or 3, got {self.d}")
        if self.n < 4:
            raise ValueError(f"need at least 4 points per axis, got {self.n}")
        if not self.R > 0:
            raise ValueError(f"box half width must be positive, got {self.R}")

    @property
    def h(self) -> float:
        return 2.0 * self.R / self.n

    @property
    def size(self) -> int:
        return self.n**self.d

    @property
    def cell_volume(self) -> float:
        return self.h**self.d

    def axis(self) -> np.ndarray:
        """Node coordinates along one axis, x_i = -R + i*h."""
        return -self.R + self.h * np.arange(self.n)

    def points(self) -> np.ndarray:
        """All node coordinates, shape (n^d, d), lexicographic order."""
        axes = np.meshgrid(*([self.axis()] * self.d), indexing="ij")
        return np.stack([a.ravel() for a in axes], axis=-1)

    def shape(self) -> tuple:
        return (self.n,) * self.d


@dataclass(frozen=True, eq=False)
class Field:
    """Complex-valued sample of a spatial function, flat lexicographic storage."""

    grid: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=complex).ravel()
        if vals.size != self.grid.size:
            raise ValueError(
                f"expected {self.grid.size} values for the grid, got {vals.size}"
            )
        if not np.all(np.isfinite(vals.view(float))):
            raise ValueError("field values must be finite; mask singular samples first")
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class LorentzExponents:
    """Exponent pair (p, q) of a Lorentz space; q = math.inf is weak-L^p."""

    p: float
    q: float = INF

    def __post_init__(self):
        if not (1.0 < self.p < INF):
            raise ValueError(f"first exponent must lie in (1, inf), got {self.p}")
        if not (1.0 <= self.q <= INF):
            raise ValueError(f"second exponent must lie in [1, inf], got {self.q}")

    @property
    def is_weak(self) -> bool:
        return self.q == INF

    def dual(self) -> "LorentzExponents":
        """Dual exponents; only defined here for the weak case (p, inf) -> (p', 1)."""
        if not self.is_weak:
            raise ValueError("dual exponents implemented for q = inf only")
        return LorentzExponents(self.p / (self.p - 1.0), 1.0)


@dataclass(frozen=True)
class HolderReport:
    """Outcome of a weak Hoelder product check."""

    lhs: float
    rhs: float
    constant: float
    measured_ratio: float
    ok: bool


def sample_function(grid: GridSpec, fn) -> Field:
    """Sample ``fn(points) -> values`` on the grid, masking singular nodes.

    Non-finite samples (poles of analytic test functions such as
    |x|^(-d/p) at the origin) are masked out: the offending node is set
    to zero, so it drops to the tail of the decreasing rearrangement and
    contributes nothing to any norm, exactly as a measure-zero defect
    should.
    """
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        vals = np.asarray(fn(grid.points()), dtype=complex).ravel()
    bad = ~np.isfinite(vals.view(float).reshape(-1, 2)).all(axis=1)
    if bad.any():
        vals = vals.copy()
        vals[bad] = 0.0
    return Field(grid, vals)


def distribution_function(u: Field, s: float) -> float:
    """Measure of the superlevel set {x : |u(x)| > s}.

    Counting measure times the cell volume h^d; non-increasing in s and
    equal to the full box measure (2R)^d at s = 0+ for nowhere-zero
    fields.
    """
    if s < 0:
        raise ValueError(f"level must be nonnegative, got {s}")
    return float(np.count_nonzero(np.abs(u.values) > s)) * u.grid.cell_volume


def decreasing_rearrangement(u: Field) -> np.ndarray:
    """|values| sorted in non-increasing order (permutation invariant)."""
    return np.sort(np.abs(u.values))[::-1]


def lorentz_norm(u: Field, e: LorentzExponents) -> float:
    """Discrete Lorentz (p, q)-norm of a field.

    The decreasing rearrangement u* is taken piecewise constant on cells
    of measure h^d.  For q = inf this gives

        sup_k u*_k (k h^d)^(1/p),    k = 1..n^d,

    and for q < inf the rearrangement-integral form

        ( sum_k u*_k^q (p/q) [ (k h^d)^(q/p) - ((k-1) h^d)^(q/p) ] )^(1/q).

    Both are homogeneous of degree one and rearrangement invariant.
    """
    a = decreasing_rearrangement(u)
    hd = u.grid.cell_volume
    k = np.arange(1, a.size + 1, dtype=float)
    if e.is_weak:
        return float(np.max(a * (k * hd) ** (1.0 / e.p)))
    p, q = e.p, e.q
    meas = (k * hd) ** (q / p)
    meas_prev = np.empty_like(meas)
    meas_prev[0] = 0.0
    meas_prev[1:] = meas[:-1]
    total = np.sum(a**q * (p / q) * (meas - meas_prev))
    return float(total ** (1.0 / q))


def lorentz_norms_batch(values: np.ndarray, grid: GridSpec,
                        e: LorentzExponents) -> np.ndarray:
    """Lorentz norm of every row of a (batch, n^d) value array.

    Same quantity as :func:`lorentz_norm` per row, vectorised (one sort
    per row instead of one Field per row).
    """
    vals = np.atleast_2d(np.asarray(values))
    a = np.sort(np.abs(vals), axis=1)[:, ::-1]
    hd = grid.cell_volume
    k = np.arange(1, a.shape[1] + 1, dtype=float)
    if e.is_weak:
        return np.max(a * (k * hd) ** (1.0 / e.p), axis=1)
    p, q = e.p, e.q
    meas = (k * hd) ** (q / p)
    meas_prev = np.empty_like(meas)
    meas_prev[0] = 0.0
    meas_prev[1:] = meas[:-1]
    total = np.sum(a**q * (p / q) * (meas - meas_prev), axis=1)
    return total ** (1.0 / q)


def weak_holder_constant(p: float) -> float:
    """Documented product constant C_H = p/(p-1) * 2^(1/p) for the weak norms."""
    return p / (p - 1.0) * 2.0 ** (1.0 / p)


def weak_holder_check(u: Field, v: Field, p1: float, p2: float) -> HolderReport:
    """Check the weak Hoelder inequality ||uv||_{p,inf} <= C_H ||u||_{p1,inf} ||v||_{p2,inf}.

    The exponents must split as 1/p = 1/p1 + 1/p2 with p > 1; the report
    carries the measured ratio lhs / (||u|| ||v||) so the constant stays
    auditable.
    """
    if p1 <= 1.0 or p2 <= 1.0:
        raise ValueError("factor exponents must exceed 1")
    inv_p = 1.0 / p1 + 1.0 / p2
    if inv_p >= 1.0:
        raise ValueError(
            f"product exponent p = {1.0 / inv_p:.6g} must exceed 1 "
            f"(got 1/p1 + 1/p2 = {inv_p:.6g})"
        )
    if u.grid != v.grid:
        raise ValueError("fields must share one grid")
    p = 1.0 / inv_p
    prod = Field(u.grid, u.values * v.values)
    lhs = lorentz_norm(prod, LorentzExponents(p))
    nu = lorentz_norm(u, LorentzExponents(p1))
    nv = lorentz_norm(v, LorentzExponents(p2))
    c = weak_holder_constant(p)
    rhs = c * nu * nv
    ratio = lhs / (nu * nv) if nu * nv > 0 else 0.0
    return HolderReport(lhs=lhs, rhs=rhs, constant=c, measured_ratio=ratio, ok=lhs <= rhs)
