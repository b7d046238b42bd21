"""Classification toolkit for time signals: almost periodicity and ergodicity.

Almost periodicity is probed through translation defects

    defect(T) = sup_t || f(t+T) - f(t) ||_X

on a finite scan window; a signal counts as almost periodic at level
epsilon when the epsilon-almost-periods {T : defect(T) < epsilon} are
relatively dense, i.e. some inclusion length l makes every window of
length l inside the scan range contain one.  A pass is "AP on the
window" -- a deliberate desk-scale weakening of the definition over the
whole line.

The ergodic class is probed through the symmetric mean value curve
M(L) = (1/2L) int_{-L}^{L} ||f(t)||_X dt, declared vanishing when the
fitted log-log slope is at most -1/2 or the last value drops below a
tolerance.

All time shifts are snapped to the trajectory grid (no interpolation);
shifts that are not grid multiples within 1e-9 pick up an O(dt) defect
error, which is why candidate periods should be chosen on the grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import lorentz_norms_batch
from .trajectory import TimeGrid, Trajectory

SNAP_TOL = 1e-9


@dataclass(frozen=True)
class APReport:
    """Result of an inclusion-length search at level epsilon."""

    epsilon: float
    inclusion_length: float | None   # None encodes "fail"
    almost_periods: np.ndarray
    max_gap: float
    scan_max: float

    @property
    def ok(self) -> bool:
        return self.inclusion_length is not None


@dataclass(frozen=True)
class MeanValueCurve:
    """Symmetric window means M(L) over strictly increasing lengths L."""

    window_lengths: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        L = np.asarray(self.window_lengths, dtype=float)
        M = np.asarray(self.values, dtype=float)
        if L.size != M.size:
            raise ValueError("lengths and values must match")
        if not np.all(np.diff(L) > 0):
            raise ValueError("window lengths must be strictly increasing")
        object.__setattr__(self, "window_lengths", L)
        object.__setattr__(self, "values", M)


def _shift_steps(f: Trajectory, T: float) -> int:
    # shifts are snapped to the grid; off-lattice T picks up an O(dt) error
    k = int(round(T / f.grid.dt))
    if abs(k) > f.grid.steps:
        raise ValueError(f"shift {T} leaves no overlap with the trajectory support")
    return k


def _defect_norms(f: Trajectory, k: int) -> np.ndarray:
    """Per-snapshot norms of f(t + k dt) - f(t) over the overlap."""
    k = abs(k)
    if k == 0:
        diff = np.zeros_like(f.snapshots)
    else:
        diff = f.snapshots[k:] - f.snapshots[:-k]
    if f.is_scalar:
        return np.abs(diff[:, 0])
    if f.space_norm is None:
        raise ValueError("field trajectory needs a space_norm tag for defects")
    return lorentz_norms_batch(diff, f.space, f.space_norm)


def translation_defect(f: Trajectory, T: float) -> float:
    """sup_t ||f(t+T) - f(t)||_X over the overlapping part of the grid."""
    return float(np.max(_defect_norms(f, _shift_steps(f, T))))


def ap_test(f: Trajectory, epsilon: float, l_max: float,
            scan_max: float | None = None) -> APReport:
    """Search for an inclusion length of the epsilon-almost-periods.

    Candidate shifts are every grid multiple T = k dt in [0, scan_max]
    (default: half the trajectory support, so every candidate keeps at
    least half the support as overlap).  The returned inclusion length
    is the smallest l <= l_max such that every window [a, a+l] inside
    [0, scan_max] contains an almost period; ``None`` when none exists.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    dt = f.grid.dt
    support = f.grid.t_max - f.grid.t_min
    if scan_max is None:
        scan_max = support / 2.0
    if scan_max <= 0 or scan_max > support - dt:
        raise ValueError("scan range must sit inside the trajectory support")
    k_max = int(np.floor(scan_max / dt + SNAP_TOL))
    periods = []
    for k in range(k_max + 1):
        if float(np.max(_defect_norms(f, k))) < epsilon:
            periods.append(k * dt)
    periods = np.asarray(periods)
    scan_len = k_max * dt
    if periods.size == 0:
        return APReport(epsilon, None, periods, np.inf, scan_len)
    gaps = np.diff(periods)
    max_gap = float(np.max(gaps)) if gaps.size else 0.0
    needed = max(float(periods[0]), max_gap, float(scan_len - periods[-1]))
    needed = max(needed, dt)
    length = needed if needed <= l_max else None
    return APReport(epsilon, length, periods, max_gap, scan_len)


def mean_value_curve(f: Trajectory, L_list) -> MeanValueCurve:
    """Trapezoid means M(L) = (1/2L) int_{-L}^{L} ||f(t)||_X dt.

    Window ends are snapped to the grid; the effective (snapped) lengths
    are reported so the curve stays self-consistent.
    """
    norms = f.norm_series()
    times = f.grid.times()
    dt = f.grid.dt
    lengths, values = [], []
    for L in sorted(float(L) for L in L_list):
        if L <= 0:
            raise ValueError("window lengths must be positive")
        if -L < f.grid.t_min - 1e-12 or L > f.grid.t_max + 1e-12:
            raise ValueError(f"window [-{L}, {L}] exceeds the trajectory support")
        i_lo = int(round((-L - f.grid.t_min) / dt))
        i_hi = int(round((L - f.grid.t_min) / dt))
        i_lo = max(i_lo, 0)
        i_hi = min(i_hi, f.grid.steps)
        if i_hi - i_lo < 2:
            raise ValueError(f"window [-{L}, {L}] spans fewer than 3 samples")
        half = (times[i_hi] - times[i_lo]) / 2.0
        integral = np.trapezoid(norms[i_lo:i_hi + 1], dx=dt)
        lengths.append(half)
        values.append(integral / (2.0 * half))
    return MeanValueCurve(np.asarray(lengths), np.asarray(values))


def pap0_test(curve: MeanValueCurve, tol: float = 1e-3) -> bool:
    """Decide vanishing mean value from a mean-value curve.

    True when the least-squares slope of log M(L) against log L is at
    most -1/2, or when the largest-window mean is already below ``tol``.
    Needs at least 4 window lengths spanning a factor of 8.
    """
    L, M = curve.window_lengths, curve.values
    if L.size < 4:
        raise ValueError("need at least 4 window lengths")
    if L[-1] / L[0] < 8.0:
        raise ValueError("window lengths must span a factor of at least 8")
    if M[-1] < tol:
        return True
    if np.any(M <= 0):
        return bool(np.all(M[-2:] < tol))
    slope = np.polyfit(np.log(L), np.log(M), 1)[0]
    return bool(slope <= -0.5)


def fitted_mean_slope(curve: MeanValueCurve) -> float:
    """Least-squares slope of log M(L) vs log L (diagnostic companion)."""
    L, M = curve.window_lengths, curve.values
    if np.any(M <= 0):
        return -np.inf
    return float(np.polyfit(np.log(L), np.log(M), 1)[0])


def pap_synthesize(ap_part: Trajectory, ergodic_part: Trajectory) -> Trajectory:
    """Pointwise sum g + phi, tagging both components for later oracles."""
    if ap_part.grid != ergodic_part.grid:
        raise ValueError("component time grids must match")
    if ap_part.is_scalar != ergodic_part.is_scalar:
        raise ValueError("cannot mix scalar and field components")
    if not ap_part.is_scalar and ap_part.space != ergodic_part.space:
        raise ValueError("component spatial grids must match")
    norm = ap_part.space_norm if ap_part.space_norm is not None else ergodic_part.space_norm
    return Trajectory(
        ap_part.grid,
        ap_part.snapshots + ergodic_part.snapshots,
        space=ap_part.space,
        space_norm=norm,
        ap_part=ap_part,
        ergodic_part=ergodic_part,
    )
