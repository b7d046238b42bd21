"""Time grids and trajectories (time-indexed snapshots of fields or scalars).

A trajectory stores its snapshots densely as a complex array of shape
(steps + 1, M) where M = n^d for field-valued signals and M = 1 for
scalar signals.  Scalar signals carry no spatial grid; their "norm" is
the plain modulus.  (A one-point spatial grid would violate the grid
invariant n >= 4, so scalars are first-class instead.)

The text serialization is the PAPTRAJ format::

    PAPTRAJ d n R t_min t_max steps
    <re> <im>          # n^d lines per snapshot, snapshots consecutive

with d = 0, n = 1, R = 0 for scalar trajectories and all numbers in
locale-independent %.17g.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fields import Field, GridSpec, LorentzExponents, lorentz_norms_batch


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid on [t_min, t_max] with the given number of steps."""

    t_min: float
    t_max: float
    steps: int

    def __post_init__(self):
        if not self.t_min < self.t_max:
            raise ValueError("need t_min < t_max")
        if self.steps < 8:
            raise ValueError(f"need at least 8 steps, got {self.steps}")

    @property
    def dt(self) -> float:
        return (self.t_max - self.t_min) / self.steps

    def times(self) -> np.ndarray:
        return self.t_min + self.dt * np.arange(self.steps + 1)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Snapshots over a time grid, optionally tagged with a spatial norm.

    ``space_norm`` names which Lorentz norm realizes ||f(t)||_X for
    field-valued signals; scalar signals ignore it and use |.|.
    ``ap_part`` / ``ergodic_part`` carry the synthesis decomposition when
    the trajectory was produced by :func:`papevolve.pap.pap_synthesize`.
    """

    grid: TimeGrid
    snapshots: np.ndarray = field(repr=False)
    space: GridSpec | None = None
    space_norm: LorentzExponents | None = None
    ap_part: "Trajectory | None" = field(default=None, repr=False)
    ergodic_part: "Trajectory | None" = field(default=None, repr=False)

    def __post_init__(self):
        snaps = np.asarray(self.snapshots, dtype=complex)
        if snaps.ndim == 1:
            snaps = snaps[:, None]
        if snaps.ndim != 2:
            raise ValueError("snapshots must be a (time, space) array")
        if snaps.shape[0] != self.grid.steps + 1:
            raise ValueError(
                f"expected {self.grid.steps + 1} snapshots, got {snaps.shape[0]}"
            )
        if self.space is not None and snaps.shape[1] != self.space.size:
            raise ValueError("snapshot length does not match the spatial grid")
        if self.space is None and snaps.shape[1] != 1:
            raise ValueError("scalar trajectories need snapshots of length 1")
        object.__setattr__(self, "snapshots", snaps)

    @property
    def is_scalar(self) -> bool:
        return self.space is None

    def field_at(self, i: int) -> Field:
        if self.is_scalar:
            raise ValueError("scalar trajectory has no spatial fields")
        return Field(self.space, self.snapshots[i])

    def norm_series(self, e: LorentzExponents | None = None) -> np.ndarray:
        """||f(t_i)||_X for every snapshot (modulus for scalar signals)."""
        if self.is_scalar:
            return np.abs(self.snapshots[:, 0])
        exps = e if e is not None else self.space_norm
        if exps is None:
            raise ValueError("field trajectory needs Lorentz exponents for its norm")
        return lorentz_norms_batch(self.snapshots, self.space, exps)

    def sup_norm(self, e: LorentzExponents | None = None) -> float:
        return float(np.max(self.norm_series(e)))


def scalar_trajectory(grid: TimeGrid, values) -> Trajectory:
    """Wrap a complex sequence of length steps + 1 as a scalar trajectory."""
    return Trajectory(grid, np.asarray(values, dtype=complex))


def modulated_trajectory(grid: TimeGrid, modulation, profile: Field,
                         space_norm: LorentzExponents | None = None) -> Trajectory:
    """Trajectory m(t_i) * g(x) from a scalar sequence and a spatial profile."""
    mod = np.asarray(modulation, dtype=complex)
    snaps = mod[:, None] * profile.values[None, :]
    return Trajectory(grid, snaps, space=profile.grid, space_norm=space_norm)


def write_trajectory(path, traj: Trajectory):
    """Write the PAPTRAJ text format (%.17g, newline endings)."""
    if traj.is_scalar:
        d, n, R = 0, 1, 0.0
    else:
        d, n, R = traj.space.d, traj.space.n, traj.space.R
    g = traj.grid
    with open(path, "w", newline="\n") as fh:
        fh.write(
            f"PAPTRAJ {d} {n} {R:.17g} {g.t_min:.17g} {g.t_max:.17g} {g.steps}\n"
        )
        for snap in traj.snapshots:
            for z in snap:
                fh.write(f"{z.real:.17g} {z.imag:.17g}\n")


def read_trajectory(path, space_norm: LorentzExponents | None = None) -> Trajectory:
    """Read the PAPTRAJ text format written by :func:`write_trajectory`."""
    with open(path, "r") as fh:
        header = fh.readline().split()
        if len(header) != 7 or header[0] != "PAPTRAJ":
            raise ValueError("not a PAPTRAJ file")
        d, n = int(header[1]), int(header[2])
        R, t_min, t_max = float(header[3]), float(header[4]), float(header[5])
        steps = int(header[6])
        size = n**d
        count = (steps + 1) * size
        data = np.loadtxt(fh, dtype=float, max_rows=count)
    if data.shape != (count, 2):
        raise ValueError(f"expected {count} complex pairs, got shape {data.shape}")
    snaps = (data[:, 0] + 1j * data[:, 1]).reshape(steps + 1, size)
    grid = TimeGrid(t_min, t_max, steps)
    space = GridSpec(d, n, R) if d > 0 else None
    return Trajectory(grid, snaps, space=space, space_norm=space_norm)


def grids_aligned(a: TimeGrid, b: TimeGrid, tol: float = 1e-9) -> bool:
    """True when the two grids share dt and their nodes live on one lattice."""
    if not math.isclose(a.dt, b.dt, rel_tol=1e-12, abs_tol=0.0):
        return False
    off = (a.t_min - b.t_min) / a.dt
    return abs(off - round(off)) <= tol
