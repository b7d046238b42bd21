"""Real-interpolation exponent algebra and the application parameter pack.

Everything here is arithmetic on Lorentz exponents: the interpolation
identity 1/p = (1-theta)/p0 + theta/p1, the product bound
M <= M0^(1-theta) M1^theta for sublinear operators between interpolation
couples, and the derivation of the complete diffusion-application
parameter pack from the three inputs (d, m, r).

Exponents are kept as exact ``fractions.Fraction`` whenever the inputs
are rational (ints, Fractions, or floats that are exact binary
rationals); identities such as (1-theta)*alpha1 + theta*alpha2 = 1 then
hold exactly rather than to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational

from .fields import LorentzExponents

_REL_TOL = 1e-12


def _exactify(x):
    """Return x as a Fraction when it is one already, else as float."""
    if isinstance(x, Rational):
        return Fraction(x)
    if isinstance(x, float) and x.is_integer():
        return Fraction(int(x))
    return float(x)


def _close(a, b, tol=_REL_TOL) -> bool:
    a, b = float(a), float(b)
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


@dataclass(frozen=True)
class InterpolationCouple:
    """A couple (e0, e1) with parameter theta and the interpolated result eq."""

    e0: LorentzExponents
    e1: LorentzExponents
    theta: float
    eq: LorentzExponents

    def __post_init__(self):
        if not (0.0 < self.theta < 1.0):
            raise ValueError(f"theta must lie in (0, 1), got {self.theta}")
        want = 1.0 / interpolate_exponent(self.e0.p, self.e1.p, self.theta)
        if not _close(1.0 / self.eq.p, want):
            raise ValueError(
                f"interpolated exponent {self.eq.p} violates "
                f"1/p = (1-theta)/p0 + theta/p1"
            )


def couple(e0: LorentzExponents, e1: LorentzExponents, theta: float,
           q: float) -> InterpolationCouple:
    """Build the interpolation couple with its induced result space."""
    p = interpolate_exponent(e0.p, e1.p, theta)
    return InterpolationCouple(e0, e1, theta, LorentzExponents(float(p), q))


def interpolate_exponent(p0, p1, theta):
    """Solve 1/p = (1-theta)/p0 + theta/p1.

    Exact when all inputs are rational; returns a Fraction then, a float
    otherwise.
    """
    p0x, p1x, tx = _exactify(p0), _exactify(p1), _exactify(theta)
    if not (float(p0x) > 1.0 and float(p1x) > 1.0):
        raise ValueError("endpoint exponents must exceed 1")
    if not (0.0 < float(tx) < 1.0):
        raise ValueError(f"theta must lie in (0, 1), got {theta}")
    if all(isinstance(v, Fraction) for v in (p0x, p1x, tx)):
        return 1 / ((1 - tx) / p0x + tx / p1x)
    return 1.0 / ((1.0 - float(tx)) / float(p0x) + float(tx) / float(p1x))


@dataclass(frozen=True)
class InterpolationBoundReport:
    """Outcome of the product bound M <= M0^(1-theta) M1^theta."""

    bound: float
    measured: float
    tol: float
    ok: bool


def git_bound_check(M0: float, M1: float, M: float, theta: float,
                    tol: float = 0.05) -> InterpolationBoundReport:
    """Check a measured quasi-norm against the interpolation product bound.

    ``bound = M0^(1-theta) * M1^theta``; the check passes when
    M <= bound * (1 + tol).  The default 5% slack absorbs discretisation
    error in measured operator norms.
    """
    if M0 < 0 or M1 < 0:
        raise ValueError("endpoint norms must be nonnegative")
    if not (0.0 < theta < 1.0):
        raise ValueError(f"theta must lie in (0, 1), got {theta}")
    bound = float(M0) ** (1.0 - theta) * float(M1) ** theta
    return InterpolationBoundReport(
        bound=bound, measured=float(M), tol=tol, ok=float(M) <= bound * (1.0 + tol)
    )


# Field order of the serialized parameter pack (see `serialize`).
_PACK_FIELDS = (
    "d", "m", "r", "pX", "pY", "pY1", "pY2", "pZ1", "pZ2",
    "alpha1", "alpha2", "theta", "pT", "q1", "q2", "theta_tilde",
    "beta1", "beta2", "gamma",
)


@dataclass(frozen=True)
class ApplicationExponents:
    """Complete exponent pack of the rough-coefficient diffusion application.

    Values may be exact Fractions (rational inputs) or floats.  The
    Lorentz second index is inf for X, Y, Y1, Y2, Z-duals, T, Q1, Q2, Q
    and 1 for the predual spaces; helpers below hand out the pairs.
    """

    d: int
    m: int
    r: object
    pX: object
    pY: object
    pY1: object
    pY2: object
    pZ1: object
    pZ2: object
    alpha1: object
    alpha2: object
    theta: object
    pT: object
    q1: object
    q2: object
    theta_tilde: object
    beta1: object
    beta2: object
    gamma: object

    def space_X(self) -> LorentzExponents:
        return LorentzExponents(float(self.pX))

    def space_Y(self) -> LorentzExponents:
        return LorentzExponents(float(self.pY))

    def space_Y1(self) -> LorentzExponents:
        return LorentzExponents(float(self.pY1))

    def space_Y2(self) -> LorentzExponents:
        return LorentzExponents(float(self.pY2))

    def space_T(self) -> LorentzExponents:
        return LorentzExponents(float(self.pT))

    def space_Q(self) -> LorentzExponents:
        return LorentzExponents(float(self.r))

    def space_Q1(self) -> LorentzExponents:
        return LorentzExponents(float(self.q1) / (float(self.q1) - 1.0))

    def space_Q2(self) -> LorentzExponents:
        return LorentzExponents(float(self.q2) / (float(self.q2) - 1.0))

    def predual_Z1(self) -> LorentzExponents:
        return LorentzExponents(float(self.pZ1), 1.0)

    def predual_Z2(self) -> LorentzExponents:
        return LorentzExponents(float(self.pZ2), 1.0)

    def serialize(self) -> str:
        """Flat key=value text block (one key per line), consumed by the CLI."""
        lines = []
        for name in _PACK_FIELDS:
            lines.append(f"{name} = {float(getattr(self, name)):.17g}")
        return "\n".join(lines) + "\n"


def _require(cond: bool, inequality: str):
    if not cond:
        raise ValueError(f"parameter constraint violated: {inequality}")


def derive_application_exponents(d: int, m: int, r) -> ApplicationExponents:
    """Derive the full exponent pack from dimension d, power m and rate input r.

    Admissibility: d >= 3, d/(d-2) < m < 5 and r > d(m-1)/2.  (The
    source also states the constraint m/(4m-1) > d >= 3, which no
    integers satisfy -- the left side is below 1 -- so it is treated as
    a typo and not enforced.)

    q1 and q2 are the midpoints of their admissible subintervals around
    r/(r-1) in harmonic (1/q) coordinates, which makes the choice
    deterministic and guarantees theta_tilde in (0, 1).
    """
    if not (isinstance(d, int) and isinstance(m, int)):
        raise ValueError("d and m must be integers")
    _require(d >= 3, "d >= 3")
    _require(m < 5, "m < 5")
    _require(m * (d - 2) > d, "m > d/(d-2)")
    rx = _exactify(r)
    _require(2 * float(rx) > d * (m - 1), "r > d(m-1)/2")

    exact = isinstance(rx, Fraction)
    one = Fraction(1) if exact else 1.0
    dd = Fraction(d) if exact else float(d)
    mm = Fraction(m) if exact else float(m)

    pX = dd * (mm - 1) / (2 * mm)
    pY = dd * (mm - 1) / 2
    pY1 = 2 * dd * (mm - 1) / (5 - mm)
    pY2 = 2 * dd * (mm - 1) / (mm + 3)
    _require((2 * d + 1) * (m - 1) > 4, "(2d+1)(m-1) > 4")
    _require((2 * d - 1) * (m - 1) > 4, "(2d-1)(m-1) > 4")
    pZ1 = 2 * dd * (mm - 1) / ((2 * dd + 1) * (mm - 1) - 4)
    pZ2 = 2 * dd * (mm - 1) / ((2 * dd - 1) * (mm - 1) - 4)
    alpha1 = Fraction(5, 4) if exact else 1.25
    alpha2 = Fraction(3, 4) if exact else 0.75
    theta = Fraction(1, 2) if exact else 0.5
    pT = dd * rx / (dd + 2 * rx)

    # open interval for 1/q: ( (d(r-1)-2r)/(dr), 1 ) around (r-1)/r
    lo = (dd * (rx - 1) - 2 * rx) / (dd * rx)   # = 1/q upper space bound
    mid = (rx - 1) / rx
    _require(float(lo) > 0, "d(r-1) - 2r > 0 (equivalent to r > d/(d-2))")
    inv_q1 = (mid + one) / 2
    inv_q2 = (lo + mid) / 2
    q1 = one / inv_q1
    q2 = one / inv_q2
    theta_tilde = (inv_q1 - mid) / (inv_q1 - inv_q2)
    beta1 = dd / 2 * (inv_q1 - lo)
    beta2 = dd / 2 * (inv_q2 - lo)
    gamma = one / (mm - 1) - dd / (2 * rx)

    _require(float(gamma) > 0, "gamma = 1/(m-1) - d/(2r) > 0")
    _require(float(gamma) < 1, "gamma < 1")

    pack = ApplicationExponents(
        d=d, m=m, r=rx, pX=pX, pY=pY, pY1=pY1, pY2=pY2, pZ1=pZ1, pZ2=pZ2,
        alpha1=alpha1, alpha2=alpha2, theta=theta, pT=pT, q1=q1, q2=q2,
        theta_tilde=theta_tilde, beta1=beta1, beta2=beta2, gamma=gamma,
    )
    _verify_pack(pack)
    return pack


def _verify_pack(e: ApplicationExponents):
    """Internal consistency of a derived pack; raises on violation."""
    # smoothing exponents between X and Y1/Y2 reproduce alpha1/alpha2
    a1 = float(e.d) / 2 * (1.0 / float(e.pX) - 1.0 / float(e.pY1))
    a2 = float(e.d) / 2 * (1.0 / float(e.pX) - 1.0 / float(e.pY2))
    if not (_close(a1, float(e.alpha1)) and _close(a2, float(e.alpha2))):
        raise ValueError("smoothing exponent identity failed for alpha1/alpha2")
    # convex combinations equal one
    if not _close((1 - float(e.theta)) * float(e.alpha1)
                  + float(e.theta) * float(e.alpha2), 1.0):
        raise ValueError("(1-theta) alpha1 + theta alpha2 != 1")
    if not _close((1 - float(e.theta_tilde)) * float(e.beta1)
                  + float(e.theta_tilde) * float(e.beta2), 1.0):
        raise ValueError("(1-theta~) beta1 + theta~ beta2 != 1")
    # exponent orderings (beta indexed so the small-q space carries the
    # large exponent, following the application section rather than the
    # abstract assumption, whose ordering is reversed)
    if not (0.0 < float(e.beta2) < 1.0 < float(e.beta1)):
        raise ValueError("need 0 < beta2 < 1 < beta1")
    if not (0.0 < float(e.theta_tilde) < 1.0):
        raise ValueError("theta_tilde outside (0, 1)")
    # the Z couple interpolates to the predual exponent of Y
    pz = interpolate_exponent(float(e.pZ1), float(e.pZ2), 0.5)
    want = float(e.pY) / (float(e.pY) - 1.0)
    if not _close(float(pz), want):
        raise ValueError("(Z1, Z2)_{1/2} does not match the predual of Y")
    # Y couple interpolates back to Y
    py = interpolate_exponent(float(e.pY1), float(e.pY2), 0.5)
    if not _close(float(py), float(e.pY)):
        raise ValueError("(Y1, Y2)_{1/2} does not match Y")
