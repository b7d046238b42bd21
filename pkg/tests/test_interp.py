"""Interpolation exponent algebra and application parameter pack tests."""

from fractions import Fraction

import numpy as np
import pytest

from papevolve.interp import (
    ApplicationExponents,
    couple,
    derive_application_exponents,
    git_bound_check,
    interpolate_exponent,
)
from papevolve.fields import LorentzExponents


class TestInterpolateExponent:
    def test_degenerate_couple(self):
        assert interpolate_exponent(3, 3, Fraction(1, 2)) == Fraction(3)

    def test_application_couple(self):
        # (Y1, Y2)_{1/2} with d = 3, m = 4: (18, 18/7) -> 9/2
        got = interpolate_exponent(Fraction(18), Fraction(18, 7), Fraction(1, 2))
        assert got == Fraction(9, 2)

    def test_direct_formula(self):
        assert interpolate_exponent(2.0, 6.0, 0.5) == pytest.approx(3.0)

    def test_rejections(self):
        with pytest.raises(ValueError):
            interpolate_exponent(1.0, 4.0, 0.5)
        with pytest.raises(ValueError):
            interpolate_exponent(2.0, 4.0, 0.0)
        with pytest.raises(ValueError):
            interpolate_exponent(2.0, 4.0, 1.0)

    def test_couple_object(self):
        c = couple(LorentzExponents(18.0), LorentzExponents(18.0 / 7.0), 0.5,
                   np.inf)
        assert c.eq.p == pytest.approx(4.5)


class TestGitBound:
    def test_trivial(self):
        rep = git_bound_check(1.0, 1.0, 1.0, 0.5)
        assert rep.bound == pytest.approx(1.0) and rep.ok

    def test_arithmetic_violation(self):
        rep = git_bound_check(4.0, 1.0, 3.0, 0.5, tol=0.0)
        assert rep.bound == pytest.approx(2.0)
        assert not rep.ok

    def test_monotone_in_endpoints(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            M0, M1, M = rng.uniform(0.1, 5.0, size=3)
            theta = rng.uniform(0.05, 0.95)
            base = git_bound_check(M0, M1, M, theta)
            grown = git_bound_check(M0 * 1.5, M1, M, theta)
            if base.ok:
                assert grown.ok
            grown2 = git_bound_check(M0, M1 * 2.0, M, theta)
            if base.ok:
                assert grown2.ok


class TestDeriveApplicationExponents:
    def test_d3_m4_r9_exact(self):
        e = derive_application_exponents(3, 4, 9)
        assert e.pX == Fraction(9, 8)
        assert e.pY == Fraction(9, 2)
        assert e.pY1 == Fraction(18)
        assert e.pY2 == Fraction(18, 7)
        assert e.pZ1 == Fraction(18, 17)
        assert e.pZ2 == Fraction(18, 11)
        assert e.alpha1 == Fraction(5, 4)
        assert e.alpha2 == Fraction(3, 4)
        assert e.theta == Fraction(1, 2)
        assert e.pT == Fraction(9, 7)
        assert e.q1 == Fraction(18, 17)
        assert e.q2 == Fraction(9, 5)
        assert e.theta_tilde == Fraction(1, 7)
        assert e.beta1 == Fraction(13, 12)
        assert e.beta2 == Fraction(1, 2)
        assert e.gamma == Fraction(1, 6)

    def test_admissible_point_d4(self):
        # the smallest admissible integer pair away from d = 3
        e = derive_application_exponents(4, 3, 6)
        assert e.pX == Fraction(4, 3)
        assert e.pY == Fraction(4)
        assert e.gamma == Fraction(1, 2) - Fraction(4, 12)

    def test_m_too_large_rejected(self):
        with pytest.raises(ValueError, match="m < 5"):
            derive_application_exponents(3, 6, 20)

    def test_m_at_critical_rejected(self):
        # m = d/(d-2) exactly (d = 3, m = 3) is outside the open range
        with pytest.raises(ValueError, match=r"d/\(d-2\)"):
            derive_application_exponents(3, 3, 6)

    def test_r_too_small_rejected(self):
        with pytest.raises(ValueError, match=r"d\(m-1\)/2"):
            derive_application_exponents(3, 4, 4)

    def test_d_too_small_rejected(self):
        with pytest.raises(ValueError, match="d >= 3"):
            derive_application_exponents(2, 4, 9)

    @pytest.mark.parametrize("d,m,r", [(3, 4, 9), (3, 4, 5), (4, 3, 7),
                                       (5, 2, 11), (3, 4, Fraction(19, 2))])
    def test_identities_exact(self, d, m, r):
        e = derive_application_exponents(d, m, r)
        # smoothing exponent identities, exact rational arithmetic
        assert Fraction(d, 2) * (1 / e.pX - 1 / e.pY1) == e.alpha1
        assert Fraction(d, 2) * (1 / e.pX - 1 / e.pY2) == e.alpha2
        assert (1 - e.theta) * e.alpha1 + e.theta * e.alpha2 == 1
        assert (1 - e.theta_tilde) * e.beta1 + e.theta_tilde * e.beta2 == 1
        assert 0 < e.beta2 < 1 < e.beta1
        assert 0 < e.theta_tilde < 1
        assert 0 < e.gamma < 1
        # the Z couple interpolates to the predual exponent of Y
        assert interpolate_exponent(e.pZ1, e.pZ2, Fraction(1, 2)) == \
            e.pY / (e.pY - 1)
        # the Y couple interpolates back to Y
        assert interpolate_exponent(e.pY1, e.pY2, Fraction(1, 2)) == e.pY
        # q ordering around r/(r-1)
        assert 1 < e.q1 < Fraction(e.r) / (Fraction(e.r) - 1) < e.q2

    def test_float_inputs(self):
        e = derive_application_exponents(3, 4, 9.0)
        assert float(e.gamma) == pytest.approx(1.0 / 6.0)
        e2 = derive_application_exponents(3, 4, 9.25)
        assert 0 < float(e2.gamma) < 1

    def test_space_helpers(self):
        e = derive_application_exponents(3, 4, 9)
        assert e.space_X().p == pytest.approx(9 / 8)
        assert e.space_Y().p == pytest.approx(4.5)
        assert e.space_Q().p == pytest.approx(9.0)
        assert e.space_Q1().p == pytest.approx(18.0)   # q1/(q1-1) = 18
        assert e.predual_Z1().q == 1.0

    def test_serialize_block(self):
        e = derive_application_exponents(3, 4, 9)
        block = e.serialize()
        lines = dict(
            line.split(" = ") for line in block.strip().splitlines()
        )
        assert float(lines["gamma"]) == pytest.approx(1 / 6)
        assert float(lines["alpha1"]) == 1.25
        assert float(lines["alpha2"]) == 0.75
        assert block.endswith("\n")
