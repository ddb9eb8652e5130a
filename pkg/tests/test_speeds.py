import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from frontspeed.errors import BracketError, InputError, OutsideExistenceRegime
from frontspeed.oracles import dense_principal_eigen, grid_scan_speed
from frontspeed.periodicfield import ConeSpec, DiffusionMatrix, KPPNonlinearity, build_field
from frontspeed.speeds import (
    bracket_min,
    conical_min_speed,
    dispersion_curve,
    dispersion_operator,
    golden_min,
    k_curve,
    planar_min_speed,
    zero_advection_speed,
)

LOGISTIC = KPPNonlinearity.logistic()
Q2 = build_field({"preset": "sine", "amplitude": 2.0})
# planar speed for q = 2 sin, identity, gamma = pi/2 (grid-scan oracle below)
C_PLANAR = 2.0499820161612186
C_CONE_60 = 2.3518058264127384


def test_k_curve_zero_advection():
    q0 = build_field("zero")
    for lam in (0.1, 1.0, 3.0):
        p = k_curve(DiffusionMatrix.cone_A(math.pi / 3), q0, math.pi / 3, 1.0, lam)
        assert p.k == pytest.approx(lam * lam + 1.0, abs=1e-12)
        assert p.speed == pytest.approx(p.k / lam)


def test_k_curve_against_dense():
    p = k_curve(DiffusionMatrix.identity(), Q2, math.pi / 2, 1.0, 1.0)
    op = dispersion_operator(DiffusionMatrix.identity(), Q2, math.pi / 2, 1.0, 1.0)
    a = dense_principal_eigen(op, 512)[0]
    b = dense_principal_eigen(op, 1024)[0]
    assert p.k == pytest.approx((4 * b - a) / 3, abs=1e-7)


def test_k_curve_bad_input():
    with pytest.raises(InputError):
        k_curve(DiffusionMatrix.identity(), Q2, 0.0, 1.0, 1.0)
    with pytest.raises(InputError):
        k_curve(DiffusionMatrix.identity(), Q2, 1.0, 1.0, -1.0)


def test_small_lambda_slope():
    M = DiffusionMatrix.cone_A(math.pi / 3)
    k1 = k_curve(M, Q2, math.pi / 3, 1.0, 1e-4).k
    assert abs((k1 - 1.0) / 1e-4) <= 1e-3
    k_small = k_curve(M, Q2, math.pi / 3, 1.0, 1e-6).k
    assert k_small == pytest.approx(1.0, abs=1e-6)


def test_planar_closed_forms():
    q0 = build_field("zero")
    s = planar_min_speed(DiffusionMatrix.cone_B(0.7), q0, 0.7, LOGISTIC)
    assert s.c == 2.0 and s.lambda_star == 1.0
    s4 = planar_min_speed(DiffusionMatrix.identity().scale(4.0), q0, 1.0, LOGISTIC)
    assert s4.c == pytest.approx(4.0)


def test_planar_sine_against_grid_scan():
    s = planar_min_speed(DiffusionMatrix.identity(), Q2, math.pi / 2, LOGISTIC)
    assert s.c == pytest.approx(C_PLANAR, rel=1e-9)
    c_scan, lam_scan = grid_scan_speed(DiffusionMatrix.identity(), Q2, math.pi / 2, 1.0,
                                       0.7, 1.4, 120, 256)
    assert s.c == pytest.approx(c_scan, rel=1e-5)
    assert s.lambda_star == pytest.approx(lam_scan, rel=1e-3)
    assert s.c >= 2.0 - 1e-10


def test_minimizer_optimal():
    M = DiffusionMatrix.cone_A(math.pi / 3)
    s = planar_min_speed(M, Q2, math.pi / 3, LOGISTIC)
    for lam in (s.lambda_star / 2, 2 * s.lambda_star):
        assert k_curve(M, Q2, math.pi / 3, 1.0, lam).speed >= s.c - 1e-8


def test_convexity_log_grid():
    lams = np.geomspace(1e-3, 20, 64)
    k = np.array([p.k for p in dispersion_curve(DiffusionMatrix.identity(), Q2, math.pi / 2, 1.0, lams)])
    # convexity in lam on a nonuniform grid: divided differences increase
    s = np.diff(k) / np.diff(lams)
    assert np.all(np.diff(s) >= -1e-8 * np.max(np.abs(k)))


def test_conical_sine():
    cone = ConeSpec(math.pi / 3, math.pi / 3)
    r = conical_min_speed(1.0, Q2, LOGISTIC, cone)
    assert r.c_star == pytest.approx(C_CONE_60, rel=1e-9)
    assert r.c_star == max(r.c_left, r.c_right)
    # even q is not required here: the two branches of sin differ
    left = planar_min_speed(DiffusionMatrix.cone_A(cone.alpha), Q2, cone.alpha, LOGISTIC)
    assert r.c_left == left.c / math.sin(cone.alpha)


def test_conical_right_angle_reduces_to_planar():
    r = conical_min_speed(1.0, Q2, LOGISTIC, ConeSpec(math.pi / 2, math.pi / 2))
    assert r.c_star == pytest.approx(C_PLANAR, rel=1e-9)
    assert r.attaining == "tie"


def test_conical_even_field_symmetric():
    q = build_field({"preset": "cosine", "amplitude": 2.0})
    r = conical_min_speed(1.0, q, LOGISTIC, ConeSpec(1.1, 1.1))
    assert abs(r.c_left - r.c_right) <= 1e-8 * r.c_star


def test_conical_zero_advection_example():
    r = conical_min_speed(1.0, build_field("zero"), LOGISTIC, ConeSpec(math.pi / 3, math.pi / 6))
    assert r.c_star == pytest.approx(4.0, rel=1e-12)
    assert r.attaining == "right"


def test_existence_regime():
    cone = ConeSpec(2.0, 2.0)
    with pytest.raises(OutsideExistenceRegime):
        conical_min_speed(1.0, Q2, LOGISTIC, cone)
    r = conical_min_speed(1.0, build_field("zero"), LOGISTIC, cone, force=True)
    assert not r.rigorous
    with pytest.raises(InputError):
        conical_min_speed(0.0, Q2, LOGISTIC, ConeSpec(1.0, 1.0))


def test_golden_and_bracket():
    g = lambda t: (t - 0.3) ** 2
    a, b = bracket_min(g, 5.0, -20, 20)
    assert a < 0.3 < b
    x, gx, _ = golden_min(g, a, b, 1e-10)
    assert x == pytest.approx(0.3, abs=1e-8)
    with pytest.raises(BracketError):
        bracket_min(lambda t: -t, 0.0, -5, 5)


# -- properties ---------------------------------------------------------------

angles = st.sampled_from([math.pi / 6, math.pi / 4, math.pi / 3, math.pi / 2, 2.0, 2.5])


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 20.0), angles, angles, st.floats(0.1, 5.0))
def test_zero_advection_scaling(rho, a, b, fp):
    cone = ConeSpec(a, b)
    if not cone.existence_regime:
        return
    f = LOGISTIC.scaled(fp)
    r = conical_min_speed(rho, build_field("zero"), f, cone)
    assert r.c_star == pytest.approx(zero_advection_speed(rho, fp, cone), rel=1e-7)


@settings(max_examples=10, deadline=None)
@given(st.floats(0.2, 3.0), st.floats(0.3, 2.8))
def test_rayleigh_bound(amp, lam):
    q = build_field({"preset": "sine", "amplitude": amp, "harmonics": [[1, 1.0], [3, 0.5]]})
    p = k_curve(DiffusionMatrix.identity(), q, math.pi / 2, 1.0, lam)
    assert p.k >= lam * lam + 1.0 - 1e-10


@settings(max_examples=6, deadline=None)
@given(st.floats(0.5, 3.0), st.floats(0.5, 2.5))
def test_speed_enhancement(amp, gamma):
    M = DiffusionMatrix.identity()
    s = planar_min_speed(M, build_field({"preset": "sine", "amplitude": amp}), gamma, LOGISTIC)
    assert s.c >= 2.0 - 1e-10
