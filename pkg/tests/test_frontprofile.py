import math

import numpy as np
import pytest

from frontspeed.errors import DomainTooSmall, InputError, SpeedMismatch
from frontspeed.frontprofile import (
    assemble_conical,
    elliptic_residual,
    slow_decay_rate,
    solve_strip_front,
)
from frontspeed.oracles import travelling_wave_1d
from frontspeed.periodicfield import ConeSpec, DiffusionMatrix, KPPNonlinearity, build_field
from frontspeed.sim2d import Field2D
from frontspeed.speeds import conical_min_speed

LOGISTIC = KPPNonlinearity.logistic()
Q2 = build_field({"preset": "sine", "amplitude": 2.0})
CONE = ConeSpec(math.pi / 3, math.pi / 3)
# residual constant from a refinement study at h = 1/8 .. 1/64 (strip grid 1/32)
C_RES = 4.0


@pytest.fixture(scope="module")
def flat_profiles():
    I = DiffusionMatrix.identity()
    z = build_field("zero")
    p = solve_strip_front(I, z, math.pi / 2, 2.5, 20.0, 4, 1280, f=LOGISTIC)
    p0 = solve_strip_front(I, z, math.pi / 2, 2.5, 20.0, 4, 1280, f=LOGISTIC, initial="zero")
    return p, p0


@pytest.fixture(scope="module")
def sine_branches():
    c = 1.05 * conical_min_speed(1.0, Q2, LOGISTIC, CONE).c_star
    pa = solve_strip_front(DiffusionMatrix.cone_A(CONE.alpha), Q2, CONE.alpha,
                           c * math.sin(CONE.alpha), 14.0, 32, 896, f=LOGISTIC)
    pb = solve_strip_front(DiffusionMatrix.cone_B(CONE.beta), Q2, CONE.beta,
                           c * math.sin(CONE.beta), 14.0, 32, 896, f=LOGISTIC)
    return pa, pb, c


def test_flat_profile_matches_bvp(flat_profiles):
    p, _ = flat_profiles
    assert p.converged
    assert np.ptp(p.phi, axis=0).max() < 1e-12
    oracle = travelling_wave_1d(2.5, LOGISTIC, 20.0, p.phi[0, 0])
    assert np.max(np.abs(p.phi - oracle(p.Y)[None, :])) <= 1e-4


def test_two_starts_agree(flat_profiles):
    p, p0 = flat_profiles
    assert np.max(np.abs(p.phi - p0.phi)) <= 1e-5


def test_profile_invariants(flat_profiles, sine_branches):
    for p in (flat_profiles[0], *sine_branches[:2]):
        assert p.phi.min() >= 0 and p.phi.max() <= 1
        assert p.phi[:, 1].max() <= 0.02 and p.phi[:, -2].min() >= 0.98
        assert p.min_dY() >= -1e-10
        assert p.wrap_mismatch() <= 1e-12


def test_profile_evaluation_clamped(flat_profiles):
    p, _ = flat_profiles
    assert p(0.3, -25.0) == 0.0 and p(0.3, 25.0) == 1.0
    assert p(0.3, 0.0) == pytest.approx(p(1.3, 0.0), abs=1e-14)


def test_slow_decay_rate_flat():
    # k = lam^2 + 1 = c lam, smaller root
    lam1, _, _ = slow_decay_rate(DiffusionMatrix.identity(), build_field("zero"), math.pi / 2, 1.0, 2.5)
    assert lam1 == pytest.approx(0.5, abs=1e-10)
    with pytest.raises(InputError):
        slow_decay_rate(DiffusionMatrix.identity(), build_field("zero"), math.pi / 2, 1.0, 1.9)


def test_strip_preconditions():
    I = DiffusionMatrix.identity()
    with pytest.raises(InputError):
        solve_strip_front(I, build_field("zero"), math.pi / 2, 2.02, 40.0, 4, 64)
    with pytest.raises(DomainTooSmall):
        solve_strip_front(I, build_field("zero"), math.pi / 2, 2.5, 5.0, 4, 64)
    with pytest.raises(InputError):
        solve_strip_front(I, build_field("zero"), 0.0, 2.5, 20.0, 4, 64)


def test_flat_ansatz_trivial(flat_profiles):
    p, _ = flat_profiles
    cone = ConeSpec(math.pi / 2, math.pi / 2)
    g = Field2D.grid(32, 512, 1.0, 4, hy=1 / 16)
    an = assemble_conical(p, p, cone, g, 1.0, build_field("zero"), LOGISTIC)
    assert an.sandwich_ok
    # cos(pi/2) is not exactly zero, so the two branches agree to roundoff
    assert np.allclose(an.under.values, an.branch_alpha, rtol=0, atol=1e-12)
    assert np.allclose(an.over.values, np.minimum(2 * an.branch_alpha, 1.0), rtol=0, atol=1e-12)
    assert abs(an.residual_under_min) <= 2e-3
    assert an.under.frame_speed == pytest.approx(2.5)


@pytest.mark.parametrize("h", [1 / 16, 1 / 32])
def test_sine_ansatz_residual_signs(sine_branches, h):
    pa, pb, c = sine_branches
    g = Field2D.grid(int(8 / h), int(64 / h), 1.0, 8, hy=h)
    an = assemble_conical(pa, pb, CONE, g, 1.0, Q2, LOGISTIC)
    assert an.sandwich_ok
    assert an.residual_under_min >= -C_RES * h * h
    assert an.residual_over_max <= C_RES * h * h
    assert an.under.values.min() >= 0 and an.over.values.max() <= 1


def test_conical_conditions_and_far_field(sine_branches):
    pa, pb, c = sine_branches
    g = Field2D.grid(128, 1024, 1.0, 8, hy=1 / 16)
    an = assemble_conical(pa, pb, CONE, g, 1.0, Q2, LOGISTIC)
    lo, hi = an.conical_conditions(CONE, depth=10.0)
    assert lo < 0.02 and hi > 0.98
    # away from the axis, under is the oblique front of that side
    x, y = g.coords()
    assert np.abs(an.under.values - an.branch_alpha)[x < -0.5].max() == 0.0
    assert np.abs(an.under.values - an.branch_beta)[x > 0.5].max() == 0.0
    # the other branch only matters near the axis
    gap = np.maximum(an.branch_beta - an.branch_alpha, 0.0)
    assert gap[x < -3.0].max() <= gap[(x > -1.0) & (x < 0)].max()


def test_speed_mismatch(sine_branches):
    pa, pb, _ = sine_branches
    g = Field2D.grid(32, 256, 1.0, 8, hy=1 / 4)
    with pytest.raises(SpeedMismatch):
        assemble_conical(pa, pb, ConeSpec(math.pi / 3, math.pi / 4), g)


def test_elliptic_residual_exact_for_linear_solution():
    # u = y: Lap = 0, residual = a(x) with f = 0
    x = np.linspace(0, 1, 9)
    y = np.linspace(0, 2, 17)
    u = np.tile(y, (9, 1))
    r = elliptic_residual(u, x[1] - x[0], y[1] - y[0], 1.0, np.sin(x), lambda v: 0 * v)
    assert np.isnan(r[0]).all() and np.isnan(r[:, -1]).all()
    assert np.allclose(r[1:-1, 1:-1], np.sin(x)[1:-1, None], atol=1e-12)
