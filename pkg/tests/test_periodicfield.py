import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from frontspeed.errors import InvalidField, InvalidNonlinearity, InvalidPeriod, NotMeanZero
from frontspeed.periodicfield import (
    ConeSpec,
    DiffusionMatrix,
    KPPNonlinearity,
    PeriodicField,
    antiderivative,
    build_field,
    build_reaction,
    field_from_csv,
    field_from_json,
    validate_kpp,
)


def test_sine_preset_value():
    q = build_field({"preset": "sine", "amplitude": 2.0}, L=1.0)
    assert q(0.25) == pytest.approx(2.0, abs=1e-15)


def test_constant_samples_become_zero():
    q = build_field([5.0, 5.0, 5.0, 5.0, 5.0, 5.0, 5.0, 5.0], L=1.0)
    assert np.all(q.samples == 0.0)
    assert q.is_zero
    assert np.allclose(q(np.linspace(0, 3, 17)), 0.0)


def test_sawtooth_mean_zero():
    q = build_field({"preset": "sawtooth", "amplitude": 1.0}, L=2.0)
    x = np.arange(512) * (2.0 / 512)
    assert abs(q(x).mean()) <= 1e-12


def test_sampled_field_mean_removed_and_periodic():
    rng = np.random.default_rng(0)
    raw = rng.normal(size=64) + 3.0
    q = build_field(raw, L=0.7)
    assert abs(q.samples.mean()) <= 1e-12 * q.sup_norm
    nodes = np.arange(64) * (0.7 / 64)
    # x + kL is itself rounded, so agreement is to roundoff
    assert np.allclose(q(nodes), q(nodes + 0.7 * 3), rtol=0, atol=1e-13 * q.sup_norm)
    assert np.allclose(q(nodes), raw - raw.mean(), atol=1e-13)


@pytest.mark.parametrize("order", [1, 3])
def test_interpolation_orders(order):
    L = 1.0
    x = np.arange(256) / 256
    q = build_field(np.sin(2 * np.pi * x), L=L, interpolation_order=order)
    t = np.linspace(0, 1, 101)
    err = np.max(np.abs(q(t) - np.sin(2 * np.pi * t)))
    assert err < (1e-3 if order == 1 else 1e-7)


def test_bad_inputs():
    with pytest.raises(InvalidPeriod):
        build_field("sine", L=0.0)
    with pytest.raises(InvalidPeriod):
        build_field([1.0] * 8)
    with pytest.raises(InvalidField):
        build_field([1.0, np.nan] * 4, L=1.0)
    with pytest.raises(InvalidField):
        build_field([1.0, 2.0, 3.0], L=1.0)
    with pytest.raises(InvalidField):
        build_field({"preset": "triangle"})


def test_csv_and_json_ingestion(tmp_path):
    x = np.arange(32) / 32
    p = tmp_path / "q.csv"
    p.write_text("x,value\n" + "".join(f"{float(a)!r},{2 * math.sin(2 * math.pi * a)!r}\n" for a in x))
    q = field_from_csv(p)
    assert q.period == pytest.approx(1.0)
    assert q(0.25) == pytest.approx(2.0, abs=1e-12)
    p2 = tmp_path / "bad.csv"
    p2.write_text("0,1\n0.1,2\n0.3,3\n0.4,1\n0.5,0\n0.6,1\n0.7,2\n0.8,3\n")
    with pytest.raises(InvalidField):
        field_from_csv(p2)
    j = tmp_path / "q.json"
    j.write_text('{"preset": "sine", "amplitude": 2.0, "period": 0.5, "harmonics": [1, 3]}')
    qj = field_from_json(j)
    assert qj.period == 0.5
    assert qj(0.125) == pytest.approx(2.0 * (1 + math.sin(3 * math.pi / 2)), abs=1e-12)


def test_antiderivative_sine():
    # Q(x) = (1 - cos 2 pi x) / (2 pi), Q(1/2) = 1/pi
    Q = antiderivative(build_field("sine"))
    assert Q(0.5) == pytest.approx(1 / math.pi, abs=1e-14)
    assert Q(0.0) == pytest.approx(0.0, abs=1e-15)
    # trapezoid oracle at N = 4096
    xs = np.linspace(0, 0.5, 4097)
    trap = np.trapezoid(np.sin(2 * np.pi * xs), xs)
    assert Q(0.5) == pytest.approx(trap, abs=1e-7)


def test_antiderivative_cosine_and_zero():
    Q = antiderivative(build_field("cosine"))
    x = np.linspace(0, 1, 33)
    assert np.allclose(Q(x), np.sin(2 * np.pi * x) / (2 * np.pi), atol=1e-14)
    assert Q.mean == 0.0
    Z = antiderivative(build_field("zero"))
    assert np.all(Z(x) == 0.0)


def test_antiderivative_sampled_closes():
    rng = np.random.default_rng(5)
    q = build_field(rng.normal(size=128), L=2.0)
    Q = antiderivative(q)
    assert abs(Q(2.0) - Q(0.0)) <= 1e-10 * 2.0 * q.sup_norm
    assert Q(0.0) == pytest.approx(0.0, abs=1e-12)


def test_antiderivative_rejects_nonzero_mean():
    q = PeriodicField.__new__(PeriodicField)
    object.__setattr__(q, "period", 1.0)
    object.__setattr__(q, "samples", np.ones(16))
    object.__setattr__(q, "preset", "samples")
    object.__setattr__(q, "amplitude", 0.0)
    object.__setattr__(q, "harmonics", ((1, 1.0),))
    object.__setattr__(q, "interpolation_order", 1)
    object.__setattr__(q, "_interp", lambda t: np.ones_like(np.asarray(t, float)))
    with pytest.raises(NotMeanZero):
        antiderivative(q)


def test_validate_logistic():
    r = validate_kpp(KPPNonlinearity.logistic(), 256)
    assert r.ok
    assert r.max_violation <= 1e-12


def test_validate_convex_bump_located():
    s = np.linspace(0, 1, 33)
    vals = s * (1 - s)
    vals[15:18] += np.array([0.0, 0.05, 0.0])
    r = validate_kpp(KPPNonlinearity.tabulated(vals, check=False), 64)
    assert not r.concave
    assert r.location[0] == "concave"
    assert 0.4 < r.location[1] < 0.6
    with pytest.raises(InvalidNonlinearity):
        KPPNonlinearity.tabulated(vals)


def test_validate_cubic_power():
    r = validate_kpp(KPPNonlinearity.power(2.0))
    assert r.ok
    assert KPPNonlinearity.power(2.0).fprime1 == -2.0


def test_reaction_derivatives():
    f = KPPNonlinearity.logistic()
    assert f.fprime0 == 1.0 and f.fprime1 == -1.0
    s = np.linspace(0, 1, 65)
    t = KPPNonlinearity.tabulated(np.sin(np.pi * s) / np.pi)
    assert t.fprime0 == pytest.approx(1.0, rel=2e-3)
    assert build_reaction({"kind": "power", "p": 3}).fprime1 == -3.0
    assert f.scaled(0.1).fprime0 == pytest.approx(0.1)
    assert np.all(f(np.array([-0.5, 0.0, 1.0, 1.5])) == 0.0)


def test_matrices_and_cones():
    A = DiffusionMatrix.cone_A(math.pi / 3)
    B = DiffusionMatrix.cone_B(math.pi / 3)
    assert A.m12 == pytest.approx(-0.5) and B.m12 == pytest.approx(0.5)
    assert A.det == pytest.approx(0.75)
    assert DiffusionMatrix.identity().scale(4.0).m22 == 4.0
    with pytest.raises(Exception):
        DiffusionMatrix(1.0, 1.0, 1.0)
    c = ConeSpec(math.pi / 3, math.pi / 6)
    assert c.existence_regime
    assert c.min_sin == pytest.approx(0.5)
    assert not ConeSpec(2.5, 2.0).existence_regime
    with pytest.raises(Exception):
        ConeSpec(0.0, 1.0)


# -- properties ---------------------------------------------------------------

samples = st.lists(st.floats(-10, 10, allow_nan=False), min_size=8, max_size=64)


@settings(max_examples=40, deadline=None)
@given(samples, st.floats(0.1, 10.0))
def test_mean_zero_by_construction(vals, L):
    q = build_field(vals, L=L)
    assert abs(q.samples.mean()) <= 1e-12 * max(q.sup_norm, 1e-300) + 1e-15


@settings(max_examples=40, deadline=None)
@given(samples, st.floats(0.1, 10.0), st.integers(-5, 5))
def test_periodic_extension_exact_on_nodes(vals, L, k):
    q = build_field(vals, L=L, interpolation_order=1)
    n = len(vals)
    nodes = np.arange(n) * (L / n)
    assert np.allclose(q(nodes + k * L), q(nodes), atol=1e-12 * max(q.sup_norm, 1.0))


@settings(max_examples=30, deadline=None)
@given(st.floats(1.0, 6.0))
def test_power_reactions_subadditive(p):
    r = validate_kpp(KPPNonlinearity.power(p), 256)
    assert r.subadditive and r.concave and r.kpp and r.positive


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-3, math.pi - 1e-3))
def test_cone_matrices_positive_definite(a):
    for M, s in ((DiffusionMatrix.cone_A(a), math.sin(a)), (DiffusionMatrix.cone_B(a), math.sin(a))):
        assert M.det == pytest.approx(s * s, rel=1e-12, abs=1e-15)
        assert np.all(np.linalg.eigvalsh(M.as_array()) > 0)
