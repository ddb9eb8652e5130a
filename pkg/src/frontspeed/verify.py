"""Self-checks runnable from the command line (``frontspeed verify``).

The ``trivial`` suite holds closed-form and structural checks; ``all``
adds property checks (concavity/subadditivity, eigenvalue laws, scheme
comparison, sweep reproducibility).  Each check returns (ok, detail).
"""
from __future__ import annotations

import json
import math
import tempfile
import time
from pathlib import Path

import numpy as np


def _zero_advection_closed_form():
    from .periodicfield import ConeSpec, KPPNonlinearity, build_field
    from .speeds import conical_min_speed, zero_advection_speed

    q = build_field("zero")
    f = KPPNonlinearity.logistic()
    worst = 0.0
    for rho in (0.25, 1.0, 4.0):
        for a, b in ((math.pi / 6, math.pi / 2), (math.pi / 3, math.pi / 4), (math.pi / 2, math.pi / 2)):
            c = conical_min_speed(rho, q, f, ConeSpec(a, b)).c_star
            ref = zero_advection_speed(rho, 1.0, ConeSpec(a, b))
            worst = max(worst, abs(c - ref) / ref)
    return worst < 1e-12, f"max rel err {worst:.2e}"


def _constant_eigen():
    from .eigen import PeriodicOperator, discrete_eigen

    k, psi, _ = discrete_eigen(PeriodicOperator(1.0, 0.3, 2.5, 1.0), 64)
    return abs(k - 2.5) < 1e-12 and np.ptp(psi / psi.max()) < 1e-10, f"k = {k!r}"


def _equilibria():
    from .periodicfield import KPPNonlinearity, build_field
    from .sim2d import Field2D, Scheme, Stepper

    q = build_field({"preset": "sine", "amplitude": 2.0})
    f = KPPNonlinearity.logistic()
    ok = True
    for mode in ("explicit", "imex"):
        for val in (0.0, 1.0):
            g = Field2D.grid(32, 64, 1.0, 2, frame_speed=1.0, fill=val)
            sch = Scheme(mode, vertical="neumann")
            st = Stepper(g, 1.0, q, f, 0.5 * Stepper(g, 1.0, q, f, 1e-9, sch).dt_max, sch)
            U = st.advance(g.values, 50)
            # explicit is exact; the implicit line solves carry roundoff
            tol = 0.0 if mode == "explicit" else 1e-13
            ok &= bool(np.max(np.abs(U - val)) <= tol)
    return ok, "u = 0 and u = 1 fixed under both schemes"


def _gaussian_max():
    from .sim2d import Field2D, Scheme, Stepper

    g = Field2D.grid(40, 40, 1.0, 1)
    x, y = g.coords()
    X, Y = np.meshgrid(x, y, indexing="ij")
    U = np.exp(-(X ** 2 + Y ** 2) / 0.02)
    sch = Scheme("explicit", lateral="neumann", vertical="neumann")
    st = Stepper(g, 1.0, None, None, 0.9 * 0.25 * g.hx ** 2, sch)
    maxima = [U.max()]
    for _ in range(100):
        U = st.step(U)
        maxima.append(U.max())
    d = np.diff(maxima)
    return bool(np.all(d < 0)), f"max {maxima[0]:.3f} -> {maxima[-1]:.3f}"


def _degenerate_sandwich():
    from .periodicfield import KPPNonlinearity, build_field
    from .sim2d import Field2D, sandwich_evolution

    g = Field2D.grid(16, 64, 1.0, 1)
    _, y = g.coords()
    U = np.tile(0.5 * (1 + np.tanh(y)), (16, 1))
    s = Field2D.like(g, U)
    r = sandwich_evolution(s, s, 50, 1.0, build_field("zero"), KPPNonlinearity.logistic(), 2.0)
    return r["ordered"], "under = over stays ordered"


def _closed_form_constant():
    from .asymptotics import large_adv_small_reaction_limit
    from .periodicfield import build_field

    v = large_adv_small_reaction_limit(1.0, build_field("sine"), 1.0)
    ref = 1.0 / (math.pi * math.sqrt(2.0))
    return abs(v - ref) < 1e-14, f"{v!r} vs 1/(pi sqrt 2)"


def _monotonicity_controls():
    from .sim2d import Field2D, monotonicity_check

    g = Field2D.grid(8, 64, 1.0, 1)
    _, y = g.coords()
    U = np.tile(0.5 * (1 + np.tanh(y)), (8, 1))
    pos = monotonicity_check(Field2D.like(g, U))["min_dy_u"]
    neg = monotonicity_check(Field2D.like(g, U[:, ::-1]))["min_dy_u"]
    const = monotonicity_check(Field2D.like(g, np.full_like(U, 0.5)))
    return pos > 0 and neg < 0 and const["min_dy_u"] == 0 and not const["passed"], \
        f"{pos:.3g} / {neg:.3g} / {const['min_dy_u']}"


def _kpp_presets():
    from .errors import InvalidNonlinearity
    from .periodicfield import KPPNonlinearity, validate_kpp

    ok = validate_kpp(KPPNonlinearity.logistic()).ok
    try:
        KPPNonlinearity.tabulated([0.0, 0.1, 0.5, 0.0])
        ok = False
    except InvalidNonlinearity:
        pass
    return ok, "logistic accepted, convex table rejected"


def _sweep_closed_form():
    from .cli import run_sweep

    spec = {"task": "speed", "base": {"field": "zero"},
            "grid": {"cone.alpha": [math.pi / 6, math.pi / 3, math.pi / 2], "rho": [0.25, 1.0, 4.0]}}
    with tempfile.TemporaryDirectory() as d:
        s1 = run_sweep(spec, Path(d))
        s2 = run_sweep(spec, Path(d))
        lines = (Path(d) / "sweep.jsonl").read_text().splitlines()
    worst = 0.0
    for ln in lines:
        rec = json.loads(ln)
        a, b = rec["inputs"]["cone.alpha"], rec["inputs"]["cone.beta"]
        ref = 2 * math.sqrt(rec["inputs"]["rho"]) / min(math.sin(a), math.sin(b))
        worst = max(worst, abs(rec["outputs"]["c_star"] - ref) / ref)
    ok = len(lines) == 9 and s1["computed"] == 9 and s2["computed"] == 0 and worst < 1e-12
    return ok, f"{len(lines)} lines, rerun computed {s2['computed']}"


# -- property checks ---------------------------------------------------------

def _kpp_properties():
    from .periodicfield import KPPNonlinearity, validate_kpp

    rng = np.random.default_rng(1)
    fs = [KPPNonlinearity.power(p) for p in (1.0, 2.0, 3.5)]
    for _ in range(5):
        # concave table: integrate a decreasing slope profile, pin f(1) = 0
        s = np.sort(rng.uniform(-2, 2, 64))[::-1]
        t = np.concatenate(([0.0], np.cumsum(s) / 64))
        t -= np.linspace(0, 1, 65) * t[-1]
        if t[1:-1].min() <= 0:
            continue
        fs.append(KPPNonlinearity.tabulated(t))
    bad = [f.describe() for f in fs if not validate_kpp(f).ok]
    return not bad, f"{len(fs)} reactions" + (f", failing {bad}" if bad else "")


def _eigen_laws():
    from .eigen import Coefficient, PeriodicOperator, principal_eigen
    from .periodicfield import build_field

    q = build_field({"preset": "sine", "amplitude": 1.5})
    base = PeriodicOperator(1.0, 0.4, Coefficient(0.3, ((1.0, q),)), 1.0)
    k0 = principal_eigen(base).k
    ks = principal_eigen(base.shifted(0.7)).k
    k_more = principal_eigen(PeriodicOperator(1.0, 0.4, Coefficient(0.5, ((1.0, q),)), 1.0)).k
    ok = abs(ks - k0 - 0.7) < 1e-9 and k_more > k0
    return ok, f"shift err {abs(ks - k0 - 0.7):.1e}, monotone {k_more > k0}"


def _comparison():
    from .periodicfield import KPPNonlinearity, build_field
    from .sim2d import Field2D, Scheme, Stepper

    rng = np.random.default_rng(2)
    q = build_field({"preset": "sine", "amplitude": 2.0})
    f = KPPNonlinearity.logistic()
    worst = -np.inf
    for mode in ("explicit", "imex"):
        g = Field2D.grid(32, 48, 1.0, 2, frame_speed=2.0)
        sch = Scheme(mode)
        dt = Stepper(g, 1.0, q, f, 1e-9, sch).dt_max
        st = Stepper(g, 1.0, q, f, dt, sch)
        U = rng.uniform(0, 1, (32, 48))
        V = np.minimum(U + rng.uniform(0, 0.3, U.shape), 1.0)
        for _ in range(60):
            U, V = st.step(U), st.step(V)
            worst = max(worst, float(np.max(U - V)))
    return worst <= 1e-10, f"max(u - v) = {worst:.2e}"


def _translation():
    from .periodicfield import KPPNonlinearity, build_field
    from .sim2d import Field2D, Scheme, Stepper

    rng = np.random.default_rng(3)
    q = build_field({"preset": "sine", "amplitude": 2.0})
    f = KPPNonlinearity.logistic()
    g = Field2D.grid(48, 32, 1.0, 3, frame_speed=1.0)
    sch = Scheme("explicit")
    st = Stepper(g, 1.0, q, f, Stepper(g, 1.0, q, f, 1e-9, sch).dt_max, sch)
    U = rng.uniform(0, 1, (48, 32))
    a = np.roll(st.advance(U, 40), 16, axis=0)
    b = st.advance(np.roll(U, 16, axis=0), 40)
    return bool(np.array_equal(a, b)), "bitwise equal" if np.array_equal(a, b) else "differs"


def _sweep_reproducible():
    from .cli import run_sweep

    spec = {"task": "speed", "base": {"field": {"preset": "sine", "amplitude": 1.0}},
            "grid": {"rho": [0.5, 1.0], "cone.beta": [1.2, 2.5]}}
    outs = []
    for _ in range(2):
        with tempfile.TemporaryDirectory() as d:
            run_sweep(spec, Path(d))
            recs = [json.loads(l) for l in (Path(d) / "sweep.jsonl").read_text().splitlines()]
        outs.append("\n".join(json.dumps({k: r.get(k) for k in ("config_hash", "inputs", "outputs", "error")},
                                         sort_keys=True) for r in recs))
    return outs[0] == outs[1], "byte-identical records" if outs[0] == outs[1] else "records differ"


def _floquet():
    from .eigen import floquet_conjugate_check
    from .periodicfield import build_field

    r = floquet_conjugate_check(math.pi / 3, 1.0, build_field("sine"), 1.0)
    d = abs(r["k_direct"] - r["k_conjugated"])
    return d < 1e-8 * abs(r["k_direct"]), f"|diff| = {d:.1e}"


CHECKS = [
    ("zero-advection closed form", "trivial", _zero_advection_closed_form),
    ("constant-coefficient eigenvalue", "trivial", _constant_eigen),
    ("scheme equilibria u=0, u=1", "trivial", _equilibria),
    ("discrete maximum principle (Gaussian)", "trivial", _gaussian_max),
    ("degenerate sandwich", "trivial", _degenerate_sandwich),
    ("closed-form constant 1/(pi sqrt 2)", "trivial", _closed_form_constant),
    ("monotonicity controls", "trivial", _monotonicity_controls),
    ("KPP validation presets", "trivial", _kpp_presets),
    ("sweep closed form and idempotency", "trivial", _sweep_closed_form),
    ("KPP concavity/subadditivity", "all", _kpp_properties),
    ("eigenvalue shift and monotonicity laws", "all", _eigen_laws),
    ("scheme comparison preservation", "all", _comparison),
    ("translation equivariance (explicit)", "all", _translation),
    ("sweep reproducibility", "all", _sweep_reproducible),
    ("Floquet conjugation", "all", _floquet),
]


def run_suite(suite: str = "trivial", stream=None) -> bool:
    """Run the selected checks; print one PASS/FAIL line each; return overall status."""
    if suite not in ("trivial", "all"):
        from .errors import InputError
        raise InputError(f"unknown suite {suite!r}")
    ok_all = True
    for name, tag, fn in CHECKS:
        if suite == "trivial" and tag != "trivial":
            continue
        t0 = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as e:  # a crashing check is a failing check
            ok, detail = False, f"{type(e).__name__}: {e}"
        ok_all &= bool(ok)
        if stream is not None:
            print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail} ({time.perf_counter() - t0:.2f} s)",
                  file=stream, flush=True)
    return ok_all
