"""Dispersion curves, planar pulsating-front speeds and the conical speed.

For a planar front in direction gamma with diffusion M, the exponential
ansatz exp(lam Y) psi(X) in the linearized strip problem yields the
periodic eigenproblem

    m11 psi'' + 2 lam m12 psi' + (lam^2 m22 + lam q(x) sin(gamma) + f'(0)) psi = k psi,

and the KPP minimal speed is min_{lam > 0} k(lam) / lam.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .eigen import Coefficient, PeriodicOperator, principal_eigen
from .errors import BracketError, InputError, OutsideExistenceRegime
from .periodicfield import ConeSpec, DiffusionMatrix, KPPNonlinearity, PeriodicField

LAMBDA_MIN = 2.0 ** -20
LAMBDA_MAX = 2.0 ** 20
TIE_RTOL = 1e-9
_GOLD = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class DispersionPoint:
    lam: float
    k: float

    @property
    def speed(self) -> float:
        return self.k / self.lam


@dataclass(frozen=True)
class PlanarSpeed:
    c: float
    lambda_star: float
    evaluations: int = 0


@dataclass(frozen=True)
class SpeedResult:
    c_star: float
    c_left: float
    c_right: float
    lambda_left: float
    lambda_right: float
    attaining: str
    rigorous: bool = True

    def to_dict(self) -> dict:
        return asdict(self)


def dispersion_operator(M: DiffusionMatrix, q: PeriodicField, gamma: float,
                        fprime0: float, lam: float) -> PeriodicOperator:
    s = math.sin(gamma)
    c0 = Coefficient(lam * lam * M.m22 + fprime0, ((lam * s, q),))
    return PeriodicOperator(M.m11, 2.0 * lam * M.m12, c0, q.period)


def _check_gamma(gamma):
    if not (0.0 < gamma < math.pi):
        raise InputError(f"gamma must lie in (0, pi) radians, got {gamma}")


def k_curve(M: DiffusionMatrix, q: PeriodicField, gamma: float, fprime0: float,
            lam: float, rtol: float = 1e-10) -> DispersionPoint:
    """Principal eigenvalue k(lam) of the planar dispersion operator."""
    _check_gamma(gamma)
    if not lam > 0:
        raise InputError(f"lambda must be positive, got {lam}")
    op = dispersion_operator(M, q, gamma, fprime0, lam)
    return DispersionPoint(lam, principal_eigen(op, rtol=rtol).k)


def dispersion_curve(M, q, gamma, fprime0, lambdas, rtol=1e-10) -> list[DispersionPoint]:
    return [k_curve(M, q, gamma, fprime0, float(l), rtol) for l in lambdas]


def golden_min(g, a: float, b: float, xtol: float):
    """Golden-section minimum of a unimodal g on [a, b]; returns (x, g(x), evals)."""
    c = b - _GOLD * (b - a)
    d = a + _GOLD * (b - a)
    gc, gd = g(c), g(d)
    evals = 2
    while b - a > xtol:
        if gc <= gd:
            b, d, gd = d, c, gc
            c = b - _GOLD * (b - a)
            gc = g(c)
        else:
            a, c, gc = c, d, gd
            d = a + _GOLD * (b - a)
            gd = g(d)
        evals += 1
    if gc <= gd:
        return c, gc, evals
    return d, gd, evals


def bracket_min(g, t0: float, lo: float, hi: float, step: float = 0.5):
    """Expand from t0 until g rises on both sides; returns (a, b) inside [lo, hi]."""
    g0 = g(t0)
    gl, gr = g(max(lo, t0 - step)), g(min(hi, t0 + step))
    if gl >= g0 and gr >= g0:
        return max(lo, t0 - step), min(hi, t0 + step)
    direction = -1.0 if gl < gr else 1.0
    prev_t, prev_g = t0, g0
    t, gt = (t0 - step, gl) if direction < 0 else (t0 + step, gr)
    while True:
        step *= 2.0
        nt = t + direction * step
        if nt <= lo or nt >= hi:
            nt = lo if nt <= lo else hi
            gn = g(nt)
            if gn <= gt:
                raise BracketError("dispersion ratio is monotone up to the lambda bound")
            return (nt, prev_t) if direction < 0 else (prev_t, nt)
        gn = g(nt)
        if gn > gt:
            return (nt, prev_t) if direction < 0 else (prev_t, nt)
        prev_t, prev_g, t, gt = t, gt, nt, gn


def planar_min_speed(M: DiffusionMatrix, q: PeriodicField, gamma: float,
                     f: KPPNonlinearity, xtol: float = 1e-8,
                     rtol: float = 1e-10) -> PlanarSpeed:
    """c = min_{lam>0} k(lam)/lam by bracketing and golden section on log lam."""
    _check_gamma(gamma)
    fp0 = f.fprime0 if isinstance(f, KPPNonlinearity) else float(f)
    if not fp0 > 0:
        raise InputError("f'(0) must be positive")
    if q.is_zero:
        # k = m22 lam^2 + f'(0): closed form
        lam = math.sqrt(fp0 / M.m22)
        return PlanarSpeed(2.0 * math.sqrt(M.m22 * fp0), lam, 0)
    cache = {}

    def g(t):
        if t not in cache:
            lam = math.exp(t)
            op = dispersion_operator(M, q, gamma, fp0, lam)
            cache[t] = principal_eigen(op, rtol=rtol).k / lam
        return cache[t]

    t0 = 0.5 * math.log(fp0 / M.m22)
    lo, hi = math.log(LAMBDA_MIN), math.log(LAMBDA_MAX)
    t0 = min(max(t0, lo + 1.0), hi - 1.0)
    a, b = bracket_min(g, t0, lo, hi)
    t, c, _ = golden_min(g, a, b, xtol)
    return PlanarSpeed(c, math.exp(t), len(cache))


def conical_min_speed(rho: float, q: PeriodicField, f: KPPNonlinearity,
                      cone: ConeSpec, force: bool = False, **kw) -> SpeedResult:
    """max(c*_{rho A, q sin a}/sin a, c*_{rho B, q sin b}/sin b)."""
    if not (rho > 0 and np.isfinite(rho)):
        raise InputError(f"rho must be positive, got {rho}")
    if not cone.existence_regime and not force:
        raise OutsideExistenceRegime(
            f"alpha + beta = {cone.alpha + cone.beta:.6g} > pi; pass force=True to evaluate anyway")
    left = planar_min_speed(DiffusionMatrix.cone_A(cone.alpha).scale(rho), q, cone.alpha, f, **kw)
    right = planar_min_speed(DiffusionMatrix.cone_B(cone.beta).scale(rho), q, cone.beta, f, **kw)
    cl = left.c / math.sin(cone.alpha)
    cr = right.c / math.sin(cone.beta)
    c_star = max(cl, cr)
    if abs(cl - cr) <= TIE_RTOL * c_star:
        attaining = "tie"
    else:
        attaining = "left" if cl > cr else "right"
    return SpeedResult(c_star, cl, cr, left.lambda_star, right.lambda_star, attaining,
                       rigorous=cone.existence_regime)


def zero_advection_speed(rho: float, fprime0: float, cone: ConeSpec) -> float:
    """2 sqrt(rho f'(0)) / min(sin a, sin b)."""
    return 2.0 * math.sqrt(rho * fprime0) / cone.min_sin
