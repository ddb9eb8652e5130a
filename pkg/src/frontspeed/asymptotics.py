"""Asymptotic regimes of the conical speed and the large-advection variational problem."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh
from scipy.optimize import brentq

from .errors import InputError
from .periodicfield import (ConeSpec, KPPNonlinearity, PeriodicField, antiderivative,
                            build_field)
from .speeds import conical_min_speed, golden_min, zero_advection_speed

MU_MIN = 1e-8
MU_MAX = 1e8


@dataclass
class LimitScan:
    parameter_values: np.ndarray
    computed: np.ndarray
    predicted_limit: float
    label: str = ""
    inner: list = field(default_factory=list)

    @property
    def deviations(self) -> np.ndarray:
        return np.abs(np.asarray(self.computed) - self.predicted_limit)

    @property
    def relative_deviations(self) -> np.ndarray:
        scale = abs(self.predicted_limit) if self.predicted_limit else 1.0
        return self.deviations / scale

    @property
    def passing(self) -> bool:
        d = self.deviations
        return bool(np.all(np.diff(d) < 0))

    def rows(self):
        for p, c, d in zip(self.parameter_values, self.computed, self.deviations):
            yield float(p), float(c), float(self.predicted_limit), float(d)


@dataclass
class VariationalResult:
    gamma_star: float
    w_opt: np.ndarray
    mu_star: float
    duality_gap: float
    primal: float = float("nan")
    constraint_residual: float = 0.0
    boundary_flag: bool = False
    primal_stalled: bool = False


# ---------------------------------------------------------------------------
# Large advection: max int q w^2 / int w^2 under rho |w'|^2 <= f'(0) |w|^2
# ---------------------------------------------------------------------------

def _sigma(mu, rho, qx, fprime0, L):
    """Top eigenvalue and eigenvector of mu rho D2 + diag(q + mu f'0)."""
    n = qx.size
    h = L / n
    off = mu * rho / h ** 2
    A = np.diag(qx + mu * fprime0 - 2.0 * off)
    i = np.arange(n)
    A[i, (i + 1) % n] += off
    A[i, (i - 1) % n] += off
    vals, vecs = eigh(A, subset_by_index=[n - 1, n - 1])
    w = vecs[:, 0]
    return float(vals[0]), np.abs(w)


def _laplacian_symbol(n, L):
    h = L / n
    k = np.arange(n // 2 + 1)
    return (2.0 - 2.0 * np.cos(2.0 * np.pi * k / n)) / h ** 2


def _constraint(w, rho, fprime0, L):
    """rho |w'|^2 - f'(0) |w|^2 with forward differences (discrete norms)."""
    h = L / w.size
    dw = (np.roll(w, -1) - w) / h
    return h * (rho * np.sum(dw ** 2) - fprime0 * np.sum(w ** 2))


def large_advection_dual(rho: float, qx: np.ndarray, fprime0: float, L: float):
    """min over mu >= 0 of sigma(mu); returns (gamma, w, mu, boundary_flag)."""
    h = L / qx.size

    def sig(t):
        return _sigma(math.exp(t), rho, qx, fprime0, L)[0]

    def dsig(mu):
        # Hellmann-Feynman: derivative is the constraint form at the eigenvector
        _, w = _sigma(mu, rho, qx, fprime0, L)
        return -_constraint(w, rho, fprime0, L) / (h * np.sum(w ** 2))

    lo, hi = math.log(MU_MIN), math.log(MU_MAX)
    grid = np.linspace(lo, hi, 33)
    vals = [sig(t) for t in grid]
    i = int(np.argmin(vals))
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    t, _, _ = golden_min(sig, a, b, 1e-6)
    mu = math.exp(t)
    boundary = i == 0 or i == grid.size - 1
    if not boundary:
        # polish the stationarity condition so the constraint is active
        ma, mb = math.exp(a), math.exp(b)
        da, db = dsig(ma), dsig(mb)
        if da < 0 < db:
            mu = brentq(dsig, ma, mb, xtol=1e-15 * mb, rtol=4 * np.finfo(float).eps, maxiter=200)
    gamma, w = _sigma(mu, rho, qx, fprime0, L)
    if i == 0 and float(qx.max()) < gamma:
        # sigma(0) = max q; keep the positive eigenvector from mu_min
        gamma, mu = float(qx.max()), 0.0
    return gamma, w / w.max(), mu, boundary


def large_advection_primal(rho, qx, fprime0, L, starts=20, seed=0, max_iter=20000,
                           tol=1e-12):
    """Projected gradient ascent of the discrete Rayleigh ratio, batched over starts.

    The Euclidean projection onto {rho w'Dw <= f'(0) w'w} is diagonal in
    Fourier space: v_k = w_k / (1 + tau (rho d_k - f'(0))) with tau in
    [0, 1/f'(0)) fixed by bisection so that the constraint is active.
    """
    n = qx.size
    d = _laplacian_symbol(n, L)
    g = rho * d - fprime0                               # constraint symbol
    wt = np.full(n // 2 + 1, 2.0)
    wt[0] = 1.0
    if n % 2 == 0:
        wt[-1] = 1.0
    rng = np.random.default_rng(seed)
    W = rng.random((starts, n)) + 0.1
    tau_hi = (1.0 - 1e-15) / fprime0

    def project(W):
        Wh = np.fft.rfft(W, axis=1)
        p = np.abs(Wh) ** 2 * wt
        viol = (p * g).sum(axis=1)
        out = Wh.copy()
        act = viol > 0
        if np.any(act):
            P = p[act]
            lo = np.zeros(P.shape[0])
            hi = np.full(P.shape[0], tau_hi)
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                val = (P * g / (1.0 + mid[:, None] * g) ** 2).sum(axis=1)
                pos = val > 0
                lo = np.where(pos, mid, lo)
                hi = np.where(pos, hi, mid)
            out[act] = Wh[act] / (1.0 + hi[:, None] * g)
        return np.fft.irfft(out, n, axis=1)

    spread = float(np.ptp(qx)) or 1.0
    step = 0.5 / spread
    W = project(W)
    W /= np.linalg.norm(W, axis=1, keepdims=True)
    R = np.einsum("ij,j,ij->i", W, qx, W)
    stalled = True
    for it in range(max_iter):
        G = qx * W - R[:, None] * W
        Wn = project(W + step * G)
        Wn /= np.linalg.norm(Wn, axis=1, keepdims=True)
        Rn = np.einsum("ij,j,ij->i", Wn, qx, Wn)
        W, dR, R = Wn, np.max(np.abs(Rn - R)), Rn
        if dR < tol * (1.0 + np.max(np.abs(R))):
            stalled = False
            break
    best = int(np.argmax(R))
    return float(R[best]), W[best], stalled


def large_advection_limit(rho: float, q: PeriodicField, fprime0: float, n: int = 256,
                          primal: bool = True, starts: int = 20, seed: int = 0) -> VariationalResult:
    """Value of max int q w^2/int w^2 subject to rho |w'|^2 <= f'(0) |w|^2.

    The dual min_mu sigma(mu) is primary; the projected-gradient primal is
    an independent certificate of a vanishing duality gap.
    """
    if n < 64:
        raise InputError("n must be >= 64")
    if not (rho > 0 and fprime0 > 0):
        raise InputError("rho and f'(0) must be positive")
    L = q.period
    if q.is_zero:
        return VariationalResult(0.0, np.ones(n), 0.0, 0.0, 0.0)
    qx = q.sample(n)
    gamma, w, mu, boundary = large_advection_dual(rho, qx, fprime0, L)
    h = L / n
    resid = _constraint(w, rho, fprime0, L) / (h * np.sum(w ** 2))
    res = VariationalResult(gamma, w, mu, float("nan"), constraint_residual=resid,
                            boundary_flag=boundary)
    if primal:
        p, _, stalled = large_advection_primal(rho, qx, fprime0, L, starts, seed)
        res.primal = p
        res.duality_gap = gamma - p
        res.primal_stalled = stalled
    return res


# ---------------------------------------------------------------------------
# Large advection and small reaction: closed form
# ---------------------------------------------------------------------------

def centered_antiderivative_norm(q: PeriodicField) -> float:
    """|Q - mean(Q)|_{L2(0,L)} for Q = int_0^x q."""
    L = q.period
    if q.is_zero:
        return 0.0
    if q.preset in ("sine", "cosine"):
        # sum over harmonics of (a w_k / (2 pi k / L))^2 L / 2
        s = sum((q.amplitude * w * L / (2.0 * np.pi * k)) ** 2 for k, w in q.harmonics)
        return math.sqrt(s * L / 2.0)
    if q.preset == "sawtooth":
        return abs(q.amplitude) * L ** 1.5 / math.sqrt(180.0)
    Q = antiderivative(q, n=max(4096, q.samples.size))
    n = max(4096, q.samples.size)
    vals = Q.centered.sample(n)
    return math.sqrt(L / n * np.sum(vals ** 2))


def large_adv_small_reaction_limit(rho: float, q: PeriodicField, fprime0: float) -> float:
    """2 sqrt(f'(0) / (rho L)) |Q - mean(Q)|_2, the maximizer of int q w / |w'|."""
    if not (rho > 0 and fprime0 > 0):
        raise InputError("rho and f'(0) must be positive")
    antiderivative(q)  # raises NotMeanZero on bad input
    return 2.0 * math.sqrt(fprime0 / (rho * q.period)) * centered_antiderivative_norm(q)


# ---------------------------------------------------------------------------
# Scans
# ---------------------------------------------------------------------------

def _fp0(f):
    return f.fprime0 if isinstance(f, KPPNonlinearity) else float(f)


def _ordered(values, decreasing):
    v = np.asarray(values, float)
    if np.any(v <= 0):
        raise InputError("scan parameters must be positive")
    d = np.diff(v)
    if (decreasing and np.any(d >= 0)) or (not decreasing and np.any(d <= 0)):
        raise InputError("scan parameters must be strictly "
                         + ("decreasing" if decreasing else "increasing"))
    return v


def scan_small_reaction(rho, q: PeriodicField, f: KPPNonlinearity, cone: ConeSpec,
                        gamma_exp: float, m_values) -> LimitScan:
    """c*(rho, m^g q, m f)/sqrt(m) as m -> 0."""
    if gamma_exp < 0.5:
        raise InputError("gamma_exp must be >= 1/2")
    m = _ordered(m_values, decreasing=True)
    out = [conical_min_speed(rho, q.scaled(mi ** gamma_exp), f.scaled(mi), cone).c_star
           / math.sqrt(mi) for mi in m]
    return LimitScan(m, np.array(out), zero_advection_speed(rho, _fp0(f), cone), "small-reaction")


def scan_large_diffusion(rho, q: PeriodicField, f: KPPNonlinearity, cone: ConeSpec,
                         gamma_exp: float, m_values) -> LimitScan:
    """c*(m rho, m^g q, f)/sqrt(m) as m -> infinity."""
    if not (0.0 <= gamma_exp <= 0.5):
        raise InputError("gamma_exp must lie in [0, 1/2]")
    m = _ordered(m_values, decreasing=False)
    out = [conical_min_speed(mi * rho, q.scaled(mi ** gamma_exp), f, cone).c_star
           / math.sqrt(mi) for mi in m]
    return LimitScan(m, np.array(out), zero_advection_speed(rho, _fp0(f), cone), "large-diffusion")


def scan_large_advection(rho, q, f, cone, m_values, n: int = 256) -> LimitScan:
    """c*(rho, m q, f)/m as m -> infinity against the variational value."""
    m = _ordered(m_values, decreasing=False)
    target = large_advection_limit(rho, q, _fp0(f), n=n, primal=False).gamma_star
    out = [conical_min_speed(rho, q.scaled(mi), f, cone).c_star / mi for mi in m]
    return LimitScan(m, np.array(out), target, "large-advection")


def scan_double_limits(rho, q: PeriodicField, f: KPPNonlinearity, cone: ConeSpec,
                       m_values, outer_values, which: str = "1.15-eps") -> LimitScan:
    """Iterated limits on fixed grids: the outer parameter indexes inner m-scans.

    which:
      ``"1.15-eps"``  c*(rho, m q, eps f)/(m sqrt(eps)) -> closed form, eps -> 0
      ``"1.15-mu"``   c*(mu rho, m q, f) sqrt(mu)/m -> closed form, mu -> inf
      ``"1.16-eps"``  c*(eps, m q, f)/m -> max q, eps -> 0
      ``"1.16-mu"``   c*(rho, m q, mu f)/m -> max q, mu -> inf
    The returned scan holds the value at the largest m for each outer
    parameter; the inner m-scans are kept in ``inner``.
    """
    m = _ordered(m_values, decreasing=False)
    fp0 = _fp0(f)
    if which == "1.15-eps":
        outer = _ordered(outer_values, decreasing=True)
        target = large_adv_small_reaction_limit(rho, q, fp0)

        def val(mi, e):
            return conical_min_speed(rho, q.scaled(mi), f.scaled(e), cone).c_star / (mi * math.sqrt(e))
    elif which == "1.15-mu":
        outer = _ordered(outer_values, decreasing=False)
        target = large_adv_small_reaction_limit(rho, q, fp0)

        def val(mi, mu):
            return conical_min_speed(mu * rho, q.scaled(mi), f, cone).c_star * math.sqrt(mu) / mi
    elif which == "1.16-eps":
        outer = _ordered(outer_values, decreasing=True)
        target = q.max_value

        def val(mi, e):
            return conical_min_speed(e, q.scaled(mi), f, cone).c_star / mi
    elif which == "1.16-mu":
        outer = _ordered(outer_values, decreasing=False)
        target = q.max_value

        def val(mi, mu):
            return conical_min_speed(rho, q.scaled(mi), f.scaled(mu), cone).c_star / mi
    else:
        raise InputError(f"unknown double limit {which!r}")
    inner = []
    for e in outer:
        inner.append(LimitScan(m, np.array([val(mi, e) for mi in m]), target, f"{which} at {e:g}"))
    return LimitScan(outer, np.array([s.computed[-1] for s in inner]), target, which, inner)


def scan_homogenization(rho, q_unit: PeriodicField, f: KPPNonlinearity, cone: ConeSpec,
                        L_values) -> LimitScan:
    """c*(rho, q(x/L), f) as L -> 0."""
    if not math.isclose(q_unit.period, 1.0, abs_tol=1e-14):
        raise InputError("q_unit must be 1-periodic")
    Ls = _ordered(L_values, decreasing=True)
    out = [conical_min_speed(rho, q_unit.homogenization_rescale(Li), f, cone).c_star for Li in Ls]
    return LimitScan(Ls, np.array(out), zero_advection_speed(rho, _fp0(f), cone), "homogenization")
