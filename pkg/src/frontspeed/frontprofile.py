"""Planar pulsating fronts on a periodic strip and the conical sub/supersolution pair.

The strip problem is

    div(M grad phi) + (q(X) sin(gamma) - c) d_Y phi + f(phi) = 0,

X-periodic, phi -> 0 as Y -> -inf and phi -> 1 as Y -> +inf.  On the
truncated strip [-H, H] the bottom boundary carries the exponential tail
exp(lam1 Y) psi_lam1(X) of the front (lam1 the slow decay rate at speed c),
which fixes the translation; with plain zero data the steady state would
collapse onto a boundary layer at the top.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import RectBivariateSpline
from scipy.optimize import brentq
from scipy.sparse.linalg import splu

from .eigen import principal_eigen
from .errors import DomainTooSmall, InputError, ProfileNoConverge, SpeedMismatch
from .periodicfield import ConeSpec, DiffusionMatrix, KPPNonlinearity, PeriodicField
from .speeds import dispersion_operator, planar_min_speed

SUPERCRITICAL_MARGIN = 0.02


@dataclass
class StripProfile:
    phi: np.ndarray          # (nx, ny + 1), rows Y_0 = -H .. Y_ny = H
    c: float
    M: DiffusionMatrix
    gamma: float
    period: float
    H: float
    converged: bool
    residual_sup: float
    lam1: float = float("nan")
    iterations: int = 0
    _spline: object = field(default=None, repr=False)

    @property
    def nx(self):
        return self.phi.shape[0]

    @property
    def X(self):
        return np.arange(self.nx) * (self.period / self.nx)

    @property
    def Y(self):
        return np.linspace(-self.H, self.H, self.phi.shape[1])

    def __call__(self, X, Y):
        """Bicubic evaluation, X-periodic, clamped to 0 / 1 beyond the strip."""
        if self._spline is None:
            pad = 3
            n = self.nx
            Xp = (np.arange(-pad, n + pad)) * (self.period / n)
            idx = np.arange(-pad, n + pad) % n
            self._spline = RectBivariateSpline(Xp, self.Y, self.phi[idx], kx=3, ky=3)
        X = np.mod(np.asarray(X, float), self.period)
        Y = np.asarray(Y, float)
        X, Y = np.broadcast_arrays(X, Y)
        out = self._spline.ev(X, np.clip(Y, -self.H, self.H))
        out = np.where(Y < -self.H, 0.0, out)
        out = np.where(Y > self.H, 1.0, out)
        return np.clip(out, 0.0, 1.0)

    def min_dY(self) -> float:
        return float(np.min(np.diff(self.phi, axis=1)) / (2 * self.H / (self.phi.shape[1] - 1)))

    def wrap_mismatch(self) -> float:
        """Difference between phi at X = L (from the spline) and at X = 0."""
        return float(np.max(np.abs(self(self.period, self.Y) - self(0.0, self.Y))))


def slow_decay_rate(M: DiffusionMatrix, q: PeriodicField, gamma: float, fprime0: float,
                    c: float):
    """Smaller root lam1 of k(lam) = c lam and the eigenfunction psi_lam1."""
    star = planar_min_speed(M, q, gamma, fprime0)
    if c <= star.c:
        raise InputError(f"c = {c} is not above the minimal speed {star.c}")

    def g(lam):
        return principal_eigen(dispersion_operator(M, q, gamma, fprime0, lam)).k - c * lam

    lam1 = brentq(g, 1e-12, star.lambda_star, xtol=1e-14, rtol=1e-12)
    res = principal_eigen(dispersion_operator(M, q, gamma, fprime0, lam1))
    return lam1, res, star


def tail_data(M, q, gamma, fprime0, c, X, Y):
    """exp(lam1 Y) psi(X) / max psi on the given points."""
    lam1, res, _ = slow_decay_rate(M, q, gamma, fprime0, c)
    n = res.psi.size
    xs = np.arange(n + 1) * (q.period / n)
    psi = np.interp(np.mod(X, q.period), xs, np.append(res.psi, res.psi[0]))
    return np.exp(lam1 * np.asarray(Y)) * psi / res.psi.max(), lam1


# ---------------------------------------------------------------------------
# Discrete operator
# ---------------------------------------------------------------------------

def _strip_system(M, bq, hx, hy, nx, nrows, bottom, top):
    """Sparse matrix K and boundary vector g: K v + g is the discrete operator.

    Unknowns are rows 1..nrows of an X-periodic grid, index j * nx + i.
    ``bq`` is the advection coefficient per column, ``bottom`` / ``top`` the
    Dirichlet rows 0 and nrows + 1.
    """
    m12 = M.m12
    cross = abs(m12) / (hx * hy)
    wx = M.m11 / hx ** 2 - cross
    wy = M.m22 / hy ** 2 - cross
    wn = wy + bq / (2 * hy)
    ws = wy - bq / (2 * hy)
    if wx < -1e-14 or np.any(wn < -1e-14) or np.any(ws < -1e-14):
        raise InputError("strip stencil is not monotone; refine hx/hy")
    wc = -2 * M.m11 / hx ** 2 - 2 * M.m22 / hy ** 2 + 2 * cross
    diag_pair = ((1, 1), (-1, -1)) if m12 >= 0 else ((-1, 1), (1, -1))
    neighbours = [((1, 0), np.full(nx, wx)), ((-1, 0), np.full(nx, wx)),
                  ((0, 1), wn), ((0, -1), ws)]
    if cross > 0:
        neighbours += [(d, np.full(nx, cross)) for d in diag_pair]
    N = nx * nrows
    I, J = np.meshgrid(np.arange(nx), np.arange(1, nrows + 1), indexing="xy")
    I, J = I.ravel(), J.ravel()
    rows = [np.arange(N)]
    cols = [np.arange(N)]
    vals = [np.full(N, wc)]
    g = np.zeros(N)
    for (di, dj), w in neighbours:
        Ti = (I + di) % nx
        Tj = J + dj
        wv = w[I]
        inside = (Tj >= 1) & (Tj <= nrows)
        src = np.flatnonzero(inside)
        rows.append(src)
        cols.append((Tj[inside] - 1) * nx + Ti[inside])
        vals.append(wv[inside])
        lo = Tj == 0
        hi = Tj == nrows + 1
        g[lo] += wv[lo] * bottom[Ti[lo]]
        g[hi] += wv[hi] * top[Ti[hi]]
    K = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(N, N))
    return K, g


def newton_ptc(F, J, v0, dt0=0.1, tol=1e-10, t_max=1e4, max_iter=400, lower=0.0, upper=1.0):
    """Pseudo-transient continuation with backward-Euler Newton steps.

    F(v) is the steady residual and J(v) its sparse Jacobian; the step
    solves (I/dt - J) dv = F and grows dt by switched evolution relaxation.
    Returns (v, residual_sup, t, iterations, converged).
    """
    v = v0.copy()
    r = F(v)
    rn = float(np.max(np.abs(r)))
    dt = dt0
    t = 0.0
    N = v.size
    eye = sp.identity(N, format="csc")
    for it in range(1, max_iter + 1):
        if rn < tol:
            return v, rn, t, it - 1, True
        A = (eye / dt - J(v)).tocsc()
        dv = splu(A).solve(r)
        vn = np.clip(v + dv, lower, upper)
        rnew = F(vn)
        rnn = float(np.max(np.abs(rnew)))
        if not np.isfinite(rnn) or (rnn > 10 * rn and dt > dt0 * 1e-6):
            dt *= 0.25
            continue
        t += dt
        dt = min(dt * min(max(rn / max(rnn, 1e-300), 0.5), 10.0), 1e12)
        v, r, rn = vn, rnew, rnn
        if t > t_max:
            break
    return v, rn, t, max_iter, rn < tol


def solve_strip_front(M: DiffusionMatrix, q: PeriodicField, gamma: float, c: float,
                      H: float, nx: int, ny: int, t_max: float = 1e6,
                      f: KPPNonlinearity | None = None, initial: str = "tanh",
                      check_speed: bool = True, tol: float = 1e-10) -> StripProfile:
    """Steady pulsating front of speed c on the strip [0, L] x [-H, H].

    ``nx`` columns per period, ``ny`` intervals in Y.  ``initial`` is
    ``"tanh"`` (smoothed step at Y = 0, width 1) or ``"zero"``.
    """
    f = f or KPPNonlinearity.logistic()
    if not (0 < gamma < math.pi):
        raise InputError("gamma must lie in (0, pi)")
    if nx < 4 or ny < 8:
        raise InputError("grid too small")
    lam1, eig, star = slow_decay_rate(M, q, gamma, f.fprime0, c)
    if check_speed and c < star.c * (1 + SUPERCRITICAL_MARGIN) * (1 - 1e-12):
        raise InputError(f"c = {c:.6g} must exceed the minimal speed {star.c:.6g} by 2%")
    if H < 10 * max(1.0, 1.0 / lam1):
        raise DomainTooSmall(f"H = {H} < 10 max(1, 1/lam1) = {10 * max(1, 1 / lam1):.4g}")
    L = q.period
    hx, hy = L / nx, 2 * H / ny
    X = np.arange(nx) * hx
    Y = np.linspace(-H, H, ny + 1)
    bq = q.sample(nx) * math.sin(gamma) - c
    bottom, _ = tail_data(M, q, gamma, f.fprime0, c, X, -H)
    top = np.ones(nx)
    nrows = ny - 1
    K, g = _strip_system(M, bq, hx, hy, nx, nrows, bottom, top)

    def F(v):
        return K @ v + g + f(v)

    def Jac(v):
        return K + sp.diags(f.derivative(v))

    Yi = np.repeat(Y[1:-1], nx)
    if initial == "tanh":
        v0 = 0.5 * (1 + np.tanh(Yi))
    elif initial == "zero":
        v0 = np.zeros(nx * nrows)
    else:
        raise InputError(f"unknown initial condition {initial!r}")
    v, rn, t, its, conv = newton_ptc(F, Jac, v0, tol=tol, t_max=t_max)
    phi = np.empty((nx, ny + 1))
    phi[:, 0] = bottom
    phi[:, -1] = top
    phi[:, 1:-1] = v.reshape(nrows, nx).T
    prof = StripProfile(phi, c, M, gamma, L, H, rn < 1e-7, rn, lam1, its)
    if not prof.converged:
        raise ProfileNoConverge(f"strip front not converged (residual {rn:.3e}, t = {t:.3g})",
                                profile=prof)
    if phi[:, 1].max() > 0.02 or phi[:, -2].min() < 0.98:
        raise DomainTooSmall("front too close to the strip boundary; increase H")
    return prof


# ---------------------------------------------------------------------------
# Conical sub/supersolution
# ---------------------------------------------------------------------------

@dataclass
class ConicalAnsatz:
    under: object            # sim2d.Field2D
    over: object
    sandwich_ok: bool
    residual_under_min: float
    residual_over_max: float
    branch_alpha: np.ndarray = field(default=None, repr=False)
    branch_beta: np.ndarray = field(default=None, repr=False)
    switch_margin_mask: np.ndarray = field(default=None, repr=False)

    def conical_conditions(self, cone: ConeSpec, depth: float = 10.0, level: float = 0.0):
        """(max of under at depth below the cone line, min of over at depth above)."""
        g = self.under
        x, y = g.coords()
        X, Yg = np.meshgrid(x, y, indexing="ij")
        line = cone.boundary(X, level)
        below = np.abs(Yg - (line - depth)) <= g.hy / 2 + 1e-12
        above = np.abs(Yg - (line + depth)) <= g.hy / 2 + 1e-12
        lo = float(self.under.values[below].max()) if below.any() else float("nan")
        hi = float(self.over.values[above].min()) if above.any() else float("nan")
        return lo, hi


def elliptic_residual(u, hx, hy, rho, a, f, lateral="none"):
    """rho Lap u + a(x) d_y u + f(u) on interior points (central differences).

    Returns an array of the shape of u with NaN on the outer ring.
    """
    r = np.full(u.shape, np.nan)
    c = u[1:-1, 1:-1]
    lap = ((u[2:, 1:-1] - 2 * c + u[:-2, 1:-1]) / hx ** 2
           + (u[1:-1, 2:] - 2 * c + u[1:-1, :-2]) / hy ** 2)
    dy = (u[1:-1, 2:] - u[1:-1, :-2]) / (2 * hy)
    r[1:-1, 1:-1] = rho * lap + a[1:-1, None] * dy + f(c)
    return r


def _dilate(mask, k):
    out = mask.copy()
    for _ in range(k):
        m = out.copy()
        m[1:] |= out[:-1]
        m[:-1] |= out[1:]
        m[:, 1:] |= out[:, :-1]
        m[:, :-1] |= out[:, 1:]
        out = m
    return out


def assemble_conical(phi_alpha: StripProfile, phi_beta: StripProfile, cone: ConeSpec,
                     grid, rho: float = 1.0, q: PeriodicField | None = None,
                     f: KPPNonlinearity | None = None, margin: int = 2) -> ConicalAnsatz:
    """Sub/supersolution pair from two oblique planar fronts on a 2D grid.

    under = max(phi_a(x, -x cos a + y sin a), phi_b(x, x cos b + y sin b)),
    over = min(sum, 1).  ``grid`` is a Field2D (its values are ignored).
    """
    from .sim2d import Field2D  # local import: sim2d builds on this module

    ca = phi_alpha.c / math.sin(cone.alpha)
    cb = phi_beta.c / math.sin(cone.beta)
    if abs(ca - cb) > 1e-8 * max(abs(ca), abs(cb)):
        raise SpeedMismatch(f"branch speeds differ: {ca!r} vs {cb!r}")
    f = f or KPPNonlinearity.logistic()
    x, y = grid.coords()
    X, Yg = np.meshgrid(x, y, indexing="ij")
    sa, ka = math.sin(cone.alpha), math.cos(cone.alpha)
    sb, kb = math.sin(cone.beta), math.cos(cone.beta)
    Ya = -X * ka + Yg * sa
    Yb = X * kb + Yg * sb
    pa = phi_alpha(X, Ya)
    pb = phi_beta(X, Yb)
    under_v = np.maximum(pa, pb)
    over_v = np.minimum(pa + pb, 1.0)
    under = Field2D.like(grid, under_v, frame_speed=ca)
    over = Field2D.like(grid, over_v, frame_speed=ca)
    sandwich = bool(np.all(under_v <= over_v))

    if q is None:
        res_u = res_o = float("nan")
        excl = None
    else:
        a = q(x) - ca
        ru = elliptic_residual(under_v, grid.hx, grid.hy, rho, a, f)
        ro = elliptic_residual(over_v, grid.hx, grid.hy, rho, a, f)
        switch = np.zeros_like(under_v, dtype=bool)
        s = np.sign(pa - pb)
        switch[1:] |= s[1:] != s[:-1]
        switch[:, 1:] |= s[:, 1:] != s[:, :-1]
        excl = _dilate(switch, margin)
        # the truncated strips are clamped beyond +-H, which leaves a kink there
        clamp_a = _dilate(np.abs(Ya) >= phi_alpha.H, margin)
        clamp_b = _dilate(np.abs(Yb) >= phi_beta.H, margin)
        active_clamp = np.where(pa >= pb, clamp_a, clamp_b)
        ok_u = ~excl & ~active_clamp & np.isfinite(ru)
        ok_o = (over_v < 1 - 1e-6) & ~clamp_a & ~clamp_b & np.isfinite(ro)
        res_u = float(np.min(ru[ok_u])) if ok_u.any() else float("nan")
        res_o = float(np.max(ro[ok_o])) if ok_o.any() else float("nan")
    return ConicalAnsatz(under, over, sandwich, res_u, res_o, pa, pb, excl)
