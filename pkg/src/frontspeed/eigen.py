"""Principal eigenpairs of 1D periodic operators  a psi'' + b(x) psi' + c0(x) psi.

The discrete operator uses central differences with periodic wrap.  Under
the mesh Peclet condition h max|b| / (2a) < 1 every off-diagonal entry is
positive, so sigma I - L_h is a nonsingular M-matrix for sigma above the
Perron root and its inverse is entrywise positive.  We exploit this with a
shifted inverse iteration whose shift is the Collatz-Wielandt upper bound
(Noda's iteration); it converges superlinearly and keeps the iterate
positive throughout.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import EigenNoConverge, InputError
from .periodicfield import PeriodicField

MAX_N = 2 ** 20


@dataclass(frozen=True)
class Coefficient:
    """const + sum_j scale_j * g_j(x) for periodic callables g_j."""

    const: float = 0.0
    terms: tuple = ()

    def sample(self, x: np.ndarray) -> np.ndarray:
        out = np.full(x.shape, float(self.const))
        for scale, g in self.terms:
            if scale != 0.0:
                out = out + scale * np.asarray(g(x), dtype=float)
        return out

    @property
    def is_constant(self) -> bool:
        return all(s == 0.0 or (isinstance(g, PeriodicField) and g.is_zero)
                   for s, g in self.terms)

    def __add__(self, other) -> "Coefficient":
        other = as_coefficient(other)
        return Coefficient(self.const + other.const, self.terms + other.terms)

    __radd__ = __add__


def as_coefficient(v) -> Coefficient:
    if isinstance(v, Coefficient):
        return v
    if isinstance(v, (int, float, np.floating, np.integer)):
        return Coefficient(float(v))
    if callable(v):
        return Coefficient(0.0, ((1.0, v),))
    raise TypeError(f"cannot use {type(v).__name__} as an operator coefficient")


@dataclass(frozen=True)
class PeriodicOperator:
    """a psi'' + b(x) psi' + c0(x) psi on L-periodic functions.

    ``twist`` imposes the Bloch condition psi(x + L) = exp(-twist L) psi(x)
    instead of plain periodicity (twist = 0).
    """

    a: float
    b: Coefficient
    c0: Coefficient
    period: float
    twist: float = 0.0

    def __init__(self, a, b=0.0, c0=0.0, period=1.0, twist=0.0):
        object.__setattr__(self, "a", float(a))
        object.__setattr__(self, "b", as_coefficient(b))
        object.__setattr__(self, "c0", as_coefficient(c0))
        object.__setattr__(self, "period", float(period))
        object.__setattr__(self, "twist", float(twist))
        if not (self.a > 0 and np.isfinite(self.a)):
            raise InputError(f"leading coefficient must be positive, got {a}")
        if not (self.period > 0 and np.isfinite(self.period)):
            raise InputError(f"period must be positive, got {period}")
        for coef in (self.b, self.c0):
            for _, g in coef.terms:
                if isinstance(g, PeriodicField) and not math.isclose(
                        g.period, self.period, rel_tol=1e-12):
                    raise InputError("coefficient period differs from operator period")

    def shifted(self, sigma: float) -> "PeriodicOperator":
        return PeriodicOperator(self.a, self.b, self.c0 + sigma, self.period, self.twist)

    def grid(self, n: int) -> np.ndarray:
        return np.arange(n) * (self.period / n)

    def peclet(self, n: int) -> float:
        h = self.period / n
        bx = self.b.sample(self.grid(n))
        return h * float(np.max(np.abs(bx))) / (2.0 * self.a)

    def diagonals(self, n: int):
        """(lower, diag, upper) coefficient arrays of the discrete operator."""
        h = self.period / n
        x = self.grid(n)
        bx = self.b.sample(x)
        cx = self.c0.sample(x)
        lo = self.a / h ** 2 - bx / (2.0 * h)
        up = self.a / h ** 2 + bx / (2.0 * h)
        diag = cx - 2.0 * self.a / h ** 2
        return lo, diag, up

    def matrix(self, n: int) -> sp.csr_matrix:
        lo, diag, up = self.diagonals(n)
        i = np.arange(n)
        wl = np.ones(n)
        wu = np.ones(n)
        if self.twist != 0.0:
            wl[0] = math.exp(self.twist * self.period)     # psi_{-1} = e^{tL} psi_{n-1}
            wu[-1] = math.exp(-self.twist * self.period)   # psi_n = e^{-tL} psi_0
        rows = np.concatenate([i, i, i])
        cols = np.concatenate([i, (i - 1) % n, (i + 1) % n])
        vals = np.concatenate([diag, lo * wl, up * wu])
        return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


@dataclass
class EigenResult:
    k: float
    psi: np.ndarray
    n: int
    err_estimate: float
    iterations: int
    k_discrete: float = float("nan")
    x: np.ndarray = field(default=None, repr=False)
    history: list = field(default_factory=list, repr=False)

    def residual(self, op: PeriodicOperator) -> float:
        """sup |L_h psi - k_h psi| / sup psi at the final grid."""
        r = op.matrix(self.n) @ self.psi - self.k_discrete * self.psi
        return float(np.max(np.abs(r)) / np.max(np.abs(self.psi)))

    def dump_csv(self, path) -> None:
        path = Path(path)
        with path.open("w") as fh:
            fh.write(f"# k={self.k!r} n={self.n}\n")
            fh.write("x,psi\n")
            for xi, pi in zip(self.x, self.psi):
                fh.write(f"{xi!r},{pi!r}\n")


def _noda(A: sp.csr_matrix, x0: np.ndarray, op_scale: float, tol: float,
          max_iter: int = 200):
    """Perron root of an essentially nonnegative irreducible matrix A."""
    n = A.shape[0]
    x = np.asarray(x0, dtype=float).copy()
    x /= x.max()
    eye = sp.identity(n, format="csc")
    Acsc = A.tocsc()
    # roundoff floor on Collatz-Wielandt gaps
    floor = 4.0 * np.finfo(float).eps * op_scale
    best = (np.inf, None, None)
    stall = 0
    it = 0
    for it in range(1, max_iter + 1):
        # tail entries of strongly localized vectors sit at the underflow
        # level; they carry no information about the root
        live = x > 1e-150
        r = (A @ x)[live] / x[live]
        hi, lo = float(r.max()), float(r.min())
        gap = hi - lo
        if gap <= max(tol * (1.0 + abs(hi)), floor):
            return 0.5 * (hi + lo), x, it
        if gap < best[0]:
            best = (gap, 0.5 * (hi + lo), x)
            stall = 0
        else:
            stall += 1
            if stall >= 3 and best[0] <= 1e4 * floor:
                return best[1], best[2], it
        sigma = hi
        bump = 0.0
        for _ in range(8):
            try:
                y = splu((sigma + bump) * eye - Acsc).solve(x)
            except RuntimeError:  # exactly singular
                y = None
            if y is not None and np.all(np.isfinite(y)):
                ymax = y.max()
                if ymax > 0 and y.min() > -1e-12 * ymax:
                    break
            bump = max(2.0 * bump, floor * 4.0, 1e-14 * abs(sigma))
        else:
            raise EigenNoConverge("shifted inverse iteration lost positivity")
        x = np.maximum(y / ymax, 1e-300)
    raise EigenNoConverge(f"Noda iteration did not converge in {max_iter} steps")


def _power(A: sp.csr_matrix, x0: np.ndarray, shift: float, tol: float,
           max_iter: int = 2_000_000):
    """Plain power iteration on shift*I + A (nonnegative)."""
    x = np.asarray(x0, dtype=float).copy()
    x /= x.max()
    for it in range(1, max_iter + 1):
        y = A @ x + shift * x
        r = y / x
        hi, lo = float(r.max()), float(r.min())
        x = y / y.max()
        if hi - lo <= tol * (1.0 + abs(hi - shift)):
            return 0.5 * (hi + lo) - shift, x, it
    raise EigenNoConverge("power iteration did not converge")


def discrete_eigen(op: PeriodicOperator, n: int, method: str = "noda",
                   x0: np.ndarray | None = None, tol: float = 1e-13):
    """Perron root and positive eigenvector of the n-point discretization."""
    if op.peclet(n) >= 1.0:
        raise InputError(f"mesh Peclet condition fails at n={n}")
    A = op.matrix(n)
    if x0 is None:
        x0 = np.ones(n)
    lo, diag, up = op.diagonals(n)
    scale = float(np.max(np.abs(lo) + np.abs(diag) + np.abs(up)))
    if method == "noda":
        return _noda(A, x0, scale, tol)
    if method == "power":
        shift = float(np.max(np.abs(diag))) + op.a / (op.period / n) ** 2
        return _power(A, x0, shift, max(tol, 1e-12))
    raise InputError(f"unknown eigen method {method!r}")


def _interp_periodic(psi: np.ndarray, m: int) -> np.ndarray:
    """Resample a positive periodic grid vector from n to m points (linear)."""
    n = psi.size
    xs = np.arange(n + 1) / n
    return np.interp(np.arange(m) / m, xs, np.append(psi, psi[0]))


def principal_eigen(op: PeriodicOperator, n: int = 64, rtol: float = 1e-10,
                    refine: bool = True, method: str = "noda",
                    max_n: int = MAX_N) -> EigenResult:
    """Principal eigenvalue k and positive eigenfunction of ``op``.

    With ``refine`` the grid is doubled (starting from ``n``, or the first
    power of two meeting the Peclet condition) until successive Richardson
    values (4 k_2n - k_n)/3 agree within rtol (1 + |k|).  Without it the
    discrete Perron root at exactly ``n`` points is returned.
    """
    if n < 16 or n & (n - 1):
        raise InputError(f"n must be a power of two >= 16, got {n}")
    if not (1e-14 < rtol < 1e-4):
        raise InputError(f"rtol must lie in (1e-14, 1e-4), got {rtol}")
    if not refine:
        k, psi, its = discrete_eigen(op, n, method)
        return EigenResult(k, psi, n, float("nan"), its, k, op.grid(n), [(n, k)])

    if op.b.is_constant and op.c0.is_constant and op.twist == 0.0:
        # constant coefficients: psi = 1 is exact at every resolution
        k = float(op.c0.const)
        return EigenResult(k, np.ones(n), n, 0.0, 0, k, op.grid(n), [(n, k)])

    while op.peclet(n) >= 0.5:
        n *= 2
        if n > max_n:
            raise EigenNoConverge("cannot meet the mesh Peclet condition")

    history = []
    total = 0
    psi = None
    k_prev = r_prev = d_prev = None
    eps = np.finfo(float).eps
    while True:
        x0 = None if psi is None else _interp_periodic(psi, n)
        k, psi, its = discrete_eigen(op, n, method, x0=x0)
        total += its
        history.append((n, k))
        if k_prev is not None:
            r = (4.0 * k - k_prev) / 3.0
            if r_prev is not None:
                d = abs(r - r_prev)
                # below this the grid differences are swamped by roundoff
                floor = 64.0 * eps * (op.a * n * n / op.period ** 2 + abs(r))
                if d <= max(rtol * (1.0 + abs(r)), floor) or (
                        d_prev is not None and d >= d_prev and d_prev <= 1e3 * floor):
                    return EigenResult(r, psi, n, abs(k - k_prev), total, k,
                                       op.grid(n), history)
                d_prev = d
            r_prev = r
        k_prev = k
        n *= 2
        if n > max_n:
            raise EigenNoConverge(
                f"eigenvalue not converged at n={max_n}: history {history[-3:]}")


def paper_operator(theta: float, lam: float, c: float, q: PeriodicField,
                   fprime0: float, x_shift: float = 0.0) -> PeriodicOperator:
    """The family d2 + 2 theta d + [theta^2 + lam^2 - c lam + q(x + x') lam + f'(0)].

    This carries the front speed c inside the potential, so k_theta(0) =
    theta^2 + f'(0) and dk/dlam(0) = -c.  The speed computations instead
    keep c outside: their k(lam) relates to this one by k_paper = k - c lam
    when theta = 0 and the unit diffusion matrix is used.
    """
    qs = q.shifted(x_shift)
    c0 = Coefficient(theta ** 2 + lam ** 2 - c * lam + fprime0, ((lam, qs),))
    return PeriodicOperator(1.0, 2.0 * theta, c0, q.period)


def floquet_conjugate_check(alpha_angle: float, lam: float, q: PeriodicField,
                            fprime0: float, rtol: float = 1e-11) -> dict:
    """Eigenvalue of the drifted operator and of its exponentially twisted conjugate.

    psi'' - 2 lam cos(a) psi' + (lam^2 + lam q sin a + f'(0)) psi on periodic psi
    equals, through psi = exp(theta x) phi with theta = lam cos(a), the
    drift-free operator phi'' + (lam^2 sin^2 a + lam q sin a + f'(0)) phi under
    the Bloch condition phi(x + L) = exp(-theta L) phi(x).
    """
    if not lam > 0:
        raise InputError("lambda must be positive")
    s, cth = math.sin(alpha_angle), math.cos(alpha_angle)
    theta = lam * cth
    direct = PeriodicOperator(1.0, -2.0 * lam * cth,
                              Coefficient(lam ** 2 + fprime0, ((lam * s, q),)), q.period)
    twisted = PeriodicOperator(1.0, 0.0,
                               Coefficient(lam ** 2 * s ** 2 + fprime0, ((lam * s, q),)),
                               q.period, twist=theta)
    kd = principal_eigen(direct, rtol=rtol).k
    kc = principal_eigen(twisted, rtol=rtol).k
    return {"k_direct": kd, "k_conjugated": kc}
