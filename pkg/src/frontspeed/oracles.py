"""Independent reference computations used to validate the main solvers.

These use different algorithms from the production code (dense
eigendecompositions, grid scans, collocation BVP solves) and are kept
deliberately simple.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.integrate import solve_bvp

from .eigen import PeriodicOperator
from .periodicfield import DiffusionMatrix, PeriodicField
from .speeds import dispersion_operator


def dense_principal_eigen(op: PeriodicOperator, n: int):
    """Eigenvalue of the dense discrete operator whose eigenvector is one-signed."""
    A = op.matrix(n).toarray()
    w, V = np.linalg.eig(A)
    order = np.argsort(-w.real)
    for i in order:
        v = V[:, i]
        v = v * np.exp(-1j * np.angle(v[np.argmax(np.abs(v))]))
        if abs(w[i].imag) < 1e-9 * (1 + abs(w[i])) and np.all(v.real > -1e-12 * np.abs(v).max()):
            return float(w[i].real), np.abs(v.real) / np.abs(v).max()
    raise RuntimeError("no positive eigenvector found")


def grid_scan_speed(M: DiffusionMatrix, q: PeriodicField, gamma: float, fprime0: float,
                    lam_min: float = 0.05, lam_max: float = 20.0, points: int = 2000,
                    n: int = 1024):
    """min k(lam)/lam over a log grid, k from the dense oracle at n points."""
    lams = np.geomspace(lam_min, lam_max, points)
    ratios = np.array([dense_principal_eigen(dispersion_operator(M, q, gamma, fprime0, l), n)[0] / l
                       for l in lams])
    i = int(np.argmin(ratios))
    # parabolic refinement in log lam through the three best nodes
    if 0 < i < points - 1:
        t = np.log(lams[i - 1:i + 2])
        a, b, _ = np.polyfit(t, ratios[i - 1:i + 2], 2)
        tv = -b / (2 * a)
        return float(np.polyval([a, b, _], tv)), float(math.exp(tv))
    return float(ratios[i]), float(lams[i])


def discrete_max_int_qw(q: PeriodicField, n: int = 1024) -> float:
    """max int q w over periodic w with |w'|_2 = 1, on an n-point grid.

    With the discrete Laplacian D (periodic, scaled by 1/h^2) the maximum
    is sqrt(h q^T (-D)^+ q).
    """
    L = q.period
    h = L / n
    qx = q.sample(n)
    qx = qx - qx.mean()
    k = np.arange(n)
    d = (2.0 - 2.0 * np.cos(2.0 * np.pi * k / n)) / h ** 2
    qh = np.fft.fft(qx)
    val = np.sum(np.abs(qh[1:]) ** 2 / d[1:]) / n
    return math.sqrt(h * val)


def travelling_wave_1d(c: float, fprime0_f, H: float, bottom: float, m22: float = 1.0,
                       tol: float = 1e-10, nodes: int = 4001):
    """m22 phi'' - c phi' + f(phi) = 0 on [-H, H], phi(-H) = bottom, phi(H) = 1.

    Collocation (solve_bvp); returns a callable Y -> phi.
    """
    f = fprime0_f
    Y = np.linspace(-H, H, nodes)
    lam = (c - math.sqrt(max(c * c - 4 * m22 * f.fprime0, 0.0))) / (2 * m22)
    guess0 = np.where(Y < 0, 0.5 * np.exp(lam * Y), 1 - 0.5 * np.exp(-Y))
    guess1 = np.gradient(guess0, Y)

    def rhs(y, s):
        return np.vstack([s[1], (c * s[1] - f(np.clip(s[0], 0, 1))) / m22])

    def bc(sa, sb):
        return np.array([sa[0] - bottom, sb[0] - 1.0])

    sol = solve_bvp(rhs, bc, Y, np.vstack([guess0, guess1]), tol=tol, max_nodes=200000)
    if not sol.success:
        raise RuntimeError(f"BVP oracle failed: {sol.message}")
    return lambda y: sol.sol(np.asarray(y))[0]
