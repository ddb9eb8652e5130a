"""Finite-difference evolution of u_t = rho Lap u + (q(x) - c) u_y + f(u).

Grid: x_i = x0 + i hx (i < nx), y_j = y0 + j hy (j < ny); values[i, j].
The state is bounded by ghost rows/columns supplied by the boundary
conditions.  Every scheme offered here is monotone under its time-step
bound, so ordered data stay ordered.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from scipy.linalg import lapack

from .errors import DomainEscape, InputError, ProbeEmpty, StepRejected
from .frontprofile import newton_ptc, slow_decay_rate
from .periodicfield import ConeSpec, DiffusionMatrix, KPPNonlinearity, PeriodicField


@dataclass
class Field2D:
    values: np.ndarray
    hx: float
    hy: float
    period: float = 1.0
    x_periods: int = 1
    x0: float = 0.0
    y0: float = 0.0
    frame_speed: float = 0.0
    ghost: dict | None = None       # optional fixed Dirichlet ghost data

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        nx = self.values.shape[0]
        if not math.isclose(nx * self.hx, self.x_periods * self.period, rel_tol=1e-12):
            raise InputError("nx * hx must equal x_periods * period")
        if nx % self.x_periods:
            raise InputError("nx must be a multiple of x_periods")

    @classmethod
    def grid(cls, nx: int, ny: int, period: float = 1.0, x_periods: int = 1,
             hy: float | None = None, x0: float | None = None, y0: float | None = None,
             frame_speed: float = 0.0, fill: float = 0.0) -> "Field2D":
        hx = x_periods * period / nx
        hy = hx if hy is None else hy
        x0 = -0.5 * x_periods * period if x0 is None else x0
        y0 = -0.5 * ny * hy if y0 is None else y0
        return cls(np.full((nx, ny), fill), hx, hy, period, x_periods, x0, y0, frame_speed)

    @classmethod
    def like(cls, other: "Field2D", values, frame_speed=None, ghost=None) -> "Field2D":
        return replace(other, values=np.array(values, dtype=float),
                       frame_speed=other.frame_speed if frame_speed is None else frame_speed,
                       ghost=ghost)

    @property
    def nx(self):
        return self.values.shape[0]

    @property
    def ny(self):
        return self.values.shape[1]

    @property
    def cols_per_period(self):
        return self.nx // self.x_periods

    @property
    def height(self):
        return self.ny * self.hy

    def coords(self):
        return (self.x0 + np.arange(self.nx) * self.hx,
                self.y0 + np.arange(self.ny) * self.hy)

    def copy(self):
        return replace(self, values=self.values.copy())


@dataclass(frozen=True)
class Scheme:
    """mode: explicit | imex; advection: upwind | central;
    lateral: periodic | oblique | neumann | dirichlet; vertical: dirichlet | neumann."""

    mode: str = "explicit"
    advection: str = "upwind"
    lateral: str = "periodic"
    vertical: str = "dirichlet"
    top: float = 1.0
    bottom: float = 0.0
    cone: ConeSpec | None = None

    def __post_init__(self):
        if self.mode not in ("explicit", "imex"):
            raise InputError(f"unknown scheme mode {self.mode!r}")
        if self.advection not in ("upwind", "central"):
            raise InputError(f"unknown advection {self.advection!r}")
        if self.lateral not in ("periodic", "oblique", "neumann", "dirichlet"):
            raise InputError(f"unknown lateral condition {self.lateral!r}")
        if self.vertical not in ("dirichlet", "neumann"):
            raise InputError(f"unknown vertical condition {self.vertical!r}")
        if self.lateral == "oblique" and self.cone is None:
            raise InputError("oblique lateral condition needs a cone")
        if self.mode == "imex" and self.advection == "central":
            raise InputError("central advection is only monotone in explicit mode")


def _ldl(d, e):
    dd, ee, info = lapack.dpttrf(d, e)
    if info != 0:
        raise InputError("implicit diffusion matrix is not positive definite")
    return dd, ee


def _ldl_solve(fac, B):
    X, info = lapack.dpttrs(fac[0], fac[1], B)
    return X


def _zero_reaction(u):
    return np.zeros_like(u)


def dt_limits(hx, hy, rho, a_sup, f: KPPNonlinearity | None, mode="explicit",
              advection="upwind"):
    """Largest admissible dt: stability bound and monotonicity of the full update."""
    lneg = 0.0 if f is None else max(0.0, -f.fprime1, -float(np.min(f.derivative(np.linspace(0, 1, 257)))))
    h = min(hx, hy)
    adv = a_sup / hy if advection == "upwind" else 0.0
    if mode == "explicit":
        stab = 0.9 * min(h * h / (4 * rho), h / a_sup if a_sup > 0 else np.inf)
        mono = 1.0 / (2 * rho / hx ** 2 + 2 * rho / hy ** 2 + adv + lneg)
    else:
        stab = 0.9 * (hy / a_sup if a_sup > 0 else np.inf)
        mono = 1.0 / (adv + lneg) if adv + lneg > 0 else np.inf
    return min(stab, mono)


class Stepper:
    """Precomputed time stepper for a fixed grid, parameters and dt."""

    def __init__(self, grid: Field2D, rho: float, q: PeriodicField | None,
                 f: KPPNonlinearity | None, dt: float, scheme: Scheme | None = None,
                 frame_speed: float | None = None):
        self.scheme = scheme or Scheme()
        self.rho = float(rho)
        self.f = f
        # states are kept in [0, 1], so the unmasked form of f is exact
        self.react = f.on_unit if f is not None else _zero_reaction
        self.dt = float(dt)
        self.hx, self.hy = grid.hx, grid.hy
        self.nx, self.ny = grid.nx, grid.ny
        self.nL = grid.cols_per_period
        c = grid.frame_speed if frame_speed is None else frame_speed
        self.frame_speed = c
        if q is not None and not math.isclose(q.period, grid.period, rel_tol=1e-12):
            raise InputError("field period differs from grid period")
        # sample one period and tile so that columns one period apart are bitwise equal
        xs = grid.x0 + np.arange(self.nL) * grid.hx
        qcol = np.zeros(self.nL) if q is None else q(xs)
        self.a = np.tile(qcol, grid.x_periods) - c
        a_sup = float(np.max(np.abs(self.a)))
        if self.scheme.advection == "central" and self.hy * a_sup / (2 * rho) >= 1:
            raise InputError("central advection needs the cell Peclet number below 1")
        lim = dt_limits(self.hx, self.hy, rho, a_sup, f, self.scheme.mode, self.scheme.advection)
        if self.dt > lim * (1 + 1e-12):
            raise StepRejected(f"dt = {dt:.4g} exceeds the admissible {lim:.4g}", suggested_dt=lim)
        self.dt_max = lim
        self.ap = np.maximum(self.a, 0.0)[:, None]
        self.am = np.minimum(self.a, 0.0)[:, None]
        self.ap_h, self.am_h = self.ap / self.hy, self.am / self.hy
        self.ghost = grid.ghost
        if self.scheme.lateral == "oblique":
            cone = self.scheme.cone
            self.shift_left = grid.period / math.tan(cone.alpha) / grid.hy
            self.shift_right = grid.period / math.tan(cone.beta) / grid.hy
        self.clip_events = 0
        if self.scheme.mode == "imex":
            self._setup_imex()

    # -- boundary data ----------------------------------------------------
    def _rows(self, U):
        """Ghost rows below (j = -1) and above (j = ny)."""
        if self.scheme.vertical == "neumann":
            return U[:, 0], U[:, -1]
        if self.ghost is not None and "bottom" in self.ghost:
            return self.ghost["bottom"], self.ghost["top"]
        return (np.full(self.nx, self.scheme.bottom), np.full(self.nx, self.scheme.top))

    def _shifted_column(self, col, shift, lo, hi):
        """col evaluated at rows j + shift (linear interpolation, BC values outside)."""
        ny = col.size
        ext = np.concatenate(([lo], col, [hi]))
        pos = np.clip(np.arange(ny) + shift, -1.0, float(ny)) + 1.0
        k = np.minimum(np.floor(pos).astype(int), ny)
        w = pos - k
        return (1 - w) * ext[k] + w * ext[np.minimum(k + 1, ny + 1)]

    def _cols(self, U):
        """Ghost columns left (i = -1) and right (i = nx)."""
        lat = self.scheme.lateral
        if lat == "periodic":
            return U[-1], U[0]
        if lat == "neumann":
            return U[0], U[-1]
        if lat == "dirichlet":
            return self.ghost["left"], self.ghost["right"]
        lo, hi = self.scheme.bottom, self.scheme.top
        left = self._shifted_column(U[self.nL - 1], self.shift_left, lo, hi)
        right = self._shifted_column(U[self.nx - self.nL], self.shift_right, lo, hi)
        return left, right

    def padded(self, U):
        P = np.empty((self.nx + 2, self.ny + 2))
        P[1:-1, 1:-1] = U
        bot, top = self._rows(U)
        P[1:-1, 0] = bot
        P[1:-1, -1] = top
        left, right = self._cols(U)
        P[0, 1:-1] = left
        P[-1, 1:-1] = right
        P[0, 0] = P[0, -1] = P[-1, 0] = P[-1, -1] = 0.0
        return P

    # -- operators --------------------------------------------------------
    def advection(self, P):
        U = P[1:-1, 1:-1]
        N = P[1:-1, 2:]
        S = P[1:-1, :-2]
        if self.scheme.advection == "upwind":
            G = np.diff(P[1:-1], axis=1)
            out = self.ap_h * G[:, 1:]
            out += self.am_h * G[:, :-1]
            return out
        return self.a[:, None] * (N - S) / (2 * self.hy)

    def laplacian(self, P):
        U = P[1:-1, 1:-1]
        return ((P[2:, 1:-1] - 2 * U + P[:-2, 1:-1]) / self.hx ** 2
                + (P[1:-1, 2:] - 2 * U + P[1:-1, :-2]) / self.hy ** 2)

    def operator(self, U):
        """Discrete right-hand side rho Lap u + a u_y + f(u)."""
        P = self.padded(U)
        return self.rho * self.laplacian(P) + self.advection(P) + self.react(U)

    def _setup_imex(self):
        r = self.rho * self.dt
        ny, nx = self.ny, self.nx
        # y: symmetric positive definite tridiagonal, factored once (LDL^T)
        dy = np.full(ny, 1 + 2 * r / self.hy ** 2)
        if self.scheme.vertical == "neumann":
            dy[0] -= r / self.hy ** 2
            dy[-1] -= r / self.hy ** 2
        self._fy = _ldl(dy, np.full(ny - 1, -r / self.hy ** 2))
        # x: same; the periodic wrap is a rank-one (Sherman-Morrison) correction
        dx = np.full(nx, 1 + 2 * r / self.hx ** 2)
        off = -r / self.hx ** 2
        if self.scheme.lateral == "neumann":
            dx[0] -= r / self.hx ** 2
            dx[-1] -= r / self.hx ** 2
        self._cyclic = self.scheme.lateral == "periodic"
        if self._cyclic:
            g = -dx[0]
            dx[0] -= g
            dx[-1] -= off * off / g
            u = np.zeros(nx)
            u[0], u[-1] = g, off
            self._smv = off / g
        self._fx = _ldl(dx, np.full(nx - 1, off))
        if self._cyclic:
            z = _ldl_solve(self._fx, u)
            self._smz = z
            self._smden = 1.0 + z[0] + self._smv * z[-1]

    def _solve_x(self, W):
        Y = _ldl_solve(self._fx, W)
        if self._cyclic:
            vy = Y[0] + self._smv * Y[-1]
            # Y is Fortran-ordered; build the correction in the same layout
            Y -= np.outer(vy / self._smden, self._smz).T
        return Y

    def step(self, U):
        dt = self.dt
        P = self.padded(U)
        if self.scheme.mode == "explicit":
            V = U + dt * (self.rho * self.laplacian(P) + self.advection(P) + self.react(U))
        else:
            r = self.rho * dt
            W = self.advection(P)
            W += self.react(U)
            W *= dt
            W += U
            if self.scheme.vertical == "dirichlet":
                W[:, 0] += r / self.hy ** 2 * P[1:-1, 0]
                W[:, -1] += r / self.hy ** 2 * P[1:-1, -1]
            W = _ldl_solve(self._fy, W.T).T
            if self.scheme.lateral in ("oblique", "dirichlet"):
                # lateral ghost data lagged from the start of the step
                W[0] += r / self.hx ** 2 * P[0, 1:-1]
                W[-1] += r / self.hx ** 2 * P[-1, 1:-1]
            V = self._solve_x(W)
        lo, hi = V.min(), V.max()
        if lo < 0.0 or hi > 1.0:
            self.clip_events += int(np.count_nonzero((V < -1e-14) | (V > 1 + 1e-14)))
            np.clip(V, 0.0, 1.0, out=V)
        return V

    def advance(self, U, steps: int):
        for _ in range(steps):
            U = self.step(U)
        return U


def step(state: Field2D, rho: float, q: PeriodicField | None, f: KPPNonlinearity | None,
         dt: float, scheme: Scheme | None = None) -> Field2D:
    """One time step of the configured scheme (convenience wrapper)."""
    st = Stepper(state, rho, q, f, dt, scheme)
    return Field2D.like(state, st.step(state.values), ghost=state.ghost)


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------

def level_set(state: Field2D, level: float = 0.5, columns=None) -> np.ndarray:
    """Height of the topmost upward crossing of ``level`` in each column (NaN if none)."""
    U = state.values if columns is None else state.values[np.atleast_1d(columns)]
    _, y = state.coords()
    above = U >= level
    # last index j with U[j] < level and U[j + 1] >= level
    cross = (~above[:, :-1]) & above[:, 1:]
    out = np.full(U.shape[0], np.nan)
    has = cross.any(axis=1)
    j = U.shape[1] - 2 - np.argmax(cross[:, ::-1], axis=1)
    r = np.flatnonzero(has)
    jj = j[r]
    u0, u1 = U[r, jj], U[r, jj + 1]
    out[r] = y[jj] + state.hy * (level - u0) / (u1 - u0)
    return out


def monotonicity_check(state: Field2D, margin: int = 2, band=(0.01, 0.99)) -> dict:
    """Minimum centered d_y u over the front region (interior rows only)."""
    if margin < 2:
        raise InputError("margin must be >= 2")
    U = state.values
    dy = (U[:, 2:] - U[:, :-2]) / (2 * state.hy)
    inner = np.zeros_like(dy, dtype=bool)
    inner[:, margin - 1: dy.shape[1] - (margin - 1)] = True
    c = U[:, 1:-1]
    region = inner & (c >= band[0]) & (c <= band[1])
    if not region.any():
        region = inner
    vals = np.where(region, dy, np.inf)
    flat = int(np.argmin(vals))
    i, j = np.unravel_index(flat, vals.shape)
    m = float(vals[i, j])
    return {"min_dy_u": m, "argmin": (int(i), int(j) + 1), "passed": m > 0}


def ratio_bound(state: Field2D, cone: ConeSpec, depth: float, floor: float = 1e-6,
                margin: int = 2, front=None) -> float:
    """inf of (centered d_y u) / u over the lower-cone region below the front.

    The region is y <= (front line) - depth per column, where the front line
    is the fitted u = 1/2 level set, restricted to u >= ``floor``.
    """
    if not depth > 0:
        raise InputError("depth must be positive")
    U = state.values
    _, y = state.coords()
    line = level_set(state) if front is None else np.asarray(front)
    dy = (U[:, 2:] - U[:, :-2]) / (2 * state.hy)
    c = U[:, 1:-1]
    yy = y[1:-1][None, :]
    region = (yy <= line[:, None] - depth) & (c >= floor)
    region[:, : margin - 1] = False
    region &= np.isfinite(line)[:, None]
    if not region.any():
        raise ProbeEmpty("no grid points in the lower-cone probe region")
    return float(np.min(dy[region] / c[region]))


def angle_fit(state: Field2D, fraction: float = 0.25) -> dict:
    """Least-squares slopes of the u = 1/2 line over the outer columns on each side."""
    x, _ = state.coords()
    ys = level_set(state)
    k = max(2, int(round(fraction * state.nx)))
    out = {}
    for name, sl in (("angle_left", slice(0, k)), ("angle_right", slice(state.nx - k, state.nx))):
        xs, yv = x[sl], ys[sl]
        good = np.isfinite(yv)
        out[name + "_gaps"] = int(np.count_nonzero(~good))
        if good.sum() < 2:
            out[name] = float("nan")
        else:
            out[name] = float(np.polyfit(xs[good], yv[good], 1)[0])
    return out


@dataclass
class FrontDiagnostics:
    speed_fit: float
    speed_stderr: float
    min_dy_u: float
    ratio_inf: float
    angle_left: float
    angle_right: float
    drift: float = float("nan")
    height: float = float("nan")
    probe_column: int = 0
    probe_x: float = 0.0
    ratio_depth: float = float("nan")
    window: tuple = ()
    clip_events: int = 0
    times: np.ndarray = field(default=None, repr=False)
    positions: np.ndarray = field(default=None, repr=False)
    state: Field2D = field(default=None, repr=False)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in (
            "speed_fit", "speed_stderr", "min_dy_u", "ratio_inf", "angle_left", "angle_right",
            "drift", "height", "probe_column", "probe_x", "ratio_depth", "clip_events")}
        d["window"] = list(self.window)
        return {k: (float(v) if isinstance(v, (np.floating,)) else v) for k, v in d.items()}


@dataclass
class SimConfig:
    nx: int = 256
    ny: int = 1024
    x_periods: int = 8
    hy: float | None = None
    T: float = 40.0
    dt: float | None = None
    t_burn: float | None = None
    sample_every: int = 10
    mode: str = "imex"
    advection: str = "upwind"
    lateral: str | None = None        # default: periodic for flat fronts, oblique for cones
    frame_speed: float | None = None  # default: the computed conical speed
    initial: str = "indicator"
    level: float | None = None
    probe_column: int | None = None
    ratio_depth: float = 2.0
    margin_fraction: float = 0.2


def initial_indicator(grid: Field2D, cone: ConeSpec, level: float) -> np.ndarray:
    """1 above the cone line y = boundary(x) + level, 0 below."""
    x, y = grid.coords()
    X, Y = np.meshgrid(x, y, indexing="ij")
    return (Y >= cone.boundary(X, level)).astype(float)


def ansatz_initial(rho, q, f, cone: ConeSpec, grid: Field2D, c_star: float,
                   delta: float = 0.05, strip_nx: int = 32, strip_hy: float = 1 / 32) -> Field2D:
    """Interpolated strip-front subsolution max(phi_a, phi_b) at c = (1 + delta) c*."""
    from .frontprofile import assemble_conical, solve_strip_front

    c = (1 + delta) * c_star
    branches = []
    for angle, M in ((cone.alpha, DiffusionMatrix.cone_A(cone.alpha)),
                     (cone.beta, DiffusionMatrix.cone_B(cone.beta))):
        Mr = M.scale(rho)
        lam1, _, _ = slow_decay_rate(Mr, q, angle, f.fprime0, c * math.sin(angle))
        H = 10.0 * max(1.0, 1.0 / lam1) + 2.0
        ny = 2 * int(math.ceil(H / strip_hy))
        branches.append(solve_strip_front(Mr, q, angle, c * math.sin(angle), H, strip_nx, ny, f=f))
    return assemble_conical(branches[0], branches[1], cone, grid, rho).under


def run_speed_measurement(rho: float, q: PeriodicField, f: KPPNonlinearity, cone: ConeSpec,
                          config: SimConfig | None = None, c_star: float | None = None,
                          initial_state: Field2D | None = None,
                          on_step=None) -> FrontDiagnostics:
    """Evolve front-like data and measure the co-moving level-set drift and geometry.

    ``on_step(n, t, U)`` is called after every step (snapshots, progress).
    """
    from .speeds import conical_min_speed

    cfg = config or SimConfig()
    if c_star is None and cfg.frame_speed is None:
        c_star = conical_min_speed(rho, q, f, cone).c_star
    c_frame = cfg.frame_speed if cfg.frame_speed is not None else c_star
    flat = math.isclose(cone.alpha, math.pi / 2) and math.isclose(cone.beta, math.pi / 2)
    lateral = cfg.lateral or ("periodic" if flat else "oblique")
    grid = Field2D.grid(cfg.nx, cfg.ny, q.period, cfg.x_periods, cfg.hy, frame_speed=c_frame)
    scheme = Scheme(cfg.mode, cfg.advection, lateral, cone=cone)
    a_sup = float(np.max(np.abs(q.sample(grid.cols_per_period)))) + abs(c_frame)
    lim = dt_limits(grid.hx, grid.hy, rho, a_sup * (1 + 1e-9), f, cfg.mode, cfg.advection)
    dt = cfg.dt if cfg.dt is not None else lim
    width = grid.nx * grid.hx
    if initial_state is not None:
        U = np.clip(initial_state.values, 0.0, 1.0)
    elif cfg.initial == "ansatz":
        U = ansatz_initial(rho, q, f, cone, grid, c_frame).values
    elif cfg.initial == "indicator":
        extent = 0.5 * width * max(1 / math.tan(cone.alpha), 1 / math.tan(cone.beta), 0.0)
        level = cfg.level if cfg.level is not None else 0.5 * extent
        U = initial_indicator(grid, cone, level)
    else:
        raise InputError(f"unknown initial condition {cfg.initial!r}")
    st = Stepper(grid, rho, q, f, dt, scheme)
    x, y = grid.coords()
    if cfg.probe_column is None:
        # middle of the central period
        target = x[0] + (cfg.x_periods // 2) * q.period + 0.5 * q.period
        probe = int(np.argmin(np.abs(x - target)))
    else:
        probe = cfg.probe_column
    t_burn = 0.25 * cfg.T if cfg.t_burn is None else cfg.t_burn
    nsteps = int(math.ceil(cfg.T / dt))
    times, pos = [], []
    height = grid.height
    lo_y, hi_y = y[0] + cfg.margin_fraction * height, y[-1] - cfg.margin_fraction * height
    t = 0.0
    for n in range(1, nsteps + 1):
        U = st.step(U)
        t = n * dt
        if on_step is not None:
            on_step(n, t, U)
        if n % cfg.sample_every == 0 or n == nsteps:
            if t >= t_burn:
                yp = level_set(Field2D.like(grid, U), columns=probe)[0]
                if not np.isfinite(yp) or yp < lo_y or yp > hi_y:
                    raise DomainEscape(f"level set at {yp:.4g} left the domain interior at t = {t:.4g}")
                times.append(t)
                pos.append(yp)
    times, pos = np.array(times), np.array(pos)
    win = times >= cfg.T - 0.5 * cfg.T - 1e-12
    tw, yw = times[win], pos[win]
    A = np.vstack([tw, np.ones_like(tw)]).T
    coef, res, *_ = np.linalg.lstsq(A, yw, rcond=None)
    slope = coef[0]
    dof = max(len(tw) - 2, 1)
    resid = yw - A @ coef
    s2 = float(resid @ resid) / dof
    cov = s2 * np.linalg.inv(A.T @ A)
    final = Field2D.like(grid, U)
    mono = monotonicity_check(final)
    try:
        ratio = ratio_bound(final, cone, cfg.ratio_depth)
    except ProbeEmpty:
        ratio = float("nan")
    ang = angle_fit(final)
    return FrontDiagnostics(
        speed_fit=float(c_frame - slope), speed_stderr=float(math.sqrt(max(cov[0, 0], 0.0))),
        min_dy_u=mono["min_dy_u"], ratio_inf=ratio,
        angle_left=ang["angle_left"], angle_right=ang["angle_right"],
        drift=float(yw[-1] - yw[0]), height=height, probe_column=probe, probe_x=float(x[probe]),
        ratio_depth=cfg.ratio_depth, window=(float(tw[0]), float(tw[-1])),
        clip_events=st.clip_events, times=times, positions=pos, state=final)


# ---------------------------------------------------------------------------
# Exact discrete sub/supersolutions
# ---------------------------------------------------------------------------

def _branch_system(rho, acol, hx, hy, nL, rows, shift, bval):
    """Twisted-periodic discrete operator for one oblique branch.

    Unknowns are columns 0..nL-1, rows 1..rows-2 of a local row range;
    column nL is column 0 shifted down by ``shift`` rows and column -1 is
    column nL-1 shifted up (phi(i + nL, j + shift) = phi(i, j)).  ``bval``
    gives Dirichlet data for (i, local row) outside the unknown range.
    """
    nr = rows - 2
    N = nL * nr
    I, J = np.meshgrid(np.arange(nL), np.arange(1, rows - 1), indexing="xy")
    I, J = I.ravel(), J.ravel()
    ap = np.maximum(acol, 0.0)
    am = np.minimum(acol, 0.0)
    wx = rho / hx ** 2
    wn = rho / hy ** 2 + ap[I] / hy
    ws = rho / hy ** 2 - am[I] / hy
    wc = -2 * rho / hx ** 2 - 2 * rho / hy ** 2 - ap[I] / hy + am[I] / hy
    rr, cc, vv = [np.arange(N)], [np.arange(N)], [wc]
    g = np.zeros(N)
    for di, dj, w in ((1, 0, np.full(N, wx)), (-1, 0, np.full(N, wx)), (0, 1, wn), (0, -1, ws)):
        Ti = I + di
        Tj = J + dj
        wrap_r = Ti == nL
        wrap_l = Ti == -1
        Tj = np.where(wrap_r, Tj - shift, np.where(wrap_l, Tj + shift, Tj))
        Ti = np.where(wrap_r, 0, np.where(wrap_l, nL - 1, Ti))
        inside = (Tj >= 1) & (Tj <= rows - 2)
        src = np.flatnonzero(inside)
        rr.append(src)
        cc.append((Tj[inside] - 1) * nL + Ti[inside])
        vv.append(w[inside])
        out = ~inside
        g[out] += w[out] * bval(Ti[out], Tj[out])
    K = sp.csr_matrix((np.concatenate(vv), (np.concatenate(rr), np.concatenate(cc))), shape=(N, N))
    return K, g


def discrete_branch(rho, q: PeriodicField, f: KPPNonlinearity, grid: Field2D, c: float,
                    angle: float, side: str, row_range, tail_rate: float, tol: float = 1e-11):
    """Steady discrete oblique front of vertical speed c for the explicit upwind scheme.

    Returns (phi, j_lo) with phi[i, k] the value at period column i and
    global row j_lo + k; phi(i + nL, j + s) = phi(i, j) with s the integer
    row shift L cot(angle) / hy (negated for the right branch).
    """
    L, hy, hx, nL = grid.period, grid.hy, grid.hx, grid.cols_per_period
    s_real = L / math.tan(angle) / hy
    s = int(round(s_real))
    if abs(s - s_real) > 1e-9:
        raise InputError("L cot(angle) must be an integer number of rows for exact branches")
    shift = s if side == "left" else -s
    j_lo, j_hi = row_range
    rows = j_hi - j_lo + 1
    xs = grid.x0 + np.arange(nL) * hx
    acol = q(xs) - c
    _, ycoord = grid.coords()
    ca, sa = math.cos(angle), math.sin(angle)
    sign = -1.0 if side == "left" else 1.0

    def strip_Y(i, jloc):
        x = xs[i]
        y = grid.y0 + (j_lo + jloc) * hy
        return sign * x * ca + y * sa

    def bval(i, jloc):
        top = jloc >= rows - 1
        return np.where(top, 1.0, np.minimum(np.exp(tail_rate * strip_Y(i, jloc)), 1.0))

    K, g = _branch_system(rho, acol, hx, hy, nL, rows, shift, bval)
    react = f if f is not None else _zero_reaction

    def F(v):
        return K @ v + g + react(v)

    def Jac(v):
        return K + sp.diags(f.derivative(v))

    Yi = strip_Y(*np.meshgrid(np.arange(nL), np.arange(1, rows - 1), indexing="xy"))
    v0 = 0.5 * (1 + np.tanh(Yi.ravel()))
    v, rn, _, _, conv = newton_ptc(F, Jac, v0, tol=tol, t_max=1e9, max_iter=600)
    if not conv:
        from .errors import ProfileNoConverge
        raise ProfileNoConverge(f"discrete branch not converged (residual {rn:.3e})")
    phi = np.empty((nL, rows))
    Ib, Jb = np.meshgrid(np.arange(nL), np.array([0, rows - 1]), indexing="ij")
    phi[:, [0, rows - 1]] = bval(Ib, Jb)
    phi[:, 1:-1] = v.reshape(rows - 2, nL).T
    return phi, j_lo, shift


def _tile_branch(phi, j_lo, shift, nL, cols, rows):
    """Values of a twisted branch at global (column, row) index arrays."""
    p = np.floor_divide(cols, nL)
    i = cols - p * nL
    k = rows - p * shift - j_lo
    if np.any(k < 0) or np.any(k >= phi.shape[1]):
        raise InputError("branch row range too small for the requested tiling")
    return phi[i, k]


@dataclass
class DiscreteAnsatz:
    under: Field2D
    over: Field2D
    c: float
    branch_left: np.ndarray = field(default=None, repr=False)
    branch_right: np.ndarray = field(default=None, repr=False)


def discrete_conical_ansatz(rho: float, q: PeriodicField, f: KPPNonlinearity, cone: ConeSpec,
                            c: float, grid: Field2D, margin_rows: int = 8) -> DiscreteAnsatz:
    """max / capped-sum pair built from exact discrete steady branches.

    Each branch is a steady state of the explicit upwind scheme in the
    frame moving at c, so the pair is an exact discrete sub/supersolution;
    the boundary ring carries the ansatz values as fixed ghost data.
    """
    nL = grid.cols_per_period
    cols_all = np.arange(-1, grid.nx + 1)
    rows_all = np.arange(-1, grid.ny + 1)
    branches = []
    for angle, side in ((cone.alpha, "left"), (cone.beta, "right")):
        gamma = angle
        Mb = (DiffusionMatrix.cone_A(angle) if side == "left" else DiffusionMatrix.cone_B(angle)).scale(rho)
        lam1, _, _ = slow_decay_rate(Mb, q, gamma, f.fprime0, c * math.sin(angle))
        s = int(round(grid.period / math.tan(angle) / grid.hy))
        shift = s if side == "left" else -s
        p = np.floor_divide(cols_all, nL)
        need_lo = int(rows_all.min() - np.max(p * shift)) if True else 0
        need_hi = int(rows_all.max() - np.min(p * shift))
        j_lo = min(need_lo, rows_all.min()) - margin_rows
        j_hi = max(need_hi, rows_all.max()) + margin_rows
        phi, j0, sh = discrete_branch(rho, q, f, grid, c, angle, side, (j_lo, j_hi), lam1)
        C, R = np.meshgrid(cols_all, rows_all, indexing="ij")
        branches.append(_tile_branch(phi, j0, sh, nL, C, R))
    pa, pb = branches
    under_full = np.maximum(pa, pb)
    over_full = np.minimum(pa + pb, 1.0)

    def field_of(full):
        ghost = {"left": full[0, 1:-1].copy(), "right": full[-1, 1:-1].copy(),
                 "bottom": full[1:-1, 0].copy(), "top": full[1:-1, -1].copy()}
        return Field2D.like(grid, full[1:-1, 1:-1], frame_speed=c, ghost=ghost)

    return DiscreteAnsatz(field_of(under_full), field_of(over_full), c, pa, pb)


def sandwich_evolution(under: Field2D, over: Field2D, steps: int, rho: float,
                       q: PeriodicField, f: KPPNonlinearity, c: float,
                       dt: float | None = None, sample_every: int = 1,
                       tol: float = 1e-8) -> dict:
    """Evolve a sub/supersolution pair in the frame moving at c.

    Each field uses its own fixed ghost ring (Dirichlet data) with the
    explicit monotone scheme.  Reports ordering and time monotonicity.
    """
    if not np.all(under.values <= over.values + tol):
        i = np.unravel_index(int(np.argmax(under.values - over.values)), under.values.shape)
        return {"ordered": False, "under_monotone_up": False, "over_monotone_down": False,
                "violation": ("initial", tuple(int(v) for v in i))}
    lateral = "dirichlet" if under.ghost is not None else "periodic"
    scheme = Scheme("explicit", "upwind", lateral)
    a_sup = float(np.max(np.abs(q.sample(under.cols_per_period)))) + abs(c)
    lim = dt_limits(under.hx, under.hy, rho, a_sup * (1 + 1e-9), f, "explicit")
    dt = lim if dt is None else dt
    su = Stepper(Field2D.like(under, under.values, frame_speed=c, ghost=under.ghost), rho, q, f, dt, scheme)
    so = Stepper(Field2D.like(over, over.values, frame_speed=c, ghost=over.ghost), rho, q, f, dt, scheme)
    U, V = under.values.copy(), over.values.copy()
    Up, Vp = U.copy(), V.copy()
    ordered = up = down = True
    where = None
    worst = {"order": 0.0, "under": 0.0, "over": 0.0}
    for n in range(1, steps + 1):
        U = su.step(U)
        V = so.step(V)
        if n % sample_every == 0 or n == steps:
            d_order = float(np.max(U - V))
            d_up = float(np.max(Up - U))
            d_down = float(np.max(V - Vp))
            worst["order"] = max(worst["order"], d_order)
            worst["under"] = max(worst["under"], d_up)
            worst["over"] = max(worst["over"], d_down)
            if d_order > tol and ordered:
                ordered = False
                where = ("order", n, tuple(int(v) for v in np.unravel_index(int(np.argmax(U - V)), U.shape)))
            if d_up > tol:
                up = False
            if d_down > tol:
                down = False
            Up, Vp = U.copy(), V.copy()
    return {"ordered": ordered, "under_monotone_up": up, "over_monotone_down": down,
            "violation": where, "worst": worst, "dt": dt, "steps": steps,
            "under_final": U, "over_final": V}
