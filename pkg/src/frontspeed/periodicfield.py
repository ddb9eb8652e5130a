"""Data model: periodic shear fields, KPP reactions, diffusion matrices, cones.

Everything here is immutable after construction.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import (
    InvalidCone,
    InvalidField,
    InvalidMatrix,
    InvalidNonlinearity,
    InvalidPeriod,
    NotMeanZero,
)

DEFAULT_SAMPLES = 512
MIN_SAMPLES = 8

_PRESETS = ("zero", "sine", "cosine", "sawtooth", "samples")


def _harmonic_terms(harmonics) -> list[tuple[int, float]]:
    terms = []
    for h in harmonics:
        if isinstance(h, (list, tuple)):
            k, w = int(h[0]), float(h[1])
        else:
            k, w = int(h), 1.0
        if k < 1:
            raise InvalidField(f"harmonic wavenumbers must be >= 1, got {k}")
        terms.append((k, w))
    return terms


@dataclass(frozen=True, eq=False)
class PeriodicField:
    """An L-periodic, mean-zero scalar field q(x).

    Analytic presets are evaluated in closed form; sampled fields are
    interpolated with periodic wrap (linear or cubic spline).  ``samples``
    always holds the field on the uniform grid ``i * period / n``.
    """

    period: float
    samples: np.ndarray
    preset: str = "samples"
    amplitude: float = 0.0
    harmonics: tuple = ((1, 1.0),)
    interpolation_order: int = 3
    _interp: Callable | None = field(default=None, repr=False)

    def __post_init__(self):
        if not (np.isfinite(self.period) and self.period > 0):
            raise InvalidPeriod(f"period must be positive, got {self.period}")
        if self.preset not in _PRESETS:
            raise InvalidField(f"unknown preset {self.preset!r}")
        if self.interpolation_order not in (1, 3):
            raise InvalidField("interpolation_order must be 1 or 3")
        s = np.asarray(self.samples, dtype=float)
        if s.ndim != 1 or s.size < MIN_SAMPLES:
            raise InvalidField(f"need at least {MIN_SAMPLES} samples per period")
        if not np.all(np.isfinite(s)):
            raise InvalidField("non-finite samples")
        s = s - s.mean()
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)
        if self.preset == "samples":
            x = np.arange(s.size + 1) * (self.period / s.size)
            y = np.append(s, s[0])
            if self.interpolation_order == 3:
                interp = CubicSpline(x, y, bc_type="periodic")
            else:
                def interp(t, _x=x, _y=y):
                    return np.interp(t, _x, _y)
            object.__setattr__(self, "_interp", interp)

    # -- evaluation -------------------------------------------------------
    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        L = self.period
        if self.preset == "zero":
            return np.zeros_like(x)
        if self.preset in ("sine", "cosine"):
            trig = np.sin if self.preset == "sine" else np.cos
            out = np.zeros_like(x)
            for k, w in self.harmonics:
                out = out + w * trig(2.0 * np.pi * k * x / L)
            return self.amplitude * out
        xr = np.mod(x, L)
        if self.preset == "sawtooth":
            frac = xr / L
            out = 2.0 * frac - 1.0
            # midpoint value at the jump keeps the discrete mean exactly zero
            out = np.where(frac == 0.0, 0.0, out)
            return self.amplitude * out
        return np.asarray(self._interp(xr))

    def sample(self, n: int) -> np.ndarray:
        """Values on the grid ``i * period / n``, i = 0..n-1."""
        if self.preset == "samples" and n == self.samples.size:
            return np.array(self.samples)
        return self(np.arange(n) * (self.period / n))

    @property
    def is_zero(self) -> bool:
        return self.preset == "zero" or not np.any(self.samples)

    @property
    def sup_norm(self) -> float:
        if self.preset == "zero":
            return 0.0
        if self.preset in ("sine", "cosine"):
            fine = self.sample(max(4096, 64 * max(k for k, _ in self.harmonics)))
            return float(np.max(np.abs(fine)))
        if self.preset == "sawtooth":
            return abs(self.amplitude)
        return float(np.max(np.abs(self.sample(8 * self.samples.size))))

    @property
    def max_value(self) -> float:
        if self.preset == "zero":
            return 0.0
        if self.preset == "sawtooth":
            return abs(self.amplitude)
        n = 8 * self.samples.size if self.preset == "samples" else 8192
        return float(np.max(self.sample(n)))

    # -- derived fields ---------------------------------------------------
    def _replace(self, **kw) -> "PeriodicField":
        args = dict(period=self.period, samples=self.samples, preset=self.preset,
                    amplitude=self.amplitude, harmonics=self.harmonics,
                    interpolation_order=self.interpolation_order)
        args.update(kw)
        return PeriodicField(**args)

    def scaled(self, s: float) -> "PeriodicField":
        """The field s * q."""
        if self.preset == "zero":
            return self
        return self._replace(samples=s * self.samples, amplitude=s * self.amplitude)

    def with_period(self, period: float) -> "PeriodicField":
        """Same profile stretched to a new period: x -> q(x * L_old / period)."""
        return self._replace(period=period)

    def homogenization_rescale(self, L: float) -> "PeriodicField":
        """q_L(x) = q(x / L) for a 1-periodic q."""
        if not math.isclose(self.period, 1.0, rel_tol=0, abs_tol=1e-14):
            raise InvalidPeriod("homogenization rescaling needs a 1-periodic field")
        return self.with_period(L)

    def shifted(self, s: float, n: int = 1024) -> "PeriodicField":
        """The field x -> q(x + s), resampled on n points."""
        if s == 0.0 or self.preset == "zero":
            return self
        n = max(n, self.samples.size)
        x = np.arange(n) * (self.period / n)
        return PeriodicField(period=self.period, samples=self(x + s),
                             interpolation_order=self.interpolation_order)

    def reflected(self) -> "PeriodicField":
        """The field x -> q(-x)."""
        n = self.samples.size
        idx = (-np.arange(n)) % n
        return PeriodicField(period=self.period, samples=self.samples[idx],
                             interpolation_order=self.interpolation_order)

    def describe(self) -> dict:
        d = {"preset": self.preset, "period": self.period}
        if self.preset in ("sine", "cosine"):
            d.update(amplitude=self.amplitude, harmonics=[list(h) for h in self.harmonics])
        elif self.preset == "sawtooth":
            d["amplitude"] = self.amplitude
        elif self.preset == "samples":
            d.update(samples=self.samples.tolist(), interpolation_order=self.interpolation_order)
        return d


def build_field(spec, L: float | None = None, n_samples: int = DEFAULT_SAMPLES,
                interpolation_order: int = 3) -> PeriodicField:
    """Build a PeriodicField from a preset name, a preset dict or raw samples.

    ``spec`` may be ``"zero"``, a dict like ``{"preset": "sine", "amplitude": 2,
    "period": 1, "harmonics": [1, 3]}``, or a sequence of samples on a uniform
    grid over one period.  ``L`` overrides any period in the dict.
    """
    if isinstance(spec, PeriodicField):
        return spec if L is None else spec.with_period(L)
    if isinstance(spec, str):
        spec = {"preset": spec}
    if isinstance(spec, dict):
        spec = dict(spec)
        preset = spec.pop("preset", "samples")
        period = float(L if L is not None else spec.pop("period", 1.0))
        spec.pop("period", None)
        if not (np.isfinite(period) and period > 0):
            raise InvalidPeriod(f"period must be positive, got {period}")
        order = int(spec.pop("interpolation_order", interpolation_order))
        if preset == "samples":
            if "samples" not in spec:
                raise InvalidField("preset 'samples' needs a 'samples' list")
            return build_field(spec["samples"], period, interpolation_order=order)
        if preset not in _PRESETS:
            raise InvalidField(f"unknown preset {preset!r}")
        amplitude = float(spec.pop("amplitude", 1.0))
        harmonics = tuple(_harmonic_terms(spec.pop("harmonics", [1])))
        if not np.isfinite(amplitude):
            raise InvalidField("non-finite amplitude")
        proto = PeriodicField(period=period, samples=np.zeros(n_samples), preset=preset,
                              amplitude=amplitude, harmonics=harmonics,
                              interpolation_order=order)
        return proto._replace(samples=proto(np.arange(n_samples) * (period / n_samples)))
    samples = np.asarray(spec, dtype=float)
    if L is None:
        raise InvalidPeriod("a period is required for raw samples")
    if not (np.isfinite(L) and L > 0):
        raise InvalidPeriod(f"period must be positive, got {L}")
    if samples.ndim != 1:
        raise InvalidField("samples must be one-dimensional")
    return PeriodicField(period=float(L), samples=samples,
                         interpolation_order=interpolation_order)


def field_from_csv(path, period: float | None = None, interpolation_order: int = 3) -> PeriodicField:
    """Read a two-column ``x,value`` CSV (header optional, uniform x from 0)."""
    path = Path(path)
    xs, vs = [], []
    with path.open(newline="") as fh:
        for row in csv.reader(fh):
            if not row or not row[0].strip():
                continue
            try:
                x, v = float(row[0]), float(row[1])
            except ValueError:
                if not xs:
                    continue  # header
                raise InvalidField(f"{path}: unparsable row {row}")
            xs.append(x)
            vs.append(v)
    x = np.array(xs)
    v = np.array(vs)
    if x.size < 2:
        raise InvalidField(f"{path}: too few rows")
    dx = np.diff(x)
    h = dx.mean()
    if h <= 0 or np.max(np.abs(dx - h)) > 1e-9 * max(1.0, abs(h)) * x.size:
        raise InvalidField(f"{path}: x must be uniform and increasing")
    if abs(x[0]) > 1e-12 * max(1.0, h):
        raise InvalidField(f"{path}: x must start at 0")
    if period is not None and math.isclose(x[-1], period, rel_tol=1e-9):
        x, v = x[:-1], v[:-1]  # duplicated endpoint
    L = period if period is not None else h * x.size
    return build_field(v, L, interpolation_order=interpolation_order)


def field_from_json(path) -> PeriodicField:
    with Path(path).open() as fh:
        return build_field(json.load(fh))


@dataclass(frozen=True)
class Antiderivative:
    """Q(x) = int_0^x q, split into its mean-zero part and its mean."""

    centered: PeriodicField
    mean: float

    def __call__(self, x):
        return self.centered(x) + self.mean

    @property
    def period(self):
        return self.centered.period


def antiderivative(q: PeriodicField, n: int | None = None) -> Antiderivative:
    """Spectral antiderivative of a mean-zero periodic field, with Q(0) = 0."""
    L = q.period
    if n is None:
        n = max(q.samples.size, 1024)
    vals = q.sample(n)
    scale = max(q.sup_norm, 1e-300)
    if abs(vals.mean()) > 1e-12 * scale and q.preset != "zero":
        raise NotMeanZero(f"field mean {vals.mean():.3e} is not zero")
    if q.is_zero:
        zero = build_field("zero", L)
        return Antiderivative(zero, 0.0)
    if q.preset in ("sine", "cosine"):
        # exact: sin -> (1 - cos)/w, cos -> sin/w
        cos_terms, sin_terms = [], []
        mean = 0.0
        for k, w in q.harmonics:
            wk = 2.0 * np.pi * k / L
            if q.preset == "sine":
                cos_terms.append((k, -q.amplitude * w / wk))
                mean += q.amplitude * w / wk
            else:
                sin_terms.append((k, q.amplitude * w / wk))
        if cos_terms:
            centered = build_field({"preset": "cosine", "amplitude": 1.0, "period": L,
                                    "harmonics": [list(t) for t in cos_terms]})
        else:
            centered = build_field({"preset": "sine", "amplitude": 1.0, "period": L,
                                    "harmonics": [list(t) for t in sin_terms]})
        return Antiderivative(centered, mean)
    qhat = np.fft.rfft(vals - vals.mean())
    k = np.fft.rfftfreq(n, d=L / n) * 2.0 * np.pi
    Qhat = np.zeros_like(qhat)
    Qhat[1:] = qhat[1:] / (1j * k[1:])
    Qc = np.fft.irfft(Qhat, n)               # mean-zero part
    mean = -Qc[0]                            # enforce Q(0) = 0
    return Antiderivative(build_field(Qc, L, interpolation_order=q.interpolation_order), float(mean))


# ---------------------------------------------------------------------------
# Reaction terms
# ---------------------------------------------------------------------------

def _richardson_slope(f, x0: float, direction: int, h: float = 1e-6) -> float:
    """One-sided derivative with two-level Richardson extrapolation."""
    d1 = direction * (f(x0 + direction * h) - f(x0)) / h
    d2 = direction * (f(x0 + direction * h / 2) - f(x0)) / (h / 2)
    return 2.0 * d2 - d1


@dataclass(frozen=True, eq=False)
class KPPNonlinearity:
    """A concave KPP reaction on [0, 1], zero outside.

    ``kind`` is ``"logistic"`` (u(1-u)), ``"power"`` (u(1-u^p), p >= 1) or
    ``"tabulated"`` (values on a uniform grid over [0, 1], linearly
    interpolated).  ``scale`` multiplies the whole reaction (m f).
    """

    kind: str = "logistic"
    p: float = 1.0
    table: np.ndarray | None = None
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in ("logistic", "power", "tabulated"):
            raise InvalidNonlinearity(f"unknown reaction kind {self.kind!r}")
        if not (self.scale > 0 and np.isfinite(self.scale)):
            raise InvalidNonlinearity("scale must be positive")
        if self.kind == "power" and not self.p >= 1:
            raise InvalidNonlinearity("power reaction needs p >= 1")
        if self.kind == "tabulated":
            t = np.asarray(self.table, dtype=float)
            if t.ndim != 1 or t.size < 3 or not np.all(np.isfinite(t)):
                raise InvalidNonlinearity("table must be a finite 1-D array (>= 3 values)")
            if abs(t[0]) > 1e-14 or abs(t[-1]) > 1e-14:
                raise InvalidNonlinearity("tabulated f must vanish at 0 and 1")
            t = t.copy()
            t.setflags(write=False)
            object.__setattr__(self, "table", t)

    @classmethod
    def logistic(cls) -> "KPPNonlinearity":
        return cls("logistic")

    @classmethod
    def power(cls, p: float) -> "KPPNonlinearity":
        return cls("power", p=float(p))

    @classmethod
    def tabulated(cls, values: Sequence[float], check: bool = True) -> "KPPNonlinearity":
        f = cls("tabulated", table=np.asarray(values, dtype=float))
        if check:
            report = validate_kpp(f, max(256, 4 * (len(values) - 1)))
            if not report.ok:
                raise InvalidNonlinearity(f"tabulated f fails KPP checks: {report}")
        return f

    def scaled(self, m: float) -> "KPPNonlinearity":
        return KPPNonlinearity(self.kind, self.p, self.table, self.scale * m)

    def _raw(self, u):
        if self.kind == "logistic":
            return u * (1.0 - u)
        if self.kind == "power":
            return u * (1.0 - u ** self.p)
        s = np.linspace(0.0, 1.0, self.table.size)
        return np.interp(u, s, self.table)

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        inside = (u > 0.0) & (u < 1.0)
        uc = np.clip(u, 0.0, 1.0)
        return np.where(inside, self.scale * self._raw(uc), 0.0)

    def on_unit(self, u):
        """f(u) for values already known to lie in [0, 1] (no masking)."""
        return self.scale * self._raw(u)

    def derivative(self, u):
        """f'(u) on [0, 1] (closed form where available, else table slopes)."""
        u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
        if self.kind == "logistic":
            return self.scale * (1.0 - 2.0 * u)
        if self.kind == "power":
            return self.scale * (1.0 - (self.p + 1.0) * u ** self.p)
        n = self.table.size - 1
        slopes = np.diff(self.table) * n
        idx = np.clip((u * n).astype(int), 0, n - 1)
        return self.scale * slopes[idx]

    @property
    def fprime0(self) -> float:
        if self.kind in ("logistic", "power"):
            return self.scale * 1.0
        return self.scale * _richardson_slope(self._raw, 0.0, +1)

    @property
    def fprime1(self) -> float:
        if self.kind == "logistic":
            return -self.scale
        if self.kind == "power":
            return -self.scale * self.p
        return self.scale * _richardson_slope(self._raw, 1.0, -1)

    @property
    def lipschitz_bound(self) -> float:
        if self.kind == "logistic":
            return self.scale
        if self.kind == "power":
            return self.scale * max(1.0, self.p)
        return self.scale * float(np.max(np.abs(np.diff(self.table)))) * (self.table.size - 1)

    def describe(self) -> dict:
        d = {"kind": self.kind, "scale": self.scale}
        if self.kind == "power":
            d["p"] = self.p
        if self.kind == "tabulated":
            d["table"] = self.table.tolist()
        return d


def build_reaction(spec) -> KPPNonlinearity:
    """Reaction from a name or dict: ``"logistic"``, ``{"kind": "power", "p": 2}``."""
    if isinstance(spec, KPPNonlinearity):
        return spec
    if isinstance(spec, str):
        spec = {"kind": spec}
    spec = dict(spec)
    kind = spec.pop("kind", spec.pop("preset", "logistic"))
    scale = float(spec.pop("scale", 1.0))
    if kind == "logistic":
        f = KPPNonlinearity.logistic()
    elif kind in ("power", "concave-power"):
        f = KPPNonlinearity.power(spec.pop("p", 1.0))
    elif kind == "tabulated":
        f = KPPNonlinearity.tabulated(spec.pop("table"))
    else:
        raise InvalidNonlinearity(f"unknown reaction kind {kind!r}")
    return f.scaled(scale) if scale != 1.0 else f


@dataclass(frozen=True)
class KPPReport:
    concave: bool
    kpp: bool
    subadditive: bool
    positive: bool
    max_violation: float
    location: tuple | None = None

    @property
    def ok(self) -> bool:
        return self.concave and self.kpp and self.subadditive and self.positive


def validate_kpp(f: KPPNonlinearity, grid_n: int = 256) -> KPPReport:
    """Concavity, KPP bound, subadditivity and positivity on a uniform grid."""
    if grid_n < 16:
        raise ValueError("grid_n must be >= 16")
    s = np.linspace(0.0, 1.0, grid_n + 1)
    fs = f._raw(s) * f.scale
    lip = f.lipschitz_bound
    tol = 1e-10 * lip
    worst = {}

    d2 = fs[:-2] - 2.0 * fs[1:-1] + fs[2:]
    i = int(np.argmax(d2))
    worst["concave"] = (float(d2[i]), (float(s[i + 1]),))

    gap = fs - f.fprime0 * s
    i = int(np.argmax(gap))
    worst["kpp"] = (float(gap[i]), (float(s[i]),))

    # f(s + t) - f(s) - f(t) over the triangle s + t <= 1 (index sums)
    I, J = np.meshgrid(np.arange(grid_n + 1), np.arange(grid_n + 1), indexing="ij")
    mask = I + J <= grid_n
    excess = np.where(mask, fs[np.minimum(I + J, grid_n)] - fs[I] - fs[J], -np.inf)
    ij = np.unravel_index(int(np.argmax(excess)), excess.shape)
    worst["subadditive"] = (float(excess[ij]), (float(s[ij[0]]), float(s[ij[1]])))

    interior = fs[1:-1]
    i = int(np.argmin(interior))
    worst["positive"] = (float(-interior[i]), (float(s[i + 1]),))

    concave = worst["concave"][0] <= tol
    kpp = worst["kpp"][0] <= tol
    sub = worst["subadditive"][0] <= tol
    positive = worst["positive"][0] < 0.0
    checks = {"concave": concave, "kpp": kpp, "subadditive": sub}
    violations = [max(0.0, worst[k][0]) for k in ("concave", "kpp", "subadditive")]
    if not positive:
        violations.append(max(0.0, worst["positive"][0]))
    max_violation = max(violations)
    location = None
    for name, ok in list(checks.items()) + [("positive", positive)]:
        if not ok:
            location = (name,) + worst[name][1]
            break
    return KPPReport(concave, kpp, sub, positive, max_violation, location)


# ---------------------------------------------------------------------------
# Diffusion matrices and cones
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DiffusionMatrix:
    m11: float
    m12: float
    m22: float

    def __post_init__(self):
        if not (self.m11 > 0 and self.m22 > 0 and self.m11 * self.m22 - self.m12 ** 2 > 0):
            raise InvalidMatrix(f"matrix not positive definite: {self}")

    @classmethod
    def identity(cls) -> "DiffusionMatrix":
        return cls(1.0, 0.0, 1.0)

    @classmethod
    def cone_A(cls, alpha: float) -> "DiffusionMatrix":
        """[[1, -cos a], [-cos a, 1]]: left branch of a cone."""
        return cls(1.0, -math.cos(alpha), 1.0)

    @classmethod
    def cone_B(cls, beta: float) -> "DiffusionMatrix":
        """[[1, cos b], [cos b, 1]]: right branch of a cone."""
        return cls(1.0, math.cos(beta), 1.0)

    def scale(self, rho: float) -> "DiffusionMatrix":
        return DiffusionMatrix(rho * self.m11, rho * self.m12, rho * self.m22)

    @property
    def det(self) -> float:
        return self.m11 * self.m22 - self.m12 ** 2

    def as_array(self) -> np.ndarray:
        return np.array([[self.m11, self.m12], [self.m12, self.m22]])


@dataclass(frozen=True)
class ConeSpec:
    """Opening angles (radians) of the left and right front branches."""

    alpha: float
    beta: float

    def __post_init__(self):
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not (np.isfinite(v) and 0.0 < v < math.pi):
                raise InvalidCone(f"{name} must lie in (0, pi) radians, got {v}")

    @property
    def existence_regime(self) -> bool:
        return self.alpha + self.beta <= math.pi + 1e-15

    @property
    def min_sin(self) -> float:
        return min(math.sin(self.alpha), math.sin(self.beta))

    def boundary(self, x, level: float = 0.0):
        """Upper edge of the lower cone: y = x cot(alpha) + l (x <= 0), -x cot(beta) + l (x >= 0)."""
        x = np.asarray(x, dtype=float)
        return np.where(x <= 0.0, x / math.tan(self.alpha), -x / math.tan(self.beta)) + level

    def in_lower_cone(self, x, y, level: float = 0.0):
        return np.asarray(y) <= self.boundary(x, level)
