"""Explicit finite differences for kinetic Fokker-Planck equations.

Solves

    d_t u + v . grad_x u = div_v(A grad_v u) + b . grad_v u + f

on a tensor grid over ``]v-, v+[^n x ]x-, x+[^n x ]t0, t1[`` for n = 1, 2:

* x-transport is first-order upwind, the side chosen by the sign of v_j;
* diagonal diffusion is conservative, with face coefficients taken as
  the mean of the two adjacent nodes;
* mixed diffusion terms (n = 2) and the drift ``b . grad_v`` are central;
* time stepping is forward Euler under the bound

      h_t <= 0.9 / (2 Lambda n / h_v^2 + max|v| n / h_x + max|b| n / h_v).

Arrays are ordered ``(v_1..v_n, x_1..x_n)``; stored solutions prepend a
time axis.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid
from scipy.interpolate import RegularGridInterpolator

from .errors import (
    ConfigurationError,
    DimensionMismatchError,
    DivergenceError,
    DomainError,
    MaximumPrincipleError,
    StabilityError,
    ValidationError,
)
from .group import BoxSpec, GroupPoint, compose_array, dilate_array, reference_corners

__all__ = [
    "ConstantField",
    "PiecewiseConstantField",
    "OperatorSpec",
    "GridSpec",
    "SolutionField",
    "BumpFunction",
    "stability_bound",
    "solve",
    "field_from_function",
    "weak_residual",
    "sup_inf_on_box",
    "evaluate",
]

CFL_SAFETY = 0.9


# -- coefficient fields ----------------------------------------------------

class ConstantField:
    """A coefficient that does not depend on ``(v, x, t)``."""

    time_dependent = False

    def __init__(self, value):
        self.value = np.asarray(value, dtype=float)

    def __call__(self, v, x, t):
        lead = np.broadcast_shapes(np.shape(v)[:-1], np.shape(x)[:-1], np.shape(t))
        return np.broadcast_to(self.value, lead + self.value.shape).copy()

    def to_json(self):
        return {"type": "constant", "value": self.value.tolist()}


class PiecewiseConstantField:
    """Cellwise constant field on an independent tensor grid.

    Parameters
    ----------
    lo, hi : array_like, shape (2n+1,)
        Extent of the coefficient grid in ``(v, x, t)``; points outside are
        clamped to the nearest cell.
    values : ndarray, shape cells + value_shape
        ``cells`` has length ``2n+1``; a single time cell means the field is
        constant in time.
    """

    def __init__(self, lo, hi, values, n: int):
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)
        self.n = n
        self.values = np.asarray(values, dtype=float)
        d = 2 * n + 1
        if self.lo.shape != (d,) or self.hi.shape != (d,) or self.values.ndim < d:
            raise DimensionMismatchError("coefficient grid does not match dimension")
        if np.any(self.hi <= self.lo):
            raise ValidationError("empty coefficient grid extent")
        self.cells = self.values.shape[:d]
        self.time_dependent = self.cells[-1] > 1

    def __call__(self, v, x, t):
        v = np.asarray(v, dtype=float)
        x = np.asarray(x, dtype=float)
        t = np.asarray(t, dtype=float)
        lead = np.broadcast_shapes(v.shape[:-1], x.shape[:-1], t.shape)
        coords = [np.broadcast_to(v[..., j], lead) for j in range(self.n)]
        coords += [np.broadcast_to(x[..., j], lead) for j in range(self.n)]
        coords.append(np.broadcast_to(t, lead))
        idx = []
        for a, c in enumerate(coords):
            m = self.cells[a]
            k = np.floor((c - self.lo[a]) / (self.hi[a] - self.lo[a]) * m).astype(int)
            idx.append(np.clip(k, 0, m - 1))
        return self.values[tuple(idx)]

    @classmethod
    def checkerboard(cls, n, lo, hi, cells, low, high):
        """Scalar multiples of the identity alternating between ``low`` and
        ``high`` on a ``cells``-per-axis board in ``(v, x)``."""
        d = 2 * n + 1
        shape = (cells,) * (2 * n) + (1,)
        parity = np.indices(shape).sum(axis=0) % 2
        scal = np.where(parity == 0, low, high)
        return cls(_extent(lo, d), _extent(hi, d), scal[..., None, None] * np.eye(n), n)

    @classmethod
    def random_matrix(cls, n, lo, hi, cells, lam, Lam, seed, time_cells: int = 1):
        """Random symmetric matrices with eigenvalues log-uniform in ``[lam, Lam]``."""
        rng = np.random.default_rng(seed)
        shape = (cells,) * (2 * n) + (time_cells,)
        eig = np.exp(rng.uniform(np.log(lam), np.log(Lam), shape + (n,)))
        if n == 1:
            mats = eig[..., None]
        else:
            th = rng.uniform(0.0, np.pi, shape)
            c, s = np.cos(th), np.sin(th)
            Q = np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)
            mats = np.einsum("...ij,...j,...kj->...ik", Q, eig, Q)
        return cls(_extent(lo, 2 * n + 1), _extent(hi, 2 * n + 1), mats, n)

    @classmethod
    def random_vector(cls, n, lo, hi, cells, bound, seed, time_cells: int = 1):
        rng = np.random.default_rng(seed)
        shape = (cells,) * (2 * n) + (time_cells,)
        return cls(_extent(lo, 2 * n + 1), _extent(hi, 2 * n + 1),
                   rng.uniform(-bound, bound, shape + (n,)), n)

    def to_json(self):
        return {"type": "piecewise_constant", "lo": self.lo.tolist(), "hi": self.hi.tolist(),
                "cells": list(self.cells)}


def _extent(a, d):
    a = np.asarray(a, dtype=float)
    return np.broadcast_to(a, (d,)).copy() if a.ndim == 0 else a


def _as_field(value, shape):
    if value is None:
        return ConstantField(np.zeros(shape))
    if callable(value):
        return value
    arr = np.asarray(value, dtype=float)
    if arr.shape == () and shape:
        arr = arr * (np.eye(shape[0]) if len(shape) == 2 else np.ones(shape))
    if arr.shape != shape:
        raise DimensionMismatchError(f"expected coefficient of shape {shape}, got {arr.shape}")
    return ConstantField(arr)


@dataclass
class OperatorSpec:
    """Coefficients ``A``, ``b``, ``f`` with ellipticity bounds ``lam <= Lam``.

    Each coefficient is a callable ``field(v, x, t)`` taking ``v, x`` of
    shape ``(..., n)`` and ``t`` of shape ``(...)``; constants are wrapped
    automatically.
    """

    n: int
    A: object
    b: object = None
    f: object = None
    lam: float = 1.0
    Lam: float = 1.0
    label: str = ""

    def __post_init__(self):
        if self.n not in (1, 2):
            raise ConfigurationError(f"solver supports n = 1 or 2, got {self.n}")
        if not (0 < self.lam <= self.Lam < math.inf):
            raise ConfigurationError(f"need 0 < lam <= Lam, got {self.lam}, {self.Lam}")
        self.A = _as_field(self.A, (self.n, self.n))
        self.b = _as_field(self.b, (self.n,))
        self.f = _as_field(self.f, ())

    @classmethod
    def constant(cls, n=1, A=0.5, b=0.0, f=0.0, lam=None, Lam=None, label="constant"):
        A = np.asarray(A, dtype=float)
        A = A * np.eye(n) if A.ndim == 0 else A
        w = np.linalg.eigvalsh(A)
        b = np.broadcast_to(np.asarray(b, dtype=float), (n,)).copy()
        lam = w.min() if lam is None else lam
        Lam = w.max() if Lam is None else Lam
        tol = 1e-12 * max(1.0, Lam)
        if w.min() < lam - tol or w.max() > Lam + tol:
            raise ValidationError(f"eigenvalues of A {w.tolist()} not within [{lam}, {Lam}]")
        return cls(n, A, b, float(f), lam, Lam, label)

    @property
    def time_dependent(self) -> bool:
        return any(getattr(c, "time_dependent", True) for c in (self.A, self.b, self.f))

    def validate(self, lo, hi, samples: int = 1000, directions: int = 10, seed: int = 0,
                 rtol: float = 1e-10):
        """Check ellipticity and boundedness on random points of ``[lo, hi]``.

        Returns ``(max|b|, max|f|)`` over the sample.
        """
        rng = np.random.default_rng(seed)
        d = 2 * self.n + 1
        lo, hi = _extent(lo, d), _extent(hi, d)
        z = rng.uniform(lo, hi, (samples, d))
        v, x, t = z[:, :self.n], z[:, self.n:2 * self.n], z[:, -1]
        A = np.asarray(self.A(v, x, t), dtype=float)
        if not np.allclose(A, np.swapaxes(A, -1, -2), rtol=0, atol=1e-12):
            raise ValidationError("A is not symmetric")
        xi = rng.standard_normal((directions, self.n))
        xi /= np.linalg.norm(xi, axis=1, keepdims=True)
        q = np.einsum("di,sij,dj->sd", xi, A, xi)
        tol = rtol * self.Lam
        if q.min() < self.lam - tol or q.max() > self.Lam + tol:
            raise ValidationError(
                f"ellipticity violated: quadratic form in [{q.min():.4g}, {q.max():.4g}]"
                f" not within [{self.lam}, {self.Lam}]")
        b = np.asarray(self.b(v, x, t), dtype=float)
        f = np.asarray(self.f(v, x, t), dtype=float)
        if not (np.all(np.isfinite(b)) and np.all(np.isfinite(f))):
            raise ValidationError("b or f is not finite")
        return float(np.abs(b).max(initial=0.0)), float(np.abs(f).max(initial=0.0))

    def to_json(self) -> dict:
        def desc(c):
            return c.to_json() if hasattr(c, "to_json") else {"type": "callable"}
        return {"n": self.n, "lambda": self.lam, "Lambda": self.Lam, "label": self.label,
                "A": desc(self.A), "b": desc(self.b), "f": desc(self.f)}


# -- grids and fields ------------------------------------------------------

@dataclass(frozen=True)
class GridSpec:
    """Uniform tensor grid; ``Nv``, ``Nx`` count nodes per axis, boundaries included."""

    n: int
    v_range: tuple
    x_range: tuple
    t_range: tuple
    Nv: int
    Nx: int

    def __post_init__(self):
        if self.n not in (1, 2):
            raise ConfigurationError(f"n must be 1 or 2, got {self.n}")
        for name in ("v_range", "x_range", "t_range"):
            lo, hi = getattr(self, name)
            if not hi > lo:
                raise ConfigurationError(f"{name} must be increasing, got {(lo, hi)}")
            object.__setattr__(self, name, (float(lo), float(hi)))
        if self.Nv < 3 or self.Nx < 3:
            raise ConfigurationError("need at least 3 nodes per axis")

    @property
    def v(self):
        return np.linspace(*self.v_range, self.Nv)

    @property
    def x(self):
        return np.linspace(*self.x_range, self.Nx)

    @property
    def hv(self):
        return (self.v_range[1] - self.v_range[0]) / (self.Nv - 1)

    @property
    def hx(self):
        return (self.x_range[1] - self.x_range[0]) / (self.Nx - 1)

    @property
    def shape(self):
        return (self.Nv,) * self.n + (self.Nx,) * self.n

    def lo(self):
        n = self.n
        return np.array([self.v_range[0]] * n + [self.x_range[0]] * n + [self.t_range[0]])

    def hi(self):
        n = self.n
        return np.array([self.v_range[1]] * n + [self.x_range[1]] * n + [self.t_range[1]])

    def mesh(self):
        """Node coordinates as arrays ``V, X`` of shape ``shape + (n,)``."""
        n = self.n
        axes = [self.v] * n + [self.x] * n
        grids = np.meshgrid(*axes, indexing="ij")
        V = np.stack(grids[:n], axis=-1)
        X = np.stack(grids[n:], axis=-1)
        return V, X

    def to_json(self) -> dict:
        return {"n": self.n, "v_range": list(self.v_range), "x_range": list(self.x_range),
                "t_range": list(self.t_range), "Nv": self.Nv, "Nx": self.Nx}

    @classmethod
    def from_json(cls, d):
        return cls(d["n"], tuple(d["v_range"]), tuple(d["x_range"]), tuple(d["t_range"]),
                   d["Nv"], d["Nx"])


@dataclass(eq=False)
class SolutionField:
    """Grid function at stored times.

    ``values`` has shape ``(len(times),) + grid.shape``.  ``meta`` records
    scheme steps and run diagnostics.
    """

    grid: GridSpec
    times: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict)
    _interp: object = field(default=None, repr=False)
    _range: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.times.size,) + self.grid.shape:
            raise DimensionMismatchError(
                f"values {self.values.shape} do not match grid {self.grid.shape}"
                f" with {self.times.size} times")

    @property
    def n(self):
        return self.grid.n

    def lo(self):
        lo = self.grid.lo()
        lo[-1] = self.times[0]
        return lo

    def hi(self):
        hi = self.grid.hi()
        hi[-1] = self.times[-1]
        return hi

    def interpolator(self):
        if self._interp is None:
            n = self.n
            axes = [self.times] + [self.grid.v] * n + [self.grid.x] * n
            if self.times.size == 1:
                raise ValidationError("interpolation needs at least two stored times")
            self._interp = RegularGridInterpolator(axes, self.values, method="linear",
                                                   bounds_error=False, fill_value=None)
        return self._interp

    def __call__(self, pts):
        """Multilinear interpolation at stacked points ``[v, x, t]``."""
        pts = np.asarray(pts, dtype=float)
        n = self.n
        q = np.concatenate([pts[..., 2 * n:], pts[..., :2 * n]], axis=-1)
        if self._range is None:
            self._range = (float(self.values.min()), float(self.values.max()))
        # a convex combination of node values; clip away rounding excursions
        return np.clip(self.interpolator()(q), *self._range)

    def contains(self, pts, slack: float = 1e-12):
        pts = np.asarray(pts, dtype=float)
        lo, hi = self.lo(), self.hi()
        span = hi - lo
        return np.all((pts >= lo - slack * span) & (pts <= hi + slack * span), axis=-1)

    def snapshot(self, t: float) -> np.ndarray:
        k = int(np.argmin(np.abs(self.times - t)))
        return self.values[k]

    def header(self) -> dict:
        return {"grid": self.grid.to_json(), "times": [float(t) for t in self.times],
                "dims": list(self.values.shape), "dtype": "float64", "order": "C",
                "axes": ["t"] + [f"v{j}" for j in range(self.n)] + [f"x{j}" for j in range(self.n)],
                "meta": self.meta}

    def to_f64(self, path):
        """JSON header line followed by row-major little-endian float64 data."""
        head = json.dumps(self.header(), sort_keys=True, default=_json_default).encode()
        with open(path, "wb") as fh:
            fh.write(head + b"\n")
            fh.write(np.ascontiguousarray(self.values, dtype="<f8").tobytes())

    @classmethod
    def from_f64(cls, path) -> "SolutionField":
        with open(path, "rb") as fh:
            head = json.loads(fh.readline())
            data = np.frombuffer(fh.read(), dtype="<f8")
        return cls(GridSpec.from_json(head["grid"]), np.asarray(head["times"]),
                   data.reshape(head["dims"]).copy(), head.get("meta", {}))

    def to_csv(self, path, every: int = 1):
        if self.n != 1:
            raise ValidationError("CSV export is only available for n = 1")
        v, x = self.grid.v, self.grid.x
        with open(path, "w") as fh:
            fh.write("t,v,x,u\n")
            for k in range(0, self.times.size, every):
                t = self.times[k]
                for i, vi in enumerate(v):
                    for j, xj in enumerate(x):
                        fh.write(f"{t:.17g},{vi:.17g},{xj:.17g},{self.values[k, i, j]:.17g}\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def field_from_function(grid: GridSpec, func, times=None, nt: int = 33) -> SolutionField:
    """Sample ``func(v, x, t)`` (``v, x`` of shape ``(..., n)``) on the grid."""
    if times is None:
        times = np.linspace(*grid.t_range, nt)
    V, X = grid.mesh()
    vals = np.stack([np.broadcast_to(func(V, X, np.full(grid.shape, t)), grid.shape)
                     for t in times])
    return SolutionField(grid, np.asarray(times), vals, {"source": "function"})


# -- solver ----------------------------------------------------------------

def stability_bound(grid: GridSpec, Lam: float, max_b: float = 0.0) -> float:
    n = grid.n
    vmax = max(abs(grid.v_range[0]), abs(grid.v_range[1]))
    denom = 2 * Lam * n / grid.hv ** 2 + vmax * n / grid.hx + max_b * n / grid.hv
    return CFL_SAFETY / denom


def _axis_shape(ndim, axis, size):
    s = [1] * ndim
    s[axis] = size
    return s


def _rhs(u, coef, grid, zero_flux):
    n = grid.n
    hv, hx = grid.hv, grid.hx
    ndim = 2 * n
    du = np.zeros_like(u)
    A, b, f = coef
    # transport
    for j in range(n):
        ax = n + j
        vel = grid.v.reshape(_axis_shape(ndim, j, grid.Nv))
        vp, vm = np.maximum(vel, 0.0), np.minimum(vel, 0.0)
        lo = [slice(None)] * ndim
        hi = [slice(None)] * ndim
        lo[ax] = slice(None, -1)
        hi[ax] = slice(1, None)
        F = vp * u[tuple(lo)] + vm * u[tuple(hi)]
        du -= np.diff(_pad0(F, ax), axis=ax) / hx
    # diagonal diffusion, conservative
    for i in range(n):
        a = A[..., i, i]
        lo = [slice(None)] * ndim
        hi = [slice(None)] * ndim
        lo[i] = slice(None, -1)
        hi[i] = slice(1, None)
        af = 0.5 * (a[tuple(lo)] + a[tuple(hi)])
        G = af * (u[tuple(hi)] - u[tuple(lo)]) / hv
        du += np.diff(_pad0(G, i), axis=i) / hv
    # mixed diffusion, central
    for i in range(n):
        for j in range(n):
            if i != j:
                P = A[..., i, j] * np.gradient(u, hv, axis=j)
                du += np.gradient(P, hv, axis=i)
    # drift
    for i in range(n):
        if np.any(b[..., i] != 0):
            du += b[..., i] * np.gradient(u, hv, axis=i)
    du += f
    return du


def _pad0(F, ax):
    pad = [(0, 0)] * F.ndim
    pad[ax] = (1, 1)
    return np.pad(F, pad)


def _boundary_mask(shape):
    m = np.zeros(shape, dtype=bool)
    for ax in range(len(shape)):
        idx = [slice(None)] * len(shape)
        idx[ax] = 0
        m[tuple(idx)] = True
        idx[ax] = -1
        m[tuple(idx)] = True
    return m


def solve(op: OperatorSpec, grid: GridSpec, initial, boundary="initial", ht=None,
          max_snapshots: int = 200, check_max_principle: bool | None = None) -> SolutionField:
    """March the equation from ``t_range[0]`` to ``t_range[1]``.

    Parameters
    ----------
    op : OperatorSpec
    grid : GridSpec
    initial : ndarray or callable
        Values on the first time slice, or ``initial(v, x)``.
    boundary : {"initial", "zero_flux"}, float or callable
        Lateral treatment: Dirichlet data held at the initial values, a
        constant, ``g(v, x, t)``, or no-flux faces.
    ht : float, optional
        Time step; must satisfy :func:`stability_bound`.  Defaults to the
        largest step that divides the interval evenly.
    max_snapshots : int
        Upper bound on stored time levels (always uniform, both ends kept).
    check_max_principle : bool, optional
        Raise :class:`MaximumPrincipleError` if the discrete bounds fail.
        Defaults to ``True`` when ``f`` vanishes identically.

    Returns
    -------
    SolutionField
    """
    if op.n != grid.n:
        raise DimensionMismatchError(f"operator has n={op.n}, grid has n={grid.n}")
    t0, t1 = grid.t_range
    V, X = grid.mesh()

    def coefs(t):
        Tt = np.full(grid.shape, t)
        A = np.asarray(op.A(V, X, Tt), dtype=float)
        b = np.asarray(op.b(V, X, Tt), dtype=float)
        f = np.broadcast_to(np.asarray(op.f(V, X, Tt), dtype=float), grid.shape)
        return A, b, f

    coef = coefs(t0)
    max_b = max(float(np.abs(coef[1]).max(initial=0.0)), op.validate(grid.lo(), grid.hi())[0])
    bound = stability_bound(grid, op.Lam, max_b)
    span = t1 - t0
    if ht is None:
        steps = math.ceil(span / bound * (1 + 1e-12))
    else:
        if ht > bound:
            raise StabilityError(
                f"time step {ht:.6g} exceeds the stability bound {bound:.6g}", max_dt=bound)
        steps = max(1, round(span / ht))
        if abs(steps * ht - span) > 1e-9 * span:
            steps = math.ceil(span / ht)
    stride = max(1, math.ceil(steps / max(1, max_snapshots - 1)))
    steps = math.ceil(steps / stride) * stride
    ht = span / steps
    if ht > bound * (1 + 1e-12):
        raise StabilityError(f"time step {ht:.6g} exceeds {bound:.6g}", max_dt=bound)

    u = np.asarray(initial(V, X) if callable(initial) else initial, dtype=float)
    u = np.broadcast_to(u, grid.shape).copy()
    if not np.all(np.isfinite(u)):
        raise ValidationError("initial data must be finite")
    bmask = _boundary_mask(grid.shape)
    zero_flux = isinstance(boundary, str) and boundary == "zero_flux"
    if zero_flux:
        bvals = None
    elif isinstance(boundary, str) and boundary == "initial":
        bvals = lambda t: u0_b  # noqa: E731
    elif callable(boundary):
        bvals = lambda t: np.asarray(boundary(V, X, np.full(grid.shape, t)))[bmask]  # noqa: E731
    elif np.isscalar(boundary):
        bvals = lambda t: float(boundary)  # noqa: E731
    else:
        raise ConfigurationError(f"unknown boundary treatment {boundary!r}")
    u0_b = u[bmask].copy()
    if bvals is not None:
        u[bmask] = bvals(t0)

    f_zero = not op.time_dependent and not np.any(coef[2] != 0)
    if check_max_principle is None:
        check_max_principle = f_zero
    data_lo, data_hi = float(u.min()), float(u.max())
    if bvals is not None and not (isinstance(boundary, str)):
        probe = np.asarray([np.min(bvals(t)) for t in np.linspace(t0, t1, 9)])
        probe_hi = np.asarray([np.max(bvals(t)) for t in np.linspace(t0, t1, 9)])
        data_lo, data_hi = min(data_lo, probe.min()), max(data_hi, probe_hi.max())
    fmax = float(np.maximum(coef[2], 0).max(initial=0.0))
    fmin = float(np.minimum(coef[2], 0).min(initial=0.0))
    nonneg = data_lo >= 0 and fmin >= 0
    scale = max(1.0, abs(data_lo), abs(data_hi))
    tol = 1e-12 * scale

    times = [t0]
    snaps = [u.copy()]
    worst_low, worst_high, min_seen = 0.0, 0.0, data_lo
    for k in range(1, steps + 1):
        t_prev = t0 + (k - 1) * ht
        if op.time_dependent and k > 1:
            coef = coefs(t_prev)
            fmax = max(fmax, float(np.maximum(coef[2], 0).max(initial=0.0)))
        u = u + ht * _rhs(u, coef, grid, zero_flux)
        t = t0 + k * ht
        if bvals is not None:
            u[bmask] = bvals(t)
        umin, umax = float(u.min()), float(u.max())
        if not (math.isfinite(umin) and math.isfinite(umax)):
            raise DivergenceError(f"non-finite values at step {k}", step=k)
        lo_b = data_lo + (t - t0) * fmin
        hi_b = data_hi + (t - t0) * fmax
        worst_low = max(worst_low, lo_b - umin)
        worst_high = max(worst_high, umax - hi_b)
        min_seen = min(min_seen, umin)
        if check_max_principle and (umin < lo_b - tol or umax > hi_b + tol):
            raise MaximumPrincipleError(
                f"discrete maximum principle violated at step {k}: "
                f"[{umin:.6g}, {umax:.6g}] vs [{lo_b:.6g}, {hi_b:.6g}]")
        if k % stride == 0:
            times.append(t)
            snaps.append(u.copy())
    meta = {
        "scheme": "explicit-euler/upwind-x/conservative-v",
        "hv": grid.hv, "hx": grid.hx, "ht": ht, "steps": steps, "stride": stride,
        "stability_bound": bound, "boundary": boundary if isinstance(boundary, str)
        else ("constant" if np.isscalar(boundary) else "function"),
        "max_principle_excess": max(worst_low, worst_high),
        "max_principle_ok": bool(worst_low <= tol and worst_high <= tol),
        "nonnegative_data": bool(nonneg),
        "nonnegative_ok": bool(min_seen >= -tol) if nonneg else None,
        "min_value": min_seen,
        "operator": op.to_json(),
    }
    return SolutionField(grid, np.asarray(times), np.asarray(snaps), meta)


# -- post-processing -------------------------------------------------------

def evaluate(u: SolutionField, z) -> float:
    """Multilinear interpolation at a point inside the stored domain."""
    pts = z.as_array() if isinstance(z, GroupPoint) else np.asarray(z, dtype=float)
    if not np.all(u.contains(pts)):
        raise DomainError(f"{z} lies outside the solution domain")
    out = u(pts)
    return float(np.reshape(out, -1)[0]) if pts.ndim == 1 else out


def _box_lattice(box: BoxSpec, m: int) -> np.ndarray:
    """Image of an ``m``-per-axis lattice of the closed reference box."""
    hv, hx, lo, hi = box.reference_bounds()
    n = box.n
    g = np.linspace(-1.0, 1.0, m)
    tg = np.array([lo]) if lo == hi else np.linspace(lo, hi, m)
    axes = [hv * g] * n + [hx * g] * n + [tg]
    ref = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 2 * n + 1)
    return compose_array(box.base.as_array(), dilate_array(box.radius, ref))


def _nodes_in_box(u: SolutionField, box: BoxSpec) -> np.ndarray:
    n = u.n
    hv_b, hx_b, t_lo, t_hi = box.bounds()
    b = box.base
    ti = np.nonzero((u.times >= t_lo) & (u.times <= t_hi))[0]
    v, x = u.grid.v, u.grid.x
    vi = [np.nonzero(np.abs(v - b.v[j]) <= hv_b)[0] for j in range(n)]
    if ti.size == 0 or any(a.size == 0 for a in vi):
        return np.zeros((0, 2 * n + 1))
    pts = []
    for k in ti:
        t = u.times[k]
        xi = [np.nonzero(np.abs(x - b.x[j] - (t - b.t) * b.v[j]) <= hx_b)[0] for j in range(n)]
        if any(a.size == 0 for a in xi):
            continue
        axes = [v[a] for a in vi] + [x[a] for a in xi]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 2 * n)
        pts.append(np.column_stack([mesh, np.full(mesh.shape[0], t)]))
    return np.concatenate(pts) if pts else np.zeros((0, 2 * n + 1))


def box_samples(u: SolutionField, box: BoxSpec, lattice: int | None = None,
                nodes: bool = True) -> np.ndarray:
    """Sample points of ``box``: grid nodes inside it, the images of its
    vertices and of a regular reference lattice, clipped to the domain."""
    if lattice is None:
        lattice = 9 if u.n == 1 else 5
    parts = [_box_lattice(box, lattice)]
    q = BoxSpec(box.base, box.radius, box.kind, box.constants)
    parts.append(compose_array(q.base.as_array(), dilate_array(q.radius, reference_corners(q))))
    if nodes:
        parts.append(_nodes_in_box(u, box))
    pts = np.concatenate(parts)
    return pts[u.contains(pts)]


def sup_inf_on_box(u: SolutionField, box: BoxSpec, lattice: int | None = None,
                   nodes: bool = True, return_samples: bool = False):
    """Max and min of the interpolated solution over a dense sample of ``box``.

    Returns ``(sup, inf)``, or ``(sup, inf, count)`` with ``return_samples``.
    """
    if u.n != box.n:
        raise DimensionMismatchError("box and solution dimensions differ")
    pts = box_samples(u, box, lattice, nodes)
    if pts.shape[0] == 0:
        raise DomainError("box does not meet the solution domain")
    vals = u(pts)
    out = (float(vals.max()), float(vals.min()))
    return out + (int(pts.shape[0]),) if return_samples else out


def box_inside(u: SolutionField, box: BoxSpec) -> bool:
    q = BoxSpec(box.base, box.radius, box.kind, box.constants)
    corners = compose_array(q.base.as_array(), dilate_array(q.radius, reference_corners(q)))
    return bool(np.all(u.contains(corners)))


class BumpFunction:
    """Smooth bump ``prod exp(1 - 1/(1 - y_i^2))`` supported in an axis box.

    ``center`` and ``radii`` are length ``2n+1`` in ``(v, x, t)`` order.
    """

    def __init__(self, center, radii):
        self.center = np.asarray(center, dtype=float)
        self.radii = np.asarray(radii, dtype=float)
        if np.any(self.radii <= 0):
            raise ValidationError("bump radii must be positive")

    def support(self):
        return self.center - self.radii, self.center + self.radii

    def __call__(self, v, x, t):
        z = np.concatenate([np.asarray(v), np.asarray(x), np.asarray(t)[..., None]], axis=-1)
        y = (z - self.center) / self.radii
        inside = np.all(np.abs(y) < 1, axis=-1)
        y2 = np.where(np.abs(y) < 1, y ** 2, 0.0)
        val = np.prod(np.exp(1.0 - 1.0 / (1.0 - y2)), axis=-1)
        return np.where(inside, val, 0.0)

    def grad_v(self, v, x, t):
        z = np.concatenate([np.asarray(v), np.asarray(x), np.asarray(t)[..., None]], axis=-1)
        n = np.shape(v)[-1]
        y = (z - self.center) / self.radii
        ok = np.abs(y) < 1
        y2 = np.where(ok, y ** 2, 0.0)
        phi = self(v, x, t)
        # d/dy exp(1 - 1/(1-y^2)) / exp(...) = -2y/(1-y^2)^2
        dlog = np.where(ok, -2 * y / (1 - y2) ** 2, 0.0) / self.radii
        return phi[..., None] * dlog[..., :n]


def weak_residual(u: SolutionField, op: OperatorSpec, phi) -> float:
    """Weak-form defect of ``u`` against a test function.

    Evaluates ``int (d_t u + v.grad_x u - b.grad_v u) phi + <A grad_v u,
    grad_v phi> - f phi`` with centred differences on the stored levels and
    tensor trapezoidal quadrature.  ``phi`` must vanish on the whole
    boundary of the stored domain.  If it has no ``grad_v`` method, its
    velocity gradient is taken by centred differences.
    """
    grid = u.grid
    n = grid.n
    if u.times.size < 3:
        raise ValidationError("need at least three stored time levels")
    V, X = grid.mesh()
    shape = (u.times.size,) + grid.shape
    Vt = np.broadcast_to(V, shape + (n,))
    Xt = np.broadcast_to(X, shape + (n,))
    Tt = np.broadcast_to(u.times.reshape((-1,) + (1,) * (2 * n)), shape)
    ph = np.asarray(phi(Vt, Xt, Tt), dtype=float)
    edge = _boundary_mask(shape)
    if np.any(ph[edge] != 0.0):
        raise ValidationError("test function support touches the domain boundary")
    ht = u.times[1] - u.times[0]
    hv, hx = grid.hv, grid.hx
    U = u.values
    dt = np.gradient(U, ht, axis=0)
    gv = [np.gradient(U, hv, axis=1 + j) for j in range(n)]
    gx = [np.gradient(U, hx, axis=1 + n + j) for j in range(n)]
    A = np.asarray(op.A(Vt, Xt, Tt), dtype=float)
    b = np.broadcast_to(np.asarray(op.b(Vt, Xt, Tt), dtype=float), shape + (n,))
    f = np.broadcast_to(np.asarray(op.f(Vt, Xt, Tt), dtype=float), shape)
    if hasattr(phi, "grad_v"):
        gphi = np.asarray(phi.grad_v(Vt, Xt, Tt))
        gphi = [gphi[..., j] for j in range(n)]
    else:
        gphi = [np.gradient(ph, hv, axis=1 + j) for j in range(n)]
    integrand = dt * ph - f * ph
    for j in range(n):
        integrand = integrand + (Vt[..., j] * gx[j] - b[..., j] * gv[j]) * ph
        for i in range(n):
            integrand = integrand + A[..., i, j] * gv[j] * gphi[i]
    val = integrand
    axes_h = [ht] + [hv] * n + [hx] * n
    for h in reversed(axes_h):
        val = trapezoid(val, dx=h, axis=-1)
    return float(val)
