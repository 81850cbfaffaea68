"""Galilean group law, anisotropic dilations and invariant boxes.

Points of phase space-time are ``z = (v, x, t)`` with ``v, x`` in R^n.
The group law is

    (v0, x0, t0) o (v, x, t) = (v + v0, x0 + x + t v0, t0 + t)

and the dilations are ``d_r(v, x, t) = (r v, r^3 x, r^2 t)``.

Besides the :class:`GroupPoint` API, every operation has an array form
acting on stacked coordinates of shape ``(..., 2n + 1)`` laid out as
``[v_1..v_n, x_1..x_n, t]``; the rest of the package uses those for
vectorised work.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DimensionMismatchError, InvalidScaleError, ValidationError

__all__ = [
    "GroupPoint",
    "HarnackConstants",
    "BoxKind",
    "BoxSpec",
    "compose",
    "inverse",
    "dilate",
    "box_membership",
    "box_corners",
    "unit_box",
    "origin",
]


@dataclass(frozen=True, eq=False)
class GroupPoint:
    """A point ``(v, x, t)`` of R^n x R^n x R acting as a group element."""

    v: np.ndarray
    x: np.ndarray
    t: float

    def __post_init__(self):
        v = np.atleast_1d(np.asarray(self.v, dtype=float)).copy()
        x = np.atleast_1d(np.asarray(self.x, dtype=float)).copy()
        t = float(self.t)
        if v.ndim != 1 or x.ndim != 1:
            raise ValidationError("v and x must be vectors")
        if v.size < 1 or v.size != x.size:
            raise DimensionMismatchError(
                f"v and x must have the same length >= 1, got {v.size} and {x.size}")
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(x)) and np.isfinite(t)):
            raise ValidationError("group point coordinates must be finite")
        v.flags.writeable = False
        x.flags.writeable = False
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "t", t)

    @property
    def n(self) -> int:
        return self.v.size

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.v, self.x, [self.t]])

    @classmethod
    def from_array(cls, arr) -> "GroupPoint":
        arr = np.asarray(arr, dtype=float).ravel()
        if arr.size < 3 or arr.size % 2 == 0:
            raise DimensionMismatchError(
                f"a point needs 2n+1 coordinates, got {arr.size}")
        n = (arr.size - 1) // 2
        return cls(arr[:n], arr[n:2 * n], arr[2 * n])

    @classmethod
    def parse(cls, text: str) -> "GroupPoint":
        """Parse ``"v...,x...,t"`` (comma separated, n inferred)."""
        try:
            values = [float(tok) for tok in text.replace(" ", "").split(",") if tok]
        except ValueError as exc:
            raise ValidationError(f"cannot parse point {text!r}") from exc
        return cls.from_array(values)

    def to_json(self) -> list:
        return [float(c) for c in self.as_array()]

    def allclose(self, other: "GroupPoint", atol: float = 1e-12) -> bool:
        return self.n == other.n and bool(
            np.allclose(self.as_array(), other.as_array(), rtol=0.0, atol=atol))

    def __repr__(self):
        return f"GroupPoint(v={self.v.tolist()}, x={self.x.tolist()}, t={self.t})"


def origin(n: int = 1) -> GroupPoint:
    return GroupPoint(np.zeros(n), np.zeros(n), 0.0)


def _dim(arr) -> int:
    size = np.shape(arr)[-1]
    if size < 3 or size % 2 == 0:
        raise DimensionMismatchError(f"a point needs 2n+1 coordinates, got {size}")
    return (size - 1) // 2


# -- array forms -----------------------------------------------------------

def _stack(v, x, t):
    lead = np.broadcast_shapes(v.shape[:-1], x.shape[:-1], t.shape[:-1])
    n = v.shape[-1]
    return np.concatenate([np.broadcast_to(v, lead + (n,)), np.broadcast_to(x, lead + (n,)),
                           np.broadcast_to(t, lead + (1,))], axis=-1)


def compose_array(a, b):
    """Group law on stacked coordinates, broadcasting over leading axes."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n = _dim(a)
    if _dim(b) != n:
        raise DimensionMismatchError("cannot compose points of different dimension")
    v0, x0, t0 = a[..., :n], a[..., n:2 * n], a[..., 2 * n:]
    v, x, t = b[..., :n], b[..., n:2 * n], b[..., 2 * n:]
    return _stack(v + v0, x0 + x + t * v0, t0 + t)


def inverse_array(a):
    a = np.asarray(a, dtype=float)
    n = _dim(a)
    v, x, t = a[..., :n], a[..., n:2 * n], a[..., 2 * n:]
    return np.concatenate([-v, t * v - x, -t], axis=-1)


def dilate_array(r, a):
    a = np.asarray(a, dtype=float)
    n = _dim(a)
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise InvalidScaleError("dilation factor must be positive")
    r = r[..., None] if r.ndim else r
    out = np.empty(np.broadcast_shapes(a.shape, np.shape(r)))
    out[..., :n] = r * a[..., :n]
    out[..., n:2 * n] = r ** 3 * a[..., n:2 * n]
    out[..., 2 * n:] = r ** 2 * a[..., 2 * n:]
    return out


def relative_coordinates(base, r, z):
    """``d_{1/r}(base^{-1} o z)`` written out explicitly.

    This is the coordinate change that maps ``Q_r(base)`` onto ``Q``.
    """
    base = np.asarray(base, dtype=float)
    z = np.asarray(z, dtype=float)
    n = _dim(z)
    v0, x0, t0 = base[..., :n], base[..., n:2 * n], base[..., 2 * n:]
    dv = z[..., :n] - v0
    dt = z[..., 2 * n:] - t0
    dx = z[..., n:2 * n] - x0 - dt * v0
    return _stack(dv / r, dx / r ** 3, dt / r ** 2)


# -- point forms -----------------------------------------------------------

def compose(z0: GroupPoint, z: GroupPoint) -> GroupPoint:
    """``z0 o z = (v + v0, x0 + x + t v0, t0 + t)``."""
    if z0.n != z.n:
        raise DimensionMismatchError(
            f"cannot compose points of dimension {z0.n} and {z.n}")
    return GroupPoint(z.v + z0.v, z0.x + z.x + z.t * z0.v, z0.t + z.t)


def inverse(z: GroupPoint) -> GroupPoint:
    """``(v, x, t)^{-1} = (-v, t v - x, -t)``."""
    return GroupPoint(-z.v, z.t * z.v - z.x, -z.t)


def dilate(r: float, z: GroupPoint) -> GroupPoint:
    """``d_r(v, x, t) = (r v, r^3 x, r^2 t)``."""
    if not r > 0:
        raise InvalidScaleError(f"dilation factor must be positive, got {r}")
    return GroupPoint(r * z.v, r ** 3 * z.x, r ** 2 * z.t)


# -- boxes -----------------------------------------------------------------

@dataclass(frozen=True)
class HarnackConstants:
    """Constants of the local Harnack inequality and of the step lemma.

    ``M``, ``R``, ``Delta`` parametrise the boxes ``Q+ = Q_R`` and
    ``Q- = Q_R(0, 0, -Delta)``; ``S`` sizes the compact slice ``K-``; ``h``
    is the control-energy threshold below which one step of a curve lands
    in ``K-``.
    """

    M: float
    R: float = 0.5
    Delta: float = 0.5
    S: float = 0.25
    h: float = 1e-3

    def __post_init__(self):
        M, R, D, S, h = self.M, self.R, self.Delta, self.S, self.h
        if not (0 < R ** 2 < D < D + R ** 2 < 1):
            raise ConfigurationError(
                f"need 0 < R^2 < Delta < Delta + R^2 < 1, got R={R}, Delta={D}")
        if not M > 1:
            raise ConfigurationError(f"need M > 1, got {M}")
        if not h > 0:
            raise ConfigurationError(f"need h > 0, got {h}")
        if not 0 < S < R:
            raise ConfigurationError(f"need 0 < S < R, got S={S}, R={R}")

    @property
    def kminus_depth(self) -> float:
        """Time depth ``Delta + R^2/2`` of the ``K-`` slice (unit scale)."""
        return self.Delta + self.R ** 2 / 2

    def replace(self, **changes) -> "HarnackConstants":
        params = dict(M=self.M, R=self.R, Delta=self.Delta, S=self.S, h=self.h)
        params.update(changes)
        return HarnackConstants(**params)

    def to_json(self) -> dict:
        return dict(M=self.M, R=self.R, Delta=self.Delta, S=self.S, h=self.h)


class BoxKind(str, enum.Enum):
    UNIT_Q = "UNIT_Q"
    SYMMETRIC_Q = "SYMMETRIC_Q"
    Q_PLUS = "Q_PLUS"
    Q_MINUS = "Q_MINUS"
    K_MINUS = "K_MINUS"


_NEEDS_CONSTANTS = (BoxKind.Q_PLUS, BoxKind.Q_MINUS, BoxKind.K_MINUS)


@dataclass(frozen=True)
class BoxSpec:
    """Lazy description ``base o d_radius(reference box of kind)``."""

    base: GroupPoint
    radius: float
    kind: BoxKind = BoxKind.UNIT_Q
    constants: HarnackConstants | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", BoxKind(self.kind))
        object.__setattr__(self, "radius", float(self.radius))
        if not self.radius > 0:
            raise InvalidScaleError(f"box radius must be positive, got {self.radius}")
        if self.kind in _NEEDS_CONSTANTS and self.constants is None:
            raise ConfigurationError(f"{self.kind.value} boxes need HarnackConstants")

    @property
    def n(self) -> int:
        return self.base.n

    @property
    def closed(self) -> bool:
        return self.kind is BoxKind.K_MINUS

    def reference_bounds(self):
        """Half-widths in v and x and the t-window of the reference box."""
        c = self.constants
        if self.kind is BoxKind.UNIT_Q:
            return 1.0, 1.0, -1.0, 0.0
        if self.kind is BoxKind.SYMMETRIC_Q:
            return 1.0, 1.0, -1.0, 1.0
        if self.kind is BoxKind.Q_PLUS:
            return c.R, c.R ** 3, -c.R ** 2, 0.0
        if self.kind is BoxKind.Q_MINUS:
            return c.R, c.R ** 3, -c.Delta - c.R ** 2, -c.Delta
        depth = -(c.Delta + c.R ** 2 / 2)
        return c.S, c.S ** 3, depth, depth

    def bounds(self):
        """Half-widths and t-window in absolute units (shear not applied)."""
        hv, hx, lo, hi = self.reference_bounds()
        r = self.radius
        return r * hv, r ** 3 * hx, self.base.t + r ** 2 * lo, self.base.t + r ** 2 * hi

    def with_radius(self, radius: float) -> "BoxSpec":
        return BoxSpec(self.base, radius, self.kind, self.constants)

    def to_json(self) -> dict:
        return {
            "base": self.base.to_json(),
            "r": self.radius,
            "kind": self.kind.value,
            "constants": None if self.constants is None else self.constants.to_json(),
        }

    @classmethod
    def from_json(cls, data: dict) -> "BoxSpec":
        consts = data.get("constants")
        return cls(
            GroupPoint.from_array(data["base"]),
            float(data["r"]),
            BoxKind(data.get("kind", "UNIT_Q")),
            None if consts is None else HarnackConstants(**consts),
        )


def unit_box(n: int = 1) -> BoxSpec:
    """The unit box ``]-1,1[^n x ]-1,1[^n x ]-1,0[``."""
    return BoxSpec(origin(n), 1.0, BoxKind.UNIT_Q)


def box_membership(box: BoxSpec, z, eps: float = 0.0, closed: bool | None = None):
    """Membership in ``box`` through its explicit inequalities.

    ``z`` is a :class:`GroupPoint` (returns ``bool``) or a stacked array
    of shape ``(..., 2n+1)`` (returns a boolean array).  ``eps`` widens
    every inequality by an absolute amount; ``closed`` overrides the
    open/closed convention of the box kind.  The ``K-`` time slice is an
    equality and always tolerates rounding at the 1e-12 relative level.
    """
    scalar = isinstance(z, GroupPoint)
    arr = z.as_array() if scalar else np.asarray(z, dtype=float)
    n = box.n
    if _dim(arr) != n:
        raise DimensionMismatchError(
            f"box has dimension {n}, point has dimension {_dim(arr)}")
    hv, hx, t_lo, t_hi = box.bounds()
    b = box.base
    dv = np.abs(arr[..., :n] - b.v)
    dt = arr[..., 2 * n] - b.t
    dx = np.abs(arr[..., n:2 * n] - b.x - dt[..., None] * b.v)
    t = arr[..., 2 * n]
    is_closed = box.closed if closed is None else closed
    if is_closed:
        inside = np.all(dv <= hv + eps, axis=-1) & np.all(dx <= hx + eps, axis=-1)
    else:
        inside = np.all(dv < hv + eps, axis=-1) & np.all(dx < hx + eps, axis=-1)
    if box.kind is BoxKind.K_MINUS:
        slack = eps + 1e-12 * max(1.0, abs(t_lo), abs(b.t))
        inside &= np.abs(t - t_lo) <= slack
    elif is_closed:
        inside &= (t >= t_lo - eps) & (t <= t_hi + eps)
    else:
        inside &= (t > t_lo - eps) & (t < t_hi + eps)
    return bool(inside) if scalar else inside


def reference_corners(box: BoxSpec) -> np.ndarray:
    """Vertices of the closed reference box (before ``base o d_r``)."""
    n = box.n
    hv, hx, lo, hi = box.reference_bounds()
    times = (lo,) if lo == hi else (lo, hi)
    rows = []
    for signs in itertools.product((-1.0, 1.0), repeat=2 * n):
        for t in times:
            s = np.asarray(signs)
            rows.append(np.concatenate([hv * s[:n], hx * s[n:], [t]]))
    return np.asarray(rows)


def corner_array(box: BoxSpec) -> np.ndarray:
    ref = reference_corners(box)
    return compose_array(box.base.as_array(), dilate_array(box.radius, ref))


def box_corners(box: BoxSpec) -> list[GroupPoint]:
    """Vertices of the closure of ``box``: images of the reference cube
    vertices under ``base o d_r``.  A ``K-`` slice has ``2^(2n)``."""
    return [GroupPoint.from_array(row) for row in corner_array(box)]
