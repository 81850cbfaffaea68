"""Kalman rank, block structure and admissible curves of Kolmogorov operators.

A curve starting at ``z0 = (v0, x0, t0)`` and driven by a control ``omega``
follows the characteristics of ``Y = v . grad_x - d_t`` run backwards in
time:

    v(s) = v0 + int_0^s omega,   x(s) = x0 - int_0^s v,   t(s) = t0 - s.

The sign in the x-equation is the one for which the free motion
``omega = 0`` traces ``z0 o (0, 0, -s)``, so that curves, boxes and the
fundamental solution all share one group law.

Controls are sampled on uniform grids and every quadrature is exact for
the piecewise-linear interpolant of the samples.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.stats import qmc

from .errors import (
    AttainabilityError,
    DimensionMismatchError,
    DomainError,
    IntervalError,
    TimeDirectionError,
    ValidationError,
)
from .group import BoxKind, BoxSpec, GroupPoint, box_membership, relative_coordinates

__all__ = [
    "KolmogorovStructure",
    "BlockStructure",
    "matrix_sqrt",
    "kalman_rank",
    "detect_block_structure",
    "exp_tB",
    "kolmogorov_compose",
    "kolmogorov_inverse",
    "ControlCurve",
    "integrate_curve",
    "minimal_energy_control",
    "minimal_energy_curve",
    "control_energy",
    "attainable_unit_box",
    "AttainabilityStatus",
    "AttainabilityResult",
    "SearchBudget",
    "attainable_membership",
]

DEFAULT_SAMPLES = 1024
_ZERO_TOL = 1e-12


# -- linear algebra --------------------------------------------------------

def _check_symmetric(A, name="matrix"):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatchError(f"{name} must be square, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValidationError(f"{name} has non-finite entries")
    scale = max(1.0, float(np.max(np.abs(A))) if A.size else 1.0)
    if np.max(np.abs(A - A.T), initial=0.0) > 1e-12 * scale:
        raise ValidationError(f"{name} is not symmetric")
    return A


def matrix_sqrt(A_tilde) -> np.ndarray:
    """Symmetric nonnegative square root ``C`` with ``C @ C == A_tilde``.

    Eigenvalues in ``[-1e-12, 0)`` are treated as zero; anything more
    negative is rejected.
    """
    A = _check_symmetric(A_tilde, "A_tilde")
    A = 0.5 * (A + A.T)
    w, Q = np.linalg.eigh(A)
    if np.any(w < -1e-12):
        raise ValidationError(f"A_tilde is indefinite (smallest eigenvalue {w.min():.3e})")
    w = np.clip(w, 0.0, None)
    C = (Q * np.sqrt(w)) @ Q.T
    return 0.5 * (C + C.T)


def controllability_matrix(C, B) -> np.ndarray:
    C = np.asarray(C, dtype=float)
    B = np.asarray(B, dtype=float)
    if C.ndim != 2 or B.ndim != 2 or C.shape[0] != B.shape[0] or B.shape[0] != B.shape[1]:
        raise DimensionMismatchError(
            f"incompatible shapes C{C.shape} and B{B.shape}")
    N = B.shape[0]
    blocks = [C]
    for _ in range(N - 1):
        blocks.append(B @ blocks[-1])
    return np.hstack(blocks)


def kalman_rank(C, B) -> int:
    """Numerical rank of ``(C, BC, ..., B^{N-1} C)``.

    Singular values count when they exceed ``N * eps * sigma_max``.
    """
    K = controllability_matrix(C, B)
    N = K.shape[0]
    s = np.linalg.svd(K, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > N * np.finfo(float).eps * s[0]))


@dataclass(frozen=True)
class BlockStructure:
    blocks: tuple
    homogeneous: bool

    @property
    def kappa(self) -> int:
        return len(self.blocks) - 1


def _staircase(B, m0):
    N = B.shape[0]
    nz = np.abs(B) > _ZERO_TOL
    blocks = [m0]
    col0, row0 = 0, m0
    while row0 < N:
        cols = slice(col0, col0 + blocks[-1])
        rows = np.nonzero(np.any(nz[row0:, cols], axis=1))[0]
        if rows.size == 0:
            return None
        m = int(rows[-1]) + 1
        sub = B[row0:row0 + m, cols]
        if m > blocks[-1] or np.linalg.matrix_rank(sub, tol=_ZERO_TOL) != m:
            return None
        blocks.append(m)
        col0 += blocks[-2]
        row0 += m
    return tuple(blocks)


def detect_block_structure(B, m0: int | None = None) -> BlockStructure | None:
    """Recognise a basis-aligned staircase form of ``B``.

    Looks for ``m0 >= m1 >= ... >= m_kappa`` such that the subdiagonal
    block ``B_j`` (``m_j x m_{j-1}``) has full row rank and everything below
    it vanishes.  ``m0`` defaults to the first value in ``1..N-1`` that
    works.  Returns ``None`` if no such structure exists.
    """
    B = np.asarray(B, dtype=float)
    if B.ndim != 2 or B.shape[0] != B.shape[1]:
        raise DimensionMismatchError(f"B must be square, got shape {B.shape}")
    N = B.shape[0]
    candidates = [m0] if m0 is not None else range(1, N)
    for m in candidates:
        if not 1 <= m < N:
            continue
        blocks = _staircase(B, m)
        if blocks is None:
            continue
        # everything except the subdiagonal blocks is a "*" block
        mask = np.ones_like(B, dtype=bool)
        offs = np.concatenate([[0], np.cumsum(blocks)])
        for j in range(1, len(blocks)):
            mask[offs[j]:offs[j + 1], offs[j - 1]:offs[j]] = False
        homogeneous = bool(np.all(np.abs(B[mask]) <= _ZERO_TOL))
        return BlockStructure(blocks, homogeneous)
    return None


@dataclass(frozen=True)
class KolmogorovStructure:
    """Constant-coefficient data ``(A_tilde, B)`` of a Kolmogorov operator
    ``div(A_tilde grad) + <B y, grad> - d_t`` on R^N x R."""

    A_tilde: np.ndarray
    B: np.ndarray
    blocks: tuple | None = None

    def __post_init__(self):
        A = _check_symmetric(self.A_tilde, "A_tilde")
        B = np.asarray(self.B, dtype=float)
        if B.shape != A.shape:
            raise DimensionMismatchError(f"A_tilde{A.shape} and B{B.shape} differ in shape")
        if self.blocks is not None:
            blocks = tuple(int(m) for m in self.blocks)
            if sum(blocks) != A.shape[0] or any(m < 1 for m in blocks) or any(
                    a < b for a, b in zip(blocks, blocks[1:])):
                raise ValidationError(f"invalid block sizes {blocks} for N={A.shape[0]}")
            m0 = blocks[0]
            if np.linalg.eigvalsh(A[:m0, :m0]).min() <= 0:
                raise ValidationError("top-left block of A_tilde must be positive definite")
            object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "A_tilde", A)
        object.__setattr__(self, "B", B)

    @property
    def N(self) -> int:
        return self.A_tilde.shape[0]

    @classmethod
    def galilean(cls, n: int = 1) -> "KolmogorovStructure":
        """``A_tilde = diag(I_n, 0)``, ``B = [[0, 0], [I_n, 0]]``."""
        if n < 1:
            raise ValidationError("n must be >= 1")
        A = np.zeros((2 * n, 2 * n))
        A[:n, :n] = np.eye(n)
        B = np.zeros((2 * n, 2 * n))
        B[n:, :n] = np.eye(n)
        return cls(A, B, (n, n))

    @classmethod
    def from_json(cls, data: dict) -> "KolmogorovStructure":
        A = np.asarray(data["A_tilde"], dtype=float)
        if "N" in data and int(data["N"]) != A.shape[0]:
            raise DimensionMismatchError(f"N={data['N']} but A_tilde is {A.shape}")
        return cls(A, np.asarray(data["B"], dtype=float), data.get("blocks"))

    def to_json(self) -> dict:
        return {"N": self.N, "A_tilde": self.A_tilde.tolist(), "B": self.B.tolist(),
                "blocks": None if self.blocks is None else list(self.blocks)}

    def C(self) -> np.ndarray:
        return matrix_sqrt(self.A_tilde)

    def is_hypoelliptic(self) -> bool:
        return kalman_rank(self.C(), self.B) == self.N


def exp_tB(structure: KolmogorovStructure, t: float) -> np.ndarray:
    """``exp(t B)``; the power series is summed exactly when ``B`` is nilpotent."""
    B = structure.B
    N = B.shape[0]
    powers = [np.eye(N)]
    for _ in range(N):
        powers.append(powers[-1] @ B)
    if np.all(powers[-1] == 0.0):
        out = np.zeros((N, N))
        coef = 1.0
        for k, P in enumerate(powers[:-1]):
            if k:
                coef *= t / k
            out += coef * P
        return out
    return linalg.expm(t * B)


def kolmogorov_compose(structure, a, b) -> np.ndarray:
    """``(y0, t0) o (y, t) = (y + exp(t B) y0, t + t0)`` on arrays ``[y, t]``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    y = b[:-1] + exp_tB(structure, b[-1]) @ a[:-1]
    return np.concatenate([y, [a[-1] + b[-1]]])


def kolmogorov_inverse(structure, a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return np.concatenate([-exp_tB(structure, -a[-1]) @ a[:-1], [-a[-1]]])


# -- curves ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ControlCurve:
    """Sampled admissible curve.

    Attributes
    ----------
    start : GroupPoint
    horizon : float
        Parameter length ``T``.
    grid : ndarray, shape (K+1,)
        Uniform parameters ``s_k``.
    controls : ndarray, shape (K+1, n)
    states : ndarray, shape (K+1, 2n+1)
        Rows ``[v, x, t]`` of ``gamma(s_k)``.
    """

    start: GroupPoint
    horizon: float
    grid: np.ndarray
    controls: np.ndarray
    states: np.ndarray
    _cum_energy: np.ndarray = field(repr=False, default=None)

    @property
    def n(self) -> int:
        return self.start.n

    @property
    def K(self) -> int:
        return self.grid.size - 1

    @property
    def step(self) -> float:
        return self.horizon / self.K

    def state(self, k: int) -> GroupPoint:
        return GroupPoint.from_array(self.states[k])

    @property
    def end(self) -> GroupPoint:
        return self.state(-1)

    @property
    def energy(self) -> float:
        return float(self.cumulative_energy[-1])

    @property
    def cumulative_energy(self) -> np.ndarray:
        """``I(s_k) = int_0^{s_k} |omega|^2`` at every node."""
        if self._cum_energy is None:
            w = self.controls
            cell = self.step * np.sum(w[:-1] ** 2 + w[:-1] * w[1:] + w[1:] ** 2, axis=1) / 3.0
            object.__setattr__(self, "_cum_energy", np.concatenate([[0.0], np.cumsum(cell)]))
        return self._cum_energy

    def _locate(self, s):
        if not 0.0 <= s <= self.horizon * (1 + 1e-14):
            raise IntervalError(f"s={s} outside [0, {self.horizon}]")
        k = min(int(s / self.step), self.K - 1)
        return k, s - self.grid[k]

    def state_at(self, s: float) -> GroupPoint:
        """State at an arbitrary parameter, exact for the interpolated control."""
        k, tau = self._locate(s)
        n = self.n
        w0, w1 = self.controls[k], self.controls[k + 1]
        m = (w1 - w0) / self.step
        vk, xk = self.states[k, :n], self.states[k, n:2 * n]
        v = vk + w0 * tau + m * tau ** 2 / 2
        x = xk - (vk * tau + w0 * tau ** 2 / 2 + m * tau ** 3 / 6)
        return GroupPoint(v, x, self.start.t - s)

    def energy_to(self, s: float) -> float:
        k, tau = self._locate(s)
        w0 = self.controls[k]
        m = (self.controls[k + 1] - w0) / self.step
        part = np.sum(w0 ** 2 * tau + w0 * m * tau ** 2 + m ** 2 * tau ** 3 / 3)
        return float(self.cumulative_energy[k] + part)

    def rows(self):
        """CSV rows ``(s, omega..., v..., x..., t)``."""
        return np.column_stack([self.grid, self.controls, self.states])

    def csv_header(self) -> list[str]:
        n = self.n
        return (["s"] + [f"omega{j}" for j in range(n)] + [f"v{j}" for j in range(n)]
                + [f"x{j}" for j in range(n)] + ["t"])


def _as_controls(controls, n, K=None, T=None):
    if callable(controls):
        K = DEFAULT_SAMPLES if K is None else K
        s = np.linspace(0.0, T, K + 1)
        controls = np.asarray([np.broadcast_to(controls(si), (n,)) for si in s], dtype=float)
    w = np.asarray(controls, dtype=float)
    if w.ndim == 1:
        w = w[:, None] if n == 1 else w[None, :]
    if w.ndim != 2 or w.shape[1] != n:
        raise DimensionMismatchError(f"controls must have shape (K+1, {n}), got {w.shape}")
    if w.shape[0] < 2:
        raise ValidationError("need at least two control samples")
    if not np.all(np.isfinite(w)):
        raise ValidationError("controls must be finite")
    return w


def _integrate(v0, x0, t0, w, T):
    """States for control samples ``w`` of shape (..., K+1, n)."""
    K = w.shape[-2] - 1
    h = T / K
    dv = h * (w[..., :-1, :] + w[..., 1:, :]) / 2
    v = np.concatenate([np.broadcast_to(v0, w[..., :1, :].shape),
                        v0 + np.cumsum(dv, axis=-2)], axis=-2)
    ix = h * v[..., :-1, :] + h * h * (2 * w[..., :-1, :] + w[..., 1:, :]) / 6
    x = np.concatenate([np.broadcast_to(x0, w[..., :1, :].shape),
                        x0 - np.cumsum(ix, axis=-2)], axis=-2)
    t = t0 - np.linspace(0.0, T, K + 1)
    t = np.broadcast_to(t[:, None], w.shape[:-1] + (1,))
    return np.concatenate([v, x, t], axis=-1)


def integrate_curve(start: GroupPoint, controls, T: float, grid=None,
                    samples: int | None = None) -> ControlCurve:
    """Integrate the curve driven by sampled controls.

    Parameters
    ----------
    start : GroupPoint
    controls : array_like or callable
        ``K+1`` samples (shape ``(K+1,)`` for n = 1 or ``(K+1, n)``), or a
        callable ``omega(s)`` sampled on ``samples + 1`` nodes.
    T : float
        Horizon, must be positive.
    grid : array_like, optional
        Parameters of the samples; must be uniform on ``[0, T]``.

    Returns
    -------
    ControlCurve
    """
    T = float(T)
    if not T > 0:
        raise IntervalError(f"horizon must be positive, got {T}")
    w = _as_controls(controls, start.n, samples, T)
    K = w.shape[0] - 1
    s = np.linspace(0.0, T, K + 1)
    if grid is not None:
        g = np.asarray(grid, dtype=float)
        if g.shape != s.shape:
            raise ValidationError(f"grid has {g.size} nodes, controls have {K + 1}")
        if not np.allclose(g, s, rtol=0.0, atol=1e-12 * max(1.0, T)):
            raise ValidationError("control grid must be uniform on [0, T]")
    states = _integrate(start.v, start.x, start.t, w, T)
    return ControlCurve(start, T, s, w, states)


def _moments(z0: GroupPoint, z1: GroupPoint, T: float):
    # targets of int omega and int (T - s) omega
    return z1.v - z0.v, z0.x - z1.x - T * z0.v


def _affine_control(a, beta, T, s):
    lam1 = 4 * a / T - 6 * beta / T ** 2
    lam2 = -6 * a / T ** 2 + 12 * beta / T ** 3
    return lam1[None, :] + lam2[None, :] * (T - s)[:, None]


def minimal_energy_control(z0: GroupPoint, z1: GroupPoint, samples: int = DEFAULT_SAMPLES):
    """Least-energy control steering ``z0`` to ``z1`` over ``T = t0 - t1``.

    Per direction the optimum is affine, ``omega(s) = l1 + l2 (T - s)``, fixed
    by the two moment constraints ``int omega = v1 - v0`` and
    ``int (T - s) omega = x0 - x1 - T v0``.

    Returns
    -------
    controls : ndarray, shape (samples+1, n)
    energy : float
        ``4 a^2/T - 12 a beta/T^2 + 12 beta^2/T^3`` summed over directions.
    """
    if z0.n != z1.n:
        raise DimensionMismatchError("endpoints have different dimensions")
    T = z0.t - z1.t
    if not T > 0:
        raise TimeDirectionError(f"target time {z1.t} must precede start time {z0.t}")
    if samples < 1:
        raise ValidationError("samples must be >= 1")
    a, beta = _moments(z0, z1, T)
    s = np.linspace(0.0, T, samples + 1)
    energy = float(np.sum(4 * a ** 2 / T - 12 * a * beta / T ** 2 + 12 * beta ** 2 / T ** 3))
    return _affine_control(a, beta, T, s), energy


def minimal_energy_curve(z0: GroupPoint, z1: GroupPoint,
                         samples: int = DEFAULT_SAMPLES) -> ControlCurve:
    w, _ = minimal_energy_control(z0, z1, samples)
    return integrate_curve(z0, w, z0.t - z1.t)


def control_energy(curve: ControlCurve, a: float, b: float) -> float:
    """``int_a^b |omega|^2`` for the interpolated control, ``0 <= a < b <= T``."""
    if not a < b:
        raise IntervalError(f"need a < b, got [{a}, {b}]")
    if a < 0 or b > curve.horizon * (1 + 1e-14):
        raise IntervalError(f"[{a}, {b}] not inside [0, {curve.horizon}]")
    return curve.energy_to(min(b, curve.horizon)) - curve.energy_to(a)


# -- attainable sets -------------------------------------------------------

def attainable_unit_box(z: GroupPoint) -> bool:
    """Closed-form attainability from the origin inside the unit box."""
    arr = z.as_array()
    n = z.n
    if (np.any(np.abs(arr[:2 * n]) > 1.0) or z.t < -1.0 or z.t > 0.0):
        raise DomainError(f"{z} is outside the closed unit box")
    return bool(np.all(np.abs(z.x) <= abs(z.t)))


class AttainabilityStatus(str, enum.Enum):
    REACHABLE = "REACHABLE"
    UNREACHABLE = "UNREACHABLE"
    UNDECIDED = "UNDECIDED"


@dataclass(frozen=True)
class SearchBudget:
    """Parameters of the witness search.

    ``plateau_fractions`` are ramp lengths (fractions of ``T``) of
    trapezoidal velocity profiles; ``waypoints`` is the number of Sobol
    draws of waypoint pairs.
    """

    samples: int = 512
    plateau_fractions: tuple = (0.3, 0.15, 0.06, 0.025, 0.01)
    waypoints: int = 32
    seed: int = 0

    def to_json(self) -> dict:
        return {"samples": self.samples, "plateau_fractions": list(self.plateau_fractions),
                "waypoints": self.waypoints, "seed": self.seed}


@dataclass(frozen=True)
class AttainabilityResult:
    status: AttainabilityStatus
    witness: ControlCurve | None = None
    seed: int | None = None
    reason: str = ""

    def __bool__(self):
        return self.status is AttainabilityStatus.REACHABLE

    def to_json(self) -> dict:
        out = {"status": self.status.value, "seed": self.seed, "reason": self.reason}
        if self.witness is not None:
            out["witness_energy"] = self.witness.energy
            out["witness_endpoint"] = self.witness.end.to_json()
        return out


def _in_closure(domain: BoxSpec, z: GroupPoint) -> bool:
    return box_membership(domain, z, closed=True)


def _correct(z0, z1, w, T):
    """Add the affine control that moves the endpoint exactly onto ``z1``."""
    states = _integrate(z0.v, z0.x, z0.t, w, T)
    n = z0.n
    end_v = states[..., -1, :n]
    end_x = states[..., -1, n:2 * n]
    K = w.shape[-2] - 1
    s = np.linspace(0.0, T, K + 1)
    a = z1.v - end_v
    beta = end_x - z1.x
    lam1 = 4 * a / T - 6 * beta / T ** 2
    lam2 = -6 * a / T ** 2 + 12 * beta / T ** 3
    return w + lam1[..., None, :] + lam2[..., None, :] * (T - s)[:, None]


def _plateau_controls(z0, z1, T, fractions, K):
    """Trapezoidal velocity profiles ``v0 -> L -> v1`` with matching displacement."""
    s = np.linspace(0.0, T, K + 1)
    disp = z0.x - z1.x  # required int v
    out = []
    for f in fractions:
        tau = f * T
        # int v = L (T - tau) + (v0 + v1) tau / 2
        L = (disp - (z0.v + z1.v) * tau / 2) / (T - tau)
        w = np.zeros((K + 1, z0.n))
        w[s < tau] = (L - z0.v) / tau
        w[s > T - tau] = (z1.v - L) / tau
        out.append(w)
    return np.asarray(out)


def _waypoint_controls(domain, z0, z1, T, count, K, seed):
    if count <= 0 or K < 3:
        return np.zeros((0, K + 1, z0.n))
    n = z0.n
    hv, hx, _, _ = domain.bounds()
    bv = domain.base
    k1, k2 = K // 3, (2 * K) // 3
    s = np.linspace(0.0, T, K + 1)
    sampler = qmc.Sobol(d=4 * n, scramble=True, seed=seed)
    m = int(np.ceil(np.log2(max(count, 1))))
    u = sampler.random_base2(m)[:count]
    out = []
    for row in u:
        pts = [z0]
        for j, k in enumerate((k1, k2)):
            t = z0.t - s[k]
            dt = t - bv.t
            v = bv.v + hv * (2 * row[2 * n * j:2 * n * j + n] - 1)
            x = bv.x + dt * bv.v + hx * (2 * row[2 * n * j + n:2 * n * (j + 1)] - 1)
            pts.append(GroupPoint(v, x, t))
        pts.append(z1)
        w = np.empty((K + 1, n))
        bounds = (0, k1, k2, K)
        for j in range(3):
            lo, hi = bounds[j], bounds[j + 1]
            seg, _ = minimal_energy_control(pts[j], pts[j + 1], hi - lo)
            w[lo:hi + 1] = seg
        out.append(w)
    return np.asarray(out)


def _inside(domain, states):
    return np.all(box_membership(domain, states[..., 1:, :]), axis=-1)


def attainable_membership(domain: BoxSpec, z0: GroupPoint, z: GroupPoint,
                          budget: SearchBudget | None = None) -> AttainabilityResult:
    """Decide whether ``z`` is reachable from ``z0`` by a curve inside ``domain``.

    Tries the minimal-energy curve, then trapezoidal velocity profiles and
    Sobol-drawn waypoint detours, each corrected to hit ``z`` exactly; every
    sampled state after the start must lie in the open domain.  If
    ``domain`` is a ``UNIT_Q`` box based at ``z0`` the closed-form cone gives
    an unreachability certificate.  Otherwise a failed search is
    ``UNDECIDED``.
    """
    budget = budget or SearchBudget()
    if z0.n != z.n or z0.n != domain.n:
        raise DimensionMismatchError("dimension mismatch between domain and points")
    if not z.t < z0.t:
        raise TimeDirectionError(f"target time {z.t} must precede start time {z0.t}")
    if not _in_closure(domain, z0):
        raise DomainError(f"start point {z0} is outside the closed domain")
    seed = budget.seed
    U = AttainabilityStatus
    if not box_membership(domain, z):
        return AttainabilityResult(U.UNREACHABLE, None, seed, "target outside domain")
    if domain.kind is BoxKind.UNIT_Q and z0.allclose(domain.base, atol=0.0):
        w = relative_coordinates(domain.base.as_array(), domain.radius, z.as_array())
        n = z.n
        if np.any(np.abs(w[n:2 * n]) > abs(w[2 * n])):
            return AttainabilityResult(U.UNREACHABLE, None, seed, "outside attainable cone")
    T = z0.t - z.t
    K = budget.samples
    best = None
    w, _ = minimal_energy_control(z0, z, K)
    states = _integrate(z0.v, z0.x, z0.t, w, T)
    if _inside(domain, states):
        best = (w, states)
    else:
        cands = [_plateau_controls(z0, z, T, budget.plateau_fractions, K),
                 _waypoint_controls(domain, z0, z, T, budget.waypoints, K, seed)]
        cands = np.concatenate(cands, axis=0)
        if cands.shape[0]:
            cands = _correct(z0, z, cands, T)
            all_states = _integrate(z0.v, z0.x, z0.t, cands, T)
            ok = _inside(domain, all_states)
            if np.any(ok):
                h = T / K
                e = h * np.sum(cands[:, :-1] ** 2 + cands[:, :-1] * cands[:, 1:]
                               + cands[:, 1:] ** 2, axis=(1, 2)) / 3
                e = np.where(ok, e, np.inf)
                i = int(np.argmin(e))  # first index wins ties
                best = (cands[i], all_states[i])
    if best is None:
        return AttainabilityResult(U.UNDECIDED, None, seed, "no witness found")
    curve = ControlCurve(z0, T, np.linspace(0.0, T, K + 1), best[0], best[1])
    return AttainabilityResult(U.REACHABLE, curve, seed, "witness verified")


def require_reachable(domain, z0, z, budget=None) -> ControlCurve:
    """Witness curve or :class:`AttainabilityError`."""
    res = attainable_membership(domain, z0, z, budget)
    if res.status is not AttainabilityStatus.REACHABLE:
        raise AttainabilityError(f"{z} is {res.status.value} from {z0}: {res.reason}")
    return res.witness
