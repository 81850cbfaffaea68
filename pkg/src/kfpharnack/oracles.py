"""Closed-form fundamental solution of the constant-coefficient kinetic
operator and exact Langevin sampling.

For ``d_t u + v . grad_x u = sigma2 * Lap_v u`` the kernel from ``z0`` is,
per direction, the bivariate normal density of

    (v - v0, x - x0 - s v0),  s = t - t0 > 0,

with covariance ``sigma2 * [[2 s, s^2], [s^2, 2 s^3 / 3]]``; it is the law
of ``(V_s, X_s)`` for ``dV = sqrt(2 sigma2) dW``, ``dX = V ds``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, StatisticsError, TimeDirectionError, ValidationError
from .group import GroupPoint

__all__ = [
    "GaussianKernelParams",
    "gamma_L0",
    "gamma_array",
    "langevin_mc",
    "langevin_euler",
    "density_estimate",
    "box_density_estimate",
    "chapman_kolmogorov_error",
    "gamma_pde_residual",
    "MIN_KDE_SAMPLES",
]

MIN_KDE_SAMPLES = 1000


@dataclass(frozen=True)
class GaussianKernelParams:
    s: float
    sigma2: float = 0.5
    n: int = 1

    def __post_init__(self):
        if not self.s > 0:
            raise TimeDirectionError(f"elapsed time must be positive, got {self.s}")
        if not self.sigma2 > 0:
            raise ValidationError(f"sigma2 must be positive, got {self.sigma2}")

    def covariance(self) -> np.ndarray:
        """Per-direction 2x2 covariance of ``(V, X)``."""
        s, c = self.s, self.sigma2
        return c * np.array([[2 * s, s ** 2], [s ** 2, 2 * s ** 3 / 3]])


def gamma_array(pts, z0, sigma2: float = 0.5) -> np.ndarray:
    """Kernel values at stacked points ``[v, x, t]`` (any leading shape).

    Entries with ``t <= t0`` are zero.
    """
    pts = np.asarray(pts, dtype=float)
    z0 = np.asarray(z0.as_array() if isinstance(z0, GroupPoint) else z0, dtype=float)
    n = (pts.shape[-1] - 1) // 2
    if z0.shape[-1] != pts.shape[-1]:
        raise DimensionMismatchError("point and pole have different dimensions")
    s = pts[..., 2 * n] - z0[..., 2 * n]
    pos = s > 0
    s_safe = np.where(pos, s, 1.0)[..., None]
    dv = pts[..., :n] - z0[..., :n]
    dx = pts[..., n:2 * n] - z0[..., n:2 * n] - s_safe * z0[..., :n]
    c = sigma2
    # inverse of c [[2s, s^2], [s^2, 2s^3/3]] is (3 / (c s^4)) [[2s^3/3, -s^2], [-s^2, 2s]]
    q = (3.0 / (c * s_safe ** 4)) * (2 * s_safe ** 3 / 3 * dv ** 2 - 2 * s_safe ** 2 * dv * dx
                                    + 2 * s_safe * dx ** 2)
    norm = math.sqrt(3.0) / (2 * math.pi * c * s_safe ** 2)
    dens = np.prod(norm * np.exp(-0.5 * q), axis=-1)
    return np.where(pos, dens, 0.0)


def gamma_L0(z: GroupPoint, z0: GroupPoint, sigma2: float = 0.5) -> float:
    """Fundamental solution ``Gamma(z; z0)`` for ``t > t0``."""
    if z.n != z0.n:
        raise DimensionMismatchError("point and pole have different dimensions")
    if not z.t > z0.t:
        raise TimeDirectionError(f"need t > t0, got t={z.t}, t0={z0.t}")
    GaussianKernelParams(z.t - z0.t, sigma2, z.n)
    return float(gamma_array(z.as_array(), z0.as_array(), sigma2))


def _generator(seed: int, direction: int) -> np.random.Generator:
    ss = np.random.SeedSequence([int(seed), int(direction)])
    return np.random.Generator(np.random.Philox(ss))


def langevin_mc(z0: GroupPoint, s: float, paths: int, seed: int = 0,
                sigma2: float = 0.5) -> np.ndarray:
    """Exact samples of ``(V_s, X_s)`` started at ``z0``.

    Each direction draws from its own Philox stream keyed by
    ``(seed, direction)``; path ``i`` uses the ``i``-th pair of normals.

    Returns
    -------
    ndarray, shape (paths, 2n)
        Columns ``v_1..v_n, x_1..x_n``.
    """
    params = GaussianKernelParams(s, sigma2, z0.n)
    if paths < 1:
        raise ValidationError("paths must be >= 1")
    L = np.linalg.cholesky(params.covariance())
    n = z0.n
    out = np.empty((paths, 2 * n))
    for j in range(n):
        xi = _generator(seed, j).standard_normal((paths, 2))
        y = xi @ L.T
        out[:, j] = z0.v[j] + y[:, 0]
        out[:, n + j] = z0.x[j] + s * z0.v[j] + y[:, 1]
    return out


def langevin_euler(z0: GroupPoint, s: float, paths: int, steps: int, seed: int = 0,
                   sigma2: float = 0.5) -> np.ndarray:
    """Euler-Maruyama reference for :func:`langevin_mc` (independent of the
    closed-form covariance)."""
    n = z0.n
    rng = np.random.default_rng(seed)
    dt = s / steps
    V = np.tile(z0.v, (paths, 1))
    X = np.tile(z0.x, (paths, 1))
    amp = math.sqrt(2 * sigma2 * dt)
    for _ in range(steps):
        dW = amp * rng.standard_normal((paths, n))
        # trapezoidal position update
        X += V * dt + 0.5 * dt * dW
        V += dW
    return np.hstack([V, X])


def density_estimate(samples, point, bandwidth, chunk: int = 200_000):
    """Product Gaussian kernel density estimate.

    Parameters
    ----------
    samples : ndarray, shape (N, 2n)
    point : array_like, shape (2n,) or (m, 2n)
    bandwidth : float or pair ``(bw_v, bw_x)`` or array of length 2n

    Returns
    -------
    float or ndarray of shape (m,)
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2 or samples.shape[1] % 2:
        raise DimensionMismatchError("samples must have shape (N, 2n)")
    N, d = samples.shape
    if N < MIN_KDE_SAMPLES:
        raise StatisticsError(f"need at least {MIN_KDE_SAMPLES} samples, got {N}")
    n = d // 2
    bw = np.asarray(bandwidth, dtype=float)
    if bw.size == 2 and d != 2:
        bw = np.repeat(bw, n)
    bw = np.broadcast_to(bw, (d,))
    if np.any(bw <= 0):
        raise ValidationError("bandwidth must be positive")
    pts = np.asarray(point, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    norm = 1.0 / (np.prod(bw) * (2 * math.pi) ** (d / 2))
    out = np.zeros(pts.shape[0])
    for i, p in enumerate(pts):
        acc = 0.0
        for lo in range(0, N, chunk):
            y = (samples[lo:lo + chunk] - p) / bw
            acc += np.exp(-0.5 * np.sum(y * y, axis=1)).sum()
        out[i] = norm * acc / N
    return float(out[0]) if single else out


def box_density_estimate(samples, point, width: float):
    """Histogram-cell estimate at ``point`` with its binomial standard error."""
    samples = np.asarray(samples, dtype=float)
    N, d = samples.shape
    inside = np.all(np.abs(samples - np.asarray(point, dtype=float)) <= width / 2, axis=1)
    p = inside.mean()
    vol = width ** d
    return p / vol, math.sqrt(max(p * (1 - p), 1.0 / N) / N) / vol


def chapman_kolmogorov_error(z: GroupPoint, z0: GroupPoint, t_mid: float,
                             sigma2: float = 0.5, nodes: int = 60) -> float:
    """``|int Gamma(z; w) Gamma(w; z0) dw - Gamma(z; z0)|`` at time ``t_mid``.

    The integral is Gauss-Hermite in coordinates whitened by the narrower
    factor: the law of ``w`` (``Gamma(.; z0)``) when ``t_mid`` is nearer
    ``t0``, otherwise ``w -> Gamma(z; w)``, which is also a normalised
    Gaussian density in ``w``.  n = 1 only.
    """
    if z.n != 1:
        raise ValidationError("the quadrature check is implemented for n = 1")
    if not z0.t < t_mid < z.t:
        raise TimeDirectionError("need t0 < t_mid < t")
    s0, s1 = t_mid - z0.t, z.t - t_mid
    if s0 <= s1:
        L = np.linalg.cholesky(GaussianKernelParams(s0, sigma2).covariance())
        mu = np.array([z0.v[0], z0.x[0] + s0 * z0.v[0]])
    else:
        # z = (w_v + V, w_x + s1 w_v + X) with (V, X) ~ N(0, C(s1)); solve for w
        Minv = np.array([[1.0, 0.0], [-s1, 1.0]])
        C = Minv @ GaussianKernelParams(s1, sigma2).covariance() @ Minv.T
        L = np.linalg.cholesky(C)
        mu = Minv @ np.array([z.v[0], z.x[0]])
    g, wts = np.polynomial.hermite_e.hermegauss(nodes)
    wts = wts / math.sqrt(2 * math.pi)
    G1, G2 = np.meshgrid(g, g, indexing="ij")
    W = np.outer(wts, wts).ravel()
    xi = np.stack([G1.ravel(), G2.ravel()], axis=1)
    w = mu + xi @ L.T
    pts = np.column_stack([w, np.full(w.shape[0], t_mid)])
    if s0 <= s1:
        vals = gamma_array(z.as_array()[None, :], pts, sigma2)
    else:
        vals = gamma_array(pts, z0.as_array(), sigma2)
    return abs(float(np.sum(W * vals)) - gamma_L0(z, z0, sigma2))


def gamma_pde_residual(pts, h: float, z0=None, sigma2: float = 0.5) -> np.ndarray:
    """Centred-difference value of ``d_t G + v.grad_x G - sigma2 Lap_v G``
    at stacked points (truncation error ``O(h^2)``)."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    n = (pts.shape[1] - 1) // 2
    if z0 is None:
        z0 = np.zeros(2 * n + 1)
    z0 = np.asarray(z0.as_array() if isinstance(z0, GroupPoint) else z0, dtype=float)

    def G(p):
        return gamma_array(p, z0, sigma2)

    def shift(axis, d):
        q = pts.copy()
        q[:, axis] += d
        return q

    res = (G(shift(2 * n, h)) - G(shift(2 * n, -h))) / (2 * h)
    g0 = G(pts)
    for j in range(n):
        res += pts[:, j] * (G(shift(n + j, h)) - G(shift(n + j, -h))) / (2 * h)
        res -= sigma2 * (G(shift(j, h)) - 2 * g0 + G(shift(j, -h))) / h ** 2
    return res
