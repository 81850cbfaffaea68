"""Harnack chains along admissible curves and finite covers of compact sets.

A chain is a partition ``0 = s_0 < ... < s_k = T`` of a curve such that
each node ``gamma(s_{j+1})`` lies in the lower box ``Q-_{r_j}(gamma(s_j))``
and every upper-level box ``Q_{r_j}(gamma(s_j))`` stays inside the
working domain.  Chaining the local inequality ``k`` times yields the
constant ``M + M^2 + ... + M^k``.
"""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .controllability import (
    AttainabilityStatus,
    ControlCurve,
    SearchBudget,
    attainable_membership,
)
from .errors import (
    AttainabilityError,
    ChainConstructionError,
    CurveEscapeError,
    DomainError,
    IntervalError,
    ValidationError,
)
from .group import (
    BoxKind,
    BoxSpec,
    GroupPoint,
    HarnackConstants,
    box_membership,
    compose_array,
    dilate_array,
    inverse_array,
    reference_corners,
)

log = logging.getLogger(__name__)

__all__ = [
    "reach_radius",
    "min_reach_radius",
    "choose_delta0",
    "lemma22_step_box",
    "calibrate_h",
    "sufficient_energy_bound",
    "default_constants",
    "geometric_sum",
    "log_geometric_sum",
    "HarnackChain",
    "build_chain",
    "CoverEntry",
    "cover_compact",
]

SAFETY = 0.99
MAX_RETRIES = 20


# -- radii -----------------------------------------------------------------

def _sym_corners(n):
    probe = BoxSpec(GroupPoint(np.zeros(n), np.zeros(n), 0.0), 1.0, BoxKind.SYMMETRIC_Q)
    return reference_corners(probe)


def _contains_sym(domain, z, r, corners):
    """Whether the symmetric box of radius ``r[i]`` at ``z[i]`` lies in the
    closure of ``domain``; vectorised over ``i``."""
    pts = compose_array(z[:, None, :], dilate_array(r[:, None], corners[None, :, :]))
    return np.all(box_membership(domain, pts, closed=True), axis=-1)


def _reach_radii(domain: BoxSpec, z: np.ndarray, rtol: float = 1e-8) -> np.ndarray:
    corners = _sym_corners(domain.n)
    m = z.shape[0]
    lo = np.zeros(m)
    hi = np.full(m, max(1.0, domain.radius))
    for _ in range(200):
        grow = _contains_sym(domain, z, hi, corners)
        if not grow.any():
            break
        lo = np.where(grow, hi, lo)
        hi = np.where(grow, 2 * hi, hi)
    else:
        raise DomainError("domain appears unbounded")
    while np.any(hi - lo > rtol * hi):
        mid = 0.5 * (lo + hi)
        ok = _contains_sym(domain, z, mid, corners)
        lo = np.where(ok, mid, lo)
        hi = np.where(ok, hi, mid)
    return lo


def reach_radius(domain: BoxSpec, z: GroupPoint, rtol: float = 1e-8) -> float:
    """Largest ``r`` with the symmetric box ``Q~_r(z)`` inside ``domain``.

    Containment of the convex image of a cube is tested on its vertices,
    and ``r`` is located by bisection to relative accuracy ``rtol``.
    """
    if not box_membership(domain, z):
        raise DomainError(f"{z} is not in the open domain")
    return float(_reach_radii(domain, z.as_array()[None, :], rtol)[0])


def min_reach_radius(domain: BoxSpec, curve: ControlCurve, safety: float = SAFETY) -> float:
    """``safety * min_k r(gamma(s_k))`` over the sample grid."""
    inside = box_membership(domain, curve.states)
    if not np.all(inside):
        idx = int(np.argmin(inside))
        raise CurveEscapeError(f"curve state {idx} leaves the domain", index=idx)
    return safety * float(_reach_radii(domain, curve.states).min())


# -- step sizing -----------------------------------------------------------

def _max_window_energy(cum, m):
    K = cum.size - 1
    if m >= K:
        return cum[-1]
    return float(np.max(cum[m:] - cum[:-m]))


def choose_delta0(curve: ControlCurve, constants: HarnackConstants, r0: float) -> float:
    """Largest admissible step length.

    The step is capped by ``(Delta + R^2/2) r0^2`` and every node-aligned
    window of that length must carry control energy at most ``h``.
    """
    if not r0 > 0:
        raise ValidationError(f"r0 must be positive, got {r0}")
    cap = constants.kminus_depth * r0 ** 2
    cum = curve.cumulative_energy
    hs = curve.step
    h = constants.h
    # the cap itself, covered by ceil(cap/hs) cells
    if _max_window_energy(cum, max(1, math.ceil(cap / hs - 1e-9))) <= h:
        return cap
    lo, hi = 0, min(curve.K, math.ceil(cap / hs))
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if _max_window_energy(cum, mid) <= h:
            lo = mid
        else:
            hi = mid
    if lo >= 1:
        return min(lo * hs, cap)
    # one cell already carries too much: bound by the peak control
    peak = float(np.max(np.sum(curve.controls ** 2, axis=1)))
    return min(h / peak, cap)


def lemma22_step_box(z_a: GroupPoint, a: float, b: float, constants: HarnackConstants,
                     time_consistent: bool = False) -> BoxSpec:
    """``K-`` box of the one-step lemma for the window ``[a, b]``.

    By default ``r = sqrt((b - a) / (Delta + 1/2))``.  With
    ``time_consistent=True`` the denominator is ``Delta + R^2/2``, the depth
    of the ``K-`` slice, so that the slice passes through time
    ``t_a - (b - a)``.
    """
    if not b > a:
        raise IntervalError(f"need b > a, got a={a}, b={b}")
    depth = constants.kminus_depth if time_consistent else constants.Delta + 0.5
    return BoxSpec(z_a, math.sqrt((b - a) / depth), BoxKind.K_MINUS, constants)


def sufficient_energy_bound(R: float = 0.5, Delta: float = 0.5, S: float = 0.25) -> float:
    """Energy below which a unit-depth step provably lands in ``K-``.

    Cauchy-Schwarz applied to the two moments of the control gives
    ``|dv| <= sqrt(E)`` and ``|dx| <= sqrt(E/3)`` on a window normalised so
    the slice sits at depth one; ``K-`` then holds for
    ``E <= min(S^2/c, 3 S^6/c^3)``, ``c = Delta + R^2/2``.
    """
    c = Delta + R ** 2 / 2
    return min(S ** 2 / c, 3 * S ** 6 / c ** 3)


@functools.lru_cache(maxsize=32)
def calibrate_h(R: float = 0.5, Delta: float = 0.5, S: float = 0.25,
                samples: int = 10_000, seed: int = 20240611, degree: int = 6,
                K: int = 256) -> dict:
    """Empirical energy threshold of the one-step lemma.

    Random controls on a unit window (Legendre combinations with
    log-uniform amplitudes) are integrated from the origin; ``h`` is half
    the smallest energy whose endpoint misses the time-consistent ``K-``
    box.  Energy and ``K-`` membership are dilation- and
    translation-invariant, and directions decouple, so the one-dimensional
    unit-window run is representative.

    Returns a dict with ``h``, ``min_failing``, ``seed``, ``samples`` and
    the analytic ``bound``.
    """
    rng = np.random.default_rng(seed)
    s = np.linspace(0.0, 1.0, K + 1)
    basis = np.polynomial.legendre.legvander(2 * s - 1, degree - 1)  # (K+1, degree)
    coef = rng.standard_normal((samples, degree))
    w = coef @ basis.T
    h_s = 1.0 / K
    e = h_s * np.sum(w[:, :-1] ** 2 + w[:, :-1] * w[:, 1:] + w[:, 1:] ** 2, axis=1) / 3
    target = np.exp(rng.uniform(np.log(1e-4), np.log(1.0), samples))
    w *= np.sqrt(target / e)[:, None]
    e = target
    c = Delta + R ** 2 / 2
    r = 1.0 / math.sqrt(c)
    dv = h_s * np.sum(w[:, :-1] + w[:, 1:], axis=1) / 2
    # displacement int_0^1 (1 - s) omega, exact for the interpolant
    wl, wr = w[:, :-1], w[:, 1:]
    u0 = 1.0 - s[:-1]
    u1 = u0 - h_s
    dx = np.sum(h_s * (2 * u0 * wl + u0 * wr + u1 * wl + 2 * u1 * wr) / 6, axis=1)
    ok = (np.abs(dv) <= r * S) & (np.abs(dx) <= r ** 3 * S ** 3)
    failing = e[~ok]
    min_fail = float(failing.min()) if failing.size else float(e.max())
    return {"h": 0.5 * min_fail, "min_failing": min_fail, "seed": seed,
            "samples": samples, "bound": sufficient_energy_bound(R, Delta, S)}


def default_constants(M: float = 2.0, R: float = 0.5, Delta: float = 0.5,
                      S: float = 0.25, h: float | None = None) -> HarnackConstants:
    if h is None:
        h = calibrate_h(R, Delta, S)["h"]
    return HarnackConstants(M=M, R=R, Delta=Delta, S=S, h=h)


# -- chains ----------------------------------------------------------------

def log_geometric_sum(M: float, k: int) -> float:
    """``log(M + M^2 + ... + M^k)`` without overflow."""
    if k < 1:
        raise ValidationError("k must be >= 1")
    if M == 1.0:
        return math.log(k)
    lm = math.log(M)
    if M > 1:
        return lm + k * lm + math.log1p(-math.exp(-k * lm)) - math.log(M - 1)
    return lm + math.log1p(-M ** k) - math.log1p(-M)


def geometric_sum(M: float, k: int) -> float:
    """``M + ... + M^k``; ``inf`` when it overflows a double."""
    lg = log_geometric_sum(M, k)
    return math.exp(lg) if lg < 709.0 else math.inf


def _log_sum_powers(M, k):
    # independent of the closed form: log-sum-exp of i log M
    lm = math.log(M)
    terms = lm * np.arange(1, k + 1)
    top = terms.max()
    return float(top + np.log(np.sum(np.exp(terms - top))))


@dataclass
class HarnackChain:
    """Ordered nodes along a curve with the boxes linking consecutive nodes.

    ``node_array[j]`` is ``gamma(params[j])``; ``radii[j]`` is the radius of
    the step box ``Q-_{radii[j]}(node j)`` that must contain node ``j+1``.
    ``total_constant`` may be ``inf`` for long chains; ``log_total_constant``
    is always finite.  Point and box objects are built on first access.
    """

    node_array: np.ndarray
    params: np.ndarray
    radii: np.ndarray
    M: float
    constants: HarnackConstants
    total_constant: float
    log_total_constant: float
    delta0: float
    r0: float
    attempts: int = 1
    curve: ControlCurve | None = field(default=None, repr=False)

    @property
    def k(self) -> int:
        return len(self.radii)

    @functools.cached_property
    def nodes(self) -> list:
        return [GroupPoint.from_array(p) for p in self.node_array]

    @functools.cached_property
    def step_boxes(self) -> list:
        return [self._box(j) for j in range(self.k)]

    def _box(self, j: int) -> BoxSpec:
        return BoxSpec(GroupPoint.from_array(self.node_array[j]), self.radii[j],
                       BoxKind.Q_MINUS, self.constants)

    @property
    def neighborhood(self) -> BoxSpec:
        """Open neighbourhood ``Q-_{r_1}(gamma(s_{k-1}))`` of the endpoint."""
        return self._box(self.k - 1)

    def verify(self, domain: BoxSpec) -> dict:
        """Re-check every step from scratch; returns failing step indices.

        Membership is tested in reference coordinates
        ``d_{1/r}(base^{-1} o node)``; containment through the vertices of
        each ``Q_r(base)``.
        """
        n = domain.n
        c = self.constants
        bases, r = self.node_array[:-1], self.radii
        ref = dilate_array(1.0 / r, compose_array(inverse_array(bases),
                                                           self.node_array[1:]))
        hv, hx, lo, hi = BoxSpec(domain.base, 1.0, BoxKind.Q_MINUS, c).reference_bounds()
        member = (np.all(np.abs(ref[:, :n]) < hv, axis=1)
                  & np.all(np.abs(ref[:, n:2 * n]) < hx, axis=1)
                  & (ref[:, 2 * n] > lo) & (ref[:, 2 * n] < hi))
        q = BoxSpec(domain.base, 1.0, BoxKind.UNIT_Q)
        corners = compose_array(bases[:, None, :],
                                dilate_array(r[:, None], reference_corners(q)[None]))
        contain = np.all(box_membership(domain, corners, closed=True), axis=1)
        closed = log_geometric_sum(self.M, self.k)
        bad_member = np.nonzero(~member)[0].tolist()
        bad_contain = np.nonzero(~contain)[0].tolist()
        return {
            "membership_failures": bad_member,
            "containment_failures": bad_contain,
            "constant_error": abs(self.log_total_constant - closed),
            "ok": not bad_member and not bad_contain,
        }

    def to_json(self) -> dict:
        return {
            "nodes": self.node_array.tolist(),
            "params": [float(s) for s in self.params],
            "radii": [float(r) for r in self.radii],
            "M": self.M,
            "k": self.k,
            "total_constant": self.total_constant,
            "log_total_constant": self.log_total_constant,
            "delta0": self.delta0,
            "r0": self.r0,
            "attempts": self.attempts,
            "steps": [{"base": b, "r": r, "kind": BoxKind.Q_MINUS.value}
                      for b, r in zip(self.node_array[:-1].tolist(), self.radii.tolist())],
        }


def _states_at(curve: ControlCurve, s: np.ndarray) -> np.ndarray:
    n = curve.n
    hs = curve.step
    k = np.minimum((s / hs).astype(int), curve.K - 1)
    tau = (s - curve.grid[k])[:, None]
    w0, w1 = curve.controls[k], curve.controls[k + 1]
    m = (w1 - w0) / hs
    vk, xk = curve.states[k, :n], curve.states[k, n:2 * n]
    v = vk + w0 * tau + m * tau ** 2 / 2
    x = xk - (vk * tau + w0 * tau ** 2 / 2 + m * tau ** 3 / 6)
    out = np.concatenate([v, x, (curve.start.t - s)[:, None]], axis=1)
    # exact nodes where available
    on_grid = np.isclose(tau[:, 0], 0.0, atol=0.0)
    out[on_grid] = curve.states[k[on_grid]]
    out[s == curve.horizon] = curve.states[-1]
    return out


def _in_qminus(bases, r, pts, c: HarnackConstants):
    n = (bases.shape[1] - 1) // 2
    r = np.asarray(r, dtype=float)
    dv = pts[:, :n] - bases[:, :n]
    dt = pts[:, 2 * n] - bases[:, 2 * n]
    dx = pts[:, n:2 * n] - bases[:, n:2 * n] - dt[:, None] * bases[:, :n]
    rr = r[:, None] if r.ndim else r
    ok = np.all(np.abs(dv) < c.R * rr, axis=1) & np.all(np.abs(dx) < (c.R * rr) ** 3, axis=1)
    r2 = r ** 2
    ok &= (dt > -(c.Delta + c.R ** 2) * r2) & (dt < -c.Delta * r2)
    return ok


def _q_inside(domain, bases, r):
    q = BoxSpec(GroupPoint(np.zeros(domain.n), np.zeros(domain.n), 0.0), 1.0, BoxKind.UNIT_Q)
    corners = reference_corners(q)
    r = np.broadcast_to(np.asarray(r, dtype=float), bases.shape[:1])
    pts = compose_array(bases[:, None, :], dilate_array(r[:, None], corners[None]))
    return np.all(box_membership(domain, pts, closed=True), axis=-1)


def _last_radius(base, end, tau, r0, c: HarnackConstants, domain):
    b = base[None, :]
    e = end[None, :]

    def ok(r):
        return bool(_in_qminus(b, r, e, c)[0] and _q_inside(domain, b, r)[0])

    if ok(r0):
        return r0
    lo = min(math.sqrt(tau / c.kminus_depth), r0)
    if not ok(lo):
        return None
    hi = r0
    while hi - lo > 1e-8 * hi:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


def build_chain(domain: BoxSpec, curve: ControlCurve, constants: HarnackConstants,
                max_retries: int = MAX_RETRIES) -> HarnackChain:
    """Partition ``curve`` into a Harnack chain inside ``domain``.

    Parameters
    ----------
    domain : BoxSpec
        Convex working domain; the curve must stay in its interior.
    curve : ControlCurve
    constants : HarnackConstants

    Returns
    -------
    HarnackChain

    Notes
    -----
    With ``delta0`` from :func:`choose_delta0`, interior steps use the
    radius ``sqrt(delta0 / (Delta + R^2/2))`` (at most ``r0``), which puts
    the next node on the ``K-`` slice time level.  The final, shorter step
    takes the largest radius ``<= r0`` that still captures the endpoint.
    Failed membership or containment halves ``delta0`` and starts over.
    """
    r0 = min_reach_radius(domain, curve)
    delta0 = choose_delta0(curve, constants, r0)
    T = curve.horizon
    c = constants
    last_fail = None
    for attempt in range(1, max_retries + 2):
        k = max(1, math.ceil(T / delta0 - 1e-12))
        s = np.minimum(np.arange(k + 1) * delta0, T)
        s[-1] = T
        nodes = _states_at(curve, s)
        rho = min(math.sqrt(delta0 / c.kminus_depth), r0)
        radii = np.full(k, rho)
        failed = None
        if k > 1:
            ok = _in_qminus(nodes[:-2], rho, nodes[1:-1], c) & _q_inside(domain, nodes[:-2], rho)
            if not ok.all():
                failed = int(np.argmin(ok))
        if failed is None:
            tau = T - s[-2]
            r1 = _last_radius(nodes[-2], nodes[-1], tau, r0, c, domain)
            if r1 is None:
                failed = k - 1
            else:
                radii[-1] = r1
        if failed is None:
            lt = _log_sum_powers(c.M, k)
            return HarnackChain(nodes, s, radii, c.M, c,
                                math.exp(lt) if lt < 709.0 else math.inf, lt,
                                delta0, r0, attempt, curve)
        last_fail = failed
        log.debug("chain step %d failed with delta0=%g; halving", failed, delta0)
        delta0 /= 2
    raise ChainConstructionError(
        f"step {last_fail} still fails after {max_retries} halvings", step=last_fail)


# -- covers ----------------------------------------------------------------

@dataclass
class CoverEntry:
    chain: HarnackChain
    neighborhood: BoxSpec
    covers: list


def cover_compact(domain: BoxSpec, z0: GroupPoint, K_points, constants: HarnackConstants,
                  budget: SearchBudget | None = None):
    """Greedy finite cover of ``K_points`` by chain end neighbourhoods.

    Points are processed in input order; each uncovered point gets a chain
    from ``z0`` along a verified witness curve, and every remaining point
    inside the chain's terminal neighbourhood is marked covered.

    Returns
    -------
    cover : list of CoverEntry
    log_C_K : float
        ``log`` of the largest chain constant (``C_K`` itself may overflow).
    """
    pts = list(K_points)
    covered = [False] * len(pts)
    cover = []
    for i, p in enumerate(pts):
        if covered[i]:
            continue
        res = attainable_membership(domain, z0, p, budget)
        if res.status is not AttainabilityStatus.REACHABLE:
            raise AttainabilityError(
                f"K point {i} {p} is {res.status.value} from {z0}: {res.reason}")
        chain = build_chain(domain, res.witness, constants)
        U = chain.neighborhood
        idx = [j for j in range(i, len(pts)) if not covered[j]
               and (j == i or box_membership(U, pts[j]))]
        for j in idx:
            covered[j] = True
        cover.append(CoverEntry(chain, U, idx))
    if not cover:
        raise ValidationError("K_points is empty")
    return cover, max(e.chain.log_total_constant for e in cover)
