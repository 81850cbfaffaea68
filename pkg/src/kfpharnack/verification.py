"""Empirical checks of Harnack-type statements on computed solutions.

* :func:`pullback_operator` transports an operator along
  ``Phi(z) = z0 o d_r(z)`` so that ``u o Phi`` solves the new operator.
* :func:`harnack_ratio` measures ``sup_{Q-} u / (inf_{Q+} u + f_sup)``.
* :func:`empirical_M` takes the largest ratio over a seeded ensemble of
  rough-coefficient problems.
* :func:`geometric_harnack_check` and :func:`strong_max_principle_check`
  compare point values with chain constants built along admissible
  curves.

Chain constants grow like ``M^k`` and overflow quickly, so comparisons
are carried out with logarithms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .chain import cover_compact
from .controllability import AttainabilityStatus, SearchBudget, attainable_membership
from .errors import DomainError, KFPError, MisuseError, ValidationError, ValidityError
from .group import (
    BoxKind,
    BoxSpec,
    GroupPoint,
    HarnackConstants,
    compose_array,
    dilate_array,
    inverse,
    dilate,
)
from .solver import (
    ConstantField,
    GridSpec,
    OperatorSpec,
    PiecewiseConstantField,
    SolutionField,
    box_inside,
    evaluate,
    field_from_function,
    solve,
    sup_inf_on_box,
)

__all__ = [
    "pullback_operator",
    "inverse_pullback_params",
    "pullback_solution",
    "HarnackReport",
    "harnack_ratio",
    "EnsembleSpec",
    "MStatistics",
    "ensemble_member",
    "empirical_M",
    "GeometricReport",
    "geometric_harnack_check",
    "MaxPrincipleReport",
    "strong_max_principle_check",
    "sample_attainable",
]

M_FLOOR = 1.0 + 1e-9


# -- pullback --------------------------------------------------------------

class PulledBackField:
    """``scale * field(z0 o d_r(z))``."""

    def __init__(self, base, z0: GroupPoint, r: float, scale: float = 1.0):
        self.base = base
        self.z0 = z0
        self.r = float(r)
        self.scale = float(scale)
        self.time_dependent = True

    def __call__(self, v, x, t):
        v = np.asarray(v, dtype=float)
        x = np.asarray(x, dtype=float)
        t = np.asarray(t, dtype=float)
        lead = np.broadcast_shapes(v.shape[:-1], x.shape[:-1], t.shape)
        n = self.z0.n
        z = np.concatenate([np.broadcast_to(v, lead + (n,)), np.broadcast_to(x, lead + (n,)),
                            np.broadcast_to(t, lead)[..., None]], axis=-1)
        w = compose_array(self.z0.as_array(), dilate_array(self.r, z))
        return self.scale * np.asarray(self.base(w[..., :n], w[..., n:2 * n], w[..., 2 * n]))

    def to_json(self):
        inner = self.base.to_json() if hasattr(self.base, "to_json") else {"type": "callable"}
        return {"type": "pullback", "z0": self.z0.to_json(), "r": self.r,
                "scale": self.scale, "field": inner}


def _pull(fld, z0, r, scale):
    if isinstance(fld, ConstantField):
        return ConstantField(scale * fld.value)
    return PulledBackField(fld, z0, r, scale)


def pullback_operator(op: OperatorSpec, z0: GroupPoint, r: float) -> OperatorSpec:
    """Operator solved by ``u(z0 o d_r z)`` whenever ``u`` solves ``op``.

    ``A`` is precomposed with ``Phi(z) = z0 o d_r(z)``; the drift and the
    source pick up the factors ``r`` and ``r^2`` that the chain rule
    produces.  ``lam`` and ``Lam`` are unchanged.
    """
    if not r > 0:
        raise ValidationError(f"r must be positive, got {r}")
    if z0.n != op.n:
        raise ValidationError("z0 and operator dimensions differ")
    return OperatorSpec(op.n, _pull(op.A, z0, r, 1.0), _pull(op.b, z0, r, r),
                        _pull(op.f, z0, r, r * r), op.lam, op.Lam,
                        label=f"pullback({op.label})")


def inverse_pullback_params(z0: GroupPoint, r: float):
    """``(z0', r')`` with ``z0' o d_{r'} = (z0 o d_r)^{-1}``."""
    return dilate(1.0 / r, inverse(z0)), 1.0 / r


def pullback_solution(u: SolutionField, z0: GroupPoint, r: float, grid: GridSpec,
                      nt: int = 65) -> SolutionField:
    """Materialise ``u(z0 o d_r z)`` on ``grid`` by interpolation of ``u``."""
    n = u.n

    def fn(V, X, T):
        z = np.concatenate([V, X, T[..., None]], axis=-1)
        w = compose_array(z0.as_array(), dilate_array(r, z))
        if not np.all(u.contains(w)):
            raise DomainError("transformed grid leaves the solution domain")
        return u(w)

    out = field_from_function(grid, fn, np.linspace(*grid.t_range, nt))
    out.meta = {"source": "pullback", "z0": z0.to_json(), "r": r, "n": n}
    return out


# -- Harnack ratio ---------------------------------------------------------

@dataclass
class HarnackReport:
    solution_id: str
    box_minus: BoxSpec
    box_plus: BoxSpec
    sup_minus: float
    inf_minus: float
    inf_plus: float
    f_sup: float
    ratio: float
    samples: tuple
    constants: HarnackConstants

    def to_json(self) -> dict:
        return {
            "solution_id": self.solution_id,
            "box_minus": self.box_minus.to_json(),
            "box_plus": self.box_plus.to_json(),
            "sup_minus": self.sup_minus,
            "inf_minus": self.inf_minus,
            "inf_plus": self.inf_plus,
            "f_sup": self.f_sup,
            "ratio": self.ratio,
            "samples": list(self.samples),
            "constants": self.constants.to_json(),
        }


def harnack_ratio(u: SolutionField, f_sup: float, z0: GroupPoint, r: float,
                  constants: HarnackConstants, solution_id: str = "",
                  lattice: int | None = None, nodes: bool = True,
                  neg_tol: float = 1e-12) -> HarnackReport:
    """``sup_{Q-_r(z0)} u / (inf_{Q+_r(z0)} u + f_sup)``.

    Raises
    ------
    DomainError
        If either box is not contained in the solution domain.
    ValidityError
        If ``u`` takes negative values on either box.
    """
    qm = BoxSpec(z0, r, BoxKind.Q_MINUS, constants)
    qp = BoxSpec(z0, r, BoxKind.Q_PLUS, constants)
    for q in (qm, qp):
        if not box_inside(u, q):
            raise DomainError(f"{q.kind.value} box of radius {r} at {z0} leaves the grid")
    sm, im, nm = sup_inf_on_box(u, qm, lattice, nodes, return_samples=True)
    sp, ip, npl = sup_inf_on_box(u, qp, lattice, nodes, return_samples=True)
    scale = max(1.0, abs(sm), abs(sp))
    if min(im, ip) < -neg_tol * scale:
        raise ValidityError(f"solution is negative on the boxes (min {min(im, ip):.3g})")
    im, ip = max(im, 0.0), max(ip, 0.0)
    denom = ip + f_sup
    ratio = sm / denom if denom > 0 else (math.inf if sm > 0 else 1.0)
    return HarnackReport(solution_id, qm, qp, sm, im, ip, float(f_sup), ratio,
                         (nm, npl), constants)


# -- ensembles -------------------------------------------------------------

@dataclass(frozen=True)
class EnsembleSpec:
    """Seeded family of rough-coefficient problems around ``Q_r(z0)``.

    ``A`` is a random cellwise field with eigenvalues drawn log-uniformly in
    ``[raw_lam, raw_Lam]`` and clamped to ``[lam, Lam]``; the same raw draw
    serves every ``[lam, Lam]``.
    """

    runs: int = 20
    n: int = 1
    lam: float = 0.5
    Lam: float = 2.0
    raw_lam: float = 0.125
    raw_Lam: float = 8.0
    b_bound: float = 0.5
    cells: int = 8
    N: int = 65
    margin: float = 0.25
    bumps: int = 4
    floor: float = 0.05
    kind: str = "rough"

    def to_json(self) -> dict:
        return dict(self.__dict__)


def _solve_box(z0: GroupPoint, r: float, margin: float):
    """Axis box strictly containing ``Q_r(z0)`` and its shear."""
    vmax = float(np.max(np.abs(z0.v)))
    hv = r * (1 + margin)
    hx = r ** 3 * (1 + margin) + r ** 2 * vmax
    v_range = (float(np.min(z0.v)) - hv, float(np.max(z0.v)) + hv)
    x_range = (float(np.min(z0.x)) - hx, float(np.max(z0.x)) + hx)
    t_range = (z0.t - r ** 2 * (1 + margin / 5), z0.t)
    return v_range, x_range, t_range


def ensemble_member(spec: EnsembleSpec, run: int, seed: int, z0: GroupPoint, r: float,
                    constants: HarnackConstants):
    """Operator, grid and initial data of run ``run``."""
    n = z0.n
    v_range, x_range, t_range = _solve_box(z0, r, spec.margin)
    grid = GridSpec(n, v_range, x_range, t_range, spec.N, spec.N)
    ss = np.random.SeedSequence([int(seed), int(run)])
    s_a, s_b, s_u = (int(x.generate_state(1)[0]) for x in ss.spawn(3))
    lo = grid.lo()
    hi = grid.hi()
    if spec.kind == "constant":
        op = OperatorSpec.constant(n, A=1.0, lam=spec.lam, Lam=spec.Lam, label=f"run{run}")
        return op, grid, (lambda V, X: np.ones(grid.shape))
    raw = PiecewiseConstantField.random_matrix(n, lo, hi, spec.cells, spec.raw_lam,
                                               spec.raw_Lam, s_a)
    mats = raw.values
    w, Q = np.linalg.eigh(mats)
    w = np.clip(w, spec.lam, spec.Lam)
    mats = np.einsum("...ij,...j,...kj->...ik", Q, w, Q)
    A = PiecewiseConstantField(lo, hi, mats, n)
    b = PiecewiseConstantField.random_vector(n, lo, hi, spec.cells, spec.b_bound, s_b)
    op = OperatorSpec(n, A, b, 0.0, spec.lam, spec.Lam, label=f"run{run}")
    rng = np.random.default_rng(s_u)
    centers = rng.uniform(lo[:2 * n], hi[:2 * n], (spec.bumps, 2 * n))
    widths = rng.uniform(0.15, 0.5, (spec.bumps, 2 * n)) * (hi[:2 * n] - lo[:2 * n]) / 2
    amps = rng.uniform(0.2, 1.0, spec.bumps)

    def initial(V, X):
        Z = np.concatenate([V, X], axis=-1)
        out = np.full(V.shape[:-1], spec.floor)
        for c, wd, a in zip(centers, widths, amps):
            out += a * np.exp(-0.5 * np.sum(((Z - c) / wd) ** 2, axis=-1))
        return out

    return op, grid, initial


@dataclass
class MStatistics:
    max_ratio: float
    quantiles: dict
    reports: list
    seed: int
    spec: EnsembleSpec
    solutions: list = field(default_factory=list, repr=False)

    @property
    def M_hat(self) -> float:
        """Estimate usable as a chain constant (at least ``1 + 1e-9``)."""
        return max(self.max_ratio, M_FLOOR)

    def to_json(self) -> dict:
        return {"max_ratio": self.max_ratio, "M_hat": self.M_hat, "quantiles": self.quantiles,
                "seed": self.seed, "spec": self.spec.to_json(),
                "reports": [r.to_json() for r in self.reports]}


def empirical_M(spec: EnsembleSpec, constants: HarnackConstants, seed: int = 0,
                z0: GroupPoint | None = None, r: float = 1.0,
                keep_solutions: bool = False) -> MStatistics:
    """Largest Harnack ratio over a seeded ensemble.

    Each run solves a problem with ``f = 0`` on a grid enclosing
    ``Q_r(z0)`` and measures :func:`harnack_ratio` there.  The maximum is a
    lower bound for any admissible ``M``.
    """
    if spec.runs < 1:
        raise ValidationError("ensemble needs at least one run")
    z0 = z0 or GroupPoint(np.zeros(spec.n), np.zeros(spec.n), 0.0)
    reports, sols = [], []
    for run in range(spec.runs):
        op, grid, initial = ensemble_member(spec, run, seed, z0, r, constants)
        try:
            u = solve(op, grid, initial)
        except KFPError as exc:
            raise type(exc)(f"run {run}: {exc}") from exc
        reports.append(harnack_ratio(u, 0.0, z0, r, constants, solution_id=f"run{run}"))
        if keep_solutions:
            sols.append(u)
    ratios = np.array([rep.ratio for rep in reports])
    q = {str(p): float(np.quantile(ratios, p)) for p in (0.0, 0.25, 0.5, 0.75, 0.9, 1.0)}
    return MStatistics(float(ratios.max()), q, reports, seed, spec, sols)


# -- geometric Harnack and strong maximum principle ------------------------

def _log_pos(x):
    return math.log(x) if x > 0 else -math.inf


@dataclass
class GeometricReport:
    holds: bool
    sup_K: float
    u_z0: float
    f_sup: float
    log_C_K: float
    log_margin: float
    cover_size: int
    chain_lengths: list
    M: float

    @property
    def C_K(self) -> float:
        return math.exp(self.log_C_K) if self.log_C_K < 709 else math.inf

    @property
    def margin(self) -> float:
        """``C_K (u(z0) + f_sup) - sup_K u`` (may be ``inf``)."""
        lb = self.log_C_K + _log_pos(self.u_z0 + self.f_sup)
        bound = math.exp(lb) if lb < 709 else math.inf
        return bound - self.sup_K

    def to_json(self) -> dict:
        return {"holds": self.holds, "sup_K": self.sup_K, "u_z0": self.u_z0,
                "f_sup": self.f_sup, "log_C_K": self.log_C_K, "C_K": self.C_K,
                "margin": self.margin, "log_margin": self.log_margin,
                "cover_size": self.cover_size, "chain_lengths": self.chain_lengths,
                "M": self.M}


def geometric_harnack_check(u: SolutionField, f_sup: float, z0: GroupPoint, K_points,
                            domain: BoxSpec, constants: HarnackConstants,
                            budget: SearchBudget | None = None) -> GeometricReport:
    """Check ``max_K u <= C_K (u(z0) + f_sup)`` with ``C_K`` from a chain cover.

    ``log_margin`` is ``log(C_K (u(z0) + f_sup)) - log(sup_K u)``.
    """
    pts = list(K_points)
    cover, log_ck = cover_compact(domain, z0, pts, constants, budget)
    vals = np.array([evaluate(u, p) for p in pts])
    u0 = evaluate(u, z0)
    sup_k = float(vals.max())
    lhs = _log_pos(sup_k)
    rhs = log_ck + _log_pos(u0 + f_sup)
    holds = bool(sup_k <= 0 or lhs <= rhs)
    log_margin = rhs - lhs if lhs > -math.inf else math.inf
    return GeometricReport(holds, sup_k, float(u0), float(f_sup), log_ck, log_margin,
                           len(cover), [e.chain.k for e in cover], constants.M)


def sample_attainable(domain: BoxSpec, z0: GroupPoint, count: int, seed: int = 0,
                      budget: SearchBudget | None = None, max_draws: int | None = None):
    """Up to ``count`` points verified reachable from ``z0`` inside ``domain``.

    Candidates are scrambled Sobol points of the domain below ``t0``.
    """
    n = domain.n
    hv, hx, t_lo, t_hi = domain.bounds()
    t_hi = min(t_hi, z0.t)
    if not t_hi > t_lo:
        raise DomainError("domain has no time slab below z0")
    b = domain.base
    sampler = qmc.Sobol(d=2 * n + 1, scramble=True, seed=seed)
    max_draws = max_draws or 16 * count
    m = int(math.ceil(math.log2(max(2, max_draws))))
    u = sampler.random_base2(m)[:max_draws]
    out = []
    for row in u:
        t = t_lo + (t_hi - t_lo) * row[-1]
        if not t < z0.t:
            continue
        v = b.v + hv * (2 * row[:n] - 1)
        x = b.x + (t - b.t) * b.v + hx * (2 * row[n:2 * n] - 1)
        z = GroupPoint(v, x, t)
        res = attainable_membership(domain, z0, z, budget)
        if res.status is AttainabilityStatus.REACHABLE:
            out.append(z)
            if len(out) == count:
                break
    return out


@dataclass
class MaxPrincipleReport:
    passes: bool
    u_z0: float
    sup_u: float
    max_sampled: float
    log_C_K: float
    max_violation: float
    points: int
    cover_size: int

    def to_json(self) -> dict:
        return dict(self.__dict__)


def strong_max_principle_check(u: SolutionField, z0: GroupPoint, domain: BoxSpec,
                               tol: float, constants: HarnackConstants, count: int = 24,
                               seed: int = 0, budget: SearchBudget | None = None,
                               points=None) -> MaxPrincipleReport:
    """Check ``u(z) <= C_K u(z0)`` on sampled points of the attainable set.

    Requires ``u(z0) <= tol * sup u``.  ``max_violation`` is
    ``max(u(z) - C_K u(z0), 0)`` over the sample.
    """
    u0 = evaluate(u, z0)
    sup_u = float(np.max(u.values))
    if u0 > tol * sup_u:
        raise MisuseError(f"u(z0) = {u0:.3g} exceeds tol * sup u = {tol * sup_u:.3g}")
    if float(np.min(u.values)) < -1e-12 * max(1.0, sup_u):
        raise ValidityError("solution takes negative values")
    pts = list(points) if points is not None else sample_attainable(
        domain, z0, count, seed, budget)
    if not pts:
        raise ValidationError("no attainable points were found")
    cover, log_ck = cover_compact(domain, z0, pts, constants, budget)
    vals = np.array([evaluate(u, p) for p in pts])
    lb = log_ck + _log_pos(max(u0, 0.0))
    bound = math.exp(lb) if lb < 709 else math.inf
    viol = float(np.max(np.maximum(vals - bound, 0.0)))
    return MaxPrincipleReport(viol <= 0.0, float(u0), sup_u, float(vals.max()), log_ck,
                              viol, len(pts), len(cover))
