"""Acceptance suite: one PASS/FAIL line per criterion.

Run alone with ``pytest tests/test_acceptance.py -v``; the lines are
printed as each criterion finishes and again in the terminal summary.
"""
import math
import time

import numpy as np
import pytest

from kfpharnack.chain import build_chain, default_constants
from kfpharnack.cli import run as cli_run
from kfpharnack.controllability import (
    AttainabilityStatus,
    KolmogorovStructure,
    attainable_membership,
    detect_block_structure,
    kalman_rank,
    minimal_energy_control,
)
from kfpharnack.group import (
    GroupPoint,
    compose_array,
    dilate_array,
    inverse_array,
    unit_box,
)
from kfpharnack.oracles import (
    box_density_estimate,
    chapman_kolmogorov_error,
    gamma_L0,
    gamma_array,
    gamma_pde_residual,
    langevin_mc,
)
from kfpharnack.solver import (
    GridSpec,
    OperatorSpec,
    PiecewiseConstantField,
    field_from_function,
    solve,
)
from kfpharnack.verification import (
    EnsembleSpec,
    empirical_M,
    geometric_harnack_check,
    harnack_ratio,
    pullback_solution,
    sample_attainable,
    strong_max_principle_check,
)

from test_controllability import qp_energy

ORIGIN = GroupPoint([0.0], [0.0], 0.0)


def P(*c):
    return GroupPoint.from_array(c)


class Criterion:
    """Collects named sub-checks, then reports and asserts once."""

    def __init__(self, record, number, title, limit):
        self.record, self.number, self.title, self.limit = record, number, title, limit
        self.checks = []
        self.start = time.perf_counter()

    def check(self, name, ok, detail=""):
        self.checks.append((name, bool(ok), detail))

    def finish(self):
        elapsed = time.perf_counter() - self.start
        self.check("runtime", elapsed < self.limit, f"{elapsed:.1f}s < {self.limit:g}s")
        ok = all(c[1] for c in self.checks)
        failed = [c for c in self.checks if not c[1]]
        head = f"{'PASS' if ok else 'FAIL'} criterion {self.number:2d} ({self.title}) [{elapsed:.1f}s]"
        parts = [f"{n}: {d}" if d else n for n, _, d in (failed or self.checks)]
        self.record(head + (" failed: " if failed else " ") + "; ".join(parts))
        assert ok, "; ".join(f"{n} ({d})" for n, _, d in failed)


@pytest.fixture(scope="module")
def ensemble():
    # seeded 20-run ensemble shared by criteria 9 and 10
    spec = EnsembleSpec(runs=20)
    t = time.perf_counter()
    stats = empirical_M(spec, default_constants(M=2.0), seed=0, keep_solutions=True)
    return stats, default_constants(M=stats.M_hat), time.perf_counter() - t


# 1 ------------------------------------------------------------------------

def test_criterion_01_group_algebra(record):
    c = Criterion(record, 1, "group and dilation algebra", 1.0)
    rng = np.random.default_rng(1)
    a, b, d = (rng.uniform(-2, 2, (1000, 3)) for _ in range(3))
    r, s = rng.uniform(0.2, 3, (2, 1000))
    e = np.zeros(3)
    errs = {
        "associativity": compose_array(compose_array(a, b), d) - compose_array(a, compose_array(b, d)),
        "identity": np.concatenate([compose_array(a, e) - a, compose_array(e, a) - a]),
        "inverse": np.concatenate([compose_array(a, inverse_array(a)),
                                   compose_array(inverse_array(a), a)]),
        "dilation distributivity": dilate_array(r, compose_array(a, b))
        - compose_array(dilate_array(r, a), dilate_array(r, b)),
        "dilation homomorphism": dilate_array(r, dilate_array(s, a)) - dilate_array(r * s, a),
    }
    for name, err in errs.items():
        m = float(np.abs(err).max())
        c.check(name, m <= 1e-10, f"max {m:.1e}")
    c.finish()


# 2 ------------------------------------------------------------------------

def test_criterion_02_controllability(record):
    c = Criterion(record, 2, "Kalman rank and block structure", 1.0)
    for n in range(1, 5):
        k = KolmogorovStructure.galilean(n)
        rank = kalman_rank(k.C(), k.B)
        bs = detect_block_structure(k.B)
        c.check(f"n={n} rank", rank == 2 * n, f"rank {rank}")
        c.check(f"n={n} blocks", bs is not None and bs.blocks == (n, n) and bs.homogeneous,
                f"{bs}")
    c.finish()


# 3 ------------------------------------------------------------------------

def test_criterion_03_minimal_energy(record):
    c = Criterion(record, 3, "minimal-energy control", 10.0)
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(100):
        z0 = P(*rng.uniform(-1, 1, 2), 0.0)
        z1 = P(*rng.uniform(-1, 1, 2), -rng.uniform(0.2, 2.0))
        _, closed = minimal_energy_control(z0, z1)
        oracle = qp_energy(z0, z1, 1000)
        worst = max(worst, abs(closed - oracle) / oracle)
    c.check("100 targets vs QP oracle at K=1000", worst <= 1e-3, f"max rel {worst:.1e}")
    # (1, -1, -1) is the mirror target under the x(s) = x0 - int v convention
    for target, want in (((1, 1, -1), 4.0), ((0, 1, -1), 12.0), ((1, -1, -1), 4.0)):
        _, got = minimal_energy_control(ORIGIN, P(*target))
        c.check(f"E{target}={want:g}", abs(got - want) <= 1e-9 * want, f"got {got:.12g}")
    c.finish()


# 4 ------------------------------------------------------------------------

def test_criterion_04_attainable_set(record):
    c = Criterion(record, 4, "attainable set of the unit box", 60.0)
    q = unit_box()
    tol = 1e-6
    g = np.linspace(-1, 1, 21)
    tg = np.linspace(-1, 0, 21)
    counts = {"REACHABLE": 0, "UNREACHABLE": 0, "UNDECIDED": 0, "skipped": 0}
    contradictions = bad_witness = 0
    for t in tg:
        for v in g:
            for x in g:
                near = (abs(abs(x) - abs(t)) <= tol or 1 - abs(v) <= tol or 1 - abs(x) <= tol
                        or t + 1 <= tol or abs(t) <= tol)
                if near:
                    counts["skipped"] += 1
                    continue
                res = attainable_membership(q, ORIGIN, P(v, x, t))
                counts[res.status.value] += 1
                inside = abs(x) < abs(t)
                if res.status is AttainabilityStatus.REACHABLE:
                    contradictions += not inside
                    w = res.witness
                    if not (w.end.allclose(P(v, x, t), atol=1e-9)
                            and np.all(np.abs(w.states[1:, :2]) < 1)
                            and np.all((w.states[1:, 2] > -1) & (w.states[1:, 2] < 0))):
                        bad_witness += 1
                elif res.status is AttainabilityStatus.UNREACHABLE:
                    contradictions += inside
    c.check("contradictions", contradictions == 0, f"{contradictions}")
    c.check("witnesses verified", bad_witness == 0, f"{bad_witness} bad")
    c.check("decided", counts["UNDECIDED"] == 0,
            ", ".join(f"{k} {v}" for k, v in counts.items()))
    c.finish()


# 5 ------------------------------------------------------------------------

def _box_average(s, width, sigma2=0.5):
    """Exact mean of Gamma(., s) over the square of side ``width`` at 0."""
    g, w = np.polynomial.legendre.leggauss(40)
    h = width / 2
    vv, xx = np.meshgrid(h * g, h * g, indexing="ij")
    pts = np.stack([vv, xx, np.full_like(vv, s)], -1)
    return float(np.sum(np.outer(w, w) * gamma_array(pts, np.zeros(3), sigma2))) / 4


def test_criterion_05_fundamental_solution(record):
    c = Criterion(record, 5, "fundamental-solution oracle", 60.0)
    g = gamma_L0(P(0, 0, 1), ORIGIN, 0.5)
    c.check("closed form = sqrt(3)/pi", abs(g - math.sqrt(3) / math.pi) <= 1e-15,
            f"{g:.15f}")
    smp = langevin_mc(ORIGIN, 1.0, 1_000_000, seed=5)
    width = 0.05
    est, se = box_density_estimate(smp, [0.0, 0.0], width)
    avg = _box_average(1.0, width)
    c.check("MC density within 3 SE", abs(est - g) <= 3 * se,
            f"|{est:.5f} - {g:.5f}| = {abs(est - g):.1e}, SE {se:.1e}")
    c.check("MC box mass within 3 SE of exact box mean", abs(est - avg) <= 3 * se,
            f"box bias {abs(avg - g):.1e}")
    ck = max(chapman_kolmogorov_error(P(-0.3, 0.4, 1.2), P(0.2, 0.1, 0.0), tm)
             for tm in (0.05, 0.3, 0.6, 0.9, 1.15))
    c.check("Chapman-Kolmogorov", ck <= 1e-4, f"{ck:.1e}")
    rng = np.random.default_rng(5)
    pts = np.column_stack([rng.uniform(-1, 1, 50), rng.uniform(-1, 1, 50),
                           rng.uniform(0.5, 2, 50)])
    res = [float(np.abs(gamma_pde_residual(pts, h)).max()) for h in (2e-2, 1e-2, 5e-3)]
    orders = [math.log2(a / b) for a, b in zip(res, res[1:])]
    c.check("PDE residual second order", all(1.8 <= o <= 2.2 for o in orders),
            "orders " + ", ".join(f"{o:.2f}" for o in orders))
    c.finish()


# 6 ------------------------------------------------------------------------

def _gamma_slice(t):
    def f(V, X):
        T = np.full(V.shape[:-1] + (1,), t)
        return gamma_array(np.concatenate([V, X, T], -1), np.zeros(3), 0.5)
    return f


def test_criterion_06_solver_accuracy(record):
    c = Criterion(record, 6, "solver accuracy", 300.0)
    errs = {}
    for N in (128, 256):
        g = GridSpec(1, (-4, 4), (-4, 4), (0.1, 0.5), N, N)
        u = solve(OperatorSpec.constant(1, A=0.5), g, _gamma_slice(0.1))
        V, X = g.mesh()
        exact = _gamma_slice(0.5)(V, X)
        m = exact >= 0.01 * exact.max()
        errs[N] = float(np.max(np.abs(u.values[-1][m] - exact[m]) / exact[m]))
        c.check(f"N={N} max principle and non-negativity",
                u.meta["max_principle_ok"] and u.meta["nonnegative_ok"])
    c.check("max rel error <= 2% at 256x256", errs[256] <= 0.02, f"{errs[256]:.3g}")
    ratio = errs[128] / errs[256]
    c.check("refinement ratio >= 1.8", ratio >= 1.8,
            f"{errs[128]:.3g} -> {errs[256]:.3g} = {ratio:.2f}")
    c.finish()


# 7 ------------------------------------------------------------------------

def _reverify_chain(ch, consts):
    """Step membership and containment from explicit inequalities (n = 1)."""
    R, D = consts.R, consts.Delta
    b, z, r = ch.node_array[:-1], ch.node_array[1:], ch.radii
    bv, bx, bt = b.T
    zv, zx, zt = z.T
    # reference coordinates d_{1/r}(b^{-1} o z)
    wv = (zv - bv) / r
    wx = (zx - bx - (zt - bt) * bv) / r ** 3
    wt = (zt - bt) / r ** 2
    member = (np.abs(wv) < R) & (np.abs(wx) < R ** 3) & (wt > -D - R ** 2) & (wt < -D)
    inside = np.ones_like(member)
    for cv in (-1, 1):
        for cx in (-1, 1):
            for ct in (-1, 0):
                v = bv + r * cv
                x = bx + r ** 3 * cx + r ** 2 * ct * bv
                t = bt + r ** 2 * ct
                inside &= (np.abs(v) <= 1) & (np.abs(x) <= 1) & (t >= -1) & (t <= 0)
    return bool(np.all(member & inside))


def test_criterion_07_chain_soundness(record):
    c = Criterion(record, 7, "Harnack chain soundness", 120.0)
    q = unit_box()
    consts = default_constants(M=3.0)
    rng = np.random.default_rng(7)
    pairs = ok = const_ok = 0
    worst = 0.0
    while pairs < 50:
        t0 = -rng.uniform(0.05, 0.4)
        start = P(rng.uniform(-0.5, 0.5), rng.uniform(-0.8, 0.8) * abs(t0), t0)
        t1 = t0 - rng.uniform(0.1, 0.5)
        target = P(rng.uniform(-0.5, 0.5), rng.uniform(-0.8, 0.8) * abs(t1), t1)
        res = attainable_membership(q, start, target)
        if res.status is not AttainabilityStatus.REACHABLE:
            continue
        pairs += 1
        ch = build_chain(q, res.witness, consts)
        ok += _reverify_chain(ch, consts) and ch.nodes[-1].allclose(target, atol=1e-9)
        M, k = consts.M, ch.k
        closed = k * math.log(M) + math.log(M / (M - 1)) + math.log1p(-M ** -k)
        err = abs(ch.log_total_constant - closed) / max(1.0, abs(closed))
        worst = max(worst, err)
        const_ok += err <= 1e-9
    c.check("chains re-verified", ok == 50, f"{ok}/50")
    c.check("total constant = geometric sum", const_ok == 50, f"max rel err {worst:.1e}")
    c.finish()


# 8 ------------------------------------------------------------------------

def test_criterion_08_pullback_invariance(record):
    c = Criterion(record, 8, "invariance of computed Harnack ratios", 300.0)
    consts = default_constants(M=3.0)
    g = GridSpec(1, (-1.2, 1.2), (-1.5, 1.5), (-1.3, 0.0), 97, 97)
    lo, hi = g.lo(), g.hi()
    A = PiecewiseConstantField.random_matrix(1, lo, hi, 8, 0.5, 2.0, 8, time_cells=3)
    b = PiecewiseConstantField.random_vector(1, lo, hi, 8, 0.5, 9, time_cells=3)
    op = OperatorSpec(1, A, b, 0.0, 0.5, 2.0)

    def initial(V, X):
        return 0.05 + np.exp(-((V[..., 0] - 0.3) ** 2 + (X[..., 0] + 0.2) ** 2) / 0.3)

    u = solve(op, g, initial)
    c.check("solver bounds", u.meta["max_principle_ok"] and u.meta["nonnegative_ok"])
    # unit-scale grid whose nodes contain the reference lattices of both boxes
    R = consts.R
    unit = GridSpec(1, (-1.25 * R, 1.25 * R), (-1.25 * R ** 3, 1.25 * R ** 3),
                    (-consts.Delta - R ** 2, 0.0), 11, 11)
    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(10):
        z0 = P(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), -rng.uniform(0, 0.5))
        r = rng.uniform(0.3, 1.0)
        direct = harnack_ratio(u, 0.0, z0, r, consts, nodes=False)
        pulled = pullback_solution(u, z0, r, unit, nt=25)
        moved = harnack_ratio(pulled, 0.0, ORIGIN, 1.0, consts, nodes=False)
        worst = max(worst, abs(direct.ratio - moved.ratio) / direct.ratio)
    c.check("10 random (z0, r)", worst <= 1e-3, f"max rel diff {worst:.1e}")
    c.finish()


# 9 ------------------------------------------------------------------------

def _kernel_field(pole):
    pa = pole.as_array()
    g = GridSpec(1, (-1.1, 1.1), (-1.2, 1.2), (-1.05, 0.0), 45, 45)
    return field_from_function(g, lambda V, X, T: gamma_array(
        np.concatenate([V, X, T[..., None]], -1), pa, 0.5), nt=65)


def test_criterion_09_geometric_harnack(record, ensemble):
    stats, consts, cost = ensemble
    c = Criterion(record, 9, "geometric Harnack consequence", 600.0 - cost)
    c.check("ensemble ratios finite", all(math.isfinite(r.ratio) for r in stats.reports),
            f"M_hat {stats.M_hat:.4g} from 20 runs in {cost:.0f}s")
    q = unit_box()
    z0 = P(0, 0, -0.05)
    K = sample_attainable(q, z0, 12, seed=9)
    margins = []
    for pole in (P(0, 0, -2), P(0.3, -0.2, -1.5), P(-0.5, 0.4, -3)):
        rep = geometric_harnack_check(_kernel_field(pole), 0.0, z0, K, q, consts)
        c.check(f"Gamma pole {pole.to_json()}", rep.holds and rep.log_margin >= 0,
                f"log margin {rep.log_margin:.3g}")
        margins.append(rep.log_margin)
    rough = 0
    for u in stats.solutions[:10]:
        rep = geometric_harnack_check(u, 0.0, z0, K, q, consts)
        rough += rep.holds and rep.log_margin >= 0
        margins.append(rep.log_margin)
    c.check("10 rough ensemble solutions", rough == 10, f"{rough}/10, min log margin "
            f"{min(margins):.3g}, log C_K {rep.log_C_K:.4g}")
    c.finish()


# 10 -----------------------------------------------------------------------

def test_criterion_10_strong_max_principle(record, ensemble):
    _, consts, _ = ensemble
    c = Criterion(record, 10, "strong maximum principle shadow", 300.0)
    q = unit_box()
    z0 = P(0, 0, -0.05)
    cases = {f"Gamma pole {p}": _kernel_field(P(*p))
             for p in ((0, 0, -0.02), (0.4, -0.1, -0.03), (-0.2, 0.3, -0.01))}
    # rough coefficients, zero data until lateral inflow switches on at t = -0.03
    g = GridSpec(1, (-1.1, 1.1), (-1.2, 1.2), (-1.05, 0.0), 45, 45)
    A = PiecewiseConstantField.random_matrix(1, g.lo(), g.hi(), 6, 0.5, 2.0, 10)
    op = OperatorSpec(1, A, 0.0, 0.0, 0.5, 2.0)
    cases["rough, late inflow"] = solve(
        op, g, np.zeros(g.shape),
        boundary=lambda V, X, T: np.maximum(T + 0.03, 0.0) * (1 + V[..., 0] ** 2))
    for name, u in cases.items():
        rep = strong_max_principle_check(u, z0, q, 1e-6, consts, count=16, seed=10)
        c.check(name, rep.passes, f"u(z0)={rep.u_z0:.1e}, max sampled {rep.max_sampled:.1e}"
                f" over {rep.points} points")
    c.finish()


# 11 -----------------------------------------------------------------------

COMMANDS = [
    ["group", "--op", "compose"], ["group", "--op", "dilate"], ["kalman", "--n", "4"],
    ["curve"], ["attainable"], ["chain"], ["solve", "--N", "64", "--csv"],
    ["gamma"], ["mc", "--paths", "200000"], ["harnack", "--runs", "4", "--N", "33"],
    ["geometric", "--M", "3"], ["maxprinciple", "--M", "3"],
]


def test_criterion_11_determinism(record, tmp_path):
    c = Criterion(record, 11, "determinism", 600.0)
    snapshots = []
    for _ in range(2):
        for cmd in COMMANDS:
            code = cli_run(cmd + ["--seed", "11", "--out", str(tmp_path)])
            if code != 0:
                c.check(" ".join(cmd), False, f"exit {code}")
        snapshots.append({p.name: p.read_bytes() for p in sorted(tmp_path.iterdir())})
    same = snapshots[0] == snapshots[1]
    c.check("byte-identical artifacts", same, f"{len(snapshots[0])} files")
    c.finish()
