"""Command line entry point.

Every subcommand resolves its options from built-in defaults, then an
optional JSON ``--config`` file, then explicit flags; the resolved
configuration is embedded in each JSON artifact.  Exit status is 0 on
success, 1 on invalid input and 2 on numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .chain import build_chain, calibrate_h
from .controllability import (
    KolmogorovStructure,
    SearchBudget,
    attainable_membership,
    detect_block_structure,
    kalman_rank,
    minimal_energy_curve,
)
from .errors import KFPError, NumericalError, ValidationError
from .group import BoxKind, BoxSpec, GroupPoint, HarnackConstants, compose, dilate, inverse, unit_box
from .io import write_csv, write_json
from .oracles import box_density_estimate, gamma_array, gamma_L0, langevin_mc
from .plotdata import AttainableCone, emit_plot_data
from .solver import GridSpec, OperatorSpec, PiecewiseConstantField, solve
from .verification import (
    EnsembleSpec,
    empirical_M,
    geometric_harnack_check,
    sample_attainable,
    strong_max_principle_check,
)

COMMON = {
    "seed": (int, 0, "random seed (echoed in every artifact)"),
    "out": (str, "out", "output directory"),
    "R": (float, 0.5, "box constant R"),
    "Delta": (float, 0.5, "box constant Delta"),
    "S": (float, 0.25, "K- half width S"),
    "h": (float, None, "energy threshold (default: calibrated)"),
}

COMMANDS = {
    "group": ("Galilean group operations", {
        "op": (str, "compose", "compose | inverse | dilate"),
        "a": (str, "1,2,3", "first point v..,x..,t"),
        "b": (str, "4,5,6", "second point (compose)"),
        "r": (float, 2.0, "dilation factor"),
    }),
    "kalman": ("Kalman rank and block structure", {
        "n": (int, 1, "Galilean structure of dimension 2n"),
        "structure": (str, None, "JSON file with N, A_tilde, B"),
    }),
    "curve": ("minimal-energy admissible curve", {
        "from": (str, "0,0,0", "start point"),
        "to": (str, "0,1,-1", "end point (earlier time)"),
        "samples": (int, 1024, "control samples"),
    }),
    "attainable": ("attainability in a box domain", {
        "domain": (str, "unit", "'unit' or base;r, e.g. '0,0,0;1'"),
        "point": (str, "0.5,-0.1,-0.2", "target point"),
        "from": (str, None, "start point (default: domain base)"),
        "samples": (int, 512, "curve samples in the search"),
        "waypoints": (int, 32, "Sobol waypoint candidates"),
    }),
    "chain": ("Harnack chain along an admissible curve", {
        "domain": (str, "unit", "'unit' or base;r"),
        "from": (str, "0,0,-0.05", "start point"),
        "to": (str, "0.2,0,-0.8", "end point"),
        "M": (float, 2.0, "local Harnack constant"),
    }),
    "solve": ("finite-difference solve", {
        "N": (int, 128, "nodes per axis"),
        "v_range": (str, "-4,4", "velocity interval"),
        "x_range": (str, "-4,4", "position interval"),
        "t_range": (str, "0.1,0.5", "time interval"),
        "coef": (str, "constant", "constant | checkerboard | random"),
        "A": (float, 0.5, "constant diffusion"),
        "low": (float, 0.5, "checkerboard / random lower bound"),
        "high": (float, 2.0, "checkerboard / random upper bound"),
        "cells": (int, 8, "coefficient cells per axis"),
        "initial": (str, "gamma", "gamma | one"),
        "boundary": (str, "initial", "initial | zero_flux"),
        "csv": (bool, False, "also write a CSV of the final field"),
    }),
    "gamma": ("closed-form fundamental solution", {
        "at": (str, "0,0,1", "evaluation point"),
        "pole": (str, None, "pole (default: origin)"),
        "sigma2": (float, 0.5, "diffusion coefficient"),
    }),
    "mc": ("exact Langevin sampling", {
        "from": (str, "0,0,0", "start point"),
        "s": (float, 1.0, "elapsed time"),
        "paths": (int, 100000, "number of paths"),
        "sigma2": (float, 0.5, "diffusion coefficient"),
        "width": (float, 0.05, "histogram cell for the density at the mean"),
        "write_samples": (bool, False, "write all samples to CSV"),
    }),
    "harnack": ("empirical Harnack constant over an ensemble", {
        "runs": (int, 20, "ensemble size"),
        "lam": (float, 0.5, "lower ellipticity bound"),
        "Lam": (float, 2.0, "upper ellipticity bound"),
        "N": (int, 65, "nodes per axis"),
        "cells": (int, 8, "coefficient cells per axis"),
        "b_bound": (float, 0.5, "drift bound"),
    }),
    "geometric": ("geometric Harnack check for a Gaussian solution", {
        "from": (str, "0,0,-0.05", "base point z0"),
        "pole": (str, "0,0,-2", "pole of the kernel solution"),
        "count": (int, 10, "number of attainable K points"),
        "M": (float, None, "Harnack constant (default: estimate)"),
        "runs": (int, 20, "ensemble size used for the estimate"),
    }),
    "maxprinciple": ("strong maximum principle check", {
        "from": (str, "0,0,-0.05", "base point z0"),
        "pole": (str, "0,0,-0.02", "pole of the kernel solution (later than z0)"),
        "count": (int, 16, "number of attainable sample points"),
        "tol": (float, 1e-6, "smallness of u(z0) relative to sup u"),
        "M": (float, None, "Harnack constant (default: estimate)"),
        "runs": (int, 20, "ensemble size used for the estimate"),
    }),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _flag(name):
    return "--" + name.replace("_", "-")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="kfpharnack", description="Harnack-chain geometry and kinetic solvers")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, (help_text, opts) in COMMANDS.items():
        sp = sub.add_parser(name, help=help_text, argument_default=argparse.SUPPRESS)
        sp.add_argument("--config", help="JSON file with option values")
        for key, (typ, default, hlp) in {**COMMON, **opts}.items():
            dest = key
            if typ is bool:
                sp.add_argument(_flag(key), dest=dest, action="store_true",
                                help=f"{hlp}")
            else:
                sp.add_argument(_flag(key), dest=dest, type=typ,
                                help=f"{hlp} (default {default})")
    return p


def resolve(args) -> dict:
    opts = {**COMMON, **COMMANDS[args.command][1]}
    cfg = {k: spec[1] for k, spec in opts.items()}
    given = vars(args)
    path = given.get("config")
    if path:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read config {path}: {exc}") from exc
        unknown = set(data) - set(opts) - {"command"}
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        for k, v in data.items():
            if k != "command":
                cfg[k] = v
    for k in opts:
        if k in given:
            cfg[k] = given[k]
    cfg["command"] = args.command
    return cfg


def _point(text):
    return GroupPoint.parse(text)


def _pair(text):
    vals = [float(t) for t in str(text).split(",")]
    if len(vals) != 2:
        raise ValidationError(f"expected two comma separated numbers, got {text!r}")
    return tuple(vals)


def _domain(text, n):
    if text == "unit":
        return unit_box(n)
    try:
        base, r = text.split(";")
        return BoxSpec(_point(base), float(r), BoxKind.UNIT_Q)
    except ValueError as exc:
        raise ValidationError(f"cannot parse domain {text!r}") from exc


def _constants(cfg, M=2.0):
    h = cfg["h"]
    if h is None:
        h = calibrate_h(cfg["R"], cfg["Delta"], cfg["S"])["h"]
    return HarnackConstants(M=M, R=cfg["R"], Delta=cfg["Delta"], S=cfg["S"], h=h)


def _out(cfg, name):
    return os.path.join(cfg["out"], name)


def _estimate_M(cfg, constants):
    stats = empirical_M(EnsembleSpec(runs=cfg["runs"]), constants, seed=cfg["seed"])
    return stats.M_hat, stats


# -- subcommands -----------------------------------------------------------

def cmd_group(cfg):
    a = _point(cfg["a"])
    op = cfg["op"]
    if op == "compose":
        res = compose(a, _point(cfg["b"]))
    elif op == "inverse":
        res = inverse(a)
    elif op == "dilate":
        res = dilate(cfg["r"], a)
    else:
        raise ValidationError(f"unknown group operation {op!r}")
    write_json(_out(cfg, "group.json"), {"config": cfg, "result": res.to_json()})
    return f"{op}: {','.join('%.17g' % c for c in res.as_array())}"


def cmd_kalman(cfg):
    if cfg["structure"]:
        with open(cfg["structure"]) as fh:
            st = KolmogorovStructure.from_json(json.load(fh))
    else:
        st = KolmogorovStructure.galilean(cfg["n"])
    rank = kalman_rank(st.C(), st.B)
    bs = detect_block_structure(st.B)
    res = {"N": st.N, "rank": rank, "hypoelliptic": rank == st.N,
           "blocks": None if bs is None else list(bs.blocks),
           "homogeneous": None if bs is None else bs.homogeneous}
    write_json(_out(cfg, "kalman.json"), {"config": cfg, "result": res})
    return f"rank={rank} N={st.N} blocks={res['blocks']} homogeneous={res['homogeneous']}"


def cmd_curve(cfg):
    z0, z1 = _point(cfg["from"]), _point(cfg["to"])
    c = minimal_energy_curve(z0, z1, cfg["samples"])
    write_csv(_out(cfg, "curve.csv"), c.csv_header(), c.rows())
    write_json(_out(cfg, "curve.json"), {"config": cfg, "energy": c.energy,
                                         "end": c.end.to_json()})
    return f"energy={c.energy:.10g}"


def cmd_attainable(cfg):
    z = _point(cfg["point"])
    dom = _domain(cfg["domain"], z.n)
    z0 = _point(cfg["from"]) if cfg["from"] else dom.base
    budget = SearchBudget(samples=cfg["samples"], waypoints=cfg["waypoints"], seed=cfg["seed"])
    res = attainable_membership(dom, z0, z, budget)
    out = {"config": cfg, "result": res, "budget": budget}
    if res.witness is not None:
        write_csv(_out(cfg, "attainable_witness.csv"), res.witness.csv_header(),
                  res.witness.rows())
    if z.n == 1 and cfg["domain"] == "unit":
        emit_plot_data(AttainableCone([list(z.as_array()) + [res.status.value]]),
                       cfg["out"], "attainable")
    write_json(_out(cfg, "attainable.json"), out)
    return res.status.value


def cmd_chain(cfg):
    z0, z1 = _point(cfg["from"]), _point(cfg["to"])
    dom = _domain(cfg["domain"], z0.n)
    constants = _constants(cfg, cfg["M"])
    res = attainable_membership(dom, z0, z1, SearchBudget(seed=cfg["seed"]))
    if res.witness is None:
        raise ValidationError(f"{z1} is {res.status.value} from {z0}")
    ch = build_chain(dom, res.witness, constants)
    check = ch.verify(dom)
    write_json(_out(cfg, "chain.json"), {"config": cfg, "constants": constants,
                                         "chain": ch, "verification": check})
    emit_plot_data(ch, cfg["out"], "chain")
    return f"k={ch.k} total_constant={ch.total_constant:.6g} verified={check['ok']}"


def cmd_solve(cfg):
    n = 1
    grid = GridSpec(n, _pair(cfg["v_range"]), _pair(cfg["x_range"]), _pair(cfg["t_range"]),
                    cfg["N"], cfg["N"])
    lo, hi = grid.lo(), grid.hi()
    if cfg["coef"] == "constant":
        op = OperatorSpec.constant(n, A=cfg["A"])
    elif cfg["coef"] == "checkerboard":
        A = PiecewiseConstantField.checkerboard(n, lo, hi, cfg["cells"], cfg["low"], cfg["high"])
        op = OperatorSpec(n, A, None, None, cfg["low"], cfg["high"], "checkerboard")
    elif cfg["coef"] == "random":
        A = PiecewiseConstantField.random_matrix(n, lo, hi, cfg["cells"], cfg["low"],
                                                 cfg["high"], cfg["seed"])
        op = OperatorSpec(n, A, None, None, cfg["low"], cfg["high"], "random")
    else:
        raise ValidationError(f"unknown coefficient type {cfg['coef']!r}")
    t0 = grid.t_range[0]
    sigma2 = cfg["A"]
    origin = np.zeros(2 * n + 1)
    if cfg["initial"] == "gamma":
        if t0 <= 0:
            raise ValidationError("gamma initial data needs t_range starting after 0")

        def initial(V, X):
            return gamma_array(np.concatenate([V, X, np.full(V.shape[:-1] + (1,), t0)], -1),
                               origin, sigma2)
    elif cfg["initial"] == "one":
        def initial(V, X):
            return np.ones(V.shape[:-1])
    else:
        raise ValidationError(f"unknown initial data {cfg['initial']!r}")
    u = solve(op, grid, initial, boundary=cfg["boundary"])
    summary = {k: u.meta[k] for k in ("ht", "steps", "max_principle_ok", "nonnegative_ok",
                                      "max_principle_excess")}
    if cfg["initial"] == "gamma" and cfg["coef"] == "constant":
        V, X = grid.mesh()
        t1 = u.times[-1]
        ex = gamma_array(np.concatenate([V, X, np.full(V.shape[:-1] + (1,), t1)], -1),
                         origin, sigma2)
        mask = ex >= 0.01 * ex.max()
        summary["max_rel_error"] = float(np.max(np.abs(u.values[-1][mask] - ex[mask]) / ex[mask]))
    u.to_f64(_out(cfg, "solution.f64"))
    if cfg["csv"]:
        u.to_csv(_out(cfg, "solution.csv"), every=max(1, u.times.size - 1))
    write_json(_out(cfg, "solve.json"), {"config": cfg, "grid": grid, "summary": summary})
    extra = f" max_rel_error={summary['max_rel_error']:.4g}" if "max_rel_error" in summary else ""
    return f"steps={u.meta['steps']} max_principle_ok={u.meta['max_principle_ok']}{extra}"


def cmd_gamma(cfg):
    z = _point(cfg["at"])
    pole = _point(cfg["pole"]) if cfg["pole"] else GroupPoint(np.zeros(z.n), np.zeros(z.n), 0.0)
    g = gamma_L0(z, pole, cfg["sigma2"])
    write_json(_out(cfg, "gamma.json"), {"config": cfg, "gamma": g})
    return f"{g:.6f}"


def cmd_mc(cfg):
    z0 = _point(cfg["from"])
    smp = langevin_mc(z0, cfg["s"], cfg["paths"], cfg["seed"], cfg["sigma2"])
    mean = smp.mean(axis=0)
    cov = np.cov(smp.T)
    n = z0.n
    centre = np.concatenate([z0.v, z0.x + cfg["s"] * z0.v])
    est, se = box_density_estimate(smp, centre, cfg["width"])
    exact = gamma_L0(GroupPoint(centre[:n], centre[n:], z0.t + cfg["s"]), z0, cfg["sigma2"])
    if cfg["write_samples"]:
        write_csv(_out(cfg, "mc_samples.csv"),
                  ["path"] + [f"v{j}" for j in range(n)] + [f"x{j}" for j in range(n)],
                  [[i] + list(row) for i, row in enumerate(smp)])
    write_json(_out(cfg, "mc.json"), {"config": cfg, "mean": mean, "cov": cov,
                                      "density": est, "stderr": se, "gamma": exact})
    return f"density={est:.6f}+-{se:.6f} gamma={exact:.6f}"


def cmd_harnack(cfg):
    constants = _constants(cfg)
    spec = EnsembleSpec(runs=cfg["runs"], lam=cfg["lam"], Lam=cfg["Lam"], N=cfg["N"],
                        cells=cfg["cells"], b_bound=cfg["b_bound"])
    stats = empirical_M(spec, constants, seed=cfg["seed"])
    write_json(_out(cfg, "harnack.json"), {"config": cfg, "statistics": stats})
    worst = max(stats.reports, key=lambda r: r.ratio)
    emit_plot_data(worst, cfg["out"], "harnack")
    return f"M_hat={stats.M_hat:.6g} runs={spec.runs}"


def _kernel_solution(pole, z0, dom, sigma2=0.5, N=65, nt=65):
    from .solver import field_from_function
    n = z0.n
    hv, hx, t_lo, t_hi = dom.bounds()
    b = dom.base
    grid = GridSpec(n, (float(b.v.min()) - 1.1 * hv, float(b.v.max()) + 1.1 * hv),
                    (float(b.x.min()) - 1.1 * hx - abs(t_lo - b.t) * float(np.abs(b.v).max()),
                     float(b.x.max()) + 1.1 * hx + abs(t_lo - b.t) * float(np.abs(b.v).max())),
                    (t_lo - 0.05 * (t_hi - t_lo), t_hi), N, N)
    pa = pole.as_array()
    return field_from_function(
        grid, lambda V, X, T: gamma_array(np.concatenate([V, X, T[..., None]], -1), pa, sigma2),
        np.linspace(*grid.t_range, nt))


def cmd_geometric(cfg):
    z0, pole = _point(cfg["from"]), _point(cfg["pole"])
    dom = unit_box(z0.n)
    base = _constants(cfg)
    stats = None
    M = cfg["M"]
    if M is None:
        M, stats = _estimate_M(cfg, base)
    constants = base.replace(M=M)
    u = _kernel_solution(pole, z0, dom)
    pts = sample_attainable(dom, z0, cfg["count"], cfg["seed"])
    rep = geometric_harnack_check(u, 0.0, z0, pts, dom, constants)
    write_json(_out(cfg, "geometric.json"), {
        "config": cfg, "constants": constants, "report": rep,
        "M_provenance": None if stats is None else {"seed": stats.seed, "spec": stats.spec,
                                                    "max_ratio": stats.max_ratio},
        "K_points": pts})
    return f"holds={rep.holds} log_C_K={rep.log_C_K:.6g} log_margin={rep.log_margin:.6g}"


def cmd_maxprinciple(cfg):
    z0, pole = _point(cfg["from"]), _point(cfg["pole"])
    dom = unit_box(z0.n)
    base = _constants(cfg)
    M = cfg["M"]
    stats = None
    if M is None:
        M, stats = _estimate_M(cfg, base)
    constants = base.replace(M=M)
    u = _kernel_solution(pole, z0, dom)
    rep = strong_max_principle_check(u, z0, dom, cfg["tol"], constants, cfg["count"],
                                     cfg["seed"])
    write_json(_out(cfg, "maxprinciple.json"), {
        "config": cfg, "constants": constants, "report": rep,
        "M_provenance": None if stats is None else {"seed": stats.seed, "spec": stats.spec,
                                                    "max_ratio": stats.max_ratio}})
    return f"passes={rep.passes} max_violation={rep.max_violation:.3g} points={rep.points}"


HANDLERS = {
    "group": cmd_group, "kalman": cmd_kalman, "curve": cmd_curve,
    "attainable": cmd_attainable, "chain": cmd_chain, "solve": cmd_solve,
    "gamma": cmd_gamma, "mc": cmd_mc, "harnack": cmd_harnack,
    "geometric": cmd_geometric, "maxprinciple": cmd_maxprinciple,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = resolve(args)
        line = HANDLERS[args.command](cfg)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except (KFPError, ValueError, OSError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return 1
    except ArithmeticError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    print(f"{args.command}: {line}")
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
