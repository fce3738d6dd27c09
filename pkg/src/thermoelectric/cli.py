"""Command-line driver: ``thermoelectric <subcommand> --config FILE [--out DIR] [--seed N] [--threads N]``.

Exit status is 0 when every inner solve converged and every hard check
passed, 1 otherwise (artifacts are still written), 2 for usage or
configuration errors.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import kernels
from .config import ConfigError, RunConfig, load_config
from .coupled import IncompatibleCurrentError, reconstruct_H, run_fixed_point
from .diagnostics import (
    campanato_seminorm,
    check_energy_bounds,
    contraction_probe,
    holder_seminorm,
    uniqueness_threshold,
)
from .elliptic import IncompatibleDataError
from .io import write_csv, write_raw, write_vtk
from .mesh import Grid, eval_sigma, l2_edge
from .ops import boundary_mask, edges_to_nodes, faces_to_nodes
from .verification import convergence_study

log = logging.getLogger("thermoelectric")

SUBCOMMANDS = ("solve", "verify", "contraction-study", "regularity-study", "reconstruct")

DIAGNOSTICS_HEADER = ["iteration", "du_l2", "dj_l2", "contraction", "u_l2", "j_l2", "bound_ratio",
                      "phi_iterations", "u_iterations", "linear_converged"]
ESTIMATES_HEADER = ["name", "lhs", "rhs", "ratio", "slack", "passed", "descriptive"]
SUMMARY_HEADER = ["key", "value"]
CONVERGENCE_HEADER = ["case", "joule", "n", "h", "u_l2", "u_max", "phi_l2", "phi_max", "J_l2", "J_max",
                      "picard_iterations", "converged", "order_u_l2", "order_phi_l2", "order_J_l2"]
CONTRACTION_HEADER = ["scale", "data_l2", "j_l3", "kappa_star", "small_data", "max_factor",
                      "iterations_a", "iterations_b", "converged", "limit_difference"]
REGULARITY_HEADER = ["n", "h", "holder", "campanato", "picard_iterations", "converged", "u_min", "u_max"]
RECONSTRUCT_HEADER = ["n", "iterations", "curl_residual", "div_residual", "normal_max", "converged"]

BOUND_SLACK = 1e-6
MAX_PRINCIPLE_FLOOR = -1e-8
ORDER_THRESHOLD = 1.8


class Outcome:
    """Collects hard-check failures for the exit status."""

    def __init__(self):
        self.failures: list[str] = []

    def check(self, ok: bool, what: str):
        if not ok:
            self.failures.append(what)
            log.error("check failed: %s", what)

    @property
    def status(self) -> int:
        return 0 if not self.failures else 1


def _summary(path, items):
    write_csv(path, SUMMARY_HEADER, list(items))


def _write_fields(out: Path, spec, u, phi, J, extra_scalars=None):
    sig = eval_sigma(spec.sigma, u).values
    scalars = {"u": u.values, "phi": phi.values, "sigma": sig}
    scalars.update(extra_scalars or {})
    write_vtk(out / "fields.vtk", spec.grid, scalars, {"J": edges_to_nodes(J)})
    write_raw(out / "fields.f64", {"u": u.values, "phi": phi.values, "J_x": J[0], "J_y": J[1], "J_z": J[2]})


def cmd_solve(cfg: RunConfig, out: Path) -> int:
    res = Outcome()
    spec = cfg.problem_spec()
    fp = run_fixed_point(spec)
    diag = fp.diagnostics
    rows = [dataclasses.astuple(r) for r in diag.records]
    write_csv(out / "diagnostics.csv", DIAGNOSTICS_HEADER, rows)
    est = check_energy_bounds(spec, fp.phi, fp.J, fp.u)
    write_csv(out / "estimates.csv", ESTIMATES_HEADER, [dataclasses.astuple(e) for e in est])
    thr = uniqueness_threshold(spec.sigma).with_current(fp.J)
    u_min = float(fp.u.values.min())
    _summary(out / "summary.csv", [
        ("status", diag.status), ("iterations", diag.iterations),
        ("u_min", u_min), ("u_max", float(fp.u.values.max())),
        ("j_l2", l2_edge(fp.J)), ("j_l3", thr.j_l3), ("kappa_star", thr.kappa_star),
    ])
    if cfg.write_fields:
        _write_fields(out, spec, fp.u, fp.phi, fp.J)
    res.check(diag.converged, f"Picard iteration: {diag.status}")
    for r in diag.records:
        if r.bound_ratio is not None:
            res.check(r.bound_ratio <= 1.0 + BOUND_SLACK, f"energy bound at iteration {r.iteration}: ratio {r.bound_ratio:.6g}")
    for e in est:
        if not e.descriptive:
            res.check(e.passed, f"{e.name}: ratio {e.ratio:.6g}")
    if spec.joule == "pointwise" and spec.source_u is None and float(spec.u0.values[spec.grid.boundary_nodes()].min()) >= 0:
        res.check(u_min >= MAX_PRINCIPLE_FLOOR, f"maximum principle: min u = {u_min:.3e}")
    return res.status


def cmd_verify(cfg: RunConfig, out: Path) -> int:
    res = Outcome()
    rows = []
    for name in cfg.study.cases:
        tab = convergence_study(name, cfg.study.levels, joule=cfg.joule, linear_tol=cfg.linear_tol,
                                picard_tol=cfg.picard_tol, picard_maxiter=cfg.picard_maxiter)
        for r in tab.rows:
            d = dataclasses.asdict(r)
            d.update(case=name, joule=cfg.joule)
            rows.append(d)
        res.check(tab.all_converged, f"{name}: a refinement level did not converge")
        if name == "constant-sigma-uniform":
            worst = max(max(r.u_max, r.phi_max, r.J_max) for r in tab.rows)
            res.check(worst <= 100 * cfg.linear_tol, f"{name}: error {worst:.3e} above 100 x solver tolerance")
        else:
            keys = ("u_l2", "phi_l2") + (("J_l2",) if name == "slab-sigma" else ())
            for k in keys:
                orders = tab.orders(k)
                ok = all(o is not None and o >= ORDER_THRESHOLD for o in orders)
                res.check(ok, f"{name}: observed {k} orders {orders}")
    write_csv(out / "convergence.csv", CONVERGENCE_HEADER, rows)
    return res.status


def cmd_contraction(cfg: RunConfig, out: Path) -> int:
    res = Outcome()
    rows = []
    factors = []
    for s in cfg.study.scales:
        spec = cfg.problem_spec(scale=s)
        rep = contraction_probe(spec, cfg.study.perturbation)
        data = l2_edge(spec.E0) if spec.mode == "electric" else (spec.curl_h0_l2 or float("nan"))
        thr = rep.threshold
        small = thr.j_l3 < thr.kappa_star / 2
        rows.append([s, data, thr.j_l3, thr.kappa_star, small, rep.max_factor,
                     rep.iterations_a, rep.iterations_b, rep.converged, rep.limit_difference])
        factors.append(rep.max_factor)
        res.check(rep.converged, f"scale {s}: a run did not converge")
        if small and rep.converged:
            res.check(rep.limit_difference <= 1e-8, f"scale {s}: limits differ by {rep.limit_difference:.3e}")
            res.check(rep.max_factor < 1.0, f"scale {s}: contraction factor {rep.max_factor:.4g} >= 1")
    write_csv(out / "contraction.csv", CONTRACTION_HEADER, rows)
    monotone = all(b >= a for a, b in zip(factors, factors[1:]))
    _summary(out / "summary.csv", [("factor_monotone", monotone), ("scales", len(rows))])
    return res.status


def cmd_regularity(cfg: RunConfig, out: Path) -> int:
    res = Outcome()
    rows = []
    hold = []
    for n in cfg.study.levels:
        g = Grid((n, n, n), cfg.grid.lengths)
        fp = run_fixed_point(cfg.problem_spec(grid=g))
        hs = holder_seminorm(fp.u, cfg.study.alpha, cfg.study.pairs, cfg.seed)
        cs = campanato_seminorm(fp.u, cfg.study.mu, cfg.study.budget)
        rows.append([n, max(g.h), hs, cs, fp.diagnostics.iterations, fp.diagnostics.converged,
                     float(fp.u.values.min()), float(fp.u.values.max())])
        hold.append(hs)
        res.check(fp.diagnostics.converged, f"n = {n}: {fp.diagnostics.status}")
    write_csv(out / "regularity.csv", REGULARITY_HEADER, rows)
    spread = (max(hold) - min(hold)) / min(hold) if min(hold) > 0 else (0.0 if max(hold) == 0 else math.inf)
    _summary(out / "summary.csv", [("alpha", cfg.study.alpha), ("mu", cfg.study.mu), ("holder_spread", spread)])
    return res.status


def cmd_reconstruct(cfg: RunConfig, out: Path) -> int:
    res = Outcome()
    spec = cfg.problem_spec()
    fp = run_fixed_point(spec)
    res.check(fp.diagnostics.converged, f"Picard iteration: {fp.diagnostics.status}")
    try:
        H, rep = reconstruct_H(fp.J, tol=max(cfg.linear_tol, 1e-8))
    except IncompatibleCurrentError as exc:
        res.check(False, str(exc))
        return res.status
    bm = boundary_mask(spec.grid)
    normal = max(float(np.max(np.abs(np.where(m, c, 0.0)))) for m, c in zip(bm.faces, H))
    write_csv(out / "reconstruct.csv", RECONSTRUCT_HEADER,
              [[spec.grid.n[0], rep.iterations, rep.curl_residual, rep.div_residual, normal, rep.converged]])
    if cfg.write_fields:
        write_vtk(out / "H.vtk", spec.grid, None, {"H": faces_to_nodes(H), "J": edges_to_nodes(fp.J)})
        write_raw(out / "H.f64", {"H_x": H[0], "H_y": H[1], "H_z": H[2]})
    res.check(rep.converged, f"reconstruction: curl residual {rep.curl_residual:.3e}, div residual {rep.div_residual:.3e}")
    res.check(normal == 0.0, "normal component of H on the boundary is nonzero")
    return res.status


COMMANDS = {
    "solve": cmd_solve,
    "verify": cmd_verify,
    "contraction-study": cmd_contraction,
    "regularity-study": cmd_regularity,
    "reconstruct": cmd_reconstruct,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="thermoelectric", description="Steady thermoelectric (Joule heating) solver.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, type=Path, help="run configuration file")
        s.add_argument("--out", type=Path, default=None, help="output directory (overrides [output].dir)")
        s.add_argument("--seed", type=int, default=None, help="seed for sampled diagnostics")
        s.add_argument("--threads", type=int, default=None, help="threads for the compiled kernels")
    return p


def run(command: str, cfg: RunConfig, out: Path | str | None = None) -> int:
    if command not in COMMANDS:
        raise ValueError(f"unknown subcommand {command!r}")
    out = Path(cfg.output_dir if out is None else out)
    out.mkdir(parents=True, exist_ok=True)
    return COMMANDS[command](cfg, out)


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"{args.config}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"cannot read configuration: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        if args.seed < 0:
            print("--seed must be >= 0", file=sys.stderr)
            return 2
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if args.threads is not None:
        if args.threads < 1:
            print("--threads must be >= 1", file=sys.stderr)
            return 2
        kernels.set_num_threads(args.threads)
    try:
        status = run(args.command, cfg, args.out)
    except IncompatibleDataError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    if status:
        print(f"{args.command}: one or more checks failed", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
