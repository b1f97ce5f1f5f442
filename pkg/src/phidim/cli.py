"""Command line entry point: ``phidim {construct,dim,oracle,verify,sweep}``."""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import _kernels, acceptance
from . import constructors as cons
from .core import (DimensionFunction, GapSequence, RatioSchedule, depth_table, level_sums,
                   level_sums_from_ratios)
from .errors import EmptyScan, PhidimError
from .estimators import ScanWindow, lower_phi_dim, quasi_assouad, upper_phi_dim
from .io import load_config, validate_config, write_csv, write_json
from .oracle import (check_lemma_box, check_prop_dec, empirical_phi_dim, lemma_box_ratios)

EXIT_USAGE = 2
EXIT_VIOLATIONS = 3
EXIT_ACCEPTANCE = 4


class Built:
    """Everything a subcommand may need from the configured set."""

    def __init__(self, name, stats=None, report=None, gaps=None, approx=None):
        self.name = name
        self.stats = stats
        self.report = report
        self.gaps = gaps
        self.approx = approx

    def to_dict(self):
        d = {"constructor": self.name}
        if self.report is not None:
            d["report"] = self.report.to_dict()
        if self.gaps is not None:
            d["gaps"] = cons._jsonable(self.gaps.to_dict())
        if self.stats is not None:
            d["N"] = self.stats.N
        return d


def _phi(d):
    return DimensionFunction.from_dict(d)


def _gaps_from_params(p):
    if "values" in p:
        return GapSequence.from_values(p["values"], tail=p.get("tail", ["zero"]))
    if "power" in p:
        j = np.arange(1, int(p["count"]) + 1, dtype=np.float64)
        c = float(p.get("coef", 1.0))
        return GapSequence.from_values(c * j ** -float(p["power"]),
                                       tail=("power", c, float(p["power"])))
    if "block_ratio" in p:
        n = int(p.get("n_blocks", 40))
        q = float(p["block_ratio"])
        la = np.log(float(p.get("first", 1 - 2 * q))) + np.arange(n) * math.log(q)
        return GapSequence.from_blocks(log_alphas=la, tail_ratio=q)
    raise ValueError("gaps need 'values', 'power' or 'block_ratio'")


def build(set_cfg):
    name = set_cfg["constructor"]
    p = dict(set_cfg.get("params", {}))
    if name == "middle_third":
        gaps = cons.middle_third_gaps(int(p.get("n_blocks", 40)))
        return Built(name, level_sums(gaps, int(p.get("N", 30))), gaps=gaps)
    if name == "gaps":
        gaps = _gaps_from_params(p)
        return Built(name, level_sums(gaps, int(p["N"])), gaps=gaps)
    if name == "ratios":
        if "ratios" in p:
            sched = RatioSchedule(p["ratios"])
        else:
            sched = RatioSchedule(np.full(int(p["N"]), float(p["ratio"])))
        return Built(name, level_sums_from_ratios(sched))
    if name == "separation":
        rep = cons.thm_diff_schedule(_phi(p["phi1"]), _phi(p["phi2"]), p.get("tau"),
                                     float(p["rho"]), float(p["xi"]), p.get("n1"),
                                     int(p.get("N", 100_000)))
        return Built(name, rep.stats(), rep)
    if name == "continuity_failure":
        rep = cons.contfailure_schedule(_phi(p["phi"]), float(p.get("f_exponent", 0.25)),
                                        float(p.get("f_coef", 1.0)), int(p.get("N", 100_000)))
        return Built(name, rep.stats(), rep)
    if name == "continuum":
        d = cons.StepTarget(tuple(p["d"]["breaks"]), tuple(p["d"]["values"]))
        rep = cons.continuum_schedule(d, float(p["alpha"]), float(p["beta"]),
                                      p.get("p_samples"), int(p.get("N", 100_000)),
                                      bool(p.get("pin_quasi_assouad", False)))
        return Built(name, rep.stats(), rep)
    if name == "block_arrangement":
        gaps = cons.middle_third_gaps(int(p.get("n_blocks", 40)))
        rep = cons.thm5_block_arrangement(gaps, float(p.get("d", 0.75)),
                                          [int(m) for m in p.get("m_schedule", [4, 12])])
        return Built(name, report=rep, gaps=gaps, approx=rep.A_set)
    if name == "decreasing_example":
        _, phi, approx, rep = cons.decreasing_example_set(int(p.get("n_points", 10_000)))
        rep.extra["phi"] = cons._jsonable(phi.to_dict())
        return Built(name, report=rep, approx=approx)
    raise ValueError(f"unknown constructor {name!r}")


def _window(cfg, N):
    w = cfg.get("window")
    return ScanWindow(**w) if w else ScanWindow.default(N)


def _phis(cfg):
    return [_phi(d) for d in cfg.get("phi", [{"kind": "constant", "delta": 0.0}])]


def _need_stats(built):
    if built.stats is None:
        raise ValueError(f"constructor {built.name!r} has no level sums; use 'oracle'")
    return built.stats


# ---------------------------------------------------------------- subcommands

def cmd_construct(cfg, out):
    built = build(cfg["set"])
    write_json(out / "report.json", built.to_dict())
    if built.stats is not None:
        phis = cfg.get("phi")
        depth = depth_table(_phi(phis[0]), built.stats) if phis else None
        write_csv(out / "levelstats.csv", ["n", "log_s_n", "phi_n"],
                  built.stats.to_rows(depth))
    return 0


def _estimate_rows(stats, phis, w, modes=("upper", "lower")):
    rows = []
    for phi in phis:
        dt = depth_table(phi, stats)
        warn = f"unresolved depth at {dt.n_unresolved} levels" if dt.n_unresolved else ""
        for mode in modes:
            fn = upper_phi_dim if mode == "upper" else lower_phi_dim
            try:
                e = fn(stats, dt, w)
                k, n = e.achieving_pair
                rows.append([phi.label(), mode, e.value, k, n, w.k0, w.K, w.n_max,
                             dt.n_unresolved, warn])
            except EmptyScan as exc:
                rows.append([phi.label(), mode, math.nan, "", "", w.k0, w.K, w.n_max,
                             dt.n_unresolved, str(exc)])
    return rows


ESTIMATE_HEADER = ["phi", "mode", "value", "k", "n", "k0", "K", "n_max", "n_unresolved",
                   "warning"]


def cmd_dim(cfg, out):
    built = build(cfg["set"])
    stats = _need_stats(built)
    w = _window(cfg, stats.N)
    rows = _estimate_rows(stats, _phis(cfg), w)
    grid = cfg.get("theta_grid")
    if grid:
        e = quasi_assouad(stats, grid, w)
        rows.append([e.label, "upper", e.value, *e.achieving_pair, w.k0, w.K, w.n_max, "", ""])
    write_csv(out / "estimates.csv", ESTIMATE_HEADER, rows)
    return 0


def _approximation(built, ocfg):
    if built.approx is not None:
        return built.approx
    gaps = built.gaps
    if gaps is None:
        gaps = cons.gaps_from_stats(built.stats, int(ocfg.get("stage", 10)) + 1)
    return cons.cantor_approximation(gaps, int(ocfg.get("stage", 10)))


def _grid(grid, default):
    if grid is None:
        return default
    if isinstance(grid, dict):
        return np.logspace(math.log10(grid["start"]), math.log10(grid["stop"]),
                           int(grid["num"]))
    return np.asarray(grid, dtype=np.float64)


def _rearrangement_gaps(built):
    if built.gaps is not None and built.gaps.kind == "blocks":
        return built.gaps
    if built.stats is not None:
        return cons.gaps_from_stats(built.stats, min(built.stats.N, 30))
    raise ValueError("rearrangement checks need a block-constant gap sequence")


def cmd_oracle(cfg, out, check=None):
    built = build(cfg["set"])
    ocfg = cfg.get("oracle", {})
    seed = int(cfg.get("seed", 0))
    if check == "prop-dec":
        gaps = _rearrangement_gaps(built)
        stage = int(ocfg.get("stage", 10))
        D = cons.decreasing_rearrangement(gaps, stage)
        rng = np.random.default_rng(seed)
        rows = []
        for i in range(int(ocfg.get("rearrangements", 20))):
            E = cons.random_rearrangement(gaps, seed * 1000 + i, stage).materialize()
            triples = acceptance.prop_dec_triples(E, D, rng, int(ocfg.get("triples", 50)))
            for v in check_prop_dec(E, D, triples, float(ocfg.get("constant", 64.0))):
                rows.append([i, v.z, v.R, v.r, v.lhs, v.rhs])
        write_csv(out / "violations.csv", ["replicate", "z", "R", "r", "lhs", "rhs"], rows)
        return EXIT_VIOLATIONS if rows else 0
    if check == "lemma-box":
        gaps = _rearrangement_gaps(built)
        stage = int(ocfg.get("stage", 10))
        count = int(ocfg.get("rearrangements", 20))
        sets = [cons.random_rearrangement(gaps, seed * 1000 + i, stage).materialize()
                for i in range(count)]
        radii = _grid(ocfg.get("radii"),
                      np.logspace(math.log10(2 * sets[0].resolution), 0, 10))
        ratio_rows, viol_rows = [], []
        against = ocfg.get("against", "others")
        if against not in ("others", "self"):
            raise ValueError("oracle.against must be 'others' or 'self'")
        for i in range(count):
            partners = [i] if against == "self" else range(i + 1, count)
            for j in partners:
                for r, q in zip(radii, lemma_box_ratios(sets[i], sets[j], radii)):
                    ratio_rows.append([i, j, float(r), q])
                for v in check_lemma_box(sets[i], sets[j], radii,
                                         float(ocfg.get("bound", 16.0))):
                    viol_rows.append([i, j, v.r, v.lhs, v.rhs])
        write_csv(out / "ratios.csv", ["i", "j", "r", "ratio"], ratio_rows)
        write_csv(out / "violations.csv", ["i", "j", "r", "n_first", "n_second"], viol_rows)
        return EXIT_VIOLATIONS if viol_rows else 0
    approx = _approximation(built, ocfg)
    R_grid = _grid(ocfg.get("R_grid"), np.logspace(-1, -4, 7))
    rows = []
    for phi in _phis(cfg):
        for mode in ocfg.get("modes", ["upper"]):
            est = empirical_phi_dim(approx, phi, R_grid, mode=mode,
                                    r_steps=int(ocfg.get("r_steps", 4)),
                                    r_factor=float(ocfg.get("r_factor", 0.5)),
                                    max_centers=ocfg.get("max_centers", 500),
                                    extras=int(ocfg.get("extras", 0)), seed=seed)
            for R, r, logq, stat, m in est.scatter_rows():
                rows.append([phi.label(), R, r, logq, stat, m])
    write_csv(out / "scatter.csv", ["phi", "R", "r", "log_R_over_r", "stat", "mode"], rows)
    return 0


def cmd_verify(cfg, out, only=None):
    rows = []
    failed = 0
    for res in acceptance.run_all(only):
        print(res.line(), flush=True)
        failed += not res.passed
        rows.append([res.number, res.name, "PASS" if res.passed else "FAIL",
                     json.dumps(cons._jsonable(res.detail), sort_keys=True)])
    write_csv(out / "acceptance.csv", ["criterion", "name", "status", "detail"], rows)
    return EXIT_ACCEPTANCE if failed else 0


def cmd_sweep(cfg, out):
    built = build(cfg["set"])
    stats = _need_stats(built)
    windows = [ScanWindow(**w) for w in cfg.get("windows", [])] or [_window(cfg, stats.N)]
    rows = []
    for w in windows:
        rows.extend(_estimate_rows(stats, _phis(cfg), w))
    write_csv(out / "sweep.csv", ESTIMATE_HEADER, rows)
    return 0


# ---------------------------------------------------------------- plumbing

def make_parser():
    ap = argparse.ArgumentParser(prog="phidim",
                                 description="Phi-dimension estimates for sets on the line.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("construct", "dim", "oracle", "verify", "sweep"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, required=name != "verify")
        sp.add_argument("--out", type=Path)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--threads", type=int)
        if name == "oracle":
            sp.add_argument("--check", choices=["prop-dec", "lemma-box"])
        if name == "verify":
            sp.add_argument("--only", nargs="*", help="criterion function names")
    return ap


def main(argv=None):
    args = make_parser().parse_args(argv)
    threads = args.threads or int(os.environ.get("PHIDIM_THREADS", "0") or 0)
    _kernels.set_threads(threads)
    try:
        cfg = load_config(args.config) if args.config else validate_config(
            {"set": {"constructor": "middle_third"}})
        if args.seed is not None:
            cfg["seed"] = args.seed
        out = args.out or Path(cfg.get("out", "phidim_out"))
        if args.command == "construct":
            return cmd_construct(cfg, out)
        if args.command == "dim":
            return cmd_dim(cfg, out)
        if args.command == "oracle":
            return cmd_oracle(cfg, out, args.check)
        if args.command == "verify":
            return cmd_verify(cfg, out, args.only)
        return cmd_sweep(cfg, out)
    except PhidimError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (jsonschema.ValidationError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
