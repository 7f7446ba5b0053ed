"""Command-line experiment runner.

Each subcommand writes one CSV (or JSON) table plus a ``<output>.meta.json``
record.  Exit status: 0 when every built-in identity check passes, 1 when one
fails, 2 for usage errors, 3 when a size guard trips.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__, kernels
from .errors import BudgetError

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_BUDGET = 0, 1, 2, 3
MASK64 = (1 << 64) - 1


class UsageError(Exception):
    pass


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def render(header, rows, kind: str) -> str:
    if kind == "json":
        return json.dumps([dict(zip(header, (_jsonable(v) for v in row))) for row in rows],
                          indent=1) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def _jsonable(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


class Record:
    """Config echo, metrics with standard errors, and identity-check flags."""

    def __init__(self, command: str, config: dict):
        self.command = command
        self.config = config
        self.metrics: dict[str, dict] = {}
        self.checks: dict[str, bool] = {}
        self.notes: dict[str, object] = {}

    def metric(self, name, value, se=None):
        self.metrics[name] = {"value": _jsonable(value), "se": _jsonable(se)}

    def check(self, name, ok):
        self.checks[name] = bool(ok)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def to_dict(self, wall: float) -> dict:
        return {
            "command": self.command,
            "config": self.config,
            "version": __version__,
            "backend": kernels.BACKEND,
            "wall_clock_s": wall,
            "metrics": self.metrics,
            "checks": self.checks,
            "notes": self.notes,
            "passed": self.passed,
        }


# -- option tables -----------------------------------------------------------

COMMON_DEFAULTS = {"seed": None, "threads": None, "output": None, "format": "csv"}

COMMANDS = {
    "flow": dict(b=2, r=0.0, depth=300),
    "correlation-check": dict(b=2, N=2, r=0.0),
    "polymer-sim": dict(b=2, n=6, r=0.0, model="gaussian", samples=1000, beta=None),
    "limit-sim": dict(b=2, r=0.0, levels=100, pool=100000, stabilize=True),
    "disorder-scan": dict(b=2, r_list="0,1,2,3,4,5,6,7,8", levels=60, pool=100000, eps=0.01,
                          stabilize=True),
    "intersections-sim": dict(b=2, r=0.0, n=100, runs=1000),
    "hausdorff": dict(b=2, r=0.0, n_list="1000,2000,5000,10000", h_list="0.5,1,1.5", runs=1000),
    "energy": dict(b=2, r=0.0, n_list="50,100,200,400", h_list="0.5,1.5", runs=1000),
    "selftest": dict(),
}
STOCHASTIC = {"polymer-sim", "limit-sim", "disorder-scan", "intersections-sim", "hausdorff", "energy"}
TYPES = dict(b=int, r=float, depth=int, N=int, n=int, model=str, samples=int, beta=float,
             levels=int, pool=int, stabilize=bool, r_list=str, eps=float, runs=int,
             n_list=str, h_list=str, seed=int, threads=int, output=str, format=str)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="diamondlab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, opts in COMMANDS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON file with option values; flags override it")
        p.add_argument("--seed", type=int, default=None, help="64-bit master seed")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (default: DPL_THREADS or all cores)")
        p.add_argument("--output", default=None, help="output path (default: <command>.csv)")
        p.add_argument("--format", choices=["csv", "json"], default=None)
        for key, default in opts.items():
            flag = "--" + key.replace("_", "-")
            if key == "stabilize":
                p.add_argument("--no-stabilize", dest="stabilize", action="store_const",
                               const=False, default=None)
            elif key == "model":
                p.add_argument(flag, choices=["gaussian", "rademacher", "shifted_exponential"],
                               default=None)
            else:
                p.add_argument(flag, dest=key, type=TYPES[key], default=None)
        if name == "selftest":
            p.add_argument("--inject-fault", default=None, help=argparse.SUPPRESS)
    return parser


def resolve_config(args) -> dict:
    """Flags > config file > defaults; unknown config keys are rejected."""
    defaults = dict(COMMON_DEFAULTS, **COMMANDS[args.command])
    cfg = dict(defaults)
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                loaded = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config: {exc}") from exc
        if not isinstance(loaded, dict):
            raise UsageError("config must be a JSON object")
        loaded.pop("command", None)
        unknown = sorted(set(loaded) - set(defaults))
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        for k, v in loaded.items():
            typ = TYPES[k]
            if v is not None and not (typ is float and isinstance(v, int)) and not isinstance(v, typ):
                raise UsageError(f"config key {k!r} must be {typ.__name__}")
            cfg[k] = float(v) if typ is float and v is not None else v
    for k in defaults:
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v
    validate(args.command, cfg)
    return cfg


def _parse_list(text: str, typ) -> list:
    try:
        vals = [typ(t) for t in str(text).split(",") if t.strip()]
    except ValueError as exc:
        raise UsageError(f"bad list {text!r}") from exc
    if not vals:
        raise UsageError("empty list")
    return vals


def validate(command: str, cfg: dict):
    def need(cond, msg):
        if not cond:
            raise UsageError(msg)

    if command in STOCHASTIC:
        need(cfg["seed"] is not None, f"{command} requires --seed")
    if cfg["seed"] is not None:
        need(0 <= cfg["seed"] <= MASK64, "seed must be a 64-bit unsigned integer")
    if cfg["threads"] is not None:
        need(cfg["threads"] >= 1, "threads must be >= 1")
    need(cfg["format"] in ("csv", "json"), "format must be csv or json")
    if "b" in cfg:
        need(isinstance(cfg["b"], int) and cfg["b"] >= 2, "b must be an integer >= 2")
    for key in ("r", "eps", "beta"):
        if cfg.get(key) is not None:
            need(math.isfinite(cfg[key]), f"{key} must be finite")
    for key in ("samples", "runs", "pool", "n"):
        if key in cfg:
            need(cfg[key] >= 1, f"{key} must be >= 1")
    for key in ("depth", "levels", "N"):
        if key in cfg:
            need(cfg[key] >= 0, f"{key} must be >= 0")
    if "eps" in cfg:
        need(cfg["eps"] > 0, "eps must be positive")
    if "n_list" in cfg:
        need(all(n >= 1 for n in _parse_list(cfg["n_list"], int)), "n values must be >= 1")
    if "h_list" in cfg:
        need(all(h >= 0 for h in _parse_list(cfg["h_list"], float)), "h values must be >= 0")
    if "r_list" in cfg:
        _parse_list(cfg["r_list"], float)


# -- commands ---------------------------------------------------------------

def cmd_flow(cfg, rec):
    from .flow import eval_moment_profile, eval_R, map_M
    b, r, depth = cfg["b"], cfg["r"], cfg["depth"]
    prof = eval_moment_profile(r, depth, b)
    R, Rp = prof.R, prof.Rprime
    map_err = float(np.max(np.abs(R[:-1] - map_M(R[1:], b)) / R[:-1])) if depth else 0.0
    chain = Rp[1:] * (1.0 + R[1:]) ** (b - 1)
    chain_err = float(np.max(np.abs(Rp[:-1] - chain) / Rp[:-1])) if depth else 0.0
    doubled = eval_R(r, 2 * depth, b)
    rec.metric("R", R[0])
    rec.metric("Rprime", Rp[0])
    rec.metric("R3", prof.R3[0])
    rec.metric("R4", prof.R4[0])
    rec.metric("depth_doubling_rel", abs(R[0] - doubled) / doubled)
    rec.check("map_identity_1e-12", map_err <= 1e-12)
    rec.check("chain_rule_1e-12", chain_err <= 1e-12)
    rec.check("depth_doubling_1e-6", abs(R[0] - doubled) / doubled <= 1e-6)
    return ["k", "R", "Rprime", "R3", "R4"], list(prof.rows())


def cmd_correlation(cfg, rec):
    from .correlation import build_table, lebesgue_split
    b, N, r = cfg["b"], cfg["N"], cfg["r"]
    t = build_table(b, N, r)
    target = 1.0 + t.R_top
    rel = abs(t.total - target) / target
    marg = t.row_marginals()
    marg_err = float(np.max(np.abs(marg - target / marg.size)) / (target / marg.size))
    _, rho = lebesgue_split(t)
    rec.metric("total_mass", t.total)
    rec.metric("one_plus_R", target)
    rec.check("mass_identity_1e-9", rel <= 1e-9)
    rec.check("uniform_marginals_1e-9", marg_err <= 1e-9)
    rec.check("rho_total_1e-9", abs(math.fsum(rho.ravel()) - 1.0) <= 1e-9)
    n = t.masses.shape[0]
    rows = [(i, j, int(t.xi[i, j]), float(t.masses[i, j])) for i in range(n) for j in range(n)]
    return ["p_index", "q_index", "xi", "mass"], rows


def cmd_polymer(cfg, rec):
    from .flow import FlowConstants, eval_beta
    from .polymer_mc import DisorderModel, exact_partition_variance, simulate_partition
    model = DisorderModel(cfg["model"])
    b, n, r = cfg["b"], cfg["n"], cfg["r"]
    beta = cfg["beta"] if cfg["beta"] is not None else eval_beta(n, r, FlowConstants(b, model.tau))
    st = simulate_partition(b, n, r, model, cfg["samples"], cfg["seed"], cfg["threads"], beta=beta)
    rec.metric("mean", st.mean, st.se_mean)
    rec.metric("var", st.var, st.se_var)
    rec.metric("exact_var", exact_partition_variance(b, n, beta, model))
    rec.notes["beta"] = beta
    rec.check("finite", all(map(math.isfinite, (st.mean, st.var, st.m3, st.m4))))
    row = (b, n, r, beta, model.kind, st.count, st.mean, st.se_mean, st.var, st.se_var, st.m3, st.m4)
    return ["b", "n", "r", "beta", "model", "samples", "mean", "se_mean", "var", "se_var",
            "m3", "m4"], [row]


def cmd_limit(cfg, rec):
    from .flow import profile_for
    from .polymer_mc import sample_limit_mass_pool
    b, r, levels, pool = cfg["b"], cfg["r"], cfg["levels"], cfg["pool"]
    st = sample_limit_mass_pool(b, r, levels, pool, cfg["seed"], stabilize=cfg["stabilize"])
    prof = profile_for(r, levels, b)
    rec.metric("mean", st.mean, st.se_mean)
    rec.metric("var", st.var, st.se_var)
    rec.check("finite", all(map(math.isfinite, (st.mean, st.var, st.m3, st.m4))))
    row = (b, r, levels, pool, st.mean, st.var, st.m3, st.m4,
           prof.R[0], prof.R3[0], prof.R4[0])
    return ["b", "r", "levels", "pool", "mean", "var", "m3", "m4",
            "R_target", "R3_target", "R4_target"], [row]


def cmd_scan(cfg, rec):
    from .polymer_mc import strong_disorder_scan
    r_list = _parse_list(cfg["r_list"], float)
    res = strong_disorder_scan(cfg["b"], r_list, cfg["levels"], cfg["pool"], cfg["seed"],
                               eps=cfg["eps"], stabilize=cfg["stabilize"])
    fr = [f for _, f in sorted(res)]
    rec.notes["nondecreasing_in_r"] = bool(all(x <= y for x, y in zip(fr, fr[1:])))
    rec.check("fractions_in_unit_interval", all(0 <= f <= 1 for f in fr))
    return ["b", "r", "frac_below_eps", "eps"], [(cfg["b"], r, f, cfg["eps"]) for r, f in res]


def cmd_intersections(cfg, rec):
    from .intersections import simulate_counts
    b, r, n = cfg["b"], cfg["r"], cfg["n"]
    c = simulate_counts(b, r, [n], cfg["runs"], cfg["seed"])
    mt, ma = c.m_tilde()[0], c.m_total()[0]
    rec.metric("m_tilde_mean", mt.mean(), mt.std(ddof=1) / math.sqrt(mt.size) if mt.size > 1 else None)
    rec.metric("m_total_mean", ma.mean(), ma.std(ddof=1) / math.sqrt(ma.size) if ma.size > 1 else None)
    rec.metric("martingale_target", c.profile.Rprime[0] / c.profile.R[0])
    # the alternative kappa^2 xi~/n normalisation differs by the factor kappa^2
    rec.notes["kappa2_normalisation_ratio"] = 2.0 / (b - 1)
    rec.check("survival", bool(np.all(c.xi_tilde >= 1)))
    rec.check("total_ge_surviving", bool(np.all(c.xi_total >= c.xi_tilde)))
    rows = [(b, r, n, i, int(c.xi_tilde[0, i]), int(c.xi_total[0, i]), mt[i], ma[i])
            for i in range(c.xi_tilde.shape[1])]
    return ["b", "r", "n", "run", "xi_tilde", "xi_total", "m_tilde", "m_total"], rows


def cmd_hausdorff(cfg, rec):
    from .intersections import log_hausdorff_values, simulate_counts
    b, r = cfg["b"], cfg["r"]
    ns = sorted(set(_parse_list(cfg["n_list"], int)))
    hs = _parse_list(cfg["h_list"], float)
    c = simulate_counts(b, r, ns, cfg["runs"], cfg["seed"], total_until=0)
    rows = []
    for i, n in enumerate(c.gens):
        for h in hs:
            v = log_hausdorff_values(c.xi_tilde[i], n, h, b)
            se = v.std(ddof=1) / math.sqrt(v.size) if v.size > 1 else 0.0
            rows.append((b, r, n, h, v.mean(), se))
    rec.check("survival", bool(np.all(c.xi_tilde >= 1)))
    return ["b", "r", "n", "h", "sum_mean", "sum_se"], rows


def cmd_energy(cfg, rec):
    from .intersections import energy_batch
    b, r = cfg["b"], cfg["r"]
    ns = sorted(set(_parse_list(cfg["n_list"], int)))
    hs = _parse_list(cfg["h_list"], float)
    res = energy_batch(b, r, ns, hs, cfg["runs"], cfg["seed"])
    rows = []
    for n in ns:
        for h in hs:
            v = res[(n, float(h))]
            se = v.std(ddof=1) / math.sqrt(v.size) if v.size > 1 else 0.0
            rows.append((b, r, n, h, v.mean(), se))
    rec.check("finite", all(math.isfinite(row[4]) for row in rows))
    return ["b", "r", "n", "h", "Q_mean", "Q_se"], rows


def cmd_selftest(cfg, rec, fault=None):
    from .selftest import run_selftest
    results = run_selftest(fault=fault, seed=cfg["seed"] if cfg["seed"] is not None else 20240601)
    for name, ok, detail in results:
        rec.check(name, ok)
        print(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}", file=sys.stderr)
    return ["check", "passed", "detail"], results


HANDLERS = {
    "flow": cmd_flow,
    "correlation-check": cmd_correlation,
    "polymer-sim": cmd_polymer,
    "limit-sim": cmd_limit,
    "disorder-scan": cmd_scan,
    "intersections-sim": cmd_intersections,
    "hausdorff": cmd_hausdorff,
    "energy": cmd_energy,
}


def run(command: str, cfg: dict, fault=None) -> tuple[Record, list, list]:
    rec = Record(command, {k: v for k, v in cfg.items() if k not in ("output", "threads")})
    if command == "selftest":
        header, rows = cmd_selftest(cfg, rec, fault)
    else:
        header, rows = HANDLERS[command](cfg, rec)
    return rec, header, rows


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        cfg = resolve_config(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if cfg["threads"] is None and os.environ.get("DPL_THREADS"):
        try:
            cfg["threads"] = int(os.environ["DPL_THREADS"])
        except ValueError:
            print("usage error: DPL_THREADS must be an integer", file=sys.stderr)
            return EXIT_USAGE
    t0 = time.perf_counter()
    try:
        rec, header, rows = run(args.command, cfg, getattr(args, "inject_fault", None))
    except BudgetError as exc:
        print(f"budget guard tripped: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    wall = time.perf_counter() - t0
    out = cfg["output"] or f"{args.command}.{cfg['format']}"
    text = render(header, rows, cfg["format"])
    if out == "-":
        sys.stdout.write(text)
        meta = f"{args.command}.meta.json"
    else:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        meta = out + ".meta.json"
    with open(meta, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(rec.to_dict(wall), fh, indent=1, sort_keys=True)
        fh.write("\n")
    for name, ok in rec.checks.items():
        if not ok:
            print(f"check failed: {name}", file=sys.stderr)
    return EXIT_OK if rec.passed else EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
