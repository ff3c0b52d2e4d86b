"""Command-line front end.

    fblsi region {wak,wz,gp,lossy} ...   CSV (or JSON) region / rate curves
    fblsi bound eval --kind ... --bound ...  JSON bound report
    fblsi simulate wak ...               JSON trial statistics
    fblsi rd ...                         JSON rate-distortion summary
    fblsi delta ...                      JSON resolvability functional

Exit status 2 means a configuration error, 3 a numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import bounds as B
from .codec_sim import build_code, resolvability_delta, wak_trial
from .density import InfeasibleError
from .instances import (
    STUCK_AT_NOTE,
    GpInstance,
    WakInstance,
    WzInstance,
    biased_binary_wak,
    biased_joint,
    dsbs_wak,
    dsbs_wak_timeshared,
    dsbs_wz,
    stuck_at_decoder_si,
    stuck_at_gp,
)
from .io import ConfigError, gnuplot_script, load_instance, to_json, write_csv
from .prob import Pmf
from .second_order import regions as R
from .second_order.stats import dispersion_stats
from .second_order.rd import ConvergenceError, lossy_second_order, rate_distortion

EXIT_CONFIG = 2
EXIT_NUMERIC = 3

DEFAULT_GP_N = (500, 1000, 2000, 5000, 10_000, 20_000, 50_000, 100_000)


# ---------------------------------------------------------------- parsing helpers


def parse_grid(text: str) -> np.ndarray:
    """'a:b:step' (inclusive of b up to rounding) or a comma list."""
    text = text.strip()
    if not text:
        raise ConfigError("empty grid")
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"grid {text!r} must look like start:stop:step")
        a, b, step = (_number(p, text) for p in parts)
        if step <= 0 or b < a:
            raise ConfigError(f"grid {text!r} is empty")
        count = int(math.floor((b - a) / step + 1e-9)) + 1
        return a + step * np.arange(count)
    vals = np.array([_number(p, text) for p in text.split(",") if p.strip()])
    if vals.size == 0:
        raise ConfigError("empty grid")
    return vals


def _number(part: str, text: str) -> float:
    try:
        return float(part)
    except ValueError as exc:
        raise ConfigError(f"grid {text!r}: {part.strip()!r} is not a number") from exc


def _matrix(text: str, what: str) -> np.ndarray:
    try:
        return np.asarray(json.loads(text), dtype=float)
    except (json.JSONDecodeError, TypeError, ValueError) as exc:
        raise ConfigError(f"{what}: expected a JSON numeric array") from exc


def _need(args, *names):
    missing = [n for n in names if getattr(args, n, None) is None]
    if missing:
        flags = ", ".join("--" + n.replace("_", "-") for n in missing)
        raise ConfigError(f"preset {args.preset!r} needs {flags}")


def _note(args) -> None:
    if getattr(args, "preset", None) == "stuck-at":
        print(f"note: {STUCK_AT_NOTE}", file=sys.stderr)


def _instance(args, kind: str):
    """Build the instance from --instance or --preset (beta may be overridden)."""
    if getattr(args, "instance", None):
        inst = load_instance(args.instance)
        want = {"wak": WakInstance, "wz": WzInstance, "gp": GpInstance}[kind]
        if not isinstance(inst, want):
            raise ConfigError(f"instance file is not a {kind} instance")
        return inst
    preset = getattr(args, "preset", None)
    if preset is None:
        raise ConfigError("either --preset or --instance is required")
    _note(args)
    if kind == "wak":
        if preset == "dsbs":
            _need(args, "alpha", "beta")
            return dsbs_wak(args.alpha, args.beta)
        if preset == "biased":
            _need(args, "p", "alpha", "beta")
            return biased_binary_wak(args.p, args.alpha, args.beta)
    elif kind == "wz" and preset == "dsbs":
        _need(args, "alpha", "beta", "D")
        return dsbs_wz(args.alpha, args.beta, args.D)
    elif kind == "gp" and preset == "stuck-at":
        _need(args, "p", "alpha")
        return stuck_at_gp(args.p, args.alpha)
    raise ConfigError(f"preset {preset!r} is not available for {kind}")


def _add_instance_flags(p, presets):
    p.add_argument("--preset", choices=presets)
    p.add_argument("--instance", help="JSON instance file")
    p.add_argument("--alpha", type=float, help="crossover of the source / channel (required by presets)")
    p.add_argument("--beta", type=float, help="test-channel crossover")
    p.add_argument("--p", type=float, help="bias P_Y(0) or stuck-at fault probability")
    p.add_argument("--D", type=float, help="distortion level")


def _add_output_flags(p, default_format="csv"):
    p.add_argument("--format", choices=("csv", "json"), default=default_format)
    p.add_argument("--output", "-o", help="write here instead of stdout")


def _emit(args, text: str) -> None:
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)


def _flags(args) -> dict:
    skip = {"func", "output", "gnuplot", "format"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip and v is not None}


def _emit_table(args, columns, rows, meta) -> None:
    meta = dict(meta)
    meta["flags"] = _flags(args)
    if args.format == "json":
        _emit(args, to_json({"meta": meta, "columns": list(columns), "rows": [list(map(float, r)) for r in rows]}))
    else:
        _emit(args, write_csv(columns, rows, meta))
    if getattr(args, "gnuplot", None):
        if not args.output:
            raise ConfigError("--gnuplot needs --output for the data file")
        Path(args.gnuplot).write_text(gnuplot_script(args.output, columns, f"{args.kind} region"))


# ---------------------------------------------------------------- region


def _wak_union(objs, n, eps, variant, logterm, num, rho_grid=None, lam_grid=None):
    """Pareto envelope of the union of the regions of several instances."""
    pts, meta = [], None
    for obj in objs:
        curve = R.wak_region(obj, n, eps, variant, rho_grid=rho_grid, lam_grid=lam_grid,
                             logterm=logterm, num=num)
        pts.append(curve.points)
        meta = meta or dict(curve.meta)
    meta.pop("instance", None)
    return R._pareto(np.vstack(pts)), meta


def _wak_with_beta(args, beta):
    if args.preset == "dsbs":
        _need(args, "alpha")
        return dsbs_wak(args.alpha, beta)
    _need(args, "p", "alpha")
    return biased_binary_wak(args.p, args.alpha, beta)


def _region_wak(args, logterm):
    n, eps = _need_n(args), args.eps
    lams = None if args.lam_grid is None else parse_grid(args.lam_grid)
    rhos = None if args.rho_grid is None else parse_grid(args.rho_grid)
    if args.variant == "timeshare":
        if args.preset != "dsbs":
            raise ConfigError("the time-sharing variant is defined for the dsbs preset")
        _need(args, "alpha")
        lams = parse_grid("0:1:0.02") if lams is None else lams
        objs = [dsbs_wak_timeshared(args.alpha, args.beta0, args.beta1, float(l)) for l in lams]
        pts, meta = _wak_union(objs, n, eps, "cs", logterm, args.num)
        meta.update(construction="timeshare-union", beta0=args.beta0, beta1=args.beta1,
                    lam_points=int(lams.size))
        return ("R1", "R2"), pts, meta
    if args.variant == "corner":
        if args.instance:
            obj = _instance(args, "wak").p_xy
        elif args.preset == "biased":
            _need(args, "p", "alpha")
            obj = biased_joint(args.p, args.alpha)
        else:
            _need(args, "alpha")
            obj = dsbs_wak(args.alpha, 0.0).p_xy
        curve = R.wak_region(obj, n, eps, "corner", logterm=logterm, num=args.num)
        return curve.coords, curve.points, curve.meta
    if args.beta_grid is not None:
        if args.preset not in ("dsbs", "biased"):
            raise ConfigError("--beta-grid needs the dsbs or biased preset")
        betas = parse_grid(args.beta_grid)
        objs = [_wak_with_beta(args, float(b)) for b in betas]
        pts, meta = _wak_union(objs, n, eps, args.variant, logterm, args.num, rhos, lams)
        meta.update(construction=f"{args.variant}-union-over-beta", beta_points=int(betas.size))
        return ("R1", "R2"), pts, meta
    curve = R.wak_region(_instance(args, "wak"), n, eps, args.variant, rho_grid=rhos,
                         lam_grid=lams, logterm=logterm, num=args.num)
    return curve.coords, curve.points, curve.meta


def _need_n(args) -> int:
    if args.n is None:
        raise ConfigError("--n is required")
    if args.n < 1:
        raise ConfigError("--n must be positive")
    return args.n


def _region_gp(args, logterm):
    inst = _instance(args, "gp")
    if args.n is not None and (args.cost_curve or math.isfinite(inst.budget_gamma)):
        curve = R.gp_region(inst, args.n, args.eps, logterm=logterm, num=args.num)
        return curve.coords, curve.points, curve.meta
    ns = [_need_n(args)] if args.n is not None else (
        [int(v) for v in parse_grid(args.n_grid)] if args.n_grid is not None else list(DEFAULT_GP_N))
    if any(n < 1 for n in ns):
        raise ConfigError("blocklengths must be positive")
    first = float(dispersion_stats(inst.flattened(), "gp").j_mean[:2].sum())
    si = stuck_at_decoder_si(args.p, args.alpha) if args.preset == "stuck-at" else None
    cols = ["n", "R_GP", "C_first_order"] + (["C_decoder_si"] if si else [])
    rows = []
    for n in ns:
        row = [n, R.gp_rate(inst, n, args.eps, logterm=logterm), first]
        if si:
            row.append(R.channel_rate(si, n, args.eps, logterm=logterm))
        rows.append(row)
    meta = {"construction": "gp-rate-vs-n", "eps": args.eps, "logterm": logterm}
    fp = inst.fingerprint()
    meta["instance"] = fp
    return cols, rows, meta


def _region_wz(args, logterm):
    inst = _instance(args, "wz")
    curve = R.wz_region(inst, _need_n(args), args.eps, logterm=logterm, num=args.num)
    return curve.coords, curve.points, curve.meta


def _source(args):
    if args.uniform_binary:
        p = Pmf.uniform(2)
    elif args.px:
        p = Pmf(np.array(parse_grid(args.px)))
    else:
        raise ConfigError("give --uniform-binary or --px")
    d = _matrix(args.distortion, "--distortion") if args.distortion else 1.0 - np.eye(p.alphabet_size)
    return p, d


def _region_lossy(args, logterm):
    p, d = _source(args)
    n = _need_n(args)
    grid = parse_grid("0.02:0.4:0.02" if args.d_grid is None else args.d_grid)
    rows = []
    for level in grid:
        res = lossy_second_order(p, d, float(level), n, args.eps)
        rows.append([level, res.rate, res.second_order_rate + R.log_term(n, logterm)])
    meta = {"construction": "lossy-d-tilted", "n": n, "eps": args.eps, "logterm": logterm}
    return ("D", "R_first_order", "R_second_order"), rows, meta


def cmd_region(args) -> None:
    if not 0 < args.eps < 1:
        raise ConfigError("--eps must lie in (0, 1)")
    logterm = not args.drop_logterm
    handler = {"wak": _region_wak, "wz": _region_wz, "gp": _region_gp, "lossy": _region_lossy}[args.kind]
    cols, rows, meta = handler(args, logterm)
    if len(rows) == 0:
        raise InfeasibleError("no achievable point on the requested grid")
    _emit_table(args, cols, rows, meta)


# ---------------------------------------------------------------- bound


_BOUNDS = {
    "wak": {"cs": B.wak_cs_bound, "cs-simple": B.wak_cs_simplified, "modified": B.wak_modified_bound,
            "corner": B.wak_corner_bound, "kuzuoka": B.wak_kuzuoka_bound, "verdu": B.wak_verdu_bound},
    "wz": {"cs": B.wz_cs_bound, "cs-simple": B.wz_cs_simplified, "verdu": B.wz_verdu_bound,
           "iwata": B.wz_iwata_bound},
    "gp": {"cs": B.gp_cs_bound, "cs-simple": B.gp_cs_simplified, "verdu": B.gp_verdu_bound,
           "tan": B.gp_tan_bound},
}

_PARAM_FLAGS = ("log_m", "log_l", "log_big_l", "log_j", "gamma_b", "gamma_c", "gamma_p", "gamma_s", "delta")


def _bound_params(args) -> B.BoundParams:
    n = _need_n(args)
    given = {k: getattr(args, k) for k in _PARAM_FLAGS if getattr(args, k) is not None}
    if args.auto_params:
        if args.log_m is None:
            raise ConfigError("--auto-params needs --log-m")
        if args.kind == "wak":
            if args.log_l is None:
                raise ConfigError("--auto-params needs --log-l for WAK")
            if args.bound == "corner":
                base = B.corner_auto_params(n, args.log_m, args.log_l)
            else:
                base = B.wak_auto_params(n, args.log_m, args.log_l, args.rho)
        else:
            if args.log_big_l is None:
                raise ConfigError("--auto-params needs --log-big-l")
            make = B.wz_auto_params if args.kind == "wz" else B.gp_auto_params
            base = make(n, args.log_m, args.log_big_l)
        params = base.as_dict()
        params.update(given)
    else:
        params = dict(given, n=n)
    params["n"] = n
    if params.get("log_m") is None:
        raise ConfigError("bound needs --log-m")
    return B.BoundParams(**params)


def cmd_bound(args) -> None:
    table = _BOUNDS[args.kind]
    if args.bound not in table:
        raise ConfigError(f"bound {args.bound!r} is not defined for {args.kind}; choose from {sorted(table)}")
    params = _bound_params(args)
    inst = _instance(args, args.kind)
    ev = B.TailEvaluator(args.tail, args.samples, args.seed)
    report = table[args.bound](inst, params, ev)
    out = report.to_dict()
    out["instance"] = inst.fingerprint()
    _emit(args, to_json(out))


# ---------------------------------------------------------------- simulate


def cmd_simulate(args) -> None:
    n = _need_n(args)
    if args.L < 1 or (args.K is not None and args.K < 1):
        raise ConfigError("--K and --L must be positive")
    if args.trials < 1:
        raise ConfigError("--trials must be positive")
    if args.preset is None and not args.instance:
        inst = dsbs_wak(0.11, 0.2)
    else:
        inst = _instance(args, "wak")
    log_l = math.log2(args.L)
    auto = B.wak_auto_params(n, args.logM, log_l)
    params = B.BoundParams(n=n, log_m=args.logM, log_l=log_l,
                           gamma_b=auto.gamma_b if args.gamma_b is None else args.gamma_b,
                           gamma_c=auto.gamma_c if args.gamma_c is None else args.gamma_c,
                           delta=auto.delta if args.delta is None else args.delta)
    code = None
    if args.K is not None:
        p_u = inst.flattened().joint()[0].sum(axis=(1, 2))
        code = build_code(p_u, n, args.K, args.L, args.seed if args.code_seed is None else args.code_seed)
    stats = wak_trial(inst, n, params, args.trials, args.seed, code=code, bin_seed=args.bin_seed)
    out = {"stats": stats.to_dict(), "params": params.as_dict(), "instance": inst.fingerprint(),
           "mode": "ensemble" if code is None else "fixed-code", "seed": args.seed}
    if code is not None:
        out["K"] = args.K
    if args.with_bound:
        out["cs_bound"] = B.wak_cs_bound(inst, params).to_dict()
    _emit(args, to_json(out))


# ---------------------------------------------------------------- rd and delta


def cmd_rd(args) -> None:
    p, d = _source(args)
    if args.D is None:
        raise ConfigError("--D is required")
    res = rate_distortion(p, d, args.D)
    out = {"rate": res.rate, "lambda_star": res.lambda_star, "q_xhat": res.q_xhat,
           "achieved_distortion": res.distortion, "iterations": res.iterations}
    if args.n is not None:
        if not 0 < args.eps < 1:
            raise ConfigError("--eps must lie in (0, 1)")
        lossy = lossy_second_order(p, d, args.D, args.n, args.eps)
        out.update(dispersion=lossy.dispersion, second_order_rate=lossy.second_order_rate, n=args.n, eps=args.eps)
    else:
        lossy = lossy_second_order(p, d, args.D, 1, 0.5)
        out["dispersion"] = lossy.dispersion
    _emit(args, to_json(out))


def cmd_delta(args) -> None:
    if args.puz:
        p_uz = _matrix(args.puz, "--puz")
    else:
        inst = _instance(args, "wak").flattened()
        p_uz = inst.joint()[0].sum(axis=1)  # u y
    if args.gamma_c is None:
        raise ConfigError("--gamma-c is required")
    out = {"gamma_c": args.gamma_c, "relaxation": 2.0 ** args.gamma_c if args.gamma_c < 1024 else math.inf}
    n = 1 if args.n is None else args.n
    if n < 1:
        raise ConfigError("--n must be positive")
    out["n"] = n
    out["delta"] = B.delta_quantity(p_uz, args.gamma_c) if n == 1 else resolvability_delta(p_uz, n, args.gamma_c)
    _emit(args, to_json(out))


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fblsi", description="Finite-blocklength bounds and second-order regions")
    sub = ap.add_subparsers(dest="command", required=True)

    rg = sub.add_parser("region", help="trace a second-order region or rate curve")
    rg.add_argument("kind", choices=("wak", "wz", "gp", "lossy"))
    _add_instance_flags(rg, ("dsbs", "biased", "stuck-at"))
    rg.add_argument("--n", type=int)
    rg.add_argument("--n-grid", help="blocklengths for the GP rate curve")
    rg.add_argument("--eps", type=float, default=0.1)
    rg.add_argument("--variant", default="cs", choices=("cs", "modified", "verdu_split", "corner", "timeshare"))
    rg.add_argument("--beta-grid", help="union over test channels, e.g. 0:0.5:0.005")
    rg.add_argument("--lam-grid")
    rg.add_argument("--rho-grid")
    rg.add_argument("--beta0", type=float, default=0.0)
    rg.add_argument("--beta1", type=float, default=0.5)
    rg.add_argument("--num", type=int, default=200, help="boundary points per curve")
    rg.add_argument("--cost-curve", action="store_true", help="GP: trace (R, Gamma) instead of R vs n")
    rg.add_argument("--px", help="lossy: comma-separated source pmf")
    rg.add_argument("--uniform-binary", action="store_true")
    rg.add_argument("--distortion", help="lossy: JSON distortion matrix (default Hamming)")
    rg.add_argument("--d-grid", help="lossy: distortion levels")
    rg.add_argument("--drop-logterm", action="store_true", help="omit the 2 log n / n term")
    rg.add_argument("--gnuplot", help="also write a gnuplot script here")
    _add_output_flags(rg)
    rg.set_defaults(func=cmd_region)

    bd = sub.add_parser("bound", help="evaluate a non-asymptotic bound")
    bd.add_argument("action", choices=("eval",))
    bd.add_argument("--kind", required=True, choices=("wak", "wz", "gp"))
    bd.add_argument("--bound", required=True)
    _add_instance_flags(bd, ("dsbs", "biased", "stuck-at"))
    bd.add_argument("--n", type=int)
    for name in _PARAM_FLAGS:
        bd.add_argument("--" + name.replace("_", "-"), type=float)
    bd.add_argument("--rho", type=float, default=0.0)
    bd.add_argument("--auto-params", action="store_true")
    bd.add_argument("--tail", choices=("exact", "mc", "gauss"), default="exact")
    bd.add_argument("--samples", type=int, default=100_000)
    bd.add_argument("--seed", type=int, default=0)
    _add_output_flags(bd, "json")
    bd.set_defaults(func=cmd_bound)

    sm = sub.add_parser("simulate", help="Monte Carlo run of the WAK code (default source: dsbs alpha=0.11, beta=0.2)")
    sm.add_argument("kind", choices=("wak",))
    _add_instance_flags(sm, ("dsbs", "biased"))
    sm.add_argument("--n", type=int, default=4)
    sm.add_argument("--K", type=int, help="rows of a fixed codebook (omit for the code ensemble)")
    sm.add_argument("--L", type=int, default=4)
    sm.add_argument("--logM", type=float, default=3.0)
    sm.add_argument("--gamma-b", type=float)
    sm.add_argument("--gamma-c", type=float)
    sm.add_argument("--delta", type=float, help="slack term reported with --with-bound (default 1/n)")
    sm.add_argument("--trials", type=int, default=10_000)
    sm.add_argument("--seed", type=int, default=0)
    sm.add_argument("--code-seed", type=int)
    sm.add_argument("--bin-seed", type=int)
    sm.add_argument("--with-bound", action="store_true", help="add the analytic bound to the output")
    _add_output_flags(sm, "json")
    sm.set_defaults(func=cmd_simulate)

    rd = sub.add_parser("rd", help="rate-distortion function and lossy dispersion")
    rd.add_argument("--px")
    rd.add_argument("--uniform-binary", action="store_true")
    rd.add_argument("--distortion")
    rd.add_argument("--D", type=float)
    rd.add_argument("--n", type=int)
    rd.add_argument("--eps", type=float, default=0.1)
    _add_output_flags(rd, "json")
    rd.set_defaults(func=cmd_rd)

    dl = sub.add_parser("delta", help="resolvability functional Delta(gamma_c, P_UZ)")
    dl.add_argument("--puz", help="JSON matrix P_UZ")
    _add_instance_flags(dl, ("dsbs", "biased"))
    dl.add_argument("--gamma-c", type=float)
    dl.add_argument("--n", type=int)
    _add_output_flags(dl, "json")
    dl.set_defaults(func=cmd_delta)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "format", "json") == "csv" and args.command != "region":
        args.format = "json"
    try:
        args.func(args)
    except (ConfigError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InfeasibleError, ConvergenceError, ArithmeticError, RuntimeError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return 0


if __name__ == "__main__":
    sys.exit(main())
