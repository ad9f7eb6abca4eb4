"""Command-line front end.

Subcommands:

    evolve      run the flow for each configured initial-data scale and
                write trace_<scale>.csv files plus run_manifest.json
    verify      run the randomized inequality suites and write
                verify_report.csv plus witness files
    analyze     fit decay rates / compute spread statistics from traces
                and write decay_report.csv / decay_report.txt
    graph-dump  print (or write) the plain-text graph dump

Exit codes: 0 success, 1 failure or error, 2 success with warnings
(a tainted trace: boundary influence exceeded the leak threshold).
All outputs are deterministic byte-for-byte for a fixed config and seed;
manifests record sha256 hashes of every file written.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import asdict
from typing import Optional

import numpy as np

from . import __version__
from .config import ExperimentConfig, load_config
from .decay import (fit_power_law, format_report, invariant_statistic,
                    log_corrected_fit, universal_bound_statistic,
                    write_stats_csv)
from .density import universal_nu_default
from .evolution import FlowTrace, evolve, make_initial, mass_drift
from .inequalities import (SuiteResult, radial_tail_sums,
                           run_caccioppoli_suite, run_faber_krahn_suite,
                           run_gn_suite, run_sobolev_suite, thread_count,
                           write_suite_report, write_witness)
from .lattice import build_lattice_ball, graph_dump
from .scaling import ScalingToolkit, rate_exponents, scaling_sandwich_check


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _update_manifest(outdir: str, command: str, cfg: ExperimentConfig,
                     filenames: list[str]) -> str:
    path = os.path.join(outdir, "run_manifest.json")
    manifest = {"tool": f"plapflow {__version__}", "commands": [],
                "config": {}, "outputs": {}}
    if os.path.exists(path):
        with open(path, "r") as fh:
            manifest = json.load(fh)
    if command not in manifest["commands"]:
        manifest["commands"].append(command)
    manifest["config"] = asdict(cfg)
    for name in filenames:
        manifest["outputs"][name] = _sha256(os.path.join(outdir, name))
    with open(path, "w", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _build(cfg: ExperimentConfig):
    g = build_lattice_ball(cfg.graph.N, cfg.graph.R)
    profile = cfg.density.to_profile()
    return g, profile


def _outdir(args, cfg: ExperimentConfig) -> str:
    out = args.out if args.out else cfg.output_dir
    os.makedirs(out, exist_ok=True)
    return out


def _scale_name(scale: float) -> str:
    return f"trace_{scale:g}.csv"


# -- evolve --------------------------------------------------------------------

def _cmd_evolve(args) -> int:
    cfg = load_config(args.config, args.set)
    out = _outdir(args, cfg)
    g, profile = _build(cfg)
    u0 = make_initial(g, cfg.initial.kind, radius=cfg.initial.radius,
                      width=cfg.initial.width, amplitude=cfg.initial.amplitude,
                      path=cfg.initial.path)
    evo = cfg.flow.to_evolution()
    written, any_tainted = [], False
    for scale in cfg.initial.scales:
        meta = {**cfg.echo_meta(), "scale": scale}
        trace = evolve(g, profile, scale * u0, evo, meta=meta)
        name = _scale_name(scale)
        trace.write_csv(os.path.join(out, name))
        written.append(name)
        any_tainted = any_tainted or trace.tainted
        flag = " [tainted]" if trace.tainted else ""
        print(f"{name}: steps={trace.meta['steps']} "
              f"final |u|_inf={trace.linf[-1]:.6g}{flag}")
    _update_manifest(out, "evolve", cfg, written)
    return 2 if any_tainted else 0


# -- verify --------------------------------------------------------------------

_BUDGET_SENSE = {
    # suite name -> comparison; a suite passes when worst_ratio OP budget holds
    "sobolev": "<=",            # largest required constant
    "faber_krahn": "<=",        # largest required constant
    "gn": "<=",                 # largest required constant
    "caccioppoli": ">",         # smallest cutoff ratio
    "tail_sums_growth": "<=",   # normalized band width max/min
    "tail_sums_tail": "<=",     # last-to-half partial sum ratio
    "sandwich": ">= -",         # worst two-sided margin, slack -budget
}

_DEFAULT_BUDGETS = {"caccioppoli": 0.0, "sandwich": 1e-9}


def _budget_pass(name: str, value: float, budget: Optional[float]) -> bool:
    if budget is None:
        return True
    if not np.isfinite(value):
        return False
    op = _BUDGET_SENSE[name]
    if op == "<=":
        return value <= budget
    if op == ">":
        return value > budget
    return value >= -budget


def _cmd_verify(args) -> int:
    cfg = load_config(args.config, args.set)
    out = _outdir(args, cfg)
    g, profile = _build(cfg)
    vc = cfg.verify
    p, N = cfg.flow.p, cfg.graph.N
    threads = thread_count(args.threads)
    results, witness_files, failures = [], [], []

    for suite in vc.suites:
        if suite == "sobolev":
            res = run_sobolev_suite(g, p, vc.trials, vc.seed, threads=threads)
            rows = [res]
        elif suite == "faber_krahn":
            res = run_faber_krahn_suite(g, p, vc.trials, vc.seed + 1,
                                        threads=threads)
            rows = [res]
        elif suite == "gn":
            if not (2.0 < p < N):
                print(f"gn: skipped (needs 2 < p < N, have p={p}, N={N})")
                continue
            tk = ScalingToolkit(p=p, N=N, profile=profile)
            res = run_gn_suite(g, profile, tk, vc.gn_q, vc.gn_r,
                               vc.trials, vc.seed + 2, threads=threads)
            rows = [res]
        elif suite == "caccioppoli":
            res = run_caccioppoli_suite(p, vc.caccioppoli_q,
                                        vc.caccioppoli_samples, vc.seed + 3)
            rows = [res]
        elif suite == "sandwich":
            if not (2.0 < p < N):
                print(f"sandwich: skipped (needs 2 < p < N, have p={p}, N={N})")
                continue
            tk = ScalingToolkit(p=p, N=N, profile=profile)
            rep = scaling_sandwich_check(tk, gammas=(0.5, 2.0, 5.0),
                                         radii=(2.0, 8.0, 32.0))
            rows = [SuiteResult("sandwich", len(rep.checks), rep.worst_margin,
                                vc.seed, None, np.array([rep.worst_margin]),
                                {"skipped": rep.skipped})]
        elif suite == "tail_sums":
            betas = vc.tail_betas if vc.tail_betas is not None \
                else (N - 1.0, N + 1.0)
            rows = []
            for beta in betas:
                rep = radial_tail_sums(g, beta)
                if rep.mode == "growth":
                    value = rep.band[1] / rep.band[0]
                    name = "tail_sums_growth"
                    ratios = rep.ratios
                else:
                    value = rep.last_to_half
                    name = "tail_sums_tail"
                    ratios = np.array([value])
                rows.append(SuiteResult(name, len(rep.radii), value, vc.seed,
                                        rep.sums, ratios,
                                        {"beta": beta, "mode": rep.mode}))
        else:
            raise ValueError(f"unknown verify suite {suite!r}")

        for res in rows:
            wf = f"witness_{res.name}.txt"
            if res.witness is not None:
                write_witness(os.path.join(out, wf), res.witness)
            else:
                wf = ""
            witness_files.append(wf)
            results.append(res)
            budget = vc.budgets.get(res.name, _DEFAULT_BUDGETS.get(res.name))
            ok = _budget_pass(res.name, res.worst_ratio, budget)
            status = "ok" if ok else "FAIL"
            if budget is None:
                status = "ok (no budget)"
            else:
                status += f" (budget {budget:g})"
            if not ok:
                failures.append(res.name)
            print(f"{res.name}: worst_ratio={res.worst_ratio:.6g} "
                  f"trials={res.trials} {status}")

    report = os.path.join(out, "verify_report.csv")
    write_suite_report(report, results, witness_files)
    files = ["verify_report.csv"] + [w for w in witness_files if w]
    _update_manifest(out, "verify", cfg, files)
    return 1 if failures else 0


# -- analyze -------------------------------------------------------------------

def _load_traces(out: str) -> list[tuple[str, FlowTrace]]:
    names = sorted(n for n in os.listdir(out)
                   if n.startswith("trace_") and n.endswith(".csv"))
    if not names:
        raise ValueError(f"no trace_*.csv files in {out!r}; run evolve first")
    return [(n, FlowTrace.from_csv(os.path.join(out, n))) for n in names]


def _check_trace_matches(cfg: ExperimentConfig, name: str, trace: FlowTrace) -> None:
    expected = {"N": cfg.graph.N, "R": cfg.graph.R, "p": cfg.flow.p,
                "family": cfg.density.family, "alpha": cfg.density.alpha,
                "beta": cfg.density.beta}
    for key, want in expected.items():
        have = trace.meta.get(key)
        if have is None:
            raise ValueError(f"{name}: missing {key!r} in trace metadata")
        if isinstance(want, str):
            match = str(have) == want
        else:
            match = abs(float(have) - float(want)) <= 1e-12 * max(1.0, abs(float(want)))
        if not match:
            raise ValueError(f"{name}: trace was produced with {key}={have}, "
                             f"config says {key}={want}")


def _analyze_decay(cfg: ExperimentConfig, traces) -> tuple[dict, bool, bool]:
    name, trace = traces[0]
    p, N = cfg.flow.p, cfg.graph.N
    alpha, beta = cfg.density.alpha, cfg.density.beta
    exps = rate_exponents(N, p, alpha)
    target = -exps.rate
    window = cfg.analysis.fit_window
    frac = cfg.analysis.window_fraction
    tk = ScalingToolkit(p=p, N=N, profile=cfg.density.to_profile()) \
        if p > 2.0 else None
    if cfg.density.family == "power_log" and tk is not None:
        corrected = log_corrected_fit(trace, tk, window_fraction=frac)
        fit = corrected.fit
        correction = corrected.correction
    else:
        fit = fit_power_law(trace.t, trace.linf, t_window=window,
                            window_fraction=frac)
        correction = 0.0
    err = abs(fit.exponent - target)
    rate_ok = err <= cfg.analysis.rate_tolerance
    stats = {
        "experiment": "decay", "trace": name,
        "N": N, "p": p, "alpha": alpha, "beta": beta,
        "family": cfg.density.family,
        "fitted_exponent": fit.exponent, "fit_stderr": fit.stderr,
        "target_exponent": target, "abs_error": err,
        "rate_tolerance": cfg.analysis.rate_tolerance, "rate_ok": rate_ok,
        "log_correction": correction,
        "window_lo": fit.window[0], "window_hi": fit.window[1],
        "n_points": fit.n_points,
        "mass_drift": mass_drift(trace),
        "tainted": trace.tainted, "taint_t": trace.taint_t,
    }
    if tk is not None:
        try:
            inv = invariant_statistic(trace, tk, window_fraction=frac)
            stats["q_ratio"] = inv.ratio
            stats["q_slope"] = inv.late_decade_slope
            stats["q_skipped"] = inv.n_skipped
        except ValueError as exc:
            stats["q_ratio"] = None
            stats["q_note"] = str(exc)
    return stats, rate_ok, trace.tainted


def _analyze_universal(cfg: ExperimentConfig, traces) -> tuple[dict, bool, bool]:
    p, N = cfg.flow.p, cfg.graph.N
    alpha = cfg.density.alpha
    nu = cfg.analysis.nu
    if nu is None:
        nu = universal_nu_default(N, p, alpha) if p > 2.0 else 1.0
    rep = universal_bound_statistic([tr for _, tr in traces], nu=nu,
                                    window_fraction=cfg.analysis.window_fraction)
    tainted = any(tr.tainted for _, tr in traces)
    enforce = p > 2.0  # p = 2 is the negative control: spread is reported only
    spread_ok = (rep.s_spread <= cfg.analysis.spread_budget) if enforce else True
    stats = {
        "experiment": "universal", "n_traces": len(traces),
        "N": N, "p": p, "alpha": alpha, "nu": nu,
        "s_exponent": rep.s_exponent, "s_spread": rep.s_spread,
        "spread_budget": cfg.analysis.spread_budget if enforce else None,
        "spread_ok": spread_ok if enforce else None,
        "i_exponent": rep.i_exponent,
        "i_spread": rep.i_spread,
        "tainted": tainted,
    }
    for (name, _), s in zip(traces, rep.s_values):
        stats[f"s_median[{name}]"] = s
    if rep.i_values is not None:
        for (name, _), s in zip(traces, rep.i_values):
            stats[f"i_median[{name}]"] = s
    return stats, spread_ok, tainted


def _cmd_analyze(args) -> int:
    cfg = load_config(args.config, args.set)
    out = _outdir(args, cfg)
    traces = _load_traces(out)
    for name, trace in traces:
        _check_trace_matches(cfg, name, trace)
    if cfg.experiment == "decay":
        stats, ok, tainted = _analyze_decay(cfg, traces)
    else:
        stats, ok, tainted = _analyze_universal(cfg, traces)
    write_stats_csv(os.path.join(out, "decay_report.csv"), stats)
    text = format_report(f"plapflow {cfg.experiment} report", stats)
    with open(os.path.join(out, "decay_report.txt"), "w", newline="\n") as fh:
        fh.write(text)
    print(text, end="")
    _update_manifest(out, "analyze", cfg,
                     ["decay_report.csv", "decay_report.txt"])
    if not ok:
        return 1
    return 2 if tainted else 0


# -- graph-dump ----------------------------------------------------------------

def _cmd_graph_dump(args) -> int:
    cfg = load_config(args.config, args.set)
    g, _ = _build(cfg)
    text = graph_dump(g)
    if args.out_file:
        with open(args.out_file, "w", newline="\n") as fh:
            fh.write(text)
        print(f"wrote {args.out_file}")
    else:
        sys.stdout.write(text)
    return 0


# -- entry point ---------------------------------------------------------------

def _add_common(sp) -> None:
    sp.add_argument("--config", required=True, help="TOML config file")
    sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    help="override a config entry, e.g. flow.p=2.5")
    sp.add_argument("--out", default=None,
                    help="output directory (default: config output_dir)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plapflow",
        description="Doubly nonlinear p-Laplacian flows on truncated lattices")
    parser.add_argument("--version", action="version",
                        version=f"plapflow {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("evolve", help="run the flow and write traces")
    _add_common(sp)
    sp.set_defaults(fn=_cmd_evolve)

    sp = sub.add_parser("verify", help="run randomized inequality suites")
    _add_common(sp)
    sp.add_argument("--threads", type=int, default=None,
                    help="trial-loop threads (default: PLAPFLOW_THREADS or 1)")
    sp.set_defaults(fn=_cmd_verify)

    sp = sub.add_parser("analyze", help="extract decay statistics from traces")
    _add_common(sp)
    sp.set_defaults(fn=_cmd_analyze)

    sp = sub.add_parser("graph-dump", help="write the plain-text graph dump")
    _add_common(sp)
    sp.add_argument("--out-file", default=None,
                    help="write to this path instead of stdout")
    sp.set_defaults(fn=_cmd_graph_dump)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
