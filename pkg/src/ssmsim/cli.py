"""Command-line interface.

Exit codes: 0 when the run completed and every feasibility check passed,
1 when the scenario turned out infeasible, 2 on usage or configuration errors.
Powers may be given in dBm on the command line; everything written to disk
is in watts.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any

from . import channel, network_opt, oracle, plotting
from .group_opt import GroupProblemData, run_algorithm1
from .model import (ConfigError, CoverageGroup, ScenarioConfig, build_geometry,
                    dbm_to_watt, form_coverage_groups)
from .preset_search import PresetSearchError, PresetSearchReport, search_sizes
from .timeshare import TimeShareInfeasible

log = logging.getLogger("ssmsim")

EXIT_OK, EXIT_INFEASIBLE, EXIT_USAGE = 0, 1, 2
SANDWICH_TOL = 1e-6


class UsageError(Exception):
    pass


def _load_config(args) -> ScenarioConfig:
    cfg = ScenarioConfig.load(args.config) if args.config else ScenarioConfig()
    if getattr(args, "tx_power_dbm", None) is not None:
        cfg = cfg.replace(tx_power=dbm_to_watt(args.tx_power_dbm))
    return cfg


def _load_channels(path: str, cfg: ScenarioConfig):
    cs = channel.load(path)
    if (cs.n_bs, cs.n_elem) != (cfg.n_bs, cfg.n_elem):
        raise UsageError(f"{path}: array sizes N={cs.n_bs}, M={cs.n_elem} differ from the "
                         f"config ({cfg.n_bs}, {cfg.n_elem})")
    return cs


def _cabin(cs, cfg: ScenarioConfig):
    """Geometry and coverage groups of the configured cabin, checked against ``cs``."""
    geom = build_geometry(cfg)
    if (cs.n_ue, cs.n_ssm) != (geom.n_ue, geom.n_ssm):
        raise UsageError(f"channel file has K={cs.n_ue}, L={cs.n_ssm} but the config "
                         f"describes K={geom.n_ue}, L={geom.n_ssm}")
    return geom, form_coverage_groups(geom, cfg)


def _geometry_path(out: Path) -> Path:
    return out.with_name(out.stem + ".geometry.json")


# --- subcommands ------------------------------------------------------------------

def cmd_gen_channels(args) -> int:
    cfg = _load_config(args)
    geom = build_geometry(cfg)
    cs = channel.synthesize(geom, cfg)
    out = Path(args.out)
    manifest = channel.export(cs, out)
    _geometry_path(manifest).write_text(json.dumps(geom.to_dict(), indent=2), encoding="utf-8")
    print(f"wrote {manifest} (K={cs.n_ue}, L={cs.n_ssm}, N={cs.n_bs}, M={cs.n_elem})")
    return EXIT_OK


def cmd_search_presets(args) -> int:
    cfg = _load_config(args)
    cs = _load_channels(args.channels, cfg)
    geom, groups = _cabin(cs, cfg)
    report = search_sizes(cs, groups, cfg, geom.bs_distance(), seed=args.seed)
    out = Path(args.out)
    report.save(out)
    plotting.preset_sizes(report.to_dict(), out.with_suffix(".svg"))
    bad = [l for l, ok in enumerate(report.feasible) if not ok]
    print(f"wrote {out}; sizes {report.m_bar}")
    if bad:
        print(f"SSMs {bad} cannot sustain any candidate size", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


def _run_mode(cs, groups, presets, cfg, mode, seed, ue_row, out: Path) -> dict[str, Any]:
    net, sols = network_opt.run_pipeline(cs, groups, presets, cfg, mode, seed, ue_row)
    results = network_opt.results_dict(net, sols, cfg)
    out.mkdir(parents=True, exist_ok=True)
    network_opt.write_results(out / "results.json", results)
    network_opt.write_rates_csv(out / "rates.csv", net, ue_row)
    plotting.all_for_results(results, out)
    print(f"{mode}: min rate {net.min_rate / 1e6:.3f} Mbit/s -> {out}")
    return results


def _feasible(results: dict[str, Any]) -> bool:
    return all(results["feasible"].values())


def cmd_optimize(args) -> int:
    cfg = _load_config(args)
    if not args.presets:
        raise UsageError("--presets is required: every mode uses the searched reflecting areas")
    cs = _load_channels(args.channels, cfg)
    geom, groups = _cabin(cs, cfg)
    report = PresetSearchReport.load(args.presets)
    if len(report.m_bar) != cs.n_ssm:
        raise UsageError(f"{args.presets} holds {len(report.m_bar)} SSMs, channels have {cs.n_ssm}")
    presets = report.presets(cs.n_elem)
    out = Path(args.out)
    modes = ("ris", "ssm", "sms") if args.mode == "all" else (args.mode,)
    by_mode = {}
    for mode in modes:
        sub = out / mode if len(modes) > 1 else out
        by_mode[mode] = _run_mode(cs, groups, presets, cfg, mode, args.seed, geom.ue_row, sub)
    plotting.mode_comparison(by_mode, out / "mode_comparison.svg")
    ok = all(_feasible(r) for r in by_mode.values())
    if not ok:
        print("some returned solution failed a feasibility check", file=sys.stderr)
    return EXIT_OK if ok else EXIT_INFEASIBLE


def cmd_oracle(args) -> int:
    cfg = _load_config(args)
    cs = channel.load(args.channels)
    try:
        geom, groups = _cabin(cs, cfg)
    except UsageError:
        # a channel file that is not the configured cabin is one group
        groups = [CoverageGroup(index=0, ue_ids=tuple(range(cs.n_ue)),
                                ssm_ids=tuple(range(cs.n_ssm)))]
        geom = None
    by_index = {g.index: g for g in groups}
    if args.group not in by_index:
        raise UsageError(f"no coverage group {args.group}; have {sorted(by_index)}")
    if args.presets:
        presets = PresetSearchReport.load(args.presets).presets(cs.n_elem)
    elif geom is not None:
        presets = search_sizes(cs, groups, cfg, geom.bs_distance()).presets(cs.n_elem)
    else:
        raise UsageError("--presets is required for channel files outside the configured cabin")
    data = GroupProblemData.from_channels(cs, by_index[args.group], presets, cfg)
    ref = oracle.exhaustive_group(data, Q=args.phase_levels)
    sol = run_algorithm1(data, cfg, "ssm", args.seed)
    ub = oracle.upper_bound_rate(data)
    ok = ref.min_rate - SANDWICH_TOL <= sol.min_rate <= ub
    print(f"oracle min rate     {ref.min_rate:.9g} bit/s ({ref.evaluations} evaluations)")
    print(f"algorithm min rate  {sol.min_rate:.9g} bit/s")
    print(f"upper bound rate    {ub:.9g} bit/s")
    print(f"verdict {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_INFEASIBLE


def cmd_plot(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    by_mode = {}
    for path in args.results:
        res = json.loads(Path(path).read_text(encoding="utf-8"))
        sub = out / res["mode"] if len(args.results) > 1 else out
        sub.mkdir(parents=True, exist_ok=True)
        plotting.all_for_results(res, sub)
        by_mode[res["mode"]] = res
    plotting.mode_comparison(by_mode, out / "mode_comparison.svg")
    return EXIT_OK


# --- entry point ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ssmsim", description="SSM-assisted indoor mmWave simulator")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, channels=True):
        p.add_argument("--config", help="scenario JSON (defaults to the full cabin)")
        p.add_argument("--tx-power-dbm", type=float, help="override the BS transmit power")
        if channels:
            p.add_argument("--channels", required=True, help="channel manifest (.json)")

    p = sub.add_parser("gen-channels", help="synthesize channels for a config")
    common(p, channels=False)
    p.add_argument("--out", required=True, help="channel manifest path; .bin and .geometry.json go next to it")
    p.set_defaults(func=cmd_gen_channels)

    p = sub.add_parser("search-presets", help="choose reflecting areas")
    common(p)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="report JSON; the SVG gets the same stem")
    p.set_defaults(func=cmd_search_presets)

    p = sub.add_parser("optimize", help="run the two-stage optimizer")
    common(p)
    p.add_argument("--presets", help="preset report JSON")
    p.add_argument("--mode", choices=("ssm", "ris", "sms", "all"), default="ssm")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("oracle", help="brute-force check of one coverage group")
    common(p)
    p.add_argument("--presets", help="preset report JSON (searched if omitted)")
    p.add_argument("--group", type=int, required=True)
    p.add_argument("--phase-levels", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("plot", help="redraw figures from results.json files")
    p.add_argument("--results", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except TimeShareInfeasible as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (UsageError, ConfigError, PresetSearchError, channel.ChannelFormatError,
            oracle.OracleBudgetError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
