"""Command-line entry point: ``relayfl <subcommand> [options]``.

Exit codes: 0 success, 2 configuration error, 3 infeasible experiment,
4 solver-failure budget exceeded.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from ..airtime import make_profiles, optimal_frequency, round_report
from ..channel import SimConfig, estimate_channels, write_channel_csv
from ..errors import ConfigError, InfeasibleError
from ..fedsim import FlConfig, run_fl, save_model
from ..grouping import prune_to_deadline, ternary_search_threshold
from ..powopt import EeProblem, spca_optimize
from ..rng import substream
from .experiment import (KINDS, ExperimentSpec, ResultTable, failure_rate, fl_round_plans,
                         load_config_bundle, run_experiment)
from .plotdata import emit_plotdata
from .schemes import SCHEMES, PhyTrial

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_BUDGET = 0, 2, 3, 4

log = logging.getLogger("relayfl")


def _global_flags(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--config", default=d(None), help="JSON config (sim/fl/experiment sections)")
    p.add_argument("--seed", type=int, default=d(None), help="master seed (u64)")
    p.add_argument("--out", default=d("out"), help="output directory")
    p.add_argument("--trials", type=int, default=d(None), help="Monte-Carlo trials")
    p.add_argument("--threads", type=int, default=d(1), help="worker processes")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="relayfl", description=__doc__.splitlines()[0])
    _global_flags(ap, suppress=False)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, help_):
        p = sub.add_parser(name, help=help_)
        _global_flags(p, suppress=True)
        return p

    p = add("gen", "draw topologies and channels, write per-trial channel CSVs")
    p.add_argument("--pilot-len", type=int, default=0, help="also write MMSE estimates")
    p = add("group", "ternary-search grouping plus pruning, written as JSON")
    p.add_argument("--trial", type=int, default=0)
    p = add("optimize", "group then allocate power with SPCA, written as JSON")
    p.add_argument("--trial", type=int, default=0)
    p.add_argument("--rounds", type=int, default=100, help="global rounds for the energy report")
    p = add("fl", "run federated training and write the per-round history")
    p.add_argument("--scheme", choices=("ideal", "cooperative", "one_hop"), default=None)
    p.add_argument("--rounds", type=int, default=None)
    p = add("experiment", "run one benchmark study and write its long-format CSV")
    p.add_argument("--kind", choices=KINDS, default=None)
    p.add_argument("--schemes", nargs="+", choices=SCHEMES, default=None)
    p.add_argument("--sweep", nargs="+", type=float, default=None)
    p.add_argument("--plot", action="store_true", help="also emit plot data")
    p = add("plot", "emit CSV series and SVG plots from a result CSV")
    p.add_argument("input", help="result CSV written by 'experiment'")
    p.add_argument("--kind", choices=KINDS, default=None, help="default: every kind present")
    p.add_argument("--no-svg", action="store_true")
    return ap


def _bundle(args) -> dict:
    if args.config:
        return load_config_bundle(args.config)
    return {"sim": {}, "fl": {}, "experiment": {}}


def _sim_config(args, bundle) -> SimConfig:
    data = dict(bundle["sim"])
    if args.seed is not None:
        data["seed"] = args.seed
    return SimConfig.from_dict(data)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def cmd_gen(args, bundle, out: Path) -> int:
    cfg = _sim_config(args, bundle)
    for t in range(args.trials or 1):
        phy = PhyTrial.draw(cfg, t)
        csi = estimate_channels(phy.channels, cfg, args.pilot_len, trial=t) if args.pilot_len else None
        write_channel_csv(out / f"channels_trial{t}.csv", phy.channels, csi)
    _write_json(out / "sim_config.json", cfg.to_dict())
    return EXIT_OK


def _grouping(cfg: SimConfig, trial: int):
    phy = PhyTrial.draw(cfg, trial)
    res = ternary_search_threshold(phy.rates)
    g = prune_to_deadline(res.grouping, cfg.t_eff_s, cfg.packet_bits, cfg.bandwidth_hz, phy.rates)
    return phy, res, g


def cmd_group(args, bundle, out: Path) -> int:
    cfg = _sim_config(args, bundle)
    _, _, g = _grouping(cfg, args.trial)
    _write_json(out / f"grouping_trial{args.trial}.json",
                g.to_dict(g.t_ul_s(cfg.packet_bits, cfg.bandwidth_hz)))
    return EXIT_OK


def cmd_optimize(args, bundle, out: Path) -> int:
    cfg = _sim_config(args, bundle)
    phy, _, g = _grouping(cfg, args.trial)
    alloc, trace = spca_optimize(EeProblem.from_config(g, phy.gains, cfg))
    profiles = make_profiles(cfg, FlConfig().local_epochs, substream(cfg.seed, "compute", args.trial),
                             g.n_participants)
    profiles = [replace(p, cpu_freq=optimal_frequency(p, cfg.t_th_s, alloc.t_ul_s))
                for p in profiles]
    rep = round_report(g, alloc.powers, phy.gains, profiles, cfg, args.rounds)
    doc = {"grouping": g.to_dict(alloc.t_ul_s), "allocation": alloc.to_dict(),
           "report": {k: float(v) for k, v in vars(rep).items()}}
    _write_json(out / f"allocation_trial{args.trial}.json", doc)
    trace.to_csv(out / f"spca_trace_trial{args.trial}.csv")
    return EXIT_OK


def cmd_fl(args, bundle, out: Path) -> int:
    fl = FlConfig.from_dict(bundle["fl"])
    changes = {k: v for k, v in (("scheme", args.scheme), ("rounds", args.rounds),
                                 ("seed", args.seed)) if v is not None}
    fl = fl.replace(**changes)
    sim = _sim_config(args, bundle).replace(n_sns=fl.n_sns, seed=fl.seed)
    plans = None
    if fl.scheme != "ideal":
        plans = fl_round_plans(sim, fl.rounds, "proposed" if fl.scheme == "cooperative"
                               else "only_1hop")
    hist = run_fl(fl, plans)
    hist.to_csv(out / f"fl_{fl.scheme}.csv")
    save_model(out / f"fl_{fl.scheme}.model", hist.final_model)
    log.info("final loss %.6f accuracy %.4f", hist.loss[-1], hist.accuracy[-1])
    return EXIT_OK


def cmd_experiment(args, bundle, out: Path) -> int:
    data = dict(bundle["experiment"])
    if "fl" not in data and bundle["fl"]:
        data["fl"] = bundle["fl"]
    for key, val in (("kind", args.kind), ("trials", args.trials), ("sweep", args.sweep),
                     ("schemes", args.schemes)):
        if val is not None:
            data[key] = val
    if "kind" not in data:
        raise ConfigError("experiment kind missing (use --kind or the config)")
    data.setdefault("output_path", str(out / f"{data['kind']}.csv"))
    spec = ExperimentSpec.from_dict(data)
    table = run_experiment(spec, _sim_config(args, bundle), threads=max(1, args.threads))
    if args.plot:
        emit_plotdata(table, spec.kind, out)
    rate = failure_rate(table)
    log.info("%s: %d rows, solver failure rate %.4f", spec.kind, len(table), rate)
    if rate > spec.failure_budget:
        print(f"solver failure rate {rate:.4f} exceeds budget {spec.failure_budget}",
              file=sys.stderr)
        return EXIT_BUDGET
    return EXIT_OK


def cmd_plot(args, bundle, out: Path) -> int:
    try:
        table = ResultTable.from_csv(args.input)
    except OSError as exc:
        raise ConfigError(f"cannot read {args.input}: {exc}") from exc
    kinds = [args.kind] if args.kind else table.experiments()
    for kind in kinds:
        emit_plotdata(table, kind, out, svg=not args.no_svg)
    return EXIT_OK


COMMANDS = {"gen": cmd_gen, "group": cmd_group, "optimize": cmd_optimize, "fl": cmd_fl,
            "experiment": cmd_experiment, "plot": cmd_plot}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.trials is not None and args.trials < 1:
            raise ConfigError("--trials must be >= 1")
        if args.seed is not None and not 0 <= args.seed < 2 ** 64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        bundle = _bundle(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](args, bundle, out)
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
