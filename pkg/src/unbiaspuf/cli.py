"""Command line entry point: ``unbiaspuf <subcommand> ...``.

Exit codes: 0 success, 2 bad configuration, 3 overflow in strict mode,
4 no feasible inspection bit, 5 I/O failure, 6 contract violation.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from unbiaspuf import records
from unbiaspuf.errors import ConfigError, ContractError, NoFeasibleBitError, StrictOverflowError
from unbiaspuf.experiment import (
    ExperimentConfig,
    SigmaSource,
    bundle_config,
    check_overflow,
    compare_msb_baseline,
    load_config,
    run_experiment,
    select_for_tensor,
)
from unbiaspuf.extraction import InspectionBit, extract_matrix
from unbiaspuf.metrics import estimate_sigma, summarize
from unbiaspuf.popmodel import generate_population, measure
from unbiaspuf.prediction import BitReport, predict_inter_lb, predict_intra_profile
from unbiaspuf.rtlgen import RtlParams, write_rtl

log = logging.getLogger("unbiaspuf")

EXIT_CONFIG = 2
EXIT_OVERFLOW = 3
EXIT_INFEASIBLE = 4
EXIT_IO = 5
EXIT_CONTRACT = 6


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["population"] = cfg.population.replace(seed=args.seed)
    if getattr(args, "strict_overflow", False):
        changes["strict_overflow"] = True
    if getattr(args, "sigma", None) is not None:
        changes["sigma_source"] = SigmaSource("fixed", value=args.sigma)
    if getattr(args, "out_dir", None) is not None:
        changes["output_dir"] = args.out_dir
    return cfg.replace(**changes) if changes else cfg


def _out(cfg):
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _tensor_from_dir(cfg, out):
    challenges = None
    if (out / "challenges.csv").exists():
        challenges = records.read_challenges(out / "challenges.csv", cfg.population)
    tensor = records.read_measurements(out / "measurements.csv", cfg.population, challenges)
    check_overflow(tensor, cfg.strict_overflow)
    return tensor


def cmd_simulate(args):
    cfg = _load(args)
    out = _out(cfg)
    population = generate_population(cfg.population)
    tensor = measure(population)
    check_overflow(tensor, cfg.strict_overflow)
    records.write_json(bundle_config(cfg), out / "config.json")
    records.write_challenges(tensor, out / "challenges.csv")
    records.write_measurements(tensor, out / "measurements.csv")
    print(f"wrote {tensor.values.size} measurements to {out / 'measurements.csv'}")


def cmd_extract(args):
    cfg = _load(args)
    out = _out(cfg)
    tensor = _tensor_from_dir(cfg, out)
    responses = extract_matrix(tensor, InspectionBit(args.bit), cfg.reducer)
    records.write_responses(responses, out / "responses_reference.csv", out / "responses_repeats.csv")
    print(f"wrote bit-{args.bit} responses to {out}")


def cmd_metrics(args):
    cfg = _load(args)
    out = _out(cfg)
    responses = records.read_responses(
        out / "responses_reference.csv", out / "responses_repeats.csv", args.bit, cfg.reducer
    )
    summary = summarize(responses)
    records.write_fhd_summary(summary, out / "fhd_summary.csv")
    line = records.fhd_summary_line(summary)
    with open(out / "fhd_summary.json", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(line + "\n")
    print(line)
    if (out / "measurements.csv").exists():
        print(f"sigma_hat={estimate_sigma(_tensor_from_dir(cfg, out))!r}")


def cmd_predict(args):
    cfg = _load(args)
    out = _out(cfg)
    tensor = _tensor_from_dir(cfg, out)
    sigma = args.sigma if args.sigma is not None else select_for_tensor(tensor, cfg, measured=False).sigma
    bits = [args.bit] if args.bit is not None else list(cfg.bits)
    profile = predict_intra_profile(tensor, bits=bits)
    reports = [BitReport(i, 1 << i, float(profile[i]), None, predict_inter_lb(1 << i, sigma), None) for i in bits]
    records.write_bit_reports(reports, out / "predictions.csv")
    for r in reports:
        print(f"bit {r.bit_index}: pred_intra={r.pred_intra:.4f} pred_inter_lb={r.pred_inter_lb:.4f}")


def cmd_select(args):
    cfg = _load(args)
    out = _out(cfg)
    tensor = _tensor_from_dir(cfg, out)
    selection = select_for_tensor(tensor, cfg)
    records.write_bit_reports(selection.reports, out / "bit_report.csv")
    chosen = next(r for r in selection.reports if r.bit_index == selection.bit)
    record = {
        "selected_bit": selection.bit,
        "w": 1 << selection.bit,
        "sigma": selection.sigma,
        "sigma_hat": selection.sigma_hat,
        "intra_threshold": cfg.intra_threshold,
        "pred_intra": chosen.pred_intra,
        "pred_inter_lb": chosen.pred_inter_lb,
        "meas_intra": chosen.meas_intra,
        "meas_inter": chosen.meas_inter,
    }
    records.write_json(record, out / "selection.json")
    print(json.dumps(record, sort_keys=True))


def cmd_emit_rtl(args):
    base = RtlParams()
    if args.config:
        pop = load_config(args.config).population
        base = RtlParams(pop.challenge_width, pop.register_width)
    params = RtlParams(
        args.challenge_width or base.challenge_width,
        args.register_width or base.register_width,
        args.ro_inverters or base.ro_inverters,
        args.ro_threshold or base.ro_count_threshold,
        args.module_name or base.module_name,
    )
    path = Path(args.out) if args.out else Path(args.out_dir or ".") / f"{params.module_name}.v"
    path.parent.mkdir(parents=True, exist_ok=True)
    write_rtl(params, path)
    print(f"wrote {path}")


def cmd_report(args):
    cfg = _load(args)
    result = run_experiment(cfg)
    sel = result.summary["selection"]
    print(
        f"selected bit {sel['selected_bit']}: inter-FHD {sel['meas_inter']:.4f}, "
        f"intra-FHD {sel['meas_intra']:.4f}, predicted inter lower bound {sel['pred_inter_lb']:.4f}"
    )


def cmd_baseline(args):
    cfg = _load(args)
    rows = compare_msb_baseline(cfg, _out(cfg))
    for r in rows:
        print(f"{r.extraction:>8} bit {r.bit_index:2d}: inter-FHD {r.inter_fhd:.4f} intra-FHD {r.intra_fhd:.4f}")


def build_parser():
    parser = argparse.ArgumentParser(prog="unbiaspuf", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=func)
        p.add_argument("--config", help="experiment config (JSON)")
        p.add_argument("--out-dir", help="output directory (overrides config output_dir)")
        p.add_argument("--format", choices=["csv"], default="csv")
        return p

    def sim_flags(p):
        p.add_argument("--seed", type=int)
        p.add_argument("--strict-overflow", action="store_true", help="fail if any cell overflows")

    p = add("simulate", cmd_simulate, "simulate a population and write measurements.csv")
    sim_flags(p)
    p = add("extract", cmd_extract, "extract responses at one inspection bit")
    p.add_argument("--bit", type=int, required=True)
    p.add_argument("--strict-overflow", action="store_true")
    p = add("metrics", cmd_metrics, "intra/inter-FHD of extracted responses")
    p.add_argument("--bit", type=int, default=-1, help="inspection bit the responses came from (metadata)")
    p.add_argument("--strict-overflow", action="store_true")
    p = add("predict", cmd_predict, "predicted intra-FHD and inter-FHD lower bound per bit")
    p.add_argument("--bit", type=int)
    p.add_argument("--sigma", type=float)
    p.add_argument("--strict-overflow", action="store_true")
    p = add("select", cmd_select, "select the inspection bit")
    p.add_argument("--sigma", type=float)
    p.add_argument("--strict-overflow", action="store_true")
    p = add("emit-rtl", cmd_emit_rtl, "write the Verilog design")
    p.add_argument("--out", help="output file (default <out-dir>/<module-name>.v)")
    p.add_argument("--module-name")
    p.add_argument("--challenge-width", type=int)
    p.add_argument("--register-width", type=int)
    p.add_argument("--ro-inverters", type=int)
    p.add_argument("--ro-threshold", type=int)
    p = add("report", cmd_report, "run the whole experiment and write the report bundle")
    sim_flags(p)
    p.add_argument("--sigma", type=float)
    p = add("baseline", cmd_baseline, "MSB extraction versus the selected bit")
    sim_flags(p)
    p.add_argument("--sigma", type=float)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StrictOverflowError as exc:
        print(f"overflow: {exc}", file=sys.stderr)
        return EXIT_OVERFLOW
    except NoFeasibleBitError as exc:
        print(f"selection failed: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ContractError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    return 0


if __name__ == "__main__":
    sys.exit(main())
