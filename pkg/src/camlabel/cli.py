"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data or configuration error,
3 verification failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path as FsPath
from typing import Sequence

from .config import CONFIG_DIR_ENV, DEFAULT_CONFIG_TEXT, Config, default_config_path, load_config
from .errors import CamlabelError, ConfigError
from .evaluation import (
    SweepCase,
    config_echo,
    export_belief_matrix,
    metrics_report,
    missing_sweep,
    score,
    write_report,
    write_sweep_csv,
)
from .inference import InferenceConfig
from .models import learn_models, load_bundle, save_bundle
from .observation import read_trace, write_trace
from .oracle import centralized_run, exact_joint_run, max_belief_difference, tv_distance
from .runtime import run_simulation, write_node_timing_csv, write_result, write_timing
from .scenario import generate_trace

log = logging.getLogger("camlabel")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_VERIFY = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse exits with 2 by default; 2 is reserved for data errors
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _bound(text: str) -> int | None:
    """Positive integer or ``inf`` for unbounded."""
    if text.lower() in ("inf", "none", "unbounded"):
        return None
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer or 'inf', got {text!r}") from None


def _counts(text: str) -> list[int]:
    try:
        out = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not out or any(c < 0 for c in out):
        raise argparse.ArgumentTypeError("deletion counts must be non-negative")
    return out


def _resolve_config(path: str | None) -> Config:
    if path is None:
        fallback = default_config_path()
        if fallback is None:
            raise UsageError(f"no --config given and ${CONFIG_DIR_ENV} is not set")
        path = str(fallback)
    return load_config(path)


def _inference_config(cfg: Config, args) -> InferenceConfig:
    base = cfg.inference
    changes = {}
    if args.order is not None:
        changes["order"] = args.order
    if args.memory is not ...:
        changes["memory_depth"] = args.memory
    if args.cap is not ...:
        changes["space_cap"] = args.cap
    if args.lambda0 is not None:
        changes["lambda0"] = args.lambda0
    if args.gate is not None:
        changes["false_alarm_threshold"] = args.gate
    if args.renormalize:
        changes["renormalize_truncation"] = True
    try:
        return replace(base, **changes)
    except ConfigError as exc:
        raise UsageError(str(exc)) from None


def _load_inputs(cfg: Config, trace_path: str, model_path: str):
    trace = read_trace(trace_path)
    bundle = load_bundle(model_path)
    topo = bundle.apply(cfg.topology)
    return trace, bundle, topo


# ----------------------------------------------------------------------------
# commands


def cmd_init_config(args) -> int:
    out = FsPath(args.out)
    if out.exists() and not args.force:
        raise UsageError(f"{out} exists; pass --force to overwrite")
    out.write_text(DEFAULT_CONFIG_TEXT)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_generate(args) -> int:
    cfg = _resolve_config(args.config)
    spec = cfg.scenario_spec(args.seed)
    trace = generate_trace(spec)
    write_trace(trace, args.out)
    print(f"wrote {len(trace)} observations of {len(spec.objects)} objects to {args.out}")
    if args.training:
        train = generate_trace(cfg.training_spec(spec))
        write_trace(train, args.training)
        print(f"wrote {len(train)} training observations to {args.training}")
    return EXIT_OK


def cmd_learn(args) -> int:
    cfg = _resolve_config(args.config)
    trace = read_trace(args.trace)
    lambda0 = args.lambda0 if args.lambda0 is not None else cfg.inference.lambda0
    bundle = learn_models(trace, cfg.topology, cfg.appearance.bandwidth, lambda0, cfg.appearance.match_tolerance)
    save_bundle(bundle, args.out)
    print(
        f"learned {len(bundle.appearance.transfer) // 2} camera-pair transfers and "
        f"{len(bundle.travel)} edge travel models -> {args.out}"
    )
    for u, v in bundle.insufficient:
        print(f"edge {u}->{v}: insufficient data, configured prior kept")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _resolve_config(args.config)
    config = _inference_config(cfg, args)
    trace, bundle, topo = _load_inputs(cfg, args.trace, args.model)
    result = run_simulation(topo, trace, config, bundle.appearance)
    out = FsPath(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_result(result, out / "labels.jsonl")
    export_belief_matrix(result, out / "beliefs.csv")
    write_timing(result, out / "timing.json")
    write_node_timing_csv(result, out / "node_timing.csv")
    labels = {r.label for r in result.records}
    summary = {"K": len(labels), "observations": len(trace), "dropped": len(result.dropped), "tau_d": result.tau_d}
    if result.records and all(r.observation.truth is not None for r in result.records):
        metrics = score(result)
        write_report(metrics_report(metrics, config), out / "metrics.json")
        summary.update(precision=metrics.precision, recall=metrics.recall, f_measure=metrics.f_measure)
    else:
        write_report({"metrics": summary, "config": config_echo(config)}, out / "metrics.json")
    print(json.dumps(summary))
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = _resolve_config(args.config)
    config = _inference_config(cfg, args)
    trace, bundle, topo = _load_inputs(cfg, args.trace, args.model)
    distributed = run_simulation(topo, trace, config, bundle.appearance)
    central = centralized_run(topo, trace, config, bundle.appearance)
    diff = max_belief_difference(distributed, central)
    passed = diff <= args.tolerance
    report = {
        "equivalence": {"max_abs_diff": diff if math.isfinite(diff) else "inf", "tolerance": args.tolerance, "pass": passed},
    }
    if args.exact:
        head = trace[: args.exact]
        exact = exact_joint_run(topo, head, replace(config, memory_depth=None, space_cap=None), bundle.appearance)
        factored = run_simulation(topo, head, replace(config, memory_depth=None, space_cap=None), bundle.appearance)
        tvs = [tv_distance(r.belief, m) for r, m in zip(factored.records, exact.marginals)]
        agree = sum(r.label == lab for r, lab in zip(factored.records, exact.labels))
        report["exact"] = {
            "events": len(head),
            "tv_distances": tvs,
            "max_tv": max(tvs, default=0.0),
            "argmax_agreement": f"{agree}/{len(tvs)}",
        }
        print(f"exact joint on {len(head)} events: max TV {report['exact']['max_tv']:.3g}, argmax agreement {agree}/{len(tvs)}")
    if args.out:
        write_report(report, args.out)
    if passed:
        print(f"PASS, max diff {diff:.3g} < {args.tolerance:g}")
        return EXIT_OK
    print(f"FAIL, max diff {diff:.3g} exceeds {args.tolerance:g}")
    return EXIT_VERIFY


def cmd_sweep(args) -> int:
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    cfg = _resolve_config(args.config)
    config = _inference_config(cfg, args)
    cases = []
    for t in range(args.trials):
        spec = cfg.scenario_spec(cfg.scenario.seed + t)
        spec = replace(spec, missing_count=None, missing_rate=None)
        trace = generate_trace(spec)
        train = generate_trace(cfg.training_spec(spec))
        bundle = learn_models(train, spec.topology, cfg.appearance.bandwidth, config.lambda0, cfg.appearance.match_tolerance)
        cases.append(SweepCase(bundle.apply(spec.topology), trace, bundle.appearance))
    rows = missing_sweep(cases, args.counts, config, orders=(0, 1), trials=args.trials, seed=args.seed)
    write_sweep_csv(rows, args.out)
    for r in rows:
        print(f"missing={r.missing:3d} order={r.order} mean_F={r.mean_f:.4f} std={r.std_f:.4f}")
    return EXIT_OK


# ----------------------------------------------------------------------------
# parser


def _add_inference_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--order", "-q", type=int, default=None, help="neighborhood order q (default from config: 0)")
    p.add_argument("--memory", "-M", type=_bound, default=..., help="memory depth M, or 'inf' (default 20)")
    p.add_argument("--cap", "-H", type=_bound, default=..., help="sampling-space cap H, or 'inf' (default 15)")
    p.add_argument("--lambda0", type=float, default=None, help="new-object likelihood constant")
    p.add_argument("--gate", type=float, default=None, help="false-alarm evidence threshold")
    p.add_argument("--renormalize", action="store_true", help="renormalize truncated travel-time densities")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument(
        "--config", "-c", default=None, help=f"config file (default: ${CONFIG_DIR_ENV}/camlabel.yaml)"
    )
    common.add_argument("--verbose", "-v", action="store_true")

    parser = _Parser(prog="camlabel", description="Distributed multi-camera object labeling.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("init-config", help="write a default config file")
    p.add_argument("out", nargs="?", default="camlabel.yaml")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_init_config)

    p = sub.add_parser("generate", parents=[common], help="generate a synthetic trace")
    p.add_argument("--out", "-o", required=True)
    p.add_argument("--seed", type=int, default=None, help="scenario seed (default from config)")
    p.add_argument("--training", default=None, help="also write a labeled training trace here")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("learn", parents=[common], help="learn transfer functions and travel models")
    p.add_argument("trace")
    p.add_argument("--out", "-o", required=True)
    p.add_argument("--lambda0", type=float, default=None)
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("run", parents=[common], help="run distributed labeling")
    p.add_argument("trace")
    p.add_argument("model")
    p.add_argument("--out-dir", "-o", default="camlabel-out")
    _add_inference_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("verify", parents=[common], help="check the distributed run against the oracles")
    p.add_argument("trace")
    p.add_argument("model")
    p.add_argument("--tolerance", type=float, default=1e-9)
    p.add_argument("--exact", type=int, default=0, help="also compare the first N (<= 10) events with exact inference")
    p.add_argument("--out", "-o", default=None, help="write the comparison report (JSON)")
    _add_inference_flags(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", parents=[common], help="missing-detection sweep table")
    p.add_argument("--out", "-o", required=True)
    p.add_argument("--counts", type=_counts, default=[0, 10, 20, 30, 40])
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--seed", type=int, default=0, help="deletion seed")
    _add_inference_flags(p)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"camlabel: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CamlabelError as exc:
        print(f"camlabel: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"camlabel: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
