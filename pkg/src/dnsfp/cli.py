"""Command-line entry point: ``dnsfp <subcommand> ...``.

Exit codes: 0 success, 1 data errors, 2 usage errors.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

from . import _accel
from .attacks import AttackConfig
from .distance import CostSchedule
from .errors import DnsfpError
from .features import Attack
from .forest import ForestParams
from .trace import Dataset, Protocol

logger = logging.getLogger("dnsfp")


# -- argument types ------------------------------------------------------------------

def _arg_type(fn, what):
    def conv(text):
        try:
            return fn(text)
        except (ValueError, TypeError) as e:
            raise argparse.ArgumentTypeError(f"invalid {what} {text!r}: {e}") from None
    conv.__name__ = what
    return conv


def _attack(text: str) -> Attack:
    return Attack(text.strip().lower())


def _attack_list(text: str) -> list[Attack]:
    out = [_attack(x) for x in text.split(",") if x.strip()]
    if not out:
        raise ValueError("empty attack list")
    return out


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise ValueError("must be >= 1")
    return v


def _padding(text: str):
    from .synth import PaddingMode
    return PaddingMode.parse(text)


def _cache(text: str):
    from .synth import CacheMode
    return CacheMode.parse(text)


def _fraction(text: str) -> float:
    v = float(text)
    if not 0.0 <= v <= 1.0:
        raise ValueError("must be in [0, 1]")
    return v


ATTACK = _arg_type(_attack, "attack")
ATTACKS = _arg_type(_attack_list, "attack list")
POSITIVE = _arg_type(_positive, "positive integer")
PADDING = _arg_type(_padding, "padding mode")
CACHE = _arg_type(_cache, "cache mode")
FRACTION = _arg_type(_fraction, "fraction")
COSTS = _arg_type(CostSchedule.parse, "cost schedule")
PROTOCOL = _arg_type(lambda s: Protocol(s.strip().lower()), "protocol")


# -- parser ------------------------------------------------------------------------------

def _common(p: argparse.ArgumentParser, out_required: bool = False) -> None:
    g = p.add_argument_group("common options")
    g.add_argument("--seed", type=int, default=0, help="seed for all randomness (default 0)")
    g.add_argument("--threads", type=POSITIVE, default=None, help="cap on worker threads (default: all cores)")
    g.add_argument("--out", required=out_required, help="output path (default: stdout)")
    g.add_argument("--no-timestamps", action="store_true", help="omit wall-clock fields from reports")
    g.add_argument("-v", "--verbose", action="count", default=0)


def _model_opts(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model options")
    g.add_argument("--attack", type=ATTACK, required=True, help="freq | ngrams | bnr | segram")
    g.add_argument("--trees", type=POSITIVE, default=100, help="random forest size (default 100)")
    g.add_argument("--max-depth", type=POSITIVE, default=None)
    g.add_argument("--min-samples-leaf", type=POSITIVE, default=1)
    g.add_argument("--max-features", type=POSITIVE, default=None, help="default: sqrt(#features)")
    g.add_argument("--k", type=POSITIVE, default=1, help="neighbours for bnr (default 1)")
    g.add_argument("--costs", type=COSTS, default=CostSchedule(),
                   help="bnr edit costs ins,del,sub,trans (default 1,1,1,1)")


def _open_world_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--traces", required=True)
    p.add_argument("--monitored", required=True, help="file with one monitored app label per line")
    p.add_argument("--unmonitored", required=True, help="file with one unmonitored app label per line")
    p.add_argument("--unknown", required=True, help="file with one unknown app label per line")
    p.add_argument("--train-per-monitored", type=POSITIVE, default=30)
    p.add_argument("--test-per-monitored", type=POSITIVE, default=10)
    p.add_argument("--train-per-unmonitored", type=POSITIVE, default=3)
    p.add_argument("--test-per-unknown", type=POSITIVE, default=12)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dnsfp", description="App fingerprinting from encrypted DNS traffic.")
    sub = parser.add_subparsers(dest="command", metavar="<command>", required=True)

    p = sub.add_parser("ingest", help="turn pcap/pcapng captures into a trace dataset")
    p.add_argument("--pcap", nargs="+", required=True, help="capture file(s); one trace per file")
    p.add_argument("--resolver-ip", required=True, help="resolver address(es), comma separated")
    p.add_argument("--port", type=int, default=None, help="default 853 (dot) or 443 (doh)")
    p.add_argument("--protocol", type=PROTOCOL, default=Protocol.DOT)
    p.add_argument("--app", required=True, help="app label for the traces")
    p.add_argument("--resolver-id", default=None, help="default: the first resolver IP")
    p.add_argument("--trace-id", default=None, help="trace id (single capture only; default: file stem)")
    p.add_argument("--append", action="store_true", help="add to an existing dataset at --out")
    _common(p, out_required=True)

    p = sub.add_parser("synth", help="generate a synthetic trace dataset")
    p.add_argument("--apps", type=POSITIVE, required=True)
    p.add_argument("--traces-per-app", type=POSITIVE, required=True)
    p.add_argument("--padding", type=PADDING, default="none", help="none | edns | custom:<req>,<resp>")
    p.add_argument("--cache", type=CACHE, default="cold", help="cold | warm:<rho>")
    p.add_argument("--overlap", type=FRACTION, default=0.2, help="fraction of queries to shared domains")
    p.add_argument("--resolver-id", default="synthetic")
    p.add_argument("--protocol", type=PROTOCOL, default=Protocol.DOT)
    _common(p, out_required=True)

    pe = sub.add_parser("eval", help="run an evaluation protocol")
    esub = pe.add_subparsers(dest="mode", metavar="<mode>", required=True)

    p = esub.add_parser("closed", help="stratified k-fold closed world")
    p.add_argument("--traces", required=True)
    p.add_argument("--folds", type=POSITIVE, default=5)
    _model_opts(p)
    _common(p)

    p = esub.add_parser("open-binary", help="monitored vs. unmonitored precision-recall curve")
    _open_world_opts(p)
    p.add_argument("--iterations", type=POSITIVE, default=1, help="monitored-set resamplings to average")
    p.add_argument("--curve-csv", default=None, help="also write the curve as CSV")
    p.add_argument("--baseline-csv", default=None, help="also write the random baseline as CSV")
    _model_opts(p)
    _common(p)

    p = esub.add_parser("open-multi", help="monitored apps plus one aggregate class")
    _open_world_opts(p)
    _model_opts(p)
    _common(p)

    p = esub.add_parser("cross", help="train on one dataset, test on another")
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    _model_opts(p)
    _common(p)

    p = sub.add_parser("bench", help="time classification of held-out queries")
    p.add_argument("--traces", required=True)
    p.add_argument("--attacks", type=ATTACKS, default=[Attack.SEGRAM, Attack.BNR])
    p.add_argument("--queries", type=POSITIVE, default=100)
    p.add_argument("--repeats", type=POSITIVE, default=10)
    p.add_argument("--trees", type=POSITIVE, default=100)
    p.add_argument("--k", type=POSITIVE, default=1)
    _common(p)

    p = sub.add_parser("probe", help="audit response padding of DoT/DoH resolvers")
    p.add_argument("--targets", required=True, help="CSV: resolver_id,protocol,host,port,doh_url,method")
    p.add_argument("--insecure", action="store_true", help="skip TLS certificate validation")
    p.add_argument("--timeout-ms", type=POSITIVE, default=5000)
    p.add_argument("--concurrency", type=POSITIVE, default=8)
    _common(p, out_required=True)
    return parser


# -- helpers ----------------------------------------------------------------------------

def _config(args) -> AttackConfig:
    forest = ForestParams(n_trees=args.trees, max_depth=getattr(args, "max_depth", None),
                          min_samples_leaf=getattr(args, "min_samples_leaf", 1),
                          max_features=getattr(args, "max_features", None), seed=args.seed)
    return AttackConfig(forest, k=args.k, costs=getattr(args, "costs", CostSchedule()))


def _read_labels(path: str) -> list[str]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            out.append(line)
    if not out:
        raise DnsfpError(f"{path}: no app labels")
    return out


def _emit(args, kind: str, report: dict) -> None:
    doc = {"kind": kind, "seed": args.seed, "report": report}
    if not args.no_timestamps:
        doc["generated_at"] = _dt.datetime.now(_dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _load(path: str) -> Dataset:
    from .trace import read_dataset
    return read_dataset(path)


def _split(args):
    from .evaluation import OpenWorldSplit
    return OpenWorldSplit(
        tuple(_read_labels(args.monitored)), tuple(_read_labels(args.unmonitored)),
        tuple(_read_labels(args.unknown)),
        train_per_monitored=args.train_per_monitored, test_per_monitored=args.test_per_monitored,
        train_per_unmonitored=args.train_per_unmonitored, test_per_unknown=args.test_per_unknown,
    )


# -- commands ------------------------------------------------------------------------------

def cmd_ingest(args) -> None:
    from .ingest import ResolverSpec, filter_capture
    from .trace import read_dataset, write_dataset

    ips = [s.strip() for s in args.resolver_ip.split(",") if s.strip()]
    if not ips:
        raise DnsfpError("--resolver-ip is empty")
    if args.trace_id and len(args.pcap) > 1:
        raise DnsfpError("--trace-id needs exactly one --pcap")
    spec = ResolverSpec.make(args.resolver_id or ips[0], ips, args.port, args.protocol)
    traces = []
    for path in args.pcap:
        tid = args.trace_id or Path(path).stem
        traces.append(filter_capture(path, spec, args.app, tid))
    existing = list(read_dataset(args.out)) if args.append and Path(args.out).exists() else []
    write_dataset(Dataset(existing + traces), args.out)
    logger.info("wrote %d trace(s) to %s", len(traces), args.out)


def cmd_synth(args) -> None:
    from .synth import generate_dataset, generate_profiles
    from .trace import write_dataset

    profiles = generate_profiles(args.apps, args.seed, overlap=args.overlap)
    ds = generate_dataset(profiles, args.traces_per_app, args.padding, args.cache, seed=args.seed,
                          resolver_id=args.resolver_id, protocol=args.protocol)
    write_dataset(ds, args.out)
    logger.info("wrote %d traces for %d apps to %s", len(ds), args.apps, args.out)


def cmd_eval(args) -> None:
    from . import evaluation as ev

    cfg = _config(args)
    if args.mode == "closed":
        rep = ev.closed_world(_load(args.traces), args.attack, args.folds, args.seed, cfg, args.threads)
        _emit(args, "closed_world", rep.to_dict())
    elif args.mode == "open-binary":
        curve = ev.open_world_binary(_split(args), _load(args.traces), args.attack,
                                     iterations=args.iterations, seed=args.seed, config=cfg, threads=args.threads)
        if args.curve_csv:
            curve.write_csv(args.curve_csv)
        if args.baseline_csv:
            curve.write_csv(args.baseline_csv, baseline=True)
        _emit(args, "open_world_binary", curve.to_dict())
    elif args.mode == "open-multi":
        rep = ev.open_world_multiclass(_split(args), _load(args.traces), args.attack, args.seed, cfg, args.threads)
        _emit(args, "open_world_multiclass", rep.to_dict())
    else:
        rep = ev.cross_resolver(_load(args.train), _load(args.test), args.attack, args.seed, cfg, args.threads)
        _emit(args, "cross_resolver", rep.to_dict())


def cmd_bench(args) -> None:
    from .evaluation import benchmark

    rep = benchmark(_load(args.traces), args.attacks, args.queries, args.repeats, args.seed,
                    _config(args), args.threads)
    d = rep.to_dict()
    d["backend"] = "numba" if _accel.use_numba() else "numpy"
    _emit(args, "benchmark", d)


def cmd_probe(args) -> None:
    from .padprobe import probe_many, read_targets, write_report

    targets = read_targets(args.targets, insecure=args.insecure, timeout_ms=args.timeout_ms)
    results = probe_many(targets, max_concurrency=args.concurrency)
    write_report(results, args.out)
    for r in results:
        logger.info("%s (%s): %s", r.target.resolver_id, r.target.protocol, r.verdict.value)


COMMANDS = {"ingest": cmd_ingest, "synth": cmd_synth, "eval": cmd_eval, "bench": cmd_bench, "probe": cmd_probe}


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:  # argparse already printed the synopsis
        return 0 if e.code in (0, None) else 2
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.threads is None:
        args.threads = os.cpu_count() or 1
    _accel.set_threads(args.threads)
    try:
        COMMANDS[args.command](args)
    except DnsfpError as e:
        print(f"dnsfp: error: {e}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as e:
        print(f"dnsfp: error: {e}", file=sys.stderr)
        return 1
    return 0


def main() -> int:
    return run(sys.argv[1:])
