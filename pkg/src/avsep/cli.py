"""Command-line entry point.

Subcommands: gen-data, train, eval, ablate, probe, gap, acoustic-map,
bss-eval, version. Exit codes: 0 success, 1 usage error, 2 runtime error.
Every subcommand prints the primary result path as its final stdout line.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

from avsep import __version__

CONFIG_ENV = "AVSEP_CONFIG"


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="avsep", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="command")

    def common(p, needs_config=True, needs_seed=True):
        if needs_config:
            p.add_argument(
                "--config",
                default=os.environ.get(CONFIG_ENV),
                help=f"experiment config file (default: ${CONFIG_ENV})",
            )
            p.add_argument(
                "--set",
                action="append",
                dest="overrides",
                default=[],
                metavar="SECTION.KEY=VALUE",
                help="override one config key (repeatable)",
            )
        if needs_seed:
            p.add_argument("--seed", type=int, default=None, help="training/data seed")

    p = sub.add_parser("gen-data", help="materialize catalog, frozen test set, manifest")
    common(p)
    p.add_argument("--out", required=True, help="dataset output directory")

    p = sub.add_parser("train", help="train one separator")
    common(p)
    p.add_argument("--out", required=True, help="run output directory")
    p.add_argument("--fusion", choices=["middle", "late", "hierarchical"], default=None)
    p.add_argument("--align-weight", type=float, default=None, help="alignment loss weight")

    p = sub.add_parser("eval", help="score a checkpoint on the frozen test set")
    common(p, needs_seed=False)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="dataset directory from gen-data")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--fusion", choices=["middle", "late", "hierarchical"], default=None)
    p.add_argument(
        "--strategy",
        choices=["model", "baseline", "oracle"],
        default="model",
        help="model checkpoint, mixture-as-estimate, or ideal ratio mask",
    )

    p = sub.add_parser("ablate", help="run the six-cell fusion/alignment grid")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("probe", help="linear probes on bottleneck and proxy features")
    common(p, needs_seed=False)
    p.add_argument("--aligned", required=True, help="checkpoint trained with alignment")
    p.add_argument("--unaligned", required=True, help="checkpoint trained without")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("gap", help="modality gap with and without alignment")
    common(p, needs_seed=False)
    p.add_argument("--aligned", required=True)
    p.add_argument("--unaligned", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("acoustic-map", help="per-class transience/complexity table")
    common(p, needs_seed=False)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seeds-per-class", type=int, default=20)

    p = sub.add_parser("bss-eval", help="score one estimate against references")
    p.add_argument("--ref", action="append", required=True, help="reference wav (repeatable)")
    p.add_argument("--est", required=True, help="estimate wav")
    p.add_argument("--target", type=int, required=True, help="target reference index")
    p.add_argument("--filter-len", type=int, default=32)
    p.add_argument("--out", default=None, help="output CSV path (default: stdout row)")

    sub.add_parser("version", help="print version")
    return parser


def _load_cfg(args):
    from avsep.config import ExperimentConfig, apply_overrides, load_config

    overrides = {}
    for item in getattr(args, "overrides", []) or []:
        if "=" not in item:
            raise _UsageError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    if getattr(args, "config", None):
        cfg = load_config(args.config, overrides)
    else:
        cfg = apply_overrides(ExperimentConfig(), overrides)
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, train=replace(cfg.train, seed=args.seed))
    if getattr(args, "fusion", None):
        cfg = replace(cfg, model=replace(cfg.model, fusion=args.fusion))
    if getattr(args, "align_weight", None) is not None:
        cfg = replace(cfg, train=replace(cfg.train, align_weight=args.align_weight))
    return cfg


def _dispatch(args) -> Path:
    from avsep import trainlab

    if args.command == "gen-data":
        cfg = _load_cfg(args)
        return trainlab.gen_dataset(cfg, args.out)

    if args.command == "train":
        cfg = _load_cfg(args)
        run = trainlab.train(cfg, args.out)
        return run.final_checkpoint

    if args.command == "eval":
        cfg = _load_cfg(args)
        if args.strategy == "model":
            table = trainlab.evaluate_checkpoint(args.checkpoint, args.data, cfg)
        elif args.strategy == "baseline":
            table = trainlab.evaluate(
                trainlab.mixture_baseline_separator(), args.data, cfg
            )
        else:
            table = trainlab.evaluate(
                trainlab.oracle_mask_separator(cfg), args.data, cfg
            )
        return table.to_csv(args.out)

    if args.command == "ablate":
        cfg = _load_cfg(args)
        trainlab.ablate(cfg, args.data, args.out)
        return Path(args.out) / "ablation.csv"

    if args.command in ("probe", "gap"):
        cfg = _load_cfg(args)
        trainlab.probe_and_gap(args.aligned, args.unaligned, cfg, args.data, args.out)
        return Path(args.out) / ("probe.csv" if args.command == "probe" else "gap.csv")

    if args.command == "acoustic-map":
        from avsep import viz
        from avsep.metrics import acoustic_map

        cfg = _load_cfg(args)
        catalog = trainlab.build_catalog(cfg)
        rows = acoustic_map(
            catalog, args.seeds_per_class, cfg.dsp.sample_rate, cfg.synth.clip_seconds
        )
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        csv_path = viz.write_csv(
            out / "acoustic_map.csv",
            ["name", "class_id", "amplitude_ratio", "harmonic_complexity", "n_voiced"],
            (
                [r[0], r[1], viz.fmt(r[2], 4), viz.fmt(r[3], 4), r[4]]
                for r in rows
            ),
        )
        viz.scatter_svg(
            out / "acoustic_map.svg",
            [r[2] for r in rows],
            [r[3] for r in rows],
            [r[0] for r in rows],
            title="instrument classes",
            xlabel="amplitude ratio (transience)",
            ylabel="harmonic complexity",
        )
        return csv_path

    if args.command == "bss-eval":
        from avsep import viz, wavio
        from avsep.metrics import bss_eval

        refs = [wavio.read_wav(p) for p in args.ref]
        est = wavio.read_wav(args.est)
        res = bss_eval(refs, est, args.target, args.filter_len).capped()
        row = [
            args.est, args.target, viz.fmt(res.sdr_db, 4), viz.fmt(res.sir_db, 4),
            viz.fmt(res.sar_db, 4),
        ]
        header = ["estimate", "target", "sdr_db", "sir_db", "sar_db"]
        if args.out:
            return viz.write_csv(args.out, header, [row])
        print(",".join(header))
        print(",".join(str(v) for v in row))
        return Path(args.est)

    raise _UsageError("missing command")


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help()
            return 1
        if args.command == "version":
            print(__version__)
            return 0
        result = _dispatch(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except BrokenPipeError:
        return 2
    except Exception as exc:  # runtime failures -> exit 2 with diagnostic
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    print(str(result))
    return 0


if __name__ == "__main__":
    sys.exit(main())
