"""Command line entry point: ``phonemask <command> --config run.toml``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import room_acoustics as ra
from .config import ConfigError, ExperimentConfig, load_config
from .pipeline import Experiment, PipelineError
from .signal_io import AudioBuffer, write_wav

COMMANDS = ("simulate-rir", "make-dataset", "train", "finetune", "enhance", "evaluate", "score", "report")


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML experiment config (defaults apply without one)")
    common.add_argument("--seed", type=_u64, help="override the config seed")
    common.add_argument("--out", type=Path, help="override the output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="phonemask", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate-rir", parents=[common], help="simulate the configured rooms, or one room")
    s.add_argument("--room", help="single room name instead of the config's room list")
    s.add_argument("--distance", type=float, default=1.0, help="source-receiver distance for --room (m)")

    sub.add_parser("make-dataset", parents=[common], help="write reverberant/direct-path audio and manifest")

    t = sub.add_parser("train", parents=[common], help="train the phoneme-independent models")
    t.add_argument("--layers", type=int, choices=(1, 2), action="append",
                   help="train only these depths (repeatable)")

    f = sub.add_parser("finetune", parents=[common], help="fine-tune MOA and phoneme banks from ERM-1")
    f.add_argument("--scheme", choices=("moa", "phoneme"), action="append")

    sub.add_parser("enhance", parents=[common], help="masks and vocoded audio for every condition")
    sub.add_parser("evaluate", parents=[common], help="per-utterance ECM and SRMR-CI")

    sc = sub.add_parser("score", parents=[common], help="score listener responses")
    sc.add_argument("responses", type=Path,
                    help="CSV with condition, room, utterance_id, response, target")

    sub.add_parser("report", parents=[common], help="condition table and electrodogram exports")
    return p


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.out is not None:
        cfg = replace(cfg, out=str(args.out))
    return cfg


def _simulate_single(cfg: ExperimentConfig, name: str, distance: float) -> None:
    spec = ra.preset_room(name, distance, seed=cfg.seed)
    rir = ra.simulate_rir(spec)
    out = Path(cfg.out) / "rirs"
    out.mkdir(parents=True, exist_ok=True)
    stem = f"{name}-{distance:g}m"
    np.save(out / f"{stem}.npy", rir.coefficients)
    write_wav(out / f"{stem}.wav", AudioBuffer(rir.coefficients, rir.sample_rate_hz))
    rep = ra.acoustics_report(ra.resample_rir(rir), distance_m=distance)
    meta = json.loads(ra.rir_metadata(rir, spec))
    meta.update(rt60_s=rep.rt60_s, drr_db=rep.drr_db, distance_m=distance, direct_delay_s=rir.direct_delay_s)
    (out / f"{stem}.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    print(f"{stem}: RT60 {rep.rt60_s:.3f} s, DRR {rep.drr_db:.2f} dB -> {out / stem}.wav")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        cfg = _config(args)
        exp = Experiment(cfg)
        if args.command == "simulate-rir":
            if args.room:
                _simulate_single(cfg, args.room, args.distance)
            else:
                exp.simulate_rirs()
                print(f"rooms written to {exp.root / 'rirs'}")
        elif args.command == "make-dataset":
            m = exp.make_dataset()
            print(f"{len(m.entries)} entries, manifest at {exp.root / 'dataset' / 'manifest.json'}")
        elif args.command == "train":
            names = None if not args.layers else [f"erm{k}" for k in sorted(set(args.layers))]
            for name in exp.train(names):
                print(f"model {name}: {exp.root / 'models' / name}")
        elif args.command == "finetune":
            names = None
            if args.scheme:
                names = sorted({"moa": "moa", "phoneme": "phn"}[s] for s in args.scheme)
            for name in exp.finetune(names):
                print(f"bank {name}: {exp.root / 'models' / name}")
        elif args.command == "enhance":
            exp.enhance()
            print(f"enhanced audio in {exp.root / 'enhanced'}")
        elif args.command == "evaluate":
            exp.evaluate()
            print(f"metrics at {exp.root / 'report' / 'metrics.csv'}")
        elif args.command == "score":
            rows = exp.score(args.responses)
            print(f"{len(rows)} responses scored -> {exp.root / 'scores' / 'scores.csv'}")
        elif args.command == "report":
            path = exp.report()
            print(path.read_text(), end="")
    except (ConfigError, PipelineError, FileNotFoundError, ValueError) as exc:
        print(f"phonemask {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
