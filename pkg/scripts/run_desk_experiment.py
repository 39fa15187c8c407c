#!/usr/bin/env python3
"""Run the desk experiment end to end and print a short summary.

    python3 scripts/run_desk_experiment.py --config configs/desk.toml --out runs/desk
"""

import argparse
import json
import logging
import time

from phonemask.config import load_config
from phonemask.pipeline import Experiment, condition_ordering_rate


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default="configs/desk.toml")
    ap.add_argument("--out", default=None)
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")

    cfg = load_config(args.config)
    exp = Experiment(cfg, args.out)
    t0 = time.perf_counter()
    table = exp.report()
    elapsed = time.perf_counter() - t0

    hist = json.loads((exp.root / "models" / "erm1" / "erm1.history.json").read_text())
    best, const = min(hist["dev_history"]), hist["constant_mean_irm_dev_mse"]
    print(f"erm1: best dev MSE {best:.5f} vs constant {const:.5f} "
          f"({100 * (1 - best / const):.1f}% better), best epoch {hist['best_epoch']}")
    for name in ("moa", "phn"):
        path = exp.root / "models" / name / f"{name}.classes.json"
        if not path.exists():
            continue
        classes = [c for c in json.loads(path.read_text()).values() if "base_dev_mse" in c]
        better = sum(c["finetuned_dev_mse"] < c["base_dev_mse"] for c in classes)
        print(f"{name}: {better}/{len(classes)} classes improve on the base model")
    report = exp.metrics()
    for room in cfg.rooms:
        rate = condition_ordering_rate(report, "ERM-PHN", "ERM-1", room.room_id)
        print(f"{room.room_id}: ECM ERM-PHN >= ERM-1 on {100 * rate:.0f}% of utterances")
    print()
    print(table.read_text(), end="")
    print(f"\n{elapsed:.0f} s; outputs in {exp.root}")


if __name__ == "__main__":
    main()
