"""Run one or more experiment configs and write a CSV per config.

    python3 scripts/run_experiment.py scripts/configs/*.json --out results/ --workers 4
"""
import argparse
import dataclasses
from pathlib import Path

from activegms.harness import emit_report, load_config, run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("configs", nargs="+", type=Path)
    ap.add_argument("--out", type=Path, default=Path("results"))
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--trials", type=int, help="override the trial count in every config")
    args = ap.parse_args()

    args.out.mkdir(parents=True, exist_ok=True)
    for path in args.configs:
        cfg, _ = load_config(path)
        if args.trials:
            cfg = dataclasses.replace(cfg, trials=args.trials)
        table = run_experiment(cfg, workers=args.workers)
        target = args.out / f"{path.stem}.csv"
        emit_report(table, "csv", target)
        print(f"{path.name}: {len(table.rows)} budgets -> {target}")


if __name__ == "__main__":
    main()
