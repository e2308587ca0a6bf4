#!/usr/bin/env python3
"""Anomaly AUC of SS models as the labeled share of the normal training set varies."""

import argparse
from pathlib import Path

from ssvae.data import load_splits, resolve_data_dir
from ssvae.evaluation import summarize_by_scenario, text_table, write_runs_csv, write_summary_csv
from ssvae.experiments import Architecture, repeat, run_anomaly
from ssvae.training import TrainConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dataset")
    ap.add_argument("--out", type=Path, default=Path("runs/label_sweep"))
    ap.add_argument("--classes", default="7")
    ap.add_argument("--fractions", default="1,10,25,50,75,99", help="percentages")
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--hidden", type=int, default=1024)
    ap.add_argument("--epochs", type=int, default=10)
    args = ap.parse_args()

    splits = load_splits(resolve_data_dir(args.dataset))
    arch = Architecture(hidden=args.hidden)
    cfg = TrainConfig(variant="SS", epochs=args.epochs)
    args.out.mkdir(parents=True, exist_ok=True)
    reports = []
    for cls in (int(c) for c in args.classes.split(",")):
        for pct in (float(f) for f in args.fractions.split(",")):
            rows = repeat(f"class={cls}-labeled={pct:g}%",
                          lambda c: {"auc": run_anomaly(splits, cls, c, fraction=pct / 100, arch=arch).auc},
                          cfg, range(args.seeds))
            reports += rows
            print(f"class {cls} {pct:g}%: " + ", ".join(f"{r.metrics['auc']:.4f}" for r in rows), flush=True)

    write_runs_csv(args.out / "runs.csv", reports)
    summaries = summarize_by_scenario(reports)
    write_summary_csv(args.out / "summary.csv", summaries)
    print(text_table(summaries))


if __name__ == "__main__":
    main()
