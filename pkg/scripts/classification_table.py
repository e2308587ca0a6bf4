#!/usr/bin/env python3
"""SS vs ES test accuracy and log loss at several label budgets.

Writes one row per (variant, labels, seed) plus a mean ± stderr summary.
ES gets twice the epochs of SS by default, since it only ever sees the
labeled images.
"""

import argparse
from pathlib import Path

from ssvae.data import load_splits, resolve_data_dir
from ssvae.evaluation import summarize_by_scenario, text_table, write_runs_csv, write_summary_csv
from ssvae.experiments import Architecture, repeat, run_classification
from ssvae.training import TrainConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dataset")
    ap.add_argument("--out", type=Path, default=Path("runs/classification"))
    ap.add_argument("--labels", default="100,1000,all")
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--hidden", type=int, default=1024)
    ap.add_argument("--epochs", type=int, default=10)
    ap.add_argument("--es-epochs", type=int, default=20)
    args = ap.parse_args()

    splits = load_splits(resolve_data_dir(args.dataset))
    arch = Architecture(hidden=args.hidden)
    args.out.mkdir(parents=True, exist_ok=True)
    reports = []
    for tag in args.labels.split(","):
        labels = None if tag == "all" else int(tag)
        for variant, epochs in (("SS", args.epochs), ("ES", args.es_epochs)):
            cfg = TrainConfig(variant=variant, epochs=epochs)
            rows = repeat(f"{variant}-labels={tag}", lambda c: run_classification(splits, c, labels, arch)[2],
                          cfg, range(args.seeds))
            reports += rows
            print(f"{variant} labels={tag}: " + ", ".join(f"{r.metrics['accuracy']:.4f}" for r in rows), flush=True)

    write_runs_csv(args.out / "runs.csv", reports)
    summaries = summarize_by_scenario(reports)
    write_summary_csv(args.out / "summary.csv", summaries)
    print(text_table(summaries))


if __name__ == "__main__":
    main()
