#!/usr/bin/env python3
"""betaVAE score on the synthetic factor images against the number of labeled images.

Includes a supervised-only row (labeled images alone, no unlabeled ones) and
the oracle/constant reference encoders.
"""

import argparse
import dataclasses
from pathlib import Path

import numpy as np

from ssvae.data import synth_factors
from ssvae.evaluation import beta_vae_score, summarize_by_scenario, text_table, write_runs_csv, write_summary_csv
from ssvae.experiments import FACTOR_ARCH, FACTOR_TRAIN, repeat, run_disentangle


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("runs/disentangle"))
    ap.add_argument("--labels", default="0,100,768")
    ap.add_argument("--supervised", default="768")
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--epochs", type=int, default=FACTOR_TRAIN.epochs)
    args = ap.parse_args()

    cfg = dataclasses.replace(FACTOR_TRAIN, epochs=args.epochs)
    fds = synth_factors()
    print(f"oracle encoder {beta_vae_score(lambda x: fds.factor_values.astype(float), fds):.1f}, "
          f"constant encoder {beta_vae_score(lambda x: np.zeros((len(x), 3)), fds):.1f}")
    args.out.mkdir(parents=True, exist_ok=True)
    reports = []
    for n in (int(v) for v in args.labels.split(",")):
        reports += repeat(f"labels={n}", lambda c: {"betavae": run_disentangle(n, c, FACTOR_ARCH)}, cfg,
                          range(args.seeds))
        print(reports[-1].scenario, [r.metrics["betavae"] for r in reports[-args.seeds:]], flush=True)
    for n in (int(v) for v in args.supervised.split(",") if v):
        reports += repeat(f"supervised-only={n}", lambda c: {"betavae": run_disentangle(n, c, FACTOR_ARCH, True)},
                          cfg, range(args.seeds))
        print(reports[-1].scenario, [r.metrics["betavae"] for r in reports[-args.seeds:]], flush=True)

    write_runs_csv(args.out / "runs.csv", reports)
    summaries = summarize_by_scenario(reports)
    write_summary_csv(args.out / "summary.csv", summaries)
    print(text_table(summaries))


if __name__ == "__main__":
    main()
