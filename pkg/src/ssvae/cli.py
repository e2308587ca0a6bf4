"""ssvae command line: train, eval, anomaly, labelsweep, generate, disentangle, gradcheck.

Exit codes: 0 success, 1 a check failed, 2 usage or data problem, 3 training
aborted on a non-finite loss.  Every command first prints a ``# config:``
line; rerunning that exact line reproduces the command's CSV output.
"""

from __future__ import annotations

import argparse
import csv
import logging
import shlex
import sys
from pathlib import Path
from typing import Sequence

from . import gradcheck
from .checkpoint import load_checkpoint, save_checkpoint
from .data import load_splits, make_anomaly_split, resolve_data_dir
from .errors import CheckpointError, DataError, TrainingAborted, VariantError
from .evaluation import (
    EvalReport,
    anomaly_report,
    summarize_by_scenario,
    text_table,
    write_runs_csv,
    write_summary_csv,
)
from .experiments import (
    FACTOR_ARCH,
    FACTOR_TRAIN,
    Architecture,
    repeat,
    run_anomaly,
    run_classification,
    run_disentangle,
    seeds_from,
)
from .generate import generate_class_grids, grid_predictions, write_class_grids
from .losses import bernoulli_nll_per_sample
from .training import TrainConfig, evaluate_classification, read_config_file

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_ABORT = 0, 1, 2, 3
COMMANDS = ("train", "eval", "anomaly", "labelsweep", "generate", "disentangle", "gradcheck")

log = logging.getLogger("ssvae")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _add_training(p, cfg: TrainConfig, arch: Architecture, variant: bool = True):
    if variant:
        p.add_argument("--variant", choices=("SS", "ES", "EU"), default=cfg.variant)
    p.add_argument("--epochs", type=int, default=cfg.epochs)
    p.add_argument("--lr", type=float, default=cfg.learning_rate)
    p.add_argument("--alpha", type=float, default=cfg.alpha_weight)
    p.add_argument("--beta-norm", type=float, default=cfg.beta_norm)
    p.add_argument("--batch", type=int, default=cfg.batch_size)
    p.add_argument("--hidden", type=int, default=arch.hidden, help="width of every hidden layer")
    p.add_argument("--latent", type=int, default=arch.latent)
    p.add_argument("--seed", type=int, default=0)


def _add_common(p, out: str, dataset: bool = True):
    if dataset:
        p.add_argument("--dataset", help="directory with MNIST IDX files (default: $SSVAE_DATA_DIR)")
    p.add_argument("--out", default=out, help="output directory")
    p.add_argument("--config", help="key=value file; explicit flags override it")


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = _Parser(prog="ssvae", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    base = TrainConfig()
    arch = Architecture()
    subs = {}

    p = subs["train"] = sub.add_parser("train", help="train one model, write checkpoint and run log")
    _add_common(p, "runs/train")
    _add_training(p, base, arch)
    p.add_argument("--labels", type=int, help="number of labeled training images (default: all)")
    p.add_argument("--checkpoint", help="checkpoint path (default: <out>/model.ckpt)")

    p = subs["eval"] = sub.add_parser("eval", help="evaluate a checkpoint, or train and evaluate --repeats seeds")
    _add_common(p, "runs/eval")
    _add_training(p, base, arch)
    p.add_argument("--labels", type=int)
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--checkpoint", help="evaluate this checkpoint instead of training")

    p = subs["anomaly"] = sub.add_parser("anomaly", help="hold out one class, score reconstruction AUC")
    _add_common(p, "runs/anomaly")
    _add_training(p, base, arch)
    p.add_argument("--class", dest="anomalous_class", type=int, required=True)
    p.add_argument("--labels", type=int, help="labeled normal training images (default: all)")
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--checkpoint", help="score this 9-class checkpoint instead of training")

    p = subs["labelsweep"] = sub.add_parser("labelsweep", help="anomaly AUC as a function of the labeled fraction")
    _add_common(p, "runs/labelsweep")
    _add_training(p, base, arch, variant=False)
    p.add_argument("--class", dest="anomalous_class", type=int, required=True)
    p.add_argument("--fractions", type=_float_list, default=[1, 10, 25, 50, 75, 99], help="percentages")
    p.add_argument("--repeats", type=int, default=1)

    p = subs["generate"] = sub.add_parser("generate", help="class-conditioned sample grids as PGM images")
    _add_common(p, "runs/generate", dataset=False)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--grid", type=int, default=5, help="grid side length")
    p.add_argument("--seed", type=int, default=0)

    p = subs["disentangle"] = sub.add_parser("disentangle", help="betaVAE score on synthetic factors vs label count")
    _add_common(p, "runs/disentangle", dataset=False)
    _add_training(p, FACTOR_TRAIN, FACTOR_ARCH, variant=False)
    p.add_argument("--label-counts", type=_int_list, default=[0, 100, 768])
    p.add_argument("--supervised-counts", type=_int_list, default=[], help="label counts trained without unlabeled data")
    p.add_argument("--repeats", type=int, default=1)

    p = subs["gradcheck"] = sub.add_parser("gradcheck", help="finite-difference check of every op and the loss")
    p.add_argument("--double", action="store_true", help="check in float64 at tolerance 1e-6")
    p.add_argument("--config", help=argparse.SUPPRESS)
    return parser, subs


def _convert(action: argparse.Action, raw: str):
    if isinstance(action, argparse._StoreTrueAction):
        if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
            raise UsageError(f"config value for {action.dest} must be a boolean, got {raw!r}")
        return raw.lower() in ("true", "1", "yes")
    try:
        value = action.type(raw) if action.type else raw
    except (argparse.ArgumentTypeError, ValueError) as exc:
        raise UsageError(f"config value for {action.dest}: {exc}") from None
    if action.choices is not None and value not in action.choices:
        raise UsageError(f"config value for {action.dest} must be one of {list(action.choices)}")
    return value


def _config_path(argv: Sequence[str]) -> str | None:
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def parse_args(argv: Sequence[str]) -> argparse.Namespace:
    """Parse ``argv``; values from a --config file become defaults that flags override."""
    parser, subs = build_parser()
    path = _config_path(argv)
    sp = subs.get(argv[0]) if argv else None
    if path and sp is not None:
        actions = {a.dest: a for a in sp._actions if a.dest not in ("help", "config")}
        try:
            entries = read_config_file(path)
        except OSError as exc:
            raise UsageError(f"cannot read config file: {exc}") from None
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        defaults = {}
        for key, raw in entries.items():
            dest = "anomalous_class" if key == "class" else key
            if dest not in actions:
                raise UsageError(f"unknown config key {key!r} in {path}")
            defaults[dest] = _convert(actions[dest], raw)
            actions[dest].required = False
        sp.set_defaults(**defaults)
    return parser.parse_args(argv)


def config_echo(args: argparse.Namespace) -> str:
    """The full command line, every flag spelled out, in parser order."""
    _, subs = build_parser()
    parts = ["ssvae", args.command]
    for a in subs[args.command]._actions:
        if not a.option_strings or a.dest in ("help", "config"):
            continue
        value = getattr(args, a.dest, None)
        flag = a.option_strings[-1]
        if isinstance(a, argparse._StoreTrueAction):
            if value:
                parts.append(flag)
        elif value is not None:
            if isinstance(value, list):
                value = ",".join(f"{v:g}" if isinstance(v, float) else str(v) for v in value)
            parts += [flag, str(value)]
    return shlex.join(parts)


def _train_config(args, variant: str | None = None) -> TrainConfig:
    return TrainConfig(
        epochs=args.epochs,
        learning_rate=args.lr,
        alpha_weight=args.alpha,
        beta_norm=args.beta_norm,
        batch_size=args.batch,
        seed=args.seed,
        variant=variant or getattr(args, "variant", "SS"),
    )


def _arch(args) -> Architecture:
    return Architecture(hidden=args.hidden, latent=args.latent)


def _splits(args):
    splits = load_splits(resolve_data_dir(args.dataset))
    if splits.test is None:
        raise DataError("dataset directory has no test split (t10k-* files)")
    return splits


def _write_summary(out: Path, reports: list[EvalReport], name: str) -> None:
    write_runs_csv(out / f"{name}_runs.csv", reports)
    summaries = summarize_by_scenario(reports)
    write_summary_csv(out / f"{name}_summary.csv", summaries)
    print(text_table(summaries))


def cmd_train(args) -> int:
    splits = _splits(args)
    cfg = _train_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model, runlog, metrics = run_classification(splits, cfg, args.labels, _arch(args))
    ckpt = Path(args.checkpoint) if args.checkpoint else out / "model.ckpt"
    save_checkpoint(model, ckpt)
    runlog.write_csv(out / "runlog.csv")
    runlog.write_timing_csv(out / "timing.csv")
    if model.spec.has_decoder:
        mu, _, pis = model.encode(splits.test.features)
        metrics["test_recon_nll"] = float(bernoulli_nll_per_sample(splits.test.features, model.decode(pis, mu).data).mean())
    write_runs_csv(out / "metrics.csv", [EvalReport(f"train-{cfg.variant}", cfg.seed, metrics)])
    last = runlog.records[-1]
    print(f"final epoch {last.epoch}: total {last.total:.4f} recon {last.recon_loss:.4f} "
          f"kl {last.kl_loss:.4f} cls {last.cls_loss:.4f}")
    for k, v in metrics.items():
        print(f"test {k}: {v:.4f}")
    print(f"checkpoint: {ckpt}")
    return EXIT_OK


def cmd_eval(args) -> int:
    splits = _splits(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.checkpoint:
        model = load_checkpoint(args.checkpoint)
        reports = [EvalReport(f"checkpoint-{model.spec.variant}", args.seed, evaluate_classification(model, splits.test))]
    else:
        cfg = _train_config(args)
        label_tag = "all" if args.labels is None else str(args.labels)

        def run(c):
            return run_classification(splits, c, args.labels, _arch(args))[2]

        reports = repeat(f"{cfg.variant}-labels={label_tag}", run, cfg, seeds_from(args.seed, args.repeats))
    _write_summary(out, reports, "eval")
    return EXIT_OK


def _check_class(args, splits) -> None:
    c = splits.train.class_count
    if not 0 <= args.anomalous_class < c:
        raise UsageError(f"--class must be in 0..{c - 1}, got {args.anomalous_class}")


def cmd_anomaly(args) -> int:
    splits = _splits(args)
    _check_class(args, splits)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cls = args.anomalous_class
    if args.checkpoint:
        model = load_checkpoint(args.checkpoint)
        _, normal, anom = make_anomaly_split(splits, cls)
        r = anomaly_report(model, normal.features, anom.features, cls)
        reports = [EvalReport(f"checkpoint-class={cls}", args.seed, {"auc": r.auc})]
    else:
        cfg = _train_config(args)

        def run(c):
            return {"auc": run_anomaly(splits, cls, c, labels=args.labels, arch=_arch(args)).auc}

        reports = repeat(f"{cfg.variant}-class={cls}", run, cfg, seeds_from(args.seed, args.repeats))
    _write_summary(out, reports, "anomaly")
    return EXIT_OK


def cmd_labelsweep(args) -> int:
    splits = _splits(args)
    _check_class(args, splits)
    if not args.fractions or any(not 0 <= f <= 100 for f in args.fractions):
        raise UsageError("--fractions must be percentages in [0, 100]")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = _train_config(args, variant="SS")
    cls = args.anomalous_class
    reports = []
    for pct in args.fractions:

        def run(c, pct=pct):
            return {"auc": run_anomaly(splits, cls, c, fraction=pct / 100.0, arch=_arch(args)).auc}

        reports += repeat(f"class={cls}-labeled={pct:g}%", run, cfg, seeds_from(args.seed, args.repeats))
    _write_summary(out, reports, "labelsweep")
    return EXIT_OK


def cmd_generate(args) -> int:
    model = load_checkpoint(args.checkpoint)
    if args.grid < 1:
        raise UsageError("--grid must be >= 1")
    grids = generate_class_grids(model, args.grid, args.seed)
    side = int(round(model.spec.input_dim ** 0.5))
    if side * side != model.spec.input_dim:
        raise DataError(f"input_dim {model.spec.input_dim} is not a square image")
    paths = write_class_grids(grids, args.out, args.grid, (side, side))
    preds = grid_predictions(model, grids)
    agree = sum(int(k == p) for k, p in preds.items())
    with open(Path(args.out) / "self_consistency.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["class", "predicted"])
        w.writerows(sorted(preds.items()))
    print(f"wrote {len(paths)} images to {args.out}; {agree}/{len(preds)} grids classified as their class")
    return EXIT_OK


def cmd_disentangle(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = _train_config(args, variant="SS")
    arch = _arch(args)
    seeds = seeds_from(args.seed, args.repeats)
    reports = []
    for n in args.label_counts:
        reports += repeat(f"labels={n}", lambda c, n=n: {"betavae": run_disentangle(n, c, arch)}, cfg, seeds)
    for n in args.supervised_counts:
        reports += repeat(
            f"supervised-only={n}", lambda c, n=n: {"betavae": run_disentangle(n, c, arch, True)}, cfg, seeds
        )
    _write_summary(out, reports, "disentangle")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    results = gradcheck.run_suite(double=args.double)
    failed = [r for r in results if not r.ok]
    for r in results:
        print(f"{'ok  ' if r.ok else 'FAIL'} {r.name:<12} max rel error {r.max_rel_error:.3e} (tol {r.tolerance:g})")
    if failed:
        print("gradient check failed for: " + ", ".join(f"{r.name} ({r.max_rel_error:.3e})" for r in failed),
              file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


HANDLERS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "anomaly": cmd_anomaly,
    "labelsweep": cmd_labelsweep,
    "generate": cmd_generate,
    "disentangle": cmd_disentangle,
    "gradcheck": cmd_gradcheck,
}


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
        print(f"# config: {config_echo(args)}", flush=True)
        return HANDLERS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingAborted as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT
    except (DataError, CheckpointError, VariantError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
