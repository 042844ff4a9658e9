"""Command-line entry point: prepare, train, predict, evaluate, tune, and
the four experiments, configurable from a key-value file.

A config file holds `key = value` lines (# comments allowed) whose keys
are the long option names of the chosen subcommand; explicit flags
override it.  All defaults match the vanilla training setup, so a bare
`train` runs depth 6, learning rate 0.3, 100 trees.  The --seed flag
fully determines every random choice, and results do not depend on
--threads.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from . import __version__
from .boosting import Ensemble, TrainConfig, TrainError, fit
from .data import (
    DataError,
    Dataset,
    FORMAT_VERSION,
    MISSING_FILL,
    MISSING_NATIVE,
    TransformState,
    apply_transforms,
    fit_transforms,
    load_csv,
    load_schema,
    save_csv,
    time_split_fraction,
)
from .experiments import (
    APPROACHES,
    DEFAULT_DISTRIBUTIONS,
    DEFAULT_SIZES,
    ExperimentError,
    ExperimentResult,
    MOVING_WINDOW,
    N_SECTIONS,
    TEST_WINDOW,
    TRAIN_ONCE,
    TRAIN_WINDOW,
    drift_experiment,
    emit_report,
    imbalance_objective_experiment,
    run_grid,
    sampling_experiment,
)
from .metrics import MetricError, confusion, pr_curve, report, report_to_csv
from .objectives import ObjectiveError
from .sampling import SamplingError
from .stats import StatsError
from .synth import SynthError, SynthSpec, synth_generate
from .tuning import RS_GRID, SCALE_GRID, TuningError, fit_best, random_search

USER_ERRORS = (
    DataError, TrainError, MetricError, ObjectiveError, SamplingError,
    TuningError, SynthError, ExperimentError, StatsError, OSError,
)


def load_config_file(path: str | Path) -> dict[str, str]:
    """Flat `key = value` lines; keys use the long option spelling."""
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DataError(f"config line {lineno}: expected key = value")
            key, value = line.split("=", 1)
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def _typed_defaults(parser: argparse.ArgumentParser, raw: dict[str, str]) -> dict:
    """Convert config strings using each option's argparse type."""
    out: dict = {}
    actions = {a.dest: a for a in parser._actions}
    for key, text in raw.items():
        action = actions.get(key)
        if action is None:
            continue
        if isinstance(action, argparse._StoreTrueAction):
            out[key] = text.lower() in ("1", "true", "yes", "on")
        elif action.type is not None:
            out[key] = action.type(text)
        else:
            out[key] = text
    return out


def _int_list(text: str) -> list[int]:
    return [int(p) for p in text.split(",") if p]


def _float_list(text: str) -> list[float]:
    return [float(p) for p in text.split(",") if p]


def _str_list(text: str) -> list[str]:
    return [p.strip() for p in text.split(",") if p.strip()]


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(
        prog="treeboost",
        description="Gradient-boosted trees for imbalanced binary classification",
    )
    parser.add_argument(
        "--version", action="version",
        version=f"treeboost {__version__} (file format v{FORMAT_VERSION})",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file")
    common.add_argument("--seed", type=int, default=0, help="master random seed")
    common.add_argument("--threads", type=int, default=0,
                        help="cap kernel parallelism (0 = leave as is)")

    sub = parser.add_subparsers(dest="command", required=True)
    subparsers: dict[str, argparse.ArgumentParser] = {}

    p = sub.add_parser("prepare", parents=[common],
                       help="fit transforms, split, and write prepared CSVs")
    p.add_argument("--data", required=True, help="raw input CSV")
    p.add_argument("--schema", required=True, help="schema JSON file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--split", type=float, default=0.8,
                   help="train fraction for the time split")
    p.add_argument("--no-split", action="store_true",
                   help="prepare the whole file as one dataset")
    p.add_argument("--missing-policy", choices=[MISSING_FILL, MISSING_NATIVE],
                   default=MISSING_FILL)
    p.add_argument("--missing-fill", type=float, default=1.0,
                   help="fill value for missing numerics, in scaled units")
    subparsers["prepare"] = p

    p = sub.add_parser("train", parents=[common], help="fit a boosted ensemble")
    p.add_argument("--data", required=True, help="prepared training CSV")
    p.add_argument("--state", help="transform state from prepare")
    p.add_argument("--schema", help="schema JSON if the CSV is already numeric")
    p.add_argument("--model", required=True, help="output model file")
    p.add_argument("--fit-log", help="optional per-round fit log CSV")
    p.add_argument("--eval-data", help="prepared CSV scored each round")
    _add_train_params(p)
    subparsers["train"] = p

    p = sub.add_parser("predict", parents=[common], help="score rows with a model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--state",
                   help="transform state; give it when --data is a raw CSV")
    p.add_argument("--out", required=True, help="output scores CSV")
    subparsers["predict"] = p

    p = sub.add_parser("evaluate", parents=[common],
                       help="metric report from a scores CSV")
    p.add_argument("--scores", required=True, help="CSV written by predict")
    p.add_argument("--out", required=True, help="output directory")
    subparsers["evaluate"] = p

    p = sub.add_parser("tune", parents=[common],
                       help="random-search cross-validation")
    p.add_argument("--data", required=True, help="raw training CSV")
    p.add_argument("--schema", required=True)
    p.add_argument("--space", choices=["rs", "scale"], default="rs")
    p.add_argument("--trials", type=int, default=25)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--out", required=True, help="output directory")
    subparsers["tune"] = p

    p = sub.add_parser("experiment", parents=[common],
                       help="run a benchmark experiment protocol")
    p.add_argument("--kind", required=True,
                   choices=["grid", "sampling", "imbalance", "drift"])
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--data", help="source CSV (synthetic data if omitted)")
    p.add_argument("--schema", help="schema for --data")
    p.add_argument("--sizes", type=_int_list,
                   default=list(DEFAULT_SIZES), help="grid sizes, comma list")
    p.add_argument("--distributions", type=_float_list,
                   default=list(DEFAULT_DISTRIBUTIONS),
                   help="positive fractions, comma list")
    p.add_argument("--approaches", type=_str_list, default=list(APPROACHES))
    p.add_argument("--trials", type=int, default=25,
                   help="random-search trials for tuned arms")
    p.add_argument("--folds", type=int, default=5,
                   help="folds for the imbalance comparison")
    p.add_argument("--size", type=int, default=10_000,
                   help="per-distribution dataset size for sampling")
    p.add_argument("--mode", choices=[MOVING_WINDOW, TRAIN_ONCE, "both"],
                   default="both", help="drift protocol mode")
    p.add_argument("--space", choices=["rs", "scale"], default="scale",
                   help="tuning space for drift and sampling arms")
    p.add_argument("--train-window", type=int, default=TRAIN_WINDOW)
    p.add_argument("--test-window", type=int, default=TEST_WINDOW)
    p.add_argument("--sections", type=int, default=N_SECTIONS)
    p.add_argument("--synth-rows", type=int, default=0,
                   help="rows of synthetic source data (0 = auto per kind)")
    p.add_argument("--synth-numeric", type=int, default=8)
    p.add_argument("--synth-categorical", type=int, default=2)
    p.add_argument("--synth-pos", type=float, default=0.5)
    p.add_argument("--synth-sep", type=float, default=2.0)
    p.add_argument("--synth-missing", type=float, default=0.0)
    p.add_argument("--synth-drift-onset", type=int, default=-1)
    p.add_argument("--synth-drift-magnitude", type=float, default=0.0)
    subparsers["experiment"] = p

    return parser, subparsers


def _add_train_params(p: argparse.ArgumentParser) -> None:
    defaults = TrainConfig()
    p.add_argument("--n-trees", type=int, default=defaults.n_trees)
    p.add_argument("--max-depth", type=int, default=defaults.max_depth)
    p.add_argument("--learning-rate", type=float, default=defaults.learning_rate)
    p.add_argument("--subsample", type=float, default=defaults.subsample)
    p.add_argument("--colsample-bytree", type=float,
                   default=defaults.colsample_bytree)
    p.add_argument("--scale-pos-weight", type=float,
                   default=defaults.scale_pos_weight)
    p.add_argument("--weighted-alpha", type=float, default=None)
    p.add_argument("--focal-gamma", type=float, default=None)
    p.add_argument("--l2-lambda", type=float, default=defaults.l2_lambda)
    p.add_argument("--min-split-loss", type=float, default=defaults.min_split_loss)
    p.add_argument("--min-child-hessian", type=float,
                   default=defaults.min_child_hessian)


def config_from_args(args: argparse.Namespace) -> TrainConfig:
    return TrainConfig(
        n_trees=args.n_trees,
        max_depth=args.max_depth,
        learning_rate=args.learning_rate,
        subsample=args.subsample,
        colsample_bytree=args.colsample_bytree,
        scale_pos_weight=args.scale_pos_weight,
        weighted_alpha=args.weighted_alpha,
        focal_gamma=args.focal_gamma,
        l2_lambda=args.l2_lambda,
        min_split_loss=args.min_split_loss,
        min_child_hessian=args.min_child_hessian,
        seed=args.seed,
    )


# ---------------------------------------------------------------------------
# subcommands


def cmd_prepare(args) -> int:
    schema = load_schema(args.schema)
    data = load_csv(args.data, schema)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.no_split:
        splits = [("prepared.csv", None)]
        train_raw = data
    else:
        train_raw, test_raw = time_split_fraction(data, args.split)
        splits = [("train.csv", train_raw), ("test.csv", test_raw)]
    state = fit_transforms(train_raw, args.missing_policy, args.missing_fill)
    state.save(out / "state.json")
    if args.no_split:
        save_csv(apply_transforms(state, data), out / "prepared.csv")
    else:
        save_csv(apply_transforms(state, train_raw), out / "train.csv")
        save_csv(apply_transforms(state, test_raw), out / "test.csv")
    print(f"wrote {out / 'state.json'} and prepared CSVs to {out}")
    return 0


def _load_prepared(path: str, state_path: str | None, schema_path: str | None) -> Dataset:
    if state_path:
        schema = TransformState.load(state_path).schema.all_numeric()
    elif schema_path:
        schema = load_schema(schema_path)
    else:
        raise DataError("give --state or --schema to describe the CSV")
    return load_csv(path, schema)


def cmd_train(args) -> int:
    train = _load_prepared(args.data, args.state, args.schema)
    eval_set = None
    if args.eval_data:
        eval_set = _load_prepared(args.eval_data, args.state, args.schema)
    model = fit(train, config_from_args(args), eval_set)
    model.save(args.model)
    if args.fit_log:
        with open(args.fit_log, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            header = ["round", "train_loss"]
            if model.fit_log.eval_auc_pr is not None:
                header.append("eval_auc_pr")
            writer.writerow(header)
            for i, loss in enumerate(model.fit_log.train_loss):
                row = [i, repr(loss)]
                if model.fit_log.eval_auc_pr is not None:
                    row.append(repr(model.fit_log.eval_auc_pr[i]))
                writer.writerow(row)
    print(f"wrote {args.model}")
    return 0


def cmd_predict(args) -> int:
    model = Ensemble.load(args.model)
    if args.state:
        state = TransformState.load(args.state)
        raw = load_csv(args.data, state.schema)
        data = apply_transforms(state, raw)
    else:
        if model.schema is None:
            raise DataError("model carries no schema; pass --state")
        data = load_csv(args.data, model.schema)
    margins = model.predict_margin(data)
    proba = model.predict_proba(data)
    labels_pred = model.predict_label(data)
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["proba", "margin", "label_pred", "label"])
        for p, m, lp, y in zip(proba, margins, labels_pred, data.labels):
            writer.writerow([repr(float(p)), repr(float(m)), int(lp), int(y)])
    print(f"wrote {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    proba: list[float] = []
    label_pred: list[int] = []
    label: list[int] = []
    with open(args.scores, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            proba.append(float(row["proba"]))
            label_pred.append(int(row["label_pred"]))
            label.append(int(row["label"]))
    if not label:
        raise MetricError("empty scores file")
    rep = report(confusion(label, label_pred))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report_to_csv(rep, out / "metrics.csv")
    (out / "metrics.txt").write_text(rep.format_block() + "\n", encoding="utf-8")
    if any(y == 1 for y in label):
        pr_curve(label, proba).save_csv(out / "pr_curve.csv")
    print(rep.format_block())
    return 0


def cmd_tune(args) -> int:
    schema = load_schema(args.schema)
    data = load_csv(args.data, schema)
    space = RS_GRID if args.space == "rs" else SCALE_GRID
    trials = min(args.trials, space.size) if args.space == "scale" else args.trials
    result = random_search(data, space, trials, args.folds, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result.save_trial_log(out / "trials.csv")
    pipeline = fit_best(data, result)
    pipeline.transforms.save(out / "state.json")
    pipeline.ensemble.save(out / "model.json")
    print(
        f"winner: {result.best_config.to_dict()}\n"
        f"F1 {result.summary()}, files in {out}"
    )
    return 0


def _experiment_source(args, kind: str) -> Dataset:
    if args.data:
        if not args.schema:
            raise DataError("--data needs --schema")
        return load_csv(args.data, load_schema(args.schema))
    n_rows = args.synth_rows
    if n_rows <= 0:
        if kind == "grid":
            largest = max(args.sizes)
            n_rows = int(2.2 * largest)
        elif kind == "sampling":
            n_rows = int(2.2 * args.size)
        elif kind == "drift":
            n_rows = args.train_window + args.sections * args.test_window
        else:
            n_rows = 768
    spec = SynthSpec(
        n_rows=n_rows,
        n_numeric=args.synth_numeric,
        n_categorical=args.synth_categorical,
        pos_fraction=args.synth_pos,
        class_separation=args.synth_sep,
        missing_rate=args.synth_missing,
        drift_onset=None if args.synth_drift_onset < 0 else args.synth_drift_onset,
        drift_magnitude=args.synth_drift_magnitude,
        seed=args.seed,
    )
    return synth_generate(spec)


def cmd_experiment(args) -> int:
    kind = args.kind
    source = _experiment_source(args, kind)
    space = RS_GRID if args.space == "rs" else SCALE_GRID
    if kind == "grid":
        results = run_grid(
            source,
            sizes=args.sizes,
            distributions=args.distributions,
            approaches=args.approaches,
            seed=args.seed,
            rs_trials=args.trials,
        )
    elif kind == "sampling":
        results = sampling_experiment(
            source,
            distributions=args.distributions,
            size=args.size,
            seed=args.seed,
            rs_trials=min(args.trials, space.size),
            rs_space=space,
        )
    elif kind == "imbalance":
        results = imbalance_objective_experiment(source, seed=args.seed, k=args.folds)
    else:
        modes = [MOVING_WINDOW, TRAIN_ONCE] if args.mode == "both" else [args.mode]
        results = ExperimentResult()
        for mode in modes:
            run = drift_experiment(
                source, mode,
                space=space,
                n_trials=min(args.trials, space.size),
                seed=args.seed,
                train_window=args.train_window,
                test_window=args.test_window,
                n_sections=args.sections,
            )
            results.drift[mode] = run
    written = emit_report(results, args.out)
    print(f"wrote {len(written)} report files to {args.out}")
    return 0


COMMANDS = {
    "prepare": cmd_prepare,
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "tune": cmd_tune,
    "experiment": cmd_experiment,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, subparsers = build_parser()

    # apply config-file values as defaults of the chosen subcommand
    probe = argparse.ArgumentParser(add_help=False)
    probe.add_argument("--config")
    known, _ = probe.parse_known_args(argv)
    if known.config:
        command = next((a for a in argv if not a.startswith("-")), None)
        raw = load_config_file(known.config)
        if command in subparsers:
            chosen = subparsers[command]
            defaults = _typed_defaults(chosen, raw)
            chosen.set_defaults(**defaults)
            for action in chosen._actions:
                if action.required and action.dest in defaults:
                    action.required = False

    args = parser.parse_args(argv)
    if getattr(args, "threads", 0):
        import numba

        numba.set_num_threads(max(1, args.threads))
    try:
        return COMMANDS[args.command](args)
    except USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
