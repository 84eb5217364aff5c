"""Command-line front end: ``cqrkit gen|train|predict|evaluate|compare``.

Every command writes a JSON manifest next to its main output recording the
effective parameters, so a run can be repeated exactly.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .conformal import conformalize
from .data import (DataError, Dataset, grouped_folds, kfold, load_csv, synth_heteroscedastic,
                   write_csv, write_oracle)
from .model import CQRModel, cross_validate, format_mean_sd
from .net import NetConfig, TrainingDiverged
from .scoring import (PicpCurve, deviation_score, format_report, gap, mad, picp_curve,
                      point_estimate)
from .stats import compare_groups, format_compare

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

# flag name -> (NetConfig field or None, type, default)
HYPER = {
    "hidden": ("hidden_units", int, 32),
    "dropout": ("dropout_rate", float, 0.2),
    "lr": ("learning_rate", float, 0.01),
    "epochs": ("epochs", int, 10),
    "batch": ("batch_size", int, 64),
    "mc": ("mc_samples", int, 1000),
    "cal": (None, int, 1000),
    "seed": (None, int, 0),
}


class UsageError(Exception):
    pass


def read_config(path):
    """Parse a ``key = value`` file; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("_", "-")] = value
    return out


def resolve_hyper(args):
    """Effective hyperparameters with precedence flags > config file > defaults."""
    file_values = read_config(args.config) if getattr(args, "config", None) else {}
    unknown = set(file_values) - set(HYPER)
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    eff = {}
    for name, (_, typ, default) in HYPER.items():
        flag = getattr(args, name)
        if flag is not None:
            eff[name] = flag
        elif name in file_values:
            try:
                eff[name] = typ(file_values[name])
            except ValueError:
                raise UsageError(f"config value for {name!r} is not a {typ.__name__}") from None
        else:
            eff[name] = default
    return eff


def net_config(hyper):
    try:
        return NetConfig(**{field: hyper[k] for k, (field, _, _) in HYPER.items() if field})
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def write_manifest(out_path, command, params, inputs, outputs, started):
    manifest = {
        "command": command,
        "parameters": params,
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "toolkit_version": __version__,
        "wall_time_seconds": round(time.perf_counter() - started, 3),
    }
    path = Path(str(out_path) + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# commands


def cmd_gen(args, started):
    if args.n < 1:
        raise UsageError("--n must be at least 1")
    if args.features < 1:
        raise UsageError("--features must be at least 1")
    dataset, task = synth_heteroscedastic(args.n, args.seed, args.features)
    write_csv(dataset, args.out)
    oracle = Path(str(args.out) + ".oracle.json")
    write_oracle(task, oracle, args.seed)
    write_manifest(args.out, "gen", {"n": args.n, "seed": args.seed, "features": args.features},
                   [], [args.out, oracle], started)


def cmd_train(args, started):
    hyper = resolve_hyper(args)
    dataset = load_csv(args.data, args.target, args.group)
    if hyper["cal"] >= len(dataset):
        raise UsageError(f"--cal {hyper['cal']} leaves no training rows out of {len(dataset)}")
    model = CQRModel.fit(dataset, net_config(hyper), hyper["cal"], hyper["seed"])
    model.save(args.out)
    params = dict(hyper, target=args.target, group=args.group)
    write_manifest(args.out, "train", params, [args.data], [args.out], started)


def _fmt(x):
    return "" if x is None or (isinstance(x, float) and np.isnan(x)) else repr(float(x))


def cmd_predict(args, started):
    model = CQRModel.load(args.model)
    target = args.target or model.target_name
    dataset = load_csv(args.data, target, args.group, require_target=False)
    cq = model.predict(dataset, mc_seed=args.mc_seed, mc_samples=args.mc)
    values = np.atleast_2d(cq.values)
    points = np.atleast_1d(point_estimate(cq))
    ys = dataset.targets if dataset.targets is not None else np.full(len(dataset), np.nan)

    header = ["row", "point", "target", "gap", "score"]
    if dataset.groups is not None:
        header.append(args.group)
    header += [f"q{k:03d}" for k in range(values.shape[1])]
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(len(dataset)):
            y = ys[i]
            known = np.isfinite(y)
            row = [i, _fmt(points[i]), _fmt(y),
                   _fmt(gap(values[i], y)) if known else "",
                   deviation_score(values[i], y) if known else ""]
            if dataset.groups is not None:
                row.append(dataset.groups[i])
            row += [_fmt(v) for v in values[i]]
            w.writerow(row)
    params = {"mc_seed": args.mc_seed, "mc": args.mc, "target": target, "group": args.group}
    write_manifest(args.out, "predict", params, [args.model, args.data], [args.out], started)


def _pooled_curve(curves):
    n = sum(c.n for c in curves)
    raw = sum(c.raw * c.n for c in curves) / n
    conf = sum(c.conformal * c.n for c in curves) / n
    return PicpCurve(curves[0].nominal, raw, conf, n)


def cmd_evaluate(args, started):
    if args.kfold is not None and args.group_cv:
        raise UsageError("--kfold and --group-cv are mutually exclusive")
    cv = args.kfold is not None or args.group_cv
    if not cv and args.model is None:
        raise UsageError("--model is required unless --kfold or --group-cv is given")

    if not cv:
        model = CQRModel.load(args.model)
        dataset = load_csv(args.data, args.target or model.target_name, args.group)
        est = model.predict_quantiles(dataset, mc_seed=args.mc_seed)
        cq = conformalize(est, model.table)
        curve = picp_curve(est, model.table, dataset.targets)
        summary = {
            "n": len(dataset),
            "mad": repr(mad(point_estimate(cq), dataset.targets)),
            "mean_gap": repr(float(np.mean(gap(cq, dataset.targets)))),
            "calibration_n": model.table.n,
            "unbounded_pairs": int(model.table.infinite.sum()),
        }
        text = format_report(curve, model.table, summary, deviation_score(cq, dataset.targets))
        params = {"mode": "holdout", "mc_seed": args.mc_seed}
        inputs = [args.model, args.data]
    else:
        hyper = resolve_hyper(args)
        if args.target is None:
            raise UsageError("--target is required for cross-validation")
        if args.group_cv and args.group is None:
            raise UsageError("--group-cv needs --group")
        dataset = load_csv(args.data, args.target, args.group)
        try:
            if args.group_cv:
                folds = grouped_folds(dataset.groups)
            else:
                folds = kfold(len(dataset), args.kfold, hyper["seed"])
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        results = cross_validate(dataset, folds, net_config(hyper), hyper["cal"], hyper["seed"])
        curves = [picp_curve(r["estimates"], r["table"], dataset.targets[r["index"]])
                  for r in results]
        fold_mads = [r["mad"] for r in results]
        cq_all = np.concatenate([np.atleast_2d(r["calibrated"].values) for r in results])
        y_all = np.concatenate([dataset.targets[r["index"]] for r in results])
        summary = {"folds": len(results), "mad_mean_sd": format_mean_sd(fold_mads)}
        for i, m in enumerate(fold_mads):
            summary[f"mad_fold_{i}"] = repr(m)
        summary["mean_gap"] = repr(float(np.mean(gap(cq_all, y_all))))
        text = format_report(_pooled_curve(curves), results[0]["table"], summary,
                             deviation_score(cq_all, y_all))
        params = dict(hyper, mode="group-cv" if args.group_cv else f"kfold-{args.kfold}",
                      target=args.target, group=args.group)
        inputs = [args.data]
    Path(args.out).write_text(text, encoding="utf-8")
    write_manifest(args.out, "evaluate", params, inputs, [args.out], started)


def cmd_compare(args, started):
    path = Path(args.scores)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or args.group not in reader.fieldnames:
            raise DataError(f"group column {args.group!r} not found in {path}", column=args.group)
        if args.score_column not in reader.fieldnames:
            raise DataError(f"score column {args.score_column!r} not found in {path}",
                            column=args.score_column)
        scores, groups = [], []
        for i, row in enumerate(reader, start=1):
            cell = row[args.score_column].strip()
            if not cell:
                continue
            try:
                scores.append(float(cell))
            except ValueError:
                raise DataError(f"non-numeric score {cell!r} at row {i}", row=i) from None
            groups.append(row[args.group].strip())
    if not scores:
        raise DataError(f"{path} has no scored rows")
    labels = list(dict.fromkeys(groups))
    reference = args.reference or labels[0]
    try:
        rows = compare_groups(scores, groups, reference)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    Path(args.out).write_text(format_compare(rows, reference), encoding="utf-8")
    params = {"group": args.group, "score_column": args.score_column, "reference": reference}
    write_manifest(args.out, "compare", params, [args.scores], [args.out], started)


# ---------------------------------------------------------------------------
# parser


def _add_hyper(p):
    p.add_argument("--hidden", type=int, help="hidden rectified units (default 32)")
    p.add_argument("--dropout", type=float, help="dropout rate (default 0.2)")
    p.add_argument("--lr", type=float, help="Adam learning rate (default 0.01)")
    p.add_argument("--epochs", type=int, help="training epochs (default 10)")
    p.add_argument("--batch", type=int, help="mini-batch size (default 64)")
    p.add_argument("--mc", type=int, help="Monte-Carlo dropout passes (default 1000)")
    p.add_argument("--cal", type=int, help="calibration set size (default 1000)")
    p.add_argument("--seed", type=int, help="master seed (default 0)")
    p.add_argument("--config", help="key = value file with defaults for the flags above")


def build_parser():
    parser = argparse.ArgumentParser(prog="cqrkit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"cqrkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write a synthetic heteroscedastic dataset")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--features", type=int, default=1, help="columns; all but the first are noise")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train and calibrate a model")
    p.add_argument("--data", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--group")
    _add_hyper(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="calibrated quantiles, gaps and deviation scores")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--target", help="target column (default: the one used in training)")
    p.add_argument("--group", help="group column copied to the output")
    p.add_argument("--mc", type=int, help="override the model's Monte-Carlo passes")
    p.add_argument("--mc-seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="MAD and coverage report, optionally cross-validated")
    p.add_argument("--model")
    p.add_argument("--data", required=True)
    p.add_argument("--target")
    p.add_argument("--group")
    p.add_argument("--kfold", type=int, metavar="K")
    p.add_argument("--group-cv", action="store_true", help="one held-out fold per group")
    p.add_argument("--mc-seed", type=int, default=0)
    _add_hyper(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="Mann-Whitney tests of scores against a reference group")
    p.add_argument("--scores", required=True)
    p.add_argument("--group", required=True)
    p.add_argument("--score-column", default="score")
    p.add_argument("--reference")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    started = time.perf_counter()
    try:
        args.func(args, started)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"cqrkit {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"cqrkit {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingDiverged, FloatingPointError) as exc:
        print(f"cqrkit {args.command}: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
