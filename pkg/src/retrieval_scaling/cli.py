"""Command-line interface.

Every subcommand reads its inputs from files named on the command line and
writes a single artifact (CSV or JSON) to ``--output`` or standard output.
Exit status is 0 on success, 2 for invalid input and 3 when a valid
computation fails (a fit that does not converge, an unaffordable budget, a
diverging training cell).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import fields

import numpy as np

from . import budget as budget_mod
from .errors import ComputationError, InputError
from .lawfit import (
    JointLawFit,
    PowerLawFit,
    fit_from_dict,
    fit_joint_law,
    fit_single_law,
    fit_to_dict,
    predict_joint,
    predict_single,
)
from .metrics import EvalSample, contrastive_entropy, correlate
from .toysim.corpus import load_external_pairs
from .toysim.grid import (
    AnnotationConfig,
    CorpusConfig,
    GridError,
    Simulation,
    records_from_csv,
    records_to_csv,
    run_grid,
)
from .toysim.training import TrainConfig

EXIT_OK, EXIT_INPUT, EXIT_COMPUTE = 0, 2, 3

SIMULATE_KEYS = {"corpus", "train", "architectures", "data_sizes", "seeds", "annotation",
                 "ranking_output"}
RANKING_HEADER = ("model_size", "data_size", "annotation_method", "seed",
                  "contrastive_entropy", "ndcg@10", "map@10", "recall@1000")


def fmt(x) -> str:
    """Shortest round-trip decimal for floats, plain text otherwise."""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _dump_json(doc) -> str:
    return json.dumps(doc, indent=2) + "\n"


def _read_text(path: str) -> str:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc


def _load_json(path: str):
    text = _read_text(path)
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path} line {exc.lineno} column {exc.colno}: {exc.msg}") from exc


def _load_fit(path: str):
    doc = _load_json(path)
    if not isinstance(doc, dict):
        raise InputError(f"{path}: fit document must be a JSON object")
    return fit_from_dict(doc)


# ---------------------------------------------------------------- simulate

def _section(config: dict, key: str, cls, overrides=None):
    """Build a config dataclass from ``config[key]``, naming any bad field."""
    raw = config.get(key, {})
    if not isinstance(raw, dict):
        raise InputError(f"config field '{key}' must be an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise InputError(f"config field '{key}.{unknown[0]}' is not recognised; "
                         f"allowed: {', '.join(sorted(known))}")
    values = dict(overrides or {})
    values.update(raw)
    try:
        return cls(**values)
    except InputError as exc:
        raise InputError(f"config field '{key}': {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise InputError(f"config field '{key}': invalid value ({exc})") from exc


def _int_list(config: dict, key: str, required: bool, default=None) -> list:
    if key not in config:
        if required:
            raise InputError(f"config is missing required field '{key}'")
        return default
    value = config[key]
    if not isinstance(value, list) or not value:
        raise InputError(f"config field '{key}' must be a non-empty list")
    for i, v in enumerate(value):
        if isinstance(v, bool) or not isinstance(v, int):
            raise InputError(f"config field '{key}[{i}]' must be an integer, got {v!r}")
    return value


def _parse_simulate_config(config, seed: int):
    if not isinstance(config, dict):
        raise InputError("config must be a JSON object")
    unknown = sorted(set(config) - SIMULATE_KEYS)
    if unknown:
        raise InputError(f"config field '{unknown[0]}' is not recognised")

    if "architectures" not in config:
        raise InputError("config is missing required field 'architectures'")
    archs = config["architectures"]
    if not isinstance(archs, list) or not archs:
        raise InputError("config field 'architectures' must be a non-empty list of width lists")
    for i, arch in enumerate(archs):
        if not isinstance(arch, list) or any(
                isinstance(w, bool) or not isinstance(w, int) or w < 1 for w in arch):
            raise InputError(f"config field 'architectures[{i}]' must be a list of positive integers")

    data_sizes = _int_list(config, "data_sizes", required=True)
    seeds = _int_list(config, "seeds", required=False, default=[seed])
    corpus_config = _section(config, "corpus", CorpusConfig, {"seed": seed})
    train_config = _section(config, "train", TrainConfig)

    raw_ann = dict(config.get("annotation", {}) or {})
    pairs_file = raw_ann.pop("pairs_file", None)
    if pairs_file is not None:
        raw_ann["pairs"] = tuple(load_external_pairs(_read_text(pairs_file).splitlines()))
    annotation = _section({"annotation": raw_ann}, "annotation", AnnotationConfig)

    ranking_output = config.get("ranking_output")
    if ranking_output is not None and not isinstance(ranking_output, str):
        raise InputError("config field 'ranking_output' must be a file path")
    return corpus_config, train_config, archs, data_sizes, seeds, annotation, ranking_output


def _ranking_csv(records) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RANKING_HEADER)
    for r in records:
        m = r.ranking
        writer.writerow([r.model_size, r.data_size, r.annotation_method, r.seed,
                         fmt(r.contrastive_entropy), fmt(m["ndcg@10"]), fmt(m["map@10"]),
                         fmt(m["recall@1000"])])
    return buf.getvalue()


def cmd_simulate(args) -> str:
    config = _load_json(args.input)
    (corpus_config, train_config, archs, data_sizes, seeds, annotation,
     ranking_output) = _parse_simulate_config(config, args.seed)
    if annotation.method == "external":
        for pair in annotation.pairs:
            if not 0 <= pair.positive_doc_index < corpus_config.n_docs:
                raise InputError("external pair positive_doc_index outside the corpus")
    simulation = Simulation(corpus_config, train_config)
    records = run_grid(corpus_config, archs, data_sizes, seeds, train_config, annotation,
                       ranking=ranking_output is not None, simulation=simulation)
    if ranking_output is not None:
        _write(ranking_output, _ranking_csv(records))
    return records_to_csv(records)


# ---------------------------------------------------------------- fitting

def _load_records(path: str):
    records = records_from_csv(_read_text(path))
    if not records:
        raise InputError(f"{path}: no run records")
    return records


def _select(records, attr, value, what):
    """Keep records whose ``attr`` equals ``value``; default to the largest value present."""
    present = sorted({getattr(r, attr) for r in records})
    if value is None:
        value = present[-1]
    chosen = [r for r in records if getattr(r, attr) == value]
    if not chosen:
        raise InputError(f"no records with {what}={value}; present: {present}")
    return chosen


def _filter_method(records, method):
    methods = sorted({r.annotation_method for r in records})
    if method is None:
        if len(methods) > 1:
            raise InputError(f"records mix annotation methods {methods}; pass --annotation-method")
        return records
    chosen = [r for r in records if r.annotation_method == method]
    if not chosen:
        raise InputError(f"no records with annotation_method={method}; present: {methods}")
    return chosen


def _min_by(records, key) -> dict:
    # best (lowest) loss across seeds for each distinct key
    best = {}
    for r in records:
        k = key(r)
        best[k] = min(best.get(k, math.inf), r.contrastive_entropy)
    return dict(sorted(best.items()))


def cmd_fit(args) -> str:
    records = _filter_method(_load_records(args.input), args.annotation_method)
    if args.axis == "model":
        records = _select(records, "data_size", args.data_size, "data_size")
        best = _min_by(records, lambda r: r.model_size)
    else:
        records = _select(records, "model_size", args.model_size, "model_size")
        best = _min_by(records, lambda r: r.data_size)
    if len(best) < 3:
        raise InputError(f"need at least 3 distinct {args.axis} sizes after filtering, got {len(best)}")
    x = np.array(list(best), dtype=float)
    y = np.array(list(best.values()))
    return _dump_json(fit_to_dict(fit_single_law((x, y))))


def cmd_fit_joint(args) -> str:
    records = _filter_method(_load_records(args.input), args.annotation_method)
    best = _min_by(records, lambda r: (r.model_size, r.data_size))
    n = np.array([k[0] for k in best], dtype=float)
    d = np.array([k[1] for k in best], dtype=float)
    loss = np.array(list(best.values()))
    return _dump_json(fit_to_dict(fit_joint_law((n, d, loss), max_evals=args.max_evals)))


def cmd_predict(args) -> str:
    fit = _load_fit(args.fit)
    if isinstance(fit, PowerLawFit):
        if args.x is None or args.n is not None or args.d is not None:
            raise InputError("a single-law fit takes --x only")
        value = predict_single(fit, args.x)
    else:
        if args.n is None or args.d is None or args.x is not None:
            raise InputError("a joint fit takes --n and --d")
        value = predict_joint(fit, args.n, args.d)
    return fmt(float(value)) + "\n"


# ---------------------------------------------------------------- budget

def _cost_inputs(args) -> budget_mod.CostFactorInputs:
    values = {f.name: getattr(args, f.name) for f in fields(budget_mod.CostFactorInputs)}
    return budget_mod.CostFactorInputs(**values)


def _cost_model(args) -> budget_mod.CostModel:
    return budget_mod.derive_cost_factors(_cost_inputs(args), args.include_inference)


def _joint_fit(path) -> JointLawFit:
    fit = _load_fit(path)
    if not isinstance(fit, JointLawFit):
        raise InputError("joint fit required")
    return fit


def _bounds(args):
    if args.n_min is None and args.n_max is None:
        return None
    return (args.n_min if args.n_min is not None else budget_mod.DEFAULT_MIN_PARAMS,
            args.n_max if args.n_max is not None else math.inf)


def cmd_allocate(args) -> str:
    law = _joint_fit(args.fit)
    model = _cost_model(args)
    alloc = budget_mod.optimal_allocation(law, model, args.budget, n_bounds=_bounds(args))
    doc = alloc.to_dict()
    doc["d_star_rounded"] = int(round(alloc.d_star))
    return _dump_json(doc)


def cmd_budget_curve(args) -> str:
    law = _joint_fit(args.fit)
    model = _cost_model(args)
    if args.points < 2:
        raise InputError("--points must be at least 2")
    lo = args.n_min if args.n_min is not None else budget_mod.DEFAULT_MIN_PARAMS
    hi = args.n_max
    if hi is None:
        if not args.budget > 0:
            raise budget_mod.InfeasibleBudgetError(f"budget must be positive, got {args.budget}")
        hi = budget_mod.default_bounds(model, args.budget)[1]
    if not 0 < lo < hi:
        raise InputError(f"need 0 < n-min < n-max, got {lo}, {hi}")
    grid = np.geomspace(lo, hi, args.points)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["n", "predicted_loss", "feasible"])
    for n, loss, ok in budget_mod.budget_curve(law, model, args.budget, grid):
        writer.writerow([fmt(n), fmt(loss), fmt(ok)])
    return buf.getvalue()


def cmd_derive_costs(args) -> str:
    model = _cost_model(args)
    doc = {name: float(f"{getattr(model, name):.6g}") for name in ("z_data", "z_train", "z_infer")}
    doc["include_inference"] = model.include_inference
    return _dump_json(doc)


# ---------------------------------------------------------------- evaluation

def _parse_score_line(obj, lineno):
    if not isinstance(obj, dict):
        raise InputError(f"line {lineno}: expected a JSON object")
    missing = [k for k in ("qid", "positive", "negatives") if k not in obj]
    if missing:
        raise InputError(f"line {lineno}: missing field '{missing[0]}'")
    qid, pos, negs = obj["qid"], obj["positive"], obj["negatives"]
    if not isinstance(qid, str):
        raise InputError(f"line {lineno}: 'qid' must be a string")
    if isinstance(pos, bool) or not isinstance(pos, (int, float)):
        raise InputError(f"line {lineno}: 'positive' must be a number")
    if not isinstance(negs, list) or any(isinstance(v, bool) or not isinstance(v, (int, float))
                                         for v in negs):
        raise InputError(f"line {lineno}: 'negatives' must be an array of numbers")
    try:
        return qid, EvalSample(pos, tuple(negs))
    except InputError as exc:
        raise InputError(f"line {lineno}: {exc}") from exc


def cmd_eval(args) -> str:
    rows = []
    for lineno, line in enumerate(_read_text(args.input).splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise InputError(f"line {lineno}: {exc.msg}") from exc
        qid, sample = _parse_score_line(obj, lineno)
        rows.append((qid, contrastive_entropy(sample)))
    if not rows:
        raise InputError(f"{args.input}: no scored queries")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["qid", "contrastive_entropy"])
    for qid, value in rows:
        writer.writerow([qid, fmt(value)])
    writer.writerow(["__mean__", fmt(math.fsum(v for _, v in rows) / len(rows))])
    return buf.getvalue()


def cmd_correlate(args) -> str:
    rows = [r for r in csv.reader(io.StringIO(_read_text(args.input))) if r]
    if rows:
        try:
            float(rows[0][0])
        except (ValueError, IndexError):
            rows = rows[1:]  # header
    xs, ys = [], []
    for i, row in enumerate(rows, start=1):
        if len(row) != 2:
            raise InputError(f"row {i}: expected 2 columns, got {len(row)}")
        try:
            xs.append(float(row[0]))
            ys.append(float(row[1]))
        except ValueError as exc:
            raise InputError(f"row {i}: {exc}") from exc
    return _dump_json(correlate(xs, ys).to_dict())


# ---------------------------------------------------------------- parser

def _add_cost_flags(p):
    for f in fields(budget_mod.CostFactorInputs):
        p.add_argument("--" + f.name.replace("_", "-"), dest=f.name, type=float, default=f.default,
                       help=f"default {f.default}")
    p.add_argument("--include-inference", action="store_true",
                   help="charge the cost of embedding the corpus to each parameter")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--output", "-o", help="output file (default: standard output)")
    common.add_argument("--seed", type=int, default=42,
                        help="master seed for anything the inputs leave unseeded (default 42)")

    parser = argparse.ArgumentParser(prog="retrieval-scaling",
                                     description="Scaling-law fitting and budgeting for dense retrieval.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="train a toy grid, write run records")
    p.add_argument("input", help="JSON grid config")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", parents=[common], help="fit a single power law to run records")
    p.add_argument("input", help="run-record CSV")
    p.add_argument("--axis", choices=("model", "data"), required=True)
    p.add_argument("--data-size", type=int, help="data size to hold fixed (axis=model; default largest)")
    p.add_argument("--model-size", type=int, help="model size to hold fixed (axis=data; default largest)")
    p.add_argument("--annotation-method", help="keep only this annotation method")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("fit-joint", parents=[common], help="fit the joint model/data law")
    p.add_argument("input", help="run-record CSV")
    p.add_argument("--annotation-method")
    p.add_argument("--max-evals", type=int, default=10_000)
    p.set_defaults(func=cmd_fit_joint)

    p = sub.add_parser("predict", parents=[common], help="evaluate a fitted law")
    p.add_argument("fit", help="fit JSON")
    p.add_argument("--x", type=float)
    p.add_argument("--n", type=float)
    p.add_argument("--d", type=float)
    p.set_defaults(func=cmd_predict)

    for name, func, helptext in (
        ("allocate", cmd_allocate, "best model size for a budget"),
        ("budget-curve", cmd_budget_curve, "predicted loss across model sizes at a budget"),
    ):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("fit", help="joint fit JSON")
        p.add_argument("--budget", type=float, required=True, help="dollars")
        p.add_argument("--n-min", type=float)
        p.add_argument("--n-max", type=float)
        if name == "budget-curve":
            p.add_argument("--points", type=int, default=100)
        _add_cost_flags(p)
        p.set_defaults(func=func)

    p = sub.add_parser("derive-costs", parents=[common], help="cost factors from hardware assumptions")
    _add_cost_flags(p)
    p.set_defaults(func=cmd_derive_costs)

    p = sub.add_parser("eval", parents=[common], help="contrastive entropy of scored queries")
    p.add_argument("input", help="JSONL with qid, positive, negatives")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("correlate", parents=[common], help="correlate entropy with a ranking metric")
    p.add_argument("input", help="two-column CSV: entropy, metric")
    p.set_defaults(func=cmd_correlate)
    return parser


def _write(path, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise InputError(f"cannot write {path}: {exc.strerror}") from exc


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.seed < 0:
        print("error: --seed must be unsigned", file=sys.stderr)
        return EXIT_INPUT
    try:
        text = args.func(args)
        _write(args.output, text)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except GridError as exc:
        print(f"error: {exc} ({len(exc.records)} cells completed)", file=sys.stderr)
        return EXIT_COMPUTE
    except ComputationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
