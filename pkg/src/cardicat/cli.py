"""Command-line entry point: simulate | fit | sample | evaluate.

Settings resolve as flag > ``--config`` JSON value > built-in default. The
config file is a flat JSON object whose keys are the long flag names with
underscores (``batch_size``, ``lambda_reg``, ``rows`` ...) plus any
:class:`TrainConfig` field that has no flag of its own.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import tempfile
from contextlib import contextmanager
from dataclasses import fields
from pathlib import Path

from . import nn
from .errors import CardiCatError, DataError, NumericalError
from .fidelity import evaluate
from .model import MODES, CardiCat, TrainConfig, conditional_prepare, init_model
from .schema import (Schema, drop_missing_numeric, encode, infer_schema, read_csv,
                     split_indices, write_csv)
from .simgen import SimSpec, write_simulated
from .synthesis import generate, output_schema
from .train import train

log = logging.getLogger("cardicat")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3

TRAIN_FIELDS = {f.name for f in fields(TrainConfig)}
# flags that map one-to-one onto TrainConfig fields
TRAIN_FLAGS = ("mode", "epochs", "batch_size", "lr", "latent_dim", "hidden_dim",
               "lambda_kl", "lambda_reg", "loss_factor", "precision")
DEFAULTS = {"seed": 0, "split": 0.8, "stochastic": False, "figures": True}


class UsageError(CardiCatError):
    pass


class StageError(Exception):
    def __init__(self, stage: str, err: BaseException):
        super().__init__(f"{stage}: {err}")
        self.stage, self.err = stage, err


@contextmanager
def stage(name: str):
    """Tag any failure inside the block with the pipeline stage it came from."""
    try:
        yield
    except StageError:
        raise
    except (CardiCatError, OSError, ValueError, KeyError) as e:
        raise StageError(name, e) from e


def exit_code(err: BaseException) -> int:
    if isinstance(err, NumericalError):
        return EXIT_NUMERICAL
    if isinstance(err, UsageError):
        return EXIT_USAGE
    return EXIT_DATA


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cardicat", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log per-epoch losses")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", type=Path, help="JSON file of settings")
        sp.add_argument("--seed", type=int)

    sp = sub.add_parser("simulate", help="write the simulated benchmark CSV")
    common(sp)
    sp.add_argument("--out", type=Path, required=True)
    sp.add_argument("--rows", type=int, help="number of rows (default 100000)")

    sp = sub.add_parser("fit", help="train a model on a CSV file")
    common(sp)
    sp.add_argument("--data", type=Path, required=True)
    sp.add_argument("--checkpoint", type=Path, required=True)
    sp.add_argument("--log", type=Path, help="training-log CSV (default <checkpoint>.log.csv)")
    sp.add_argument("--schema", type=Path, help="use this schema JSON instead of inferring one")
    sp.add_argument("--split", type=float, help="training fraction (default 0.8)")
    sp.add_argument("--mode", choices=MODES)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--batch-size", type=int)
    sp.add_argument("--lr", type=float)
    sp.add_argument("--latent-dim", type=int)
    sp.add_argument("--hidden-dim", type=int)
    sp.add_argument("--lambda-kl", type=float)
    sp.add_argument("--lambda-reg", type=float)
    sp.add_argument("--loss-factor", type=float)
    sp.add_argument("--precision", choices=("float32", "float64"))
    sp.add_argument("--no-figures", dest="figures", action="store_const", const=False)

    sp = sub.add_parser("sample", help="draw synthetic rows from a checkpoint")
    common(sp)
    sp.add_argument("--checkpoint", type=Path, required=True)
    sp.add_argument("--out", type=Path, required=True)
    sp.add_argument("--rows", type=int, help="number of rows (default 1000)")
    sp.add_argument("--condition", help='JSON object, e.g. \'{"C2": "level_3"}\'')
    sp.add_argument("--stochastic", action="store_const", const=True,
                    help="sample categorical levels instead of taking the nearest/most likely")

    sp = sub.add_parser("evaluate", help="score a synthetic CSV against held-out rows")
    common(sp)
    sp.add_argument("--synthetic", type=Path, required=True)
    sp.add_argument("--checkpoint", type=Path, help="use its recorded test split and schema")
    sp.add_argument("--data", type=Path, help="the CSV the checkpoint was fitted on")
    sp.add_argument("--test", type=Path, help="explicit test CSV instead of the recorded split")
    sp.add_argument("--report", type=Path, required=True, help="full report JSON")
    sp.add_argument("--summary", type=Path, required=True, help="one-row aggregate CSV")
    sp.add_argument("--no-figures", dest="figures", action="store_const", const=False)
    return p


def load_config(path: Path | None) -> dict:
    if path is None:
        return {}
    try:
        cfg = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise UsageError(f"cannot read config {path}: {e}") from e
    if not isinstance(cfg, dict):
        raise UsageError("config file must hold a JSON object")
    return cfg


def resolve(args: argparse.Namespace, cfg: dict, key: str, default=None):
    val = getattr(args, key, None)
    if val is not None:
        return val
    if key in cfg:
        return cfg[key]
    return DEFAULTS.get(key, default)


def check_config_keys(cfg: dict, args: argparse.Namespace) -> None:
    allowed = set(vars(args)) | TRAIN_FIELDS | set(DEFAULTS)
    unknown = sorted(set(cfg) - allowed)
    if unknown:
        raise UsageError(f"unknown config keys: {unknown}")


def train_config(args, cfg: dict) -> TrainConfig:
    values = {k: v for k, v in cfg.items() if k in TRAIN_FIELDS}
    for k in TRAIN_FLAGS:
        if getattr(args, k, None) is not None:
            values[k] = getattr(args, k)
    values["seed"] = resolve(args, cfg, "seed")
    try:
        return TrainConfig.from_dict(values)
    except (TypeError, ValueError) as e:
        raise UsageError(str(e)) from e


def file_sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _require_file(path: Path, what: str) -> None:
    if not Path(path).is_file():
        raise DataError(f"{what} not found: {path}")


def _require_parent(path: Path) -> None:
    parent = Path(path).resolve().parent
    if not parent.is_dir():
        raise DataError(f"output directory does not exist: {parent}")


def _atomic_write(path: Path, write) -> None:
    """Write via a temporary sibling so a failure never leaves a partial file."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.resolve().parent, prefix=f".{path.name}.")
    os.close(fd)
    try:
        write(tmp)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


# ---- commands ----------------------------------------------------------


def cmd_simulate(args, cfg) -> int:
    with stage("config"):
        rows = resolve(args, cfg, "rows", 100_000)
        try:
            spec = SimSpec(int(rows), int(resolve(args, cfg, "seed")))
        except ValueError as e:
            raise UsageError(str(e)) from e
        _require_parent(args.out)
    with stage("simulate"):
        _atomic_write(args.out, lambda tmp: write_simulated(tmp, spec))
    print(f"wrote {spec.n_rows} rows to {args.out}")
    return EXIT_OK


def cmd_fit(args, cfg) -> int:
    with stage("config"):
        config = train_config(args, cfg)
        fraction = float(resolve(args, cfg, "split"))
        if not 0 < fraction < 1:
            raise UsageError("--split must lie strictly between 0 and 1")
        log_path = args.log or args.checkpoint.with_name(args.checkpoint.name + ".log.csv")
        _require_file(args.data, "data file")
        for out in (args.checkpoint, log_path):
            _require_parent(out)
        if args.schema is not None:
            _require_file(args.schema, "schema file")

    with stage("ingest"):
        table = read_csv(args.data)
        schema = Schema.load(args.schema) if args.schema else infer_schema(table)
        table = drop_missing_numeric(table, schema)
        train_idx, test_idx = split_indices(len(table), fraction, config.seed)
        train_table = table.take(train_idx)
        # moments always come from the training rows unless a schema pins them
        if args.schema is None or not schema.has_moments:
            schema = schema.with_moments(train_table)
        if config.mode == "conditional":
            schema = conditional_prepare(schema)
        data = encode(schema, train_table)

    with stage("train"):
        root = nn.Rng(config.seed)
        model = init_model(schema, config, root.child(1))
        print(f"trainable parameters ({config.mode}): {model.parameter_count()}")
        history = train(model, data, config, root.child(2))

    with stage("write"):
        extra = {"data_sha256": file_sha256(args.data), "n_rows": len(table),
                 "split": fraction, "test_indices": [int(i) for i in test_idx]}
        _atomic_write(args.checkpoint, lambda tmp: model.save(tmp, extra))
        _atomic_write(log_path, history.write_csv)
        if resolve(args, cfg, "figures") and history.rows:
            from .report import loss_curves
            loss_curves(history, log_path.with_name(log_path.stem + "_loss.png"))
    print(f"wrote checkpoint {args.checkpoint} and log {log_path}")
    return EXIT_OK


def parse_condition(text) -> dict:
    if text is None:
        return {}
    if isinstance(text, dict):
        cond = text
    else:
        try:
            cond = json.loads(text)
        except json.JSONDecodeError as e:
            raise UsageError(f"--condition is not valid JSON: {e}") from e
    if not isinstance(cond, dict) or not all(isinstance(v, str) for v in cond.values()):
        raise UsageError("--condition must be a JSON object of feature -> level strings")
    return cond


def cmd_sample(args, cfg) -> int:
    with stage("config"):
        rows = int(resolve(args, cfg, "rows", 1000))
        if rows < 1:
            raise UsageError("--rows must be >= 1")
        condition = parse_condition(resolve(args, cfg, "condition"))
        _require_file(args.checkpoint, "checkpoint")
        _require_parent(args.out)
    with stage("load"):
        model, _ = CardiCat.load(args.checkpoint)
    with stage("sample"):
        table = generate(model, rows, seed=int(resolve(args, cfg, "seed")), condition=condition,
                         stochastic=bool(resolve(args, cfg, "stochastic")))
    with stage("write"):
        _atomic_write(args.out, lambda tmp: write_csv(tmp, table))
    print(f"wrote {rows} rows to {args.out}")
    return EXIT_OK


def _test_rows(args, schema: Schema, extra: dict):
    if args.test is not None:
        return drop_missing_numeric(read_csv(args.test), schema)
    if args.data is None:
        raise UsageError("evaluate needs --test, or --checkpoint together with --data")
    if "test_indices" not in extra:
        raise DataError("checkpoint carries no recorded test split")
    if file_sha256(args.data) != extra.get("data_sha256"):
        raise DataError(f"{args.data} is not the file the checkpoint was fitted on")
    table = drop_missing_numeric(read_csv(args.data), schema)
    if len(table) != extra["n_rows"]:
        raise DataError("row count differs from the fitting run")
    return table.take(extra["test_indices"])


def cmd_evaluate(args, cfg) -> int:
    with stage("config"):
        if args.checkpoint is None and args.test is None:
            raise UsageError("evaluate needs --test or --checkpoint")
        _require_file(args.synthetic, "synthetic file")
        for p in (args.checkpoint, args.data, args.test):
            if p is not None:
                _require_file(p, "input file")
        for out in (args.report, args.summary):
            _require_parent(out)

    with stage("ingest"):
        if args.checkpoint is not None:
            model, extra = CardiCat.load(args.checkpoint)
            schema = output_schema(model)
            test = _test_rows(args, schema, extra)
        else:
            test = read_csv(args.test)
            schema = infer_schema(test)
            test = drop_missing_numeric(test, schema)
        real = encode(schema, test)
        synth = encode(schema, drop_missing_numeric(read_csv(args.synthetic), schema))

    with stage("evaluate"):
        report = evaluate(schema, real, synth)
        if resolve(args, cfg, "figures"):
            from .report import write_evaluation_figures
            write_evaluation_figures(report, args.summary.with_suffix(""))

    with stage("write"):
        _atomic_write(args.report, report.write_json)
        _atomic_write(args.summary, report.write_summary_csv)
    agg = report.aggregates
    print(", ".join(f"{k}={'n/a' if v is None else f'{v:.4f}'}" for k, v in agg.items()))
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "sample": cmd_sample,
            "evaluate": cmd_evaluate}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        with stage("config"):
            cfg = load_config(args.config)
            check_config_keys(cfg, args)
        return COMMANDS[args.command](args, cfg)
    except StageError as e:
        code = exit_code(e.err)
        if e.stage == "config" and isinstance(e.err, (ValueError, KeyError)):
            code = EXIT_USAGE
        print(f"cardicat {args.command}: {e.stage} failed: {e.err}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
