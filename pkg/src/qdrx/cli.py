"""Command-line front end: run experiments, emit CSV/JSON result tables.

Exit codes: 0 success, 2 usage error, 3 I/O failure, 4 numeric failure.
Output files are written atomically (temp file + rename) so interrupted
runs never leave truncated tables behind.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, QdrxError, SingularChannelError, SpecValidationError
from .experiments import (
    ExperimentSpec,
    MetricRecord,
    calibrate_sigma_q,
    compare_theory,
    run_experiment,
)

__all__ = ["CliConfig", "parse_args", "run", "main", "entry",
           "CSV_HEADER", "records_to_csv", "records_to_json"]

CSV_HEADER = ["experiment", "nt", "k", "t", "l", "snr_db", "modulation",
              "method", "metric", "value", "stderr", "trials", "seed"]

_SUBCOMMANDS = ("mse-sweep", "ser-sweep", "sigma-q", "lemma1", "compare-theory")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that raises instead of exiting, so exit codes stay ours."""

    def error(self, message):
        raise UsageError(message)


@dataclass(frozen=True)
class CliConfig:
    subcommand: str
    spec: ExperimentSpec | None
    out_path: str
    fmt: str
    samples: int = 0
    mode: str = "data"
    in_path: str | None = None
    sigma_q_sq: float | None = None
    snr_db: float = 10.0
    nt: int = 4
    seed: int = 1


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(",") if v != "")
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v != "")
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _build_parser() -> _Parser:
    parser = _Parser(prog="qdrx", description=__doc__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add_common(p, trials_default=10000):
        p.add_argument("--config", type=str, default=None,
                       help="flat key=value file; explicit flags override it")
        p.add_argument("--nt", type=int, default=4)
        p.add_argument("--trials", type=int, default=trials_default)
        p.add_argument("--seed", type=int, default=1)
        p.add_argument("--workers", type=int, default=os.cpu_count() or 1)
        p.add_argument("--out", type=str, default="-",
                       help="output path, or - for standard output")
        p.add_argument("--format", dest="fmt", choices=("csv", "json"), default="csv")

    p = sub.add_parser("mse-sweep", help="normalized channel-estimate MSE vs T")
    add_common(p)
    p.add_argument("--t-list", type=_int_list, required=True)
    p.add_argument("--snr-db", type=_float_list, default=(10.0,))
    p.add_argument("--estimator", choices=("ml", "zf", "both"), default="both")

    p = sub.add_parser("ser-sweep", help="ZF-receiver SER vs SNR")
    add_common(p)
    p.add_argument("--k", type=int, default=32)
    p.add_argument("--m", type=int, default=8)
    p.add_argument("--t-list", type=_int_list, default=None)
    p.add_argument("--t", type=int, default=None, help="shorthand for a single-entry --t-list")
    p.add_argument("--l", type=int, default=None,
                   help="coherence block length; default 2*max(T)+256")
    p.add_argument("--snr-db", type=_float_list, default=(0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0))
    p.add_argument("--estimator", choices=("ml", "zf", "perfect"), default="zf")

    p = sub.add_parser("sigma-q", help="calibrate the quantization-noise variance")
    add_common(p)
    p.add_argument("--snr-db", type=float, default=10.0)
    p.add_argument("--samples", type=int, default=1000000)
    p.add_argument("--mode", choices=("data", "train"), default="data")

    p = sub.add_parser("lemma1", help="relaxed-ML convergence vs number of nodes")
    add_common(p, trials_default=500)
    p.add_argument("--k-list", type=_int_list, required=True)
    p.add_argument("--m", type=int, default=4)
    p.add_argument("--snr-db", type=_float_list, default=(10.0,))

    p = sub.add_parser("compare-theory", help="overlay 1/T theory on a ZF mse-sweep CSV")
    p.add_argument("--in", dest="in_path", type=str, required=True)
    p.add_argument("--sigma-q-sq", type=float, required=True)
    p.add_argument("--out", type=str, default="-")
    p.add_argument("--format", dest="fmt", choices=("csv", "json"), default="csv")
    return parser


def _apply_config_file(argv: list[str]) -> list[str]:
    """Expand --config <path> into flags placed before the explicit ones."""
    if "--config" not in argv:
        return argv
    i = argv.index("--config")
    if i + 1 >= len(argv):
        raise UsageError("--config requires a path")
    path = argv[i + 1]
    rest = argv[:i] + argv[i + 2:]
    try:
        with open(path, encoding="utf-8") as fh:
            lines = [ln.strip() for ln in fh if ln.strip() and not ln.strip().startswith("#")]
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    tokens: list[str] = []
    for ln in lines:
        if "=" not in ln:
            raise UsageError(f"config line {ln!r} is not key=value")
        key, val = ln.split("=", 1)
        tokens += [f"--{key.strip()}", val.strip()]
    # subcommand first, then config-file flags, then explicit flags (override)
    return rest[:1] + tokens + rest[1:]


def parse_args(argv: list[str]) -> CliConfig:
    """Validate argv into a CliConfig; raises UsageError on any bad flag."""
    parser = _build_parser()
    argv = _apply_config_file(list(argv))
    ns = parser.parse_args(argv)

    sc = ns.subcommand
    if sc == "compare-theory":
        return CliConfig(subcommand=sc, spec=None, out_path=ns.out, fmt=ns.fmt,
                         in_path=ns.in_path, sigma_q_sq=ns.sigma_q_sq)
    if sc == "sigma-q":
        if ns.samples < 10 ** 4:
            raise UsageError(f"--samples must be >= 10000, got {ns.samples}")
        return CliConfig(subcommand=sc, spec=None, out_path=ns.out, fmt=ns.fmt,
                         samples=ns.samples, mode=ns.mode, snr_db=ns.snr_db,
                         nt=ns.nt, seed=ns.seed)

    kind = {"mse-sweep": "mse_sweep", "ser-sweep": "ser_sweep",
            "lemma1": "lemma1_convergence"}[sc]
    t_list = getattr(ns, "t_list", None) or ()
    if sc == "ser-sweep":
        if ns.t is not None:
            t_list = t_list + (ns.t,)
        if not t_list:
            raise UsageError("ser-sweep needs --t or --t-list")
    spec = ExperimentSpec(
        kind=kind, nt=ns.nt, k=getattr(ns, "k", 1), m=getattr(ns, "m", 8),
        l=getattr(ns, "l", None), t_list=tuple(t_list),
        snr_db_list=tuple(ns.snr_db), k_list=tuple(getattr(ns, "k_list", ()) or ()),
        trials=ns.trials, seed=ns.seed, receiver="zf",
        estimator=getattr(ns, "estimator", "both"), workers=ns.workers)
    try:
        spec.validate()
    except SpecValidationError as exc:
        raise UsageError(str(exc)) from exc
    return CliConfig(subcommand=sc, spec=spec, out_path=ns.out, fmt=ns.fmt,
                     nt=ns.nt, seed=ns.seed)


def _fmt_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.9g}"
    return str(v)


def _record_row(rec: MetricRecord) -> list[str]:
    return [_fmt_value(v) for v in (
        rec.experiment, rec.nt, rec.k, rec.t, rec.l, rec.snr_db, rec.modulation,
        rec.method, rec.metric, rec.value, rec.stderr, rec.trials_used, rec.seed)]


def records_to_csv(records: list[MetricRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for rec in records:
        writer.writerow(_record_row(rec))
    return buf.getvalue()


def records_to_json(records: list[MetricRecord]) -> str:
    rows = []
    for rec in records:
        vals = [rec.experiment, rec.nt, rec.k, rec.t, rec.l, rec.snr_db,
                rec.modulation, rec.method, rec.metric, rec.value, rec.stderr,
                rec.trials_used, rec.seed]
        vals = [None if isinstance(v, float) and math.isnan(v) else v for v in vals]
        rows.append(dict(zip(CSV_HEADER, vals)))
    return json.dumps(rows, indent=2) + "\n"


def _read_records_csv(path: str) -> list[MetricRecord]:
    with open(path, encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_HEADER:
            raise UsageError(f"{path} does not carry the expected CSV header")
        out = []
        for row in reader:
            def num(key, cast):
                return cast(row[key]) if row[key] != "" else None
            out.append(MetricRecord(
                experiment=row["experiment"], nt=int(row["nt"]), k=num("k", int),
                t=num("t", int), l=num("l", int), snr_db=num("snr_db", float),
                modulation=num("modulation", int), method=row["method"],
                metric=row["metric"], value=float(row["value"]),
                stderr=float(row["stderr"]), trials_used=int(row["trials"]),
                seed=int(row["seed"])))
    return out


def _write_atomic(path: str, text: str) -> None:
    if path == "-":
        sys.stdout.write(text)
        return
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".qdrx-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _summarize(records: list[MetricRecord]) -> None:
    for rec in records:
        coords = " ".join(
            f"{name}={_fmt_value(getattr(rec, attr))}"
            for name, attr in (("nt", "nt"), ("k", "k"), ("t", "t"),
                               ("snr_db", "snr_db"), ("method", "method"))
            if getattr(rec, attr) is not None)
        print(f"{rec.experiment} {coords} {rec.metric}={_fmt_value(rec.value)}"
              f" stderr={_fmt_value(rec.stderr)} n={rec.trials_used}")


def run(config: CliConfig) -> int:
    """Execute a validated config; returns the process exit code."""
    try:
        if config.subcommand == "compare-theory":
            records = compare_theory(_read_records_csv(config.in_path),
                                     config.sigma_q_sq)
        elif config.subcommand == "sigma-q":
            rho = 10.0 ** (config.snr_db / 10.0)
            records = [calibrate_sigma_q(config.nt, rho, config.samples,
                                         config.seed, config.mode)]
        else:
            records = run_experiment(config.spec)
    except UsageError:
        raise
    except (SpecValidationError,) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (CapacityError, SingularChannelError, ArithmeticError,
            np.linalg.LinAlgError, QdrxError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 4

    text = records_to_csv(records) if config.fmt == "csv" else records_to_json(records)
    try:
        _write_atomic(config.out_path, text)
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    if config.out_path != "-":
        _summarize(records)
    return 0


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        config = parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    try:
        return run(config)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main())
