"""Command-line front end.

Exit status: 0 success, 1 usage or configuration error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from cavity_pinn.cavity_solver import MAX_RE, NonConvergenceError, SolverConfig, solve_cavity
from cavity_pinn.config import ConfigError, ExperimentConfig, load_config
from cavity_pinn.dataset import (
    DatasetError,
    dataset_to_field,
    field_to_dataset,
    read_collocation,
    read_csv,
    write_collocation,
    write_csv,
)
from cavity_pinn.experiment import (
    MissingFieldsError,
    build_case_data,
    ensure_fields,
    field_path,
    run_experiment,
    save_field,
)
from cavity_pinn.network import init_xavier
from cavity_pinn.physics import LidProfile
from cavity_pinn.report import MetricRow, ReportError, report, write_metrics
from cavity_pinn.training.evaluation import VARIABLES, evaluate_test_mse
from cavity_pinn.training.trainer import DivergenceError, StageConfig, StopRule, save_result, train

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2

log = logging.getLogger("cavity_pinn")


class UsageError(Exception):
    pass


def _positive_re(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0 < value <= MAX_RE:
        raise argparse.ArgumentTypeError(f"Reynolds number must lie in (0, {MAX_RE:g}], got {text}")
    return value


def _global_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", type=Path, help="experiment config file (key = value)")
    p.add_argument("--out", type=Path, default=None, help="output directory (default: ./out)")
    p.add_argument("--seed", type=int, default=None, help="override the base seed")
    p.add_argument("--threads", type=int, default=None, help="worker processes across replicates")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags()
    parser = argparse.ArgumentParser(prog="cavity-pinn", description="Lid-driven cavity PINN experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", parents=[common], help="solve the cavity and write a field CSV")
    s.add_argument("--re", type=_positive_re, required=True)
    s.add_argument("--n", type=int, default=257)
    s.add_argument("--lid", choices=[p.value for p in LidProfile], default="regularized")
    s.add_argument("--tol", type=float, default=1e-8)

    sub.add_parser("generate", parents=[common], help="build train/test/collocation CSVs for a case")

    t = sub.add_parser("train", parents=[common], help="train one stage on generated data")
    t.add_argument("--lam", type=float, default=None, help="physics weight (default: last configured lambda)")

    sub.add_parser("experiment", parents=[common], help="run a full case with replicates")

    r = sub.add_parser("report", parents=[common], help="summary statistics of a metrics CSV")
    r.add_argument("--in", dest="inp", type=Path, required=True)
    return parser


def _out(args) -> Path:
    return args.out if args.out is not None else Path("out")


def _config(args) -> ExperimentConfig:
    if args.config is None:
        raise UsageError(f"{args.command} needs --config")
    return load_config(args.config, seed=args.seed, threads=args.threads)


def cmd_solve(args) -> int:
    if args.n < 17:
        raise UsageError("--n must be >= 17")
    lid = LidProfile.parse(args.lid)
    out = field_path(_out(args) / "fields", args.re, args.n, lid.value)
    try:
        f = solve_cavity(SolverConfig(n=args.n, re=args.re, lid=lid, tol=args.tol))
    except NonConvergenceError as exc:
        hist = out.with_name(out.stem + "_history.txt")
        hist.parent.mkdir(parents=True, exist_ok=True)
        hist.write_text("".join(f"{r:.6e}\n" for r in exc.history))
        print(f"error: {exc}; residual history written to {hist}", file=sys.stderr)
        return EXIT_NUMERIC
    save_field(out, f)
    final = f.history[-1] if f.history else float("nan")
    print(f"wrote {out} ({args.n * args.n} rows); Newton iterations {len(f.history)}, final residual {final:.3e}")
    return EXIT_OK


def _data_dir(args) -> Path:
    return _out(args) / "data"


def cmd_generate(args) -> int:
    cfg = _config(args)
    out = _out(args)
    fields = ensure_fields(cfg, out / "fields", auto_solve=False)
    data = build_case_data(cfg, fields)
    d = _data_dir(args)
    d.mkdir(parents=True, exist_ok=True)
    cfg.write(d / "config.resolved")
    write_csv(d / "train.csv", data.train)
    for re, f in data.test.items():
        ds = field_to_dataset(f)
        ds.provenance.update(source_grid=cfg.solver_n)
        write_csv(d / f"test_re{re:g}.csv", ds)
    write_collocation(
        d / "colloc",
        data.colloc,
        {"interior_m": cfg.interior_m, "boundary_m": cfg.boundary_m, "lid": cfg.lid},
    )
    print(f"wrote datasets for case {cfg.case} to {d}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args)
    d = _data_dir(args)
    if not (d / "train.csv").is_file():
        raise UsageError(f"no generated data in {d}; run 'cavity-pinn generate --config {args.config} --out {_out(args)}' first")
    train_set = read_csv(d / "train.csv")
    colloc = read_collocation(d / "colloc")
    test = {re: dataset_to_field(read_csv(d / f"test_re{re:g}.csv")) for re in cfg.re_test}
    lam = cfg.lambdas[-1] if args.lam is None else args.lam
    spec = cfg.network_spec()
    stage = StageConfig(
        spec=spec,
        init=init_xavier(spec, cfg.seed),
        data=train_set,
        colloc=colloc,
        lam=lam,
        stop=StopRule(cfg.max_epochs, cfg.loss_threshold),
        mode=cfg.physics_mode,
        lr=cfg.lr,
        track_physics=cfg.track_physics,
    )
    out = _out(args) / "train"
    try:
        result = train(stage)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    name = f"lambda_{lam:g}_seed{cfg.seed}"
    save_result(out, name, result, spec)
    mse = evaluate_test_mse(result.params, spec, test)
    rows = [
        MetricRow(f"lambda={lam:g}", 1, re, var, 0, mse[(re, var)], result.epochs, result.stop_reason)
        for re in sorted(test)
        for var in VARIABLES
    ]
    write_metrics(out / f"{name}_metrics.csv", rows)
    print(f"{result.stop_reason} after {result.epochs} epochs, final loss {result.final_loss:.4e}; wrote {out}")
    return EXIT_OK


def cmd_experiment(args) -> int:
    cfg = _config(args)
    rep = run_experiment(cfg, _out(args))
    print(f"{rep.finished} runs finished, {rep.failed} diverged; metrics in {rep.metrics_path}")
    if rep.finished == 0:
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_report(args) -> int:
    out = args.out if args.out is not None else args.inp.with_name("summary.csv")
    if out.is_dir():
        out = out / "summary.csv"
    triples = report(args.inp, out)
    print(f"wrote {len(triples)} statistics to {out}")
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "generate": cmd_generate,
    "train": cmd_train,
    "experiment": cmd_experiment,
    "report": cmd_report,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError, MissingFieldsError, ReportError, DatasetError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NonConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
