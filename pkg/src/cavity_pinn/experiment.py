"""Experiment runner: reference fields, datasets, replicate training and the metrics table."""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from cavity_pinn.cavity_solver import FlowField, SolverConfig, sample_to_grid, solve_cavity
from cavity_pinn.config import ExperimentConfig
from cavity_pinn.dataset import (
    CollocationSet,
    Dataset,
    add_noise,
    dataset_to_field,
    field_to_dataset,
    make_collocation_set,
    make_training_set,
    read_csv,
    subsample,
    write_csv,
)
from cavity_pinn.network import init_xavier
from cavity_pinn.report import MetricRow, summarize, write_metrics, write_summary
from cavity_pinn.training.evaluation import VARIABLES, evaluate_test_mse
from cavity_pinn.training.strategies import TransferContext, run_strategy, make_strategy
from cavity_pinn.training.trainer import DivergenceError, StageConfig, StopRule, save_result, train, write_log

log = logging.getLogger(__name__)


class MissingFieldsError(FileNotFoundError):
    def __init__(self, missing: list[float], cfg: ExperimentConfig, fields_dir: Path):
        cmds = "\n".join(
            f"  cavity-pinn solve --re {re:g} --n {cfg.solver_n} --lid {cfg.lid} --tol {cfg.solver_tol!r} --out {fields_dir.parent}"
            for re in missing
        )
        super().__init__(f"missing reference fields for Re = {', '.join(f'{r:g}' for r in missing)}; run:\n{cmds}")
        self.missing = missing


# -- reference fields ------------------------------------------------------------


def field_path(fields_dir, re: float, n: int, lid: str) -> Path:
    return Path(fields_dir) / f"field_re{re:g}_n{n}_{lid}.csv"


def save_field(path, f: FlowField) -> None:
    ds = field_to_dataset(f)
    if f.history:
        ds.provenance.update(iterations=len(f.history), residual=f"{f.history[-1]:.3e}")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    write_csv(path, ds)


def load_field(path) -> FlowField:
    return dataset_to_field(read_csv(path))


def solve_field(cfg: ExperimentConfig, re: float) -> FlowField:
    return solve_cavity(SolverConfig(n=cfg.solver_n, re=re, lid=cfg.lid_profile, tol=cfg.solver_tol))


def ensure_fields(cfg: ExperimentConfig, fields_dir, auto_solve: bool = True) -> dict[float, FlowField]:
    """Load cached reference fields, solving (and caching) missing ones when allowed."""
    fields_dir = Path(fields_dir)
    out, missing = {}, []
    for re in cfg.solver_res():
        path = field_path(fields_dir, re, cfg.solver_n, cfg.lid)
        if path.is_file():
            out[re] = load_field(path)
        elif auto_solve:
            log.info("solving Re=%g on %d x %d", re, cfg.solver_n, cfg.solver_n)
            f = solve_field(cfg, re)
            save_field(path, f)
            # reload so fresh and cached runs see the same bytes
            out[re] = load_field(path)
        else:
            missing.append(re)
    if missing:
        raise MissingFieldsError(missing, cfg, fields_dir)
    return out


# -- datasets --------------------------------------------------------------------


@dataclass
class CaseData:
    train: Dataset
    test: dict[float, FlowField]
    colloc: CollocationSet
    fields: dict[float, FlowField]


def build_case_data(cfg: ExperimentConfig, fields: dict[float, FlowField]) -> CaseData:
    train_set = make_training_set([(re, fields[re]) for re in cfg.re_train], cfg.train_grid)
    if cfg.subsample < 1:
        train_set = subsample(train_set, cfg.subsample, cfg.seed)
    if cfg.noise > 0:
        train_set = add_noise(train_set, cfg.noise, cfg.seed + 1)
    train_set.provenance["lid"] = cfg.lid
    test = {re: sample_to_grid(fields[re], cfg.test_grid) for re in cfg.re_test}
    phys = list(cfg.re_physics) + [r for r in cfg.re_new if r not in cfg.re_physics]
    colloc = make_collocation_set(phys, cfg.interior_m, cfg.boundary_m, cfg.lid_profile)
    return CaseData(train_set, test, colloc, {re: fields[re] for re in cfg.re_train})


# -- replicate jobs ----------------------------------------------------------------


@dataclass
class ReplicateOutcome:
    replicate: int
    rows: list[MetricRow] = field(default_factory=list)
    finished: int = 0
    failed: int = 0


def _slug(label: str) -> str:
    return label.replace("=", "_").replace("[", "_").replace("]", "").replace("|", "_")


def _rows(label, stage, replicate, mse, epochs, reason, re_list) -> list[MetricRow]:
    rows = []
    for re in re_list:
        for var in VARIABLES:
            value = None if mse is None else mse[(float(re), var)]
            rows.append(MetricRow(label, stage, float(re), var, replicate, value, epochs, reason))
    return rows


def _stop(cfg: ExperimentConfig) -> StopRule:
    return StopRule(cfg.max_epochs, cfg.loss_threshold)


def _run_lambda_replicate(cfg: ExperimentConfig, data: CaseData, replicate: int, run_dir: Path) -> ReplicateOutcome:
    spec = cfg.network_spec()
    seed = cfg.seed + replicate
    out = ReplicateOutcome(replicate)
    for lam in cfg.lambdas:
        label = f"lambda={lam:g}"
        stage = StageConfig(
            spec=spec,
            init=init_xavier(spec, seed),
            data=data.train,
            colloc=data.colloc,
            lam=lam,
            stop=_stop(cfg),
            mode=cfg.physics_mode,
            lr=cfg.lr,
            track_physics=cfg.track_physics,
        )
        name = f"{_slug(label)}_rep{replicate}"
        try:
            result = train(stage)
        except DivergenceError as exc:
            log.warning("%s replicate %d diverged at epoch %d", label, replicate, exc.epoch)
            write_log(run_dir / f"{name}_log.csv", exc.log)
            out.rows += _rows(label, 1, replicate, None, exc.epoch, "diverged", cfg.re_test)
            out.failed += 1
            continue
        save_result(run_dir, name, result, spec)
        mse = evaluate_test_mse(result.params, spec, data.test)
        out.rows += _rows(label, 1, replicate, mse, result.epochs, result.stop_reason, cfg.re_test)
        out.finished += 1
    return out


def _run_transfer_replicate(cfg: ExperimentConfig, data: CaseData, replicate: int, run_dir: Path) -> ReplicateOutcome:
    spec = cfg.network_spec()
    seed = cfg.seed + replicate
    ctx = TransferContext(
        fields=data.fields,
        spec=spec,
        train_grid=cfg.train_grid,
        interior_m=cfg.interior_m,
        boundary_m=cfg.boundary_m,
        lid=cfg.lid_profile,
        lr=cfg.lr,
        mode=cfg.physics_mode,
        track_physics=cfg.track_physics,
    )
    out = ReplicateOutcome(replicate)
    cache: dict = {}
    for x in cfg.re_new:
        for name in cfg.strategies:
            strategy = make_strategy(name, x, cfg.re_train, _stop(cfg), lam=cfg.lambdas[0])
            label = f"{name}[X={x:g}]"
            final_step = strategy.stages[-1].step
            try:
                run = run_strategy(strategy, ctx, seed, cache)
            except DivergenceError as exc:
                log.warning("%s replicate %d diverged at epoch %d", label, replicate, exc.epoch)
                out.rows += _rows(label, final_step, replicate, None, exc.epoch, "diverged", cfg.re_test)
                out.failed += 1
                continue
            for st in run.stages:
                save_result(run_dir, f"{_slug(label)}_rep{replicate}_step{st.stage.step}", st.result, spec)
            res = run.final.result
            mse = evaluate_test_mse(res.params, spec, data.test)
            out.rows += _rows(label, final_step, replicate, mse, res.epochs, res.stop_reason, cfg.re_test)
            out.finished += 1
    return out


def _run_replicate(args) -> ReplicateOutcome:
    cfg, data, replicate, run_dir = args
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    if cfg.case == "transfer":
        return _run_transfer_replicate(cfg, data, replicate, run_dir)
    return _run_lambda_replicate(cfg, data, replicate, run_dir)


# -- whole experiment ----------------------------------------------------------------


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    rows: list[MetricRow]
    out_dir: Path
    finished: int
    failed: int

    @property
    def metrics_path(self) -> Path:
        return self.out_dir / "metrics.csv"

    def select(self, strategy: Optional[str] = None, re: Optional[float] = None, variable: Optional[str] = None):
        return [
            r
            for r in self.rows
            if (strategy is None or r.strategy == strategy)
            and (re is None or r.re == re)
            and (variable is None or r.variable == variable)
        ]


def run_experiment(cfg: ExperimentConfig, out_dir, fields: Optional[dict] = None) -> ExperimentReport:
    """Run every (group, replicate) of a case and write config, metrics, summary, logs and checkpoints.

    ``fields`` may supply already-solved reference fields keyed by Re; anything
    else is loaded from or solved into ``out_dir/fields``.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg.write(out_dir / "config.resolved")
    if fields is None or any(re not in fields for re in cfg.solver_res()):
        fields = ensure_fields(cfg, out_dir / "fields", auto_solve=True)
    data = build_case_data(cfg, fields)
    run_dir = out_dir / "runs"
    jobs = [(cfg, data, r, run_dir) for r in range(cfg.replicates)]
    if cfg.threads > 1 and cfg.replicates > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.threads, cfg.replicates)) as pool:
            outcomes = list(pool.map(_run_replicate, jobs))
    else:
        outcomes = [_run_replicate(job) for job in jobs]
    rows = _merge(outcomes)
    write_metrics(out_dir / "metrics.csv", rows)
    if rows:
        write_summary(out_dir / "summary.csv", summarize(rows))
    return ExperimentReport(
        cfg, rows, out_dir, sum(o.finished for o in outcomes), sum(o.failed for o in outcomes)
    )


def _merge(outcomes: list[ReplicateOutcome]) -> list[MetricRow]:
    order: dict[str, int] = {}
    for o in sorted(outcomes, key=lambda o: o.replicate):
        for row in o.rows:
            order.setdefault(row.strategy, len(order))
    rows = [row for o in outcomes for row in o.rows]
    var_index = {v: i for i, v in enumerate(VARIABLES)}
    return sorted(rows, key=lambda r: (order[r.strategy], r.stage, r.re, r.replicate, var_index[r.variable]))
