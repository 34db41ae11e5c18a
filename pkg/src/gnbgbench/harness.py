"""Suite orchestration: budgets, seeded runs, win counting, failure
signatures, and report emission.

A run is a pure function of (instance bytes, seed, config): the EA phase
receives floor(ea_share * budget) evaluations, the polish phase receives
everything left. Suites execute seeds 0..30 per function (configurable),
optionally in parallel across runs, and fold results in (function_id, seed)
order so parallel and serial execution emit identical reports.
"""
from __future__ import annotations

import os
import subprocess
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .crossover import CrossoverConfig, make_crossover_fn
from .engine import EAConfig, run_ea
from .errors import InvalidSpecError
from .generator import (
    EvalCounter,
    InstanceSpec,
    ProblemInstance,
    evaluate,
    load_instance,
    make_instance,
)
from .jsonio import csv_lines, dumps
from .polish import LocalOptConfig, PolishVariant, run_polish

N_COMPETITION_FUNCTIONS = 24
SMALL_BUDGET = 500_000
LARGE_BUDGET = 1_000_000
LARGE_BUDGET_FROM_ID = 16
DEFAULT_WIN_THRESHOLD = 1e-8
DEFAULT_EA_SHARE = 0.95
DEFAULT_SEEDS = tuple(range(31))


class FailureLabel(str, Enum):
    MACHINE_PRECISION = "machine_precision"
    NEAR_COMPLETE = "near_complete"
    PARTIAL = "partial"
    TIGHT_NEAR_MISS = "tight_near_miss"
    DETERMINISTIC_NEAR_MISS = "deterministic_near_miss"
    HIGH_VARIANCE_BASIN_SEARCH = "high_variance_basin_search"


@dataclass
class RunRecord:
    function_id: int
    seed: int
    final_gap: float
    win: bool
    evals_used: int
    ea_gap: float
    wall_ms: float
    non_compliant: bool


@dataclass
class FunctionReport:
    function_id: int
    wins: int
    mean_gap: float
    std_gap: float
    label: FailureLabel


@dataclass
class SuiteReport:
    functions: list
    total_wins: int
    total_runs: int
    config: dict
    version: dict


def budget_for(function_id: int, override: int | None = None,
               n_functions: int = N_COMPETITION_FUNCTIONS) -> int:
    """Per-run evaluation budget by function id; an override applies to all."""
    if not 1 <= function_id <= n_functions:
        raise InvalidSpecError(f"function id {function_id} out of range 1..{n_functions}")
    if override is not None:
        return int(override)
    return SMALL_BUDGET if function_id < LARGE_BUDGET_FROM_ID else LARGE_BUDGET


def classify_failure(
    wins: int,
    mean_gap: float,
    std_gap: float,
    n_runs: int = 31,
    deterministic_std: float = 1e-9,
    tight_cv: float = 0.1,
) -> FailureLabel:
    """Label a function's gap signature from its win count and gap moments.
    Variance-based labels are only meaningful with stats over >= 2 runs."""
    if n_runs < 1:
        raise InvalidSpecError("classification needs stats over at least 1 run")
    if wins >= n_runs:
        return FailureLabel.MACHINE_PRECISION
    if wins >= n_runs - 1:
        return FailureLabel.NEAR_COMPLETE
    if wins >= 1:
        return FailureLabel.PARTIAL
    if std_gap < deterministic_std:
        return FailureLabel.DETERMINISTIC_NEAR_MISS
    if mean_gap > 0 and std_gap / mean_gap < tight_cv:
        return FailureLabel.TIGHT_NEAR_MISS
    return FailureLabel.HIGH_VARIANCE_BASIN_SEARCH


def aggregate_wins(reports: list) -> int:
    return sum(r.wins for r in reports)


def run_one(
    inst: ProblemInstance,
    function_id: int,
    seed: int,
    budget: int,
    variant: PolishVariant = PolishVariant.COMPLIANT_B,
    *,
    ea_share: float = DEFAULT_EA_SHARE,
    win_threshold: float = DEFAULT_WIN_THRESHOLD,
    ea_cfg: EAConfig | None = None,
    crossover_cfg: CrossoverConfig | None = None,
    polish_cfg: LocalOptConfig | None = None,
) -> RunRecord:
    """One seeded two-phase run. Deterministic in (inst, seed, config)."""
    variant = PolishVariant(variant)
    t0 = time.perf_counter()
    counter = EvalCounter(budget)
    rng = np.random.default_rng(seed)
    crossover_fn = make_crossover_fn(crossover_cfg or CrossoverConfig())

    ea_budget = int(ea_share * budget + 1e-6)  # floor, guarded against float dust
    ea_res = run_ea(
        inst, ea_budget, rng=rng, counter=counter,
        ea_cfg=ea_cfg, crossover_fn=crossover_fn,
    )
    ea_gap = abs(ea_res.best_f - inst.optimum_value)

    seed_points = None
    if variant is PolishVariant.LEAKY_A:
        seed_points = [c.m.copy() for c in inst.components]

    def objective(x):
        return evaluate(inst, x, counter)

    pol = run_polish(
        objective, inst.lb, inst.ub, ea_res.best_x, ea_res.best_f,
        counter, rng, variant, polish_cfg, seed_points,
    )
    final_gap = abs(pol.best_f - inst.optimum_value)
    return RunRecord(
        function_id=function_id,
        seed=seed,
        final_gap=final_gap,
        win=final_gap < win_threshold,
        evals_used=counter.used,
        ea_gap=ea_gap,
        wall_ms=(time.perf_counter() - t0) * 1e3,
        non_compliant=variant is PolishVariant.LEAKY_A,
    )


@dataclass
class SuiteFunction:
    id: int
    instance_path: str | None = None
    generate: dict | None = None

    def load(self, base_dir: Path | None = None) -> ProblemInstance:
        if self.instance_path is not None:
            path = Path(self.instance_path)
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            if not path.exists():
                raise InvalidSpecError(f"missing instance file for f{self.id}: {path}")
            return load_instance(path)
        if self.generate is not None:
            g = dict(self.generate)
            gen_seed = g.pop("seed", self.id)
            return make_instance(InstanceSpec.from_dict(g), gen_seed)
        raise InvalidSpecError(f"function {self.id} has neither instance_path nor generate spec")


@dataclass
class SuiteConfig:
    functions: list
    seeds: tuple = DEFAULT_SEEDS
    budget_override: int | None = None
    ea_share: float = DEFAULT_EA_SHARE
    win_threshold: float = DEFAULT_WIN_THRESHOLD
    ea: EAConfig = field(default_factory=EAConfig)
    crossover: CrossoverConfig = field(default_factory=CrossoverConfig)
    polish: LocalOptConfig = field(default_factory=LocalOptConfig)
    workers: int = 1

    @classmethod
    def from_dict(cls, d: dict) -> "SuiteConfig":
        functions = [
            SuiteFunction(
                id=int(f["id"]),
                instance_path=f.get("instance_path"),
                generate=f.get("generate"),
            )
            for f in d["functions"]
        ]
        cfg = cls(functions=functions)
        if "seeds" in d:
            cfg.seeds = tuple(int(s) for s in d["seeds"])
        if d.get("budget_override") is not None:
            cfg.budget_override = int(d["budget_override"])
        cfg.ea_share = float(d.get("ea_share", DEFAULT_EA_SHARE))
        cfg.win_threshold = float(d.get("win_threshold", DEFAULT_WIN_THRESHOLD))
        if "ea" in d:
            cfg.ea = replace(EAConfig(), **d["ea"])
        if "crossover" in d:
            xd = dict(d["crossover"])
            for key in ("low_bracket", "high_bracket"):
                if key in xd:
                    xd[key] = tuple(xd[key])
            cfg.crossover = replace(CrossoverConfig(), **xd)
        if "polish" in d:
            cfg.polish = replace(LocalOptConfig(), **d["polish"])
        cfg.workers = int(d.get("workers", 1))
        return cfg

    def echo(self) -> dict:
        return {
            "functions": [
                {"id": f.id, "instance_path": f.instance_path, "generate": f.generate}
                for f in self.functions
            ],
            "seeds": list(self.seeds),
            "budget_override": self.budget_override,
            "ea_share": self.ea_share,
            "win_threshold": self.win_threshold,
            "ea": self.ea.__dict__.copy(),
            "crossover": {
                "low_bracket": list(self.crossover.low_bracket),
                "high_bracket": list(self.crossover.high_bracket),
                "oscillation_period": self.crossover.oscillation_period,
                "oscillation_amplitude": self.crossover.oscillation_amplitude,
                "competitiveness_weight": self.crossover.competitiveness_weight,
            },
            "polish": self.polish.__dict__.copy(),
            "workers": self.workers,
        }


def _run_task(args) -> RunRecord:
    inst, fid, seed, budget, variant, ea_share, win_threshold, ea_cfg, x_cfg, p_cfg = args
    return run_one(
        inst, fid, seed, budget, variant,
        ea_share=ea_share, win_threshold=win_threshold,
        ea_cfg=ea_cfg, crossover_cfg=x_cfg, polish_cfg=p_cfg,
    )


def version_stamp() -> dict:
    from . import __version__

    git = "unknown"
    try:
        out = subprocess.run(
            ["git", "rev-parse", "--short", "HEAD"],
            capture_output=True, text=True, timeout=5,
        )
        if out.returncode == 0:
            git = out.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    return {"package": __version__, "git": git}


def run_suite(
    config: SuiteConfig,
    variant: PolishVariant = PolishVariant.COMPLIANT_B,
    base_dir: Path | None = None,
) -> tuple[SuiteReport, list]:
    """Execute the whole suite; returns (report, run records) with records
    ordered by (function_id, seed) regardless of execution order."""
    variant = PolishVariant(variant)
    tasks = []
    for fn in sorted(config.functions, key=lambda f: f.id):
        inst = fn.load(base_dir)
        budget = budget_for(fn.id, config.budget_override)
        for seed in config.seeds:
            tasks.append((inst, fn.id, seed, budget, variant, config.ea_share,
                          config.win_threshold, config.ea, config.crossover, config.polish))

    if config.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            records = list(pool.map(_run_task, tasks, chunksize=1))
    else:
        records = [_run_task(t) for t in tasks]
    records.sort(key=lambda r: (r.function_id, r.seed))

    reports = []
    for fid in sorted({r.function_id for r in records}):
        group = [r for r in records if r.function_id == fid]
        gaps = np.array([r.final_gap for r in group])
        wins = sum(1 for r in group if r.win)
        mean_gap = float(gaps.mean())
        std_gap = float(gaps.std())
        reports.append(FunctionReport(
            function_id=fid,
            wins=wins,
            mean_gap=mean_gap,
            std_gap=std_gap,
            label=classify_failure(wins, mean_gap, std_gap, n_runs=len(group)),
        ))

    report = SuiteReport(
        functions=reports,
        total_wins=aggregate_wins(reports),
        total_runs=len(records),
        config=config.echo(),
        version=version_stamp(),
    )
    return report, records


RUNS_CSV_HEADER = ["function_id", "seed", "final_gap", "win", "evals_used", "ea_gap",
                   "non_compliant"]
SUMMARY_CSV_HEADER = ["function_id", "wins", "mean_gap", "std_gap", "label"]


def runs_csv(records: list) -> str:
    # wall_ms deliberately excluded: rows must be byte-identical across reruns
    rows = [[r.function_id, r.seed, r.final_gap, r.win, r.evals_used, r.ea_gap,
             r.non_compliant] for r in records]
    return csv_lines(RUNS_CSV_HEADER, rows)


def summary_csv(reports: list) -> str:
    rows = [[r.function_id, r.wins, r.mean_gap, r.std_gap, r.label.value] for r in reports]
    return csv_lines(SUMMARY_CSV_HEADER, rows)


def report_json(report: SuiteReport) -> str:
    doc = {
        "format_version": 1,
        "total_wins": report.total_wins,
        "total_runs": report.total_runs,
        "functions": [
            {
                "function_id": r.function_id,
                "wins": r.wins,
                "mean_gap": r.mean_gap,
                "std_gap": r.std_gap,
                "label": r.label.value,
            }
            for r in report.functions
        ],
        "config": report.config,
        "version": report.version,
    }
    return dumps(doc) + "\n"


def write_suite_outputs(out_dir, report: SuiteReport, records: list) -> dict:
    """Write runs.csv, summary.csv, report.json under out_dir; returns paths."""
    out = Path(out_dir)
    os.makedirs(out, exist_ok=True)
    paths = {
        "runs_csv": out / "runs.csv",
        "summary_csv": out / "summary.csv",
        "report_json": out / "report.json",
    }
    paths["runs_csv"].write_text(runs_csv(records), encoding="utf-8")
    paths["summary_csv"].write_text(summary_csv(report.functions), encoding="utf-8")
    paths["report_json"].write_text(report_json(report), encoding="utf-8")
    return paths
