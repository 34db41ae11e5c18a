"""Configuration-research loop with strict observation gating.

Each step: assemble a gated observation payload, ask a pluggable proposal
source for a new operator configuration, validate it, smoke-test it, run
the full benchmark, and record keep/discard/crash. All state (experiment
TSV, protocol notes, best configuration) persists on disk, so the loop is
resumable after a process restart.

The edit surface is the OperatorConfig schema alone: the proposal cannot
reach the crossover, polish, or generator settings. The observation payload
carries per-function results, the recent experiment history, and the
visible landscape descriptors; component positions, depths, widths,
rotation matrices, cross-function aggregate statistics, and variance-
structure summaries never enter it.
"""
from __future__ import annotations

import json
import math
import re
import subprocess
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .engine import EAConfig
from .errors import InvalidSpecError, ProposerUnavailableError
from .harness import SuiteConfig, run_suite
from .jsonio import csv_lines, dumps
from .polish import PolishVariant

TAG_PATTERN = re.compile(r"^[a-z][a-z0-9_]*$")
HISTORY_WINDOW = 20
TSV_HEADER = ["tag", "total_wins", "hard_wins", "status", "description"]


@dataclass
class OperatorConfig:
    """The loop's entire edit surface: mutation-side knobs only."""

    scout_fraction: float = 0.20
    cma_fraction: float = 0.10
    p_min: float = 0.11
    stagnation_window: int = 50
    f_memory_init: float = 0.5
    cr_memory_init: float = 0.5

    def violations(self) -> list:
        errs = []
        if not 0 <= self.scout_fraction <= 1:
            errs.append("scout_fraction out of range [0, 1]")
        if not 0 <= self.cma_fraction <= 1:
            errs.append("cma_fraction out of range [0, 1]")
        if self.scout_fraction + self.cma_fraction >= 1:
            errs.append("scout_fraction + cma_fraction must be < 1")
        if not 0 < self.p_min <= 1:
            errs.append("p_min out of range (0, 1]")
        if not isinstance(self.stagnation_window, int) or self.stagnation_window < 1:
            errs.append("stagnation_window must be an integer >= 1")
        if not 0 < self.f_memory_init <= 1:
            errs.append("f_memory_init out of range (0, 1]")
        if not 0 <= self.cr_memory_init <= 1:
            errs.append("cr_memory_init out of range [0, 1]")
        return errs

    def apply_to(self, base: EAConfig) -> EAConfig:
        return replace(
            base,
            scout_fraction=self.scout_fraction,
            cma_fraction=self.cma_fraction,
            p_min=self.p_min,
            stagnation_window=self.stagnation_window,
            f_memory_init=self.f_memory_init,
            cr_memory_init=self.cr_memory_init,
        )


@dataclass
class ProposalEnvelope:
    analysis: str
    strategy: str
    experiment_tag: str
    config: OperatorConfig


def parse_envelope(raw) -> tuple[ProposalEnvelope | None, list]:
    """Parse a raw proposal (JSON text or dict). Returns (envelope, errors);
    a malformed envelope is rejected whole."""
    if isinstance(raw, (str, bytes)):
        try:
            doc = json.loads(raw)
        except json.JSONDecodeError as exc:
            return None, [f"not valid JSON: {exc}"]
    else:
        doc = raw
    if not isinstance(doc, dict):
        return None, ["proposal must be a JSON object"]
    errs = []
    for key in ("analysis", "strategy", "experiment_tag", "config"):
        if key not in doc:
            errs.append(f"missing field '{key}'")
    if errs:
        return None, errs
    if not isinstance(doc["config"], dict):
        return None, ["'config' must be an object"]
    known = set(OperatorConfig.__dataclass_fields__)
    unknown = set(doc["config"]) - known
    if unknown:
        return None, [f"config field outside the edit surface: {sorted(unknown)}"]
    try:
        config = OperatorConfig(**{k: doc["config"][k] for k in doc["config"]})
    except TypeError as exc:
        return None, [f"bad config: {exc}"]
    env = ProposalEnvelope(
        analysis=str(doc["analysis"]),
        strategy=str(doc["strategy"]),
        experiment_tag=str(doc["experiment_tag"]),
        config=config,
    )
    return env, []


def validate_proposal(env: ProposalEnvelope) -> list:
    """Violation list; empty means acceptable. Never raises."""
    errs = []
    if not TAG_PATTERN.match(env.experiment_tag):
        errs.append("experiment_tag is not snake_case")
    if not env.analysis.strip():
        errs.append("analysis is empty")
    if not env.strategy.strip():
        errs.append("strategy is empty")
    errs.extend(env.config.violations())
    return errs


@dataclass
class ExperimentLogEntry:
    tag: str
    total_wins: int
    hard_wins: int
    status: str  # keep | discard | crash
    description: str

    def tsv_row(self) -> list:
        return [self.tag, self.total_wins, self.hard_wins, self.status,
                self.description.replace("\t", " ").replace("\n", " ")]


@dataclass
class ObservationPayload:
    """What a proposal source is allowed to see."""

    config: dict
    results_csv: str
    history: list
    landscape: list

    def to_json(self) -> str:
        return dumps({
            "config": self.config,
            "results_csv": self.results_csv,
            "history": [asdict(e) for e in self.history],
            "landscape": self.landscape,
        })


class LoopState:
    """Persistent loop state rooted at a directory.

    experiments.tsv is append-only; state.json snapshots the kept lineage
    (best config, best win counts, last kept per-function results).
    """

    def __init__(self, state_dir, suite: SuiteConfig, base_dir: Path | None = None):
        self.dir = Path(state_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.suite = suite
        self.base_dir = base_dir
        self.tsv_path = self.dir / "experiments.tsv"
        self.protocol_path = self.dir / "protocol.md"
        self.state_path = self.dir / "state.json"
        self.entries: list = []
        self.best_config = OperatorConfig()
        self.best_wins = -1
        self.best_results: list = []  # rows {function_id, wins, mean_gap, std_gap}
        self.hard_subset: list = []
        self.landscape: list = []
        if self.state_path.exists():
            self._load()

    def _load(self) -> None:
        doc = json.loads(self.state_path.read_text(encoding="utf-8"))
        self.best_config = OperatorConfig(**doc["best_config"])
        self.best_wins = int(doc["best_wins"])
        self.best_results = doc["best_results"]
        self.hard_subset = [int(x) for x in doc["hard_subset"]]
        self.landscape = doc["landscape"]
        self.entries = []
        if self.tsv_path.exists():
            for line in self.tsv_path.read_text(encoding="utf-8").splitlines():
                tag, tw, hw, status, desc = line.split("\t", 4)
                self.entries.append(ExperimentLogEntry(tag, int(tw), int(hw), status, desc))

    def persist(self) -> None:
        doc = {
            "best_config": asdict(self.best_config),
            "best_wins": self.best_wins,
            "best_results": self.best_results,
            "hard_subset": self.hard_subset,
            "landscape": self.landscape,
        }
        self.state_path.write_text(dumps(doc) + "\n", encoding="utf-8")

    def append_entry(self, entry: ExperimentLogEntry, strategy_note: str) -> None:
        # headerless: exactly one tab-separated line per experiment
        with open(self.tsv_path, "a", encoding="utf-8") as fh:
            fh.write("\t".join(str(v) for v in entry.tsv_row()) + "\n")
        with open(self.protocol_path, "a", encoding="utf-8") as fh:
            fh.write(f"## {entry.tag} - {entry.status}\n\n{strategy_note}\n\n")
        self.entries.append(entry)
        self.persist()

    def initialized(self) -> bool:
        return self.best_wins >= 0


def _results_rows(reports) -> list:
    return [
        {"function_id": r.function_id, "wins": r.wins,
         "mean_gap": r.mean_gap, "std_gap": r.std_gap}
        for r in reports
    ]


def _results_csv(rows: list) -> str:
    return csv_lines(
        ["function_id", "wins", "mean_gap", "std_gap"],
        [[r["function_id"], r["wins"], r["mean_gap"], r["std_gap"]] for r in rows],
    )


def _landscape_rows(suite: SuiteConfig, base_dir) -> list:
    from .generator import descriptor_view

    rows = []
    for fn in sorted(suite.functions, key=lambda f: f.id):
        view = descriptor_view(fn.load(base_dir))
        rows.append({
            "function_id": fn.id,
            "lambda_all": view.lambda_all.tolist(),
            "omega_all": view.omega_all.tolist(),
            "rotation_flag": view.rotation_flag,
            "lb": view.lb,
            "ub": view.ub,
        })
    return rows


def benchmark_config(state: LoopState, config: OperatorConfig):
    """Full benchmark of one operator configuration on the loop's suite."""
    suite = replace(state.suite, ea=config.apply_to(state.suite.ea))
    report, _ = run_suite(suite, PolishVariant.COMPLIANT_B, state.base_dir)
    total = report.total_wins
    hard = sum(r.wins for r in report.functions if r.function_id in state.hard_subset)
    return total, hard, _results_rows(report.functions)


def initialize_state(state: LoopState) -> None:
    """Baseline benchmark of the current configuration; fills the hard subset
    (functions with zero wins) and the first results snapshot."""
    if state.initialized():
        return
    state.landscape = _landscape_rows(state.suite, state.base_dir)
    total, _, rows = benchmark_config(state, state.best_config)
    state.best_wins = total
    state.best_results = rows
    state.hard_subset = [r["function_id"] for r in rows if r["wins"] == 0]
    state.persist()


def assemble_observation(state: LoopState) -> ObservationPayload:
    """Gated payload: config, per-function results CSV, last-20 history,
    visible landscape descriptors. Nothing withheld enters it."""
    if not state.initialized():
        raise InvalidSpecError("no benchmark result exists yet; initialize the loop first")
    return ObservationPayload(
        config=asdict(state.best_config),
        results_csv=_results_csv(state.best_results),
        history=state.entries[-HISTORY_WINDOW:],
        landscape=state.landscape,
    )


def smoke_test(state: LoopState, config: OperatorConfig,
               n_functions: int = 3, n_seeds: int = 2,
               budget_fraction: float = 0.01) -> tuple[bool, str]:
    """Reduced benchmark: first functions, few seeds, ~1% budget. Passes iff
    nothing crashes and every run yields a finite gap."""
    funcs = sorted(state.suite.functions, key=lambda f: f.id)[:n_functions]
    seeds = list(state.suite.seeds)[:n_seeds]
    base_budget = state.suite.budget_override
    ea = config.apply_to(state.suite.ea)
    min_budget = int(math.ceil(ea.n_init / state.suite.ea_share)) + ea.n_init
    smoke = replace(
        state.suite,
        functions=funcs,
        seeds=tuple(seeds),
        budget_override=max(
            min_budget,
            int((base_budget or 500_000) * budget_fraction),
        ),
        ea=ea,
        workers=1,
    )
    try:
        _, records = run_suite(smoke, PolishVariant.COMPLIANT_B, state.base_dir)
    except Exception as exc:  # any engine fault is a smoke failure, not a loop fault
        return False, f"crash: {type(exc).__name__}: {exc}"
    if any(not np.isfinite(r.final_gap) for r in records):
        return False, "non-finite gap in smoke run"
    return True, "ok"


class ProposerCrash:
    """Sentinel returned by adapters when the external source failed."""

    def __init__(self, reason: str):
        self.reason = reason


def loop_step(state: LoopState, proposer) -> ExperimentLogEntry:
    """One full iteration. Proposer failures (timeout, bad JSON, nonzero
    exit) and smoke failures record a crash; otherwise the proposal is
    benchmarked and kept only on a strict win-count improvement."""
    initialize_state(state)
    payload = assemble_observation(state)
    raw = proposer(payload)  # ProposerUnavailableError propagates, state unchanged

    if isinstance(raw, ProposerCrash):
        entry = ExperimentLogEntry("proposer_crash", 0, 0, "crash", raw.reason)
        state.append_entry(entry, raw.reason)
        return entry

    env, errors = parse_envelope(raw)
    if env is None or (errors := validate_proposal(env)):
        tag = env.experiment_tag if env else "invalid_proposal"
        desc = "; ".join(errors)
        entry = ExperimentLogEntry(tag, 0, 0, "crash", f"rejected: {desc}")
        state.append_entry(entry, f"rejected: {desc}")
        return entry

    ok, reason = smoke_test(state, env.config)
    if not ok:
        entry = ExperimentLogEntry(env.experiment_tag, 0, 0, "crash", reason)
        state.append_entry(entry, reason)
        return entry

    total, hard, rows = benchmark_config(state, env.config)
    if total > state.best_wins:
        status = "keep"
        state.best_config = env.config
        state.best_wins = total
        state.best_results = rows
    else:
        status = "discard"
    entry = ExperimentLogEntry(env.experiment_tag, total, hard, status,
                               env.strategy.strip().splitlines()[0])
    state.append_entry(entry, env.strategy.strip())
    return entry


def scripted_proposer(items: list):
    """Serve proposals from a fixed list (dicts or raw JSON strings). An
    exhausted list raises ProposerUnavailableError."""
    queue = list(items)

    def propose(payload: ObservationPayload):
        if not queue:
            raise ProposerUnavailableError("scripted proposal list exhausted")
        return queue.pop(0)

    return propose


def external_proposer(command: str, timeout: float = 300.0):
    """Run a subprocess per proposal: the observation payload goes to stdin
    as JSON, exactly one JSON envelope is expected on stdout (no preamble)."""

    def propose(payload: ObservationPayload):
        try:
            proc = subprocess.run(
                command, shell=True, input=payload.to_json(),
                capture_output=True, text=True, timeout=timeout,
            )
        except subprocess.TimeoutExpired:
            return ProposerCrash(f"proposer timed out after {timeout:.0f}s")
        if proc.returncode != 0:
            return ProposerCrash(f"proposer exited with code {proc.returncode}")
        return proc.stdout.strip()

    return propose


def run_loop(state: LoopState, proposer, max_iters: int) -> list:
    """Drive loop_step until max_iters or the proposer runs dry."""
    entries = []
    for _ in range(max_iters):
        try:
            entries.append(loop_step(state, proposer))
        except ProposerUnavailableError:
            break
    return entries
