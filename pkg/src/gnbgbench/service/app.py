"""FastAPI service wrapping the workbench core.

The service is the long-running face of the package: it generates and
serves benchmark instances, exposes budget-metered blackbox evaluation
sessions (the descriptor endpoint returns only the gated view), executes
seeded runs and whole suites, classifies gap signatures, and drives the
configuration-research loop. The CLI is a thin client of these endpoints.
"""
from __future__ import annotations

import threading
import uuid
from dataclasses import replace
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException

from .. import __version__
from ..autoloop import LoopState, external_proposer, run_loop, scripted_proposer
from ..engine import EAConfig
from ..crossover import CrossoverConfig
from ..errors import (
    BudgetExhaustedError,
    GateViolationError,
    InvalidSpecError,
    InvariantViolationError,
)
from ..generator import (
    EvalCounter,
    InstanceSpec,
    descriptor_view,
    evaluate_batch,
    instance_from_dict,
    instance_json,
    instance_to_dict,
    load_instance,
    make_instance,
)
from ..harness import (
    SuiteConfig,
    budget_for,
    classify_failure,
    report_json,
    run_one,
    run_suite,
    runs_csv,
    summary_csv,
)
from ..polish import LocalOptConfig, PolishVariant
from . import models

app = FastAPI(
    title="gnbgbench",
    description="Composition-function optimization workbench: certified instance "
    "generation, metered blackbox evaluation, seeded benchmark runs, and a gated "
    "configuration-research loop.",
    version=__version__,
)

_sessions: dict = {}
_sessions_lock = threading.Lock()


def _resolve_instance(inline: dict | None, path: str | None):
    if (inline is None) == (path is None):
        raise HTTPException(422, "provide exactly one of 'instance' or 'instance_path'")
    try:
        if inline is not None:
            return instance_from_dict(inline)
        return load_instance(path)
    except FileNotFoundError as exc:
        raise HTTPException(404, str(exc)) from exc
    except (InvalidSpecError, InvariantViolationError) as exc:
        raise HTTPException(422, str(exc)) from exc


@app.get("/health", response_model=models.HealthResponse)
def health():
    return models.HealthResponse(status="ok", version=__version__)


@app.post("/instances/generate", response_model=models.GenerateInstanceResponse)
def generate_instance(req: models.GenerateInstanceRequest):
    try:
        spec = InstanceSpec(**req.spec.model_dump())
        inst = make_instance(spec, req.seed)
    except InvalidSpecError as exc:
        raise HTTPException(422, str(exc)) from exc
    return models.GenerateInstanceResponse(
        instance=instance_to_dict(inst), instance_json=instance_json(inst)
    )


@app.post("/instances/descriptor", response_model=models.DescriptorResponse)
def instance_descriptor(req: models.DescriptorRequest):
    inst = _resolve_instance(req.instance, req.instance_path)
    view = descriptor_view(inst)
    return models.DescriptorResponse(**view.to_dict())


@app.post("/sessions", response_model=models.SessionInfo)
def create_session(req: models.CreateSessionRequest):
    inst = _resolve_instance(req.instance, req.instance_path)
    try:
        counter = EvalCounter(req.budget)
    except InvalidSpecError as exc:
        raise HTTPException(422, str(exc)) from exc
    sid = uuid.uuid4().hex
    with _sessions_lock:
        _sessions[sid] = (inst, counter)
    return models.SessionInfo(session_id=sid, used=0, cap=counter.cap)


def _get_session(sid: str):
    with _sessions_lock:
        if sid not in _sessions:
            raise HTTPException(404, "unknown session")
        return _sessions[sid]


@app.get("/sessions/{sid}", response_model=models.SessionInfo)
def session_info(sid: str):
    _, counter = _get_session(sid)
    return models.SessionInfo(session_id=sid, used=counter.used, cap=counter.cap)


@app.get("/sessions/{sid}/descriptor", response_model=models.DescriptorResponse)
def session_descriptor(sid: str):
    inst, _ = _get_session(sid)
    return models.DescriptorResponse(**descriptor_view(inst).to_dict())


@app.post("/sessions/{sid}/evaluate", response_model=models.EvaluatePointsResponse)
def session_evaluate(sid: str, req: models.EvaluatePointsRequest):
    inst, counter = _get_session(sid)
    X = np.asarray(req.points, dtype=float)
    if X.ndim != 2 or X.shape[1] != inst.dim:
        raise HTTPException(422, f"points must be an N x {inst.dim} array")
    try:
        values = evaluate_batch(inst, X, counter)
    except BudgetExhaustedError as exc:
        raise HTTPException(429, str(exc)) from exc
    return models.EvaluatePointsResponse(
        values=[float(v) for v in values], used=counter.used, remaining=counter.remaining
    )


@app.delete("/sessions/{sid}")
def close_session(sid: str):
    with _sessions_lock:
        _sessions.pop(sid, None)
    return {"closed": sid}


@app.post("/runs", response_model=models.RunRecordModel)
def run_endpoint(req: models.RunRequest):
    inst = _resolve_instance(req.instance, req.instance_path)
    try:
        budget = req.budget if req.budget is not None else budget_for(req.function_id)
        record = run_one(
            inst,
            req.function_id,
            req.seed,
            budget,
            PolishVariant(req.variant),
            ea_share=req.ea_share,
            win_threshold=req.win_threshold,
            ea_cfg=replace(EAConfig(), **req.ea),
            crossover_cfg=replace(CrossoverConfig(), **req.crossover),
            polish_cfg=replace(LocalOptConfig(), **req.polish),
        )
    except (InvalidSpecError, GateViolationError, ValueError) as exc:
        raise HTTPException(422, str(exc)) from exc
    return models.RunRecordModel(**record.__dict__)


@app.post("/suites", response_model=models.SuiteResponse)
def suite_endpoint(req: models.SuiteRequest):
    try:
        config = SuiteConfig.from_dict(req.suite)
        base = Path(req.base_dir) if req.base_dir else None
        report, records = run_suite(config, PolishVariant(req.variant), base)
    except (InvalidSpecError, GateViolationError, KeyError, ValueError) as exc:
        raise HTTPException(422, f"{type(exc).__name__}: {exc}") from exc
    return models.SuiteResponse(
        total_wins=report.total_wins,
        total_runs=report.total_runs,
        functions=[
            models.FunctionReportModel(
                function_id=r.function_id,
                wins=r.wins,
                mean_gap=r.mean_gap,
                std_gap=r.std_gap,
                label=r.label.value,
            )
            for r in report.functions
        ],
        runs_csv=runs_csv(records),
        summary_csv=summary_csv(report.functions),
        report_json=report_json(report),
    )


@app.post("/classify", response_model=models.ClassifyResponse)
def classify_endpoint(req: models.ClassifyRequest):
    rows = [
        models.ClassifiedRow(
            function_id=row.function_id,
            label=classify_failure(row.wins, row.mean_gap, row.std_gap, req.n_runs).value,
        )
        for row in req.rows
    ]
    return models.ClassifyResponse(rows=rows)


@app.post("/loop", response_model=models.LoopResponse)
def loop_endpoint(req: models.LoopRequest):
    spec = req.proposer
    if (spec.scripted is None) == (spec.command is None):
        raise HTTPException(422, "provide exactly one of proposer.scripted or proposer.command")
    proposer = (
        scripted_proposer(spec.scripted)
        if spec.scripted is not None
        else external_proposer(spec.command, spec.timeout)
    )
    try:
        suite = SuiteConfig.from_dict(req.suite)
        state = LoopState(req.state_dir, suite, Path(req.base_dir) if req.base_dir else None)
        entries = run_loop(state, proposer, req.max_iters)
    except (InvalidSpecError, KeyError, ValueError) as exc:
        raise HTTPException(422, f"{type(exc).__name__}: {exc}") from exc
    return models.LoopResponse(
        entries=[models.LoopEntryModel(**e.__dict__) for e in entries],
        best_wins=state.best_wins,
    )
