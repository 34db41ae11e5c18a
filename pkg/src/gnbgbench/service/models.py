"""Pydantic request/response models for the workbench service."""
from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    version: str


class InstanceSpecModel(BaseModel):
    dim: int = 30
    components: int = 3
    lb: float = -100.0
    ub: float = 100.0
    sigma_range: tuple[float, float] = (-1000.0, -900.0)
    width_range: tuple[float, float] = (1.0, 10.0)
    lambda_range: tuple[float, float] = (0.25, 1.0)
    mu_range: tuple[float, float] = (0.0, 0.3)
    omega_range: tuple[float, float] = (0.0, 20.0)
    rotation: bool = False
    sigma_separation: float = 1.0
    position_margin: float = 0.05


class GenerateInstanceRequest(BaseModel):
    spec: InstanceSpecModel = Field(default_factory=InstanceSpecModel)
    seed: int = 0


class GenerateInstanceResponse(BaseModel):
    instance: dict
    instance_json: str  # exact file serialization (17 significant digits)


class DescriptorRequest(BaseModel):
    instance: Optional[dict] = None
    instance_path: Optional[str] = None


class DescriptorResponse(BaseModel):
    dim: int
    lb: float
    ub: float
    comp_num: int
    lambda_all: list[float]
    omega_all: list[list[float]]
    rotation_flag: int


class CreateSessionRequest(BaseModel):
    instance: Optional[dict] = None
    instance_path: Optional[str] = None
    budget: int = 500_000


class SessionInfo(BaseModel):
    session_id: str
    used: int
    cap: int


class EvaluatePointsRequest(BaseModel):
    points: list[list[float]]


class EvaluatePointsResponse(BaseModel):
    values: list[float]
    used: int
    remaining: int


class RunRequest(BaseModel):
    instance: Optional[dict] = None
    instance_path: Optional[str] = None
    function_id: int = 1
    seed: int = 0
    budget: Optional[int] = None
    variant: str = "compliant"
    ea_share: float = 0.95
    win_threshold: float = 1e-8
    ea: dict = Field(default_factory=dict)
    crossover: dict = Field(default_factory=dict)
    polish: dict = Field(default_factory=dict)


class RunRecordModel(BaseModel):
    function_id: int
    seed: int
    final_gap: float
    win: bool
    evals_used: int
    ea_gap: float
    wall_ms: float
    non_compliant: bool


class SuiteRequest(BaseModel):
    suite: dict
    variant: str = "compliant"
    base_dir: Optional[str] = None


class FunctionReportModel(BaseModel):
    function_id: int
    wins: int
    mean_gap: float
    std_gap: float
    label: str


class SuiteResponse(BaseModel):
    total_wins: int
    total_runs: int
    functions: list[FunctionReportModel]
    runs_csv: str
    summary_csv: str
    report_json: str


class ClassifyRow(BaseModel):
    function_id: int
    wins: int
    mean_gap: float
    std_gap: float


class ClassifyRequest(BaseModel):
    rows: list[ClassifyRow]
    n_runs: int = 31


class ClassifiedRow(BaseModel):
    function_id: int
    label: str


class ClassifyResponse(BaseModel):
    rows: list[ClassifiedRow]


class ProposerSpec(BaseModel):
    scripted: Optional[list] = None  # list of envelopes (dicts) or raw JSON strings
    command: Optional[str] = None
    timeout: float = 300.0


class LoopRequest(BaseModel):
    suite: dict
    state_dir: str
    proposer: ProposerSpec
    max_iters: int = 1
    base_dir: Optional[str] = None


class LoopEntryModel(BaseModel):
    tag: str
    total_wins: int
    hard_wins: int
    status: str
    description: str


class LoopResponse(BaseModel):
    entries: list[LoopEntryModel]
    best_wins: int


class ErrorResponse(BaseModel):
    detail: str
