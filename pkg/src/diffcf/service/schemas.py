"""Pydantic request/response models for the workbench API."""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field

SCHEMA_VERSION = 1

RunStatus = Literal["queued", "running", "succeeded", "failed", "rejected"]


class AttackSection(BaseModel):
    method: Literal["pgd", "gd", "cw"] | None = None
    num_iterations: int | None = Field(default=None, ge=0)
    step_size: float | None = Field(default=None, gt=0)
    lambda_d: float | None = Field(default=None, ge=0)
    distance_norm: Literal["l1", "l2"] | None = None
    tau: int | None = Field(default=None, ge=0)
    respaced_steps: int | None = Field(default=None, ge=1)
    distance_anchor: Literal["iterate", "filtered"] | None = None


class RefineSection(BaseModel):
    mask_threshold: float | None = Field(default=None, ge=0.0, le=1.0)
    mask_dilation: int | None = Field(default=None, ge=1)
    respaced_steps: int | None = Field(default=None, ge=1)
    tau: int | None = Field(default=None, ge=0)
    apply_mask: bool | None = None


class SubmitRunRequest(BaseModel):
    schema_version: int = SCHEMA_VERSION
    dataset_id: str
    split: str = "eval"
    index: int = 0
    classifier_id: str
    denoiser_id: str
    target_label: int
    seed: int = 0
    attack: AttackSection = AttackSection()
    refine: RefineSection = RefineSection()
    diversity_k: int | None = Field(default=None, ge=2, description="fan out k seeded variants")


class RunProgress(BaseModel):
    iteration: int
    total_iterations: int
    objective: float | None = None


class RunResult(BaseModel):
    source_label: int
    target_label: int
    probs_input: list[float]
    probs_counterfactual: list[float]
    flipped: bool
    mask_coverage: float
    diversity: float | None = None


class RunRecordModel(BaseModel):
    schema_version: int = SCHEMA_VERSION
    id: str
    status: RunStatus
    request: SubmitRunRequest
    created_at: float
    started_at: float | None = None
    finished_at: float | None = None
    progress: RunProgress | None = None
    result: RunResult | None = None
    artifacts: list[str] = []
    error: str | None = None


class SubmitRunResponse(BaseModel):
    schema_version: int = SCHEMA_VERSION
    id: str
    status: RunStatus


class RunListResponse(BaseModel):
    schema_version: int = SCHEMA_VERSION
    runs: list[RunRecordModel]


class EvaluateBatchRequest(BaseModel):
    schema_version: int = SCHEMA_VERSION
    # either an explicit run list, or every succeeded run of a dataset split
    run_ids: list[str] = []
    dataset_id: str | None = None
    split: str | None = None
    classifier_id: str | None = None
    metrics: str = "all"
    cout_steps: int = Field(default=20, ge=1)
    sfid_splits: int = Field(default=10, ge=1)
    seed: int = 0


class BatchRecordModel(BaseModel):
    schema_version: int = SCHEMA_VERSION
    id: str
    status: Literal["queued", "running", "succeeded", "failed"]
    request: EvaluateBatchRequest
    report: dict | None = None
    error: str | None = None
    created_at: float
    finished_at: float | None = None

    @property
    def run_ids(self) -> list[str]:
        return self.request.run_ids


class ModelInfo(BaseModel):
    schema_version: int = SCHEMA_VERSION
    id: str
    kind: Literal["classifier", "denoiser", "encoder"]
    path: str
    geometry: dict
    num_classes: int | None = None
    accuracy: float | None = None
    num_steps: int | None = None


class RegisterModelRequest(BaseModel):
    schema_version: int = SCHEMA_VERSION
    path: str
    id: str | None = None


class DatasetInfo(BaseModel):
    schema_version: int = SCHEMA_VERSION
    id: str
    class_names: list[str]
    geometry: dict
    splits: dict[str, int]
    provenance: str


class InstanceInfo(BaseModel):
    index: int
    label: int
    label_name: str


class InstanceListResponse(BaseModel):
    schema_version: int = SCHEMA_VERSION
    dataset_id: str
    split: str
    total: int
    instances: list[InstanceInfo]


class KnobRange(BaseModel):
    min: float
    max: float
    default: float
    step: float


class Capabilities(BaseModel):
    schema_version: int = SCHEMA_VERSION
    methods: list[str]
    norms: list[str]
    anchors: list[str]
    knobs: dict[str, KnobRange]
    artifact_names: list[str]


class HealthResponse(BaseModel):
    schema_version: int = SCHEMA_VERSION
    status: str = "ok"
