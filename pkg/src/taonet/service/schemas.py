"""Request and response models for the HTTP service."""

from __future__ import annotations

from pydantic import BaseModel, Field

from ..config import RunConfig


class HealthResponse(BaseModel):
    status: str
    version: str


class ConfigRequest(BaseModel):
    config: RunConfig = Field(default_factory=RunConfig)


class ConfigResponse(BaseModel):
    config: dict
    provenance: dict
    config_hash: str
    template_hashes: dict


class SyntheticRequest(BaseModel):
    out_path: str
    spec: dict | None = None        # inline spec wins over spec_path
    spec_path: str | None = None    # defaults to the packaged spec
    n_per_class: int = 500
    seed: int = 42


class SyntheticResponse(BaseModel):
    path: str
    n_samples: int
    split_counts: dict[str, int]
    id_labels: list[str]
    ood_labels: list[str]


class PcapRequest(BaseModel):
    pcap_path: str
    out_path: str
    j: int = 128
    label: str | None = None
    split: str = "test"
    limit: int | None = None


class PcapResponse(BaseModel):
    path: str
    n_records: int
    n_samples: int


class TrainRequest(BaseModel):
    config: RunConfig


class TrainResponse(BaseModel):
    run_dir: str
    classifier_checkpoint: str
    detector_checkpoint: str
    id_labels: list[str]
    extractor_final_loss: float | None
    classifier_final_loss: float | None
    timings: dict[str, float]


class CalibrateRequest(BaseModel):
    config: RunConfig
    run_dir: str | None = None  # defaults to the config's run directory


class CalibrateResponse(BaseModel):
    run_dir: str
    k: int
    gamma: float
    alpha: float
    delta: float
    residual_bounds: list[float]
    smoothness_bounds: list[float]
    timings: dict[str, float]


class PredictionModel(BaseModel):
    id: str
    route: str
    label: str
    scores: dict | None = None
    distribution: dict[str, float] | None = None
    raw_text: str | None = None


class ClassifyRequest(BaseModel):
    config: RunConfig
    run_dir: str | None = None
    split: str = "test"
    sample_id: str | None = None  # classify one sample instead of a split


class ClassifyResponse(BaseModel):
    predictions_path: str | None = None
    n_predictions: int
    predictions: list[PredictionModel] | None = None


class MetricsModel(BaseModel):
    macro_precision: float
    macro_f1: float
    micro_f1: float
    recall: float


class RunReport(BaseModel):
    seed: int
    run_dir: str
    metrics: MetricsModel
    auroc: float | None
    files: dict[str, str]
    timings: dict[str, float]


class EvaluateRequest(BaseModel):
    config: RunConfig
    runs: int = 1


class EvaluateResponse(BaseModel):
    reports: list[RunReport]
    aggregate: dict[str, dict[str, float]] | None = None  # metric -> mean/std


class AblateRequest(BaseModel):
    config: RunConfig


class AblateResponse(BaseModel):
    run_dir: str
    comparison_path: str
    reports: dict[str, RunReport]


class SpsCompareRequest(BaseModel):
    config: RunConfig


class SpsCompareResponse(BaseModel):
    run_dir: str
    comparison_path: str
    reports: dict[str, RunReport]


class AurocRequest(BaseModel):
    config: RunConfig
    run_dir: str | None = None
    split: str = "valid"


class AurocResponse(BaseModel):
    auroc: float
    split: str
    n_id: int
    n_ood: int


class ErrorResponse(BaseModel):
    error: str
    detail: str
    stage: str | None = None
