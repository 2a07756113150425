"""Pydantic request/response models for the experiment service."""

from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    version: str


class RunRequest(BaseModel):
    config_text: Optional[str] = Field(
        default=None, description="Config file body (key=value lines)")
    preset: Optional[str] = Field(
        default=None, description="Preset name(s), comma separated")
    overrides: dict[str, str] = Field(
        default_factory=dict, description="Flat config keys applied last")


class RunCreated(BaseModel):
    run_id: str
    run_dir: str


class SeedSummary(BaseModel):
    seed: int
    final_return: float
    final_success_rate: float
    final_std: float
    auc_return: float
    env_steps: int
    episodes: int
    train_steps: int


class RunStatus(BaseModel):
    run_id: str
    state: str                      # queued | running | finished | failed
    detail: str = ""
    seeds_done: int = 0
    total_seeds: int = 0
    env_steps: int = 0
    total_env_steps: int = 0
    latest_eval_return: Optional[float] = None
    seed_results: list[SeedSummary] = Field(default_factory=list)
    mean_final_return: Optional[float] = None
    std_final_return: Optional[float] = None


class EvalRequest(BaseModel):
    checkpoint: str
    episodes: int = 32
    config_text: Optional[str] = None
    preset: Optional[str] = None
    overrides: dict[str, str] = Field(default_factory=dict)
    seed: int = 0
    trace_path: Optional[str] = None


class EvalResponse(BaseModel):
    mean_return: float
    success_rate: float
    std_return: float
    mean_length: float
    n_episodes: int


class DiagnoseRequest(BaseModel):
    checkpoint: str
    episodes: int = 50
    out_path: Optional[str] = None
    config_text: Optional[str] = None
    preset: Optional[str] = None
    overrides: dict[str, str] = Field(default_factory=dict)
    seed: int = 0


class DiagnoseResponse(BaseModel):
    alignment_score: float
    csv_path: str
    episodes: int
    rows: int


class GradCheckRequest(BaseModel):
    tolerance: float = 1e-3
    seed: int = 0


class NetworkGradReport(BaseModel):
    network: str
    max_rel_error: float
    passed: bool


class GradCheckResponse(BaseModel):
    passed: bool
    tolerance: float
    reports: list[NetworkGradReport]
