"""FastAPI service wrapping the experiment runner.

Training runs are long, so POST /runs only queues a job and returns its
id; a background thread executes the seeds and the job registry exposes
progress through GET /runs/{id}. Evaluation, diagnostics and the gradient
check are synchronous. Config errors surface as HTTP 400 with the
offending field in the message.
"""

from __future__ import annotations

import os
import threading
import uuid
from dataclasses import dataclass, field

from fastapi import FastAPI, HTTPException
from fastapi.responses import PlainTextResponse

from .. import __version__
from ..config import ConfigError, ExperimentConfig, resolve_config
from ..experiment import (
    ExperimentError,
    RunResult,
    diagnose_checkpoint,
    evaluate_checkpoint,
    run_experiment,
)
from ..verify import gradient_integrity_suite
from .schemas import (
    DiagnoseRequest,
    DiagnoseResponse,
    EvalRequest,
    EvalResponse,
    GradCheckRequest,
    GradCheckResponse,
    HealthResponse,
    NetworkGradReport,
    RunCreated,
    RunRequest,
    RunStatus,
    SeedSummary,
)


@dataclass
class Job:
    run_id: str
    config: ExperimentConfig
    state: str = "queued"
    detail: str = ""
    env_steps: int = 0
    latest_eval_return: float | None = None
    seeds_done: int = 0
    result: RunResult | None = None
    thread: threading.Thread | None = None
    lock: threading.Lock = field(default_factory=threading.Lock)


class JobRegistry:
    def __init__(self):
        self._jobs: dict[str, Job] = {}
        self._lock = threading.Lock()

    def create(self, config: ExperimentConfig) -> Job:
        run_id = config.run_id
        with self._lock:
            if run_id in self._jobs:
                run_id = f"{run_id}-{uuid.uuid4().hex[:8]}"
                config = _with_run_id(config, run_id)
            job = Job(run_id=run_id, config=config)
            self._jobs[run_id] = job
        return job

    def get(self, run_id: str) -> Job:
        with self._lock:
            if run_id not in self._jobs:
                raise KeyError(run_id)
            return self._jobs[run_id]

    def all(self) -> list[Job]:
        with self._lock:
            return list(self._jobs.values())


def _with_run_id(config: ExperimentConfig, run_id: str) -> ExperimentConfig:
    values = dict(config.values)
    values["run.id"] = run_id
    return ExperimentConfig(values=tuple(sorted(values.items())))


def _resolve_or_400(config_text, preset, overrides) -> ExperimentConfig:
    try:
        return resolve_config(file_text=config_text, preset=preset,
                              overrides=overrides)
    except ConfigError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc


def _job_status(job: Job) -> RunStatus:
    with job.lock:
        seeds = []
        mean = std = None
        if job.result is not None and job.result.seed_results:
            for s in job.result.seed_results:
                seeds.append(SeedSummary(
                    seed=s.seed, final_return=s.final_return,
                    final_success_rate=s.final_success_rate,
                    final_std=s.final_std, auc_return=s.auc_return,
                    env_steps=s.env_steps, episodes=s.episodes,
                    train_steps=s.train_steps,
                ))
            mean = job.result.mean_final_return
            std = job.result.std_final_return
        return RunStatus(
            run_id=job.run_id, state=job.state, detail=job.detail,
            seeds_done=job.seeds_done, total_seeds=len(job.config.seeds),
            env_steps=job.env_steps,
            total_env_steps=job.config.get("run.total_env_steps"),
            latest_eval_return=job.latest_eval_return,
            seed_results=seeds, mean_final_return=mean, std_final_return=std,
        )


def create_app() -> FastAPI:
    app = FastAPI(title="smaug experiment service", version=__version__)
    registry = JobRegistry()
    app.state.registry = registry

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse(status="ok", version=__version__)

    @app.post("/runs", response_model=RunCreated)
    def create_run(request: RunRequest):
        config = _resolve_or_400(request.config_text, request.preset,
                                 request.overrides)
        job = registry.create(config)

        def progress(info: dict):
            with job.lock:
                job.env_steps = info.get("env_steps", job.env_steps)
                if info.get("eval_return") is not None:
                    job.latest_eval_return = info["eval_return"]

        def work():
            with job.lock:
                job.state = "running"
            try:
                result = RunResult(run_dir=os.path.join(
                    job.config.out_dir, job.config.run_id))
                job.result = result

                def seed_progress(info: dict):
                    progress(info)

                from ..experiment import run_seed, atomic_write_text, _write_summary
                run_dir = result.run_dir
                os.makedirs(run_dir, exist_ok=True)
                atomic_write_text(os.path.join(run_dir, "config.txt"),
                                  job.config.serialize())
                for seed in job.config.seeds:
                    seed_dir = os.path.join(run_dir, f"seed{seed}")
                    seed_result = run_seed(job.config, seed, seed_dir,
                                           seed_progress)
                    with job.lock:
                        result.seed_results.append(seed_result)
                        job.seeds_done += 1
                _write_summary(run_dir, result)
                with job.lock:
                    job.state = "finished"
            except Exception as exc:   # job errors land in the status record
                with job.lock:
                    job.state = "failed"
                    job.detail = str(exc)

        job.thread = threading.Thread(target=work, daemon=True)
        job.thread.start()
        return RunCreated(run_id=job.run_id,
                          run_dir=os.path.join(job.config.out_dir, job.run_id))

    @app.get("/runs", response_model=list[RunStatus])
    def list_runs():
        return [_job_status(j) for j in registry.all()]

    @app.get("/runs/{run_id}", response_model=RunStatus)
    def run_status(run_id: str):
        try:
            job = registry.get(run_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"no run {run_id!r}")
        return _job_status(job)

    @app.get("/runs/{run_id}/metrics", response_class=PlainTextResponse)
    def run_metrics(run_id: str, seed: int = 0):
        try:
            job = registry.get(run_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"no run {run_id!r}")
        path = os.path.join(job.config.out_dir, job.run_id, f"seed{seed}",
                            "metrics.csv")
        if not os.path.exists(path):
            raise HTTPException(status_code=404,
                                detail=f"no metrics yet for seed {seed}")
        with open(path) as f:
            return f.read()

    @app.post("/eval", response_model=EvalResponse)
    def eval_checkpoint(request: EvalRequest):
        config = _resolve_or_400(request.config_text, request.preset,
                                 request.overrides)
        if not os.path.exists(request.checkpoint):
            raise HTTPException(status_code=404,
                                detail=f"checkpoint {request.checkpoint!r} not found")
        try:
            stats = evaluate_checkpoint(config, request.checkpoint,
                                        request.episodes, seed=request.seed,
                                        trace_path=request.trace_path)
        except ExperimentError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return EvalResponse(mean_return=stats.mean_return,
                            success_rate=stats.success_rate,
                            std_return=stats.std_return,
                            mean_length=stats.mean_length,
                            n_episodes=stats.n_episodes)

    @app.post("/diagnose", response_model=DiagnoseResponse)
    def diagnose(request: DiagnoseRequest):
        config = _resolve_or_400(request.config_text, request.preset,
                                 request.overrides)
        if not os.path.exists(request.checkpoint):
            raise HTTPException(status_code=404,
                                detail=f"checkpoint {request.checkpoint!r} not found")
        out_path = request.out_path or (request.checkpoint + ".diagnostics.csv")
        try:
            result = diagnose_checkpoint(config, request.checkpoint,
                                         request.episodes, out_path,
                                         seed=request.seed)
        except ExperimentError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return DiagnoseResponse(alignment_score=result.alignment_score,
                                csv_path=result.csv_path,
                                episodes=result.episodes, rows=result.rows)

    @app.post("/gradcheck", response_model=GradCheckResponse)
    def gradcheck(request: GradCheckRequest):
        reports = gradient_integrity_suite(tolerance=request.tolerance,
                                           seed=request.seed)
        items = [NetworkGradReport(network=name, max_rel_error=r.max_rel_error,
                                   passed=r.passed)
                 for name, r in reports.items()]
        return GradCheckResponse(passed=all(r.passed for r in items),
                                 tolerance=request.tolerance, reports=items)

    return app
