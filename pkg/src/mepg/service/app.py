"""HTTP facade over the planner, geometry validation, and generation jobs."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

from fastapi import FastAPI, HTTPException, Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from ..errors import (BackendUnavailable, ConfigError, GrammarError,
                      InvalidDocument, PlanEmpty, PlannerError,
                      RepairImpossible)
from ..geometry import (MAX_REGIONS, layout_from_dict, layout_to_dict,
                        repair_layout, validate_layout)
from ..images import save_png
from ..moe import ExpertRegistry, load_ensemble, registry_load
from ..neural.checkpoint import load_gate
from ..planner import HttpLlmBackend, RuleBackend, run_enhanced_chain
from ..scheduler import GenerationConfig, cross_denoise
from .jobs import JobStore, QueueFull, DONE

STATE_ENV = "MEPG_STATE_DIR"

MAX_N_STEPS = 1000
MAX_GRID = 256


@dataclass
class ServiceSettings:
    state_dir: str = ""
    experts_config: Optional[str] = None
    gate_checkpoint: Optional[str] = None
    llm_url: Optional[str] = None
    llm_model: str = "default"
    workers: int = 0
    queue_limit: int = 16
    ui_dir: Optional[str] = None
    fallback_to_rule: bool = False

    def resolved_state_dir(self) -> Path:
        d = self.state_dir or os.environ.get(STATE_ENV) or "./mepg-state"
        return Path(d)


class PlanRequest(BaseModel):
    prompt: str
    backend: str = "rule"


class GenerateRequest(BaseModel):
    layout: dict
    config: dict = {}


class ValidateRequest(BaseModel):
    layout: dict


def _check_config_bounds(cfg: GenerationConfig) -> None:
    if cfg.n_steps > MAX_N_STEPS:
        raise ConfigError(f"n_steps {cfg.n_steps} exceeds service cap {MAX_N_STEPS}")
    if cfg.grid_h > MAX_GRID or cfg.grid_w > MAX_GRID:
        raise ConfigError(f"grid {cfg.grid_h}x{cfg.grid_w} exceeds cap {MAX_GRID}")


def make_generation_runner(settings: ServiceSettings) -> Callable:
    """Build the job runner: loads the expert ensemble once, lazily."""
    holder: dict = {}

    def ensemble_for(cfg: GenerationConfig):
        key = (cfg.k, cfg.gate_activation)
        if key not in holder:
            if not settings.experts_config:
                raise ConfigError("service started without --experts-config")
            registry = registry_load(settings.experts_config)
            gate = None
            if settings.gate_checkpoint:
                gate, _ = load_gate(settings.gate_checkpoint)
            base = Path(settings.experts_config).parent
            holder[key] = load_ensemble(registry, gate, k=cfg.k,
                                        gate_activation=cfg.gate_activation,
                                        base_dir=base)
        return holder[key]

    def runner(job_dir: Path, request: dict, on_progress) -> Path:
        layout = layout_from_dict(request["layout"])
        cfg = GenerationConfig.from_dict(request.get("config", {}))
        ensemble = ensemble_for(cfg)
        image, trace = cross_denoise(layout, ensemble, cfg, progress=on_progress)
        trace_path = job_dir / "trace.jsonl"
        with trace_path.open("w") as fh:
            for rec in trace:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
        result = job_dir / "result.png"
        save_png(result, image)
        return result

    return runner


def create_app(settings: ServiceSettings | None = None,
               store: JobStore | None = None) -> FastAPI:
    settings = settings or ServiceSettings()
    app = FastAPI(title="mepg", version="0.1.0")

    registry: Optional[ExpertRegistry] = None
    if settings.experts_config:
        registry = registry_load(settings.experts_config)

    if store is None:
        store = JobStore(settings.resolved_state_dir(),
                         make_generation_runner(settings),
                         workers=settings.workers,
                         queue_limit=settings.queue_limit)
    app.state.store = store
    app.state.settings = settings

    def _planner_backend(name: str):
        if name == "rule":
            return RuleBackend()
        if name == "llm":
            if not settings.llm_url:
                raise BackendUnavailable("service started without --llm-url")
            return HttpLlmBackend(settings.llm_url, settings.llm_model)
        raise HTTPException(422, detail=f"unknown backend {name!r}")

    @app.post("/v1/plan")
    def plan(req: PlanRequest):
        try:
            backend = _planner_backend(req.backend)
            try:
                layout, trace = run_enhanced_chain(req.prompt, backend)
            except BackendUnavailable:
                if req.backend == "llm" and settings.fallback_to_rule:
                    layout, trace = run_enhanced_chain(req.prompt, RuleBackend())
                else:
                    raise
        except BackendUnavailable as exc:
            raise HTTPException(502, detail=str(exc))
        except (GrammarError, PlanEmpty, PlannerError, RepairImpossible) as exc:
            detail = {"error": type(exc).__name__, "message": str(exc)}
            if isinstance(exc, GrammarError):
                detail["offset"] = exc.offset
            raise HTTPException(422, detail=detail)
        return {"layout": layout_to_dict(layout), "trace": trace.to_dict()}

    @app.post("/v1/layouts/validate")
    def validate(req: ValidateRequest):
        try:
            layout = layout_from_dict(req.layout)
        except InvalidDocument as exc:
            raise HTTPException(422, detail=str(exc))
        report = validate_layout(layout)
        try:
            repaired = layout_to_dict(repair_layout(layout))
        except RepairImpossible as exc:
            repaired = None
        out = {
            "ok": report.ok,
            "violations": [
                {"code": v.code, "message": v.message, "region": v.region}
                for v in report.violations
            ],
            "repaired": repaired,
        }
        return out

    @app.get("/v1/experts")
    def experts():
        if registry is None:
            return {"experts": []}
        return {"experts": [
            {"expert_id": e.expert_id, "style_tag": e.style_tag, "role": e.role}
            for e in registry.entries
        ]}

    @app.post("/v1/generate", status_code=202)
    def generate(req: GenerateRequest):
        try:
            layout = layout_from_dict(req.layout)
            report = validate_layout(layout)
            if not report.ok:
                raise ConfigError("invalid layout: " + "; ".join(
                    v.message for v in report.violations))
            if len(layout.regions) > MAX_REGIONS:
                raise ConfigError(f"more than {MAX_REGIONS} regions")
            cfg = GenerationConfig.from_dict(req.config)
            _check_config_bounds(cfg)
        except (InvalidDocument, ConfigError, TypeError) as exc:
            raise HTTPException(422, detail=str(exc))
        try:
            job_id = store.submit({"layout": layout_to_dict(layout),
                                   "config": cfg.to_dict()})
        except QueueFull as exc:
            raise HTTPException(429, detail=str(exc))
        return {"job_id": job_id}

    def _get_job(job_id: str):
        rec = store.get(job_id)
        if rec is None:
            raise HTTPException(404, detail=f"unknown job {job_id}")
        return rec

    @app.get("/v1/jobs/{job_id}")
    def job_status(job_id: str):
        return _get_job(job_id).to_dict()

    @app.get("/v1/jobs/{job_id}/image")
    def job_image(job_id: str):
        rec = _get_job(job_id)
        if rec.status != DONE or not rec.result_path:
            raise HTTPException(409, detail=f"job is {rec.status}, not done")
        data = Path(rec.result_path).read_bytes()
        return Response(content=data, media_type="image/png")

    @app.get("/v1/jobs/{job_id}/trace")
    def job_trace(job_id: str):
        rec = _get_job(job_id)
        path = store.job_dir(job_id) / "trace.jsonl"
        if not path.exists():
            return Response(content="", media_type="application/x-ndjson")
        return Response(content=path.read_text(),
                        media_type="application/x-ndjson")

    if settings.ui_dir and Path(settings.ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=settings.ui_dir, html=True),
                  name="ui")

    return app
