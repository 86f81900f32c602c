"""REST service over the study store.

Endpoints mirror the review workflow: upload a study bundle, read it back,
set the clinical description, run the false-positive filter, fetch the
exact PNGs the prompt carried, override verdicts, and read metrics. Every
mutation goes through the store's per-study mutation lock and is persisted
before the response is sent, so any 2xx answer survives a restart.

Filtering is synchronous with a per-study guard: a second filter request
for the same study while one is running gets 409 instead of queueing.
Errors use a uniform {code, message} JSON body.
"""

from __future__ import annotations

import json
import tempfile
import threading
from dataclasses import replace
from pathlib import Path
from typing import Callable, Optional

from fastapi import Body, FastAPI, File, Request, Response, UploadFile
from fastapi.responses import JSONResponse

from . import __version__
from .config import AppConfig, make_backend, strategy_from_label
from .evaluate import metrics_to_json
from .gateway import Backend, BackendConfigError, ReplayMissError
from .model import (
    Decision,
    StudyBundle,
    ValidationError,
    Verdict,
    VerdictSource,
    locate_candidate,
)
from .pipeline import apply_filter_run, evaluate_study, filter_study
from .render import render_slice
from .prompts import render_specs_for
from .store import IntegrityError, StudyStore, load_study
from .textparse import parse_description, report_to_json, rule_prefilter

BUNDLE_FILES = {
    "study.json",
    "volume.json",
    "volume.raw",
    "lobes.raw",
    "candidates.json",
    "truth.json",
    "decisions.json",
}

BackendFactory = Callable[[AppConfig, StudyBundle], Backend]


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"code": code, "message": message})


def _verdict_json(verdict: Verdict) -> dict:
    return {
        "candidate_id": verdict.candidate_id,
        "decision": verdict.decision.value,
        "rationale": verdict.rationale,
        "source": verdict.source.value,
    }


def _study_view(bundle: StudyBundle) -> dict:
    prefilter = {}
    if bundle.description:
        report = parse_description(bundle.description)
        prefilter = rule_prefilter(bundle.candidates, bundle.lobes, report)
    verdicts = {v.candidate_id: v for v in bundle.verdicts}
    cards = []
    for cand in bundle.candidates:
        location = locate_candidate(cand, bundle.lobes)
        verdict = verdicts.get(cand.id)
        cards.append(
            {
                "id": cand.id,
                "centroid": list(cand.centroid),
                "confidence": cand.confidence,
                "location": (
                    {"laterality": location[0].value, "lobe": location[1].value}
                    if location
                    else None
                ),
                "verdict": _verdict_json(verdict) if verdict else None,
                "prefilter": prefilter[cand.id].value if cand.id in prefilter else None,
                "render_url": f"/studies/{bundle.study_id}/candidates/{cand.id}/render",
            }
        )
    return {
        "study_id": bundle.study_id,
        "dims": list(bundle.volume.dims),
        "spacing": list(bundle.volume.spacing),
        "description": bundle.description,
        "has_truth": bundle.truth is not None,
        "candidates": cards,
        "decision_log_length": len(bundle.decision_log),
    }


def create_app(
    config: Optional[AppConfig] = None,
    backend_factory: Optional[BackendFactory] = None,
) -> FastAPI:
    config = config if config is not None else AppConfig()
    app = FastAPI(title="nodulescreen", version=__version__)
    store = StudyStore(config.store_dir)
    factory: BackendFactory = backend_factory or (
        lambda cfg, study: make_backend(cfg, study=study)
    )
    filter_locks: dict[str, threading.Lock] = {}
    locks_guard = threading.Lock()

    def filter_lock(study_id: str) -> threading.Lock:
        with locks_guard:
            return filter_locks.setdefault(study_id, threading.Lock())

    @app.exception_handler(ValidationError)
    async def _invalid(request: Request, exc: ValidationError):
        return _error(422, "invalid", str(exc))

    @app.exception_handler(IntegrityError)
    async def _corrupt(request: Request, exc: IntegrityError):
        return _error(422, "corrupt", str(exc))

    @app.exception_handler(BackendConfigError)
    async def _backend_config(request: Request, exc: BackendConfigError):
        return _error(502, "backend_error", str(exc))

    @app.exception_handler(ReplayMissError)
    async def _replay_miss(request: Request, exc: ReplayMissError):
        return _error(502, "backend_error", str(exc))

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "version": __version__}

    @app.post("/studies", status_code=201)
    def upload_study(files: list[UploadFile] = File(...)):
        with tempfile.TemporaryDirectory() as tmp:
            tmp_dir = Path(tmp)
            for upload in files:
                name = Path(upload.filename or "").name
                if name not in BUNDLE_FILES:
                    return _error(422, "invalid", f"unexpected bundle file {name!r}")
                (tmp_dir / name).write_bytes(upload.file.read())
            bundle = load_study(tmp_dir)
        if bundle.study_id in store:
            return _error(409, "conflict", f"study {bundle.study_id!r} already exists")
        store.save(bundle)
        return {"study_id": bundle.study_id, "candidates": len(bundle.candidates)}

    @app.get("/studies")
    def list_studies() -> dict:
        rows = []
        for study_id in store.list_studies():
            bundle = store.load(study_id)
            rows.append(
                {
                    "study_id": study_id,
                    "candidates": len(bundle.candidates),
                    "has_description": bool(bundle.description),
                    "verdicts": len(bundle.verdicts),
                }
            )
        return {"studies": rows}

    @app.get("/studies/{study_id}")
    def get_study(study_id: str):
        if study_id not in store:
            return _error(404, "not_found", f"no study {study_id!r}")
        return _study_view(store.load(study_id))

    @app.put("/studies/{study_id}/description")
    async def put_description(study_id: str, request: Request):
        if study_id not in store:
            return _error(404, "not_found", f"no study {study_id!r}")
        body = (await request.body()).decode("utf-8")
        with store.mutate(study_id) as bundle:
            bundle.description = body
        report = parse_description(body) if body else None
        return {
            "study_id": study_id,
            "description": body,
            "parse": report_to_json(report) if report else None,
        }

    @app.post("/studies/{study_id}/filter")
    def run_filter(study_id: str, config_label: str = "all_on", seed: int = 0):
        if study_id not in store:
            return _error(404, "not_found", f"no study {study_id!r}")
        strategy = strategy_from_label(config_label, rng_seed=seed)
        lock = filter_lock(study_id)
        if not lock.acquire(blocking=False):
            return _error(
                409, "conflict", f"a filter run is already active for {study_id!r}"
            )
        try:
            run_cfg = replace(config, mock=replace(config.mock, rng_seed=seed))
            with store.mutate(study_id) as bundle:
                backend = factory(run_cfg, bundle)
                run = filter_study(bundle, strategy, backend)
                apply_filter_run(bundle, run)
        finally:
            lock.release()
        return {
            "study_id": study_id,
            "config": strategy.label(),
            "seed": seed,
            "verdicts": [_verdict_json(o.verdict) for o in run.outcomes],
            "prefilter": {o.candidate_id: o.prefilter.value for o in run.outcomes},
        }

    @app.get("/studies/{study_id}/candidates/{candidate_id}/render")
    def render_candidate(
        study_id: str,
        candidate_id: str,
        config_label: str = "all_on",
        seed: int = 0,
        image: int = 1,
    ):
        if study_id not in store:
            return _error(404, "not_found", f"no study {study_id!r}")
        bundle = store.load(study_id)
        try:
            candidate = bundle.candidate_by_id(candidate_id)
        except KeyError:
            return _error(404, "not_found", f"no candidate {candidate_id!r}")
        strategy = strategy_from_label(config_label, rng_seed=seed)
        specs = render_specs_for(bundle, candidate, strategy)
        if not (1 <= image <= len(specs)):
            return _error(
                422, "invalid", f"image index {image} out of range 1..{len(specs)}"
            )
        png = render_slice(bundle.volume, bundle.lobes, candidate, specs[image - 1])
        return Response(content=png, media_type="image/png")

    @app.put("/studies/{study_id}/verdicts/{candidate_id}")
    def put_verdict(study_id: str, candidate_id: str, payload: dict = Body(...)):
        if study_id not in store:
            return _error(404, "not_found", f"no study {study_id!r}")
        try:
            decision = Decision(str(payload.get("decision", "")))
        except ValueError:
            return _error(422, "invalid", "decision must be one of keep/discard/reject")
        known = {c.id for c in store.load(study_id).candidates}
        if candidate_id not in known:
            return _error(404, "not_found", f"no candidate {candidate_id!r}")
        verdict = Verdict(
            candidate_id=candidate_id,
            decision=decision,
            rationale=str(payload.get("rationale", "")),
            source=VerdictSource.HUMAN_OVERRIDE,
        )
        with store.mutate(study_id) as bundle:
            bundle.set_verdict(verdict)
            log_length = len(bundle.decision_log)
        return {"verdict": _verdict_json(verdict), "decision_log_length": log_length}

    @app.get("/studies/{study_id}/metrics")
    def get_metrics(study_id: str):
        if study_id not in store:
            return _error(404, "not_found", f"no study {study_id!r}")
        bundle = store.load(study_id)
        counts, report = evaluate_study(bundle, policy=config.match_policy)
        payload = metrics_to_json(report)
        metrics_path = store.path_of(study_id) / "metrics.json"
        metrics_path.write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        return payload

    @app.post("/parse")
    def parse_text(payload: dict = Body(...)):
        text = payload.get("text")
        if not isinstance(text, str):
            return _error(422, "invalid", "body must carry a string 'text' field")
        return report_to_json(parse_description(text))

    return app
