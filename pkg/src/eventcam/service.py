"""HTTP JSON API over the annotation study.

Endpoints:
    POST /studies                                 create a study from a report
    POST /studies/{id}/annotators                 register an annotator
    GET  /studies/{id}/tasks/next?annotator=...   next task for an annotator
    POST /studies/{id}/votes                      submit one vote
    GET  /studies/{id}/report                     aggregated study report
    GET  /media/{sample_id}/{original|overlay}    image bytes for a task
"""
from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import FileResponse
from pydantic import BaseModel

from . import errors
from .metrics import report_from_matrix
from .study import Study, StudyStore, StudyTask

_ERROR_STATUS = {
    errors.UnknownStudy: 404,
    errors.UnknownAnnotator: 404,
    errors.DuplicateVote: 409,
    errors.ResolvedTask: 409,
    errors.InvalidLabel: 422,
    errors.NoResolvedTasks: 409,
    errors.EmptyStudy: 400,
    errors.MissingOverlay: 400,
}


def _http(exc: errors.EventcamError) -> HTTPException:
    status = _ERROR_STATUS.get(type(exc), 400)
    return HTTPException(status_code=status,
                         detail={"error": type(exc).__name__, "message": str(exc)})


class CreateStudyBody(BaseModel):
    class_names: list[str]
    per_sample: list[dict]  # {sample_id, true, pred}
    overlay_ids: list[str]
    votes_needed: int = 3


class RegisterBody(BaseModel):
    annotator_id: str


class VoteBody(BaseModel):
    sample_id: str
    annotator_id: str
    label: int


def _task_view(study: Study, task: StudyTask) -> dict:
    resolved, total = study.progress()
    return {
        "sample_id": task.sample_id,
        "class_name": task.class_name,
        "original_url": f"/media/{task.sample_id}/original",
        "overlay_url": f"/media/{task.sample_id}/overlay",
        "progress": {"resolved": resolved, "total": total},
    }


def create_app(store: StudyStore | None = None,
               media_resolver=None,
               static_dir: str | Path | None = None) -> FastAPI:
    """Build the service app.

    ``media_resolver(sample_id, kind)`` returns the image path for kind
    "original" or "overlay", or None when unknown. ``static_dir`` optionally
    serves the annotation UI bundle at the web root.
    """
    store = store or StudyStore()
    app = FastAPI(title="eventcam study service")
    app.state.store = store
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])

    @app.post("/studies")
    def create_study(body: CreateStudyBody):
        per_sample = [(s["sample_id"], int(s["true"]), int(s["pred"]))
                      for s in body.per_sample]
        report = report_from_matrix(
            _count_matrix(per_sample, len(body.class_names)),
            body.class_names, per_sample)
        try:
            study = Study.from_report(report, body.overlay_ids,
                                      votes_needed=body.votes_needed)
        except (errors.EventcamError, ValueError) as exc:
            if isinstance(exc, errors.EventcamError):
                raise _http(exc) from exc
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        store.add(study)
        return {"study_id": study.study_id, "tasks": len(study.tasks)}

    @app.post("/studies/{study_id}/annotators")
    def register(study_id: str, body: RegisterBody):
        try:
            study = store.get(study_id)
            study.register_annotator(body.annotator_id)
        except errors.EventcamError as exc:
            raise _http(exc) from exc
        return {"ok": True, "annotator_id": body.annotator_id}

    @app.get("/studies/{study_id}/tasks/next")
    def next_task(study_id: str, annotator: str):
        try:
            study = store.get(study_id)
            task = study.next_task(annotator)
        except errors.EventcamError as exc:
            raise _http(exc) from exc
        if task is None:
            resolved, total = study.progress()
            return {"task": None, "progress": {"resolved": resolved, "total": total}}
        return {"task": _task_view(study, task)}

    @app.post("/studies/{study_id}/votes")
    def submit_vote(study_id: str, body: VoteBody):
        try:
            study = store.get(study_id)
            study.submit_vote(body.annotator_id, body.sample_id, body.label)
            task = study.tasks[body.sample_id]
        except errors.EventcamError as exc:
            raise _http(exc) from exc
        return {"ok": True, "sample_id": body.sample_id,
                "resolved": task.resolved, "resolved_label": task.resolved_label}

    @app.get("/studies/{study_id}/report")
    def study_report(study_id: str):
        try:
            return store.get(study_id).report().to_dict()
        except errors.EventcamError as exc:
            raise _http(exc) from exc

    @app.get("/media/{rest:path}")
    def media(rest: str):
        # sample ids are relative paths, so the kind is the final path segment
        sample_id, _, kind = rest.rpartition("/")
        if kind not in ("original", "overlay") or not sample_id:
            raise HTTPException(status_code=404, detail="unknown media path")
        path = media_resolver(sample_id, kind) if media_resolver else None
        if path is None or not Path(path).is_file():
            raise HTTPException(status_code=404, detail=f"no {kind} for {sample_id!r}")
        return FileResponse(path)

    if static_dir is not None:
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app


def _count_matrix(per_sample, num_classes):
    import numpy as np
    m = np.zeros((num_classes, num_classes), dtype=np.int64)
    for _, t, p in per_sample:
        m[t, p] += 1
    return m


def directory_media_resolver(original_root, overlay_root):
    """Resolve media by joining the sample id onto per-kind root directories.
    Overlay files are the sample id with a .png suffix appended."""
    original_root = Path(original_root)
    overlay_root = Path(overlay_root)

    def resolve(sample_id: str, kind: str):
        if ".." in Path(sample_id).parts:
            return None
        if kind == "original":
            return original_root / sample_id
        return overlay_root / (sample_id + ".png")

    return resolve
