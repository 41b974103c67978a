"""FastAPI application wiring the registry, store, and job lanes."""

from __future__ import annotations

import asyncio
import io
import json
import time
from pathlib import Path

from fastapi import FastAPI, HTTPException, Query
from fastapi.responses import FileResponse, Response, StreamingResponse
from fastapi.staticfiles import StaticFiles

from ..engine.config import ATTACK_METHODS, DISTANCE_ANCHORS, DISTANCE_NORMS, AttackConfig, RefineConfig
from ..errors import AssetNotFoundError, ConfigurationError, DiffcfError, ValidationError
from ..zoo import predict_probs
from .jobs import ARTIFACTS, JobRunner, QueueFullError, build_engine_configs
from .registry import AssetRegistry
from .schemas import (
    BatchRecordModel,
    Capabilities,
    DatasetInfo,
    EvaluateBatchRequest,
    HealthResponse,
    InstanceInfo,
    InstanceListResponse,
    KnobRange,
    ModelInfo,
    RegisterModelRequest,
    RunListResponse,
    RunRecordModel,
    SubmitRunRequest,
    SubmitRunResponse,
)
from .store import RunStore

SSE_POLL_SECONDS = 0.05


def _capabilities() -> Capabilities:
    attack, refine = AttackConfig(), RefineConfig()
    return Capabilities(
        methods=list(ATTACK_METHODS),
        norms=list(DISTANCE_NORMS),
        anchors=list(DISTANCE_ANCHORS),
        knobs={
            "num_iterations": KnobRange(min=1, max=400, default=attack.num_iterations, step=1),
            "step_size": KnobRange(min=0.001, max=2.0, default=attack.resolved_step_size(), step=0.001),
            "lambda_d": KnobRange(min=0.0, max=1.0, default=attack.lambda_d, step=0.0005),
            "tau": KnobRange(min=1, max=50, default=attack.tau, step=1),
            "respaced_steps": KnobRange(min=5, max=200, default=attack.respaced_steps, step=5),
            "mask_threshold": KnobRange(min=0.0, max=1.0, default=refine.mask_threshold, step=0.01),
            "mask_dilation": KnobRange(min=1, max=31, default=refine.mask_dilation, step=2),
            "diversity_k": KnobRange(min=2, max=8, default=4, step=1),
        },
        artifact_names=[name[: -len(".png")] for name in ARTIFACTS],
    )


def create_app(
    data_root: Path,
    *,
    compute_slots: int = 1,
    strict_ingestion: bool = False,
    queue_capacity: int = 64,
    static_dir: Path | None = None,
) -> FastAPI:
    data_root = Path(data_root)
    data_root.mkdir(parents=True, exist_ok=True)
    registry = AssetRegistry(data_root)
    registry.bootstrap()
    store = RunStore(data_root)
    store.recover()
    runner = JobRunner(registry, store, compute_slots=compute_slots, queue_capacity=queue_capacity)

    app = FastAPI(title="diffcf workbench", version="1.0")
    app.state.registry = registry
    app.state.store = store
    app.state.runner = runner
    app.state.strict_ingestion = strict_ingestion

    @app.exception_handler(AssetNotFoundError)
    async def _not_found(_, exc: AssetNotFoundError):
        return Response(
            json.dumps({"detail": str(exc)}), status_code=404, media_type="application/json"
        )

    @app.exception_handler(DiffcfError)
    async def _domain_error(_, exc: DiffcfError):
        status = 429 if isinstance(exc, QueueFullError) else 422
        return Response(
            json.dumps({"detail": str(exc)}), status_code=status, media_type="application/json"
        )

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse()

    @app.get("/capabilities", response_model=Capabilities)
    def capabilities() -> Capabilities:
        return _capabilities()

    # -- assets ---------------------------------------------------------------

    @app.get("/models")
    def list_models() -> dict:
        models = [
            ModelInfo(
                id=m.id,
                kind=m.kind,  # type: ignore[arg-type]
                path=str(m.path),
                geometry=m.meta.get("geometry", {}),
                num_classes=m.meta.get("num_classes"),
                accuracy=m.meta.get("accuracy"),
                num_steps=m.meta.get("num_steps"),
            )
            for m in registry.models()
        ]
        return {"schema_version": 1, "models": [m.model_dump() for m in models]}

    @app.post("/models")
    def register_model(request: RegisterModelRequest) -> dict:
        try:
            entry = registry.register_model_file(request.path, model_id=request.id)
        except ValidationError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from None
        return {"schema_version": 1, "id": entry.id, "kind": entry.kind}

    @app.get("/datasets")
    def list_datasets() -> dict:
        infos = []
        for ds_id, ds in sorted(registry.datasets().items()):
            d = ds.descriptor
            infos.append(
                DatasetInfo(
                    id=ds_id,
                    class_names=list(d.class_names),
                    geometry={"channels": d.channels, "height": d.height, "width": d.width},
                    splits={k: len(v) for k, v in ds.splits.items()},
                    provenance=d.provenance,
                ).model_dump()
            )
        return {"schema_version": 1, "datasets": infos}

    @app.get("/datasets/{dataset_id}/instances", response_model=InstanceListResponse)
    def list_instances(
        dataset_id: str,
        split: str = Query("eval"),
        offset: int = Query(0, ge=0),
        limit: int = Query(32, ge=1, le=256),
    ) -> InstanceListResponse:
        dataset = registry.dataset(dataset_id)
        d = dataset.descriptor
        _, labels = dataset.split(split)
        window = labels[offset : offset + limit]
        instances = [
            InstanceInfo(
                index=offset + i, label=int(lb), label_name=d.class_names[int(lb)]
            )
            for i, lb in enumerate(window)
        ]
        return InstanceListResponse(
            dataset_id=dataset_id, split=split, total=len(labels), instances=instances
        )

    @app.get("/datasets/{dataset_id}/instances/{index}/image")
    def instance_image(dataset_id: str, index: int, split: str = Query("eval")) -> Response:
        from ..engine.runio import to_uint8
        from PIL import Image

        dataset = registry.dataset(dataset_id)
        image, _ = dataset.instance(split, index)
        buf = io.BytesIO()
        Image.fromarray(to_uint8(image[None])).save(buf, format="PNG")
        return Response(buf.getvalue(), media_type="image/png")

    # -- runs -----------------------------------------------------------------

    @app.post("/runs", response_model=SubmitRunResponse)
    def submit_run(request: SubmitRunRequest) -> SubmitRunResponse:
        classifier = registry.classifier(request.classifier_id)
        registry.denoiser(request.denoiser_id)
        dataset = registry.dataset(request.dataset_id)
        image, _ = dataset.instance(request.split, request.index)
        num_classes = classifier.num_classes
        if not 0 <= request.target_label < num_classes:
            raise HTTPException(
                status_code=422,
                detail=f"target label {request.target_label} outside 0..{num_classes - 1}",
            )
        try:
            build_engine_configs(request)
        except ConfigurationError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from None
        prediction = int(predict_probs(classifier, image[None]).argmax())
        if prediction == request.target_label:
            raise HTTPException(status_code=422, detail="target equals prediction")

        record = RunRecordModel(
            id=store.new_id("r"),
            status="queued",
            request=request,
            created_at=time.time(),
        )
        store.create_run(record)
        try:
            runner.enqueue_run(record.id)
        except QueueFullError:
            record.status = "rejected"
            record.error = "queue full"
            store.update_run(record)
            raise
        return SubmitRunResponse(id=record.id, status="queued")

    @app.get("/runs", response_model=RunListResponse)
    def list_runs(status: str | None = Query(None)) -> RunListResponse:
        return RunListResponse(runs=store.list_runs(status))

    @app.get("/runs/{run_id}", response_model=RunRecordModel)
    def get_run(run_id: str) -> RunRecordModel:
        record = store.get_run(run_id)
        if record.status == "running":
            record = record.model_copy(update={"progress": runner.progress(run_id)})
        return record

    @app.get("/runs/{run_id}/artifacts/{name:path}")
    def get_artifact(run_id: str, name: str) -> FileResponse:
        record = store.get_run(run_id)
        if name not in record.artifacts:
            raise AssetNotFoundError(f"run {run_id} has no artifact {name!r}")
        path = store.run_dir(run_id) / name
        if not path.exists():
            raise AssetNotFoundError(f"artifact file missing: {name}")
        media = "image/png" if name.endswith(".png") else "application/json"
        return FileResponse(path, media_type=media)

    @app.get("/runs/{run_id}/events")
    async def run_events(run_id: str) -> StreamingResponse:
        store.get_run(run_id)

        async def stream():
            sent = 0
            while True:
                events = runner.events_so_far(run_id)
                for event in events[sent:]:
                    yield f"data: {json.dumps(event)}\n\n"
                sent = len(events)
                status = store.get_run(run_id).status
                if status in ("succeeded", "failed", "rejected") and sent >= len(
                    runner.events_so_far(run_id)
                ):
                    if not any("status" in e for e in events):
                        yield f"data: {json.dumps({'status': status})}\n\n"
                    return
                await asyncio.sleep(SSE_POLL_SECONDS)

        return StreamingResponse(stream(), media_type="text/event-stream")

    # -- batches ----------------------------------------------------------------

    @app.post("/batches/evaluate")
    def evaluate_batch(request: EvaluateBatchRequest) -> dict:
        if not request.run_ids and request.dataset_id:
            request.run_ids = [
                r.id
                for r in store.list_runs("succeeded")
                if r.request.dataset_id == request.dataset_id
                and (request.split is None or r.request.split == request.split)
            ]
            if not request.run_ids:
                raise HTTPException(
                    status_code=422,
                    detail=f"no succeeded runs for dataset {request.dataset_id!r}",
                )
        if not request.run_ids:
            raise HTTPException(status_code=422, detail="run_ids is empty")
        not_succeeded = []
        for run_id in request.run_ids:
            record = store.get_run(run_id)
            if record.status != "succeeded":
                not_succeeded.append(f"{run_id} is {record.status}")
        if not_succeeded:
            raise HTTPException(
                status_code=422, detail="runs not evaluable: " + "; ".join(not_succeeded)
            )
        batch = BatchRecordModel(
            id=store.new_id("b"), status="queued", request=request, created_at=time.time()
        )
        store.create_batch(batch)
        runner.enqueue_batch(batch.id)
        return {"schema_version": 1, "id": batch.id, "status": "queued"}

    @app.get("/batches")
    def list_batches() -> dict:
        return {
            "schema_version": 1,
            "batches": [b.model_dump() for b in store.list_batches()],
        }

    @app.get("/batches/{batch_id}", response_model=BatchRecordModel)
    def get_batch(batch_id: str) -> BatchRecordModel:
        return store.get_batch(batch_id)

    # -- static UI ---------------------------------------------------------------

    bundle = static_dir if static_dir is not None else _default_static_dir()
    if bundle is not None and bundle.is_dir():
        app.mount("/", StaticFiles(directory=bundle, html=True), name="ui")

    return app


def _default_static_dir() -> Path | None:
    # frontend/dist at the repository root, when built
    parents = Path(__file__).resolve().parents
    candidates = [Path.cwd() / "frontend" / "dist"]
    if len(parents) >= 4:
        candidates.insert(0, parents[3] / "frontend" / "dist")
    for candidate in candidates:
        if candidate.is_dir():
            return candidate
    return None
