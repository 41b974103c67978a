"""Job execution: a FIFO heavy lane for explanations plus a light lane
for metric batches. One worker thread per compute slot.
"""

from __future__ import annotations

import logging
import queue
import threading
import time

import torch

from ..engine import AttackConfig, RefineConfig, diverse_explanations, explain, write_run_dir
from ..errors import DiffcfError
from ..metrics import ClassifierFeatureEncoder, CosineFeatureDistance, diversity, evaluate_runs
from .registry import AssetRegistry
from .schemas import (
    BatchRecordModel,
    RunProgress,
    RunRecordModel,
    RunResult,
    SubmitRunRequest,
)
from .store import RunStore

logger = logging.getLogger(__name__)

ARTIFACTS = ["input.png", "pre_explanation.png", "mask.png", "counterfactual.png"]


class QueueFullError(DiffcfError):
    """Back-pressure: the pending-run queue is at capacity."""


def build_engine_configs(request: SubmitRunRequest) -> tuple[AttackConfig, RefineConfig]:
    attack_overrides = {k: v for k, v in request.attack.model_dump().items() if v is not None}
    refine_overrides = {k: v for k, v in request.refine.model_dump().items() if v is not None}
    attack = AttackConfig(seed=request.seed, **attack_overrides)
    refine = RefineConfig(**refine_overrides)
    attack.validate()
    refine.validate()
    return attack, refine


class JobRunner:
    def __init__(
        self,
        registry: AssetRegistry,
        store: RunStore,
        *,
        compute_slots: int = 1,
        queue_capacity: int = 64,
    ):
        self.registry = registry
        self.store = store
        self._heavy: queue.Queue[str | None] = queue.Queue(maxsize=queue_capacity)
        self._light: queue.Queue[str | None] = queue.Queue(maxsize=queue_capacity)
        self._events: dict[str, list[dict]] = {}
        self._events_lock = threading.Lock()
        self._progress: dict[str, RunProgress] = {}
        self._stop = False
        self._workers = [
            threading.Thread(target=self._heavy_loop, name=f"explain-{i}", daemon=True)
            for i in range(compute_slots)
        ]
        self._workers.append(threading.Thread(target=self._light_loop, name="metrics", daemon=True))
        for w in self._workers:
            w.start()

    def shutdown(self) -> None:
        self._stop = True
        for _ in self._workers:
            try:
                self._heavy.put_nowait(None)
                self._light.put_nowait(None)
            except queue.Full:
                pass

    # -- submission ---------------------------------------------------------

    def enqueue_run(self, run_id: str) -> None:
        try:
            self._heavy.put_nowait(run_id)
        except queue.Full:
            raise QueueFullError("run queue is full, retry later") from None

    def enqueue_batch(self, batch_id: str) -> None:
        try:
            self._light.put_nowait(batch_id)
        except queue.Full:
            raise QueueFullError("batch queue is full, retry later") from None

    # -- progress & events ---------------------------------------------------

    def events_so_far(self, run_id: str) -> list[dict]:
        with self._events_lock:
            if run_id in self._events:
                return list(self._events[run_id])
        return self.store.read_events(run_id)

    def progress(self, run_id: str) -> RunProgress | None:
        return self._progress.get(run_id)

    def _emit(self, run_id: str, event: dict) -> None:
        with self._events_lock:
            self._events.setdefault(run_id, []).append(event)
        self.store.append_event(run_id, event)

    # -- workers ------------------------------------------------------------

    def _heavy_loop(self) -> None:
        while not self._stop:
            run_id = self._heavy.get()
            if run_id is None:
                return
            try:
                self._execute_run(run_id)
            except Exception:  # noqa: BLE001 - worker must survive
                logger.exception("run %s crashed", run_id)

    def _light_loop(self) -> None:
        while not self._stop:
            batch_id = self._light.get()
            if batch_id is None:
                return
            try:
                self._execute_batch(batch_id)
            except Exception:  # noqa: BLE001
                logger.exception("batch %s crashed", batch_id)

    def _execute_run(self, run_id: str) -> None:
        record = self.store.get_run(run_id)
        if record.status != "queued":
            return
        request = record.request
        record.status = "running"
        record.started_at = time.time()
        self.store.update_run(record)
        try:
            classifier = self.registry.classifier(request.classifier_id)
            model = self.registry.denoiser(request.denoiser_id)
            dataset = self.registry.dataset(request.dataset_id)
            image, _ = dataset.instance(request.split, request.index)
            attack, refine = build_engine_configs(request)
            total = attack.num_iterations * (2 if attack.method == "cw" else 1)

            def on_progress(iteration: int, objective: float) -> None:
                progress = RunProgress(
                    iteration=iteration, total_iterations=total, objective=objective
                )
                self._progress[run_id] = progress
                self._emit(run_id, {"iteration": iteration, "objective": objective})

            assets = {
                "classifier": str(self.registry.model(request.classifier_id).path),
                "denoiser": str(self.registry.model(request.denoiser_id).path),
                "instance": f"{request.dataset_id}#{request.split}/{request.index}",
            }
            schedule = model.base_schedule()
            sigma = None
            if request.diversity_k:
                results = diverse_explanations(
                    image[None], request.target_label, request.diversity_k,
                    classifier, model, schedule, attack, refine,
                )
                encoder = ClassifierFeatureEncoder(classifier)
                sigma = diversity(
                    [r.counterfactual for r in results], CosineFeatureDistance(encoder)
                )
                run_dir = self.store.run_dir(run_id)
                for i, res in enumerate(results):
                    write_run_dir(res, run_dir / f"variant-{i:02d}",
                                  seed=res.attack_config.seed, assets=assets)
                result = results[0]
                artifacts = [f"variant-{i:02d}/{n}" for i in range(len(results)) for n in ARTIFACTS]
            else:
                result = explain(
                    image[None], request.target_label, classifier, model, schedule,
                    attack, refine, progress=on_progress,
                )
                write_run_dir(result, self.store.run_dir(run_id), seed=attack.seed, assets=assets)
                artifacts = list(ARTIFACTS)

            record = self.store.get_run(run_id)
            record.status = "succeeded"
            record.finished_at = time.time()
            record.artifacts = artifacts
            record.result = RunResult(
                source_label=result.source_label,
                target_label=result.target_label,
                probs_input=result.probs_input,
                probs_counterfactual=result.probs_counterfactual,
                flipped=result.flipped,
                mask_coverage=result.mask.coverage,
                diversity=sigma,
            )
            self.store.update_run(record)
            self._emit(run_id, {"status": "succeeded", "flipped": result.flipped})
        except Exception as exc:  # noqa: BLE001 - recorded on the run
            logger.exception("run %s failed", run_id)
            record = self.store.get_run(run_id)
            record.status = "failed"
            record.finished_at = time.time()
            record.error = str(exc)
            self.store.update_run(record)
            self._emit(run_id, {"status": "failed", "error": str(exc)})
        finally:
            self._progress.pop(run_id, None)

    def _execute_batch(self, batch_id: str) -> None:
        record = self.store.get_batch(batch_id)
        record.status = "running"
        self.store.update_batch(record)
        request = record.request
        try:
            run_dirs = [self.store.run_dir(rid) for rid in request.run_ids]
            classifier = None
            encoder = None
            if request.classifier_id:
                classifier = self.registry.classifier(request.classifier_id)
                encoder = ClassifierFeatureEncoder(classifier)
            report = evaluate_runs(
                run_dirs,
                classifier,
                fid_encoder=encoder,
                fs_encoder=encoder,
                s3_encoder=None,
                perceptual_encoder=encoder,
                cout_steps=request.cout_steps,
                sfid_num_splits=request.sfid_splits,
                seed=request.seed,
            )
            record.report = report.to_json_dict()
            record.status = "succeeded"
        except Exception as exc:  # noqa: BLE001
            logger.exception("batch %s failed", batch_id)
            record.status = "failed"
            record.error = str(exc)
        record.finished_at = time.time()
        self.store.update_batch(record)
