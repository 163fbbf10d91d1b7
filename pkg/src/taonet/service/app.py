"""HTTP service wrapping the pipeline; the CLI is a thin client of this app."""

from __future__ import annotations

import json
from pathlib import Path

from fastapi import FastAPI
from fastapi.responses import JSONResponse

from .. import __version__, pipeline
from ..config import describe_config
from ..errors import PipelineStageError, TaonetError
from ..gateway import LlmGateway
from ..ingest import (
    default_spec,
    generate_synthetic,
    load_dataset,
    parse_pcap,
    tokenize_packet,
    write_dataset,
)
from ..ingest.dataset import Dataset, derive_label_space
from ..sps import template_hashes
from . import schemas as sch


def _run_report(result: pipeline.PipelineResult, seed: int) -> sch.RunReport:
    return sch.RunReport(
        seed=seed,
        run_dir=str(result.run_dir),
        metrics=sch.MetricsModel(**result.report.as_dict()),
        auroc=result.auroc,
        files={name: str(path) for name, path in result.files.items()},
        timings=result.timings,
    )


def create_app() -> FastAPI:
    app = FastAPI(title="taonet", version=__version__,
                  description="Two-stage adaptive ID/OOD traffic classification")

    @app.exception_handler(TaonetError)
    async def taonet_error_handler(_request, exc: TaonetError):
        body = sch.ErrorResponse(error=type(exc).__name__, detail=str(exc))
        if isinstance(exc, PipelineStageError):
            body.stage = exc.stage
        return JSONResponse(status_code=400, content=body.model_dump())

    @app.get("/health", response_model=sch.HealthResponse)
    def health():
        return sch.HealthResponse(status="ok", version=__version__)

    @app.post("/config/resolve", response_model=sch.ConfigResponse)
    def resolve_config(request: sch.ConfigRequest):
        described = describe_config(request.config)
        return sch.ConfigResponse(config=described["config"],
                                  provenance=described["provenance"],
                                  config_hash=request.config.config_hash(),
                                  template_hashes=template_hashes())

    @app.post("/datasets/synthetic", response_model=sch.SyntheticResponse)
    def synthetic(request: sch.SyntheticRequest):
        if request.spec is not None:
            spec = request.spec
        elif request.spec_path is not None:
            spec = json.loads(Path(request.spec_path).read_text("utf-8"))
        else:
            spec = default_spec()
        dataset = generate_synthetic(spec, request.n_per_class, request.seed)
        write_dataset(dataset, request.out_path)
        split_counts = {name: len(dataset.split(name))
                        for name in ("train", "valid", "test")}
        return sch.SyntheticResponse(path=request.out_path,
                                     n_samples=len(dataset.samples),
                                     split_counts=split_counts,
                                     id_labels=list(dataset.label_space.id_labels),
                                     ood_labels=list(dataset.label_space.ood_labels))

    @app.post("/datasets/pcap", response_model=sch.PcapResponse)
    def ingest_pcap(request: sch.PcapRequest):
        records = parse_pcap(request.pcap_path, limit=request.limit)
        samples = [tokenize_packet(record, request.j, sample_id=f"pcap-{i:06d}",
                                   label=request.label)
                   for i, record in enumerate(records)]
        splits = {s.id: request.split for s in samples}
        dataset = Dataset(samples=samples,
                          label_space=derive_label_space(samples, splits),
                          splits=splits)
        write_dataset(dataset, request.out_path)
        return sch.PcapResponse(path=request.out_path, n_records=len(records),
                                n_samples=len(samples))

    @app.post("/train", response_model=sch.TrainResponse)
    def train(request: sch.TrainRequest):
        config = request.config
        dataset = load_dataset(config.dataset)
        clock = pipeline.StageClock()
        bundle = pipeline.train_bundle(dataset, config, clock)
        run_dir = pipeline.run_directory(config)
        pipeline.write_run_config(run_dir, config)
        ckpt_dir = run_dir / "checkpoints"
        ckpt_dir.mkdir(parents=True, exist_ok=True)
        pipeline.save_classifier_checkpoint(ckpt_dir / "classifier.ckpt",
                                            bundle, config)
        pipeline.save_detector_checkpoint(ckpt_dir / "detector.ckpt",
                                          bundle, config)

        def final_loss(meta: dict):
            losses = meta.get("epoch_losses") or []
            return losses[-1] if losses else None

        return sch.TrainResponse(
            run_dir=str(run_dir),
            classifier_checkpoint=str(ckpt_dir / "classifier.ckpt"),
            detector_checkpoint=str(ckpt_dir / "detector.ckpt"),
            id_labels=list(bundle.head.labels),
            extractor_final_loss=final_loss(bundle.extractor.meta),
            classifier_final_loss=final_loss(bundle.encoder.meta),
            timings=clock.timings)

    def _load_bundle(config, run_dir: str | None, dataset):
        directory = Path(run_dir) if run_dir else pipeline.run_directory(config)
        label_space = pipeline.resolve_label_space(dataset, config)
        return pipeline.load_bundle(directory, label_space), directory

    @app.post("/calibrate", response_model=sch.CalibrateResponse)
    def calibrate(request: sch.CalibrateRequest):
        config = request.config
        dataset = load_dataset(config.dataset)
        bundle, run_dir = _load_bundle(config, request.run_dir, dataset)
        clock = pipeline.StageClock()
        pipeline.calibrate_bundle(bundle, dataset, config, clock)
        pipeline.save_detector_checkpoint(
            run_dir / "checkpoints" / "detector.ckpt", bundle, config)
        return sch.CalibrateResponse(
            run_dir=str(run_dir), k=bundle.subspace.k, gamma=bundle.subspace.gamma,
            alpha=bundle.hybrid.alpha, delta=bundle.hybrid.delta,
            residual_bounds=list(bundle.hybrid.residual_bounds),
            smoothness_bounds=list(bundle.hybrid.smoothness_bounds),
            timings=clock.timings)

    @app.post("/classify", response_model=sch.ClassifyResponse)
    def classify(request: sch.ClassifyRequest):
        config = request.config
        dataset = load_dataset(config.dataset)
        bundle, run_dir = _load_bundle(config, request.run_dir, dataset)
        (run_dir / "prompts.jsonl").write_text("", encoding="utf-8")
        gateway = LlmGateway(pipeline.build_backend(config, dataset),
                             in_flight_cap=config.in_flight_cap,
                             audit_path=str(run_dir / "prompts.jsonl"))
        if request.sample_id is not None:
            sample = dataset.sample_by_id(request.sample_id)
            prediction = pipeline.classify_one(bundle, sample, None, config,
                                               gateway)
            model = sch.PredictionModel(**prediction.to_json())
            return sch.ClassifyResponse(n_predictions=1, predictions=[model])
        predictions = pipeline.classify_split(bundle, dataset, request.split,
                                              config, gateway)
        out_path = run_dir / "predictions.jsonl"
        pipeline.write_predictions(out_path, predictions)
        return sch.ClassifyResponse(predictions_path=str(out_path),
                                    n_predictions=len(predictions))

    @app.post("/evaluate", response_model=sch.EvaluateResponse)
    def evaluate(request: sch.EvaluateRequest):
        results, aggregate = pipeline.run_multi(request.config, request.runs)
        reports = [_run_report(result, request.config.seed + i)
                   for i, result in enumerate(results)]
        agg = None
        if request.runs > 1:
            agg = {metric: {"mean": mean, "std": std}
                   for metric, (mean, std) in aggregate.items()}
        return sch.EvaluateResponse(reports=reports, aggregate=agg)

    @app.post("/ablate", response_model=sch.AblateResponse)
    def ablate(request: sch.AblateRequest):
        results = pipeline.run_ablation(request.config)
        run_dir = pipeline.run_directory(request.config)
        reports = {mode: _run_report(result, request.config.seed)
                   for mode, result in results.items()}
        return sch.AblateResponse(run_dir=str(run_dir),
                                  comparison_path=str(run_dir / "ablation.csv"),
                                  reports=reports)

    @app.post("/sps/compare", response_model=sch.SpsCompareResponse)
    def sps_compare(request: sch.SpsCompareRequest):
        results = pipeline.run_sps_comparison(request.config)
        run_dir = pipeline.run_directory(request.config)
        reports = {mode: _run_report(result, request.config.seed)
                   for mode, result in results.items()}
        return sch.SpsCompareResponse(
            run_dir=str(run_dir),
            comparison_path=str(run_dir / "sps_comparison.csv"),
            reports=reports)

    @app.post("/auroc", response_model=sch.AurocResponse)
    def auroc(request: sch.AurocRequest):
        config = request.config
        dataset = load_dataset(config.dataset)
        bundle, _ = _load_bundle(config, request.run_dir, dataset)
        value = pipeline.detector_auroc(bundle, dataset, split=request.split)
        ood = set(bundle.label_space.ood_labels)
        labeled = [s for s in dataset.split(request.split) if s.label is not None]
        n_ood = sum(1 for s in labeled if s.label in ood)
        return sch.AurocResponse(auroc=value, split=request.split,
                                 n_id=len(labeled) - n_ood, n_ood=n_ood)

    return app


app = create_app()
