"""End-to-end orchestration: train, calibrate, classify, evaluate, ablate.

Stage one fits the feature extractor, subspace, and score normalization;
stage two routes each test sample to the ID classifier or the generative
labeler according to the routing mode. Every run writes a self-contained
artifact directory named by config hash and seed.
"""

from __future__ import annotations

import json
import time
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import classifier as clf
from . import detector as det
from . import evaluation as ev
from .config import BackendKind, RoutingMode, RunConfig, describe_config
from .errors import PipelineStageError, SingleClassInput
from .gateway import (
    LlmGateway,
    MockKeywordBackend,
    MockOracleBackend,
    RemoteBackend,
)
from .ingest.dataset import Dataset, LabelSpace, load_dataset
from .ingest.pcap import PacketRecord
from .ingest.tokenize import record_from_sample
from .neural import checkpoint as ckpt
from .neural.encoder import EncoderLayerParams, EncoderParams
from .neural.lstm import FeatureExtractor, LstmParams, extract_features
from .neural.training import (
    ClassifierTrainConfig,
    ExtractorTrainConfig,
    train_classifier,
    train_feature_extractor,
)
from .records import ROUTE_ID, ROUTE_OOD, PredictionRecord
from .sps import SpsMode, template_hashes

_LAYER_FIELDS = ("wq", "wk", "wv", "w1", "b1", "w2", "b2")
_GATES = ("i", "f", "o", "c")


@dataclass
class TrainedBundle:
    """Everything both stages need at inference time."""

    extractor: FeatureExtractor
    encoder: EncoderParams
    head: clf.ClassifierHead
    label_space: LabelSpace
    subspace: det.SubspaceModel | None = None
    hybrid: det.HybridScoreConfig | None = None

    def detector(self) -> det.DetectorBundle:
        return det.DetectorBundle(extractor=self.extractor, subspace=self.subspace,
                                  encoder=self.encoder, config=self.hybrid)


@dataclass
class PipelineResult:
    report: ev.MetricReport
    matrix: ev.ConfusionMatrix
    predictions: list[PredictionRecord]
    run_dir: Path
    files: dict[str, Path]
    timings: dict[str, float]
    auroc: float | None = None


class StageClock:
    def __init__(self):
        self.timings: dict[str, float] = {}

    @contextmanager
    def stage(self, name: str):
        start = time.perf_counter()
        try:
            yield
        except PipelineStageError:
            raise
        except Exception as exc:
            raise PipelineStageError(name, exc) from exc
        finally:
            self.timings[name] = self.timings.get(name, 0.0) + (
                time.perf_counter() - start)


def _tokens_matrix(samples) -> np.ndarray:
    return np.stack([np.asarray(s.tokens, dtype=np.int64) for s in samples])


def build_backend(config: RunConfig, dataset: Dataset):
    if config.backend == BackendKind.MOCK_ORACLE:
        gold = {s.id: s.label for s in dataset.samples if s.label is not None}
        return MockOracleBackend(gold)
    if config.backend == BackendKind.MOCK_KEYWORD:
        return MockKeywordBackend(config.keyword_table)
    return RemoteBackend()


def _stub_record(sample) -> PacketRecord:
    """Fallback when token bytes do not decode as an IP packet."""
    tokens = np.asarray(sample.tokens)
    raw = tokens[tokens != 256].astype(np.uint8).tobytes()
    return PacketRecord(timestamp=0.0, link_type="raw-ip", raw_bytes=raw,
                        ip_version=0, total_length=len(raw), ttl=0,
                        transport="other", payload_length=len(raw))


def record_or_stub(sample) -> PacketRecord:
    return record_from_sample(sample) or _stub_record(sample)


def resolve_label_space(dataset: Dataset, config: RunConfig) -> LabelSpace:
    return dataset.label_space.with_extended(config.extended_labels)


def train_bundle(dataset: Dataset, config: RunConfig,
                 clock: StageClock | None = None) -> TrainedBundle:
    clock = clock or StageClock()
    label_space = resolve_label_space(dataset, config)
    with clock.stage("train-extractor"):
        extractor, _ = train_feature_extractor(dataset, ExtractorTrainConfig(
            d=config.d, d_in=config.d_in, epochs=config.extractor_epochs,
            lr=config.extractor_lr, batch_size=config.batch_size,
            seed=config.seed))
    with clock.stage("train-classifier"):
        encoder, (head_w, head_b, labels), _ = train_classifier(
            dataset, ClassifierTrainConfig(
                d=config.d, n_layers=config.layers, heads=config.heads,
                ff_mult=config.ff_mult, epochs=config.classifier_epochs,
                lr=config.classifier_lr, weight_decay=config.weight_decay,
                batch_size=config.batch_size, seed=config.seed))
    head = clf.ClassifierHead(w=head_w, b=head_b, labels=tuple(labels))
    return TrainedBundle(extractor=extractor, encoder=encoder, head=head,
                         label_space=label_space)


def calibrate_bundle(bundle: TrainedBundle, dataset: Dataset, config: RunConfig,
                     clock: StageClock | None = None) -> TrainedBundle:
    clock = clock or StageClock()
    id_set = set(bundle.label_space.id_labels)
    with clock.stage("fit-subspace"):
        train_tokens = _tokens_matrix(dataset.split("train"))
        features = extract_features(bundle.extractor, train_tokens)
        mu, sigma = det.fit_statistics(features)
        bundle.subspace = det.fit_subspace(features, mu, sigma, config.gamma)
    with clock.stage("calibrate"):
        id_valid = [s for s in dataset.split("valid") if s.label in id_set]
        valid_tokens = _tokens_matrix(id_valid)
        valid_features = extract_features(bundle.extractor, valid_tokens)
        s1 = det.residual_scores(bundle.subspace, valid_features)
        s2 = det.smoothness_scores(bundle.encoder, valid_tokens)
        bundle.hybrid = det.calibrate(s1, s2, config.alpha, config.delta,
                                      config.percentile_low,
                                      config.percentile_high)
    return bundle


def classify_one(bundle: TrainedBundle, sample, record: PacketRecord | None,
                 config: RunConfig, gateway: LlmGateway) -> PredictionRecord:
    """Algorithm stage two for a single sample under the routing mode."""
    breakdown = det.detect(bundle.detector(), sample)
    return _route_sample(bundle, sample, record, config, gateway, breakdown)


def _route_sample(bundle, sample, record, config, gateway, breakdown,
                  distribution=None) -> PredictionRecord:
    mode = config.routing_mode
    route = ROUTE_OOD if breakdown.is_ood else ROUTE_ID
    use_llm = (mode == RoutingMode.ALL_LLM
               or (mode == RoutingMode.ADAPTIVE and breakdown.is_ood))
    if use_llm:
        route_hint = route if mode == RoutingMode.ALL_LLM else None
        record = record or record_or_stub(sample)
        prediction = gateway.classify_ood(
            sample, record, SpsMode(config.sps_mode), bundle.label_space,
            strict_source=config.strict_candidates, route_hint=route_hint,
            temperature=config.temperature, top_p=config.top_p,
            max_tokens=config.max_tokens, breakdown=breakdown,
            template_dir=config.template_dir)
        prediction.route = route
        return prediction
    if distribution is None:
        distribution = clf.predict_distribution(bundle.encoder, bundle.head, sample)
    label, _ = clf.label_from_distribution(bundle.head, distribution)
    dist = {name: float(p) for name, p in zip(bundle.head.labels, distribution)}
    return PredictionRecord(sample_id=sample.id, route=route, label=label,
                            breakdown=breakdown, distribution=dist)


def classify_split(bundle: TrainedBundle, dataset: Dataset, split: str,
                   config: RunConfig, gateway: LlmGateway) -> list[PredictionRecord]:
    """Batch stage two over one split; deterministic sample order."""
    samples = dataset.split(split)
    if not samples:
        return []
    tokens = _tokens_matrix(samples)
    breakdowns = det.detect_batch(bundle.detector(), tokens)
    distributions = clf.predict_distributions(bundle.encoder, bundle.head, tokens)
    predictions = []
    for sample, breakdown, dist in zip(samples, breakdowns, distributions):
        predictions.append(_route_sample(bundle, sample, None, config, gateway,
                                         breakdown, distribution=dist))
    return predictions


def evaluate_predictions(dataset: Dataset, split: str,
                         predictions: list[PredictionRecord],
                         label_space: LabelSpace, seed: int | None = None):
    by_id = {p.sample_id: p for p in predictions}
    gold, pred = [], []
    for sample in dataset.split(split):
        if sample.label is None or sample.id not in by_id:
            continue
        gold.append(sample.label)
        pred.append(by_id[sample.id].label)
    order = [*label_space.id_labels, *label_space.ood_labels]
    matrix = ev.confusion(gold, pred, label_order=order)
    report = ev.compute_metrics(matrix, seed=seed)
    return report, matrix


def auroc_from_scores(scores, is_ood_flags) -> float:
    """Rank-based AUROC with midranks for ties; OOD is the positive class."""
    scores = np.asarray(scores, dtype=np.float64)
    flags = np.asarray(is_ood_flags, dtype=bool)
    n_pos = int(flags.sum())
    n_neg = int((~flags).sum())
    if n_pos == 0 or n_neg == 0:
        raise SingleClassInput("AUROC needs both ID and OOD samples")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(scores.size, dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < scores.size:
        jx = i
        while jx + 1 < scores.size and sorted_scores[jx + 1] == sorted_scores[i]:
            jx += 1
        ranks[order[i:jx + 1]] = (i + jx) / 2.0 + 1.0  # midrank, 1-based
        i = jx + 1
    u = ranks[flags].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def detector_auroc(bundle: TrainedBundle, dataset: Dataset,
                   split: str = "valid") -> float:
    samples = [s for s in dataset.split(split) if s.label is not None]
    tokens = _tokens_matrix(samples)
    breakdowns = det.detect_batch(bundle.detector(), tokens)
    ood_set = set(bundle.label_space.ood_labels)
    flags = [s.label in ood_set for s in samples]
    return auroc_from_scores([b.hybrid for b in breakdowns], flags)


# --- checkpoint glue --------------------------------------------------------


def save_classifier_checkpoint(path, bundle: TrainedBundle, config: RunConfig):
    arrays = {"embedding": bundle.encoder.embedding}
    for l, layer in enumerate(bundle.encoder.layers):
        for name in _LAYER_FIELDS:
            arrays[f"layer{l}.{name}"] = getattr(layer, name)
    arrays["head_w"] = bundle.head.w
    arrays["head_b"] = bundle.head.b
    meta = {"labels": list(bundle.head.labels), "heads": bundle.encoder.heads,
            "layers": bundle.encoder.n_layers, "max_len": bundle.encoder.max_len,
            "seed": config.seed, **bundle.encoder.meta}
    ckpt.save_checkpoint(path, "classifier", arrays, meta)


def load_classifier_checkpoint(path):
    loaded = ckpt.load_checkpoint(path)
    meta = loaded.meta
    layers = [EncoderLayerParams(**{name: loaded.arrays[f"layer{l}.{name}"]
                                    for name in _LAYER_FIELDS})
              for l in range(meta["layers"])]
    encoder = EncoderParams(embedding=loaded.arrays["embedding"], layers=layers,
                            heads=meta["heads"], max_len=meta["max_len"],
                            meta=meta)
    head = clf.ClassifierHead(w=loaded.arrays["head_w"],
                              b=loaded.arrays["head_b"],
                              labels=tuple(meta["labels"]))
    return encoder, head


def save_detector_checkpoint(path, bundle: TrainedBundle, config: RunConfig):
    arrays = {"embedding": bundle.extractor.embedding}
    for g in _GATES:
        arrays[f"w_{g}"] = getattr(bundle.extractor.cell, f"w_{g}")
        arrays[f"b_{g}"] = getattr(bundle.extractor.cell, f"b_{g}")
    meta = {"seed": config.seed, "calibrated": False, **bundle.extractor.meta}
    if bundle.subspace is not None and bundle.hybrid is not None:
        arrays["subspace.mu"] = bundle.subspace.mu
        arrays["subspace.sigma"] = bundle.subspace.sigma
        arrays["subspace.eigenvalues"] = bundle.subspace.eigenvalues
        arrays["subspace.eigenvectors"] = bundle.subspace.eigenvectors
        meta.update({
            "calibrated": True,
            "k": bundle.subspace.k,
            "gamma": bundle.subspace.gamma,
            "alpha": bundle.hybrid.alpha,
            "delta": bundle.hybrid.delta,
            "residual_bounds": list(bundle.hybrid.residual_bounds),
            "smoothness_bounds": list(bundle.hybrid.smoothness_bounds),
        })
    ckpt.save_checkpoint(path, "detector", arrays, meta)


def load_detector_checkpoint(path):
    """Returns (FeatureExtractor, SubspaceModel|None, HybridScoreConfig|None)."""
    loaded = ckpt.load_checkpoint(path)
    meta = loaded.meta
    cell = LstmParams(**{f"w_{g}": loaded.arrays[f"w_{g}"] for g in _GATES},
                      **{f"b_{g}": loaded.arrays[f"b_{g}"] for g in _GATES})
    extractor = FeatureExtractor(embedding=loaded.arrays["embedding"], cell=cell,
                                 meta=meta)
    subspace = hybrid = None
    if meta.get("calibrated"):
        eigenvectors = loaded.arrays["subspace.eigenvectors"].astype(np.float64)
        k = int(meta["k"])
        residual = eigenvectors[:, k:]
        subspace = det.SubspaceModel(
            mu=loaded.arrays["subspace.mu"].astype(np.float64),
            sigma=loaded.arrays["subspace.sigma"].astype(np.float64),
            eigenvalues=loaded.arrays["subspace.eigenvalues"].astype(np.float64),
            eigenvectors=eigenvectors, k=k, gamma=float(meta["gamma"]),
            residual_projector=residual @ residual.T)
        hybrid = det.HybridScoreConfig(
            alpha=float(meta["alpha"]), delta=float(meta["delta"]),
            residual_bounds=tuple(meta["residual_bounds"]),
            smoothness_bounds=tuple(meta["smoothness_bounds"]))
    return extractor, subspace, hybrid


def load_bundle(run_dir, label_space: LabelSpace) -> TrainedBundle:
    from .errors import NotFitted

    run_dir = Path(run_dir)
    classifier_path = run_dir / "checkpoints" / "classifier.ckpt"
    detector_path = run_dir / "checkpoints" / "detector.ckpt"
    if not classifier_path.exists() or not detector_path.exists():
        raise NotFitted(f"no trained checkpoints under {run_dir}; run train first")
    encoder, head = load_classifier_checkpoint(classifier_path)
    extractor, subspace, hybrid = load_detector_checkpoint(detector_path)
    return TrainedBundle(extractor=extractor, encoder=encoder, head=head,
                         label_space=label_space, subspace=subspace,
                         hybrid=hybrid)


# --- run orchestration ------------------------------------------------------


def run_directory(config: RunConfig) -> Path:
    return Path(config.out_dir) / f"{config.config_hash()}-seed{config.seed}"


def write_run_config(run_dir: Path, config: RunConfig) -> None:
    run_dir.mkdir(parents=True, exist_ok=True)
    payload = describe_config(config)
    payload["template_hashes"] = template_hashes()
    (run_dir / "config.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_predictions(path, predictions: list[PredictionRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in predictions:
            fh.write(json.dumps(p.to_json()) + "\n")


def load_predictions(path) -> list[PredictionRecord]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(PredictionRecord.from_json(json.loads(line)))
    return out


def _load_dataset_for(config: RunConfig) -> Dataset:
    if not config.dataset:
        raise ValueError("config.dataset must point at a dataset JSONL file")
    return load_dataset(config.dataset)


def _classify_and_report(bundle, dataset, config, out_dir: Path, clock,
                         split: str = "test"):
    out_dir.mkdir(parents=True, exist_ok=True)
    gateway = LlmGateway(build_backend(config, dataset),
                         in_flight_cap=config.in_flight_cap,
                         audit_path=str(out_dir / "prompts.jsonl"))
    (out_dir / "prompts.jsonl").write_text("", encoding="utf-8")
    with clock.stage("classify"):
        predictions = classify_split(bundle, dataset, split, config, gateway)
    with clock.stage("evaluate"):
        report, matrix = evaluate_predictions(dataset, split, predictions,
                                              bundle.label_space, seed=config.seed)
        write_predictions(out_dir / "predictions.jsonl", predictions)
        files = ev.emit_report(report, matrix, str(out_dir) + "/")
        files["predictions"] = out_dir / "predictions.jsonl"
        files["prompts"] = out_dir / "prompts.jsonl"
    return predictions, report, matrix, files


def run_pipeline(config: RunConfig, dataset: Dataset | None = None,
                 bundle: TrainedBundle | None = None) -> PipelineResult:
    """Full protocol: train, calibrate, classify the test split, evaluate."""
    clock = StageClock()
    if dataset is None:
        with clock.stage("load-dataset"):
            dataset = _load_dataset_for(config)
    run_dir = run_directory(config)
    write_run_config(run_dir, config)
    if bundle is None:
        bundle = train_bundle(dataset, config, clock)
        calibrate_bundle(bundle, dataset, config, clock)
        with clock.stage("checkpoint"):
            ckpt_dir = run_dir / "checkpoints"
            ckpt_dir.mkdir(parents=True, exist_ok=True)
            save_classifier_checkpoint(ckpt_dir / "classifier.ckpt", bundle, config)
            save_detector_checkpoint(ckpt_dir / "detector.ckpt", bundle, config)
    predictions, report, matrix, files = _classify_and_report(
        bundle, dataset, config, run_dir, clock)
    with clock.stage("auroc"):
        try:
            auroc = detector_auroc(bundle, dataset, split="test")
        except SingleClassInput:
            auroc = None
    return PipelineResult(report=report, matrix=matrix, predictions=predictions,
                          run_dir=run_dir, files=files, timings=clock.timings,
                          auroc=auroc)


def run_ablation(config: RunConfig,
                 dataset: Dataset | None = None) -> dict[str, PipelineResult]:
    """One shared training pass, then one evaluation per routing mode."""
    clock = StageClock()
    if dataset is None:
        with clock.stage("load-dataset"):
            dataset = _load_dataset_for(config)
    run_dir = run_directory(config)
    write_run_config(run_dir, config)
    bundle = train_bundle(dataset, config, clock)
    calibrate_bundle(bundle, dataset, config, clock)
    ckpt_dir = run_dir / "checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    save_classifier_checkpoint(ckpt_dir / "classifier.ckpt", bundle, config)
    save_detector_checkpoint(ckpt_dir / "detector.ckpt", bundle, config)

    results: dict[str, PipelineResult] = {}
    rows = [["mode", "macro_precision", "macro_f1", "micro_f1", "recall"]]
    for mode in (RoutingMode.ADAPTIVE, RoutingMode.ALL_ID, RoutingMode.ALL_LLM):
        mode_config = config.model_copy(update={"routing_mode": mode})
        mode_clock = StageClock()
        mode_dir = run_dir / f"mode-{mode.value}"
        predictions, report, matrix, files = _classify_and_report(
            bundle, dataset, mode_config, mode_dir, mode_clock)
        timings = {**clock.timings, **mode_clock.timings}
        try:
            auroc = detector_auroc(bundle, dataset, split="test")
        except SingleClassInput:
            auroc = None
        results[mode.value] = PipelineResult(
            report=report, matrix=matrix, predictions=predictions,
            run_dir=mode_dir, files=files, timings=timings, auroc=auroc)
        rows.append([mode.value, f"{report.macro_precision:.6f}",
                     f"{report.macro_f1:.6f}", f"{report.micro_f1:.6f}",
                     f"{report.recall:.6f}"])
    comparison = run_dir / "ablation.csv"
    comparison.write_text("\n".join(",".join(row) for row in rows) + "\n",
                          encoding="utf-8")
    return results


def run_sps_comparison(config: RunConfig,
                       dataset: Dataset | None = None) -> dict[str, PipelineResult]:
    """One shared training pass, then one evaluation per prompt mode."""
    clock = StageClock()
    if dataset is None:
        with clock.stage("load-dataset"):
            dataset = _load_dataset_for(config)
    run_dir = run_directory(config)
    write_run_config(run_dir, config)
    bundle = train_bundle(dataset, config, clock)
    calibrate_bundle(bundle, dataset, config, clock)

    results: dict[str, PipelineResult] = {}
    rows = [["sps_mode", "macro_precision", "macro_f1", "micro_f1", "recall"]]
    for mode in (SpsMode.STRICT, SpsMode.COMPLETE, SpsMode.EXTENDED):
        mode_config = config.model_copy(update={"sps_mode": mode.value})
        mode_clock = StageClock()
        mode_dir = run_dir / f"sps-{mode.value}"
        predictions, report, matrix, files = _classify_and_report(
            bundle, dataset, mode_config, mode_dir, mode_clock)
        results[mode.value] = PipelineResult(
            report=report, matrix=matrix, predictions=predictions,
            run_dir=mode_dir, files=files,
            timings={**clock.timings, **mode_clock.timings})
        rows.append([mode.value, f"{report.macro_precision:.6f}",
                     f"{report.macro_f1:.6f}", f"{report.micro_f1:.6f}",
                     f"{report.recall:.6f}"])
    comparison = run_dir / "sps_comparison.csv"
    comparison.write_text("\n".join(",".join(row) for row in rows) + "\n",
                          encoding="utf-8")
    return results


def run_multi(config: RunConfig, runs: int,
              dataset: Dataset | None = None):
    """Repeat the pipeline over consecutive seeds and aggregate the metrics."""
    if runs < 1:
        raise ValueError("runs must be >= 1")
    results = []
    for offset in range(runs):
        run_config = config.model_copy(update={"seed": config.seed + offset})
        results.append(run_pipeline(run_config, dataset=dataset))
    aggregate = ev.aggregate_runs([r.report for r in results])
    return results, aggregate
