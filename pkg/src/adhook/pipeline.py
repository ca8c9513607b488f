"""Stage orchestration over a persistent run directory.

Each stage reads its predecessors' artifacts from the run directory and
writes its own. Per-asset failures are isolated: the failing asset is
recorded in failures.jsonl and the batch continues. All artifacts are
byte-deterministic for a given config; wall-clock metadata lives only in
run_meta.json.
"""

from __future__ import annotations

import json
import shutil
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import acoustic as acoustic_mod
from . import ingest, mllm, sampler, svg, topics as topics_mod
from .config import RunConfig, effective_config_json
from .predictor import (
    FeatureSchema,
    GBDTModel,
    ZeroVariance,
    assemble_features,
    build_schema,
    eval_metrics,
    feature_importance,
    fit_gbdt,
    junk_baseline_features,
    pdp,
    predict,
    split_by_id_hash,
)

STAGE_ORDER = ("ingest", "extract", "insights", "topics", "train", "explain")


class MissingPredecessor(Exception):
    def __init__(self, stage: str):
        super().__init__(f"stage {stage!r} has not produced its artifacts yet")
        self.stage = stage


class StageFailure(Exception):
    pass


@dataclass
class FailureRecord:
    stage: str
    asset_id: str
    error: str
    message: str

    def to_json(self) -> str:
        return json.dumps(
            {
                "stage": self.stage,
                "asset_id": self.asset_id,
                "error": self.error,
                "message": self.message,
            },
            sort_keys=True,
        )


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8", newline="\n")


def _write_lines(path: Path, lines: list[str]) -> None:
    _write_text(path, "".join(line + "\n" for line in lines))


def record_failures(run_dir: Path, stage: str, failures: list[FailureRecord]) -> None:
    """Replace this stage's failure records, keeping other stages' intact."""
    path = run_dir / "failures.jsonl"
    existing: list[dict] = []
    if path.is_file():
        existing = [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines() if line]
    kept = [rec for rec in existing if rec.get("stage") != stage]
    kept.extend(json.loads(f.to_json()) for f in failures)
    kept.sort(key=lambda rec: (STAGE_ORDER.index(rec["stage"]), rec["asset_id"]))
    _write_lines(path, [json.dumps(rec, sort_keys=True) for rec in kept])


def _require(run_dir: Path, filename: str, producer: str) -> Path:
    path = run_dir / filename
    if not path.exists():
        raise MissingPredecessor(producer)
    return path


def _float(value: float) -> float:
    return float(value)


# ---------------------------------------------------------------------------
# ingest


def stage_ingest(cfg: RunConfig, run_dir: Path) -> dict:
    """Load and normalize the dataset manifest into the run directory."""
    if not cfg.manifest_path:
        raise StageFailure("config has no manifest_path (run synth first or set one)")
    assets = ingest.load_manifest(cfg.manifest_path)
    records = [asset.to_record() for asset in assets]
    _write_text(run_dir / "manifest.json", json.dumps(records, sort_keys=True, indent=1) + "\n")
    _write_text(run_dir / "config.json", effective_config_json(cfg))
    record_failures(run_dir, "ingest", [])
    return {"assets": len(assets)}


def _load_assets(run_dir: Path) -> list[ingest.VideoAsset]:
    path = _require(run_dir, "manifest.json", "ingest")
    records = json.loads(path.read_text(encoding="utf-8"))
    assets = []
    for record in records:
        assets.append(
            ingest.VideoAsset(
                id=record["id"],
                source=record["source"],
                fps=record["fps"],
                duration_s=record.get("duration_s", 0.0),
                title_text=record.get("title_text", ""),
                body_text=record.get("body_text", ""),
                vertical=ingest.Vertical(record.get("vertical", "Other")),
                cpi=record.get("cpi"),
                ad_context=record.get("ad_context", {}),
            )
        )
    return assets


# ---------------------------------------------------------------------------
# extract


def _extract_one(cfg: RunConfig, asset: ingest.VideoAsset, run_dir: Path) -> dict:
    decoder = ingest.DecoderConfig(
        command_template=cfg.decoder["command_template"],
        scratch_dir=cfg.decoder["scratch_dir"],
    )
    frames, audio = ingest.decode_asset(asset, decoder)
    try:
        transcript = mllm.transcribe(audio, cfg.asr_config())
    except mllm.ProviderUnavailable:
        transcript = ""
    hook = ingest.extract_hook(
        frames,
        audio,
        texts=(asset.title_text, asset.body_text),
        hook_secs=cfg.hook_secs,
        asset_id=asset.id,
        transcript=transcript,
    )

    s = cfg.sampler
    if s["strategy"] == "uniform":
        m = min(s["m"], len(hook.frames))
        sample = sampler.uniform_random_sample(hook.frames, m, s["seed"], asset_id=asset.id)
    else:
        sample = sampler.keyframe_select(
            hook.frames, s["alpha"], s["delta_t"], s["max_frames"], asset_id=asset.id
        )

    features = acoustic_mod.extract_acoustic(hook, cfg.acoustic_config())
    junk = junk_baseline_features(hook.frames)

    frames_dir = run_dir / "frames" / asset.id
    if frames_dir.exists():
        shutil.rmtree(frames_dir)
    frames_dir.mkdir(parents=True, exist_ok=True)
    for index in sample.indices:
        png = mllm.encode_frame_png(hook.frames[index])
        (frames_dir / f"frame_{index:06d}.png").write_bytes(png)

    return {
        "sample": sample.to_json(),
        "acoustic": json.dumps(
            {"asset_id": asset.id, **json.loads(features.to_json())}, sort_keys=True
        ),
        "junk": json.dumps(
            {"asset_id": asset.id, "values": [float(v) for v in junk]}, sort_keys=True
        ),
        "transcript": json.dumps(
            {"asset_id": asset.id, "transcript": transcript}, sort_keys=True
        ),
    }


def stage_extract(cfg: RunConfig, run_dir: Path, workers: int = 1) -> dict:
    """Decode, trim, sample, and featurize every asset (parallel per asset)."""
    assets = _load_assets(run_dir)
    results: dict[str, dict] = {}
    failures: list[FailureRecord] = []

    def work(asset: ingest.VideoAsset) -> tuple[str, Optional[dict], Optional[Exception]]:
        try:
            return asset.id, _extract_one(cfg, asset, run_dir), None
        except Exception as exc:  # per-asset isolation
            return asset.id, None, exc

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(work, assets))
    else:
        outcomes = [work(asset) for asset in assets]

    for asset_id, result, exc in outcomes:
        if exc is not None:
            failures.append(
                FailureRecord("extract", asset_id, type(exc).__name__, str(exc))
            )
        else:
            results[asset_id] = result

    ordered = [a.id for a in assets if a.id in results]
    _write_lines(run_dir / "samples.jsonl", [results[a]["sample"] for a in ordered])
    _write_lines(run_dir / "acoustic.jsonl", [results[a]["acoustic"] for a in ordered])
    _write_lines(run_dir / "junk.jsonl", [results[a]["junk"] for a in ordered])
    _write_lines(run_dir / "transcripts.jsonl", [results[a]["transcript"] for a in ordered])
    record_failures(run_dir, "extract", failures)
    return {"extracted": len(ordered), "failed": len(failures)}


# ---------------------------------------------------------------------------
# insights


def stage_insights(
    cfg: RunConfig,
    run_dir: Path,
    workers: int = 1,
    transport: Optional[Callable[[dict], str]] = None,
) -> dict:
    """Query the methodology backend for every sampled asset."""
    assets = {a.id: a for a in _load_assets(run_dir)}
    samples_path = _require(run_dir, "samples.jsonl", "extract")
    samples = [
        sampler.FrameSample.from_json(line)
        for line in samples_path.read_text(encoding="utf-8").splitlines()
        if line
    ]
    backend = cfg.backend_config()
    failures: list[FailureRecord] = []
    results: dict[str, str] = {}

    def work(sample: sampler.FrameSample) -> tuple[str, Optional[str], Optional[Exception]]:
        asset = assets[sample.asset_id]
        try:
            frames = _load_sampled_frames(run_dir, sample)
            prompt = mllm.build_prompt(asset.title_text, asset.body_text)
            insight = mllm.extract_insight(
                backend, prompt, frames, asset.id, transport=transport
            )
            return sample.asset_id, insight.to_json(), None
        except Exception as exc:
            return sample.asset_id, None, exc

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(work, samples))
    else:
        outcomes = [work(sample) for sample in samples]

    for asset_id, line, exc in outcomes:
        if exc is not None:
            failures.append(FailureRecord("insights", asset_id, type(exc).__name__, str(exc)))
        else:
            results[asset_id] = line

    ordered = [s.asset_id for s in samples if s.asset_id in results]
    _write_lines(run_dir / "insights.jsonl", [results[a] for a in ordered])
    record_failures(run_dir, "insights", failures)
    return {"insights": len(ordered), "failed": len(failures)}


def _load_sampled_frames(run_dir: Path, sample: sampler.FrameSample) -> list[ingest.Frame]:
    from PIL import Image

    frames = []
    for index in sample.indices:
        path = run_dir / "frames" / sample.asset_id / f"frame_{index:06d}.png"
        with Image.open(path) as image:
            pixels = np.asarray(image.convert("RGB"), dtype=np.uint8)
        frames.append(
            ingest.Frame(
                width=pixels.shape[1],
                height=pixels.shape[0],
                pixels=pixels,
                timestamp_s=float(index),
            )
        )
    return frames


# ---------------------------------------------------------------------------
# topics


def _load_insights(run_dir: Path) -> list[mllm.MethodologyInsight]:
    path = _require(run_dir, "insights.jsonl", "insights")
    return [
        mllm.MethodologyInsight.from_json(line)
        for line in path.read_text(encoding="utf-8").splitlines()
        if line
    ]


def insight_document(insight: mllm.MethodologyInsight) -> str:
    """The text a topic model sees for one insight."""
    return f"{insight.methodology} {insight.rationale}"


def stage_topics(cfg: RunConfig, run_dir: Path) -> dict:
    """Fit the topic model over all insight documents."""
    insights = _load_insights(run_dir)
    if not insights:
        raise StageFailure("no insights to model")
    docs = [insight_document(i) for i in insights]
    tcfg = cfg.topic_config()
    d_out = min(tcfg.d_out, len(docs))
    candidates = tuple(k for k in tcfg.k_candidates if k <= len(docs)) or (min(len(docs), 2),)
    model = topics_mod.fit_topic_stage(
        docs,
        topics_mod.TopicConfig(
            embed=tcfg.embed, d_out=d_out, k_candidates=candidates, seed=tcfg.seed
        ),
    )
    payload = json.loads(model.to_json())
    payload["doc_asset_ids"] = [i.asset_id for i in insights]
    _write_text(run_dir / "topic_model.json", json.dumps(payload, sort_keys=True) + "\n")
    record_failures(run_dir, "topics", [])
    return {"documents": len(docs), "k": model.k}


# ---------------------------------------------------------------------------
# train


def _load_topic_assignments(run_dir: Path) -> tuple[dict[str, int], int]:
    path = _require(run_dir, "topic_model.json", "topics")
    payload = json.loads(path.read_text(encoding="utf-8"))
    mapping = dict(zip(payload["doc_asset_ids"], payload["assignments"]))
    return mapping, payload["k"]


def _load_jsonl_by_id(path: Path) -> dict[str, dict]:
    out = {}
    for line in path.read_text(encoding="utf-8").splitlines():
        if line:
            record = json.loads(line)
            out[record["asset_id"]] = record
    return out


def stage_train(cfg: RunConfig, run_dir: Path) -> dict:
    """Assemble the feature matrix, fit the regressor, report test metrics."""
    assets = _load_assets(run_dir)
    acoustic_path = _require(run_dir, "acoustic.jsonl", "extract")
    junk_path = _require(run_dir, "junk.jsonl", "extract")
    _require(run_dir, "insights.jsonl", "insights")
    topic_ids, topic_count = _load_topic_assignments(run_dir)
    acoustic_records = _load_jsonl_by_id(acoustic_path)
    junk_records = _load_jsonl_by_id(junk_path)

    include_junk = cfg.predictor["include_junk"]
    usable = [
        a
        for a in assets
        if a.cpi is not None
        and a.id in topic_ids
        and a.id in acoustic_records
        and (not include_junk or a.id in junk_records)
    ]
    if len(usable) < 2:
        raise StageFailure(f"only {len(usable)} labeled assets available for training")

    asset_ids = [a.id for a in usable]
    train_idx, test_idx = split_by_id_hash(
        asset_ids, cfg.predictor["split_seed"], cfg.predictor["test_fraction"]
    )
    if not train_idx:
        raise StageFailure("train split is empty")

    acoustics = {
        aid: acoustic_mod.AcousticFeatures.from_json(json.dumps(rec))
        for aid, rec in acoustic_records.items()
    }
    ad_contexts = {a.id: a.ad_context for a in usable}
    junk = (
        {aid: np.array(rec["values"]) for aid, rec in junk_records.items()}
        if include_junk
        else None
    )

    schema = build_schema(
        topic_count,
        [usable[i].ad_context for i in train_idx],
        include_junk,
    )
    X, mask, records = assemble_features(schema, asset_ids, topic_ids, acoustics, ad_contexts, junk)
    y = np.array([usable_asset.cpi for usable_asset in usable], dtype=np.float64)
    if cfg.predictor["log1p_target"]:
        y = np.log1p(y)

    params = cfg.gbdt_params()
    model = fit_gbdt(X[train_idx], y[train_idx], params, mask[train_idx], schema_id=schema.schema_id)

    metrics: dict[str, object] = {
        "n_train": len(train_idx),
        "n_test": len(test_idx),
        "seed": cfg.predictor["split_seed"],
    }
    if len(test_idx) >= 2:
        y_hat = predict(model, X[test_idx], mask[test_idx])
        try:
            metrics.update(eval_metrics(y[test_idx], y_hat))
        except ZeroVariance:
            metrics.update({"r2": None, "mse": _float(((y[test_idx] - y_hat) ** 2).mean())})
    else:
        metrics.update({"r2": None, "mse": None})

    model_payload = json.loads(model.to_json())
    model_payload["schema"] = schema.to_payload()
    model_payload["log1p_target"] = cfg.predictor["log1p_target"]
    model_payload["train_asset_ids"] = [asset_ids[i] for i in train_idx]
    _write_text(run_dir / "model.json", json.dumps(model_payload, sort_keys=True) + "\n")
    _write_lines(run_dir / "features.jsonl", [record.to_json() for record in records])
    _write_text(run_dir / "metrics.json", json.dumps(metrics, sort_keys=True, indent=1) + "\n")
    record_failures(run_dir, "train", [])
    return {"n_train": len(train_idx), "n_test": len(test_idx)}


# ---------------------------------------------------------------------------
# explain


def _sanitize(name: str) -> str:
    return "".join(ch if ch.isalnum() else "_" for ch in name)


def stage_explain(cfg: RunConfig, run_dir: Path) -> dict:
    """Emit gain importances and per-feature partial-dependence curves."""
    model_path = _require(run_dir, "model.json", "train")
    features_path = _require(run_dir, "features.jsonl", "train")
    payload = json.loads(model_path.read_text(encoding="utf-8"))
    model = GBDTModel.from_json(json.dumps(payload))
    schema = FeatureSchema.from_payload(payload["schema"])
    train_ids = set(payload["train_asset_ids"])

    rows = []
    masks = []
    for line in features_path.read_text(encoding="utf-8").splitlines():
        if not line:
            continue
        record = json.loads(line)
        if record["asset_id"] in train_ids:
            rows.append(record["values"])
            masks.append(record["mask"])
    X_bg = np.array(rows, dtype=np.float64)
    mask_bg = np.array(masks, dtype=bool)

    names = schema.column_names
    importance = feature_importance(model)
    importance_lines = ["feature,score"]
    importance_lines += [f"{name},{_float(score)!r}" for name, score in zip(names, importance)]
    _write_lines(run_dir / "importance.csv", importance_lines)

    pdp_dir = run_dir / "pdp"
    pdp_dir.mkdir(parents=True, exist_ok=True)
    for old in list(pdp_dir.glob("*.csv")) + list(pdp_dir.glob("*.svg")):
        old.unlink()
    for index, name in enumerate(names):
        curve = pdp(model, X_bg, index, cfg.predictor["pdp_grid"], mask_bg)
        stem = f"{index:03d}_{_sanitize(name)}"
        lines = ["grid,value"]
        lines += [
            f"{_float(g)!r},{_float(v)!r}" for g, v in zip(curve.grid, curve.values)
        ]
        _write_lines(pdp_dir / f"{stem}.csv", lines)
        chart = svg.line_chart(
            [float(g) for g in curve.grid],
            [float(v) for v in curve.values],
            title=f"Partial dependence: {name}",
            x_label=name,
            y_label="prediction",
        )
        _write_text(pdp_dir / f"{stem}.svg", chart)
    record_failures(run_dir, "explain", [])
    return {"features": len(names)}


# ---------------------------------------------------------------------------
# full run


def run_all(
    cfg: RunConfig,
    workers: int = 1,
    transport: Optional[Callable[[dict], str]] = None,
) -> dict:
    """Chain every stage and write run_meta.json (the only timestamped file)."""
    run_dir = Path(cfg.output_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    started = time.time()
    summary: dict[str, object] = {}
    durations: dict[str, float] = {}
    stages: list[tuple[str, Callable[[], dict]]] = [
        ("ingest", lambda: stage_ingest(cfg, run_dir)),
        ("extract", lambda: stage_extract(cfg, run_dir, workers)),
        ("insights", lambda: stage_insights(cfg, run_dir, workers, transport)),
        ("topics", lambda: stage_topics(cfg, run_dir)),
        ("train", lambda: stage_train(cfg, run_dir)),
        ("explain", lambda: stage_explain(cfg, run_dir)),
    ]
    for name, stage in stages:
        stage_start = time.time()
        summary[name] = stage()
        durations[name] = time.time() - stage_start
    meta = {
        "started_at": started,
        "finished_at": time.time(),
        "workers": workers,
        "durations_s": durations,
        "version": _package_version(),
    }
    _write_text(run_dir / "run_meta.json", json.dumps(meta, sort_keys=True, indent=1) + "\n")
    return summary


def _package_version() -> str:
    from . import __version__

    return __version__
