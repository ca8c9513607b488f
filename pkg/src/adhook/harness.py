"""Synthetic hook corpora with planted, known feature-to-CPI links.

Generated corpora give the pipeline something it can be graded on:
procedural frames with planted scene cuts, synthesized audio with known
tempo/pitch/power, a mock methodology backend whose answers carry
planted labels, and a CPI target computed from a declared formula. The
recovery check then asks whether the fitted model surfaces the planted
drivers.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.io import wavfile

from . import ingest, mllm, sampler
from .config import DEFAULT_LABEL_SET, RunConfig
from .pipeline import run_all
from .rng import mix_seed

LABEL_VOCAB: dict[str, list[str]] = {
    "Interactive content": ["tap", "poll", "swipe", "interactive", "quiz", "vote"],
    "Storytelling": ["story", "narrative", "journey", "character", "plot", "scene"],
    "Humor": ["joke", "funny", "laugh", "comedy", "punchline", "gag"],
    "Demo / product": ["demo", "product", "feature", "showcase", "hands", "close"],
    "Endorsement / celebrity": ["celebrity", "influencer", "famous", "endorses", "star", "fan"],
}

# One shared backbone so only the label vocabulary separates documents.
_RATIONALE_TEMPLATE = (
    "The opening seconds lean on {w0} and {w1}: a {w2} moment anchored by {w3} "
    "carries the hook."
)


@dataclass(frozen=True)
class CpiFormula:
    """Linear-plus-threshold target over planted attributes."""

    intercept: float = 0.2
    topic_label: str = "Interactive content"
    topic_coef: float = 0.5
    power_coef: float = 2.0
    power_threshold: Optional[float] = None
    power_threshold_coef: float = 0.0

    def evaluate(self, planted_label: str, audio_power: float) -> float:
        value = self.intercept
        if self.topic_coef and planted_label == self.topic_label:
            value += self.topic_coef
        value += self.power_coef * audio_power
        if self.power_threshold is not None and audio_power > self.power_threshold:
            value += self.power_threshold_coef
        return value

    def drivers(self) -> list[tuple[str, str]]:
        """Declared driver features as (kind, name) pairs."""
        out: list[tuple[str, str]] = []
        if self.topic_coef:
            out.append(("topic", self.topic_label))
        if self.power_coef or (self.power_threshold is not None and self.power_threshold_coef):
            out.append(("acoustic", "power"))
        return out

    def to_dict(self) -> dict:
        return {
            "intercept": self.intercept,
            "topic_label": self.topic_label,
            "topic_coef": self.topic_coef,
            "power_coef": self.power_coef,
            "power_threshold": self.power_threshold,
            "power_threshold_coef": self.power_threshold_coef,
        }


@dataclass
class SynthSpec:
    """Everything needed to regenerate one corpus byte-for-byte."""

    n_assets: int
    seed: int
    fps: float = 30.0
    frame_width: int = 32
    frame_height: int = 24
    sample_rate: int = 16000
    duration_s: float = 3.0
    noise_sd: float = 0.05
    cpi_formula: CpiFormula = field(default_factory=CpiFormula)
    label_set: tuple[str, ...] = DEFAULT_LABEL_SET
    scene_cut_times_s: list[list[float]] = field(default_factory=list)
    audio_recipes: list[dict] = field(default_factory=list)
    planted_topics: list[str] = field(default_factory=list)
    ad_contexts: list[dict] = field(default_factory=list)
    cpi: list[float] = field(default_factory=list)
    true_power: list[float] = field(default_factory=list)

    @classmethod
    def generate(
        cls,
        n_assets: int,
        seed: int,
        silence_fraction: float = 0.1,
        noise_sd: float = 0.05,
        cpi_formula: CpiFormula = CpiFormula(),
        label_set: Sequence[str] = DEFAULT_LABEL_SET,
        fps: float = 30.0,
        frame_width: int = 32,
        frame_height: int = 24,
        sample_rate: int = 16000,
        duration_s: float = 3.0,
    ) -> "SynthSpec":
        spec = cls(
            n_assets=n_assets,
            seed=seed,
            fps=fps,
            frame_width=frame_width,
            frame_height=frame_height,
            sample_rate=sample_rate,
            duration_s=duration_s,
            noise_sd=noise_sd,
            cpi_formula=cpi_formula,
            label_set=tuple(label_set),
        )
        for index in range(n_assets):
            gen = np.random.Generator(np.random.PCG64(mix_seed(seed, index)))
            n_cuts = int(gen.integers(0, 3))
            cuts = sorted(float(t) for t in gen.uniform(0.4, duration_s - 0.4, n_cuts))
            spec.scene_cut_times_s.append(cuts)

            label = str(gen.choice(list(label_set)))
            spec.planted_topics.append(label)

            roll = gen.uniform()
            if roll < silence_fraction:
                recipe = {"kind": "silence"}
                audio_power = 0.0
            elif roll < silence_fraction + 0.15:
                recipe = {"kind": "clicks", "bpm": float(gen.choice([80, 100, 120, 140, 160]))}
                audio_power = None
            elif roll < silence_fraction + 0.30:
                recipe = {"kind": "noise", "amp": float(gen.uniform(0.05, 0.6))}
                audio_power = None
            else:
                recipe = {
                    "kind": "sine",
                    "f0": float(gen.uniform(120.0, 700.0)),
                    "amp": float(gen.uniform(0.2, 1.0)),
                }
                audio_power = None
            spec.audio_recipes.append(recipe)
            if audio_power is None:
                audio_power = _recipe_power(recipe, sample_rate, duration_s)
            spec.true_power.append(audio_power)

            spec.ad_contexts.append(
                {
                    "gender_mix": str(gen.choice(["F", "M", "Mixed"])),
                    "age_bucket": str(gen.choice(["18-24", "25-34", "35-54", "55+"])),
                    "advertiser_size": str(gen.choice(["small", "medium", "large"])),
                    "region": str(gen.choice(["NA", "EU", "APAC", "LATAM"])),
                }
            )

            base_cpi = cpi_formula.evaluate(label, audio_power)
            noisy = base_cpi + (noise_sd * float(gen.standard_normal()) if noise_sd else 0.0)
            spec.cpi.append(max(0.0, noisy))
        return spec

    def to_json(self) -> str:
        return json.dumps(
            {
                "n_assets": self.n_assets,
                "seed": self.seed,
                "fps": self.fps,
                "frame_width": self.frame_width,
                "frame_height": self.frame_height,
                "sample_rate": self.sample_rate,
                "duration_s": self.duration_s,
                "noise_sd": self.noise_sd,
                "cpi_formula": self.cpi_formula.to_dict(),
                "label_set": list(self.label_set),
                "scene_cut_times_s": self.scene_cut_times_s,
                "audio_recipes": self.audio_recipes,
                "planted_topics": self.planted_topics,
                "ad_contexts": self.ad_contexts,
                "cpi": self.cpi,
                "true_power": self.true_power,
            },
            sort_keys=True,
        )


def _recipe_power(recipe: dict, sample_rate: int, duration_s: float) -> float:
    samples = _synthesize_audio(recipe, sample_rate, duration_s)
    if samples is None or len(samples) == 0:
        return 0.0
    # Quantize like the WAV on disk, so the planted power matches what
    # the pipeline measures after decode.
    quantized = samples.astype(np.float32).astype(np.float64)
    return float(np.mean(quantized**2))


def _synthesize_audio(recipe: dict, sample_rate: int, duration_s: float) -> Optional[np.ndarray]:
    n = int(round(duration_s * sample_rate))
    kind = recipe["kind"]
    if kind == "silence":
        return None
    if kind == "sine":
        t = np.arange(n) / sample_rate
        return recipe["amp"] * np.sin(2 * np.pi * recipe["f0"] * t)
    if kind == "clicks":
        samples = np.zeros(n)
        period = 60.0 / recipe["bpm"]
        # Short decaying bursts; seeded by the bpm so output is pure.
        gen = np.random.Generator(np.random.PCG64(int(recipe["bpm"] * 1000)))
        burst_len = int(0.005 * sample_rate)
        burst = 0.9 * gen.uniform(-1, 1, burst_len) * np.exp(-np.arange(burst_len) / (burst_len / 4))
        k = 0
        while True:
            start = int(round(k * period * sample_rate))
            if start >= n:
                break
            stop = min(start + burst_len, n)
            samples[start:stop] = burst[: stop - start]
            k += 1
        return samples
    if kind == "noise":
        gen = np.random.Generator(np.random.PCG64(int(recipe["amp"] * 1e6)))
        return recipe["amp"] * gen.uniform(-1, 1, n)
    raise ValueError(f"unknown audio recipe kind {kind!r}")


def _bounce(value: float, limit: int) -> int:
    if limit <= 0:
        return 0
    phase = value % (2 * limit)
    return int(phase if phase <= limit else 2 * limit - phase)


def _draw_frames(spec: SynthSpec, index: int) -> list[np.ndarray]:
    """Procedural frames: solid palette background plus a bouncing square;
    an abrupt palette change at every planted cut.

    Palettes alternate between a dark and a bright luma band, so a cut
    always dwarfs the square's motion in the change score; the square
    bounces rather than wrapping so motion never spikes.
    """
    gen = np.random.Generator(np.random.PCG64(mix_seed(spec.seed, index, 0xF0)))
    n_frames = int(math.ceil(spec.duration_s * spec.fps))
    cuts = [int(round(t * spec.fps)) for t in spec.scene_cut_times_s[index]]
    palettes = []
    for p in range(len(cuts) + 1):
        if p % 2 == 0:
            palettes.append(gen.integers(0, 70, size=3))
        else:
            palettes.append(gen.integers(186, 256, size=3))
    square = int(max(4, spec.frame_height // 4))
    speed_x = float(gen.uniform(0.5, 2.0))
    speed_y = float(gen.uniform(0.3, 1.5))

    frames = []
    segment = 0
    for f in range(n_frames):
        while segment < len(cuts) and f >= cuts[segment]:
            segment += 1
        background = palettes[segment]
        pixels = np.tile(background.astype(np.uint8), (spec.frame_height, spec.frame_width, 1))
        x = _bounce(speed_x * f, max(1, spec.frame_width - square))
        y = _bounce(speed_y * f, max(1, spec.frame_height - square))
        pixels[y : y + square, x : x + square] = (255 - background).astype(np.uint8)
        frames.append(pixels)
    return frames


def _rationale_for(spec: SynthSpec, index: int) -> str:
    label = spec.planted_topics[index]
    vocab = LABEL_VOCAB.get(label, [w for w in label.lower().split() if w.isalnum()] * 4)
    gen = np.random.Generator(np.random.PCG64(mix_seed(spec.seed, index, 0xAB)))
    words = list(gen.choice(vocab, size=4, replace=False))
    return _RATIONALE_TEMPLATE.format(w0=words[0], w1=words[1], w2=words[2], w3=words[3])


def gen_corpus(
    spec: SynthSpec,
    corpus_dir: str | Path,
    sampler_cfg: Optional[dict] = None,
    hook_secs: float = 3.0,
) -> dict:
    """Write the corpus: raw frame dirs, WAVs, manifest, and mock fixtures.

    The mock-backend fixture keys are computed by running the real
    decode / trim / sample path over the just-written files, so fixtures
    always match what the pipeline will ask for.
    """
    sampler_cfg = dict(sampler_cfg or {"strategy": "uniform", "m": 8, "seed": 0,
                                       "alpha": 0.5, "delta_t": 1, "max_frames": None})
    corpus_dir = Path(corpus_dir)
    assets_dir = corpus_dir / "assets"
    assets_dir.mkdir(parents=True, exist_ok=True)

    manifest_lines = []
    fixtures: dict[str, str] = {}
    for index in range(spec.n_assets):
        asset_id = f"synth{index:05d}"
        asset_dir = assets_dir / asset_id
        asset_dir.mkdir(parents=True, exist_ok=True)
        frames = _draw_frames(spec, index)
        for f, pixels in enumerate(frames):
            (asset_dir / f"frame_{f:06d}.raw").write_bytes(pixels.tobytes())
        (asset_dir / "meta.json").write_text(
            json.dumps(
                {
                    "width": spec.frame_width,
                    "height": spec.frame_height,
                    "fps": spec.fps,
                    "audio_sample_rate": spec.sample_rate,
                },
                sort_keys=True,
            ),
            encoding="utf-8",
        )
        samples = _synthesize_audio(spec.audio_recipes[index], spec.sample_rate, spec.duration_s)
        if samples is not None:
            wavfile.write(asset_dir / "audio.wav", spec.sample_rate, samples.astype(np.float32))

        title = f"Spot {index}"
        body = f"Campaign asset number {index}."
        record = {
            "id": asset_id,
            "source": str(asset_dir),
            "fps": spec.fps,
            "duration_s": spec.duration_s,
            "title_text": title,
            "body_text": body,
            "cpi": spec.cpi[index],
            "ad_context": spec.ad_contexts[index],
        }
        manifest_lines.append(json.dumps(record, sort_keys=True))

        # Fixture keyed exactly as the pipeline will key it.
        asset = ingest.VideoAsset(id=asset_id, source=str(asset_dir), fps=spec.fps)
        decoded_frames, audio = ingest.decode_asset(asset, ingest.DecoderConfig())
        hook = ingest.extract_hook(
            decoded_frames, audio, texts=(title, body), hook_secs=hook_secs, asset_id=asset_id
        )
        if sampler_cfg["strategy"] == "uniform":
            m = min(sampler_cfg["m"], len(hook.frames))
            sample = sampler.uniform_random_sample(hook.frames, m, sampler_cfg["seed"], asset_id)
        else:
            sample = sampler.keyframe_select(
                hook.frames,
                sampler_cfg["alpha"],
                sampler_cfg["delta_t"],
                sampler_cfg.get("max_frames"),
                asset_id=asset_id,
            )
        prompt = mllm.build_prompt(title, body)
        digests = [hook.frames[i].digest() for i in sample.indices]
        key = mllm.content_hash(prompt.rendered, digests)
        response = json.dumps(
            {
                "methodology": spec.planted_topics[index],
                "rationale": _rationale_for(spec, index),
            },
            sort_keys=True,
        )
        fixtures[key] = response

    manifest_path = corpus_dir / "manifest.jsonl"
    manifest_path.write_text("\n".join(manifest_lines) + "\n", encoding="utf-8")
    fixtures_path = corpus_dir / "mock_mllm.json"
    fixtures_path.write_text(json.dumps(fixtures, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    (corpus_dir / "synth_spec.json").write_text(spec.to_json() + "\n", encoding="utf-8")
    return {
        "manifest_path": str(manifest_path),
        "mock_corpus_path": str(fixtures_path),
        "n_assets": spec.n_assets,
    }


@dataclass
class RunReport:
    """Artifacts of one end-to-end run, loaded back into memory."""

    run_dir: Path
    metrics: dict
    importance: list[tuple[str, float]]
    pdp_curves: dict[str, tuple[np.ndarray, np.ndarray]]
    topic_assignments: dict[str, int]
    topic_k: int
    failures: list[dict]
    column_names: list[str]

    @classmethod
    def load(cls, run_dir: str | Path) -> "RunReport":
        run_dir = Path(run_dir)
        metrics = json.loads((run_dir / "metrics.json").read_text(encoding="utf-8"))
        model_payload = json.loads((run_dir / "model.json").read_text(encoding="utf-8"))
        column_names = model_payload["schema"]["column_names"]

        importance = []
        for line in (run_dir / "importance.csv").read_text(encoding="utf-8").splitlines()[1:]:
            name, score = line.rsplit(",", 1)
            importance.append((name, float(score)))

        pdp_curves = {}
        for csv_path in sorted((run_dir / "pdp").glob("*.csv")):
            index = int(csv_path.stem.split("_", 1)[0])
            rows = csv_path.read_text(encoding="utf-8").splitlines()[1:]
            grid = np.array([float(r.split(",")[0]) for r in rows])
            values = np.array([float(r.split(",")[1]) for r in rows])
            pdp_curves[column_names[index]] = (grid, values)

        topic_payload = json.loads((run_dir / "topic_model.json").read_text(encoding="utf-8"))
        assignments = dict(
            zip(topic_payload["doc_asset_ids"], topic_payload["assignments"])
        )
        failures = [
            json.loads(line)
            for line in (run_dir / "failures.jsonl").read_text(encoding="utf-8").splitlines()
            if line
        ]
        return cls(
            run_dir=run_dir,
            metrics=metrics,
            importance=importance,
            pdp_curves=pdp_curves,
            topic_assignments=assignments,
            topic_k=topic_payload["k"],
            failures=failures,
            column_names=column_names,
        )


def run_end_to_end(config: RunConfig, workers: int = 1) -> RunReport:
    """Run every pipeline stage on an existing corpus and load the report."""
    run_all(config, workers=workers)
    return RunReport.load(config.output_dir)


@dataclass
class RecoveryResult:
    passed: bool
    details: list[str]


def _planted_topic_feature(report: RunReport, spec: SynthSpec, label: str) -> Optional[str]:
    """Feature name of the topic most associated with a planted label."""
    counts: dict[int, int] = {}
    for index in range(spec.n_assets):
        if spec.planted_topics[index] != label:
            continue
        assignment = report.topic_assignments.get(f"synth{index:05d}")
        if assignment is not None:
            counts[assignment] = counts.get(assignment, 0) + 1
    if not counts:
        return None
    best = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[0][0]
    return f"topic_{best}"


def recovery_check(
    report: RunReport,
    spec: SynthSpec,
    drivers: Optional[list[tuple[str, str]]] = None,
) -> RecoveryResult:
    """Did the model surface the planted drivers?

    Pass iff every driver ranks within the top 2 * len(drivers) features
    by gain importance and every driver's partial dependence has a
    positive least-squares slope. An empty driver list passes vacuously.
    """
    if drivers is None:
        drivers = spec.cpi_formula.drivers()
    if not drivers:
        return RecoveryResult(passed=True, details=["no drivers declared"])

    feature_names = []
    details = []
    for kind, name in drivers:
        if kind == "topic":
            feature = _planted_topic_feature(report, spec, name)
            if feature is None:
                return RecoveryResult(False, [f"no documents carry planted label {name!r}"])
            details.append(f"planted label {name!r} maps to {feature}")
        else:
            feature = name
        feature_names.append(feature)

    ranked = [n for n, _ in sorted(report.importance, key=lambda kv: -kv[1])]
    top_n = 2 * len(drivers)
    passed = True
    for feature in feature_names:
        rank = ranked.index(feature) if feature in ranked else -1
        if rank < 0 or rank >= top_n:
            passed = False
            details.append(f"driver {feature} not recovered (rank {rank}, need < {top_n})")
        else:
            details.append(f"driver {feature} ranked {rank}")
        curve = report.pdp_curves.get(feature)
        if curve is None:
            passed = False
            details.append(f"driver {feature} has no PDP")
            continue
        grid, values = curve
        if len(grid) >= 2:
            slope = float(np.polyfit(grid, values, 1)[0])
        else:
            slope = 0.0
        if slope <= 0:
            passed = False
            details.append(f"driver {feature} PDP slope {slope:.4g} is not positive")
        else:
            details.append(f"driver {feature} PDP slope {slope:.4g}")
    if not passed and not any("ranked" in d for d in details):
        details.insert(0, "no driver recovered")
    return RecoveryResult(passed=passed, details=details)


def synth_from_config(cfg: RunConfig) -> tuple[SynthSpec, dict]:
    """Generate the corpus described by the config's synth section and
    return the spec plus the paths the run stages need."""
    s = cfg.synth
    formula = CpiFormula(
        intercept=s["cpi_intercept"],
        topic_label=s["cpi_topic_label"],
        topic_coef=s["cpi_topic_coef"],
        power_coef=s["cpi_power_coef"],
        power_threshold=s["cpi_power_threshold"],
        power_threshold_coef=s["cpi_power_threshold_coef"],
    )
    spec = SynthSpec.generate(
        n_assets=s["n_assets"],
        seed=s["seed"],
        silence_fraction=s["silence_fraction"],
        noise_sd=s["noise_sd"],
        cpi_formula=formula,
        label_set=tuple(s["label_set"]),
        fps=s["fps"],
        frame_width=s["frame_width"],
        frame_height=s["frame_height"],
        sample_rate=s["sample_rate"],
        duration_s=s["duration_s"],
    )
    corpus_dir = Path(cfg.output_dir) / "corpus"
    result = gen_corpus(spec, corpus_dir, sampler_cfg=cfg.sampler, hook_secs=cfg.hook_secs)
    return spec, result
