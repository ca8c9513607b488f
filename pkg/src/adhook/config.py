"""Run configuration: one strict JSON file drives every stage.

Unknown keys are rejected with the offending key named, defaults match
the pipeline's pinned values, and the effective (fully defaulted)
config is what gets echoed into the run directory.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

from .acoustic import AcousticConfig
from .mllm import AsrConfig, BackendConfig, BackendKind
from .predictor import GbdtParams
from .topics import EmbedConfig, TopicConfig


class ConfigInvalid(Exception):
    def __init__(self, path: str, reason: str):
        super().__init__(f"invalid config {path}: {reason}")
        self.path = path
        self.reason = reason


DEFAULT_LABEL_SET = (
    "Interactive content",
    "Storytelling",
    "Humor",
    "Demo / product",
    "Endorsement / celebrity",
)

_SCHEMA: dict[str, dict[str, Any]] = {
    "": {
        "manifest_path": "",
        "output_dir": None,  # required
        "hook_secs": 3.0,
        "decoder": dict,
        "sampler": dict,
        "acoustic": dict,
        "mllm": dict,
        "topics": dict,
        "predictor": dict,
        "synth": dict,
    },
    "decoder": {"command_template": None, "scratch_dir": None},
    "sampler": {
        "strategy": "uniform",
        "m": 8,
        "alpha": 0.5,
        "delta_t": 1,
        "max_frames": None,
        "seed": 0,
    },
    "acoustic": {
        "f0_min_hz": 65.0,
        "f0_max_hz": 1000.0,
        "f0_win_s": 0.04,
        "f0_hop_s": 0.01,
        "voicing_autocorr_threshold": 0.5,
        "voicing_rms_threshold": 0.01,
        "tempo_win_s": 0.046,
        "tempo_hop_s": 0.0116,
    },
    "mllm": {
        "kind": "DeterministicMock",
        "endpoint": "",
        "api_key_env": "ADHOOK_MLLM_API_KEY",
        "corpus_path": None,
        "max_retries": 2,
        "timeout_s": 10.0,
        "backoff_base_s": 0.5,
        "asr_kind": "Disabled",
        "asr_corpus_path": None,
    },
    "topics": {
        "provider": "Offline",
        "embed_seed": 0,
        "embed_dim": 256,
        "endpoint": "",
        "d_out": 16,
        "k_candidates": [17],
        "seed": 0,
    },
    "predictor": {
        "n_trees": 740,
        "max_depth": 12,
        "learning_rate": 0.0764,
        "min_samples_split": 50,
        "subsample": 0.86,
        "seed": 0,
        "split_seed": 0,
        "test_fraction": 0.2,
        "log1p_target": False,
        "include_junk": True,
        "pdp_grid": 20,
    },
    "synth": {
        "n_assets": 200,
        "seed": 0,
        "fps": 30.0,
        "frame_width": 32,
        "frame_height": 24,
        "sample_rate": 16000,
        "duration_s": 3.0,
        "silence_fraction": 0.1,
        "label_set": list(DEFAULT_LABEL_SET),
        "noise_sd": 0.05,
        "cpi_intercept": 0.2,
        "cpi_topic_label": "Interactive content",
        "cpi_topic_coef": 0.5,
        "cpi_power_coef": 2.0,
        "cpi_power_threshold": None,
        "cpi_power_threshold_coef": 0.0,
    },
}


def _merge_section(path: str, section: str, given: dict) -> dict:
    schema = _SCHEMA[section]
    merged = {k: (dict(v) if isinstance(v, dict) else v) for k, v in schema.items()}
    for key, value in given.items():
        if key not in schema:
            where = f"{section}.{key}" if section else key
            raise ConfigInvalid(path, f"unknown key {where!r}")
        merged[key] = value
    return merged


@dataclass
class RunConfig:
    """Validated, fully defaulted run configuration."""

    manifest_path: str
    output_dir: str
    hook_secs: float
    decoder: dict
    sampler: dict
    acoustic: dict
    mllm: dict
    topics: dict
    predictor: dict
    synth: dict
    source_path: str = ""

    def to_dict(self) -> dict:
        return {
            "manifest_path": self.manifest_path,
            "output_dir": self.output_dir,
            "hook_secs": self.hook_secs,
            "decoder": self.decoder,
            "sampler": self.sampler,
            "acoustic": self.acoustic,
            "mllm": self.mllm,
            "topics": self.topics,
            "predictor": self.predictor,
            "synth": self.synth,
        }

    # Typed views onto the validated sections.

    def acoustic_config(self) -> AcousticConfig:
        a = self.acoustic
        return AcousticConfig(
            f0_min_hz=a["f0_min_hz"],
            f0_max_hz=a["f0_max_hz"],
            f0_win_s=a["f0_win_s"],
            f0_hop_s=a["f0_hop_s"],
            voicing_autocorr_threshold=a["voicing_autocorr_threshold"],
            voicing_rms_threshold=a["voicing_rms_threshold"],
            tempo_win_s=a["tempo_win_s"],
            tempo_hop_s=a["tempo_hop_s"],
        )

    def backend_config(self) -> BackendConfig:
        m = self.mllm
        return BackendConfig(
            kind=BackendKind(m["kind"]),
            endpoint=m["endpoint"],
            api_key_env=m["api_key_env"],
            corpus_path=m["corpus_path"],
            max_retries=m["max_retries"],
            timeout_s=m["timeout_s"],
            backoff_base_s=m["backoff_base_s"],
        )

    def asr_config(self) -> AsrConfig:
        return AsrConfig(kind=self.mllm["asr_kind"], corpus_path=self.mllm["asr_corpus_path"])

    def topic_config(self) -> TopicConfig:
        t = self.topics
        return TopicConfig(
            embed=EmbedConfig(
                kind=t["provider"],
                seed=t["embed_seed"],
                dim=t["embed_dim"],
                endpoint=t["endpoint"],
            ),
            d_out=t["d_out"],
            k_candidates=tuple(t["k_candidates"]),
            seed=t["seed"],
        )

    def gbdt_params(self) -> GbdtParams:
        p = self.predictor
        return GbdtParams(
            n_trees=p["n_trees"],
            max_depth=p["max_depth"],
            learning_rate=p["learning_rate"],
            min_samples_split=p["min_samples_split"],
            subsample=p["subsample"],
            seed=p["seed"],
        )


def _validate(path: str, raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigInvalid(path, "top level must be a JSON object")
    top = _merge_section(path, "", raw)
    if top["output_dir"] is None:
        raise ConfigInvalid(path, "missing required key 'output_dir'")
    sections = {}
    for name in ("decoder", "sampler", "acoustic", "mllm", "topics", "predictor", "synth"):
        given = top[name]
        if given is dict:  # placeholder default: section absent
            given = {}
        if not isinstance(given, dict):
            raise ConfigInvalid(path, f"section {name!r} must be an object")
        sections[name] = _merge_section(path, name, given)

    sampler = sections["sampler"]
    if sampler["strategy"] not in ("uniform", "keyframe"):
        raise ConfigInvalid(path, f"sampler.strategy must be uniform|keyframe, got {sampler['strategy']!r}")
    if not 0.0 < sampler["alpha"] <= 1.0:
        raise ConfigInvalid(path, f"sampler.alpha must be in (0, 1], got {sampler['alpha']}")
    if sampler["delta_t"] < 1:
        raise ConfigInvalid(path, "sampler.delta_t must be >= 1")
    if sections["mllm"]["kind"] not in ("DeterministicMock", "HttpEndpoint"):
        raise ConfigInvalid(path, "mllm.kind must be DeterministicMock|HttpEndpoint")
    if top["hook_secs"] <= 0:
        raise ConfigInvalid(path, "hook_secs must be positive")

    return RunConfig(
        manifest_path=top["manifest_path"],
        output_dir=top["output_dir"],
        hook_secs=float(top["hook_secs"]),
        decoder=sections["decoder"],
        sampler=sampler,
        acoustic=sections["acoustic"],
        mllm=sections["mllm"],
        topics=sections["topics"],
        predictor=sections["predictor"],
        synth=sections["synth"],
        source_path=path,
    )


def apply_overrides(raw: dict, overrides: list[str], path: str) -> dict:
    """Apply ``--set dotted.key=value`` pairs onto the raw config dict."""
    for item in overrides:
        if "=" not in item:
            raise ConfigInvalid(path, f"override {item!r} is not KEY=VALUE")
        dotted, text = item.split("=", 1)
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            value = text
        target = raw
        parts = dotted.split(".")
        for part in parts[:-1]:
            target = target.setdefault(part, {})
            if not isinstance(target, dict):
                raise ConfigInvalid(path, f"override {dotted!r} descends into a non-object")
        target[parts[-1]] = value
    return raw


def apply_global_seed(raw: dict, seed: int) -> dict:
    """The --seed flag: one value fans out to every seeded subsystem."""
    raw.setdefault("sampler", {})["seed"] = seed
    topics = raw.setdefault("topics", {})
    topics["seed"] = seed
    topics["embed_seed"] = seed
    predictor = raw.setdefault("predictor", {})
    predictor["seed"] = seed
    predictor["split_seed"] = seed
    raw.setdefault("synth", {})["seed"] = seed
    return raw


def load_config(
    path: str | Path,
    overrides: Optional[list[str]] = None,
    global_seed: Optional[int] = None,
) -> RunConfig:
    """Parse and validate a config file, applying CLI overrides."""
    path = str(path)
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigInvalid(path, "file not found") from exc
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(path, f"invalid JSON: {exc.msg}") from exc
    if overrides:
        raw = apply_overrides(raw, overrides, path)
    if global_seed is not None:
        raw = apply_global_seed(raw, global_seed)
    return _validate(path, raw)


def effective_config_json(cfg: RunConfig) -> str:
    return json.dumps(cfg.to_dict(), sort_keys=True, indent=2) + "\n"
