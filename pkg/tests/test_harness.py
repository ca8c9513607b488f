import json

import numpy as np
import pytest

from adhook import ingest, sampler
from adhook.acoustic import extract_acoustic, tempo_estimate
from adhook.harness import (
    CpiFormula,
    RunReport,
    SynthSpec,
    gen_corpus,
    recovery_check,
)


def small_spec(n=6, seed=4, **kw):
    return SynthSpec.generate(n_assets=n, seed=seed, **kw)


class TestSynthSpec:
    def test_deterministic_generation(self):
        assert small_spec().to_json() == small_spec().to_json()

    def test_different_seeds_differ(self):
        assert small_spec(seed=1).to_json() != small_spec(seed=2).to_json()

    def test_cpi_non_negative(self):
        spec = small_spec(n=50, noise_sd=0.5)
        assert all(c >= 0.0 for c in spec.cpi)

    def test_formula_records_coefficients(self):
        spec = small_spec()
        payload = json.loads(spec.to_json())
        assert payload["cpi_formula"]["topic_coef"] == 0.5
        assert payload["cpi_formula"]["power_coef"] == 2.0

    def test_drivers_declared(self):
        assert CpiFormula().drivers() == [("topic", "Interactive content"), ("acoustic", "power")]
        assert CpiFormula(topic_coef=0.0, power_coef=0.0).drivers() == []


class TestGenCorpus:
    def test_corpus_layout_and_reload(self, tmp_path):
        spec = small_spec()
        result = gen_corpus(spec, tmp_path / "corpus")
        assets = ingest.load_manifest(result["manifest_path"])
        assert len(assets) == spec.n_assets
        fixtures = json.loads((tmp_path / "corpus" / "mock_mllm.json").read_text())
        assert len(fixtures) == spec.n_assets

    def test_regeneration_byte_identical(self, tmp_path):
        spec = small_spec()
        gen_corpus(spec, tmp_path / "a")
        gen_corpus(spec, tmp_path / "b")
        for name in ("mock_mllm.json", "synth_spec.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        manifest_a = (tmp_path / "a" / "manifest.jsonl").read_text().replace(str(tmp_path / "a"), "")
        manifest_b = (tmp_path / "b" / "manifest.jsonl").read_text().replace(str(tmp_path / "b"), "")
        assert manifest_a == manifest_b

    def test_planted_cut_spikes_frame_diffs(self, tmp_path):
        spec = small_spec(n=1)
        spec.scene_cut_times_s[0] = [1.5]
        gen_corpus(spec, tmp_path / "corpus")
        asset = ingest.load_manifest(tmp_path / "corpus" / "manifest.jsonl")[0]
        frames, _ = ingest.decode_asset(asset, ingest.DecoderConfig())
        diffs = sampler.frame_diffs(frames)
        assert int(np.argmax(diffs)) == 44  # the pair (44, 45) straddles t=1.5s
        keyed = sampler.keyframe_select(frames, alpha=0.5, delta_t=1)
        assert 45 in keyed.indices

    def test_click_recipe_recovers_tempo(self, tmp_path):
        spec = small_spec(n=1)
        spec.audio_recipes[0] = {"kind": "clicks", "bpm": 120.0}
        gen_corpus(spec, tmp_path / "corpus")
        asset = ingest.load_manifest(tmp_path / "corpus" / "manifest.jsonl")[0]
        _, audio = ingest.decode_asset(asset, ingest.DecoderConfig())
        assert tempo_estimate(audio) == pytest.approx(120.0, abs=2.0)

    def test_silence_recipe_has_no_audio(self, tmp_path):
        spec = small_spec(n=1)
        spec.audio_recipes[0] = {"kind": "silence"}
        spec.true_power[0] = 0.0
        gen_corpus(spec, tmp_path / "corpus")
        asset = ingest.load_manifest(tmp_path / "corpus" / "manifest.jsonl")[0]
        frames, audio = ingest.decode_asset(asset, ingest.DecoderConfig())
        assert len(audio.samples) == 0
        hook = ingest.extract_hook(frames, audio, asset_id=asset.id)
        assert extract_acoustic(hook).has_audio is False

    def test_planted_cuts_recovered_exactly_across_seeds(self, tmp_path):
        # Every planted cut must be found by keyframe selection at
        # alpha=0.5, within one frame, with no spurious extras on assets
        # that have at least one cut.
        for seed in range(4):
            spec = small_spec(n=5, seed=seed)
            gen_corpus(spec, tmp_path / f"corpus{seed}")
            assets = ingest.load_manifest(tmp_path / f"corpus{seed}" / "manifest.jsonl")
            for i, asset in enumerate(assets):
                cuts = [round(t * spec.fps) for t in spec.scene_cut_times_s[i]]
                if not cuts:
                    continue
                frames, audio = ingest.decode_asset(asset, ingest.DecoderConfig())
                hook = ingest.extract_hook(frames, audio, asset_id=asset.id)
                found = sampler.keyframe_select(hook.frames, alpha=0.5, delta_t=1).indices
                assert len(found) == len(cuts)
                for cut, index in zip(sorted(cuts), found):
                    assert abs(index - cut) <= 1

    def test_sine_recipe_power_matches_planted(self, tmp_path):
        spec = small_spec(n=3)
        for i, recipe in enumerate(spec.audio_recipes):
            if recipe["kind"] != "sine":
                spec.audio_recipes[i] = {"kind": "sine", "f0": 300.0, "amp": 0.5}
                spec.true_power[i] = None
        gen_corpus(spec, tmp_path / "corpus")
        assets = ingest.load_manifest(tmp_path / "corpus" / "manifest.jsonl")
        for i, asset in enumerate(assets):
            if spec.true_power[i] is None:
                continue
            frames, audio = ingest.decode_asset(asset, ingest.DecoderConfig())
            hook = ingest.extract_hook(frames, audio, asset_id=asset.id)
            features = extract_acoustic(hook)
            assert features.power == pytest.approx(spec.true_power[i], rel=1e-6)


class TestRecoveryCheck:
    def fake_report(self, importance, pdp_curves, assignments, k=2):
        return RunReport(
            run_dir=None,
            metrics={},
            importance=importance,
            pdp_curves=pdp_curves,
            topic_assignments=assignments,
            topic_k=k,
            failures=[],
            column_names=[name for name, _ in importance],
        )

    def test_vacuous_pass_with_no_drivers(self):
        spec = small_spec()
        spec.cpi_formula = CpiFormula(topic_coef=0.0, power_coef=0.0)
        report = self.fake_report([("power", 1.0)], {}, {})
        result = recovery_check(report, spec)
        assert result.passed

    def test_recovered_drivers_pass(self):
        spec = small_spec(n=4)
        spec.planted_topics = ["Interactive content", "Humor", "Interactive content", "Humor"]
        assignments = {"synth00000": 1, "synth00001": 0, "synth00002": 1, "synth00003": 0}
        importance = [("power", 0.5), ("topic_1", 0.4), ("junk_mean", 0.1)]
        curves = {
            "power": (np.array([0.0, 0.5]), np.array([0.2, 1.2])),
            "topic_1": (np.array([0.0, 1.0]), np.array([0.2, 0.7])),
        }
        result = recovery_check(self.fake_report(importance, curves, assignments), spec)
        assert result.passed

    def test_unrecovered_driver_fails(self):
        spec = small_spec(n=2)
        spec.planted_topics = ["Interactive content", "Humor"]
        assignments = {"synth00000": 0, "synth00001": 1}
        importance = [
            ("junk_mean", 0.4), ("junk_std", 0.3), ("peak", 0.15),
            ("db_mean", 0.1), ("power", 0.03), ("topic_0", 0.02),
        ]
        curves = {
            "power": (np.array([0.0, 0.5]), np.array([0.2, 0.1])),
            "topic_0": (np.array([0.0, 1.0]), np.array([0.2, 0.1])),
        }
        result = recovery_check(self.fake_report(importance, curves, assignments), spec)
        assert not result.passed

    def test_negative_slope_fails(self):
        spec = small_spec(n=2)
        spec.planted_topics = ["Interactive content", "Humor"]
        assignments = {"synth00000": 0, "synth00001": 1}
        importance = [("power", 0.6), ("topic_0", 0.4)]
        curves = {
            "power": (np.array([0.0, 0.5]), np.array([1.2, 0.2])),  # downward
            "topic_0": (np.array([0.0, 1.0]), np.array([0.2, 0.7])),
        }
        result = recovery_check(self.fake_report(importance, curves, assignments), spec)
        assert not result.passed
