"""Asset loading, decoding contract, and hook-window trimming.

Decoding is delegated: this module consumes a directory of raw RGB frame
files plus one PCM WAV, optionally produced by a configurable external
decoder command. That keeps the pipeline free of codec dependencies.
"""

from __future__ import annotations

import json
import math
import shlex
import subprocess
import tempfile
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.io import wavfile

DEFAULT_HOOK_SECS = 3.0
DEFAULT_SAMPLE_RATE = 16000

MANIFEST_REQUIRED_KEYS = ("id", "source", "fps")
MANIFEST_OPTIONAL_KEYS = ("duration_s", "title_text", "body_text", "vertical", "cpi", "ad_context")

AD_CONTEXT_FIELDS = ("age_bucket", "advertiser_size", "gender_mix", "region")


class IngestError(Exception):
    """Base class for ingest failures."""


class MalformedRecord(IngestError):
    def __init__(self, line_no: int, reason: str):
        super().__init__(f"manifest line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class DuplicateId(IngestError):
    def __init__(self, asset_id: str):
        super().__init__(f"duplicate asset id {asset_id!r}")
        self.asset_id = asset_id


class MissingRequiredField(IngestError):
    def __init__(self, name: str, line_no: int = 0):
        super().__init__(f"manifest line {line_no}: missing required field {name!r}")
        self.name = name
        self.line_no = line_no


class DecoderFailure(IngestError):
    def __init__(self, exit_info: str):
        super().__init__(f"decoder failed: {exit_info}")
        self.exit_info = exit_info


class InconsistentFrameDims(IngestError):
    pass


class UnsupportedWav(IngestError):
    def __init__(self, format_info: str):
        super().__init__(f"unsupported WAV: {format_info}")
        self.format_info = format_info


class EmptyFrameSequence(IngestError):
    pass


class Vertical(str, Enum):
    ECOMMERCE = "Ecommerce"
    HEALTHCARE = "Healthcare"
    CPG = "CPG"
    AUTOMOBILE = "Automobile"
    ENTERTAINMENT = "Entertainment"
    OTHER = "Other"


@dataclass(frozen=True)
class VideoAsset:
    """One manifest entry: where a video lives plus its ad metadata."""

    id: str
    source: str
    fps: float
    duration_s: float = 0.0
    title_text: str = ""
    body_text: str = ""
    vertical: Vertical = Vertical.OTHER
    cpi: Optional[float] = None
    ad_context: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.id:
            raise ValueError("asset id must be non-empty")
        if self.fps <= 0:
            raise ValueError(f"fps must be positive, got {self.fps}")
        if self.duration_s < 0:
            raise ValueError(f"duration_s must be non-negative, got {self.duration_s}")
        if self.cpi is not None and self.cpi < 0:
            raise ValueError(f"cpi must be non-negative, got {self.cpi}")

    def to_record(self) -> dict:
        record: dict = {"id": self.id, "source": self.source, "fps": self.fps}
        if self.duration_s:
            record["duration_s"] = self.duration_s
        if self.title_text:
            record["title_text"] = self.title_text
        if self.body_text:
            record["body_text"] = self.body_text
        if self.vertical is not Vertical.OTHER:
            record["vertical"] = self.vertical.value
        if self.cpi is not None:
            record["cpi"] = self.cpi
        if self.ad_context:
            record["ad_context"] = dict(sorted(self.ad_context.items()))
        return record


@dataclass(eq=False)
class Frame:
    """Decoded RGB frame; pixels are a (height, width, 3) uint8 array."""

    width: int
    height: int
    pixels: np.ndarray
    timestamp_s: float

    def __post_init__(self):
        if self.pixels.shape != (self.height, self.width, 3):
            raise ValueError(
                f"pixel buffer shape {self.pixels.shape} does not match "
                f"{self.height}x{self.width}x3"
            )
        if self.timestamp_s < 0:
            raise ValueError("timestamp_s must be non-negative")

    def digest(self) -> bytes:
        """Content digest covering dimensions and raw pixel bytes."""
        import hashlib

        h = hashlib.blake2b(digest_size=16)
        h.update(self.width.to_bytes(8, "little"))
        h.update(self.height.to_bytes(8, "little"))
        h.update(np.ascontiguousarray(self.pixels).tobytes())
        return h.digest()


@dataclass(eq=False)
class AudioClip:
    """Mono audio in [-1, 1]; empty samples mean the source had no audio."""

    sample_rate_hz: int
    samples: np.ndarray

    def __post_init__(self):
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")
        self.samples = np.asarray(self.samples, dtype=np.float64)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz


@dataclass(eq=False)
class HookClip:
    """A video trimmed to its hook window, with the texts that ship with it."""

    asset_id: str
    frames: list[Frame]
    audio: AudioClip
    title_text: str = ""
    body_text: str = ""
    transcript: str = ""
    hook_secs: float = DEFAULT_HOOK_SECS


@dataclass(frozen=True)
class DecoderConfig:
    """How to obtain the raw frame/WAV layout for an asset.

    With no ``command_template`` the asset source must already be a
    pre-decoded directory. Otherwise the template is rendered with
    ``{source}`` and ``{outdir}`` and run as a subprocess that must
    produce the same layout in ``{outdir}``.
    """

    command_template: Optional[str] = None
    scratch_dir: Optional[str] = None


def _parse_record(line_no: int, raw_line: str) -> VideoAsset:
    try:
        record = json.loads(raw_line)
    except json.JSONDecodeError as exc:
        raise MalformedRecord(line_no, f"invalid JSON ({exc.msg})") from exc
    if not isinstance(record, dict):
        raise MalformedRecord(line_no, "record is not a JSON object")

    known = set(MANIFEST_REQUIRED_KEYS) | set(MANIFEST_OPTIONAL_KEYS)
    unknown = sorted(set(record) - known)
    if unknown:
        raise MalformedRecord(line_no, f"unknown key(s): {', '.join(unknown)}")
    for key in MANIFEST_REQUIRED_KEYS:
        if key not in record:
            raise MissingRequiredField(key, line_no)

    vertical_raw = record.get("vertical", Vertical.OTHER.value)
    try:
        vertical = Vertical(vertical_raw)
    except ValueError as exc:
        raise MalformedRecord(line_no, f"unknown vertical {vertical_raw!r}") from exc

    ad_context = record.get("ad_context", {})
    if not isinstance(ad_context, dict) or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in ad_context.items()
    ):
        raise MalformedRecord(line_no, "ad_context must map strings to strings")

    try:
        return VideoAsset(
            id=str(record["id"]),
            source=str(record["source"]),
            fps=float(record["fps"]),
            duration_s=float(record.get("duration_s", 0.0)),
            title_text=str(record.get("title_text", "")),
            body_text=str(record.get("body_text", "")),
            vertical=vertical,
            cpi=None if record.get("cpi") is None else float(record["cpi"]),
            ad_context=dict(ad_context),
        )
    except (TypeError, ValueError) as exc:
        raise MalformedRecord(line_no, str(exc)) from exc


def load_manifest(path: str | Path) -> list[VideoAsset]:
    """Load a JSONL manifest, one asset per line, rejecting duplicate ids."""
    assets: list[VideoAsset] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw_line in enumerate(fh, start=1):
            if not raw_line.strip():
                continue
            asset = _parse_record(line_no, raw_line)
            if asset.id in seen:
                raise DuplicateId(asset.id)
            seen.add(asset.id)
            assets.append(asset)
    return assets


def serialize_manifest(assets: list[VideoAsset], path: str | Path) -> None:
    """Write assets back out in the JSONL manifest format."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for asset in assets:
            fh.write(json.dumps(asset.to_record(), sort_keys=True) + "\n")


def _read_wav(path: Path) -> AudioClip:
    try:
        rate, data = wavfile.read(path)
    except ValueError as exc:
        raise UnsupportedWav(str(exc)) from exc
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        samples = data.astype(np.float64) / 2147483648.0
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise UnsupportedWav(f"dtype {data.dtype}")
    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    peak = np.max(np.abs(samples)) if len(samples) else 0.0
    if peak > 1.0:
        samples = samples / peak
    return AudioClip(sample_rate_hz=int(rate), samples=samples)


def _read_frame_dir(outdir: Path) -> tuple[list[Frame], AudioClip]:
    meta_path = outdir / "meta.json"
    if not meta_path.is_file():
        raise DecoderFailure(f"no meta.json in {outdir}")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    try:
        width, height, fps = int(meta["width"]), int(meta["height"]), float(meta["fps"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DecoderFailure(f"bad meta.json in {outdir}: {exc}") from exc
    if width <= 0 or height <= 0 or fps <= 0:
        raise DecoderFailure(f"non-positive dimensions/fps in {outdir}/meta.json")

    frame_paths = sorted(outdir.glob("frame_*.raw"))
    if not frame_paths:
        raise DecoderFailure(f"no frame_*.raw files in {outdir}")

    expected = width * height * 3
    frames = []
    for index, frame_path in enumerate(frame_paths):
        raw = frame_path.read_bytes()
        if len(raw) != expected:
            raise InconsistentFrameDims(
                f"{frame_path.name}: {len(raw)} bytes, expected {expected}"
            )
        pixels = np.frombuffer(raw, dtype=np.uint8).reshape(height, width, 3)
        frames.append(Frame(width=width, height=height, pixels=pixels, timestamp_s=index / fps))

    wav_path = outdir / "audio.wav"
    if wav_path.is_file():
        audio = _read_wav(wav_path)
    else:
        audio = AudioClip(sample_rate_hz=int(meta.get("audio_sample_rate", DEFAULT_SAMPLE_RATE)),
                          samples=np.zeros(0))
    return frames, audio


def decode_asset(asset: VideoAsset, decoder: DecoderConfig) -> tuple[list[Frame], AudioClip]:
    """Produce the asset's frames and mono audio via the decoder contract.

    Raises:
        DecoderFailure: external command failed or the layout is unusable.
        InconsistentFrameDims: a frame file does not match meta.json.
        UnsupportedWav: the audio file is not 16-bit/32-bit PCM or float.
    """
    if decoder.command_template is None:
        return _read_frame_dir(Path(asset.source))

    scratch_root = decoder.scratch_dir or tempfile.gettempdir()
    outdir = Path(tempfile.mkdtemp(prefix=f"decode_{asset.id}_", dir=scratch_root))
    command = decoder.command_template.format(source=asset.source, outdir=str(outdir))
    result = subprocess.run(shlex.split(command), capture_output=True, text=True)
    if result.returncode != 0:
        raise DecoderFailure(
            f"exit {result.returncode} running {command!r}: {result.stderr.strip()[-500:]}"
        )
    return _read_frame_dir(outdir)


def extract_hook(
    frames: list[Frame],
    audio: AudioClip,
    texts: tuple[str, str] = ("", ""),
    hook_secs: float = DEFAULT_HOOK_SECS,
    asset_id: str = "",
    transcript: str = "",
) -> HookClip:
    """Trim to the hook window: frames before ``hook_secs``, audio to match.

    Videos shorter than the window pass through whole. Trimming is
    idempotent.
    """
    if hook_secs <= 0:
        raise ValueError("hook_secs must be positive")
    if not frames:
        raise EmptyFrameSequence("cannot extract a hook from zero frames")
    kept_frames = [frame for frame in frames if frame.timestamp_s < hook_secs]
    max_samples = math.floor(hook_secs * audio.sample_rate_hz)
    kept_audio = AudioClip(
        sample_rate_hz=audio.sample_rate_hz,
        samples=audio.samples[:max_samples],
    )
    return HookClip(
        asset_id=asset_id,
        frames=kept_frames,
        audio=kept_audio,
        title_text=texts[0],
        body_text=texts[1],
        transcript=transcript,
        hook_secs=hook_secs,
    )
