"""Frame sampling over a hook: uniform random choice and keyframe selection.

Keyframe selection scores consecutive-frame change as 1 - SSIM and keeps
the frame after each change whose score clears a relative threshold,
subject to a minimum index gap. SSIM here is the blocked variant: the
similarity formula evaluated on non-overlapping square windows and
averaged, with population moments. Frames are converted to luma and
downscaled to a bounded size before scoring.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .ingest import Frame
from .rng import XorShift64Star

SSIM_DOWNSCALE_MAX_DIM = 256


class SamplerError(Exception):
    """Base class for sampling failures."""


class DimensionMismatch(SamplerError):
    pass


class FrameSmallerThanWindow(SamplerError):
    pass


class TooFewFrames(SamplerError):
    pass


class SampleLargerThanPopulation(SamplerError):
    pass


class SamplingStrategy(str, Enum):
    UNIFORM_RANDOM = "UniformRandom"
    KEY_FRAME = "KeyFrame"


@dataclass(eq=False)
class GrayFrame:
    """Single-channel intensity image, values in [0, 255]."""

    width: int
    height: int
    luma: np.ndarray

    def __post_init__(self):
        if self.luma.shape != (self.height, self.width):
            raise ValueError(
                f"luma shape {self.luma.shape} does not match {self.height}x{self.width}"
            )


@dataclass(frozen=True)
class SsimParams:
    """Blocked-SSIM parameters: window size and dynamic range."""

    window: int = 8
    dynamic_range: float = 255.0

    @property
    def c1(self) -> float:
        return (0.01 * self.dynamic_range) ** 2

    @property
    def c2(self) -> float:
        return (0.03 * self.dynamic_range) ** 2


@dataclass
class FrameSample:
    """A chosen frame subset with enough provenance to reproduce it."""

    asset_id: str
    strategy: SamplingStrategy
    indices: list[int]
    seed: Optional[int] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.indices, self.indices[1:])):
            raise ValueError("indices must be strictly increasing")
        if self.strategy is SamplingStrategy.UNIFORM_RANDOM and self.seed is None:
            raise ValueError("uniform random samples must record their seed")
        if self.strategy is SamplingStrategy.KEY_FRAME:
            alpha = self.params.get("alpha")
            delta_t = self.params.get("delta_t")
            if alpha is None or not (0.0 < alpha <= 1.0):
                raise ValueError(f"keyframe samples need alpha in (0, 1], got {alpha}")
            if delta_t is None or delta_t < 1:
                raise ValueError(f"keyframe samples need delta_t >= 1, got {delta_t}")

    def to_json(self) -> str:
        payload = {
            "asset_id": self.asset_id,
            "strategy": self.strategy.value,
            "indices": self.indices,
            "seed": self.seed,
            "params": dict(sorted(self.params.items())),
        }
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, raw: str) -> "FrameSample":
        payload = json.loads(raw)
        return cls(
            asset_id=payload["asset_id"],
            strategy=SamplingStrategy(payload["strategy"]),
            indices=list(payload["indices"]),
            seed=payload["seed"],
            params=dict(payload["params"]),
        )


def to_gray(frame: Frame) -> GrayFrame:
    """Luma conversion: 0.299 R + 0.587 G + 0.114 B per pixel."""
    pixels = frame.pixels.astype(np.float64)
    luma = 0.299 * pixels[:, :, 0] + 0.587 * pixels[:, :, 1] + 0.114 * pixels[:, :, 2]
    return GrayFrame(width=frame.width, height=frame.height, luma=luma)


def downscale(gray: GrayFrame, max_dim: int = SSIM_DOWNSCALE_MAX_DIM) -> GrayFrame:
    """Nearest-neighbor downscale so that max(width, height) <= max_dim."""
    longest = max(gray.width, gray.height)
    if longest <= max_dim:
        return gray
    scale = max_dim / longest
    new_w = max(1, round(gray.width * scale))
    new_h = max(1, round(gray.height * scale))
    # Sample source pixels at destination-cell centers.
    rows = np.minimum(((np.arange(new_h) + 0.5) * gray.height / new_h).astype(int), gray.height - 1)
    cols = np.minimum(((np.arange(new_w) + 0.5) * gray.width / new_w).astype(int), gray.width - 1)
    return GrayFrame(width=new_w, height=new_h, luma=gray.luma[np.ix_(rows, cols)])


def _block_moments(luma: np.ndarray, window: int) -> tuple[np.ndarray, np.ndarray]:
    h, w = luma.shape
    nby, nbx = h // window, w // window
    blocks = luma[: nby * window, : nbx * window].reshape(nby, window, nbx, window)
    blocks = blocks.transpose(0, 2, 1, 3).reshape(nby, nbx, window * window)
    return blocks.mean(axis=2), blocks


def ssim(a: GrayFrame, b: GrayFrame, params: SsimParams = SsimParams()) -> float:
    """Mean blocked SSIM between two equally sized gray frames.

    Non-overlapping window x window blocks; trailing partial blocks are
    dropped. Per-block statistics use population (1/n) weighting.
    """
    if (a.width, a.height) != (b.width, b.height):
        raise DimensionMismatch(
            f"{a.width}x{a.height} vs {b.width}x{b.height}"
        )
    if min(a.width, a.height) < params.window:
        raise FrameSmallerThanWindow(
            f"frame {a.width}x{a.height} smaller than window {params.window}"
        )
    mu_a, blocks_a = _block_moments(a.luma, params.window)
    mu_b, blocks_b = _block_moments(b.luma, params.window)
    var_a = (blocks_a**2).mean(axis=2) - mu_a**2
    var_b = (blocks_b**2).mean(axis=2) - mu_b**2
    cov = (blocks_a * blocks_b).mean(axis=2) - mu_a * mu_b
    c1, c2 = params.c1, params.c2
    per_block = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / (
        (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    )
    return float(per_block.mean())


def frame_diffs(
    frames: list[Frame],
    params: SsimParams = SsimParams(),
    max_dim: int = SSIM_DOWNSCALE_MAX_DIM,
) -> np.ndarray:
    """Consecutive-frame change scores: element i is 1 - ssim(frame i, frame i+1)."""
    if len(frames) < 2:
        raise TooFewFrames(f"need at least 2 frames, got {len(frames)}")
    grays = [downscale(to_gray(frame), max_dim) for frame in frames]
    return np.array(
        [1.0 - ssim(grays[i], grays[i + 1], params) for i in range(len(grays) - 1)]
    )


def uniform_random_sample(
    frames: list[Frame], m: int, seed: int, asset_id: str = ""
) -> FrameSample:
    """Draw m distinct frame indices without replacement, sorted ascending.

    Uses the pinned xorshift64* stream via a partial Fisher-Yates shuffle,
    so a seed fully determines the sample.
    """
    population = len(frames)
    if not 1 <= m <= population:
        raise SampleLargerThanPopulation(f"m={m} with {population} frames")
    rng = XorShift64Star(seed)
    pool = list(range(population))
    for j in range(m):
        swap = j + rng.randint_below(population - j)
        pool[j], pool[swap] = pool[swap], pool[j]
    return FrameSample(
        asset_id=asset_id,
        strategy=SamplingStrategy.UNIFORM_RANDOM,
        indices=sorted(pool[:m]),
        seed=seed,
        params={"m": m},
    )


def select_keyframes_from_diffs(
    diffs: np.ndarray,
    alpha: float,
    delta_t: int,
    max_frames: Optional[int] = None,
) -> list[int]:
    """Core keyframe rule applied to a precomputed change vector.

    Thresholds at alpha * max(diffs), keeps changes in ascending order
    with index gaps >= delta_t, and maps each kept change i to frame
    index i + 1 (the frame that reveals the change). All-zero change
    vectors fall back to frame 0; if the threshold filters everything
    else out (alpha == 1 with ties), the single largest change is kept.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must be in (0, 1], got {alpha}")
    if delta_t < 1:
        raise ValueError(f"delta_t must be >= 1, got {delta_t}")
    diffs = np.asarray(diffs, dtype=np.float64)
    max_diff = float(diffs.max())
    if max_diff <= 0.0:
        return [0]
    threshold = alpha * max_diff
    candidates = [i for i in range(len(diffs)) if diffs[i] > threshold]
    if not candidates:
        return [int(np.argmax(diffs)) + 1]

    kept: list[int] = []
    for i in candidates:
        if not kept or i - kept[-1] >= delta_t:
            kept.append(i)
    if max_frames is not None and len(kept) > max_frames:
        # Largest change wins; equal changes resolve to the smaller index.
        ranked = sorted(kept, key=lambda i: (-diffs[i], i))[:max_frames]
        kept = sorted(ranked)
    return [i + 1 for i in kept]


def keyframe_select(
    frames: list[Frame],
    alpha: float,
    delta_t: int,
    max_frames: Optional[int] = None,
    params: SsimParams = SsimParams(),
    asset_id: str = "",
) -> FrameSample:
    """Select frames at significant visual changes; see select_keyframes_from_diffs."""
    if len(frames) < 2:
        raise TooFewFrames(f"need at least 2 frames, got {len(frames)}")
    diffs = frame_diffs(frames, params)
    indices = select_keyframes_from_diffs(diffs, alpha, delta_t, max_frames)
    sample_params: dict = {"alpha": alpha, "delta_t": delta_t}
    if max_frames is not None:
        sample_params["max_frames"] = max_frames
    return FrameSample(
        asset_id=asset_id,
        strategy=SamplingStrategy.KEY_FRAME,
        indices=indices,
        seed=None,
        params=sample_params,
    )
