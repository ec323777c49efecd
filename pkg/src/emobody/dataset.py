"""Manifest ingestion, frame decoding, and segment/snippet sampling.

A "video" on disk is a directory of ``frame_*.png`` files plus an optional
``landmarks.jsonl`` next to them.  The manifest is line-delimited JSON, one
clip per line::

    {"path": "clips/clip_0000", "split": "train",
     "subject_id": "s0", "labels": [0, 1, 0, 0, 1, 0, 0, 0]}

Paths are resolved relative to the manifest's directory.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import MissingVideoError, ParseError

log = logging.getLogger(__name__)

EMOTION_LABELS = (
    "Curiosity",
    "Uncertainty",
    "Excitement",
    "Happiness",
    "Surprise",
    "Disgust",
    "Fear",
    "Frustration",
)
NUM_LABELS = len(EMOTION_LABELS)
SPLITS = ("train", "val", "test")

TRAIN_RANDOM = "train_random"
EVAL_CENTER = "eval_center"


@dataclass
class VideoClip:
    """Decoded frames plus ground truth and identity metadata."""

    frames: np.ndarray  # (T, H, W, 3) uint8
    labels: np.ndarray  # (8,) int, values in {0, 1}
    subject_id: str
    split: str

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.shape != (NUM_LABELS,):
            raise ValueError(f"labels must have length {NUM_LABELS}")
        if not np.isin(self.labels, (0, 1)).all():
            raise ValueError("labels must be binary")
        if len(self.frames) < 1:
            raise ValueError("clip must contain at least one frame")


@dataclass
class ClipRecord:
    """Lazy manifest entry; frames decode on demand via :meth:`load`."""

    path: Path
    split: str
    subject_id: str
    labels: np.ndarray
    landmarks_path: Path | None = None

    def load(self) -> VideoClip:
        return VideoClip(
            frames=load_clip_frames(self.path),
            labels=self.labels,
            subject_id=self.subject_id,
            split=self.split,
        )


@dataclass(frozen=True)
class SamplerConfig:
    """Segment count K, snippet length n, sampling mode and seed."""

    K: int = 3
    n: int = 3
    mode: str = EVAL_CENTER
    seed: int = 0

    def __post_init__(self):
        if self.K < 1 or self.n < 1:
            raise ValueError("K and n must be >= 1")
        if self.mode not in (TRAIN_RANDOM, EVAL_CENTER):
            raise ValueError(f"unknown sampling mode {self.mode!r}")


@dataclass
class Snippet:
    """n consecutive frames drawn from one segment.

    ``frame_indices`` may repeat the segment's last frame when the segment is
    shorter than n (repeat padding).  ``frames`` is filled by
    :func:`gather_snippet_frames`.
    """

    frames: np.ndarray | None
    segment_index: int
    start_frame: int
    frame_indices: tuple[int, ...]


def save_frames(out_dir, frames) -> None:
    """Write frames as frame_0000.png, frame_0001.png, ..."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(frames):
        Image.fromarray(np.asarray(frame, dtype=np.uint8)).save(
            out_dir / f"frame_{i:04d}.png"
        )


def load_clip_frames(clip_dir) -> np.ndarray:
    """Decode a frame-directory clip into a (T, H, W, 3) uint8 array."""
    clip_dir = Path(clip_dir)
    files = sorted(clip_dir.glob("frame_*.png"))
    if not files:
        raise MissingVideoError(f"no frame_*.png files in {clip_dir}")
    frames = [np.asarray(Image.open(f).convert("RGB"), dtype=np.uint8) for f in files]
    return np.stack(frames)


def load_manifest(path) -> list[ClipRecord]:
    """Parse and validate the manifest; logs per-split label counts.

    Raises:
        ParseError: malformed line, with line number.
        MissingVideoError: a clip path does not exist on disk.
    """
    path = Path(path)
    base = path.parent
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(path, lineno, f"invalid JSON: {exc}") from exc
            for key in ("path", "split", "subject_id", "labels"):
                if key not in row:
                    raise ParseError(path, lineno, f"missing field {key!r}")
            if row["split"] not in SPLITS:
                raise ParseError(path, lineno, f"unknown split {row['split']!r}")
            labels = row["labels"]
            if len(labels) != NUM_LABELS:
                raise ParseError(
                    path, lineno, f"expected {NUM_LABELS} labels, got {len(labels)}"
                )
            if any(v not in (0, 1) for v in labels):
                raise ParseError(path, lineno, "labels must be 0 or 1")
            clip_path = (base / row["path"]).resolve()
            if not clip_path.exists():
                raise MissingVideoError(f"{path}:{lineno}: missing video {clip_path}")
            lm_path = row.get("landmarks")
            if lm_path is not None:
                lm_path = (base / lm_path).resolve()
            else:
                candidate = clip_path / "landmarks.jsonl"
                lm_path = candidate if candidate.exists() else None
            records.append(
                ClipRecord(
                    path=clip_path,
                    split=row["split"],
                    subject_id=str(row["subject_id"]),
                    labels=np.asarray(labels, dtype=np.int64),
                    landmarks_path=lm_path,
                )
            )
    for split in SPLITS:
        counts = label_counts(records, split)
        if counts.sum():
            log.info("%s label counts: %s", split, dict(zip(EMOTION_LABELS, counts.tolist())))
    return records


def label_counts(records, split: str | None = None) -> np.ndarray:
    """Per-label positive counts, optionally restricted to one split."""
    rows = [r.labels for r in records if split is None or r.split == split]
    if not rows:
        return np.zeros(NUM_LABELS, dtype=np.int64)
    return np.sum(rows, axis=0)


def divide_into_segments(frame_count: int, K: int) -> list[tuple[int, int]]:
    """Split ``[0, frame_count-1]`` into K contiguous inclusive ranges.

    Lengths differ by at most one, with the longer segments first.  When the
    video is shorter than K the index space is padded virtually to K frames
    (one frame per segment); downstream frame gathering clamps any index past
    the real end to the final frame.
    """
    if frame_count < 1 or K < 1:
        raise ValueError("frame_count and K must be >= 1")
    effective = max(frame_count, K)
    base, rem = divmod(effective, K)
    ranges = []
    start = 0
    for k in range(K):
        length = base + (1 if k < rem else 0)
        ranges.append((start, start + length - 1))
        start += length
    return ranges


def sample_snippet(
    segment: tuple[int, int],
    n: int,
    mode: str,
    rng: np.random.Generator | None = None,
    segment_index: int = 0,
) -> Snippet:
    """Pick n consecutive frame indices inside one segment.

    ``train_random`` draws the start uniformly; ``eval_center`` starts at the
    segment midpoint minus n//2 (clamped) and never touches the rng.
    Segments shorter than n repeat their final frame.
    """
    s, e = segment
    if e < s:
        raise ValueError(f"empty segment {segment}")
    last_start = e - n + 1
    if mode == TRAIN_RANDOM:
        if last_start <= s:
            start = s
        else:
            if rng is None:
                raise ValueError("train_random sampling requires an rng")
            start = int(rng.integers(s, last_start + 1))
    elif mode == EVAL_CENTER:
        start = (s + e) // 2 - n // 2
        start = max(s, min(start, max(s, last_start)))
    else:
        raise ValueError(f"unknown sampling mode {mode!r}")
    indices = tuple(min(start + i, e) for i in range(n))
    return Snippet(
        frames=None,
        segment_index=segment_index,
        start_frame=start,
        frame_indices=indices,
    )


def plan_snippets(
    frame_count: int,
    config: SamplerConfig,
    rng: np.random.Generator | None = None,
) -> list[Snippet]:
    """One snippet per segment for a clip of ``frame_count`` frames."""
    return [
        sample_snippet(seg, config.n, config.mode, rng, segment_index=k)
        for k, seg in enumerate(divide_into_segments(frame_count, config.K))
    ]


def gather_snippet_frames(frames: np.ndarray, snippet: Snippet) -> Snippet:
    """Fill a planned snippet with real frames, clamping padded indices."""
    last = len(frames) - 1
    idx = [min(i, last) for i in snippet.frame_indices]
    return Snippet(
        frames=frames[idx],
        segment_index=snippet.segment_index,
        start_frame=snippet.start_frame,
        frame_indices=snippet.frame_indices,
    )


def clip_rng(seed: int, *stream: int) -> np.random.Generator:
    """Independent generator for one (seed, stream...) key, order-free."""
    return np.random.default_rng((int(seed),) + tuple(int(s) for s in stream))
