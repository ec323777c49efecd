"""Deterministic synthetic corpus: rendered figures with consistent landmarks.

Each clip shows a simple figure (elliptical head on a torso with arms and
legs) against a dark background.  Every one of the 8 emotion labels is
signaled by its own visual primitive - seven static colored patches and one
moving white dot - drawn only when the label is active, so a classifier can
in principle reach perfect separation on every label:

====== ============================== ===========================
label  primitive                      region
====== ============================== ===========================
0      yellow patch                   lower torso, left
1      magenta patch                  lower torso, right
2      cyan patch                     forehead (inside face box,
                                      above the mask polygon)
3      red patch                      mouth (inside the mask
                                      polygon region)
4      orange patch                   left arm
5      green patch                    torso center
6      white dot sweeping per frame   lower torso band
7      purple patch                   right arm
====== ============================== ===========================

Label 3 is the mask-sensitive label: its signal sits inside the region a
synthetic mask covers, so masking the face hides it while the body crop
(face blacked out) never sees it either way.

The 468-point face layout is analytic: the face oval sits on the head
ellipse and interior points (eyes, brows, nose, mouth, chin) have fixed
canonical coordinates with a per-point depth, so rotating the head about
its vertical axis moves the nose faster than the silhouette - the same
foreshortening a real mesh tracker reports.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import EMOTION_LABELS, NUM_LABELS, clip_rng, save_frames
from .geometry import FACE_MESH_SIZE, LandmarkSet, write_landmarks

# Face-oval vertex cycle, clockwise from the top of the forehead.
_FACE_OVAL_CYCLE = (
    10, 338, 297, 332, 284, 251, 389, 356, 454, 323, 361, 288, 397, 365,
    379, 378, 400, 377, 152, 148, 176, 149, 150, 136, 172, 58, 132, 93,
    234, 127, 162, 21, 54, 103, 67, 109,
)

# Canonical (x, y, depth) for interior points, in head-ellipse units:
# x grows to the subject's left (image right), y grows downward, depth grows
# toward the camera (0 at the silhouette).
_INTERIOR_POINTS = {
    6: (0.0, -0.22, 0.95),    # nose bridge
    1: (0.0, 0.12, 1.10),     # nose tip
    2: (0.0, 0.28, 0.95),     # below the nose
    33: (-0.58, -0.30, 0.45),   # right eye outer corner
    133: (-0.28, -0.30, 0.55),  # right eye inner corner
    159: (-0.43, -0.36, 0.50),  # right upper eyelid
    145: (-0.43, -0.26, 0.50),  # right lower eyelid
    263: (0.58, -0.30, 0.45),   # left eye outer corner
    362: (0.28, -0.30, 0.55),   # left eye inner corner
    386: (0.43, -0.36, 0.50),   # left upper eyelid
    374: (0.43, -0.26, 0.50),   # left lower eyelid
    70: (-0.62, -0.50, 0.45),   # right brow, outer / middle / inner
    105: (-0.42, -0.54, 0.50),
    107: (-0.18, -0.50, 0.55),
    336: (0.18, -0.50, 0.55),   # left brow, inner / middle / outer
    334: (0.42, -0.54, 0.50),
    300: (0.62, -0.50, 0.45),
    61: (-0.38, 0.55, 0.65),    # mouth corners
    291: (0.38, 0.55, 0.65),
    0: (0.0, 0.42, 0.80),       # upper lip
    13: (0.0, 0.52, 0.75),      # inner lips
    14: (0.0, 0.56, 0.75),
    17: (0.0, 0.66, 0.75),      # lower lip
    199: (0.0, 0.85, 0.70),     # chin, above the oval boundary
    175: (0.0, 0.94, 0.65),
}

# Probe sets used by containment checks: what a mask must cover / leave free.
MOUTH_PROBES = (61, 291, 0, 13, 14, 17, 199, 1)
EYE_PROBES = (33, 133, 159, 145, 263, 362, 386, 374)
BROW_PROBES = (70, 105, 107, 336, 334, 300)

_GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))

MASK_SENSITIVE_LABEL = 3  # the mouth patch: hidden by a synthetic mask
FACE_LOCAL_LABELS = (2, 3)

_BACKGROUND = (38, 40, 44)
_SKIN = (205, 172, 150)
_SHIRT = (70, 95, 165)
_SLEEVE = (90, 110, 150)
_TROUSERS = (55, 60, 70)
_EYE_COLOR = (30, 30, 35)
_MOUTH_LINE = (80, 30, 30)

SIGNAL_COLORS = (
    (250, 225, 40),   # 0 yellow
    (235, 60, 220),   # 1 magenta
    (60, 225, 235),   # 2 cyan
    (245, 35, 35),    # 3 red
    (255, 145, 35),   # 4 orange
    (60, 205, 80),    # 5 green
    (250, 250, 250),  # 6 white moving dot
    (165, 60, 235),   # 7 purple
)

# (r0, r1, c0, c1) as fractions of the frame for the body-anchored signals.
_BODY_SIGNAL_RECTS = {
    0: (0.83, 0.90, 0.34, 0.42),
    1: (0.83, 0.90, 0.58, 0.66),
    4: (0.54, 0.68, 0.215, 0.285),
    5: (0.50, 0.62, 0.44, 0.56),
    7: (0.54, 0.68, 0.715, 0.785),
}
_DOT_ROW = 0.74
_DOT_SWEEP = (0.34, 0.66)

_MAX_JITTER = 1.0  # px, per-clip head placement
_BOB_AMPLITUDE = 0.8  # px, per-frame vertical head bob


def _canonical_face_points() -> np.ndarray:
    """(468, 3) canonical (x, y, depth) table, deterministic."""
    pts = np.zeros((FACE_MESH_SIZE, 3), dtype=np.float64)
    placed = np.zeros(FACE_MESH_SIZE, dtype=bool)
    for k, idx in enumerate(_FACE_OVAL_CYCLE):
        angle = -math.pi / 2.0 + 2.0 * math.pi * k / len(_FACE_OVAL_CYCLE)
        pts[idx] = (math.cos(angle), math.sin(angle), 0.0)
        placed[idx] = True
    for idx, xyz in _INTERIOR_POINTS.items():
        pts[idx] = xyz
        placed[idx] = True
    for idx in np.flatnonzero(~placed):
        radius = 0.15 + 0.6 * ((int(idx) * 37) % 89) / 89.0
        theta = int(idx) * _GOLDEN_ANGLE
        pts[idx] = (
            0.85 * radius * math.cos(theta),
            0.05 + 0.9 * radius * math.sin(theta),
            0.8 * (1.0 - radius),
        )
    return pts


_CANONICAL_FACE = _canonical_face_points()


def face_landmark_layout(
    center: tuple[float, float],
    radii: tuple[float, float],
    yaw: float = 0.0,
) -> np.ndarray:
    """Project the canonical face onto pixel coordinates.

    ``yaw`` (radians) rotates the head about its vertical axis; positive yaw
    moves the nose toward +x.  Returns a (468, 2) array.
    """
    cx, cy = center
    rx, ry = radii
    x = _CANONICAL_FACE[:, 0] * math.cos(yaw) + _CANONICAL_FACE[:, 2] * math.sin(yaw)
    out = np.empty((FACE_MESH_SIZE, 2), dtype=np.float64)
    out[:, 0] = cx + x * rx
    out[:, 1] = cy + _CANONICAL_FACE[:, 1] * ry
    return out


@dataclass(frozen=True)
class SyntheticSpec:
    """Size, seed, and labeling knobs for one generated corpus."""

    clips: int = 32
    frames: int = 12
    width: int = 32
    height: int = 32
    seed: int = 0
    label_probability: float = 0.5
    label_overrides: tuple[tuple[int, tuple[int, ...]], ...] | None = None

    def __post_init__(self):
        if self.clips < 1 or self.frames < 1:
            raise ValueError("clips and frames must be >= 1")
        if self.width < 24 or self.height < 24:
            raise ValueError("frames must be at least 24x24 to fit the figure")


def _split_for(index: int) -> str:
    return ("train", "train", "train", "val", "test")[index % 5]


def _rect_slices(rect, width, height):
    r0, r1, c0, c1 = rect
    return (
        slice(int(r0 * height), max(int(r0 * height) + 1, int(r1 * height))),
        slice(int(c0 * width), max(int(c0 * width) + 1, int(c1 * width))),
    )


def _head_geometry(spec: SyntheticSpec, clip_index: int):
    rng = clip_rng(spec.seed, 1000, clip_index)
    cx = 0.5 * spec.width + rng.uniform(-_MAX_JITTER, _MAX_JITTER)
    cy = 0.28 * spec.height + rng.uniform(-_MAX_JITTER, _MAX_JITTER)
    rx = 0.16 * spec.width * (1.0 + rng.uniform(-0.05, 0.05))
    ry = 0.20 * spec.height * (1.0 + rng.uniform(-0.05, 0.05))
    yaw = rng.uniform(-0.12, 0.12)
    phase = rng.uniform(0.0, 2.0 * math.pi)
    return cx, cy, rx, ry, yaw, phase


def _body_points(spec: SyntheticSpec, rng) -> tuple[np.ndarray, np.ndarray]:
    w, h = spec.width, spec.height
    base = np.array(
        [
            (0.50, 0.06), (0.34, 0.48), (0.66, 0.48), (0.26, 0.62), (0.74, 0.62),
            (0.23, 0.76), (0.77, 0.76), (0.40, 0.80), (0.60, 0.80),
            (0.41, 0.90), (0.59, 0.90), (0.42, 0.96), (0.58, 0.96),
        ],
        dtype=np.float64,
    ) * (w, h)
    body = np.column_stack([base, 0.85 + 0.1 * rng.random(len(base))])
    wrists = base[5:7]
    offsets = np.array([(-0.8, 0.6), (0.0, 1.2), (0.8, 0.6)])
    hand_pts = np.concatenate([wrist + offsets for wrist in wrists])
    hands = np.column_stack([hand_pts, np.full(len(hand_pts), 0.9)])
    return body, hands


def _dot_position(spec: SyntheticSpec, t: int) -> float:
    if spec.frames == 1:
        pos = 0.0
    else:
        pos = t / (spec.frames - 1)
    tri = 2.0 * pos if pos <= 0.5 else 2.0 * (1.0 - pos)
    lo, hi = _DOT_SWEEP
    return (lo + tri * (hi - lo)) * spec.width


def _fill_ellipse(frame, cx, cy, rx, ry, color):
    h, w = frame.shape[:2]
    yy = np.arange(h, dtype=np.float64)[:, None]
    xx = np.arange(w, dtype=np.float64)[None, :]
    mask = ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2 <= 1.0
    frame[mask] = color


def _face_patch_slices(cx, cy, rx, ry, y_offset, half_x, half_y):
    ycen = cy + y_offset * ry
    r0 = int(round(ycen - half_y * ry))
    r1 = int(round(ycen + half_y * ry)) + 1
    c0 = int(round(cx - half_x * rx))
    c1 = int(round(cx + half_x * rx)) + 1
    return slice(r0, r1), slice(c0, c1)


def render_clip_frame(spec: SyntheticSpec, clip_index: int, t: int, labels) -> np.ndarray:
    """Render frame ``t`` of one clip; pure function of its arguments."""
    w, h = spec.width, spec.height
    cx, cy, rx, ry, yaw, phase = _head_geometry(spec, clip_index)
    cy_t = cy + _BOB_AMPLITUDE * math.sin(2.0 * math.pi * t / spec.frames + phase)

    frame = np.empty((h, w, 3), dtype=np.uint8)
    frame[:] = _BACKGROUND
    frame[int(0.46 * h):int(0.82 * h), int(0.32 * w):int(0.68 * w)] = _SHIRT
    frame[int(0.50 * h):int(0.78 * h), int(0.21 * w):int(0.30 * w)] = _SLEEVE
    frame[int(0.50 * h):int(0.78 * h), int(0.70 * w):int(0.79 * w)] = _SLEEVE
    frame[int(0.82 * h):int(0.97 * h), int(0.37 * w):int(0.47 * w)] = _TROUSERS
    frame[int(0.82 * h):int(0.97 * h), int(0.53 * w):int(0.63 * w)] = _TROUSERS

    _fill_ellipse(frame, cx, cy_t, rx * abs(math.cos(yaw)), ry, _SKIN)
    layout = face_landmark_layout((cx, cy_t), (rx, ry), yaw)
    for eye in (159, 386):
        r, c = int(round(layout[eye, 1])), int(round(layout[eye, 0]))
        frame[max(r, 0):r + 2, max(c, 0):c + 2] = _EYE_COLOR
    rows, cols = _face_patch_slices(cx, cy_t, rx, ry, 0.52, 0.30, 0.04)
    frame[rows, cols] = _MOUTH_LINE

    for label in (0, 1, 4, 5, 7):
        if labels[label]:
            rows, cols = _rect_slices(_BODY_SIGNAL_RECTS[label], w, h)
            frame[rows, cols] = SIGNAL_COLORS[label]
    if labels[2]:
        rows, cols = _face_patch_slices(cx, cy_t, rx, ry, -0.62, 0.38, 0.14)
        frame[rows, cols] = SIGNAL_COLORS[2]
    if labels[MASK_SENSITIVE_LABEL]:
        rows, cols = _face_patch_slices(cx, cy_t, rx, ry, 0.55, 0.34, 0.14)
        frame[rows, cols] = SIGNAL_COLORS[MASK_SENSITIVE_LABEL]
    if labels[6]:
        col = _dot_position(spec, t)
        half = max(1, int(0.03 * w))
        r = int(_DOT_ROW * h)
        frame[r - half:r + half + 1, int(col) - half:int(col) + half + 1] = SIGNAL_COLORS[6]
    return frame


def clip_landmarks(spec: SyntheticSpec, clip_index: int) -> list[LandmarkSet]:
    """Per-frame landmark sets matching :func:`render_clip_frame` exactly."""
    cx, cy, rx, ry, yaw, phase = _head_geometry(spec, clip_index)
    body, hands = _body_points(spec, clip_rng(spec.seed, 1001, clip_index))
    out = []
    for t in range(spec.frames):
        cy_t = cy + _BOB_AMPLITUDE * math.sin(2.0 * math.pi * t / spec.frames + phase)
        out.append(
            LandmarkSet(
                frame_index=t,
                face=face_landmark_layout((cx, cy_t), (rx, ry), yaw),
                body=body,
                hands=hands,
            )
        )
    return out


def _sample_labels(spec: SyntheticSpec) -> np.ndarray:
    rng = clip_rng(spec.seed, 2000)
    labels = (rng.random((spec.clips, NUM_LABELS)) < spec.label_probability).astype(np.int64)
    splits = [_split_for(i) for i in range(spec.clips)]
    for split in ("train", "val", "test"):
        members = [i for i, s in enumerate(splits) if s == split]
        if len(members) < 2:
            continue
        for label in range(NUM_LABELS):
            column = labels[members, label]
            if column.min() != column.max():
                continue
            flips = rng.choice(members, size=max(1, len(members) // 3), replace=False)
            labels[flips, label] = 1 - labels[flips, label]
    if spec.label_overrides:
        for clip_index, row in spec.label_overrides:
            labels[clip_index] = np.asarray(row, dtype=np.int64)
    return labels


def label_signal_bands(spec: SyntheticSpec) -> dict[int, tuple[int, int, int, int]]:
    """Per-label (r0, r1, c0, c1) pixel bands that contain the signal for
    every clip and frame, padded for head jitter; used by signal audits."""
    w, h = spec.width, spec.height
    bands = {}
    for label, rect in _BODY_SIGNAL_RECTS.items():
        rows, cols = _rect_slices(rect, w, h)
        bands[label] = (rows.start, rows.stop, cols.start, cols.stop)
    pad = _MAX_JITTER + _BOB_AMPLITUDE + 3.0
    rx = 0.16 * w * 1.05
    ry = 0.20 * h * 1.05
    cx, cy = 0.5 * w, 0.28 * h
    for label, y_off, half_x, half_y in (
        (2, -0.62, 0.38, 0.14),
        (MASK_SENSITIVE_LABEL, 0.55, 0.34, 0.14),
    ):
        ycen = cy + y_off * ry
        bands[label] = (
            int(ycen - half_y * ry - pad),
            int(ycen + half_y * ry + pad) + 1,
            int(cx - half_x * rx - pad),
            int(cx + half_x * rx + pad) + 1,
        )
    half = max(1, int(0.03 * w))
    r = int(_DOT_ROW * h)
    bands[6] = (
        r - half - 1,
        r + half + 2,
        int(_DOT_SWEEP[0] * w) - half - 1,
        int(_DOT_SWEEP[1] * w) + half + 2,
    )
    return bands


def generate_synthetic_corpus(spec: SyntheticSpec, out_dir) -> dict:
    """Write manifest + clips + landmarks; returns a bookkeeping summary.

    The same spec always produces byte-identical files.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    labels = _sample_labels(spec)
    manifest_lines = []
    for i in range(spec.clips):
        rel = f"clips/clip_{i:04d}"
        clip_dir = out_dir / rel
        frames = [
            render_clip_frame(spec, i, t, labels[i]) for t in range(spec.frames)
        ]
        save_frames(clip_dir, frames)
        write_landmarks(clip_dir / "landmarks.jsonl", clip_landmarks(spec, i))
        manifest_lines.append(
            json.dumps(
                {
                    "path": rel,
                    "split": _split_for(i),
                    "subject_id": f"s{i % 8}",
                    "labels": labels[i].tolist(),
                },
                sort_keys=True,
            )
        )
    manifest_path = out_dir / "manifest.jsonl"
    manifest_path.write_text("\n".join(manifest_lines) + "\n", encoding="utf-8")

    splits = [_split_for(i) for i in range(spec.clips)]
    counts = {
        split: labels[[i for i, s in enumerate(splits) if s == split]].sum(axis=0).tolist()
        for split in ("train", "val", "test")
    }
    summary = {
        "clips": spec.clips,
        "frames": spec.frames,
        "width": spec.width,
        "height": spec.height,
        "seed": spec.seed,
        "label_names": list(EMOTION_LABELS),
        "per_split_label_counts": counts,
        "mask_sensitive_label": MASK_SENSITIVE_LABEL,
        "face_local_labels": list(FACE_LOCAL_LABELS),
    }
    (out_dir / "corpus.json").write_text(
        json.dumps(summary, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    summary["manifest"] = str(manifest_path)
    summary["labels"] = labels
    return summary


def corpus_digest(out_dir) -> str:
    """SHA-256 over every generated file, in path order."""
    out_dir = Path(out_dir)
    digest = hashlib.sha256()
    for path in sorted(p for p in out_dir.rglob("*") if p.is_file()):
        digest.update(str(path.relative_to(out_dir)).encode())
        digest.update(path.read_bytes())
    return digest.hexdigest()
