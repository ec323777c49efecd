"""Landmark-driven mask rendering, body/face boxes, and face blackout.

All operations are pure functions of their inputs: they never mutate the
frames or landmark arrays they receive, so they are safe to call from
concurrent workers.

Coordinate conventions
----------------------
Pixel centers sit on the integer grid: the pixel in row ``r``, column ``c``
has center ``(x=c, y=r)``.  Bounding boxes store inclusive coordinate
extremes; the pixels covered by a box are those whose centers fall inside
``[x0, x1] x [y0, y1]``.  Polygon interiors are resolved with the even-odd
rule evaluated at pixel centers.

Landmark file format (line-delimited JSON, one record per frame)::

    {"frame_index": 0,
     "face":  [[x, y], ...]          # exactly 468 points, or null/absent
     "body":  [[x, y, conf], ...],   # pose keypoints, or null/absent
     "hands": [[x, y, conf], ...]}   # hand keypoints, possibly empty
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateFaceError,
    NoBodyError,
    NoFaceError,
    ParseError,
)

FACE_MESH_SIZE = 468

# Jawline vertex chains over the 468-vertex face-mesh topology.  The chains
# follow the lower face oval from just below one ear, around the chin, up to
# just below the other ear.  "Right" is the subject's right, which appears on
# the low-x side of a frontal camera view.
RIGHT_JAWLINE = (234, 93, 132, 58, 172, 136, 150, 149, 176, 148, 152)
LEFT_JAWLINE = (377, 400, 378, 379, 365, 397, 288, 361, 323, 454)
NOSE_BRIDGE = 6

# Profile candidates trim the foreshortened (far) side of the jawline so the
# polygon stays simple when the head turns; the trimmed chains keep the
# chin-adjacent vertices and drop the ones nearest the occluded ear.
_JAWLINE_CANDIDATES = {
    "frontal": (RIGHT_JAWLINE, LEFT_JAWLINE),
    "left": (RIGHT_JAWLINE, LEFT_JAWLINE[:6]),
    "right": (RIGHT_JAWLINE[5:], LEFT_JAWLINE),
}


@dataclass(frozen=True)
class MaskConfig:
    """Knobs for synthetic mask construction.

    ``yaw_threshold`` is the cutoff on the signed nose-offset ratio
    r = (nose_x - jaw_midpoint_x) / jaw_width used to pick a jawline
    candidate: r < -threshold selects the "right" profile candidate,
    r > +threshold the "left" one, anything in between stays frontal.
    """

    jawline_candidates: dict = field(default_factory=lambda: dict(_JAWLINE_CANDIDATES))
    nose_index: int = NOSE_BRIDGE
    yaw_threshold: float = 0.25
    fill_color: tuple = (140, 170, 220)
    min_polygon_area: float = 16.0


@dataclass
class LandmarkSet:
    """Per-frame 2D keypoints: face mesh, pose, and hand points."""

    frame_index: int
    face: np.ndarray | None = None  # (468, 2)
    body: np.ndarray | None = None  # (N, 3) with confidence
    hands: np.ndarray | None = None  # (M, 3) with confidence

    def __post_init__(self):
        if self.frame_index < 0:
            raise ValueError("frame_index must be >= 0")
        if self.face is not None:
            self.face = np.asarray(self.face, dtype=np.float64)
            if self.face.shape != (FACE_MESH_SIZE, 2):
                raise ValueError(
                    f"face must have shape ({FACE_MESH_SIZE}, 2), got {self.face.shape}"
                )
            if not np.all(np.isfinite(self.face)):
                raise ValueError("face coordinates must be finite")
        for name in ("body", "hands"):
            pts = getattr(self, name)
            if pts is None:
                continue
            pts = np.asarray(pts, dtype=np.float64).reshape(-1, 3)
            if not np.all(np.isfinite(pts)):
                raise ValueError(f"{name} keypoints must be finite")
            if pts.size and (pts[:, 2].min() < 0.0 or pts[:, 2].max() > 1.0):
                raise ValueError(f"{name} confidences must lie in [0, 1]")
            setattr(self, name, pts)


@dataclass
class MaskPolygon:
    """Ordered mask outline: right jawline top-to-chin, left jawline
    chin-to-top, then the single nose vertex."""

    vertices: np.ndarray  # (V, 2)
    yaw_bin: str
    fill_color: tuple

    @property
    def area(self) -> float:
        return polygon_area(self.vertices)


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box with inclusive coordinate extremes."""

    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise ValueError(f"degenerate box {self}")

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    def pixel_slices(self) -> tuple[slice, slice]:
        """(rows, cols) slices of the pixels whose centers the box covers."""
        r0 = int(np.ceil(self.y0))
        r1 = int(np.floor(self.y1))
        c0 = int(np.ceil(self.x0))
        c1 = int(np.floor(self.x1))
        return slice(r0, r1 + 1), slice(c0, c1 + 1)


def polygon_area(vertices: np.ndarray) -> float:
    """Unsigned shoelace area of a closed polygon."""
    v = np.asarray(vertices, dtype=np.float64)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _orient(p, q, r):
    return (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])


def _segments_intersect(p1, p2, q1, q2) -> bool:
    d1 = _orient(q1, q2, p1)
    d2 = _orient(q1, q2, p2)
    d3 = _orient(p1, p2, q1)
    d4 = _orient(p1, p2, q2)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)):
        return True

    def on_segment(a, b, c):
        return (
            min(a[0], b[0]) <= c[0] <= max(a[0], b[0])
            and min(a[1], b[1]) <= c[1] <= max(a[1], b[1])
        )

    if d1 == 0 and on_segment(q1, q2, p1):
        return True
    if d2 == 0 and on_segment(q1, q2, p2):
        return True
    if d3 == 0 and on_segment(p1, p2, q1):
        return True
    if d4 == 0 and on_segment(p1, p2, q2):
        return True
    return False


def polygon_is_simple(vertices: np.ndarray) -> bool:
    """True if no two non-adjacent edges intersect or touch."""
    v = np.asarray(vertices, dtype=np.float64)
    n = len(v)
    edges = [(v[i], v[(i + 1) % n]) for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue  # adjacent edges share a vertex
            if _segments_intersect(*edges[i], *edges[j]):
                return False
    return True


def build_mask_polygon(landmarks: LandmarkSet, config: MaskConfig | None = None) -> MaskPolygon:
    """Construct the mask outline from tracked jawline and nose vertices.

    The jawline candidate is chosen by binning head yaw from the signed
    nose-offset ratio (see :class:`MaskConfig`).

    Raises:
        NoFaceError: no face landmarks in this frame.
        DegenerateFaceError: the polygon is too small or self-intersecting
            (face effectively edge-on or collapsed).
    """
    cfg = config or MaskConfig()
    if landmarks.face is None:
        raise NoFaceError(f"frame {landmarks.frame_index}: no face landmarks")
    face = landmarks.face

    right_frontal, left_frontal = cfg.jawline_candidates["frontal"]
    jaw_right_x = face[right_frontal[0], 0]
    jaw_left_x = face[left_frontal[-1], 0]
    jaw_width = abs(jaw_left_x - jaw_right_x)
    if jaw_width < 1e-9:
        raise DegenerateFaceError(
            f"frame {landmarks.frame_index}: jawline has zero width"
        )
    ratio = (face[cfg.nose_index, 0] - 0.5 * (jaw_left_x + jaw_right_x)) / jaw_width
    # Positive ratio: nose displaced toward the left-jawline side.
    if ratio > cfg.yaw_threshold:
        yaw_bin = "left"
    elif ratio < -cfg.yaw_threshold:
        yaw_bin = "right"
    else:
        yaw_bin = "frontal"

    right_chain, left_chain = cfg.jawline_candidates[yaw_bin]
    indices = list(right_chain) + list(left_chain) + [cfg.nose_index]
    vertices = face[indices].copy()

    area = polygon_area(vertices)
    if area < cfg.min_polygon_area:
        raise DegenerateFaceError(
            f"frame {landmarks.frame_index}: polygon area {area:.2f} below "
            f"minimum {cfg.min_polygon_area}"
        )
    if not polygon_is_simple(vertices):
        raise DegenerateFaceError(
            f"frame {landmarks.frame_index}: polygon self-intersects (extreme pose)"
        )
    return MaskPolygon(vertices=vertices, yaw_bin=yaw_bin, fill_color=cfg.fill_color)


def polygon_pixel_mask(vertices: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Boolean (H, W) mask of pixels whose centers fall inside the polygon.

    Even-odd rule at pixel centers: a center is inside when a horizontal ray
    toward +x crosses an odd number of edges.  Horizontal edges never cross;
    vertices on a scanline are resolved by the half-open ``y1 > r != y2 > r``
    rule, which makes the fill independent of vertex duplication.
    """
    h, w = shape
    v = np.asarray(vertices, dtype=np.float64)
    xs = np.arange(w, dtype=np.float64)[None, :]
    ys = np.arange(h, dtype=np.float64)[:, None]
    inside = np.zeros((h, w), dtype=bool)
    n = len(v)
    for i in range(n):
        x1, y1 = v[i]
        x2, y2 = v[(i + 1) % n]
        if y1 == y2:
            continue
        crosses = (y1 > ys) != (y2 > ys)
        xcross = x1 + (ys - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (xs < xcross)
    return inside


def apply_mask(frame: np.ndarray, polygon: MaskPolygon) -> np.ndarray:
    """Fill the polygon interior with its color; other pixels are untouched.

    Vertices outside the frame clip naturally because only in-frame pixel
    centers are tested.
    """
    out = frame.copy()
    mask = polygon_pixel_mask(polygon.vertices, frame.shape[:2])
    out[mask] = np.asarray(polygon.fill_color, dtype=frame.dtype)
    return out


def _expand_extremes(x0, y0, x1, y1, fraction):
    """Grow each dimension by ``fraction`` of its size, half per side."""
    dx = (x1 - x0) * fraction / 2.0
    dy = (y1 - y0) * fraction / 2.0
    return x0 - dx, y0 - dy, x1 + dx, y1 + dy


def _clip_box(x0, y0, x1, y1, image_size, error_cls, what):
    w, h = image_size
    x0 = max(x0, 0.0)
    y0 = max(y0, 0.0)
    x1 = min(x1, float(w - 1))
    y1 = min(y1, float(h - 1))
    if not (x0 < x1 and y0 < y1):
        raise error_cls(f"{what} box degenerate after clipping to {w}x{h} image")
    return BoundingBox(x0, y0, x1, y1)


def body_bounding_box(
    landmarks: LandmarkSet,
    image_size: tuple[int, int],
    expansion: float = 0.10,
    min_confidence: float = 0.5,
) -> BoundingBox:
    """Box around the union of body and hand keypoints.

    Each dimension grows by ``expansion`` of its size in total (half added
    per side), then the box is clipped to the image.

    Raises:
        NoBodyError: nothing survives the confidence filter.
    """
    groups = []
    for pts in (landmarks.body, landmarks.hands):
        if pts is not None and pts.size:
            kept = pts[pts[:, 2] >= min_confidence]
            if kept.size:
                groups.append(kept[:, :2])
    if not groups:
        raise NoBodyError(
            f"frame {landmarks.frame_index}: no keypoint at confidence >= {min_confidence}"
        )
    pts = np.concatenate(groups, axis=0)
    x0, y0 = pts.min(axis=0)
    x1, y1 = pts.max(axis=0)
    if not (x0 < x1 and y0 < y1):
        raise NoBodyError(f"frame {landmarks.frame_index}: keypoints are collinear")
    x0, y0, x1, y1 = _expand_extremes(x0, y0, x1, y1, expansion)
    return _clip_box(x0, y0, x1, y1, image_size, NoBodyError, "body")


def face_box_from_landmarks(
    landmarks: LandmarkSet,
    image_size: tuple[int, int],
    margin: float = 0.0,
) -> BoundingBox:
    """Box around the face-mesh extremes, expanded like body boxes."""
    if landmarks.face is None:
        raise NoFaceError(f"frame {landmarks.frame_index}: no face landmarks")
    x0, y0 = landmarks.face.min(axis=0)
    x1, y1 = landmarks.face.max(axis=0)
    if not (x0 < x1 and y0 < y1):
        raise NoFaceError(f"frame {landmarks.frame_index}: face landmarks collapsed")
    x0, y0, x1, y1 = _expand_extremes(x0, y0, x1, y1, margin)
    return _clip_box(x0, y0, x1, y1, image_size, NoFaceError, "face")


def blackout_face(frame: np.ndarray, face_box: BoundingBox) -> np.ndarray:
    """Zero the pixels covered by ``face_box``; others stay bit-identical."""
    out = frame.copy()
    rows, cols = face_box.pixel_slices()
    out[rows, cols] = 0
    return out


def crop_box(frame: np.ndarray, box: BoundingBox) -> np.ndarray:
    """Extract the pixels covered by the box (a view-copy)."""
    rows, cols = box.pixel_slices()
    return frame[rows, cols].copy()


# ---------------------------------------------------------------------------
# Landmark file IO
# ---------------------------------------------------------------------------


def _points_or_none(pts: np.ndarray | None, decimals: int = 3):
    if pts is None:
        return None
    return np.round(pts, decimals).tolist()


def write_landmarks(path, landmark_sets) -> None:
    """Write one JSON record per frame (see module docstring for the format)."""
    with open(path, "w", encoding="utf-8") as fh:
        for lm in landmark_sets:
            record = {
                "frame_index": lm.frame_index,
                "face": _points_or_none(lm.face),
                "body": _points_or_none(lm.body),
                "hands": _points_or_none(lm.hands),
            }
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def read_landmarks(path) -> list[LandmarkSet]:
    """Parse a landmark file into per-frame LandmarkSets, sorted by frame.

    Raises:
        ParseError: malformed JSON or invariant violation, with line number.
    """
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(path, lineno, f"invalid JSON: {exc}") from exc
            if not isinstance(record, dict) or "frame_index" not in record:
                raise ParseError(path, lineno, "record must be an object with frame_index")
            try:
                out.append(
                    LandmarkSet(
                        frame_index=int(record["frame_index"]),
                        face=record.get("face"),
                        body=record.get("body"),
                        hands=record.get("hands"),
                    )
                )
            except (ValueError, TypeError) as exc:
                raise ParseError(path, lineno, str(exc)) from exc
    out.sort(key=lambda lm: lm.frame_index)
    return out
