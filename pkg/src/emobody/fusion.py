"""Two-pass face/body processing with late score fusion and summed losses.

The face stream sees the (optionally masked) face crop; the body stream sees
the body crop with the face region blacked out.  Each stream runs its own
network - same architecture, separate parameters - and the per-modality
score vectors are joined after the forward passes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .errors import EmptyListError, KindMismatchError, NonFiniteLossError
from .model import (
    EmotionScores,
    bce_multilabel,
    bce_with_logits,
    consensus,
    snippet_forward,
    video_logits,
)

AGGREGATORS = ("average", "maximum")


@dataclass(frozen=True)
class FusionConfig:
    """How the two modality score vectors are joined."""

    aggregator: str = "average"
    weights: tuple[float, float] = (0.5, 0.5)

    def __post_init__(self):
        if self.aggregator not in AGGREGATORS:
            raise ValueError(f"unknown aggregator {self.aggregator!r}")
        if min(self.weights) < 0.0:
            raise ValueError("modality weights must be >= 0")
        if self.aggregator == "average" and abs(sum(self.weights) - 1.0) > 1e-9:
            raise ValueError("average weights must sum to 1")


def fuse_scores(
    face: EmotionScores, body: EmotionScores, config: FusionConfig | None = None
) -> EmotionScores:
    """Elementwise weighted mean or elementwise maximum of the two vectors."""
    cfg = config or FusionConfig()
    if face.kind != body.kind:
        raise KindMismatchError(f"cannot fuse {face.kind} with {body.kind}")
    if cfg.aggregator == "average":
        wf, wb = cfg.weights
        values = wf * face.values + wb * body.values
    else:
        values = np.maximum(face.values, body.values)
    return EmotionScores(values, face.kind)


def fuse_optional(
    face: EmotionScores | None,
    body: EmotionScores | None,
    config: FusionConfig | None = None,
) -> EmotionScores:
    """Fusion that degrades to the surviving modality when one is absent."""
    if face is None and body is None:
        raise EmptyListError("no modality scores to fuse")
    if face is None:
        return body
    if body is None:
        return face
    return fuse_scores(face, body, config)


def fused_loss(face_logits: EmotionScores, body_logits: EmotionScores, labels) -> float:
    """Sum of the two per-modality losses, added exactly as computed."""
    return bce_multilabel(face_logits, labels) + bce_multilabel(body_logits, labels)


def stream_scores(model, snippets) -> EmotionScores:
    """Consensus over snippet logits, then sigmoid -> probabilities."""
    return consensus([snippet_forward(model, s) for s in snippets]).sigmoid()


def two_pass_forward(
    face_model,
    body_model,
    face_snippets,
    body_snippets,
) -> tuple[EmotionScores | None, EmotionScores | None]:
    """Run both streams independently; an absent stream yields None.

    Pass ``face_snippets=None`` (or ``body_snippets=None``) when the
    modality could not be extracted for this clip.
    """
    face = stream_scores(face_model, face_snippets) if face_snippets else None
    body = stream_scores(body_model, body_snippets) if body_snippets else None
    return face, body


def fusion_train_step(
    face_model,
    body_model,
    optimizer,
    face_snippets: torch.Tensor,
    body_snippets: torch.Tensor,
    labels: torch.Tensor,
) -> float:
    """Joint step: both streams forward, loss is the sum of stream losses."""
    face_model.train()
    body_model.train()
    optimizer.zero_grad()
    loss_face = bce_with_logits(video_logits(face_model, face_snippets), labels).mean()
    loss_body = bce_with_logits(video_logits(body_model, body_snippets), labels).mean()
    loss = loss_face + loss_body
    value = float(loss)
    if not np.isfinite(value):
        raise NonFiniteLossError(f"fused loss is {value}")
    loss.backward()
    optimizer.step()
    return value
