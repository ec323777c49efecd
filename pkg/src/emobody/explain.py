"""Gradient-weighted activation maps for single emotion targets.

The map is built from the gradients of one pre-sigmoid emotion logit with
respect to the final convolutional stage: channel weights are the spatial
means of those gradients, the map is the rectified weighted sum of the
activations, normalized to a unit maximum, and bilinearly upsampled over the
input frame for display.  Model focus rises from the palette's blue end to
its red end.

A capture hook holds model state during one call, so callers must serialize
calls per model instance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .dataset import NUM_LABELS
from .errors import InvalidLabelError
from .model import EmotionBackbone, frames_to_tensor


@dataclass
class ActivationMap:
    """Non-negative localization map, normalized to max 1 when nonzero."""

    values: np.ndarray  # (h, w)
    target_label: int
    layer: str
    overlay: np.ndarray | None = None  # (H, W, 3) uint8


def weighted_activation_sum(activations: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Pre-rectification weighted channel sum; linear in the activations."""
    activations = np.asarray(activations, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    return np.tensordot(weights, activations, axes=(0, 0))


def cam_from_activations(activations: np.ndarray, gradients: np.ndarray) -> np.ndarray:
    """ReLU of the gradient-weighted activation sum, normalized to [0, 1]."""
    weights = np.asarray(gradients, dtype=np.float64).mean(axis=(1, 2))
    cam = np.maximum(weighted_activation_sum(activations, weights), 0.0)
    peak = cam.max()
    if peak > 0.0:
        cam = cam / peak
    return cam


class GradCam:
    """Capture hooks on a backbone's final convolutional stage."""

    def __init__(self, model: EmotionBackbone, layer: torch.nn.Module | None = None):
        self.model = model
        self.layer = layer if layer is not None else model.final_conv_stage()
        self.layer_name = type(self.layer).__name__
        self._activations = None
        self._gradients = None
        self._handle = self.layer.register_forward_hook(self._capture)

    def _capture(self, module, inputs, output):
        self._activations = output
        if output.requires_grad:
            output.register_hook(self._store_grad)

    def _store_grad(self, grad):
        self._gradients = grad

    def close(self):
        self._handle.remove()

    def compute(self, snippet, target_label: int, render_frame: bool = True) -> ActivationMap:
        """Map for one snippet and one emotion target.

        For shift-enabled models the middle snippet frame's map is reported;
        without shift the single processed frame is the middle one already.
        """
        if not 0 <= target_label < NUM_LABELS:
            raise InvalidLabelError(f"label {target_label} outside 0..{NUM_LABELS - 1}")
        frames = np.asarray(snippet.frames)
        dtype = self.model.input_mean.dtype
        x = frames_to_tensor(frames, dtype).unsqueeze(0)

        self._activations = None
        self._gradients = None
        was_training = self.model.training
        self.model.eval()
        x.requires_grad_(True)
        logits = self.model(x)
        self.model.zero_grad(set_to_none=True)
        logits[0, target_label].backward()
        if was_training:
            self.model.train()

        acts = self._activations.detach().numpy()
        grads = (
            self._gradients.detach().numpy()
            if self._gradients is not None
            else np.zeros_like(acts)
        )
        middle = acts.shape[0] // 2  # batch of 1 snippet: index n//2 when shifted
        values = cam_from_activations(acts[middle], grads[middle])

        overlay = None
        if render_frame:
            upsampled = upsample_map(values, (self.model.input_size, self.model.input_size))
            overlay = render_overlay(frames[len(frames) // 2], upsampled)
        return ActivationMap(
            values=values,
            target_label=target_label,
            layer=self.layer_name,
            overlay=overlay,
        )


def upsample_map(values: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    """Bilinear upsampling of a (h, w) map to (H, W)."""
    t = torch.as_tensor(values, dtype=torch.float64)[None, None]
    out = F.interpolate(t, size=size, mode="bilinear", align_corners=False)
    return out[0, 0].numpy()


def render_overlay(frame: np.ndarray, values: np.ndarray, palette: str = "jet") -> np.ndarray:
    """Blend a heat palette over the frame, weighted by the map itself.

    ``out = (1 - m) * frame + m * palette(m)``: a zero map leaves the frame
    untouched and the map's peak shows the palette's top color.
    """
    from matplotlib import colormaps

    values = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    if values.shape != frame.shape[:2]:
        raise ValueError(
            f"map shape {values.shape} does not match frame {frame.shape[:2]}"
        )
    heat = colormaps[palette](values)[..., :3] * 255.0
    alpha = values[..., None]
    blended = (1.0 - alpha) * frame.astype(np.float64) + alpha * heat
    return np.clip(np.rint(blended), 0, 255).astype(np.uint8)
