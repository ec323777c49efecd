"""Backbone wrapper, temporal channel shift, consensus, loss, and training.

A snippet model maps a stack of n consecutive frames to one 8-way logit
vector.  Without a shift configuration only the middle frame is processed;
with one, every frame traverses the network, a fraction of the channels is
shifted one frame forward/backward inside every residual branch, and the
per-frame logits are averaged.

Everything runs in float64 by default: desk-scale networks are cheap enough
that there is no reason to give up oracle-grade numerics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .dataset import NUM_LABELS
from .errors import (
    EmptyListError,
    InvalidFractionError,
    KindMismatchError,
    NonFiniteLossError,
    ShapeMismatchError,
)

LOGITS = "logits"
PROBABILITIES = "probabilities"

CHECKPOINT_VERSION = 1


@dataclass
class EmotionScores:
    """An 8-way score vector that knows whether it holds logits or
    probabilities, so the two are never mixed in arithmetic."""

    values: np.ndarray
    kind: str

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (NUM_LABELS,):
            raise ValueError(f"scores must have shape ({NUM_LABELS},)")
        if self.kind not in (LOGITS, PROBABILITIES):
            raise ValueError(f"unknown score kind {self.kind!r}")
        if self.kind == PROBABILITIES and (
            self.values.min() < 0.0 or self.values.max() > 1.0
        ):
            raise ValueError("probabilities must lie in [0, 1]")

    def sigmoid(self) -> "EmotionScores":
        if self.kind != LOGITS:
            raise KindMismatchError("sigmoid expects logits")
        return EmotionScores(1.0 / (1.0 + np.exp(-self.values)), PROBABILITIES)


@dataclass(frozen=True)
class ShiftConfig:
    """Total fraction of channels shifted, split half forward / half back."""

    fraction: float

    def __post_init__(self):
        if not 0.0 < self.fraction <= 0.5:
            raise ValueError("shift fraction must lie in (0, 1/2]")


def _shift_fold(channels: int, fraction: float) -> int:
    """Shifted channel count; must be an even integer."""
    fold = channels * fraction
    if abs(fold - round(fold)) > 1e-9 or int(round(fold)) % 2 != 0:
        raise InvalidFractionError(
            f"{channels} channels * fraction {fraction} must give an even "
            f"channel count, got {fold}"
        )
    return int(round(fold))


def _shift_grouped(x: torch.Tensor, fraction: float) -> torch.Tensor:
    """Shift over dim 1 of a (G, T, C, H, W) tensor."""
    fold = _shift_fold(x.shape[2], fraction)
    if fold == 0:
        return x.clone()
    half = fold // 2
    out = torch.zeros_like(x)
    out[:, 1:, :half] = x[:, :-1, :half]          # from frame t-1; t=0 gets zeros
    out[:, :-1, half:fold] = x[:, 1:, half:fold]  # from frame t+1; t=T-1 gets zeros
    out[:, :, fold:] = x[:, :, fold:]
    return out


def temporal_shift(activations: torch.Tensor, fraction: float) -> torch.Tensor:
    """Shift part of the channels one frame backward/forward in time.

    The first ``C*fraction/2`` channels of frame t take their values from
    frame t-1 (frame 0 receives zeros), the next ``C*fraction/2`` from frame
    t+1 (the last frame receives zeros); the rest pass through unchanged.
    ``fraction`` = 0 returns an identical copy.
    """
    if activations.dim() != 4:
        raise ShapeMismatchError(
            f"expected a (T, C, H, W) tensor, got shape {tuple(activations.shape)}"
        )
    if fraction == 0.0:
        return activations.clone()
    return _shift_grouped(activations.unsqueeze(0), fraction).squeeze(0)


class ShiftedConv(nn.Module):
    """Applies a grouped temporal shift before the wrapped convolution.

    Activations arrive flattened as (B*T, C, H, W); ``group`` is the number
    of consecutive frames T that belong to one snippet.
    """

    def __init__(self, conv: nn.Module, group: int, fraction: float):
        super().__init__()
        _shift_fold(conv.in_channels, fraction)  # fail fast on bad divisibility
        self.conv = conv
        self.group = group
        self.fraction = fraction

    def forward(self, x):
        bt, c, h, w = x.shape
        if bt % self.group:
            raise ShapeMismatchError(
                f"batch of {bt} frames is not divisible into snippets of {self.group}"
            )
        x = x.view(bt // self.group, self.group, c, h, w)
        x = _shift_grouped(x, self.fraction)
        return self.conv(x.view(bt, c, h, w))


class ResidualBlock(nn.Module):
    """Standard two-conv basic block; ``conv1`` is the shift insertion point."""

    def __init__(self, cin, cout, stride=1):
        super().__init__()
        self.conv1 = nn.Conv2d(cin, cout, 3, stride, 1, bias=False)
        self.bn1 = nn.BatchNorm2d(cout)
        self.conv2 = nn.Conv2d(cout, cout, 3, 1, 1, bias=False)
        self.bn2 = nn.BatchNorm2d(cout)
        self.downsample = None
        if stride != 1 or cin != cout:
            self.downsample = nn.Sequential(
                nn.Conv2d(cin, cout, 1, stride, bias=False), nn.BatchNorm2d(cout)
            )

    def forward(self, x):
        identity = x if self.downsample is None else self.downsample(x)
        out = F.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return F.relu(out + identity)


class SmallResNet(nn.Module):
    """Three-stage residual net sized for 32x32 desk-scale experiments."""

    def __init__(self, num_labels=NUM_LABELS, channels=(16, 32, 64)):
        super().__init__()
        c1, c2, c3 = channels
        self.stem = nn.Sequential(
            nn.Conv2d(3, c1, 3, 1, 1, bias=False), nn.BatchNorm2d(c1), nn.ReLU()
        )
        self.layer1 = ResidualBlock(c1, c1)
        self.layer2 = ResidualBlock(c1, c2, stride=2)
        self.layer3 = ResidualBlock(c2, c3, stride=2)
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.fc = nn.Linear(c3, num_labels)

    def forward(self, x):
        x = self.stem(x)
        x = self.layer1(x)
        x = self.layer2(x)
        x = self.layer3(x)
        return self.fc(self.pool(x).flatten(1))


def _build_net(arch: str, num_labels: int) -> nn.Module:
    if arch == "smallres":
        return SmallResNet(num_labels)
    if arch == "resnet50":
        import torchvision.models

        net = torchvision.models.resnet50(weights=None)
        net.fc = nn.Linear(net.fc.in_features, num_labels)
        return net
    raise ValueError(f"unknown architecture {arch!r}")


def _residual_blocks(net: nn.Module):
    """Every module that carries a residual branch with a ``conv1``."""
    try:
        from torchvision.models.resnet import BasicBlock, Bottleneck

        block_types = (ResidualBlock, BasicBlock, Bottleneck)
    except ImportError:  # pragma: no cover
        block_types = (ResidualBlock,)
    return [m for m in net.modules() if isinstance(m, block_types)]


def _final_conv_stage(net: nn.Module) -> nn.Module:
    """The last residual stage, whose output feeds global pooling."""
    if isinstance(net, SmallResNet):
        return net.layer3
    if hasattr(net, "layer4"):
        return net.layer4
    raise ValueError("cannot locate the final convolutional stage")


class EmotionBackbone(nn.Module):
    """CNN mapping snippet frame stacks (B, n, 3, H, W) to logits (B, 8).

    Frames arrive as floats in [0, 1]; per-channel normalization constants
    are stored as buffers so they travel with checkpoints.
    """

    def __init__(
        self,
        arch: str = "smallres",
        input_size: int = 32,
        snippet_len: int = 3,
        shift: ShiftConfig | None = None,
        num_labels: int = NUM_LABELS,
        dtype: torch.dtype = torch.float64,
    ):
        super().__init__()
        self.arch = arch
        self.input_size = input_size
        self.snippet_len = snippet_len
        self.shift = shift
        self.num_labels = num_labels
        self.net = _build_net(arch, num_labels)
        if shift is not None:
            for block in _residual_blocks(self.net):
                block.conv1 = ShiftedConv(block.conv1, snippet_len, shift.fraction)
        self.register_buffer("input_mean", torch.full((3,), 0.5))
        self.register_buffer("input_std", torch.full((3,), 0.5))
        self.to(dtype)

    def set_normalization(self, mean, std):
        dtype = self.input_mean.dtype
        self.input_mean = torch.as_tensor(mean, dtype=dtype)
        self.input_std = torch.as_tensor(std, dtype=dtype)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() != 5:
            raise ShapeMismatchError(
                f"expected (B, n, 3, H, W) input, got shape {tuple(x.shape)}"
            )
        b, n, c, h, w = x.shape
        if n != self.snippet_len or c != 3 or h != self.input_size or w != self.input_size:
            raise ShapeMismatchError(
                f"expected (B, {self.snippet_len}, 3, {self.input_size}, "
                f"{self.input_size}), got {tuple(x.shape)}"
            )
        x = (x - self.input_mean.view(1, 1, 3, 1, 1)) / self.input_std.view(1, 1, 3, 1, 1)
        if self.shift is None:
            return self.net(x[:, n // 2])
        logits = self.net(x.reshape(b * n, c, h, w))
        return logits.view(b, n, self.num_labels).mean(dim=1)

    def final_conv_stage(self) -> nn.Module:
        return _final_conv_stage(self.net)


def frames_to_tensor(frames: np.ndarray, dtype: torch.dtype = torch.float64) -> torch.Tensor:
    """(n, H, W, 3) uint8 frames -> (n, 3, H, W) float tensor in [0, 1]."""
    t = torch.from_numpy(np.ascontiguousarray(frames)).to(dtype) / 255.0
    return t.permute(0, 3, 1, 2)


def snippet_forward(model: EmotionBackbone, snippet) -> EmotionScores:
    """Deterministic inference on one snippet; returns logits."""
    if snippet.frames is None:
        raise ValueError("snippet has no frames attached")
    frames = np.asarray(snippet.frames)
    if frames.shape[0] != model.snippet_len or frames.shape[1:3] != (
        model.input_size,
        model.input_size,
    ):
        raise ShapeMismatchError(
            f"snippet frames {frames.shape} do not match model input "
            f"({model.snippet_len}, {model.input_size}, {model.input_size}, 3)"
        )
    dtype = model.input_mean.dtype
    x = frames_to_tensor(frames, dtype).unsqueeze(0)
    was_training = model.training
    model.eval()
    with torch.no_grad():
        logits = model(x)[0]
    if was_training:
        model.train()
    return EmotionScores(logits.numpy(), LOGITS)


def consensus(snippet_scores) -> EmotionScores:
    """Elementwise average of snippet score vectors; kind preserved.

    Computed as ``v0 + mean(v - v0)`` so that averaging identical vectors
    returns them bit-exactly.
    """
    scores = list(snippet_scores)
    if not scores:
        raise EmptyListError("consensus over an empty score list")
    kinds = {s.kind for s in scores}
    if len(kinds) > 1:
        raise KindMismatchError(f"mixed score kinds {sorted(kinds)}")
    stacked = np.stack([s.values for s in scores])
    base = stacked[0]
    return EmotionScores(base + (stacked - base).mean(axis=0), scores[0].kind)


def bce_with_logits(logits: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    """Label-averaged binary cross entropy, numerically stabilized.

    Uses max(z,0) - z*y + log(1 + exp(-|z|)); reduces over the final axis.
    """
    return (
        torch.relu(logits) - logits * targets + F.softplus(-logits.abs())
    ).mean(dim=-1)


def bce_multilabel(scores: EmotionScores, labels) -> float:
    """Loss of one logit vector against its 8 binary labels."""
    if scores.kind != LOGITS:
        raise KindMismatchError("bce_multilabel expects logits, not probabilities")
    z = torch.as_tensor(scores.values, dtype=torch.float64)
    y = torch.as_tensor(np.asarray(labels), dtype=torch.float64)
    if y.shape != z.shape:
        raise ValueError(f"labels shape {tuple(y.shape)} != scores shape {tuple(z.shape)}")
    return float(bce_with_logits(z, y))


@dataclass(frozen=True)
class OptimizerConfig:
    """Momentum-descent schedule; defaults match the training recipe."""

    lr: float = 1e-2
    momentum: float = 0.9
    weight_decay: float = 5e-4
    epochs: int = 60
    lr_milestones: tuple = (20, 40)
    lr_decay: float = 0.1
    batch_size: int = 8


def make_optimizer(parameters, cfg: OptimizerConfig) -> torch.optim.Optimizer:
    return torch.optim.SGD(
        parameters, lr=cfg.lr, momentum=cfg.momentum, weight_decay=cfg.weight_decay
    )


def make_lr_scheduler(optimizer, cfg: OptimizerConfig):
    return torch.optim.lr_scheduler.MultiStepLR(
        optimizer, milestones=list(cfg.lr_milestones), gamma=cfg.lr_decay
    )


def video_logits(model: EmotionBackbone, snippets: torch.Tensor) -> torch.Tensor:
    """(B, K, n, 3, H, W) snippet batches -> (B, 8) consensus logits."""
    b, k = snippets.shape[:2]
    logits = model(snippets.flatten(0, 1))
    return logits.view(b, k, -1).mean(dim=1)


def train_step(model, optimizer, snippets: torch.Tensor, labels: torch.Tensor) -> float:
    """One momentum-descent step on a batch of clips; returns the loss."""
    model.train()
    optimizer.zero_grad()
    loss = bce_with_logits(video_logits(model, snippets), labels).mean()
    value = float(loss)
    if not math.isfinite(value):
        raise NonFiniteLossError(f"loss is {value}")
    loss.backward()
    optimizer.step()
    return value


def save_checkpoint(path, model: EmotionBackbone, epoch: int, extra: dict | None = None):
    """Versioned container with architecture, shift setup, and parameters."""
    payload = {
        "version": CHECKPOINT_VERSION,
        "arch": model.arch,
        "input_size": model.input_size,
        "snippet_len": model.snippet_len,
        "shift_fraction": model.shift.fraction if model.shift else 0.0,
        "num_labels": model.num_labels,
        "state_dict": model.state_dict(),
        "epoch": epoch,
        "torch_rng_state": torch.get_rng_state(),
        "extra": extra or {},
    }
    torch.save(payload, path)


def load_checkpoint(path) -> tuple[EmotionBackbone, dict]:
    payload = torch.load(Path(path), weights_only=False)
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {payload.get('version')}")
    shift = (
        ShiftConfig(payload["shift_fraction"]) if payload["shift_fraction"] else None
    )
    model = EmotionBackbone(
        arch=payload["arch"],
        input_size=payload["input_size"],
        snippet_len=payload["snippet_len"],
        shift=shift,
        num_labels=payload["num_labels"],
    )
    model.load_state_dict(payload["state_dict"])
    return model, payload
