"""FerretNet: a small dual-path depthwise CNN that classifies LPD maps.

Geometry
--------
stem        conv3x3 s2 (3 -> C1/2) + BN + ReLU, conv3x3 s2 (C1/2 -> C1) + BN + ReLU
stages      B_i Ferret blocks at width C_i; between stages a conv3x3 s2
            (C_i -> C_{i+1}) + BN + ReLU transition
head        conv1x1 (C_last -> 2 C_last) + BN + ReLU, global average pool,
            dropout, fully connected -> 1 logit

A Ferret block at width C runs a dilated (rate 2) and a plain 3x3
depthwise conv side by side, concatenates them to 2C channels, fuses with
a 1x1 conv that keeps the 2C width, refines with a 3x3 depthwise conv,
projects back to C with a 1x1 conv and adds the block input before the
final ReLU.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import functional as F
from .nn.layers import (
    BatchNorm2d,
    Conv2d,
    Dropout,
    GlobalAvgPool,
    Linear,
    Module,
    ReLU,
    Sequential,
    _prefixed,
    flops_count,
    param_count,
)

# width multipliers for the parts of the network the block diagram leaves open
STEM_WIDTH_RATIO = 0.5
FUSION_EXPANSION = 2
HEAD_WIDTH_RATIO = 2
TRANSITION_KERNEL = 3

MIN_INPUT_SIZE = 16


@dataclass(frozen=True)
class FerretVariant:
    name: str
    stage_channels: tuple
    stage_blocks: tuple

    def __post_init__(self):
        if len(self.stage_channels) != len(self.stage_blocks) or not self.stage_channels:
            raise ValueError("stage_channels and stage_blocks must be non-empty and equally long")
        if any(c < 2 or c % 2 for c in self.stage_channels):
            raise ValueError("stage widths must be even positive integers")
        if any(b < 1 for b in self.stage_blocks):
            raise ValueError("every stage needs at least one block")


VARIANTS = {
    "S": FerretVariant("S", (32, 64), (2, 2)),
    "B": FerretVariant("B", (96, 192), (2, 2)),
    "L": FerretVariant("L", (96, 192, 384, 768), (2, 2, 6, 2)),
}


def get_variant(variant) -> FerretVariant:
    if isinstance(variant, FerretVariant):
        return variant
    try:
        return VARIANTS[str(variant).upper()]
    except KeyError:
        raise ValueError(f"unknown variant {variant!r}; choose from {sorted(VARIANTS)}") from None


def _conv_bn_relu(cin, cout, k, stride, rng, relu=True):
    layers = [Conv2d(cin, cout, k, stride=stride, padding=k // 2, bias=False, rng=rng), BatchNorm2d(cout)]
    if relu:
        layers.append(ReLU())
    return Sequential(*layers)


class FerretBlock(Module):
    def __init__(self, channels: int, rng: np.random.Generator | None = None):
        c, e = channels, FUSION_EXPANSION * channels
        self.channels = c
        self.dilated = Conv2d(c, c, 3, padding=2, dilation=2, groups=c, bias=False, rng=rng)
        self.local = Conv2d(c, c, 3, padding=1, groups=c, bias=False, rng=rng)
        self.fuse = _conv_bn_relu(2 * c, e, 1, 1, rng)
        self.refine = Sequential(Conv2d(e, e, 3, padding=1, groups=e, bias=False, rng=rng), BatchNorm2d(e), ReLU())
        self.project = _conv_bn_relu(e, c, 1, 1, rng, relu=False)

    def forward(self, x):
        h = F.concat([self.dilated(x), self.local(x)], axis=1)
        h = self.project(self.refine(self.fuse(h)))
        return F.relu(h + x)

    def describe(self, input_shape):
        records = []
        a, shape_a = self.dilated.describe(input_shape)
        b, _ = self.local.describe(input_shape)
        records += _prefixed(a, "dilated") + _prefixed(b, "local")
        n, c, h, w = shape_a
        shape = (n, 2 * c, h, w)
        records.append(dict(name="concat", kind="concat", params=0, flops=0, config={},
                            input_shape=list(input_shape), output_shape=list(shape)))
        for name in ("fuse", "refine", "project"):
            sub, shape = getattr(self, name).describe(shape)
            records += _prefixed(sub, name)
        records.append(dict(name="residual", kind="add_relu", params=0, flops=0, config={},
                            input_shape=list(shape), output_shape=list(shape)))
        return records, shape


class FerretNet(Module):
    def __init__(self, variant="B", in_channels: int = 3, dropout_p: float = 0.2, seed: int = 0):
        self.variant = get_variant(variant)
        self.in_channels = in_channels
        self.dropout_p = dropout_p
        self.seed = seed
        rng = np.random.default_rng(seed)
        chans, blocks = self.variant.stage_channels, self.variant.stage_blocks
        c1 = chans[0]
        stem_w = max(1, int(round(c1 * STEM_WIDTH_RATIO)))
        self.stem = Sequential(_conv_bn_relu(in_channels, stem_w, 3, 2, rng), _conv_bn_relu(stem_w, c1, 3, 2, rng))
        stages = []
        for i, (c, nb) in enumerate(zip(chans, blocks)):
            if i > 0:
                stages.append(_conv_bn_relu(chans[i - 1], c, TRANSITION_KERNEL, 2, rng))
            stages.extend(FerretBlock(c, rng) for _ in range(nb))
        self.stages = Sequential(*stages)
        head_w = HEAD_WIDTH_RATIO * chans[-1]
        self.head = _conv_bn_relu(chans[-1], head_w, 1, 1, rng)
        self.pool = GlobalAvgPool()
        self.dropout = Dropout(dropout_p, rng=np.random.default_rng([seed, 1]))
        self.fc = Linear(head_w, 1, rng=rng)

    def config(self) -> dict:
        return {"variant": self.variant.name, "in_channels": self.in_channels,
                "dropout_p": self.dropout_p, "seed": self.seed}

    def forward(self, x):
        h, w = x.shape[-2:]
        if h < MIN_INPUT_SIZE or w < MIN_INPUT_SIZE:
            raise ValueError(f"input {h}x{w} is too small; FerretNet needs at least "
                             f"{MIN_INPUT_SIZE}x{MIN_INPUT_SIZE}")
        if x.shape[1] != self.in_channels:
            raise ValueError(f"expected {self.in_channels} input channels, got {x.shape[1]}")
        x = self.stages(self.stem(x))
        x = self.dropout(self.pool(self.head(x)))
        return self.fc(x)

    def describe(self, input_shape):
        records, shape = [], tuple(input_shape)
        for name, child in self.named_children():
            sub, shape = child.describe(shape)
            records.extend(_prefixed(sub, name))
        return records, shape


def build_ferretnet(variant="B", in_channels: int = 3, dropout_p: float = 0.2, seed: int = 0) -> FerretNet:
    return FerretNet(variant, in_channels=in_channels, dropout_p=dropout_p, seed=seed)


@dataclass
class ModelDescription:
    """Flattened layer list of a model at a fixed input shape."""

    layers: list
    input_shape: tuple
    output_shape: tuple

    @property
    def parameter_count(self) -> int:
        return int(sum(r["params"] for r in self.layers))

    @property
    def flop_count(self) -> int:
        return int(sum(r["flops"] for r in self.layers))


def describe_model(model: Module, input_shape=(1, 3, 256, 256)) -> ModelDescription:
    records, out = model.describe(tuple(input_shape))
    return ModelDescription(records, tuple(input_shape), tuple(out))


__all__ = [
    "FerretBlock",
    "FerretNet",
    "FerretVariant",
    "ModelDescription",
    "VARIANTS",
    "build_ferretnet",
    "describe_model",
    "flops_count",
    "get_variant",
    "param_count",
]
