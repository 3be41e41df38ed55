"""Conditional U-Net separator with selectable fusion strategy.

Three ways to condition mask prediction on the per-source query embedding:

  middle        -- tile the raw embedding across the bottleneck, channel-
                   concatenate, decode to a 1-channel sigmoid mask
  late          -- unconditioned encoder-decoder; the projected embedding
                   weights the final feature channels per pixel
  hierarchical  -- both injection points, each behind its own projection

The encoder is shared by all modes and never sees the embedding, so the
bottleneck (and its pooled alignment head) depends only on the input
spectrogram.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Optional, Sequence

import numpy as np

from avsep import ndgrad as ng
from avsep.errors import ConfigurationError, DimensionError, NumericError
from avsep.ndgrad.tensor import Tensor


class FusionMode(str, Enum):
    MIDDLE = "middle"
    LATE = "late"
    HIERARCHICAL = "hierarchical"


@dataclass
class SeparatorConfig:
    fusion: FusionMode = FusionMode.HIERARCHICAL
    depth: int = 4
    base_channels: int = 16
    frames: int = 64
    bins: int = 64
    c_out: int = 16  # decoder output channels feeding late fusion
    c_mid: int = 16  # hierarchical middle-projection width
    d_v: int = 32  # visual embedding dim
    d_a: int = 32  # alignment head output dim
    init_seed: int = 0

    def __post_init__(self):
        if isinstance(self.fusion, str):
            self.fusion = FusionMode(self.fusion)
        scale = 2**self.depth
        if self.frames % scale or self.bins % scale:
            raise ConfigurationError(
                f"{self.frames}x{self.bins} input not divisible by 2^{self.depth}"
            )

    @property
    def enc_channels(self) -> list[int]:
        return [self.base_channels * 2**i for i in range(self.depth)]

    @property
    def bottleneck_channels(self) -> int:
        return self.enc_channels[-1]


@dataclass
class ForwardOutput:
    mask: Tensor  # [N,1,T,F] in (0,1)
    bottleneck: Tensor  # [N,C_b,T/2^D,F/2^D], pre-fusion
    pooled: Tensor  # [N,d_a] alignment head output


class SeparatorModel:
    def __init__(self, cfg: SeparatorConfig):
        self.cfg = cfg
        self.params: Dict[str, Tensor] = {}
        self._build()

    # -- construction ---------------------------------------------------

    def _add(self, name: str, arr: np.ndarray):
        self.params[name] = Tensor(arr, requires_grad=True, name=name)

    def _build(self):
        cfg = self.cfg
        rng = np.random.default_rng(np.random.SeedSequence([cfg.init_seed, 421]))

        def he(shape, fan_in):
            return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)

        chans = cfg.enc_channels
        c_in = 1
        for i, c in enumerate(chans):
            self._add(f"enc{i}.w", he((c, c_in, 4, 4), c_in * 16))
            self._add(f"enc{i}.gamma", np.ones(c))
            self._add(f"enc{i}.beta", np.zeros(c))
            c_in = c

        fused_extra = {
            FusionMode.MIDDLE: cfg.d_v,
            FusionMode.LATE: 0,
            FusionMode.HIERARCHICAL: cfg.c_mid,
        }[cfg.fusion]
        dec_out = [chans[-2 - i] for i in range(cfg.depth - 1)] + [cfg.c_out]
        d_in = cfg.bottleneck_channels + fused_extra
        for i, c in enumerate(dec_out):
            self._add(f"dec{i}.w", he((d_in, c, 4, 4), d_in * 16))
            self._add(f"dec{i}.gamma", np.ones(c))
            self._add(f"dec{i}.beta", np.zeros(c))
            # next level consumes the skip from encoder level depth-2-i
            if i < cfg.depth - 1:
                d_in = c + chans[cfg.depth - 2 - i]

        if cfg.fusion == FusionMode.MIDDLE:
            self._add("mask_head.w", he((1, cfg.c_out, 1, 1), cfg.c_out))
            self._add("mask_head.b", np.zeros(1))
        else:
            self._add("proj1.w", he((cfg.d_v, cfg.c_out), cfg.d_v))
            self._add("proj1.b", np.zeros(cfg.c_out))
            self._add("late.bias", np.zeros(1))
        if cfg.fusion == FusionMode.HIERARCHICAL:
            self._add("proj2.w", he((cfg.d_v, cfg.c_mid), cfg.d_v))
            self._add("proj2.b", np.zeros(cfg.c_mid))

        cb = cfg.bottleneck_channels
        self._add("align.w", he((cb, cfg.d_a), cb))
        self._add("align.b", np.zeros(cfg.d_a))

    # -- persistence ------------------------------------------------------

    def state(self) -> Dict[str, Tensor]:
        return dict(self.params)

    def load_state(self, params: Dict[str, Tensor]):
        missing = set(self.params) - set(params)
        if missing:
            raise ConfigurationError(f"checkpoint missing parameters: {sorted(missing)}")
        for name, tensor in self.params.items():
            incoming = params[name]
            if incoming.shape != tensor.shape:
                raise ConfigurationError(
                    f"{name}: checkpoint shape {incoming.shape} != model {tensor.shape}"
                )
            tensor.data = incoming.data.copy()

    def param_count(self) -> int:
        return sum(p.size for p in self.params.values())

    def summary(self) -> Dict[str, int]:
        return {name: p.size for name, p in sorted(self.params.items())}

    # -- forward pieces ---------------------------------------------------

    def encode(self, x: Tensor):
        """Strided conv stack; returns (bottleneck, per-level activations)."""
        if x.data.ndim != 4 or x.shape[2] != self.cfg.frames or x.shape[3] != self.cfg.bins:
            raise ConfigurationError(
                f"expected [N,1,{self.cfg.frames},{self.cfg.bins}] input, got {x.shape}"
            )
        skips = []
        h = x
        for i in range(self.cfg.depth):
            h = ng.conv2d(h, self.params[f"enc{i}.w"], stride=2, padding=1)
            h = ng.batch_norm(h, self.params[f"enc{i}.gamma"], self.params[f"enc{i}.beta"])
            h = ng.leaky_relu(h, 0.2)
            skips.append(h)
        return skips[-1], skips[:-1]

    def fuse_middle(self, bottleneck: Tensor, e: Tensor) -> Tensor:
        """Tile the (optionally projected) embedding and concatenate channels."""
        if e.shape[1] != self.cfg.d_v:
            raise DimensionError(f"embedding dim {e.shape[1]} != {self.cfg.d_v}")
        if self.cfg.fusion == FusionMode.HIERARCHICAL:
            e = ng.linear(e, self.params["proj2.w"], self.params["proj2.b"])
        h, w = bottleneck.shape[2], bottleneck.shape[3]
        return ng.concat_channels(bottleneck, ng.tile_spatial(e, h, w))

    def decode(self, fused: Tensor, skips: Sequence[Tensor]) -> Tensor:
        h = fused
        for i in range(self.cfg.depth):
            if i > 0:
                h = ng.concat_channels(h, skips[self.cfg.depth - 1 - i])
            h = ng.conv_transpose2d(h, self.params[f"dec{i}.w"], stride=2, padding=1)
            h = ng.batch_norm(h, self.params[f"dec{i}.gamma"], self.params[f"dec{i}.beta"])
            h = ng.relu(h)
        return h

    def fuse_late(self, features: Tensor, e: Tensor) -> Tensor:
        """Per-pixel channel weighting by the projected embedding, then sigmoid."""
        w = ng.linear(e, self.params["proj1.w"], self.params["proj1.b"])
        tiled = ng.tile_spatial(w, features.shape[2], features.shape[3])
        logits = ng.sum_channels(ng.mul(tiled, features))
        return ng.sigmoid(ng.add(logits, self.params["late.bias"]))

    def _mask_from(self, bottleneck: Tensor, skips, e: Tensor) -> Tensor:
        mode = self.cfg.fusion
        if mode in (FusionMode.MIDDLE, FusionMode.HIERARCHICAL):
            fused = self.fuse_middle(bottleneck, e)
        else:
            fused = bottleneck
        features = self.decode(fused, skips)
        if mode == FusionMode.MIDDLE:
            logits = ng.conv2d(features, self.params["mask_head.w"])
            logits = ng.add(logits, self.params["mask_head.b"])
            return ng.sigmoid(logits)
        return self.fuse_late(features, e)

    def _pooled(self, bottleneck: Tensor) -> Tensor:
        return ng.linear(
            ng.global_avg_pool(bottleneck), self.params["align.w"], self.params["align.b"]
        )

    def forward(self, x: Tensor, e: Tensor) -> ForwardOutput:
        """Mask for each (spectrogram, query embedding) row pair."""
        if x.shape[0] != e.shape[0]:
            raise DimensionError(
                f"batch mismatch: {x.shape[0]} spectrograms vs {e.shape[0]} embeddings"
            )
        bottleneck, skips = self.encode(x)
        mask = self._mask_from(bottleneck, skips, e)
        return ForwardOutput(
            mask=mask, bottleneck=bottleneck, pooled=self._pooled(bottleneck)
        )

    def forward_multi(self, x: Tensor, queries: Sequence[Tensor]):
        """Encode once, decode per query embedding (one mask per source).

        Returns (masks list, ForwardOutput-like bottleneck/pooled pair).
        """
        bottleneck, skips = self.encode(x)
        for e in queries:
            if e.shape[0] != x.shape[0]:
                raise DimensionError("each query batch must match the input batch")
        masks = [self._mask_from(bottleneck, skips, e) for e in queries]
        return masks, bottleneck, self._pooled(bottleneck)


# -- losses -------------------------------------------------------------------


def sep_loss(pred: Sequence[Tensor], target: Sequence[Tensor]) -> Tensor:
    """Sum over sources of the mean absolute spectrogram error."""
    if len(pred) != len(target):
        raise DimensionError(f"{len(pred)} predictions vs {len(target)} targets")
    if not pred:
        raise DimensionError("empty prediction list")
    total = ng.l1_loss(pred[0], target[0])
    for p, t in zip(pred[1:], target[1:]):
        total = ng.add(total, ng.l1_loss(p, t))
    return total


def align_loss(pooled: Tensor, z_clap: Tensor) -> Tensor:
    """Mean over the batch of one minus cosine similarity.

    ``z_clap`` rows are frozen targets; pass them with requires_grad=False
    to keep gradients off the embedder side.
    """
    sims = ng.cosine_rows(pooled, z_clap)
    ones = Tensor(np.ones_like(sims.data))
    return ng.mean_all(ng.sub(ones, sims))


def total_loss(sep: Tensor, align: Optional[Tensor], lam: float) -> Tensor:
    """Separation plus lam-weighted alignment; lam=0 disables alignment."""
    if lam < 0:
        raise ConfigurationError(f"alignment weight must be >= 0, got {lam}")
    if lam == 0.0 or align is None:
        return sep
    return ng.add(sep, ng.scale(align, lam))
