# Copyright 2026 The hfnrv Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""The hybrid video representation network.

A content encoder and a high-frequency encoder map every frame to a pair of
small embeddings; the decoder turns them back into the frame. After training
only the decoder and the embeddings are kept.
"""
import dataclasses
import math
from typing import List, NamedTuple, Optional, Sequence, Tuple
from absl import logging
import numpy as np
from hfnrv import ops
from hfnrv.autograd import Tensor, no_grad
from hfnrv.frame_geometry import FrameSize, stride_product
from hfnrv.layers import (
    ACTIVATIONS,
    Conv2d,
    ConvNeXtBlock,
    Module,
    make_activation,
)
from hfnrv.wavelet import WaveletFrequencyDecomposer


FUSIONS = ("hfm", "concat", "add", "inter_attention")
HF_ENCODERS = ("wavelet", "content")
PARTS = ("decoder", "encoders", "all")


@dataclasses.dataclass(frozen=True)
class ModelConfig:
    content_strides: Tuple[int, ...] = (2, 2, 2, 2)
    hf_strides: Tuple[int, ...] = (2, 2, 2, 2)
    d_c: int = 8
    d_h: int = 4
    decoder_strides: Tuple[int, ...] = (2, 2, 2, 2)
    base_width: int = 44
    width_reduction: int = 2
    min_width: int = 8
    # None picks the decoder stage whose input resolution is nearest e_h's
    hfm_stage: Optional[int] = None
    activation: str = "harmonic"
    fusion: str = "hfm"
    hf_branch_enabled: bool = True
    hf_encoder: str = "wavelet"
    encoder_width: int = 16
    convnext_kernel: int = 3
    wfd_width: Optional[int] = None
    pad_odd: bool = False

    def stage_widths(self) -> List[int]:
        return [
            max(self.min_width, self.base_width // self.width_reduction**i)
            for i in range(len(self.decoder_strides))
        ]

    def resolved_hfm_stage(self) -> int:
        if self.hfm_stage is not None:
            return self.hfm_stage
        # any frame both encoders divide gives the same answer
        content = stride_product(self.content_strides)
        hf = stride_product(self.hf_strides)
        nominal = FrameSize(1, 1).upsample(content * hf)
        e_h = nominal.downsample(hf)
        stage = nominal.downsample(content)
        best, best_distance = 0, math.inf
        for i, r in enumerate(self.decoder_strides):
            distance = stage.scale_distance(e_h)
            if distance < best_distance:
                best, best_distance = i, distance
            stage = stage.upsample(r)
        return best

    def validate(self):
        for name in ("content_strides", "hf_strides", "decoder_strides"):
            strides = getattr(self, name)
            if not strides or any(int(s) != s or s < 1 for s in strides):
                raise ValueError(f"model.{name} must be positive ints, got {strides!r}")
        for name in (
            "d_c",
            "d_h",
            "base_width",
            "width_reduction",
            "min_width",
            "encoder_width",
        ):
            if getattr(self, name) < 1:
                raise ValueError(
                    f"model.{name} must be >= 1, got {getattr(self, name)}"
                )
        if self.convnext_kernel < 1 or self.convnext_kernel % 2 == 0:
            raise ValueError(
                "model.convnext_kernel must be odd and positive, "
                f"got {self.convnext_kernel}"
            )
        if len(self.decoder_strides) != len(self.content_strides):
            raise ValueError(
                f"model.decoder_strides {self.decoder_strides} must have one entry per "
                f"content stage {self.content_strides}"
            )
        if stride_product(self.decoder_strides) != stride_product(self.content_strides):
            raise ValueError(
                f"model.decoder_strides {self.decoder_strides} must upsample by the "
                f"content downsampling factor {stride_product(self.content_strides)}"
            )
        if self.hfm_stage is not None and not (
            0 <= self.hfm_stage < len(self.decoder_strides)
        ):
            raise ValueError(
                f"model.hfm_stage {self.hfm_stage} "
                f"outside 0..{len(self.decoder_strides) - 1}"
            )
        if self.activation not in ACTIVATIONS:
            raise ValueError(
                f"model.activation {self.activation!r} not in {ACTIVATIONS}"
            )
        if self.fusion not in FUSIONS:
            raise ValueError(f"model.fusion {self.fusion!r} not in {FUSIONS}")
        if self.hf_encoder not in HF_ENCODERS:
            raise ValueError(
                f"model.hf_encoder {self.hf_encoder!r} not in {HF_ENCODERS}"
            )
        if (
            self.hf_branch_enabled
            and self.hf_encoder == "wavelet"
            and any(g != 2 for g in self.hf_strides)
        ):
            raise ValueError(
                "model.hf_strides must all be 2 for the wavelet encoder, "
                f"got {self.hf_strides}"
            )

    def validate_frame(self, frame: FrameSize):
        """Raises ValueError unless every encoder stride stack divides the frame."""
        checks = [("content", self.content_strides)]
        if self.hf_branch_enabled:
            checks.append(("high-frequency", self.hf_strides))
        for branch, strides in checks:
            factor = stride_product(strides)
            if not frame.divisible_by(factor):
                raise ValueError(
                    f"Frame {frame} is not divisible by the {branch} stride product "
                    f"{factor} of {tuple(strides)}"
                )

    def content_size(self, frame: FrameSize) -> FrameSize:
        return frame.downsample(stride_product(self.content_strides))

    def hf_size(self, frame: FrameSize) -> FrameSize:
        return frame.downsample(stride_product(self.hf_strides))


class EmbeddingSet(NamedTuple):
    """Per-frame embeddings stacked on a leading frame axis."""

    e_c: np.ndarray
    e_h: Optional[np.ndarray] = None

    @property
    def frame_count(self) -> int:
        return self.e_c.shape[0]

    def validate(self, config: ModelConfig, frame: FrameSize):
        c = config.content_size(frame)
        if self.e_c.shape[1:] != (config.d_c, c.height, c.width):
            raise ValueError(
                f"e_c shape {self.e_c.shape} does not fit {config} at {frame}"
            )
        if config.hf_branch_enabled:
            h = config.hf_size(frame)
            if self.e_h is None or self.e_h.shape != (
                self.frame_count,
                config.d_h,
                h.height,
                h.width,
            ):
                shape = None if self.e_h is None else self.e_h.shape
                raise ValueError(f"e_h shape {shape} does not fit {frame}")
        elif self.e_h is not None:
            raise ValueError("e_h present but the high-frequency branch is disabled")


def _check_divisible(x: Tensor, strides: Sequence[int], branch: str):
    frame = FrameSize(*x.shape[1:])
    factor = stride_product(strides)
    if not frame.divisible_by(factor):
        raise ValueError(
            f"Frame {frame} is not divisible by the {branch} stride product {factor}"
        )


class EncoderStage(Module):
    """Strided conv (kernel = stride) followed by a ConvNeXt block."""

    def __init__(self, in_channels, width, stride, kernel_size, rng):
        self.down = Conv2d(in_channels, width, stride, rng, stride=stride)
        self.block = ConvNeXtBlock(width, rng, kernel_size=kernel_size)

    def forward(self, x: Tensor) -> Tensor:
        return self.block(self.down(x))


class ContentEncoder(Module):
    def __init__(
        self,
        strides: Sequence[int],
        width: int,
        out_channels: int,
        kernel_size: int,
        rng: np.random.Generator,
    ):
        self.strides = tuple(strides)
        self.stages = []
        channels = 3
        for s in self.strides:
            self.stages.append(EncoderStage(channels, width, s, kernel_size, rng))
            channels = width
        self.head = Conv2d(width, out_channels, 1, rng)

    def stage_features(self, x: Tensor) -> List[Tensor]:
        _check_divisible(x, self.strides, "content")
        features = []
        for stage in self.stages:
            x = stage(x)
            features.append(x)
        return features

    def forward(self, x: Tensor) -> Tensor:
        return self.head(self.stage_features(x)[-1])


class WaveletEncoder(Module):
    """High-frequency encoder.

    Stage 1 is a plain encoder stage on the frame. Every later stage i sees
    concat(E_{i-1}, F_H) where F_H comes from a decomposer applied to the
    running low-frequency branch (the frame itself for the first one).
    """

    def __init__(
        self,
        strides: Sequence[int],
        width: int,
        out_channels: int,
        kernel_size: int,
        rng: np.random.Generator,
        wfd_width: Optional[int] = None,
        pad_odd: bool = False,
    ):
        self.strides = tuple(strides)
        self.stem = EncoderStage(3, width, self.strides[0], kernel_size, rng)
        self.decomposers = []
        self.stages = []
        low_channels = 3
        later = self.strides[1:]
        for i, s in enumerate(later):
            wfd = WaveletFrequencyDecomposer(
                low_channels,
                rng,
                out_channels=wfd_width,
                pad_odd=pad_odd,
                low_branch=i < len(later) - 1,
            )
            self.decomposers.append(wfd)
            self.stages.append(
                EncoderStage(width + wfd.out_channels, width, s, kernel_size, rng)
            )
            low_channels = wfd.out_channels
        self.head = Conv2d(width, out_channels, 1, rng)

    def _run(
        self, x: Tensor
    ) -> Tuple[List[Tensor], List[Tuple[Optional[Tensor], Tensor]]]:
        _check_divisible(x, self.strides, "high-frequency")
        e = self.stem(x)
        stages, bands = [e], []
        low = x
        for wfd, stage in zip(self.decomposers, self.stages):
            low, high = wfd(low)
            bands.append((low, high))
            e = stage(ops.concat([e, high]))
            stages.append(e)
        return stages, bands

    def stage_features(self, x: Tensor) -> List[Tensor]:
        return self._run(x)[0]

    def wfd_features(self, x: Tensor) -> List[Tuple[Optional[Tensor], Tensor]]:
        """(F_L, F_H) of every decomposer, shallowest first; the last F_L is None."""
        return self._run(x)[1]

    def forward(self, x: Tensor) -> Tensor:
        return self.head(self._run(x)[0][-1])


class _PointwiseMLP(Module):
    """Three 1x1 convs with GELU between them."""

    def __init__(self, in_channels, channels, rng, final_bias: float):
        self.convs = [
            Conv2d(in_channels, channels, 1, rng),
            Conv2d(channels, channels, 1, rng),
            Conv2d(channels, channels, 1, rng),
        ]
        last = self.convs[-1]
        last.weight.data[...] = 0
        last.bias.data[...] = final_bias

    def forward(self, x: Tensor) -> Tensor:
        x = ops.gelu(self.convs[0](x))
        x = ops.gelu(self.convs[1](x))
        return self.convs[2](x)


class GatedFeedForward(Module):
    """Gated feed-forward with a residual.

    A 1x1 conv expands to two halves; the first goes through a depthwise 3x3 and
    gates GELU of the second; a 1x1 conv projects back.
    """

    def __init__(self, channels: int, rng: np.random.Generator):
        self.channels = channels
        self.expand = Conv2d(channels, 2 * channels, 1, rng)
        self.depthwise = Conv2d(channels, channels, 3, rng, padding=1, groups=channels)
        self.project = Conv2d(channels, channels, 1, rng)

    def forward(self, x: Tensor) -> Tensor:
        y = self.expand(x)
        gate = self.depthwise(y[: self.channels])
        return x + self.project(ops.gelu(gate) * y[self.channels :])


class HighFrequencyModulation(Module):
    """FN(gamma * x + beta) with gamma, beta predicted from high-frequency features.

    Starts as identity modulation: gamma's last conv outputs 1, beta's outputs 0.
    """

    def __init__(self, channels: int, hf_channels: int, rng: np.random.Generator):
        self.gamma = _PointwiseMLP(hf_channels, channels, rng, final_bias=1.0)
        self.beta = _PointwiseMLP(hf_channels, channels, rng, final_bias=0.0)
        self.ffn = GatedFeedForward(channels, rng)

    def modulate(self, x: Tensor, h: Tensor) -> Tensor:
        return self.gamma(h) * x + self.beta(h)

    def forward(self, x: Tensor, h: Tensor) -> Tensor:
        return self.ffn(self.modulate(x, h))


class ConcatFusion(Module):
    def __init__(self, channels: int, hf_channels: int, rng: np.random.Generator):
        self.mix = Conv2d(channels + hf_channels, channels, 1, rng)

    def forward(self, x: Tensor, h: Tensor) -> Tensor:
        return self.mix(ops.concat([x, h]))


class AddFusion(Module):
    def __init__(self, channels: int, hf_channels: int, rng: np.random.Generator):
        self.project = (
            None
            if channels == hf_channels
            else Conv2d(hf_channels, channels, 1, rng, bias=False)
        )

    def forward(self, x: Tensor, h: Tensor) -> Tensor:
        return x + (h if self.project is None else self.project(h))


class InterAttentionFusion(Module):
    """Single-head channel cross attention: queries from x, keys/values from h."""

    def __init__(self, channels: int, hf_channels: int, rng: np.random.Generator):
        self.query = Conv2d(channels, channels, 1, rng)
        self.key = Conv2d(hf_channels, channels, 1, rng)
        self.value = Conv2d(hf_channels, channels, 1, rng)
        self.out = Conv2d(channels, channels, 1, rng)

    def forward(self, x: Tensor, h: Tensor) -> Tensor:
        c, height, width = x.shape
        n = height * width
        q = ops.reshape(self.query(x), (c, n))
        k = ops.reshape(self.key(h), (c, n))
        v = ops.reshape(self.value(h), (c, n))
        scores = ops.matmul(q, ops.transpose2d(k)) * (1.0 / math.sqrt(n))
        attention = ops.softmax(scores)
        mixed = ops.reshape(ops.matmul(attention, v), (c, height, width))
        return x + self.out(mixed)


_FUSION_TYPES = {
    "hfm": HighFrequencyModulation,
    "concat": ConcatFusion,
    "add": AddFusion,
    "inter_attention": InterAttentionFusion,
}


class HarmonicBlock(Module):
    """3x3 conv to out_channels * r^2, pixel shuffle by r, activation."""

    def __init__(self, in_channels, out_channels, r, activation: str, rng):
        self.r = r
        self.conv = Conv2d(in_channels, out_channels * r * r, 3, rng, padding=1)
        self.activation = make_activation(activation)

    def forward(self, x: Tensor) -> Tensor:
        return self.activation(ops.pixel_shuffle(self.conv(x), self.r))


class Decoder(Module):
    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        self.fusion_stage = config.resolved_hfm_stage()
        self.blocks = []
        channels = config.d_c
        widths = config.stage_widths()
        for i, (r, width) in enumerate(zip(config.decoder_strides, widths)):
            if i == self.fusion_stage and config.hf_branch_enabled:
                self.fusion = _FUSION_TYPES[config.fusion](channels, config.d_h, rng)
            self.blocks.append(
                HarmonicBlock(channels, width, r, config.activation, rng)
            )
            channels = width
        if not config.hf_branch_enabled:
            self.fusion = None
        self.head = Conv2d(channels, 3, 3, rng, padding=1)

    def forward(self, e_c: Tensor, e_h: Optional[Tensor] = None) -> Tensor:
        """Unclamped reconstruction; fusion is skipped when e_h is None."""
        x = e_c
        for i, block in enumerate(self.blocks):
            if i == self.fusion_stage and self.fusion is not None and e_h is not None:
                x = self.fusion(x, _match_spatial(e_h, x))
            x = block(x)
        return self.head(x)


def _match_spatial(h: Tensor, x: Tensor) -> Tensor:
    if h.shape[1:] == x.shape[1:]:
        return h
    logging.log_first_n(
        logging.WARNING,
        "Resizing high-frequency embedding %s to decoder stage %s",
        1,
        h.shape,
        x.shape,
    )
    return ops.resize_bilinear(h, *x.shape[1:])


def decode_frame(decoder: Decoder, embeddings: EmbeddingSet, t: int) -> Tensor:
    """Frame t in [0, 1], no graph recorded."""
    if not 0 <= t < embeddings.frame_count:
        raise ValueError(f"Frame index {t} outside 0..{embeddings.frame_count - 1}")
    with no_grad():
        e_c = Tensor(embeddings.e_c[t])
        e_h = None if embeddings.e_h is None else Tensor(embeddings.e_h[t])
        out = decoder(e_c, e_h)
    return Tensor(np.clip(out.data, 0.0, 1.0), dtype=out.dtype)


class VideoModel(Module):
    def __init__(self, config: ModelConfig, seed: int = 0):
        config.validate()
        self.config = config
        rng = np.random.default_rng(seed)
        self.content_encoder = ContentEncoder(
            config.content_strides,
            config.encoder_width,
            config.d_c,
            config.convnext_kernel,
            rng,
        )
        if not config.hf_branch_enabled:
            self.hf_encoder = None
        elif config.hf_encoder == "wavelet":
            self.hf_encoder = WaveletEncoder(
                config.hf_strides,
                config.encoder_width,
                config.d_h,
                config.convnext_kernel,
                rng,
                wfd_width=config.wfd_width,
                pad_odd=config.pad_odd,
            )
        else:
            self.hf_encoder = ContentEncoder(
                config.hf_strides,
                config.encoder_width,
                config.d_h,
                config.convnext_kernel,
                rng,
            )
        self.decoder = Decoder(config, rng)
        self.assign_names()

    def content_encode(self, frame: Tensor) -> Tensor:
        return self.content_encoder(frame)

    def hf_encode(self, frame: Tensor) -> Optional[Tensor]:
        if self.hf_encoder is None:
            return None
        return self.hf_encoder(frame)

    def forward_train(self, frame: Tensor) -> Tuple[Tensor, Tensor, Optional[Tensor]]:
        self.config.validate_frame(FrameSize(*frame.shape[1:]))
        e_c = self.content_encode(frame)
        e_h = self.hf_encode(frame)
        return self.decoder(e_c, e_h), e_c, e_h

    def forward(self, frame: Tensor) -> Tensor:
        return self.forward_train(frame)[0]

    def decode(self, embeddings: EmbeddingSet, t: int) -> Tensor:
        return decode_frame(self.decoder, embeddings, t)

    def num_parameters(self, part: str = "all") -> int:
        if part == "decoder":
            return self.decoder.num_parameters()
        if part == "encoders":
            return sum(
                m.num_parameters()
                for m in (self.content_encoder, self.hf_encoder)
                if m is not None
            )
        if part == "all":
            return super().num_parameters()
        raise ValueError(f"Unknown part {part!r}, expected one of {PARTS}")


def encode_video(model: VideoModel, frames: Sequence[np.ndarray]) -> EmbeddingSet:
    """Runs both encoders over every frame without recording a graph."""
    e_c, e_h = [], []
    with no_grad():
        for frame in frames:
            x = Tensor(frame)
            e_c.append(model.content_encode(x).data)
            if model.hf_encoder is not None:
                e_h.append(model.hf_encode(x).data)
    return EmbeddingSet(
        np.stack(e_c).astype(np.float32),
        np.stack(e_h).astype(np.float32) if e_h else None,
    )
