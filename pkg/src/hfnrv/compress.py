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

"""Lossy model reduction: LAMP pruning and 8-bit affine quantization."""
import dataclasses
from typing import Dict, Mapping, NamedTuple, Optional, Tuple
import numpy as np
from hfnrv.autograd import Parameter
from hfnrv.layers import Module


def prunable_parameters(decoder: Module) -> Dict[str, Parameter]:
    """Convolution kernels only; biases, norms and activation scalars stay dense."""
    return {name: p for name, p in decoder.named_parameters() if p.ndim == 4}


def lamp_score(weights: np.ndarray) -> np.ndarray:
    """w^2 divided by the sum of all squared weights in the tensor that are >= w^2.

    Ties share one denominator, so [1, 1] scores [1/2, 1/2]. Zeros score 0.
    """
    sq = np.square(np.asarray(weights, dtype=np.float64)).reshape(-1)
    if sq.size == 0:
        return sq.reshape(np.shape(weights))
    ascending = np.sort(sq)
    suffix = np.cumsum(ascending[::-1])[::-1]
    denom = suffix[np.searchsorted(ascending, sq, side="left")]
    scores = np.divide(sq, denom, out=np.zeros_like(sq), where=denom > 0)
    return scores.reshape(np.shape(weights))


def lamp_scores(weights: Mapping[str, np.ndarray]) -> Dict[str, np.ndarray]:
    return {name: lamp_score(w) for name, w in weights.items() if np.size(w)}


@dataclasses.dataclass
class PruneMask:
    """Keep-bitmaps (True = kept) keyed by decoder parameter name."""

    masks: Dict[str, np.ndarray]

    @property
    def total(self) -> int:
        return sum(m.size for m in self.masks.values())

    @property
    def kept(self) -> int:
        return int(sum(m.sum() for m in self.masks.values()))

    def kept_fraction(self) -> float:
        return self.kept / self.total if self.total else 1.0

    def get(self, name: str) -> Optional[np.ndarray]:
        return self.masks.get(name)


def prune_mask(scores: Mapping[str, np.ndarray], ratio: float) -> PruneMask:
    """Drops the round(ratio * N) lowest scores over all tensors at once."""
    if not 0.0 <= ratio < 1.0:
        raise ValueError(f"Prune ratio must be in [0, 1), got {ratio}")
    names = sorted(scores)
    flat = (
        np.concatenate([scores[n].reshape(-1) for n in names]) if names else np.zeros(0)
    )
    drop = round(ratio * flat.size)
    keep = np.ones(flat.size, dtype=bool)
    keep[np.argsort(flat, kind="stable")[:drop]] = False
    masks = {}
    offset = 0
    for n in names:
        size = scores[n].size
        masks[n] = keep[offset : offset + size].reshape(scores[n].shape)
        offset += size
    return PruneMask(masks)


def prune(decoder: Module, ratio: float) -> PruneMask:
    """Masks the lowest-LAMP decoder kernels and zeroes them in place."""
    params = prunable_parameters(decoder)
    mask = prune_mask(lamp_scores({n: p.data for n, p in params.items()}), ratio)
    for name, keep in mask.masks.items():
        p = params[name]
        p.data = np.where(keep, p.data, 0).astype(p.dtype)
    return mask


class QuantizedTensor(NamedTuple):
    shape: Tuple[int, ...]
    scale: np.float32
    minimum: np.float32
    zero_point: int
    codes: np.ndarray  # uint8, one per kept entry in row-major order


def quantize_8bit(values, mask: Optional[np.ndarray] = None) -> QuantizedTensor:
    """Per-tensor affine min-max quantization, round half to even.

    scale = (max - min) / 255 and the minimum takes code zero_point = 0, so
    entries dequantize to minimum + scale * (code - zero_point). A constant
    tensor gets scale 0 and all codes 0 and comes back exactly.
    """
    values = np.asarray(values, dtype=np.float32)
    kept = values[mask] if mask is not None else values.reshape(-1)
    if not np.isfinite(kept).all():
        raise ValueError("Cannot quantize non-finite values")
    shape = tuple(values.shape)
    if kept.size == 0:
        return QuantizedTensor(
            shape, np.float32(0), np.float32(0), 0, np.zeros(0, dtype=np.uint8)
        )
    lo, hi = float(kept.min()), float(kept.max())
    codes = np.zeros(kept.size, dtype=np.uint8)
    if lo == hi:
        return QuantizedTensor(shape, np.float32(0), np.float32(lo), 0, codes)
    scale = np.float32((hi - lo) / 255.0)
    if scale == 0:
        # range below float32 resolution
        scale = np.float32(np.finfo(np.float32).tiny)
    steps = np.rint((kept.astype(np.float64) - lo) / float(scale))
    codes = np.clip(steps, 0, 255).astype(np.uint8)
    return QuantizedTensor(shape, scale, np.float32(lo), 0, codes)


def dequantize(q: QuantizedTensor, mask: Optional[np.ndarray] = None) -> np.ndarray:
    """minimum + scale * (code - zero_point); masked-out entries are exact zeros."""
    steps = q.codes.astype(np.float64) - q.zero_point
    values = (float(q.minimum) + float(q.scale) * steps).astype(np.float32)
    if mask is None:
        return values.reshape(q.shape)
    out = np.zeros(q.shape, dtype=np.float32)
    out[mask] = values
    return out


def measure_bpp(stream_bytes: int, frames: int, height: int, width: int) -> float:
    if frames <= 0 or height <= 0 or width <= 0:
        raise ValueError(f"Invalid video dims {frames}x{height}x{width}")
    if stream_bytes < 0:
        raise ValueError(f"Negative stream size {stream_bytes}")
    return 8.0 * stream_bytes / (frames * height * width)
