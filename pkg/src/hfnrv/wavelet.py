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

"""Single-level 2-D Haar transform and the wavelet frequency decomposer.

The 2x2 kernels are outer products row_filter[i] * col_filter[j] of
L = [1, 1]/sqrt(2) and H = [-1, 1]/sqrt(2). For a block [[a, b], [c, d]]:

    ll = ( a + b + c + d) / 2
    lh = (-a + b - c + d) / 2
    hl = (-a - b + c + d) / 2
    hh = ( a - b - c + d) / 2
"""
import math
from typing import NamedTuple, Optional, Tuple
import numpy as np
from hfnrv import ops
from hfnrv.autograd import Tensor
from hfnrv.frame_geometry import FrameSize
from hfnrv.layers import Conv2d, Module


_L = np.array([1.0, 1.0]) / math.sqrt(2.0)
_H = np.array([-1.0, 1.0]) / math.sqrt(2.0)

# ll, lh, hl, hh
HAAR_KERNELS = np.stack(
    [np.outer(_L, _L), np.outer(_L, _H), np.outer(_H, _L), np.outer(_H, _H)]
)


class SubbandSet(NamedTuple):
    ll: Tensor
    lh: Tensor
    hl: Tensor
    hh: Tensor

    def energy(self) -> float:
        return float(sum(np.sum(np.square(s.data, dtype=np.float64)) for s in self))

    def high(self) -> Tensor:
        """Unweighted sum of the three detail bands."""
        return self.lh + self.hl + self.hh


def pad_to_even(x: Tensor) -> Tensor:
    """Replicates the last row and/or column so both spatial dims are even."""
    size = FrameSize(*x.shape[1:])
    even = size.padded_to_even()
    if even.height != size.height:
        x = ops.take(x, list(range(size.height)) + [size.height - 1], axis=1)
    if even.width != size.width:
        x = ops.take(x, list(range(size.width)) + [size.width - 1], axis=2)
    return x


def haar_dwt2d(x: Tensor, pad_odd: bool = False) -> SubbandSet:
    if x.ndim != 3:
        raise ValueError(f"haar_dwt2d needs CxHxW, got {x.shape}")
    c, h, w = x.shape
    if not FrameSize(h, w).is_even():
        if not pad_odd:
            raise ValueError(f"haar_dwt2d needs even dims, got {h}x{w}")
        x = pad_to_even(x)
    kernel = Tensor(np.tile(HAAR_KERNELS[:, None], (c, 1, 1, 1)), dtype=x.dtype)
    # output channel 4*c + k holds subband k of input channel c
    coeffs = ops.conv2d(x, kernel, stride=2, groups=c)
    coeffs = ops.reshape(coeffs, (c, 4) + coeffs.shape[1:])
    return SubbandSet(*(coeffs[:, k] for k in range(4)))


def haar_idwt2d(s: SubbandSet) -> Tensor:
    shape = s.ll.shape
    if len(shape) != 3 or any(band.shape != shape for band in s):
        raise ValueError(f"Subband shapes differ: {[band.shape for band in s]}")
    c = shape[0]
    a = (s.ll - s.lh - s.hl + s.hh) * 0.5
    b = (s.ll + s.lh - s.hl - s.hh) * 0.5
    cc = (s.ll - s.lh + s.hl - s.hh) * 0.5
    d = (s.ll + s.lh + s.hl + s.hh) * 0.5
    stacked = ops.concat([a, b, cc, d])
    # interleave to channel-major (c*4 + k) so pixel_shuffle places a,b,c,d
    order = [k * c + ch for ch in range(c) for k in range(4)]
    return ops.pixel_shuffle(ops.take(stacked, order, axis=0), 2)


class WaveletFrequencyDecomposer(Module):
    """Haar split of a feature map into a low (ll) and a summed high part.

    Both parts go through their own 1x1 conv; channel count is kept unless
    out_channels is given. With low_branch=False only F_H is produced, for the
    last decomposer of a chain whose F_L would feed nothing.
    """

    def __init__(
        self,
        channels: int,
        rng: np.random.Generator,
        out_channels: Optional[int] = None,
        pad_odd: bool = False,
        low_branch: bool = True,
    ):
        out_channels = out_channels or channels
        self.low = Conv2d(channels, out_channels, 1, rng) if low_branch else None
        self.high = Conv2d(channels, out_channels, 1, rng)
        self.pad_odd = pad_odd

    @property
    def out_channels(self) -> int:
        return self.high.out_channels

    def forward(self, x: Tensor) -> Tuple[Optional[Tensor], Tensor]:
        bands = haar_dwt2d(x, pad_odd=self.pad_odd)
        low = self.low(bands.ll) if self.low is not None else None
        return low, self.high(bands.high())
