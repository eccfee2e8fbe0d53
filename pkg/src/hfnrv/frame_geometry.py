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

import math
from typing import Iterable, NamedTuple


def stride_product(strides: Iterable[int]) -> int:
    """Total down- or up-sampling factor of a stack of strided stages."""
    return math.prod(strides)


class FrameSize(NamedTuple):
    height: int = 0
    width: int = 0

    def area(self) -> int:
        return self.height * self.width

    def is_even(self) -> bool:
        return self.height % 2 == 0 and self.width % 2 == 0

    def divisible_by(self, factor: int) -> bool:
        return self.height % factor == 0 and self.width % factor == 0

    def downsample(self, factor: int) -> "FrameSize":
        """Size after a stride-`factor` stage; dims must divide exactly."""
        if factor < 1 or not self.divisible_by(factor):
            raise ValueError(
                f"Frame {self.height}x{self.width} is not divisible by {factor}"
            )
        return FrameSize(self.height // factor, self.width // factor)

    def upsample(self, factor: int) -> "FrameSize":
        if factor < 1:
            raise ValueError(f"Upsampling factor must be positive, got {factor}")
        return FrameSize(self.height * factor, self.width * factor)

    def padded_to_even(self) -> "FrameSize":
        return FrameSize(self.height + self.height % 2, self.width + self.width % 2)

    def scale_distance(self, other: "FrameSize") -> float:
        """How many octaves apart two resolutions are; 0 means identical."""
        return abs(math.log2(self.area() / other.area())) / 2

    def __str__(self):
        return f"{self.height}x{self.width}"
