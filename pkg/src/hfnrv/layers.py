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

"""Parameterized building blocks: Module, convolutions, norms, activations."""
import math
from typing import Dict, Iterator, List, Mapping, Tuple
import numpy as np
from hfnrv import ops
from hfnrv.autograd import Parameter, Tensor


ACTIVATIONS = ("harmonic", "gelu", "sine")


class Module:
    """Owns Parameters and sub-Modules as plain attributes.

    Parameter names are the dotted attribute path from the root module, with
    list positions as path components ("decoder.blocks.0.conv.weight").
    """

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        for attr, value in vars(self).items():
            yield from _named(value, prefix + attr)

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def assign_names(self, prefix: str = ""):
        for name, p in self.named_parameters(prefix):
            p.name = name

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: Mapping[str, np.ndarray]):
        own = dict(self.named_parameters())
        if set(own) != set(state):
            missing = sorted(set(own) - set(state))
            extra = sorted(set(state) - set(own))
            raise ValueError(f"State mismatch, missing {missing}, unexpected {extra}")
        for name, p in own.items():
            value = np.asarray(state[name])
            if value.shape != p.shape:
                raise ValueError(f"{name}: shape {value.shape} != {p.shape}")
            p.data = value.astype(p.dtype)


def _named(value, path: str) -> Iterator[Tuple[str, Parameter]]:
    if isinstance(value, Parameter):
        yield path, value
    elif isinstance(value, Module):
        yield from value.named_parameters(path + ".")
    elif isinstance(value, (list, tuple)):
        for i, item in enumerate(value):
            yield from _named(item, f"{path}.{i}")


def fan_in_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Conv2d(Module):
    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: int,
        rng: np.random.Generator,
        stride: int = 1,
        padding: int = 0,
        groups: int = 1,
        bias: bool = True,
    ):
        if in_channels % groups or out_channels % groups:
            raise ValueError(
                f"groups={groups} must divide {in_channels} and {out_channels} channels"
            )
        shape = (out_channels, in_channels // groups, kernel_size, kernel_size)
        fan_in = shape[1] * kernel_size * kernel_size
        self.weight = Parameter(fan_in_uniform(rng, shape, fan_in))
        self.bias = Parameter(np.zeros(out_channels)) if bias else None
        self.stride = stride
        self.padding = padding
        self.groups = groups

    @property
    def in_channels(self) -> int:
        return self.weight.shape[1] * self.groups

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv2d(
            x,
            self.weight,
            self.bias,
            stride=self.stride,
            padding=self.padding,
            groups=self.groups,
        )


class LayerNorm2d(Module):
    def __init__(self, channels: int, eps: float = 1e-6):
        self.weight = Parameter(np.ones(channels))
        self.bias = Parameter(np.zeros(channels))
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return ops.layer_norm(x, self.weight, self.bias, self.eps)


class GELU(Module):
    def forward(self, x: Tensor) -> Tensor:
        return ops.gelu(x)


class Sine(Module):
    def forward(self, x: Tensor) -> Tensor:
        return ops.sin(x)


class HarmonicActivation(Module):
    """omega1 * sin(x) + omega2 * cos(x); starts as a pure sine."""

    def __init__(self, omega1: float = 1.0, omega2: float = 0.0):
        self.omega1 = Parameter(omega1)
        self.omega2 = Parameter(omega2)

    def forward(self, x: Tensor) -> Tensor:
        return ops.harmonic(x, self.omega1, self.omega2)


def make_activation(kind: str) -> Module:
    if kind == "harmonic":
        return HarmonicActivation()
    if kind == "gelu":
        return GELU()
    if kind == "sine":
        return Sine()
    raise ValueError(f"Unknown activation {kind!r}, expected one of {ACTIVATIONS}")


class ConvNeXtBlock(Module):
    """depthwise kxk -> LayerNorm -> 1x1 expand -> GELU -> 1x1 project, plus input."""

    def __init__(
        self,
        channels: int,
        rng: np.random.Generator,
        kernel_size: int = 7,
        expansion: int = 4,
    ):
        self.depthwise = Conv2d(
            channels,
            channels,
            kernel_size,
            rng,
            padding=kernel_size // 2,
            groups=channels,
        )
        self.norm = LayerNorm2d(channels)
        self.expand = Conv2d(channels, channels * expansion, 1, rng)
        self.project = Conv2d(channels * expansion, channels, 1, rng)

    def forward(self, x: Tensor) -> Tensor:
        y = self.expand(self.norm(self.depthwise(x)))
        return x + self.project(ops.gelu(y))
