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

"""Reconstruction objectives: spatial (L1 + SSIM) and spectrally weighted L1."""
import dataclasses
from typing import NamedTuple, Optional, Tuple
import numpy as np
from hfnrv import ops
from hfnrv.autograd import Tensor, no_grad


VARIANTS = ("full", "spa_only", "l2_only", "no_log")

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


@dataclasses.dataclass(frozen=True)
class LossConfig:
    alpha: float = 0.7
    mu: float = 100.0
    variant: str = "full"

    def validate(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"train.loss.alpha must be in [0, 1], got {self.alpha}")
        if self.mu < 0:
            raise ValueError(f"train.loss.mu must be >= 0, got {self.mu}")
        if self.variant not in VARIANTS:
            raise ValueError(f"train.loss.variant {self.variant!r} not in {VARIANTS}")


class LossReport(NamedTuple):
    l_spa: Tensor
    l_fre: Tensor
    l_total: Tensor

    def values(self) -> Tuple[float, float, float]:
        return float(self.l_spa), float(self.l_fre), float(self.l_total)


def _check_shapes(x: Tensor, y: Tensor):
    if x.shape != y.shape:
        raise ValueError(f"Shape mismatch {x.shape} vs {y.shape}")


def gaussian_window(size: int, sigma: float = SSIM_SIGMA) -> np.ndarray:
    coords = np.arange(size, dtype=np.float64) - (size - 1) / 2
    g = np.exp(-(coords**2) / (2 * sigma**2))
    return g / g.sum()


def ssim_window_size(height: int, width: int) -> int:
    """Largest odd size <= min(height, width, 11)."""
    size = min(SSIM_WINDOW, height, width)
    return size if size % 2 else size - 1


def _gaussian_filter(img: Tensor, window: np.ndarray) -> Tensor:
    c = img.shape[0]
    k = window.size
    vertical = Tensor(
        np.tile(window.reshape(1, 1, k, 1), (c, 1, 1, 1)), dtype=img.dtype
    )
    horizontal = Tensor(
        np.tile(window.reshape(1, 1, 1, k), (c, 1, 1, 1)), dtype=img.dtype
    )
    return ops.conv2d(ops.conv2d(img, vertical, groups=c), horizontal, groups=c)


def ssim_maps(
    x: Tensor, y: Tensor, window_size: Optional[int] = None
) -> Tuple[Tensor, Tensor]:
    """Luminance and contrast-structure maps over valid Gaussian windows.

    Every product is written so that swapping x and y yields bit-identical maps.
    """
    _check_shapes(x, y)
    if window_size is None:
        window_size = ssim_window_size(*x.shape[1:])
    if window_size < 1:
        raise ValueError(f"Image {x.shape} too small for ssim")
    window = gaussian_window(window_size)
    c1 = SSIM_K1**2
    c2 = SSIM_K2**2
    mu_x = _gaussian_filter(x, window)
    mu_y = _gaussian_filter(y, window)
    mu_xx = ops.square(mu_x)
    mu_yy = ops.square(mu_y)
    mu_xy = mu_x * mu_y
    var_x = _gaussian_filter(ops.square(x), window) - mu_xx
    var_y = _gaussian_filter(ops.square(y), window) - mu_yy
    cov = _gaussian_filter(x * y, window) - mu_xy
    luminance = (2.0 * mu_xy + c1) / (mu_xx + mu_yy + c1)
    contrast_structure = (2.0 * cov + c2) / (var_x + var_y + c2)
    return luminance, contrast_structure


def ssim(x: Tensor, y: Tensor) -> Tensor:
    luminance, contrast_structure = ssim_maps(x, y)
    return ops.mean(luminance * contrast_structure)


def mean_absolute_error(x: Tensor, y: Tensor) -> Tensor:
    _check_shapes(x, y)
    return ops.mean(ops.abs_(x - y))


def mean_squared_error(x: Tensor, y: Tensor) -> Tensor:
    _check_shapes(x, y)
    return ops.mean(ops.square(x - y))


def spatial_loss(xhat: Tensor, x: Tensor, cfg: LossConfig) -> Tensor:
    return cfg.alpha * mean_absolute_error(xhat, x) + (1.0 - cfg.alpha) * (
        1.0 - ssim(xhat, x)
    )


def fft2d(channel) -> np.ndarray:
    """Orthonormal 2-D DFT over the last two axes."""
    data = channel.data if isinstance(channel, Tensor) else np.asarray(channel)
    return np.fft.fft2(data, norm="ortho")


def spectral_weight(xhat: Tensor, x: Tensor, log: bool = True) -> np.ndarray:
    """ln(1 + |F(xhat) - F(x)|) per channel and bin; carries no gradient."""
    _check_shapes(xhat, x)
    magnitude = np.abs(fft2d(xhat) - fft2d(x))
    return np.log1p(magnitude) if log else magnitude


def frequency_loss(
    xhat: Tensor,
    x: Tensor,
    cfg: Optional[LossConfig] = None,
    weight: Optional[np.ndarray] = None,
) -> Tensor:
    """Mean over channels and bins of W * |F(xhat) - F(x)|.

    W is recomputed from the inputs unless given; it is a constant in backward.
    """
    _check_shapes(xhat, x)
    log = cfg is None or cfg.variant != "no_log"
    diff = fft2d(xhat) - fft2d(x)
    magnitude = np.abs(diff)
    if weight is None:
        weight = np.log1p(magnitude) if log else magnitude.copy()
    elif weight.shape != magnitude.shape:
        raise ValueError(f"Weight shape {weight.shape} != spectrum {magnitude.shape}")
    n = magnitude.size
    value = np.asarray(np.sum(weight * magnitude) / n, dtype=xhat.dtype)

    def backward(g):
        unit = np.divide(diff, magnitude, out=np.zeros_like(diff), where=magnitude > 0)
        grad = np.real(np.fft.ifft2(weight * unit, norm="ortho")) * (g / n)
        return grad, -grad

    return Tensor.from_op(value, (xhat, x), backward, "frequency_loss")


def total_loss(
    xhat: Tensor,
    x: Tensor,
    cfg: LossConfig,
    weight: Optional[np.ndarray] = None,
) -> LossReport:
    _check_shapes(xhat, x)
    if cfg.variant == "l2_only":
        with no_grad():
            l_spa = spatial_loss(xhat, x, cfg)
            l_fre = frequency_loss(xhat, x, cfg, weight)
        return LossReport(l_spa, l_fre, mean_squared_error(xhat, x))
    l_spa = spatial_loss(xhat, x, cfg)
    if cfg.variant == "spa_only":
        with no_grad():
            l_fre = frequency_loss(xhat, x, cfg, weight)
        return LossReport(l_spa, l_fre, l_spa)
    l_fre = frequency_loss(xhat, x, cfg, weight)
    return LossReport(l_spa, l_fre, l_spa + cfg.mu * l_fre)
