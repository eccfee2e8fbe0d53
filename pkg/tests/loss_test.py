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

from hfnrv import ops
from hfnrv.autograd import Parameter, Tensor, grad_check, precision
from hfnrv.loss import (
    LossConfig,
    fft2d,
    frequency_loss,
    gaussian_window,
    mean_absolute_error,
    mean_squared_error,
    spatial_loss,
    spectral_weight,
    ssim,
    ssim_window_size,
    total_loss,
)
import numpy as np
import pytest


def _pair(shape=(3, 12, 12), seed=0):
    rng = np.random.default_rng(seed)
    x = rng.random(shape)
    return Tensor(x), Tensor(np.clip(x + 0.1 * rng.standard_normal(shape), 0, 1))


def test_gaussian_window():
    w = gaussian_window(11)
    assert w.sum() == pytest.approx(1.0)
    np.testing.assert_allclose(w, w[::-1])
    assert w.argmax() == 5


@pytest.mark.parametrize(
    "height, width, expected",
    [(64, 128, 11), (16, 16, 11), (8, 8, 7), (4, 10, 3), (1, 1, 1)],
)
def test_ssim_window_size(height, width, expected):
    assert ssim_window_size(height, width) == expected


class TestSsim:
    def test_identical_images(self):
        x, _ = _pair()
        assert float(ssim(x, x)) == 1.0

    def test_symmetric(self):
        x, y = _pair()
        assert float(ssim(x, y)) == float(ssim(y, x))

    def test_noise_lowers_ssim(self):
        x, y = _pair()
        assert 0.0 < float(ssim(x, y)) < 1.0

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="Shape mismatch"):
            ssim(Tensor(np.zeros((3, 8, 8))), Tensor(np.zeros((3, 8, 9))))


def test_pixel_errors():
    x = Tensor(np.zeros((1, 2, 2)))
    y = Tensor(np.array([[[1.0, -1.0], [0.5, 0.0]]]))
    assert float(mean_absolute_error(x, y)) == pytest.approx(0.625)
    assert float(mean_squared_error(x, y)) == pytest.approx(0.5625)


class TestFrequencyLoss:
    def test_zero_for_identical(self):
        x, _ = _pair()
        assert float(frequency_loss(x, x)) == 0.0

    def test_weight_is_log_of_spectral_difference(self):
        x, y = _pair()
        plain = spectral_weight(x, y, log=False)
        np.testing.assert_allclose(spectral_weight(x, y), np.log1p(plain))
        assert plain.shape == (3, 12, 12)

    def test_unweighted_variant_is_mean_squared_error(self):
        # orthonormal DFT preserves energy per channel
        x, y = _pair()
        no_log = frequency_loss(x, y, LossConfig(variant="no_log"))
        assert float(no_log) == pytest.approx(float(mean_squared_error(x, y)), rel=1e-5)

    def test_given_weight_is_used(self):
        x, y = _pair()
        zero = np.zeros((3, 12, 12))
        assert float(frequency_loss(x, y, weight=zero)) == 0.0

    def test_weight_shape_mismatch(self):
        x, y = _pair()
        with pytest.raises(ValueError, match="Weight shape"):
            frequency_loss(x, y, weight=np.ones((3, 12, 11)))

    def test_gradient_with_fixed_weight(self):
        with precision("high"):
            rng = np.random.default_rng(3)
            xhat = Parameter(rng.random((2, 5, 6)))
            x = Parameter(rng.random((2, 5, 6)))
            weight = rng.random((2, 5, 6)) + 0.5
            fn = lambda a, b: frequency_loss(a, b, weight=weight)
            assert grad_check(fn, [xhat, x]) < 1e-4


def test_spatial_loss_gradient():
    with precision("high"):
        rng = np.random.default_rng(4)
        xhat = Parameter(rng.random((3, 7, 7)))
        x = Tensor(rng.random((3, 7, 7)))
        cfg = LossConfig()
        assert grad_check(lambda a: spatial_loss(a, x, cfg), [xhat]) < 1e-4


class TestTotalLoss:
    def test_exactly_zero_for_perfect_reconstruction(self):
        x, _ = _pair((3, 16, 16))
        report = total_loss(x, x, LossConfig())
        assert report.values() == (0.0, 0.0, 0.0)

    def test_full_combines_terms(self):
        x, y = _pair()
        cfg = LossConfig(alpha=0.7, mu=100.0)
        l_spa, l_fre, l_total = total_loss(y, x, cfg).values()
        assert l_total == pytest.approx(l_spa + 100.0 * l_fre, rel=1e-5)
        assert l_spa == pytest.approx(
            0.7 * float(mean_absolute_error(y, x)) + 0.3 * (1 - float(ssim(y, x))),
            rel=1e-5,
        )

    def test_spa_only(self):
        x, y = _pair()
        report = total_loss(y, x, LossConfig(variant="spa_only"))
        assert float(report.l_total) == float(report.l_spa)
        assert float(report.l_fre) > 0

    def test_l2_only(self):
        x, y = _pair()
        report = total_loss(y, x, LossConfig(variant="l2_only"))
        assert float(report.l_total) == pytest.approx(float(mean_squared_error(y, x)))
        assert not report.l_spa.requires_grad
        assert not report.l_fre.requires_grad

    @pytest.mark.parametrize("variant", ["full", "spa_only", "l2_only", "no_log"])
    def test_backward_reaches_prediction(self, variant):
        rng = np.random.default_rng(5)
        xhat = Parameter(rng.random((3, 8, 8)))
        x = Tensor(rng.random((3, 8, 8)))
        report = total_loss(ops.mul(xhat, 1.0), x, LossConfig(variant=variant))
        report.l_total.backward()
        assert np.any(xhat.grad)


@pytest.mark.parametrize(
    "changes, message",
    [
        ({"alpha": 1.5}, "train.loss.alpha"),
        ({"mu": -1.0}, "train.loss.mu"),
        ({"variant": "l1"}, "train.loss.variant"),
    ],
)
def test_loss_config_validation(changes, message):
    with pytest.raises(ValueError, match=message):
        LossConfig(**changes).validate()


def _naive_dft(channel):
    h, w = channel.shape
    ky = np.exp(-2j * np.pi * np.outer(np.arange(h), np.arange(h)) / h)
    kx = np.exp(-2j * np.pi * np.outer(np.arange(w), np.arange(w)) / w)
    return ky @ channel @ kx.T / np.sqrt(h * w)


@pytest.mark.parametrize("height, width", [(1, 1), (2, 3), (4, 4), (5, 7), (16, 16)])
def test_fft2d_matches_naive_dft(height, width):
    rng = np.random.default_rng(height * 31 + width)
    channel = rng.standard_normal((height, width))
    spectrum = fft2d(channel)
    np.testing.assert_allclose(spectrum, _naive_dft(channel), atol=1e-9)
    # Parseval
    assert np.sum(np.abs(spectrum) ** 2) == pytest.approx(np.sum(channel**2), abs=1e-9)


def _oracle_total_loss(xhat, x, alpha=0.7, mu=100.0):
    g = np.exp(-((np.arange(3) - 1.0) ** 2) / (2 * 1.5**2))
    g /= g.sum()
    window = np.outer(g, g)

    def blur(img):
        return np.array(
            [
                [
                    [np.sum(c[i : i + 3, j : j + 3] * window) for j in range(2)]
                    for i in range(2)
                ]
                for c in img
            ]
        )

    c1, c2 = 0.01**2, 0.03**2
    mx, my = blur(xhat), blur(x)
    vx = blur(xhat * xhat) - mx * mx
    vy = blur(x * x) - my * my
    cov = blur(xhat * x) - mx * my
    ssim_map = ((2 * mx * my + c1) * (2 * cov + c2)) / (
        (mx * mx + my * my + c1) * (vx + vy + c2)
    )
    l_spa = alpha * np.mean(np.abs(xhat - x)) + (1 - alpha) * (1 - ssim_map.mean())
    diff = np.abs(np.array([_naive_dft(a - b) for a, b in zip(xhat, x)]))
    l_fre = np.mean(np.log1p(diff) * diff)
    return l_spa, l_fre, l_spa + mu * l_fre


def test_composite_loss_matches_oracle():
    rng = np.random.default_rng(11)
    xhat = rng.random((3, 4, 4))
    x = rng.random((3, 4, 4))
    with precision("high"):
        values = total_loss(Tensor(xhat), Tensor(x), LossConfig()).values()
    np.testing.assert_allclose(values, _oracle_total_loss(xhat, x), atol=1e-9)
