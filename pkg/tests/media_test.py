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

import os
from hfnrv.media import (
    FrameIOError,
    MetricsReport,
    VideoSequence,
    evaluate,
    feature_map_grid,
    freq_map,
    load_frames,
    ms_ssim,
    ms_ssim_scales,
    psnr,
    save_frames,
    save_gray_png,
    synthetic_video,
    to_uint8,
)
import numpy as np
from PIL import Image
import pytest


def _solid_png(path, value, size=(4, 6)):
    Image.fromarray(np.full(size + (3,), value, dtype=np.uint8)).save(path)


class TestVideoSequence:
    def test_shape_checks(self):
        with pytest.raises(ValueError, match="T x 3 x H x W"):
            VideoSequence(np.zeros((2, 4, 8, 8)))
        with pytest.raises(ValueError, match="at least one frame"):
            VideoSequence(np.zeros((0, 3, 8, 8)))

    def test_accessors(self):
        seq = synthetic_video(3, 8, 12)
        assert len(seq) == 3
        assert seq.frame_size == (8, 12)
        assert seq.tensor(2).shape == (3, 8, 12)


def test_to_uint8():
    frame = np.array([-0.5, 0.0, 0.5, 1.0, 2.0])
    assert to_uint8(frame).tolist() == [0, 0, 128, 255, 255]


class TestFrameFiles:
    def test_png_round_trip(self, tmp_path):
        video = synthetic_video(3, 8, 12)
        written = save_frames(video, str(tmp_path / "frames"))
        assert [os.path.basename(p) for p in written] == [
            "000000.png",
            "000001.png",
            "000002.png",
        ]
        loaded = load_frames(str(tmp_path / "frames"))
        assert loaded.frames.dtype == np.float32
        np.testing.assert_allclose(loaded.frames, video.frames, atol=0.5 / 255 + 1e-6)

    def test_raw_round_trip(self, tmp_path):
        video = synthetic_video(2, 8, 12)
        path = str(tmp_path / "clip.rvid")
        save_frames(video, path, "raw")
        loaded = load_frames(path)
        np.testing.assert_array_equal(to_uint8(loaded.frames), to_uint8(video.frames))

    def test_png_numeric_order(self, tmp_path):
        for name, value in (("10.png", 30), ("2.png", 20), ("1.png", 10)):
            _solid_png(str(tmp_path / name), value)
        (tmp_path / "notes.txt").write_text("ignored")
        loaded = load_frames(str(tmp_path), "png")
        assert to_uint8(loaded.frames[:, 0, 0, 0]).tolist() == [10, 20, 30]

    def test_empty_directory(self, tmp_path):
        with pytest.raises(FrameIOError, match="No PNG frames"):
            load_frames(str(tmp_path))

    def test_mismatched_frame_sizes(self, tmp_path):
        _solid_png(str(tmp_path / "0.png"), 0)
        _solid_png(str(tmp_path / "1.png"), 0, size=(4, 8))
        with pytest.raises(FrameIOError, match="is 4x8, expected 4x6"):
            load_frames(str(tmp_path))

    def test_unreadable_png(self, tmp_path):
        (tmp_path / "0.png").write_bytes(b"not a png")
        with pytest.raises(FrameIOError, match="Cannot read frame"):
            load_frames(str(tmp_path))

    @pytest.mark.parametrize(
        "content, message",
        [
            (b"RV", "too short"),
            (b"XXXX" + bytes(12), "bad magic"),
            (
                b"RVID" + bytes([1, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0]) + bytes(5),
                "payload has 5",
            ),
        ],
    )
    def test_bad_raw(self, tmp_path, content, message):
        path = tmp_path / "bad.rvid"
        path.write_bytes(content)
        with pytest.raises(FrameIOError, match=message):
            load_frames(str(path), "raw")

    def test_missing_file(self, tmp_path):
        with pytest.raises(FrameIOError):
            load_frames(str(tmp_path / "absent.rvid"))

    def test_unknown_format(self, tmp_path):
        with pytest.raises(ValueError, match="Unknown frame format"):
            load_frames(str(tmp_path), "y4m")
        with pytest.raises(ValueError, match="Unknown frame format"):
            save_frames(synthetic_video(1, 4, 4), str(tmp_path), "y4m")

    def test_frame_io_error_is_os_error(self):
        assert issubclass(FrameIOError, OSError)

    def test_save_gray_png(self, tmp_path):
        path = str(tmp_path / "map.png")
        save_gray_png(path, np.linspace(0, 1, 12).reshape(3, 4))
        with Image.open(path) as img:
            assert img.mode == "L"
            assert img.size == (4, 3)


class TestPsnr:
    def test_identical_is_capped(self):
        x = np.random.default_rng(0).random((3, 4, 4))
        assert psnr(x, x) == 100.0

    def test_known_value(self):
        x = np.zeros((3, 4, 4))
        assert psnr(x, x + 0.1) == pytest.approx(20.0)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="Shape mismatch"):
            psnr(np.zeros((3, 4, 4)), np.zeros((3, 4, 5)))


class TestMsSsim:
    @pytest.mark.parametrize(
        "height, width, scales",
        [(16, 16, 1), (22, 40, 2), (64, 128, 3), (176, 200, 5), (1080, 1920, 5)],
    )
    def test_scales(self, height, width, scales):
        assert ms_ssim_scales(height, width) == scales

    def test_identical(self):
        frame = synthetic_video(1, 64, 64).frames[0]
        assert ms_ssim(frame, frame) == pytest.approx(1.0)

    def test_noise_lowers_score(self):
        frame = synthetic_video(1, 64, 64).frames[0]
        noise = np.random.default_rng(0).standard_normal(frame.shape)
        noisy = np.clip(frame + 0.1 * noise, 0, 1)
        clean_score = ms_ssim(frame, frame)
        noisy_score = ms_ssim(frame, noisy)
        assert 0.0 <= noisy_score < clean_score

    def test_symmetric(self):
        a = synthetic_video(1, 32, 32, seed=1).frames[0]
        b = synthetic_video(1, 32, 32, seed=2).frames[0]
        assert ms_ssim(a, b) == ms_ssim(b, a)


class TestFrequencyMap:
    def test_constant_frame_is_a_centered_spike(self):
        spectrum = freq_map(np.full((3, 8, 10), 0.5))
        assert spectrum.shape == (8, 10)
        assert spectrum[4, 5] == 1.0
        assert spectrum.sum() == pytest.approx(1.0, abs=1e-9)

    def test_normalized(self):
        spectrum = freq_map(synthetic_video(1, 16, 16).frames[0])
        assert spectrum.min() == 0.0
        assert spectrum.max() == 1.0

    def test_black_frame(self):
        assert not freq_map(np.zeros((3, 4, 4))).any()


def test_feature_map_grid():
    features = np.random.default_rng(0).random((5, 4, 4))
    grid = feature_map_grid(features)
    assert grid.shape == (9, 14)
    assert grid.min() == 0.0 and grid.max() == 1.0
    # gap rows stay black
    assert not grid[4].any()
    assert feature_map_grid(np.zeros((40, 2, 2)), channels=16).shape == (11, 11)


class TestEvaluate:
    def test_report(self):
        ref = synthetic_video(2, 16, 16)
        recon = VideoSequence(np.clip(ref.frames + 0.05, 0, 1))
        report = evaluate(ref, recon)
        assert len(report.psnr) == 2
        assert report.mean_psnr == pytest.approx(np.mean(report.psnr))
        summary = report.to_dict()
        assert summary["frames"] == 2
        assert "bpp" not in summary

    def test_bpp_reported_when_known(self):
        report = MetricsReport([30.0, 32.0], [0.9, 0.95], bpp=0.1)
        assert report.to_dict()["bpp"] == 0.1
        assert report.mean_psnr == 31.0

    def test_mismatch(self):
        with pytest.raises(ValueError, match="differ"):
            evaluate(synthetic_video(2, 8, 8), synthetic_video(3, 8, 8))


class TestSyntheticVideo:
    def test_range_and_determinism(self):
        a = synthetic_video(4, 16, 24, seed=3)
        assert a.frames.shape == (4, 3, 16, 24)
        assert a.frames.dtype == np.float32
        assert 0.0 <= a.frames.min() and a.frames.max() <= 1.0
        b = synthetic_video(4, 16, 24, seed=3)
        np.testing.assert_array_equal(a.frames, b.frames)

    def test_frames_move(self):
        video = synthetic_video(2, 16, 24)
        assert not np.array_equal(video.frames[0], video.frames[1])

    def test_invalid(self):
        with pytest.raises(ValueError, match="Invalid synthetic video"):
            synthetic_video(0, 16, 16)
