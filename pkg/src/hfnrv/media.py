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

"""Frames on disk, quality metrics and frequency maps.

Frames are float32 arrays shaped 3 x H x W with values in [0, 1].
"""
import dataclasses
import math
import os
import struct
from typing import List, Optional
from absl import logging
import numpy as np
from PIL import Image, UnidentifiedImageError
from hfnrv.autograd import Tensor, no_grad, precision
from hfnrv.frame_geometry import FrameSize
from hfnrv.loss import ssim_maps


PSNR_CAP = 100.0
MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
MS_SSIM_MIN_SIZE = 11

RAW_MAGIC = b"RVID"
_RAW_HEADER = struct.Struct("<4sIII")
FRAME_PATTERN = "{:06d}.png"


class FrameIOError(OSError):
    """A frame could not be read or written; the message names the frame."""


@dataclasses.dataclass(frozen=True)
class VideoSequence:
    frames: np.ndarray  # T x 3 x H x W, float32 in [0, 1]
    fps: float = 30.0

    def __post_init__(self):
        if self.frames.ndim != 4 or self.frames.shape[1] != 3:
            raise ValueError(f"Expected T x 3 x H x W frames, got {self.frames.shape}")
        if self.frames.shape[0] < 1:
            raise ValueError("A video needs at least one frame")

    def __len__(self) -> int:
        return self.frames.shape[0]

    @property
    def frame_size(self) -> FrameSize:
        return FrameSize(*self.frames.shape[2:])

    def tensor(self, t: int) -> Tensor:
        return Tensor(self.frames[t])


def to_uint8(frame: np.ndarray) -> np.ndarray:
    return np.rint(255.0 * np.clip(frame, 0.0, 1.0)).astype(np.uint8)


def _numeric_key(name: str):
    stem = os.path.splitext(name)[0]
    return (int(stem), name) if stem.isdigit() else (math.inf, name)


def _read_png(path: str) -> np.ndarray:
    try:
        with Image.open(path) as img:
            rgb = np.asarray(img.convert("RGB"))
    except (UnidentifiedImageError, OSError) as e:
        raise FrameIOError(f"Cannot read frame {path}: {e}") from e
    return (rgb.transpose(2, 0, 1) / 255.0).astype(np.float32)


def load_png_frame(path: str) -> np.ndarray:
    return _read_png(path)


def _load_png_dir(path: str) -> VideoSequence:
    try:
        names = sorted(
            (n for n in os.listdir(path) if n.lower().endswith(".png")),
            key=_numeric_key,
        )
    except OSError as e:
        raise FrameIOError(f"Cannot list frames in {path}: {e}") from e
    if not names:
        raise FrameIOError(f"No PNG frames in {path}")
    frames = []
    for name in names:
        frame = _read_png(os.path.join(path, name))
        if frames and frame.shape != frames[0].shape:
            raise FrameIOError(
                f"Frame {os.path.join(path, name)} "
                f"is {frame.shape[1]}x{frame.shape[2]}, "
                f"expected {frames[0].shape[1]}x{frames[0].shape[2]}"
            )
        frames.append(frame)
    return VideoSequence(np.stack(frames))


def _load_raw(path: str) -> VideoSequence:
    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError as e:
        raise FrameIOError(f"Cannot read {path}: {e}") from e
    if len(data) < _RAW_HEADER.size:
        raise FrameIOError(f"{path}: too short for a raw video header")
    magic, t, h, w = _RAW_HEADER.unpack_from(data)
    if magic != RAW_MAGIC:
        raise FrameIOError(f"{path}: bad magic {magic!r}")
    expected = t * 3 * h * w
    payload = data[_RAW_HEADER.size :]
    if t < 1 or len(payload) != expected:
        raise FrameIOError(
            f"{path}: header says {t}x3x{h}x{w} ({expected} bytes), "
            f"payload has {len(payload)}"
        )
    planes = np.frombuffer(payload, dtype=np.uint8).reshape(t, 3, h, w)
    return VideoSequence((planes / 255.0).astype(np.float32))


def load_frames(path: str, fmt: Optional[str] = None) -> VideoSequence:
    """Reads a directory of numbered PNGs or a raw planar file."""
    if fmt is None:
        fmt = "png" if os.path.isdir(path) else "raw"
    if fmt == "png":
        return _load_png_dir(path)
    if fmt == "raw":
        return _load_raw(path)
    raise ValueError(f"Unknown frame format {fmt!r}")


def save_frames(seq: VideoSequence, path: str, fmt: str = "png") -> List[str]:
    """Writes frames; returns the written paths."""
    if fmt == "png":
        os.makedirs(path, exist_ok=True)
        written = []
        for t, frame in enumerate(seq.frames):
            out = os.path.join(path, FRAME_PATTERN.format(t))
            try:
                Image.fromarray(to_uint8(frame).transpose(1, 2, 0)).save(out)
            except OSError as e:
                raise FrameIOError(f"Cannot write frame {out}: {e}") from e
            written.append(out)
        return written
    if fmt == "raw":
        t, _, h, w = seq.frames.shape
        try:
            with open(path, "wb") as f:
                f.write(_RAW_HEADER.pack(RAW_MAGIC, t, h, w))
                f.write(to_uint8(seq.frames).tobytes())
        except OSError as e:
            raise FrameIOError(f"Cannot write {path}: {e}") from e
        return [path]
    raise ValueError(f"Unknown frame format {fmt!r}")


def save_gray_png(path: str, image: np.ndarray):
    try:
        Image.fromarray(to_uint8(image)).save(path)
    except OSError as e:
        raise FrameIOError(f"Cannot write {path}: {e}") from e


def _as_array(x) -> np.ndarray:
    return np.asarray(x.data if isinstance(x, Tensor) else x, dtype=np.float64)


def psnr(x, y) -> float:
    """Peak 1; capped at 100 dB when the images (almost) match."""
    a, b = _as_array(x), _as_array(y)
    if a.shape != b.shape:
        raise ValueError(f"Shape mismatch {a.shape} vs {b.shape}")
    mse = float(np.mean(np.square(a - b)))
    if mse < 1e-10:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(1.0 / mse))


def ms_ssim_scales(height: int, width: int) -> int:
    side = min(height, width)
    scales = 1
    while scales < len(MS_SSIM_WEIGHTS) and side >= MS_SSIM_MIN_SIZE * 2**scales:
        scales += 1
    return scales


def _avg_pool2(img: np.ndarray) -> np.ndarray:
    c, h, w = img.shape
    img = img[:, : h - h % 2, : w - w % 2]
    return img.reshape(c, h // 2, 2, w // 2, 2).mean(axis=(2, 4))


def ms_ssim(x, y) -> float:
    a, b = _as_array(x), _as_array(y)
    if a.shape != b.shape:
        raise ValueError(f"Shape mismatch {a.shape} vs {b.shape}")
    scales = ms_ssim_scales(*a.shape[1:])
    if scales < len(MS_SSIM_WEIGHTS):
        logging.log_first_n(
            logging.WARNING, "MS-SSIM on %s uses %d scales", 1, a.shape, scales
        )
    weights = np.array(MS_SSIM_WEIGHTS[:scales])
    weights = weights / weights.sum()
    result = 1.0
    with precision("high"), no_grad():
        for s in range(scales):
            luminance, cs = ssim_maps(Tensor(a), Tensor(b))
            if s == scales - 1:
                value = float(np.mean(luminance.data * cs.data))
            else:
                value = float(np.mean(cs.data))
                a, b = _avg_pool2(a), _avg_pool2(b)
            result *= max(value, 0.0) ** weights[s]
    return float(result)


def freq_map(frame) -> np.ndarray:
    """Log-magnitude spectrum, DC centered, min-max normalized to [0, 1]."""
    data = _as_array(frame)
    magnitude = np.abs(np.fft.fft2(data, norm="ortho")).mean(axis=0)
    image = np.log1p(np.fft.fftshift(magnitude))
    lo, hi = image.min(), image.max()
    if hi <= lo:
        return np.zeros_like(image)
    return (image - lo) / (hi - lo)


def feature_map_grid(features, channels: int = 16, gap: int = 1) -> np.ndarray:
    """Tiles the first `channels` feature maps, each min-max normalized."""
    data = _as_array(features)
    data = data[: min(channels, data.shape[0])]
    n, h, w = data.shape
    cols = math.ceil(math.sqrt(n))
    rows = math.ceil(n / cols)
    grid = np.zeros((rows * (h + gap) - gap, cols * (w + gap) - gap))
    for i, fmap in enumerate(data):
        lo, hi = fmap.min(), fmap.max()
        tile = (fmap - lo) / (hi - lo) if hi > lo else np.zeros_like(fmap)
        r, c = divmod(i, cols)
        top, left = r * (h + gap), c * (w + gap)
        grid[top : top + h, left : left + w] = tile
    return grid


@dataclasses.dataclass
class MetricsReport:
    psnr: List[float]
    ms_ssim: List[float]
    bpp: Optional[float] = None

    @property
    def mean_psnr(self) -> float:
        return float(np.mean(self.psnr))

    @property
    def mean_ms_ssim(self) -> float:
        return float(np.mean(self.ms_ssim))

    def to_dict(self) -> dict:
        report = {
            "frames": len(self.psnr),
            "psnr": self.psnr,
            "ms_ssim": self.ms_ssim,
            "mean_psnr": self.mean_psnr,
            "mean_ms_ssim": self.mean_ms_ssim,
        }
        if self.bpp is not None:
            report["bpp"] = self.bpp
        return report


def evaluate(ref: VideoSequence, recon: VideoSequence) -> MetricsReport:
    if ref.frames.shape != recon.frames.shape:
        raise ValueError(
            f"Reference {ref.frames.shape} and "
            f"reconstruction {recon.frames.shape} differ"
        )
    return MetricsReport(
        psnr=[psnr(a, b) for a, b in zip(ref.frames, recon.frames)],
        ms_ssim=[ms_ssim(a, b) for a, b in zip(ref.frames, recon.frames)],
    )


def synthetic_video(
    frames: int = 16, height: int = 64, width: int = 128, seed: int = 0
) -> VideoSequence:
    """Moving sinusoidal gratings over smooth gradients, plus a hard-edged box."""
    if frames < 1 or height < 1 or width < 1:
        raise ValueError(f"Invalid synthetic video size {frames}x{height}x{width}")
    rng = np.random.default_rng(seed)
    yy, xx = np.meshgrid(
        np.linspace(0.0, 1.0, height), np.linspace(0.0, 1.0, width), indexing="ij"
    )
    freq = rng.uniform(1.5, 4.0, size=(3, 2))
    phase = rng.uniform(0.0, 2 * math.pi, size=3)
    tilt = rng.uniform(-1.0, 1.0, size=(3, 2))
    box_color = rng.uniform(0.0, 1.0, size=3)
    box_h, box_w = max(1, height // 3), max(1, width // 5)
    video = np.empty((frames, 3, height, width), dtype=np.float32)
    for t in range(frames):
        shift = t / frames
        for c in range(3):
            grating = np.sin(
                2 * math.pi * (freq[c, 0] * (xx - shift) + freq[c, 1] * yy) + phase[c]
            )
            gradient = 0.5 + 0.25 * (tilt[c, 0] * (xx - 0.5) + tilt[c, 1] * (yy - 0.5))
            video[t, c] = 0.25 * grating + gradient
        top = height // 3
        left = int((0.1 + 0.6 * shift) * (width - box_w))
        video[t, :, top : top + box_h, left : left + box_w] = box_color[:, None, None]
    return VideoSequence(np.clip(video, 0.0, 1.0))
