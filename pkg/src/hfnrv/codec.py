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

"""Trained model -> bitstream, with the numbers that describe the trade-off."""
import copy
import dataclasses
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple
from absl import logging
import numpy as np
from hfnrv.bitstream import (
    DecodableVideo,
    build_bitstream,
    parse,
    section_sizes,
    serialize,
)
from hfnrv.compress import measure_bpp, prune
from hfnrv.huffman import HuffmanTable, entropy, mean_code_length
from hfnrv.media import VideoSequence, evaluate
from hfnrv.model import Decoder, EmbeddingSet, VideoModel, decode_frame
from hfnrv.train import TrainConfig, train_video


@dataclasses.dataclass
class CompressionReport:
    bpp: float
    psnr_before: float
    psnr_after: float
    ms_ssim_after: float
    prune_ratio: float
    kept_fraction: float
    entropy: float
    mean_code_length: float
    stream_bytes: int
    sections: Dict[str, int]

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


class RatePoint(NamedTuple):
    prune_ratio: float
    bpp: float
    psnr: float
    ms_ssim: float


def decode_video(decoder: Decoder, embeddings: EmbeddingSet) -> VideoSequence:
    return VideoSequence(
        np.stack(
            [
                decode_frame(decoder, embeddings, t).data
                for t in range(embeddings.frame_count)
            ]
        ).astype(np.float32)
    )


def compress_model(
    model: VideoModel,
    embeddings: EmbeddingSet,
    frames: VideoSequence,
    ratio: float,
    finetune_epochs: int = 0,
    train_cfg: Optional[TrainConfig] = None,
) -> Tuple[bytes, CompressionReport]:
    """Prune, optionally fine-tune under the mask, quantize and entropy code.

    `model` is left untouched. The reported quality is measured on frames
    decoded from the parsed bytes, so it is exactly what a decoder sees.
    """
    if finetune_epochs < 0:
        raise ValueError(f"finetune_epochs must be >= 0, got {finetune_epochs}")
    psnr_before = evaluate(frames, decode_video(model.decoder, embeddings)).mean_psnr

    work = copy.deepcopy(model)
    mask = prune(work.decoder, ratio)
    logging.info(
        "Pruned %d of %d decoder kernel weights", mask.total - mask.kept, mask.total
    )
    if finetune_epochs:
        cfg = dataclasses.replace(train_cfg or TrainConfig(), epochs=finetune_epochs)
        work, embeddings, _ = train_video(
            frames, work.config, cfg, model=work, masks=mask.masks
        )

    stream = build_bitstream(
        work.decoder, work.config, embeddings, frames.frame_size, mask
    )
    data = serialize(stream)
    decoded = DecodableVideo(parse(data)).decode_all()
    metrics = evaluate(frames, decoded)

    symbols = stream.symbols()
    table = HuffmanTable.from_symbols(symbols)
    size = frames.frame_size
    report = CompressionReport(
        bpp=measure_bpp(len(data), len(frames), size.height, size.width),
        psnr_before=psnr_before,
        psnr_after=metrics.mean_psnr,
        ms_ssim_after=metrics.mean_ms_ssim,
        prune_ratio=ratio,
        kept_fraction=mask.kept_fraction(),
        entropy=entropy(symbols),
        mean_code_length=mean_code_length(table, symbols),
        stream_bytes=len(data),
        sections=section_sizes(data),
    )
    logging.info(
        "ratio %.3f: %d bytes, %.4f bpp, psnr %.3f -> %.3f",
        ratio,
        report.stream_bytes,
        report.bpp,
        report.psnr_before,
        report.psnr_after,
    )
    return data, report


def rd_sweep(
    model: VideoModel,
    embeddings: EmbeddingSet,
    frames: VideoSequence,
    ratios: Sequence[float],
    finetune_epochs: int = 0,
    train_cfg: Optional[TrainConfig] = None,
) -> List[RatePoint]:
    """One rate-distortion point per prune ratio, all from the same trained model."""
    if not ratios:
        raise ValueError("rd_sweep needs at least one prune ratio")
    points = []
    for ratio in ratios:
        _, report = compress_model(
            model, embeddings, frames, ratio, finetune_epochs, train_cfg
        )
        points.append(
            RatePoint(ratio, report.bpp, report.psnr_after, report.ms_ssim_after)
        )
    return points
