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

"""Encode videos into networks and networks into bitstreams.

Usage:
hfnrv train --input frames/ --output model.bin [--config c.json]
hfnrv compress --model model.bin --ratio 0.15 --output video.hfnr
hfnrv decode --input video.hfnr --output decoded/
hfnrv eval --ref frames/ --recon decoded/ --out report.json
hfnrv freqmap --input decoded/000000.png --output map.png
hfnrv ablate --variants full,V1,V8 --out table.json [--jobs 4]
hfnrv synth --output frames/
hfnrv rdcurve --model model.bin --ratios 0,0.15,0.3 --out rd.json
hfnrv featmap --model model.bin --input frames/ --frame 0 --stage 1 --output f.png

Exit status: 0 on success, 2 for usage, config and I/O errors, 3 for a
corrupt or unsupported bitstream.
"""
from concurrent import futures
import dataclasses
import json
import os
from typing import Callable, Dict, List, Optional, Tuple
from absl import app
from absl import flags
from absl import logging
import numpy as np
from hfnrv import config as config_lib
from hfnrv.autograd import Tensor, no_grad
from hfnrv.bitstream import BitstreamError, DecodableVideo, parse
from hfnrv.checkpoint import Checkpoint, read_checkpoint, write_checkpoint
from hfnrv.codec import compress_model, decode_video, rd_sweep
from hfnrv.config import ConfigError, RunConfig
from hfnrv.loss import frequency_loss
from hfnrv.media import (
    VideoSequence,
    evaluate,
    feature_map_grid,
    freq_map,
    load_frames,
    load_png_frame,
    save_frames,
    save_gray_png,
    synthetic_video,
)
from hfnrv.train import TrainLog, train_video


FLAGS = flags.FLAGS


flags.DEFINE_string("config", None, "JSON run config; flags below override its values")
flags.DEFINE_enum(
    "preset", "desk", list(config_lib.PRESETS), "Built-in config used without --config"
)
flags.DEFINE_string(
    "input", None, "Frames (PNG directory or raw file), bitstream or image"
)
flags.DEFINE_string("output", None, "Output file or directory")
flags.DEFINE_string(
    "format", None, "Frame format, png or raw; guessed from the path if unset"
)
flags.DEFINE_string("model", None, "Model file written by train")
flags.DEFINE_string(
    "log", None, "TrainLog JSON Lines path (default: <output>.log.jsonl)"
)
flags.DEFINE_float("ratio", None, "Prune ratio in [0, 1)")
flags.DEFINE_string("ratios", "0,0.15,0.3", "Comma separated prune ratios for rdcurve")
flags.DEFINE_integer("finetune_epochs", None, "Masked fine-tune epochs after pruning")
flags.DEFINE_integer("epochs", None, "Training epochs")
flags.DEFINE_integer("seed", None, "Initialization and shuffle seed")
flags.DEFINE_bool("shuffle", None, "Shuffle frame order every epoch")
flags.DEFINE_string("ref", None, "Reference frames for eval")
flags.DEFINE_string("recon", None, "Reconstructed frames for eval")
flags.DEFINE_string("out", None, "JSON report path ('-' means stdout)")
flags.DEFINE_string(
    "variants", "", "Comma separated ablation variant ids, e.g. full,V1,V3"
)
flags.DEFINE_integer("jobs", 1, "Parallel processes for ablate")
flags.DEFINE_integer("frames", 16, "Synthetic video frame count")
flags.DEFINE_integer("height", 64, "Synthetic video height")
flags.DEFINE_integer("width", 128, "Synthetic video width")
flags.DEFINE_integer("frame", 0, "Frame index for featmap")
flags.DEFINE_integer("stage", 0, "Encoder stage for featmap")


@dataclasses.dataclass
class Options:
    """Everything a command reads; built from FLAGS by the binary."""

    config: Optional[str] = None
    preset: str = "desk"
    input: Optional[str] = None
    output: Optional[str] = None
    format: Optional[str] = None
    model: Optional[str] = None
    log: Optional[str] = None
    ratio: Optional[float] = None
    ratios: str = "0,0.15,0.3"
    finetune_epochs: Optional[int] = None
    epochs: Optional[int] = None
    seed: Optional[int] = None
    shuffle: Optional[bool] = None
    ref: Optional[str] = None
    recon: Optional[str] = None
    out: Optional[str] = None
    variants: str = ""
    jobs: int = 1
    frames: int = 16
    height: int = 64
    width: int = 128
    frame: int = 0
    stage: int = 0

    @classmethod
    def from_flags(cls) -> "Options":
        return cls(**{f.name: FLAGS[f.name].value for f in dataclasses.fields(cls)})


def _require(value: Optional[str], flag: str, command: str) -> str:
    if not value:
        raise app.UsageError(f"{command} needs --{flag}", exitcode=2)
    return value


def run_config(opts: Options) -> RunConfig:
    """The file or preset config with flag overrides applied."""
    if opts.config:
        cfg = config_lib.load_config(opts.config)
    else:
        cfg = config_lib.preset(opts.preset)
    train = {
        k: v
        for k, v in (
            ("epochs", opts.epochs),
            ("seed", opts.seed),
            ("shuffle", opts.shuffle),
        )
        if v is not None
    }
    compress = {
        k: v
        for k, v in (
            ("prune_ratio", opts.ratio),
            ("finetune_epochs", opts.finetune_epochs),
        )
        if v is not None
    }
    paths = {k: v for k, v in (("input", opts.input), ("output", opts.output)) if v}
    cfg = dataclasses.replace(
        cfg,
        train=dataclasses.replace(cfg.train, **train),
        compress=dataclasses.replace(cfg.compress, **compress),
        paths=dataclasses.replace(cfg.paths, **paths),
    )
    return cfg.validate()


def _write_json(path: Optional[str], payload):
    text = json.dumps(payload, indent=2, sort_keys=True)
    if path is None or path == "-":
        print(text)
    else:
        with open(path, "w") as f:
            f.write(text + "\n")


def cmd_train(opts: Options) -> TrainLog:
    cfg = run_config(opts)
    source = _require(cfg.paths.input, "input", "train")
    output = _require(cfg.paths.output, "output", "train")
    frames = load_frames(source, opts.format)
    cfg.model.validate_frame(frames.frame_size)
    log_path = opts.log or output + ".log.jsonl"
    with open(log_path, "w") as log_file:

        def on_epoch(record):
            log_file.write(record.to_json() + "\n")
            log_file.flush()

        model, embeddings, log = train_video(
            frames, cfg.model, cfg.train, on_epoch=on_epoch
        )
    write_checkpoint(output, Checkpoint(cfg, model, embeddings, frames.frame_size))
    logging.info(
        "Wrote %s (%d decoder parameters) and %s",
        output,
        model.num_parameters("decoder"),
        log_path,
    )
    return log


def _checkpoint_frames(opts: Options, command: str) -> Tuple[Checkpoint, VideoSequence]:
    ckpt = read_checkpoint(_require(opts.model, "model", command))
    source = opts.input or ckpt.config.paths.input
    frames = load_frames(_require(source, "input", command), opts.format)
    if (
        frames.frame_size != ckpt.frame_size
        or len(frames) != ckpt.embeddings.frame_count
    ):
        raise ValueError(
            f"Frames {len(frames)}x{frames.frame_size} do not match the model "
            f"({ckpt.embeddings.frame_count}x{ckpt.frame_size})"
        )
    return ckpt, frames


def _finetune_epochs(opts: Options, ckpt: Checkpoint) -> int:
    if opts.finetune_epochs is not None:
        return opts.finetune_epochs
    return ckpt.config.compress.finetune_epochs


def cmd_compress(opts: Options) -> dict:
    output = _require(opts.output, "output", "compress")
    ckpt, frames = _checkpoint_frames(opts, "compress")
    compress = ckpt.config.compress
    ratio = compress.prune_ratio if opts.ratio is None else opts.ratio
    finetune = _finetune_epochs(opts, ckpt)
    data, report = compress_model(
        ckpt.model, ckpt.embeddings, frames, ratio, finetune, ckpt.config.train
    )
    with open(output, "wb") as f:
        f.write(data)
    result = report.to_dict()
    _write_json(opts.out or output + ".report.json", result)
    return result


def cmd_decode(opts: Options) -> List[str]:
    source = _require(opts.input, "input", "decode")
    output = _require(opts.output, "output", "decode")
    with open(source, "rb") as f:
        data = f.read()
    # Decode everything before touching the output directory.
    video = DecodableVideo(parse(data)).decode_all()
    return save_frames(video, output, opts.format or "png")


def cmd_eval(opts: Options) -> dict:
    ref = load_frames(_require(opts.ref, "ref", "eval"), opts.format)
    recon = load_frames(_require(opts.recon, "recon", "eval"), opts.format)
    if len(ref) != len(recon):
        raise ValueError(
            f"Reference has {len(ref)} frames, reconstruction {len(recon)}"
        )
    report = evaluate(ref, recon).to_dict()
    _write_json(opts.out, report)
    return report


def cmd_freqmap(opts: Options) -> np.ndarray:
    image = freq_map(load_png_frame(_require(opts.input, "input", "freqmap")))
    save_gray_png(_require(opts.output, "output", "freqmap"), image)
    return image


def _ablate_one(args: Tuple[str, RunConfig, VideoSequence]) -> dict:
    variant_id, cfg, frames = args
    variant = config_lib.VARIANTS[variant_id]
    cfg = variant.apply(cfg).validate()
    logging.info("Training variant %s (%s)", variant.id, variant.description)
    model, embeddings, log = train_video(frames, cfg.model, cfg.train)
    recon = decode_video(model.decoder, embeddings)
    metrics = evaluate(frames, recon)
    with no_grad():
        l_fre = np.mean(
            [
                float(frequency_loss(Tensor(a), Tensor(b)))
                for a, b in zip(recon.frames, frames.frames)
            ]
        )
    return {
        "variant": variant.id,
        "description": variant.description,
        "psnr": metrics.mean_psnr,
        "ms_ssim": metrics.mean_ms_ssim,
        "l_fre": float(l_fre),
        "final_loss": log.records[-1].loss if len(log) else None,
        "decoder_parameters": model.num_parameters("decoder"),
    }


def cmd_ablate(opts: Options) -> List[dict]:
    variants = config_lib.resolve_variants(opts.variants.split(","))
    cfg = run_config(opts)
    if cfg.paths.input:
        frames = load_frames(cfg.paths.input, opts.format)
    else:
        frames = synthetic_video(opts.frames, opts.height, opts.width, cfg.train.seed)
    jobs = [(v.id, cfg, frames) for v in variants]
    if opts.jobs > 1:
        with futures.ProcessPoolExecutor(max_workers=opts.jobs) as pool:
            rows = list(pool.map(_ablate_one, jobs))
    else:
        rows = [_ablate_one(job) for job in jobs]
    _write_json(opts.out, {"rows": rows})
    return rows


def cmd_synth(opts: Options) -> List[str]:
    video = synthetic_video(opts.frames, opts.height, opts.width, opts.seed or 0)
    output = _require(opts.output, "output", "synth")
    return save_frames(video, output, opts.format or "png")


def cmd_rdcurve(opts: Options) -> List[dict]:
    try:
        ratios = [float(r) for r in opts.ratios.split(",") if r.strip()]
    except ValueError as e:
        raise ConfigError(f"ratios: {opts.ratios!r} is not a list of numbers") from e
    ckpt, frames = _checkpoint_frames(opts, "rdcurve")
    finetune = _finetune_epochs(opts, ckpt)
    points = rd_sweep(
        ckpt.model, ckpt.embeddings, frames, ratios, finetune, ckpt.config.train
    )
    rows = [p._asdict() for p in points]
    _write_json(opts.out, {"points": rows})
    return rows


def cmd_featmap(opts: Options) -> np.ndarray:
    output = _require(opts.output, "output", "featmap")
    ckpt, frames = _checkpoint_frames(opts, "featmap")
    if not 0 <= opts.frame < len(frames):
        raise ValueError(f"Frame {opts.frame} outside 0..{len(frames) - 1}")
    x = frames.tensor(opts.frame)
    grids = []
    with no_grad():
        encoders = [ckpt.model.content_encoder, ckpt.model.hf_encoder]
        for encoder in (e for e in encoders if e is not None):
            stages = encoder.stage_features(x)
            if not 0 <= opts.stage < len(stages):
                raise ValueError(f"Stage {opts.stage} outside 0..{len(stages) - 1}")
            grids.append(feature_map_grid(stages[opts.stage]))
    width = max(g.shape[1] for g in grids)
    rows = [np.pad(g, ((0, 1), (0, width - g.shape[1]))) for g in grids]
    image = np.concatenate(rows)[:-1]
    save_gray_png(output, image)
    return image


COMMANDS: Dict[str, Callable[[Options], object]] = {
    "train": cmd_train,
    "encode": cmd_train,
    "compress": cmd_compress,
    "decode": cmd_decode,
    "eval": cmd_eval,
    "freqmap": cmd_freqmap,
    "ablate": cmd_ablate,
    "synth": cmd_synth,
    "rdcurve": cmd_rdcurve,
    "featmap": cmd_featmap,
}


def run(command: str, opts: Options) -> int:
    """Runs one command and maps failures to the exit status contract."""
    if command not in COMMANDS:
        logging.error(
            "Unknown command %r, expected one of %s", command, sorted(COMMANDS)
        )
        return 2
    try:
        COMMANDS[command](opts)
    except BitstreamError as e:
        logging.error("%s: %s", command, e)
        return 3
    except app.UsageError as e:
        logging.error("%s", e)
        return e.exitcode
    except (ValueError, OSError) as e:
        logging.error("%s: %s", command, e)
        return 2
    return 0


def _run(argv):
    if len(argv) != 2:
        raise app.UsageError(
            f"Expected exactly one command, one of {sorted(COMMANDS)}", exitcode=2
        )
    if "HFNRV_THREADS" in os.environ:
        logging.vlog(1, "HFNRV_THREADS=%s", os.environ["HFNRV_THREADS"])
    return run(argv[1], Options.from_flags())


def main(argv=None):
    # We don't seem to be __main__ when run as cli tool installed by setuptools
    app.run(_run, argv=argv)


if __name__ == "__main__":
    main()
