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

"""Unquantized model files written by `hfnrv train`.

    "HFNM"  u16 version  u32 json_length  json  float32 tensors ('<f4', C order)

The JSON lists the tensors in file order, so identical models produce
identical bytes.
"""
import dataclasses
import json
import struct
from typing import Dict
import numpy as np
from hfnrv import config as config_lib
from hfnrv.frame_geometry import FrameSize
from hfnrv.model import EmbeddingSet, VideoModel


MAGIC = b"HFNM"
VERSION = 1

_PREAMBLE = struct.Struct("<4sHI")


class CheckpointError(ValueError):
    pass


@dataclasses.dataclass
class Checkpoint:
    config: config_lib.RunConfig
    model: VideoModel
    embeddings: EmbeddingSet
    frame_size: FrameSize


def _tensors(ckpt: Checkpoint) -> Dict[str, np.ndarray]:
    tensors = {f"model.{n}": v for n, v in ckpt.model.state_dict().items()}
    tensors["embedding.e_c"] = ckpt.embeddings.e_c
    if ckpt.embeddings.e_h is not None:
        tensors["embedding.e_h"] = ckpt.embeddings.e_h
    return tensors


def to_bytes(ckpt: Checkpoint) -> bytes:
    tensors = _tensors(ckpt)
    meta = json.dumps(
        {
            "config": config_lib.to_dict(ckpt.config),
            "height": ckpt.frame_size.height,
            "width": ckpt.frame_size.width,
            "tensors": [[name, list(v.shape)] for name, v in tensors.items()],
        },
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    out = bytearray(_PREAMBLE.pack(MAGIC, VERSION, len(meta)))
    out += meta
    for v in tensors.values():
        out += np.ascontiguousarray(v, dtype="<f4").tobytes()
    return bytes(out)


def from_bytes(data: bytes) -> Checkpoint:
    if len(data) < _PREAMBLE.size:
        raise CheckpointError(f"Model file too short ({len(data)} bytes)")
    magic, version, meta_length = _PREAMBLE.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointError(f"Bad model file magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise CheckpointError(f"Unsupported model file version {version}")
    offset = _PREAMBLE.size
    try:
        meta = json.loads(data[offset : offset + meta_length].decode("utf-8"))
        run_config = config_lib.from_dict(
            config_lib.RunConfig, meta["config"]
        ).validate()
        frame_size = FrameSize(int(meta["height"]), int(meta["width"]))
        layout = [
            (str(name), tuple(int(d) for d in shape))
            for name, shape in meta["tensors"]
        ]
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as e:
        raise CheckpointError(f"Corrupt model file header: {e}") from e
    offset += meta_length

    tensors = {}
    for name, shape in layout:
        n_bytes = 4 * int(np.prod(shape))
        if offset + n_bytes > len(data):
            raise CheckpointError(f"Model file ends inside tensor {name}")
        tensors[name] = (
            np.frombuffer(data, dtype="<f4", count=n_bytes // 4, offset=offset)
            .reshape(shape)
            .astype(np.float32)
        )
        offset += n_bytes
    if offset != len(data):
        raise CheckpointError(f"{len(data) - offset} trailing bytes in model file")

    if "embedding.e_c" not in tensors:
        raise CheckpointError("Model file has no content embeddings")
    model = VideoModel(run_config.model, seed=run_config.train.seed)
    state = {
        n[len("model.") :]: v for n, v in tensors.items() if n.startswith("model.")
    }
    model.load_state_dict(state)
    embeddings = EmbeddingSet(tensors["embedding.e_c"], tensors.get("embedding.e_h"))
    embeddings.validate(run_config.model, frame_size)
    return Checkpoint(run_config, model, embeddings, frame_size)


def write_checkpoint(path: str, ckpt: Checkpoint):
    with open(path, "wb") as f:
        f.write(to_bytes(ckpt))


def read_checkpoint(path: str) -> Checkpoint:
    with open(path, "rb") as f:
        return from_bytes(f.read())
