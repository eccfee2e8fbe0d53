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

import dataclasses
import struct
from hfnrv import config as config_lib
from hfnrv.checkpoint import (
    Checkpoint,
    CheckpointError,
    from_bytes,
    read_checkpoint,
    to_bytes,
    write_checkpoint,
)
from hfnrv.model import VideoModel, encode_video
from hfnrv_test_helpers import tiny_model_config, tiny_video
import numpy as np
import pytest


def _checkpoint(**changes) -> Checkpoint:
    run = config_lib.RunConfig(model=tiny_model_config(**changes))
    model = VideoModel(run.model, seed=4)
    video = tiny_video()
    return Checkpoint(run, model, encode_video(model, video.frames), video.frame_size)


class TestCheckpoint:
    def test_round_trip(self):
        ckpt = _checkpoint()
        again = from_bytes(to_bytes(ckpt))
        assert again.config == ckpt.config
        assert again.frame_size == (16, 16)
        for name, value in ckpt.model.state_dict().items():
            np.testing.assert_array_equal(again.model.state_dict()[name], value)
        np.testing.assert_array_equal(again.embeddings.e_c, ckpt.embeddings.e_c)
        np.testing.assert_array_equal(again.embeddings.e_h, ckpt.embeddings.e_h)

    def test_restored_model_is_trainable(self):
        again = from_bytes(to_bytes(_checkpoint()))
        names = [p.name for p in again.model.parameters()]
        assert "decoder.head.weight" in names

    def test_identical_models_identical_bytes(self):
        assert to_bytes(_checkpoint()) == to_bytes(_checkpoint())

    def test_without_hf_branch(self):
        ckpt = _checkpoint(hf_branch_enabled=False)
        again = from_bytes(to_bytes(ckpt))
        assert again.embeddings.e_h is None

    def test_file(self, tmp_path):
        path = str(tmp_path / "model.hfnm")
        write_checkpoint(path, _checkpoint())
        assert read_checkpoint(path).embeddings.frame_count == 2


class TestCorruptCheckpoint:
    @pytest.fixture
    def data(self):
        return to_bytes(_checkpoint())

    def test_too_short(self):
        with pytest.raises(CheckpointError, match="too short"):
            from_bytes(b"HFNM")

    def test_bad_magic(self, data):
        with pytest.raises(CheckpointError, match="Bad model file magic"):
            from_bytes(b"HFNR" + data[4:])

    def test_version(self, data):
        with pytest.raises(CheckpointError, match="version 9"):
            from_bytes(data[:4] + b"\x09\x00" + data[6:])

    def test_truncated_tensor(self, data):
        with pytest.raises(CheckpointError, match="ends inside tensor"):
            from_bytes(data[:-3])

    def test_trailing_bytes(self, data):
        with pytest.raises(CheckpointError, match="4 trailing bytes"):
            from_bytes(data + bytes(4))

    def test_corrupt_header(self, data):
        (length,) = struct.unpack_from("<I", data, 6)
        with pytest.raises(CheckpointError, match="Corrupt model file header"):
            from_bytes(data[:10] + b"{" * length + data[10 + length :])

    def test_config_errors_name_the_key(self):
        ckpt = _checkpoint()
        bad = dataclasses.replace(
            ckpt.config,
            train=dataclasses.replace(ckpt.config.train, optimizer="sgd"),
        )
        with pytest.raises(ValueError, match="train.optimizer"):
            from_bytes(to_bytes(dataclasses.replace(ckpt, config=bad)))

    def test_embeddings_must_fit(self):
        ckpt = _checkpoint()
        small = ckpt.embeddings._replace(e_c=ckpt.embeddings.e_c[:, :, :2, :2])
        with pytest.raises(ValueError, match="e_c shape"):
            from_bytes(to_bytes(dataclasses.replace(ckpt, embeddings=small)))
