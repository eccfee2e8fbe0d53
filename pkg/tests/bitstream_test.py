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

import copy
from hfnrv.bitstream import (
    MAGIC,
    BadMagicError,
    Bitstream,
    BitstreamError,
    ChecksumError,
    DecodableVideo,
    TruncatedStreamError,
    UnsupportedVersionError,
    build_bitstream,
    parse,
    section_sizes,
    serialize,
)
from hfnrv.compress import dequantize, prune
from hfnrv.model import VideoModel, encode_video
from hfnrv_test_helpers import tiny_model_config, tiny_video
import numpy as np
import pytest


def _stream(ratio=0.0, **changes):
    model = VideoModel(tiny_model_config(**changes))
    video = tiny_video()
    embeddings = encode_video(model, video.frames)
    mask = prune(model.decoder, ratio) if ratio else None
    return build_bitstream(
        model.decoder, model.config, embeddings, video.frame_size, mask
    )


@pytest.fixture(scope="module")
def data():
    return serialize(_stream())


class TestRoundTrip:
    def test_entries(self, data):
        stream = _stream()
        parsed = parse(data)
        assert parsed.config == stream.config
        assert parsed.frame_count == 2
        assert parsed.frame_size == (16, 16)
        assert [e.name for e in parsed.entries] == [e.name for e in stream.entries]
        assert parsed.entries[-1].name == "embedding.e_h"
        assert parsed.entries[-2].name == "embedding.e_c"
        for a, b in zip(parsed.entries, stream.entries):
            assert a.kind == b.kind
            assert a.quantized.shape == b.quantized.shape
            assert a.quantized.zero_point == b.quantized.zero_point
            assert a.quantized.scale == b.quantized.scale
            assert a.quantized.minimum == b.quantized.minimum
            np.testing.assert_array_equal(a.quantized.codes, b.quantized.codes)

    def test_starts_with_magic(self, data):
        assert data[:4] == MAGIC

    def test_deterministic(self, data):
        assert serialize(_stream()) == data

    def test_section_sizes_cover_the_stream(self, data):
        sizes = section_sizes(data)
        assert sum(sizes.values()) == len(data)
        assert sizes["table"] == 256
        assert sizes["checksum"] == 4
        assert sizes["masks"] == 4

    def test_pruned_stream_carries_masks(self):
        stream = _stream(ratio=0.3)
        parsed = parse(serialize(stream))
        for a, b in zip(parsed.entries, stream.entries):
            if b.mask is None:
                assert a.mask is None
            else:
                np.testing.assert_array_equal(a.mask, b.mask)
                assert a.quantized.codes.size == b.mask.sum()
        assert section_sizes(serialize(stream))["masks"] > 4

    def test_without_hf_branch(self):
        parsed = parse(serialize(_stream(hf_branch_enabled=False)))
        assert parsed.entries[-1].name == "embedding.e_c"
        video = DecodableVideo(parsed)
        assert video.embeddings.e_h is None
        assert video.decode_all().frames.shape == (2, 3, 16, 16)


class TestDecodableVideo:
    def test_weights_are_dequantized_codes(self, data):
        parsed = parse(data)
        video = DecodableVideo(parsed)
        state = video.decoder.state_dict()
        for e in parsed.entries:
            if e.kind == "weight":
                np.testing.assert_array_equal(state[e.name], dequantize(e.quantized))
        np.testing.assert_array_equal(
            video.embeddings.e_c, dequantize(parsed.entry("embedding.e_c").quantized)
        )

    def test_decode(self, data):
        video = DecodableVideo(parse(data))
        assert video.frame_count == 2
        frame = video.decode_frame(1)
        assert frame.dtype == np.float32
        assert frame.shape == (3, 16, 16)
        assert 0.0 <= frame.min() and frame.max() <= 1.0
        np.testing.assert_array_equal(video.decode_all().frames[1], frame)
        with pytest.raises(ValueError, match="Frame index 2"):
            video.decode_frame(2)

    def test_pruned_weights_are_zero(self):
        parsed = parse(serialize(_stream(ratio=0.5)))
        state = DecodableVideo(parsed).decoder.state_dict()
        for e in parsed.entries:
            if e.mask is not None:
                assert not np.any(state[e.name][~e.mask])

    def test_frame_count_mismatch(self):
        stream = _stream()._replace(frame_count=5)
        with pytest.raises(BitstreamError, match="Header says 5 frames"):
            DecodableVideo(parse(serialize(stream)))

    def test_missing_weight(self):
        stream = _stream()
        stream = stream._replace(entries=stream.entries[1:])
        with pytest.raises(BitstreamError, match="not describe a decodable model"):
            DecodableVideo(parse(serialize(stream)))

    def test_missing_embedding(self):
        stream = _stream()
        stream = stream._replace(entries=stream.entries[:-1])
        with pytest.raises(BitstreamError, match="embedding.e_h"):
            DecodableVideo(parse(serialize(stream)))

    def test_entry_lookup(self):
        with pytest.raises(KeyError):
            _stream().entry("decoder.nothing")


class TestCorruption:
    def test_bad_magic(self, data):
        with pytest.raises(BadMagicError):
            parse(b"RIFF" + data[4:])

    def test_unsupported_version(self, data):
        with pytest.raises(UnsupportedVersionError, match="version 3"):
            parse(data[:4] + b"\x03\x00" + data[6:])

    @pytest.mark.parametrize("keep", [0, 3, 9, 40, -300, -5, -1])
    def test_truncated(self, data, keep):
        with pytest.raises(TruncatedStreamError):
            parse(data[:keep] if keep >= 0 else data[: len(data) + keep])

    def test_flipped_payload_bit(self, data):
        corrupt = bytearray(data)
        corrupt[-6] ^= 0x10
        with pytest.raises(ChecksumError):
            parse(bytes(corrupt))

    def test_flipped_header_byte(self, data):
        corrupt = bytearray(data)
        corrupt[20] ^= 0x01
        with pytest.raises(BitstreamError):
            parse(bytes(corrupt))

    def test_trailing_bytes(self, data):
        with pytest.raises(BitstreamError, match="1 trailing bytes"):
            parse(data + b"\x00")

    def test_errors_are_value_errors(self):
        assert issubclass(BitstreamError, ValueError)
        assert issubclass(ChecksumError, BitstreamError)


def test_bitstream_is_a_plain_value():
    stream = _stream()
    assert isinstance(copy.copy(stream), Bitstream)
