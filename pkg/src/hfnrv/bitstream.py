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

"""The compressed video container.

All integers little-endian:

    "HFNR"  u16 version  u32 header_length
    header: u32 json_length, json (model config, frames, height, width)
            u16 entry_count, then per entry:
              u16 name_length, name, u8 kind, u8 ndim, u32 dims[ndim],
              u32 mask_offset (0xFFFFFFFF = dense), u32 symbol_count,
              f32 scale, f32 minimum, u8 zero_point
    u32 mask_length, mask bytes (packed bits, byte-aligned per tensor)
    256 x u8 canonical Huffman code lengths
    u32 payload_length, payload (all entries' codes, MSB first)
    u32 crc32 of every preceding byte
"""
import json
import struct
import zlib
from typing import Dict, List, NamedTuple, Optional
import numpy as np
from hfnrv import config as config_lib
from hfnrv.compress import PruneMask, QuantizedTensor, dequantize, quantize_8bit
from hfnrv.frame_geometry import FrameSize
from hfnrv.huffman import ALPHABET, HuffmanDecodeError, HuffmanTable
from hfnrv.media import VideoSequence
from hfnrv.model import Decoder, EmbeddingSet, ModelConfig, decode_frame


MAGIC = b"HFNR"
VERSION = 2
DENSE = 0xFFFFFFFF
KINDS = ("weight", "embedding")

_PREAMBLE = struct.Struct("<4sHI")
_U8 = struct.Struct("<B")
_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")
_ENTRY_TAIL = struct.Struct("<IIffB")


class BitstreamError(ValueError):
    pass


class BadMagicError(BitstreamError):
    pass


class UnsupportedVersionError(BitstreamError):
    pass


class TruncatedStreamError(BitstreamError):
    pass


class ChecksumError(BitstreamError):
    pass


class TensorEntry(NamedTuple):
    name: str
    kind: str
    quantized: QuantizedTensor
    mask: Optional[np.ndarray] = None


class Bitstream(NamedTuple):
    config: ModelConfig
    frame_count: int
    frame_size: FrameSize
    entries: List[TensorEntry]

    def entry(self, name: str) -> TensorEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def symbols(self) -> np.ndarray:
        return np.concatenate([e.quantized.codes for e in self.entries])


def build_bitstream(
    decoder: Decoder,
    config: ModelConfig,
    embeddings: EmbeddingSet,
    frame_size: FrameSize,
    mask: Optional[PruneMask] = None,
) -> Bitstream:
    """Quantizes the decoder (honoring the prune mask) and the embeddings."""
    embeddings.validate(config, frame_size)
    entries = []
    for name, p in decoder.named_parameters():
        keep = mask.get(name) if mask is not None else None
        entries.append(TensorEntry(name, "weight", quantize_8bit(p.data, keep), keep))
    entries.append(
        TensorEntry("embedding.e_c", "embedding", quantize_8bit(embeddings.e_c))
    )
    if embeddings.e_h is not None:
        entries.append(
            TensorEntry("embedding.e_h", "embedding", quantize_8bit(embeddings.e_h))
        )
    return Bitstream(config, embeddings.frame_count, frame_size, entries)


def serialize(stream: Bitstream) -> bytes:
    meta = json.dumps(
        {
            "model": config_lib.to_dict(stream.config),
            "frames": stream.frame_count,
            "height": stream.frame_size.height,
            "width": stream.frame_size.width,
        },
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")

    header = bytearray(_U32.pack(len(meta)) + meta)
    header += _U16.pack(len(stream.entries))
    masks = bytearray()
    for e in stream.entries:
        name = e.name.encode("utf-8")
        q = e.quantized
        header += _U16.pack(len(name)) + name
        header += _U8.pack(KINDS.index(e.kind)) + _U8.pack(len(q.shape))
        header += b"".join(_U32.pack(d) for d in q.shape)
        if e.mask is None:
            offset = DENSE
        else:
            offset = len(masks)
            masks += np.packbits(e.mask.reshape(-1)).tobytes()
        header += _ENTRY_TAIL.pack(
            offset, q.codes.size, float(q.scale), float(q.minimum), q.zero_point
        )

    symbols = stream.symbols()
    table = HuffmanTable.from_symbols(symbols)
    payload = table.encode(symbols)

    out = bytearray(_PREAMBLE.pack(MAGIC, VERSION, len(header)))
    out += header
    out += _U32.pack(len(masks)) + masks
    out += table.to_bytes()
    out += _U32.pack(len(payload)) + payload
    out += _U32.pack(zlib.crc32(bytes(out)) & 0xFFFFFFFF)
    return bytes(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedStreamError(
                f"Stream ends inside {what} (need {n} bytes at offset {self.pos}, "
                f"have {len(self.data) - self.pos})"
            )
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: struct.Struct, what: str):
        return fmt.unpack(self.take(fmt.size, what))


def parse(data: bytes) -> Bitstream:
    reader = _Reader(data)
    if len(data) >= 4 and data[:4] != MAGIC:
        raise BadMagicError(f"Bad magic {data[:4]!r}, expected {MAGIC!r}")
    _, version, header_length = reader.unpack(_PREAMBLE, "preamble")
    if version != VERSION:
        raise UnsupportedVersionError(f"Unsupported bitstream version {version}")
    header = _Reader(reader.take(header_length, "header"))

    (meta_length,) = header.unpack(_U32, "header metadata length")
    try:
        meta = json.loads(header.take(meta_length, "header metadata").decode("utf-8"))
        model_config = config_lib.from_dict(ModelConfig, meta["model"], "model")
        frame_count = int(meta["frames"])
        frame_size = FrameSize(int(meta["height"]), int(meta["width"]))
        model_config.validate()
    except (ValueError, KeyError, TypeError) as e:
        if isinstance(e, TruncatedStreamError):
            raise
        raise BitstreamError(f"Invalid header metadata: {e}") from e

    (count,) = header.unpack(_U16, "entry count")
    directory = []
    for _ in range(count):
        (name_length,) = header.unpack(_U16, "entry name length")
        name = header.take(name_length, "entry name").decode("utf-8", errors="replace")
        kind, ndim = header.unpack(struct.Struct("<BB"), f"entry {name}")
        if kind >= len(KINDS):
            raise BitstreamError(f"Entry {name}: unknown kind {kind}")
        shape = tuple(header.unpack(struct.Struct(f"<{ndim}I"), f"entry {name} shape"))
        offset, symbols, scale, minimum, zero_point = header.unpack(
            _ENTRY_TAIL, f"entry {name}"
        )
        directory.append(
            (name, KINDS[kind], shape, offset, symbols, scale, minimum, zero_point)
        )
    if header.pos != header_length:
        raise BitstreamError(f"{header_length - header.pos} unexpected bytes in header")

    (mask_length,) = reader.unpack(_U32, "mask length")
    mask_bytes = reader.take(mask_length, "mask section")
    table_bytes = reader.take(ALPHABET, "Huffman table")
    (payload_length,) = reader.unpack(_U32, "payload length")
    payload = reader.take(payload_length, "payload")
    checksum_at = reader.pos
    (checksum,) = reader.unpack(_U32, "checksum")
    if reader.pos != len(data):
        raise BitstreamError(f"{len(data) - reader.pos} trailing bytes after checksum")
    if zlib.crc32(data[:checksum_at]) & 0xFFFFFFFF != checksum:
        raise ChecksumError("Checksum mismatch, the stream is corrupt")

    try:
        table = HuffmanTable.from_bytes(table_bytes)
        symbols = table.decode(payload, sum(d[4] for d in directory))
    except HuffmanDecodeError as e:
        raise BitstreamError(f"Corrupt payload: {e}") from e
    except ValueError as e:
        raise BitstreamError(f"Corrupt Huffman table: {e}") from e

    entries = []
    position = 0
    for name, kind, shape, offset, n_symbols, scale, minimum, zero_point in directory:
        mask = None
        if offset != DENSE:
            size = int(np.prod(shape))
            n_bytes = (size + 7) // 8
            if offset + n_bytes > len(mask_bytes):
                raise BitstreamError(f"Entry {name}: mask outside the mask section")
            bits = np.unpackbits(np.frombuffer(mask_bytes, np.uint8, n_bytes, offset))
            mask = bits[:size].astype(bool).reshape(shape)
            if int(mask.sum()) != n_symbols:
                raise BitstreamError(
                    f"Entry {name}: mask keeps {mask.sum()} of {n_symbols}"
                )
        elif n_symbols != int(np.prod(shape)):
            raise BitstreamError(f"Entry {name}: {n_symbols} symbols for shape {shape}")
        codes = symbols[position : position + n_symbols]
        position += n_symbols
        q = QuantizedTensor(
            shape, np.float32(scale), np.float32(minimum), zero_point, codes
        )
        entries.append(TensorEntry(name, kind, q, mask))
    return Bitstream(model_config, frame_count, frame_size, entries)


def section_sizes(data: bytes) -> Dict[str, int]:
    """Byte count of each container section of a serialized stream."""
    reader = _Reader(data)
    _, _, header_length = reader.unpack(_PREAMBLE, "preamble")
    reader.take(header_length, "header")
    (mask_length,) = reader.unpack(_U32, "mask length")
    reader.take(mask_length, "mask section")
    reader.take(ALPHABET, "Huffman table")
    (payload_length,) = reader.unpack(_U32, "payload length")
    return {
        "header": _PREAMBLE.size + header_length,
        "masks": _U32.size + mask_length,
        "table": ALPHABET,
        "payload": _U32.size + payload_length,
        "checksum": _U32.size,
    }


class DecodableVideo:
    """Dequantized decoder plus embeddings; everything needed to emit frames."""

    def __init__(self, stream: Bitstream):
        self.config = stream.config
        self.frame_size = stream.frame_size
        self.decoder = Decoder(stream.config, np.random.default_rng(0))
        weights = {
            e.name: dequantize(e.quantized, e.mask)
            for e in stream.entries
            if e.kind == "weight"
        }
        try:
            self.decoder.load_state_dict(weights)
            e_h = None
            if self.config.hf_branch_enabled:
                e_h = dequantize(stream.entry("embedding.e_h").quantized)
            self.embeddings = EmbeddingSet(
                dequantize(stream.entry("embedding.e_c").quantized), e_h
            )
            self.embeddings.validate(self.config, self.frame_size)
        except (KeyError, ValueError) as e:
            raise BitstreamError(
                f"Stream does not describe a decodable model: {e}"
            ) from e
        if self.embeddings.frame_count != stream.frame_count:
            raise BitstreamError(
                f"Header says {stream.frame_count} frames, embeddings hold "
                f"{self.embeddings.frame_count}"
            )

    @property
    def frame_count(self) -> int:
        return self.embeddings.frame_count

    def decode_frame(self, t: int) -> np.ndarray:
        return decode_frame(self.decoder, self.embeddings, t).data.astype(np.float32)

    def decode_all(self) -> VideoSequence:
        return VideoSequence(
            np.stack([self.decode_frame(t) for t in range(self.frame_count)])
        )
