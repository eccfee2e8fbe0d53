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

"""Canonical Huffman coding of byte symbols.

A table is fully described by 256 code lengths (0 = symbol absent). Codes
are assigned in (length, symbol) order and packed MSB first.
"""
import heapq
from typing import Dict, List, Tuple
import numpy as np


ALPHABET = 256


class HuffmanDecodeError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at bit {offset}")
        self.offset = offset


def code_lengths(symbols: np.ndarray) -> np.ndarray:
    """Optimal code length per symbol; a lone symbol gets a 1-bit code."""
    counts = np.bincount(np.asarray(symbols, dtype=np.uint8), minlength=ALPHABET)
    present = np.flatnonzero(counts)
    if present.size == 0:
        raise ValueError("Cannot build a Huffman code for an empty stream")
    lengths = np.zeros(ALPHABET, dtype=np.int64)
    if present.size == 1:
        lengths[present[0]] = 1
        return lengths.astype(np.uint8)
    # (count, tie-breaker, members); ids keep merges deterministic
    heap: List[Tuple[int, int, List[int]]] = [
        (int(counts[s]), int(s), [int(s)]) for s in present
    ]
    heapq.heapify(heap)
    next_id = ALPHABET
    while len(heap) > 1:
        c1, _, a = heapq.heappop(heap)
        c2, _, b = heapq.heappop(heap)
        lengths[a + b] += 1
        heapq.heappush(heap, (c1 + c2, next_id, a + b))
        next_id += 1
    if lengths.max() > 255:
        raise ValueError(f"Code length {lengths.max()} does not fit a byte")
    return lengths.astype(np.uint8)


class HuffmanTable:
    def __init__(self, lengths):
        lengths = np.asarray(lengths, dtype=np.int64)
        if lengths.shape != (ALPHABET,):
            raise ValueError(f"Expected {ALPHABET} code lengths, got {lengths.shape}")
        used = lengths[lengths > 0]
        if used.size == 0:
            raise ValueError("Huffman table has no symbols")
        if np.sum(np.ldexp(1.0, -used)) > 1.0:
            raise ValueError("Code lengths violate the Kraft inequality")
        self.lengths = lengths.astype(np.uint8)
        order = sorted(np.flatnonzero(lengths), key=lambda s: (lengths[s], s))
        self.codes = np.zeros(ALPHABET, dtype=np.int64)
        code, previous = 0, int(lengths[order[0]])
        # per-length decode tables
        self._first: Dict[int, int] = {}
        self._index: Dict[int, int] = {}
        self._count: Dict[int, int] = {}
        self._sorted = [int(s) for s in order]
        for i, s in enumerate(order):
            length = int(lengths[s])
            code <<= length - previous
            previous = length
            self.codes[s] = code
            if length not in self._first:
                self._first[length] = code
                self._index[length] = i
                self._count[length] = 0
            self._count[length] += 1
            code += 1
        self.max_length = int(used.max())

    @classmethod
    def from_symbols(cls, symbols: np.ndarray) -> "HuffmanTable":
        return cls(code_lengths(symbols))

    def to_bytes(self) -> bytes:
        return self.lengths.tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "HuffmanTable":
        return cls(np.frombuffer(data, dtype=np.uint8))

    def bit_count(self, symbols: np.ndarray) -> int:
        picked = self.lengths[np.asarray(symbols, dtype=np.uint8)]
        return int(picked.astype(np.int64).sum())

    def encode(self, symbols: np.ndarray) -> bytes:
        """Packs the codes MSB first, zero-padded to a whole byte."""
        symbols = np.asarray(symbols, dtype=np.uint8).reshape(-1)
        if symbols.size and np.any(self.lengths[symbols] == 0):
            missing = sorted(set(symbols[self.lengths[symbols] == 0].tolist()))
            raise ValueError(f"Symbols {missing} have no code")
        lengths = self.lengths[symbols].astype(np.int64)
        codes = self.codes[symbols]
        ends = np.cumsum(lengths)
        starts = ends - lengths
        bits = np.zeros(int(ends[-1]) if symbols.size else 0, dtype=np.uint8)
        for j in range(self.max_length):
            live = lengths > j
            shift = lengths[live] - 1 - j
            bits[starts[live] + j] = (codes[live] >> shift) & 1
        return np.packbits(bits).tobytes()

    def decode(self, data: bytes, count: int) -> np.ndarray:
        """Reads exactly `count` symbols from the front of `data`."""
        bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8)).tolist()
        out = np.empty(count, dtype=np.uint8)
        pos = 0
        for k in range(count):
            start = pos
            code = 0
            length = 0
            while True:
                if pos >= len(bits):
                    raise HuffmanDecodeError("Payload ends inside a code", start)
                code = (code << 1) | bits[pos]
                pos += 1
                length += 1
                first = self._first.get(length)
                if first is not None and 0 <= code - first < self._count[length]:
                    out[k] = self._sorted[self._index[length] + code - first]
                    break
                if length >= self.max_length:
                    raise HuffmanDecodeError("Invalid code", start)
        return out


def huffman(symbols: np.ndarray) -> Tuple[HuffmanTable, bytes]:
    table = HuffmanTable.from_symbols(symbols)
    return table, table.encode(symbols)


def huffman_decode(table: HuffmanTable, bits: bytes, n: int) -> np.ndarray:
    return table.decode(bits, n)


def entropy(symbols: np.ndarray) -> float:
    """Empirical entropy in bits per symbol."""
    counts = np.bincount(np.asarray(symbols, dtype=np.uint8), minlength=ALPHABET)
    p = counts[counts > 0] / counts.sum()
    return float(-np.sum(p * np.log2(p)))


def mean_code_length(table: HuffmanTable, symbols: np.ndarray) -> float:
    symbols = np.asarray(symbols)
    return table.bit_count(symbols) / symbols.size
