"""Binary container shared by checkpoints, latent caches and sample dumps.

Layout of every file:

    magic  b"BFR1"
    u32    container version (little-endian, currently 1)
    body   format-specific, see below

A network checkpoint body is a length-prefixed layer table (u32 layer
count, then u32 rows / u32 cols per layer with rows = fan-in and
cols = fan-out) followed by all weights and biases as little-endian
float64 in table order, weight matrix row-major first, then the bias of
length cols. Richer files append tagged sections after their fixed part:
a section is a 4-byte ASCII tag, a u32 payload length and the payload.
Readers tolerate trailing bytes after the part they consume, which is
what lets a generator checkpoint embed a plain network checkpoint.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import (
    BadMagicError,
    BadSectionError,
    TruncatedPayloadError,
    VersionMismatchError,
)

MAGIC = b"BFR1"
VERSION = 1

# sane desk-scale bound on any single declared array extent
MAX_EXTENT = 1 << 24


class Reader:
    """Cursor over bytes that raises on reads past the end."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedPayloadError(
                f"needed {n} bytes at offset {self.pos}, "
                f"file has {len(self.data)}"
            )
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def f64(self, count: int) -> np.ndarray:
        raw = self.take(8 * count)
        return np.frombuffer(raw, dtype="<f8").astype(np.float64)

    @property
    def exhausted(self) -> bool:
        return self.pos >= len(self.data)


def pack_u32(value: int) -> bytes:
    return struct.pack("<I", value)


def pack_f64(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr, dtype="<f8").tobytes()


def pack_header() -> bytes:
    return MAGIC + pack_u32(VERSION)


def read_header(reader: Reader) -> int:
    magic = reader.take(4)
    if magic != MAGIC:
        raise BadMagicError(f"expected {MAGIC!r}, found {magic!r}")
    version = reader.u32()
    if version != VERSION:
        raise VersionMismatchError(f"container version {version}, expected {VERSION}")
    return version


def pack_layers(weights: list[np.ndarray], biases: list[np.ndarray]) -> bytes:
    """Serialize the layer table and parameter payload of a network."""
    parts = [pack_u32(len(weights))]
    for w in weights:
        rows, cols = w.shape
        parts.append(pack_u32(rows))
        parts.append(pack_u32(cols))
    for w, b in zip(weights, biases):
        parts.append(pack_f64(w))
        parts.append(pack_f64(b))
    return b"".join(parts)


def read_layers(reader: Reader) -> tuple[list[np.ndarray], list[np.ndarray]]:
    count = reader.u32()
    if count > MAX_EXTENT:
        raise TruncatedPayloadError(f"implausible layer count {count}")
    shapes = []
    for _ in range(count):
        rows = reader.u32()
        cols = reader.u32()
        shapes.append((rows, cols))
    weights, biases = [], []
    for rows, cols in shapes:
        weights.append(reader.f64(rows * cols).reshape(rows, cols))
        biases.append(reader.f64(cols))
    return weights, biases


def pack_section(tag: bytes, payload: bytes) -> bytes:
    if len(tag) != 4:
        raise ValueError("section tags are exactly 4 bytes")
    return tag + pack_u32(len(payload)) + payload


def read_section(reader: Reader, expect: bytes) -> Reader:
    tag = reader.take(4)
    if tag != expect:
        raise BadSectionError(f"expected section {expect!r}, found {tag!r}")
    length = reader.u32()
    return Reader(reader.take(length))


def read_file(path: str) -> Reader:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except FileNotFoundError as exc:
        from .errors import MissingArtifactError

        raise MissingArtifactError(f"no such file: {path}") from exc
    reader = Reader(data)
    read_header(reader)
    return reader


def write_file(path: str, body: bytes) -> None:
    with open(path, "wb") as fh:
        fh.write(pack_header() + body)
