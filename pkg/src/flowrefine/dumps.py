"""Sample dumps: CSV with a dim0..dimN header, or the binary container.

CSV floats are written with repr, so a reload reproduces the in-memory
doubles exactly. The binary form stores a SMP1 section with the shape
and raw little-endian float64 rows.
"""

from __future__ import annotations

import csv

import numpy as np

from . import container
from .datasets import SampleBatch
from .errors import ConfigError, MissingArtifactError


def save_samples_csv(path: str, batch: SampleBatch) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"dim{i}" for i in range(batch.dim)])
        for row in batch.x:
            writer.writerow([repr(float(v)) for v in row])


def load_samples_csv(path: str) -> SampleBatch:
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or not all(h.startswith("dim") for h in header):
                raise ConfigError(f"{path} lacks a dim0..dimN header")
            rows = [[float(v) for v in row] for row in reader]
    except FileNotFoundError as exc:
        raise MissingArtifactError(f"no such file: {path}") from exc
    if not rows:
        raise ConfigError(f"{path} holds no samples")
    return SampleBatch(np.array(rows, dtype=np.float64))


def save_samples_bin(path: str, batch: SampleBatch) -> None:
    payload = b"".join(
        [
            container.pack_u32(batch.n),
            container.pack_u32(batch.dim),
            container.pack_f64(batch.x),
        ]
    )
    container.write_file(path, container.pack_section(b"SMP1", payload))


def load_samples_bin(path: str) -> SampleBatch:
    reader = container.read_file(path)
    side = container.read_section(reader, b"SMP1")
    n = side.u32()
    d = side.u32()
    return SampleBatch(side.f64(n * d).reshape(n, d))


def save_samples(path: str, batch: SampleBatch) -> None:
    if path.endswith(".csv"):
        save_samples_csv(path, batch)
    else:
        save_samples_bin(path, batch)


def load_samples(path: str) -> SampleBatch:
    if path.endswith(".csv"):
        return load_samples_csv(path)
    return load_samples_bin(path)
