"""Synthetic 2-D distributions, grid images, augmentation, IDX loading.

All sampling is driven by explicit numpy Generators, so a spec plus a
seed pins the dataset bit-for-bit. Values for grid data live in [-1, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter

from .errors import (
    BadMagicError,
    ConfigError,
    DimensionOverflowError,
    TruncatedPayloadError,
)

DATASET_NAMES = (
    "eight_gaussians",
    "two_moons",
    "checkerboard",
    "point_mass",
    "grid_images",
)

IDX_IMAGE_MAGIC = 0x00000803
# desk-scale ceiling on total elements declared by an IDX header
_IDX_MAX_ELEMENTS = 1 << 28


@dataclass(frozen=True)
class DatasetSpec:
    """Which distribution to draw and with what parameters.

    mode_std doubles as the density width for point_mass energies; samples
    of point_mass are exact copies of the center regardless.
    """

    name: str
    n: int = 10000
    seed: int = 0
    radius: float = 4.0
    mode_std: float = 0.2
    center: tuple[float, ...] = (0.0, 0.0)
    noise: float = 0.1
    grid: tuple[int, int] = (8, 8)

    def __post_init__(self):
        if self.name not in DATASET_NAMES:
            raise ConfigError(f"unknown dataset {self.name!r}")
        if self.n < 1:
            raise ConfigError(f"dataset size must be >= 1, got {self.n}")
        if self.mode_std < 0 or self.noise < 0 or self.radius < 0:
            raise ConfigError("dataset scale parameters must be >= 0")


@dataclass
class SampleBatch:
    """Rows are samples. grid_shape marks image data; nfe tracks cost."""

    x: np.ndarray
    grid_shape: tuple[int, int] | None = None
    nfe: int = 0
    nfe_base: int = 0
    nfe_refine: int = 0

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        if self.x.ndim != 2:
            raise ConfigError(f"sample batch must be (n, d), got {self.x.shape}")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]


@dataclass
class LatentBatch:
    z: np.ndarray
    nfe: int = 0
    recon_error: float | None = None

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=np.float64)
        if self.z.ndim != 2:
            raise ConfigError(f"latent batch must be (n, d), got {self.z.shape}")


def mode_centers(spec: DatasetSpec) -> np.ndarray:
    """Centers of the Gaussian mixture behind this dataset, if any."""
    if spec.name == "eight_gaussians":
        angles = 2.0 * np.pi * np.arange(8) / 8.0
        return spec.radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    if spec.name == "point_mass":
        return np.asarray(spec.center, dtype=np.float64)[None, :]
    raise ConfigError(f"{spec.name} has no mode centers")


def min_mode_distance(spec: DatasetSpec) -> float:
    centers = mode_centers(spec)
    if len(centers) < 2:
        raise ConfigError(f"{spec.name} has a single mode, no inter-mode distance")
    diff = centers[:, None, :] - centers[None, :, :]
    dist = np.sqrt((diff**2).sum(-1))
    return float(dist[dist > 0].min())


def _eight_gaussians(spec: DatasetSpec, rng: np.random.Generator) -> np.ndarray:
    centers = mode_centers(spec)
    idx = rng.integers(0, 8, size=spec.n)
    return centers[idx] + spec.mode_std * rng.standard_normal((spec.n, 2))


def _two_moons(spec: DatasetSpec, rng: np.random.Generator) -> np.ndarray:
    half = spec.n // 2
    theta_top = np.pi * rng.random(half)
    theta_bot = np.pi * rng.random(spec.n - half)
    top = np.stack([np.cos(theta_top), np.sin(theta_top)], axis=1)
    bot = np.stack([1.0 - np.cos(theta_bot), 0.5 - np.sin(theta_bot)], axis=1)
    pts = np.concatenate([top, bot], axis=0)
    pts += spec.noise * rng.standard_normal(pts.shape)
    return pts[rng.permutation(spec.n)]

def _checkerboard(spec: DatasetSpec, rng: np.random.Generator) -> np.ndarray:
    out = np.empty((spec.n, 2))
    have = 0
    while have < spec.n:
        cand = rng.uniform(-4.0, 4.0, size=(2 * (spec.n - have) + 64, 2))
        parity = (np.floor(cand[:, 0]) + np.floor(cand[:, 1])) % 2 == 0
        keep = cand[parity]
        take = min(len(keep), spec.n - have)
        out[have : have + take] = keep[:take]
        have += take
    return out


def _grid_images(spec: DatasetSpec, rng: np.random.Generator) -> np.ndarray:
    h, w = spec.grid
    if h < 1 or w < 1:
        raise ConfigError(f"grid shape must be positive, got {spec.grid}")
    rows = np.arange(h)[:, None]
    cols = np.arange(w)[None, :]
    out = np.empty((spec.n, h * w))
    for i in range(spec.n):
        cy = rng.uniform(0, h - 1)
        cx = rng.uniform(0, w - 1)
        width = rng.uniform(1.0, max(1.0, min(h, w) / 3.0))
        bump = np.exp(-((rows - cy) ** 2 + (cols - cx) ** 2) / (2.0 * width**2))
        out[i] = (2.0 * bump - 1.0).ravel()
    return out


def make_dataset(spec: DatasetSpec) -> SampleBatch:
    """Draw spec.n samples deterministically from spec.seed."""
    rng = np.random.default_rng(spec.seed)
    if spec.name == "eight_gaussians":
        return SampleBatch(_eight_gaussians(spec, rng))
    if spec.name == "two_moons":
        return SampleBatch(_two_moons(spec, rng))
    if spec.name == "checkerboard":
        return SampleBatch(_checkerboard(spec, rng))
    if spec.name == "point_mass":
        center = np.asarray(spec.center, dtype=np.float64)
        return SampleBatch(np.tile(center, (spec.n, 1)))
    if spec.name == "grid_images":
        return SampleBatch(_grid_images(spec, rng), grid_shape=tuple(spec.grid))
    raise ConfigError(f"unknown dataset {spec.name!r}")


@dataclass(frozen=True)
class AugSpec:
    """Per-sample corruption: additive noise and, on grids, a box blur."""

    noise_std: float = 0.05
    blur_width: int = 1
    prob: float = 1.0

    def __post_init__(self):
        if self.noise_std < 0:
            raise ConfigError(f"noise_std must be >= 0, got {self.noise_std}")
        if self.blur_width < 1 or self.blur_width % 2 == 0:
            raise ConfigError(f"blur_width must be odd and >= 1, got {self.blur_width}")
        if not 0.0 <= self.prob <= 1.0:
            raise ConfigError(f"prob must lie in [0, 1], got {self.prob}")

    @property
    def is_identity(self) -> bool:
        return self.noise_std == 0.0 and self.blur_width == 1


def identity_aug() -> AugSpec:
    return AugSpec(noise_std=0.0, blur_width=1, prob=1.0)


def data_aug(
    x: np.ndarray,
    aug: AugSpec,
    rng: np.random.Generator,
    grid_shape: tuple[int, int] | None = None,
    log: dict | None = None,
) -> np.ndarray:
    """Apply the augmentation per sample. Identity specs consume no rng.

    Selected samples get fresh N(0, noise_std^2) noise and, when a grid
    shape is known, a normalized box blur (reflect boundary, so constant
    images pass through unchanged). Blur on vector data is an error.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ConfigError(f"augmentation expects (n, d), got {x.shape}")
    if aug.is_identity:
        return x.copy()
    if aug.blur_width > 1 and grid_shape is None:
        raise ConfigError("box blur requested on non-grid data")
    mask = rng.random(x.shape[0]) < aug.prob
    out = x.copy()
    if log is not None:
        log["aug_mask"] = mask.copy()
    if aug.noise_std > 0 and mask.any():
        eps = rng.standard_normal((int(mask.sum()), x.shape[1]))
        if log is not None:
            log["aug_eps"] = eps.copy()
        out[mask] += aug.noise_std * eps
    if aug.blur_width > 1 and mask.any():
        h, w = grid_shape
        if h * w != x.shape[1]:
            raise ConfigError(
                f"grid shape {grid_shape} does not match vector length {x.shape[1]}"
            )
        imgs = out[mask].reshape(-1, h, w)
        blurred = np.stack(
            [uniform_filter(im, size=aug.blur_width, mode="reflect") for im in imgs]
        )
        out[mask] = blurred.reshape(-1, h * w)
    return out


def load_idx(path: str) -> SampleBatch:
    """Read a big-endian IDX image file into rows scaled to [-1, 1]."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except FileNotFoundError as exc:
        from .errors import MissingArtifactError

        raise MissingArtifactError(f"no such file: {path}") from exc
    if len(raw) < 16:
        raise TruncatedPayloadError(f"IDX header needs 16 bytes, file has {len(raw)}")
    magic, count, rows, cols = np.frombuffer(raw[:16], dtype=">u4")
    if int(magic) != IDX_IMAGE_MAGIC:
        raise BadMagicError(f"IDX magic {int(magic):#010x}, expected {IDX_IMAGE_MAGIC:#010x}")
    total = int(count) * int(rows) * int(cols)
    if total > _IDX_MAX_ELEMENTS or int(rows) < 1 or int(cols) < 1 or int(count) < 1:
        raise DimensionOverflowError(
            f"IDX declares {int(count)}x{int(rows)}x{int(cols)} elements"
        )
    body = raw[16:]
    if len(body) < total:
        raise TruncatedPayloadError(
            f"IDX payload has {len(body)} bytes, header declares {total}"
        )
    pix = np.frombuffer(body[:total], dtype=np.uint8).astype(np.float64)
    x = (pix / 255.0) * 2.0 - 1.0
    return SampleBatch(x.reshape(int(count), int(rows) * int(cols)),
                       grid_shape=(int(rows), int(cols)))


def write_idx(path: str, batch: SampleBatch) -> None:
    """Quantize [-1, 1] grid data to bytes and write the IDX layout."""
    if batch.grid_shape is None:
        raise ConfigError("IDX files hold grid data; batch has no grid shape")
    h, w = batch.grid_shape
    if h * w != batch.dim:
        raise ConfigError("grid shape does not match vector length")
    pix = np.clip(np.rint((batch.x + 1.0) * 127.5), 0, 255).astype(np.uint8)
    header = np.array([IDX_IMAGE_MAGIC, batch.n, h, w], dtype=">u4").tobytes()
    with open(path, "wb") as fh:
        fh.write(header + pix.tobytes())
