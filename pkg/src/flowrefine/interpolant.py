"""Interpolation paths and training-pair builders.

A path carries coefficients a(t), b(t) with a(0)=1, b(0)=0, a(1)=0,
b(1)=1; the point on the path is x_t = a(t) x_src + b(t) x_dst and the
regression target is its time derivative. Every builder that draws noise
accepts an optional `log` dict and records its draws there, so tests can
replay the exact composition.

Time convention for refiners: t=0 is the side being corrected (generated
sample, noisy sample, or prior latent), t=1 is the target side.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .datasets import AugSpec, data_aug
from .errors import ConfigError


@dataclass(frozen=True)
class PathSpec:
    """Interpolation schedule with analytic derivatives."""

    a: Callable[[np.ndarray], np.ndarray]
    b: Callable[[np.ndarray], np.ndarray]
    da: Callable[[np.ndarray], np.ndarray]
    db: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"

    def validate(self, atol: float = 1e-12) -> None:
        for fn, at, want in (
            (self.a, 0.0, 1.0),
            (self.b, 0.0, 0.0),
            (self.a, 1.0, 0.0),
            (self.b, 1.0, 1.0),
        ):
            got = float(fn(np.asarray(at)))
            if abs(got - want) > atol:
                raise ConfigError(
                    f"path {self.name!r}: coefficient at t={at} is {got}, want {want}"
                )


def straight_line() -> PathSpec:
    return PathSpec(
        a=lambda t: 1.0 - t,
        b=lambda t: np.asarray(t, dtype=np.float64) + 0.0,
        da=lambda t: np.full_like(np.asarray(t, dtype=np.float64), -1.0),
        db=lambda t: np.ones_like(np.asarray(t, dtype=np.float64)),
        name="straight",
    )


def _t_column(t, n: int) -> np.ndarray:
    """Times as an (n, 1) column in [0, 1] for broadcasting against (n, d)."""
    t_arr = np.asarray(t, dtype=np.float64)
    if t_arr.ndim == 0:
        t_arr = np.full(n, float(t_arr))
    if t_arr.shape != (n,):
        raise ConfigError(f"time shape {t_arr.shape} does not match batch size {n}")
    if np.any(t_arr < 0.0) or np.any(t_arr > 1.0):
        raise ConfigError("interpolation times must lie in [0, 1]")
    return t_arr[:, None]


def _check_pair(x_src: np.ndarray, x_dst: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x_src = np.asarray(x_src, dtype=np.float64)
    x_dst = np.asarray(x_dst, dtype=np.float64)
    if x_src.ndim != 2 or x_src.shape != x_dst.shape:
        raise ConfigError(
            f"endpoint batches must share an (n, d) shape, "
            f"got {x_src.shape} and {x_dst.shape}"
        )
    return x_src, x_dst


def interpolate(
    x_src: np.ndarray,
    x_dst: np.ndarray,
    t,
    path: PathSpec | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Point on the path and its velocity: (x_t, a' x_src + b' x_dst)."""
    x_src, x_dst = _check_pair(x_src, x_dst)
    tc = _t_column(t, x_src.shape[0])
    if path is None:
        path = straight_line()
    x_t = path.a(tc) * x_src + path.b(tc) * x_dst
    vel = path.da(tc) * x_src + path.db(tc) * x_dst
    return x_t, vel


def dfr_pair(
    x_data: np.ndarray,
    x_gen: np.ndarray,
    aug: AugSpec,
    t,
    rng: np.random.Generator,
    grid_shape: tuple[int, int] | None = None,
    log: dict | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Data-space refinement pair: augmented generated sample toward data.

    x_t = (1 - t) * aug(x_gen) + t * x_data, target = x_data - aug(x_gen).
    """
    x_data, x_gen = _check_pair(x_data, x_gen)
    x_tilde = data_aug(x_gen, aug, rng, grid_shape=grid_shape, log=log)
    tc = _t_column(t, x_data.shape[0])
    x_t = (1.0 - tc) * x_tilde + tc * x_data
    return x_t, x_data - x_tilde


@dataclass(frozen=True)
class RefinerNoiseSpec:
    """Noise scales for the two baseline refiners, in standardized units."""

    sigma_d: float = 0.1
    sigma_f: float = 0.05
    sigma_z: float = 0.1

    def __post_init__(self):
        if self.sigma_d < 0 or self.sigma_f < 0 or self.sigma_z < 0:
            raise ConfigError("noise scales must be >= 0")


@dataclass(frozen=True)
class MixSpec:
    """Latent noise mixing. Variance-preserving for unit-variance inputs."""

    alpha_max: float = 0.2
    mode: str = "uniform"  # "uniform": per-element a ~ U(0, alpha_max)

    def __post_init__(self):
        if not 0.0 <= self.alpha_max <= 1.0:
            raise ConfigError(f"alpha_max must lie in [0, 1], got {self.alpha_max}")
        if self.mode not in ("uniform", "fixed"):
            raise ConfigError(f"unknown mix mode {self.mode!r}")


def lfr_mix(
    z_target: np.ndarray,
    z_noise: np.ndarray,
    mix: MixSpec,
    rng: np.random.Generator | None = None,
    log: dict | None = None,
) -> np.ndarray:
    """sqrt(1 - a^2) * z_target + a * z_noise with a per MixSpec."""
    z_target, z_noise = _check_pair(z_target, z_noise)
    if mix.mode == "fixed":
        a = np.float64(mix.alpha_max)
    else:
        if rng is None:
            raise ConfigError("uniform mixing needs an rng")
        a = mix.alpha_max * rng.random(size=z_target.shape)
    if log is not None:
        log["mix_a"] = np.array(a, copy=True)
    return np.sqrt(1.0 - a * a) * z_target + a * z_noise


def lfr_pair(
    z_prior: np.ndarray,
    z_mixed: np.ndarray,
    t,
    path: PathSpec | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Latent refinement pair: prior draw (t=0) toward mixed latent (t=1)."""
    return interpolate(z_prior, z_mixed, t, path)


def noise_inject_pair(
    x_data: np.ndarray,
    x_gen: np.ndarray,
    sigma_d: float,
    t,
    rng: np.random.Generator,
    log: dict | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Noise-injection pair: perturbed generated sample toward data.

    x1' = x_gen + sigma_d * eps, x_t = (1 - t) x1' + t x_data,
    target = x_data - x1'. sigma_d = 0 draws nothing and reduces to the
    augmentation-free data-space pair.
    """
    if sigma_d < 0:
        raise ConfigError(f"sigma_d must be >= 0, got {sigma_d}")
    x_data, x_gen = _check_pair(x_data, x_gen)
    if sigma_d > 0:
        eps = rng.standard_normal(x_gen.shape)
        if log is not None:
            log["inject_eps"] = eps.copy()
        x1p = x_gen + sigma_d * eps
    else:
        x1p = x_gen
    tc = _t_column(t, x_data.shape[0])
    x_t = (1.0 - tc) * x1p + tc * x_data
    return x_t, x_data - x1p


def fmrefiner_pair(
    x_data: np.ndarray,
    sigma_f: float,
    sigma_z: float,
    t,
    rng: np.random.Generator,
    log: dict | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Clean-sample-prediction pair built from data alone.

    x1 = x_data + sigma_f * eps, x_t = t x_data + (1 - t) x1
    + sigma_z * t (1 - t) * z, and the regression target is x_data
    itself (the network predicts the clean sample, not a velocity).
    """
    if sigma_f < 0 or sigma_z < 0:
        raise ConfigError("sigma_f and sigma_z must be >= 0")
    x_data = np.asarray(x_data, dtype=np.float64)
    if x_data.ndim != 2:
        raise ConfigError(f"expected an (n, d) batch, got {x_data.shape}")
    tc = _t_column(t, x_data.shape[0])
    if sigma_f > 0:
        eps = rng.standard_normal(x_data.shape)
        if log is not None:
            log["blur_eps"] = eps.copy()
        x1 = x_data + sigma_f * eps
        x_t = tc * x_data + (1.0 - tc) * x1
    else:
        # identical endpoints: skip the combination so the collapse onto
        # the data is exact, not subject to round-off
        x1 = x_data
        x_t = x_data.copy()
    if sigma_z > 0:
        z = rng.standard_normal(x_data.shape)
        if log is not None:
            log["mid_z"] = z.copy()
        x_t = x_t + sigma_z * tc * (1.0 - tc) * z
    return x_t, x_data
