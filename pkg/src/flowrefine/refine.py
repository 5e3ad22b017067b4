"""Post-hoc refiners for a trained base generator.

Two refiners act on the generator itself: the data-space refiner (dfr)
learns a flow from augmented generated samples back to data, the
latent-space refiner (lfr) learns a flow from the prior to noise-mixed
inverted-data latents and feeds its output through the generator. Two
baselines need no coupling to the generator's bias structure: noise
injection perturbs generated samples with fixed Gaussian noise before
flowing to data, and the clean-sample refiner (fmrefiner) is trained on
data alone to undo synthetic Gaussian corruption.

All refiners operate in the standardized space of the generator (or
dataset, for fmrefiner) they were trained with; the stats travel inside
the refiner checkpoint. Latent-space refinement refuses to run against a
generator with a different fingerprint unless transfer is explicit.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import container, net
from .datasets import AugSpec, LatentBatch, SampleBatch
from .errors import BadSectionError, ConfigError, HashMismatchError
from .generator import DEFAULT_INVERT_SOLVER, Generator, TrainConfig
from .interpolant import (
    MixSpec,
    dfr_pair,
    fmrefiner_pair,
    lfr_mix,
    lfr_pair,
    noise_inject_pair,
)
from .metrics import MetricsReport, MetricSpec, evaluate_samples, latent_gaussianity
from .ode import SolverSpec, integrate

REFINER_KINDS = ("dfr", "lfr", "noise_inject", "fmrefiner")

DEFAULT_REFINE_SOLVER = SolverSpec("euler", 10)
DEFAULT_LFR_SOLVER = SolverSpec("euler", 1)

_KIND_CODE = {k: i for i, k in enumerate(REFINER_KINDS)}
_KIND_NAME = {i: k for k, i in _KIND_CODE.items()}
_MIX_CODE = {"uniform": 0, "fixed": 1}
_MIX_NAME = {v: k for k, v in _MIX_CODE.items()}
_SOLVER_CODE = {"euler": 0, "heun": 1, "rk4": 2}
_SOLVER_NAME = {v: k for k, v in _SOLVER_CODE.items()}

# isolated rng streams so cache hits and inference noise cannot shift training draws
_STREAM_SUBSET = 0x5EED5
_STREAM_ALIGN = 0xA115
_STREAM_NOISE = 0x4015E

# fmrefiner velocity conversion keeps the denominator at least this large
_T_CLAMP = 1e-3


@dataclass
class Refiner:
    kind: str
    params: net.VectorFieldParams
    mean: np.ndarray
    scale: np.ndarray
    solver: SolverSpec
    generator_hash: str | None = None
    aug: AugSpec | None = None
    mix: MixSpec | None = None
    sigma_d: float = 0.0
    sigma_f: float = 0.0
    sigma_z: float = 0.0

    def __post_init__(self):
        if self.kind not in REFINER_KINDS:
            raise ConfigError(f"unknown refiner kind {self.kind!r}")

    @property
    def data_dim(self) -> int:
        return self.params.data_dim

    def standardize(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.scale

    def destandardize(self, u: np.ndarray) -> np.ndarray:
        return np.asarray(u, dtype=np.float64) * self.scale + self.mean

    def field(self):
        params = self.params
        if self.kind != "fmrefiner":

            def f(u: np.ndarray, t: float) -> np.ndarray:
                return net.forward(params, u, t)

            return f

        def f(u: np.ndarray, t: float) -> np.ndarray:
            # the network predicts the clean sample; convert to a velocity
            denom = max(1.0 - t, _T_CLAMP)
            return (net.forward(params, u, t) - u) / denom

        return f

    def pack(self) -> bytes:
        d = self.data_dim
        aug = self.aug or AugSpec(noise_std=0.0)
        mix = self.mix or MixSpec(alpha_max=0.0, mode="uniform")
        hash_bytes = (self.generator_hash or "").encode("ascii").ljust(64, b"\0")
        side = b"".join(
            [
                container.pack_u32(_KIND_CODE[self.kind]),
                container.pack_u32(d),
                container.pack_f64(np.array([self.sigma_d, self.sigma_f, self.sigma_z])),
                container.pack_f64(np.array([mix.alpha_max])),
                container.pack_u32(_MIX_CODE[mix.mode]),
                container.pack_f64(np.array([aug.noise_std])),
                container.pack_u32(aug.blur_width),
                container.pack_f64(np.array([aug.prob])),
                container.pack_u32(_SOLVER_CODE[self.solver.kind]),
                container.pack_u32(self.solver.steps),
                container.pack_u32(1 if self.generator_hash else 0),
                hash_bytes,
                container.pack_f64(self.mean),
                container.pack_f64(self.scale),
            ]
        )
        return (
            container.pack_header()
            + container.pack_layers(self.params.weights, self.params.biases)
            + container.pack_section(b"RFN1", side)
        )

    def save(self, path: str) -> None:
        with open(path, "wb") as fh:
            fh.write(self.pack())

    @classmethod
    def load(cls, path: str) -> "Refiner":
        reader = container.read_file(path)
        params = net.unpack_body(reader)
        side = container.read_section(reader, b"RFN1")
        kind = _KIND_NAME.get(side.u32())
        if kind is None:
            raise ConfigError("refiner checkpoint names an unknown kind")
        d = side.u32()
        if d != params.data_dim:
            raise ConfigError("refiner sidecar dimension disagrees with network")
        sigma_d, sigma_f, sigma_z = side.f64(3)
        alpha_max = float(side.f64(1)[0])
        mix_mode = _MIX_NAME.get(side.u32())
        aug_noise = float(side.f64(1)[0])
        blur_width = side.u32()
        aug_prob = float(side.f64(1)[0])
        solver_kind = _SOLVER_NAME.get(side.u32())
        solver_steps = side.u32()
        has_hash = side.u32()
        hash_raw = side.take(64).rstrip(b"\0").decode("ascii")
        mean = side.f64(d)
        scale = side.f64(d)
        if mix_mode is None or solver_kind is None:
            raise ConfigError("refiner sidecar names unknown codes")
        return cls(
            kind=kind,
            params=params,
            mean=mean,
            scale=scale,
            solver=SolverSpec(solver_kind, solver_steps),
            generator_hash=hash_raw if has_hash else None,
            aug=AugSpec(aug_noise, blur_width, aug_prob),
            mix=MixSpec(alpha_max, mix_mode),
            sigma_d=float(sigma_d),
            sigma_f=float(sigma_f),
            sigma_z=float(sigma_z),
        )


def save_latent_cache(path: str, z: np.ndarray, generator_hash: str) -> None:
    z = np.asarray(z, dtype=np.float64)
    payload = b"".join(
        [
            container.pack_u32(z.shape[0]),
            container.pack_u32(z.shape[1]),
            generator_hash.encode("ascii").ljust(64, b"\0"),
            container.pack_f64(z),
        ]
    )
    container.write_file(path, container.pack_section(b"LAT1", payload))


def load_latent_cache(path: str) -> tuple[np.ndarray, str]:
    reader = container.read_file(path)
    side = container.read_section(reader, b"LAT1")
    n = side.u32()
    d = side.u32()
    gen_hash = side.take(64).rstrip(b"\0").decode("ascii")
    z = side.f64(n * d).reshape(n, d)
    return z, gen_hash


def _sample_standardized(gen: Generator, n: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal((n, gen.data_dim))
    u1, _ = integrate(gen.field(), z, gen.solver)
    return u1


def _train_dataspace(
    gen: Generator,
    dataset: SampleBatch,
    cfg: TrainConfig,
    pair_fn,
    sample_pool: int,
) -> tuple[net.VectorFieldParams, net.TrainLog]:
    """Shared loop for dfr and noise_inject; pair_fn(data, gen, t, rng)."""
    if dataset.n < cfg.batch_size:
        raise ConfigError("dataset smaller than batch size")
    data = gen.standardize(dataset.x)
    rng = np.random.default_rng(cfg.seed)
    pool = None
    if sample_pool > 0:
        pool = _sample_standardized(gen, max(sample_pool, cfg.batch_size), rng)

    def batch_fn(_step: int):
        idx = rng.choice(data.shape[0], size=cfg.batch_size, replace=False)
        x_data = data[idx]
        if pool is None:
            x_gen = _sample_standardized(gen, cfg.batch_size, rng)
        else:
            pidx = rng.choice(pool.shape[0], size=cfg.batch_size, replace=False)
            x_gen = pool[pidx]
        t = rng.random(cfg.batch_size)
        x_t, target = pair_fn(x_data, x_gen, t, rng)
        return x_t, t, target

    params = net.init_params(gen.data_dim, cfg.hidden, cfg.freq_count, seed=cfg.seed)
    return net.fit_field(params, cfg.steps, batch_fn, lr=cfg.lr, eval_every=cfg.eval_every)


def train_dfr(
    gen: Generator,
    dataset: SampleBatch,
    aug: AugSpec,
    cfg: TrainConfig,
    sample_pool: int = 0,
) -> tuple[Refiner, net.TrainLog]:
    """Fit a data-space corrective flow from generated samples to data.

    sample_pool > 0 pregenerates that many base samples once and draws
    training batches from the pool; the default regenerates every step.
    """
    grid = dataset.grid_shape

    def pair_fn(x_data, x_gen, t, rng):
        return dfr_pair(x_data, x_gen, aug, t, rng, grid_shape=grid)

    params, log = _train_dataspace(gen, dataset, cfg, pair_fn, sample_pool)
    refiner = Refiner(
        kind="dfr",
        params=params,
        mean=gen.mean.copy(),
        scale=gen.scale.copy(),
        solver=DEFAULT_REFINE_SOLVER,
        generator_hash=gen.fingerprint(),
        aug=aug,
    )
    return refiner, log


def train_noise_inject(
    gen: Generator,
    dataset: SampleBatch,
    sigma_d: float,
    cfg: TrainConfig,
    sample_pool: int = 0,
) -> tuple[Refiner, net.TrainLog]:
    """Noise-injection baseline: perturb generated samples, flow to data."""

    def pair_fn(x_data, x_gen, t, rng):
        return noise_inject_pair(x_data, x_gen, sigma_d, t, rng)

    params, log = _train_dataspace(gen, dataset, cfg, pair_fn, sample_pool)
    refiner = Refiner(
        kind="noise_inject",
        params=params,
        mean=gen.mean.copy(),
        scale=gen.scale.copy(),
        solver=DEFAULT_REFINE_SOLVER,
        generator_hash=gen.fingerprint(),
        sigma_d=sigma_d,
    )
    return refiner, log


def train_fmrefiner(
    dataset: SampleBatch,
    sigma_f: float,
    sigma_z: float,
    cfg: TrainConfig,
) -> tuple[Refiner, net.TrainLog]:
    """Clean-sample-prediction baseline trained on data alone."""
    from .generator import standardization_stats

    if dataset.n < cfg.batch_size:
        raise ConfigError("dataset smaller than batch size")
    mean, scale = standardization_stats(dataset.x)
    data = (dataset.x - mean) / scale
    rng = np.random.default_rng(cfg.seed)

    def batch_fn(_step: int):
        idx = rng.choice(data.shape[0], size=cfg.batch_size, replace=False)
        t = rng.random(cfg.batch_size)
        x_t, target = fmrefiner_pair(data[idx], sigma_f, sigma_z, t, rng)
        return x_t, t, target

    params = net.init_params(data.shape[1], cfg.hidden, cfg.freq_count, seed=cfg.seed)
    params, log = net.fit_field(
        params, cfg.steps, batch_fn, lr=cfg.lr, eval_every=cfg.eval_every
    )
    refiner = Refiner(
        kind="fmrefiner",
        params=params,
        mean=mean,
        scale=scale,
        solver=DEFAULT_REFINE_SOLVER,
        sigma_f=sigma_f,
        sigma_z=sigma_z,
    )
    return refiner, log


def invert_for_cache(
    gen: Generator,
    dataset: SampleBatch,
    invert_n: int | None,
    solver: SolverSpec,
    seed: int,
) -> LatentBatch:
    """Latents of a deterministic dataset subset under the generator."""
    n = dataset.n if invert_n is None else min(invert_n, dataset.n)
    sub_rng = np.random.default_rng([seed, _STREAM_SUBSET])
    idx = sub_rng.choice(dataset.n, size=n, replace=False) if n < dataset.n else np.arange(n)
    subset = SampleBatch(dataset.x[idx], grid_shape=dataset.grid_shape)
    return gen.invert_batch(subset, solver)


def train_lfr(
    gen: Generator,
    dataset: SampleBatch,
    mix: MixSpec,
    cfg: TrainConfig,
    inversion_solver: SolverSpec = DEFAULT_INVERT_SOLVER,
    cache_path: str | None = None,
    invert_n: int | None = None,
) -> tuple[Refiner, net.TrainLog]:
    """Fit a latent-space corrective flow from the prior to data latents.

    Inverted latents are cached at cache_path when given; a cache written
    under a different generator fingerprint is recomputed, never reused.
    Diagnostics record latent Gaussianity, inversion round-trip error and
    the post-training alignment of one-step-refined prior draws.
    """
    gen_hash = gen.fingerprint()
    z1 = None
    recon = None
    if cache_path is not None and os.path.exists(cache_path):
        cached, cached_hash = load_latent_cache(cache_path)
        if cached_hash == gen_hash:
            z1 = cached
    if z1 is None:
        lat = invert_for_cache(gen, dataset, invert_n, inversion_solver, cfg.seed)
        z1 = lat.z
        recon = lat.recon_error
        if cache_path is not None:
            save_latent_cache(cache_path, z1, gen_hash)
    if z1.shape[0] < cfg.batch_size:
        raise ConfigError("latent cache smaller than batch size")

    gauss = latent_gaussianity(z1)
    rng = np.random.default_rng(cfg.seed)

    def batch_fn(_step: int):
        idx = rng.choice(z1.shape[0], size=cfg.batch_size, replace=False)
        z_prior = rng.standard_normal((cfg.batch_size, z1.shape[1]))
        z_noise = rng.standard_normal((cfg.batch_size, z1.shape[1]))
        z_mixed = lfr_mix(z1[idx], z_noise, mix, rng)
        t = rng.random(cfg.batch_size)
        z_t, target = lfr_pair(z_prior, z_mixed, t, cfg.path)
        return z_t, t, target

    params = net.init_params(z1.shape[1], cfg.hidden, cfg.freq_count, seed=cfg.seed)
    params, log = net.fit_field(
        params, cfg.steps, batch_fn, lr=cfg.lr, eval_every=cfg.eval_every
    )

    # alignment diagnostic: one-step-refined prior draws vs nearest cached latent
    align_rng = np.random.default_rng([cfg.seed, _STREAM_ALIGN])
    probe = align_rng.standard_normal((min(256, z1.shape[0]), z1.shape[1]))
    refined = probe + net.forward(params, probe, 0.0)
    from scipy.spatial.distance import cdist

    align = float(cdist(refined, z1).min(axis=1).mean())

    log.diagnostics.update(
        {
            "latent_max_abs_mean": gauss.max_abs_mean,
            "latent_max_var_dev": gauss.max_var_dev,
            "refine_align_error": align,
        }
    )
    if recon is not None:
        log.diagnostics["inversion_recon_error"] = recon

    refiner = Refiner(
        kind="lfr",
        params=params,
        mean=gen.mean.copy(),
        scale=gen.scale.copy(),
        solver=DEFAULT_LFR_SOLVER,
        generator_hash=gen_hash,
        mix=mix,
    )
    return refiner, log


def _integrate_refinement(
    refiner: Refiner, u0: np.ndarray, solver: SolverSpec | None
) -> tuple[np.ndarray, int]:
    spec = solver or refiner.solver
    if spec.direction != "forward":
        spec = spec.reversed()
    if refiner.kind == "fmrefiner" and spec.steps < 2:
        raise ConfigError(
            "clean-sample refinement needs >= 2 steps; the velocity "
            "conversion is clamped near t=1"
        )
    return integrate(refiner.field(), u0, spec)


def refine_dfr(
    refiner: Refiner, batch: SampleBatch, solver: SolverSpec | None = None
) -> SampleBatch:
    """Deterministically flow given samples toward the data distribution."""
    if refiner.kind != "dfr":
        raise ConfigError(f"expected a dfr refiner, got {refiner.kind}")
    u = refiner.standardize(batch.x)
    u1, nfe = _integrate_refinement(refiner, u, solver)
    return SampleBatch(
        refiner.destandardize(u1),
        grid_shape=batch.grid_shape,
        nfe=batch.nfe + nfe,
        nfe_base=batch.nfe_base,
        nfe_refine=batch.nfe_refine + nfe,
    )


def refine_noise_inject(
    refiner: Refiner,
    batch: SampleBatch,
    seed: int = 0,
    solver: SolverSpec | None = None,
) -> SampleBatch:
    """Perturb samples with the trained sigma_d, then flow toward data."""
    if refiner.kind != "noise_inject":
        raise ConfigError(f"expected a noise_inject refiner, got {refiner.kind}")
    u = refiner.standardize(batch.x)
    if refiner.sigma_d > 0:
        rng = np.random.default_rng([seed, _STREAM_NOISE])
        u = u + refiner.sigma_d * rng.standard_normal(u.shape)
    u1, nfe = _integrate_refinement(refiner, u, solver)
    return SampleBatch(
        refiner.destandardize(u1),
        grid_shape=batch.grid_shape,
        nfe=batch.nfe + nfe,
        nfe_base=batch.nfe_base,
        nfe_refine=batch.nfe_refine + nfe,
    )


def refine_fmrefiner(
    refiner: Refiner, batch: SampleBatch, solver: SolverSpec | None = None
) -> SampleBatch:
    """Flow samples along the converted clean-sample-prediction field."""
    if refiner.kind != "fmrefiner":
        raise ConfigError(f"expected a fmrefiner refiner, got {refiner.kind}")
    u = refiner.standardize(batch.x)
    u1, nfe = _integrate_refinement(refiner, u, solver)
    return SampleBatch(
        refiner.destandardize(u1),
        grid_shape=batch.grid_shape,
        nfe=batch.nfe + nfe,
        nfe_base=batch.nfe_base,
        nfe_refine=batch.nfe_refine + nfe,
    )


def refine_lfr(
    refiner: Refiner,
    gen: Generator,
    n: int,
    seed: int = 0,
    solver: SolverSpec | None = None,
    allow_transfer: bool = False,
) -> SampleBatch:
    """Draw prior latents, refine them, then generate.

    No noise is mixed at inference time. Total NFE is the refinement NFE
    plus the generator's own.
    """
    if refiner.kind != "lfr":
        raise ConfigError(f"expected an lfr refiner, got {refiner.kind}")
    if refiner.generator_hash != gen.fingerprint() and not allow_transfer:
        raise HashMismatchError(
            "latent refiner was trained against a different generator; "
            "pass allow_transfer to apply it anyway"
        )
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, gen.data_dim))
    z1, nfe = _integrate_refinement(refiner, z, solver)
    return gen.sample_from_latent(LatentBatch(z1, nfe=nfe))


def apply_refiner(
    refiner: Refiner,
    gen: Generator,
    n: int,
    seed: int = 0,
    base_solver: SolverSpec | None = None,
    refine_solver: SolverSpec | None = None,
    allow_transfer: bool = False,
) -> tuple[SampleBatch, SampleBatch]:
    """Base and refined batches under shared seeds, for paired comparison."""
    base = gen.sample(n, seed, base_solver)
    if refiner.kind == "dfr":
        refined = refine_dfr(refiner, base, refine_solver)
    elif refiner.kind == "noise_inject":
        refined = refine_noise_inject(refiner, base, seed, refine_solver)
    elif refiner.kind == "fmrefiner":
        refined = refine_fmrefiner(refiner, base, refine_solver)
    else:
        refined = refine_lfr(
            refiner, gen, n, seed, refine_solver, allow_transfer=allow_transfer
        )
    return base, refined


def transfer_eval(
    refiner: Refiner,
    gen_other: Generator,
    reference: np.ndarray,
    mspec: MetricSpec,
    seed: int = 0,
    nfe_list: tuple[int, ...] = (1, 10),
    expected_kind: str | None = None,
    dataset: str = "",
) -> MetricsReport:
    """Apply a refiner across generators; rows for base and each NFE.

    Applying a refiner to its own generator reproduces the non-transfer
    numbers exactly under the same seeds.
    """
    if expected_kind is not None and refiner.kind != expected_kind:
        raise ConfigError(
            f"expected a {expected_kind} refiner checkpoint, got {refiner.kind}"
        )
    gen_hash = gen_other.fingerprint()[:12]
    report = MetricsReport()
    base = gen_other.sample(mspec.eval_n, seed)
    for row in evaluate_samples(
        reference,
        base.x,
        mspec,
        nfe=base.nfe,
        seed=seed,
        dataset=dataset,
        generator=gen_hash,
        refiner="base",
    ):
        report.add(row)
    for steps in nfe_list:
        solver = SolverSpec("euler", steps)
        if refiner.kind == "fmrefiner" and steps < 2:
            continue
        _, refined = apply_refiner(
            refiner,
            gen_other,
            mspec.eval_n,
            seed,
            refine_solver=solver,
            allow_transfer=True,
        )
        for row in evaluate_samples(
            reference,
            refined.x,
            mspec,
            nfe=refined.nfe,
            seed=seed,
            dataset=dataset,
            generator=gen_hash,
            refiner=f"{refiner.kind}@{steps}",
        ):
            report.add(row)
    return report
