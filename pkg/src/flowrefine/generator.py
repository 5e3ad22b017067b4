"""Flow-matching base generator on standardized data.

Training regresses straight-line interpolation velocities between prior
draws (t=0) and standardized data (t=1). Sampling integrates the learned
field forward and de-standardizes; inversion runs the mirrored grid
backward. The checkpoint is a network checkpoint plus a tagged sidecar
holding the data dimension, default solver and standardization stats.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import container, net
from .datasets import LatentBatch, SampleBatch
from .errors import ConfigError
from .interpolant import PathSpec, interpolate, straight_line
from .ode import SolverSpec, integrate, invert

DEFAULT_SAMPLE_SOLVER = SolverSpec("rk4", 25)
DEFAULT_INVERT_SOLVER = SolverSpec("rk4", 64, "backward")

_SOLVER_CODE = {"euler": 0, "heun": 1, "rk4": 2}
_SOLVER_NAME = {v: k for k, v in _SOLVER_CODE.items()}

# per-dimension scales below this are treated as degenerate and left at 1
_SCALE_FLOOR = 1e-12


@dataclass
class TrainConfig:
    steps: int = 5000
    batch_size: int = 256
    lr: float = 1e-3
    seed: int = 0
    eval_every: int = 500
    hidden: tuple[int, ...] = net.DEFAULT_HIDDEN
    freq_count: int = net.DEFAULT_FREQS
    path: PathSpec = field(default_factory=straight_line)

    def __post_init__(self):
        if self.steps < 1 or self.batch_size < 1:
            raise ConfigError("steps and batch_size must be >= 1")
        if self.lr <= 0:
            raise ConfigError(f"lr must be > 0, got {self.lr}")
        self.path.validate()


def standardization_stats(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-dimension mean and unbiased scale; degenerate dims get scale 1."""
    mean = x.mean(axis=0)
    if x.shape[0] > 1:
        scale = x.std(axis=0, ddof=1)
    else:
        scale = np.zeros(x.shape[1])
    scale = np.where(scale < _SCALE_FLOOR, 1.0, scale)
    return mean, scale


@dataclass
class Generator:
    params: net.VectorFieldParams
    mean: np.ndarray
    scale: np.ndarray
    solver: SolverSpec = DEFAULT_SAMPLE_SOLVER

    @property
    def data_dim(self) -> int:
        return self.params.data_dim

    def standardize(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.scale

    def destandardize(self, u: np.ndarray) -> np.ndarray:
        return np.asarray(u, dtype=np.float64) * self.scale + self.mean

    def field(self):
        params = self.params

        def f(u: np.ndarray, t: float) -> np.ndarray:
            return net.forward(params, u, t)

        return f

    def pack(self) -> bytes:
        sidecar = b"".join(
            [
                container.pack_u32(self.data_dim),
                container.pack_u32(_SOLVER_CODE[self.solver.kind]),
                container.pack_u32(self.solver.steps),
                container.pack_f64(self.mean),
                container.pack_f64(self.scale),
            ]
        )
        return (
            container.pack_header()
            + container.pack_layers(self.params.weights, self.params.biases)
            + container.pack_section(b"GEN1", sidecar)
        )

    def fingerprint(self) -> str:
        """Content hash identifying this generator for refiner provenance."""
        return hashlib.sha256(self.pack()).hexdigest()

    def save(self, path: str) -> None:
        with open(path, "wb") as fh:
            fh.write(self.pack())

    @classmethod
    def load(cls, path: str) -> "Generator":
        reader = container.read_file(path)
        params = net.unpack_body(reader)
        side = container.read_section(reader, b"GEN1")
        d = side.u32()
        if d != params.data_dim:
            raise ConfigError(
                f"sidecar dimension {d} disagrees with network output {params.data_dim}"
            )
        kind = _SOLVER_NAME.get(side.u32())
        steps = side.u32()
        if kind is None:
            raise ConfigError("sidecar names an unknown solver")
        mean = side.f64(d)
        scale = side.f64(d)
        return cls(params, mean, scale, SolverSpec(kind, steps))

    def sample(
        self, n: int, seed: int = 0, solver: SolverSpec | None = None
    ) -> SampleBatch:
        """Integrate fresh prior draws forward; output is in data units."""
        rng = np.random.default_rng(seed)
        z = rng.standard_normal((n, self.data_dim))
        return self.sample_from_latent(LatentBatch(z), solver)

    def sample_from_latent(
        self, latents: LatentBatch, solver: SolverSpec | None = None
    ) -> SampleBatch:
        spec = solver or self.solver
        if spec.direction != "forward":
            spec = spec.reversed()
        u1, nfe = integrate(self.field(), latents.z, spec)
        total = nfe + latents.nfe
        return SampleBatch(
            self.destandardize(u1), nfe=total, nfe_base=nfe, nfe_refine=latents.nfe
        )

    def invert_batch(
        self,
        batch: SampleBatch,
        solver: SolverSpec | None = None,
        compute_recon: bool = True,
    ) -> LatentBatch:
        """Latents for given data; optionally measures round-trip error.

        The reconstruction error is relative and batch-level:
        ||forward(invert(x)) - x||_F / ||x||_F in standardized units.
        """
        spec = solver or DEFAULT_INVERT_SOLVER
        u = self.standardize(batch.x)
        z, nfe = invert(self.field(), u, spec)
        recon = None
        if compute_recon:
            fwd = spec if spec.direction == "forward" else spec.reversed()
            u_back, nfe2 = integrate(self.field(), z, fwd)
            nfe += nfe2
            denom = float(np.linalg.norm(u))
            recon = float(np.linalg.norm(u_back - u) / max(denom, _SCALE_FLOOR))
        return LatentBatch(z, nfe=nfe, recon_error=recon)


def train_base(
    dataset: SampleBatch,
    cfg: TrainConfig,
    solver: SolverSpec = DEFAULT_SAMPLE_SOLVER,
) -> tuple[Generator, net.TrainLog]:
    """Fit the base flow on standardized data; returns model and loss log."""
    if dataset.n < cfg.batch_size:
        raise ConfigError(
            f"dataset of {dataset.n} cannot fill batches of {cfg.batch_size}"
        )
    mean, scale = standardization_stats(dataset.x)
    data = (dataset.x - mean) / scale
    d = data.shape[1]
    params = net.init_params(d, cfg.hidden, cfg.freq_count, seed=cfg.seed)
    rng = np.random.default_rng(cfg.seed)

    def batch_fn(_step: int):
        idx = rng.choice(data.shape[0], size=cfg.batch_size, replace=False)
        x1 = data[idx]
        x0 = rng.standard_normal(x1.shape)
        t = rng.random(cfg.batch_size)
        x_t, vel = interpolate(x0, x1, t, cfg.path)
        return x_t, t, vel

    params, log = net.fit_field(
        params, cfg.steps, batch_fn, lr=cfg.lr, eval_every=cfg.eval_every
    )
    return Generator(params, mean, scale, solver), log
