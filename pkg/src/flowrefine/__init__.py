"""Flow-matching generators with post-hoc bias refinement.

Train a small velocity-field network on synthetic 2-D data, then correct
its sampling bias after the fact: either in data space (a second field
that flows generated samples toward the data) or in latent space (a field
that nudges prior draws toward the latents of inverted data before the
frozen generator runs). Includes noise-injection and blur-and-denoise
baselines, exact and sliced transport metrics, and a CLI for the full
train / refine / evaluate / ablate / transfer loop.
"""

from .config import ExperimentConfig, load_config, seed_for
from .datasets import AugSpec, DatasetSpec, LatentBatch, SampleBatch, make_dataset
from .errors import (
    BadMagicError,
    BadSectionError,
    ConfigError,
    DimensionOverflowError,
    FlowRefineError,
    FormatError,
    HashMismatchError,
    MissingArtifactError,
    NumericalError,
    TruncatedPayloadError,
    UnsupportedError,
    VersionMismatchError,
)
from .generator import Generator, TrainConfig, train_base
from .interpolant import MixSpec, PathSpec, straight_line
from .metrics import MetricSpec, MetricsReport, evaluate_samples
from .ode import SolverSpec, integrate, invert
from .refine import (
    Refiner,
    apply_refiner,
    train_dfr,
    train_fmrefiner,
    train_lfr,
    train_noise_inject,
    transfer_eval,
)

__version__ = "0.1.0"

__all__ = [
    "AugSpec",
    "BadMagicError",
    "BadSectionError",
    "ConfigError",
    "DatasetSpec",
    "DimensionOverflowError",
    "ExperimentConfig",
    "FlowRefineError",
    "FormatError",
    "Generator",
    "HashMismatchError",
    "LatentBatch",
    "MetricSpec",
    "MetricsReport",
    "MissingArtifactError",
    "MixSpec",
    "NumericalError",
    "PathSpec",
    "Refiner",
    "SampleBatch",
    "SolverSpec",
    "TrainConfig",
    "TruncatedPayloadError",
    "UnsupportedError",
    "VersionMismatchError",
    "apply_refiner",
    "evaluate_samples",
    "integrate",
    "invert",
    "load_config",
    "make_dataset",
    "seed_for",
    "straight_line",
    "train_base",
    "train_dfr",
    "train_fmrefiner",
    "train_lfr",
    "train_noise_inject",
    "transfer_eval",
]
