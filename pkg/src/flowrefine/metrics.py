"""Two-sample metrics, mixture energies and report plumbing.

Distances throughout are plain Euclidean with no alignment step; every
report header restates this. Desk scale keeps the exact O(n^2) paths
affordable, so nothing here subsamples or approximates.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

from .datasets import DatasetSpec, mode_centers
from .errors import ConfigError, NumericalError, UnsupportedError

REPORT_COLUMNS = ("name", "value", "n", "seed", "nfe", "excluded")
PROVENANCE_COLUMNS = ("dataset", "generator", "refiner")
REPORT_NOTE = "# distances: plain euclidean, no rotational alignment"


@dataclass(frozen=True)
class MetricSpec:
    tau: float | None = None
    n_projections: int = 128
    e_max: float | None = None
    seed: int = 0
    eval_n: int = 2000

    def __post_init__(self):
        if self.n_projections < 1:
            raise ConfigError("need at least one projection")
        if self.tau is not None and self.tau <= 0:
            raise ConfigError(f"tau must be > 0, got {self.tau}")
        if self.eval_n < 1:
            raise ConfigError("eval_n must be >= 1")


def _as_batch(x: np.ndarray, who: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ConfigError(f"{who} must be a non-empty (n, d) array, got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise NumericalError(f"{who} contains non-finite values")
    return x


def wasserstein_1d(a: np.ndarray, b: np.ndarray) -> float:
    """Exact 2-Wasserstein distance between 1-D empirical distributions.

    Both quantile functions are piecewise constant; integrating their
    squared difference over the merged breakpoints is exact for any pair
    of sample sizes.
    """
    a = np.sort(np.asarray(a, dtype=np.float64))
    b = np.sort(np.asarray(b, dtype=np.float64))
    na, nb = len(a), len(b)
    cuts = np.union1d(np.arange(1, na) / na, np.arange(1, nb) / nb)
    edges = np.concatenate([[0.0], cuts, [1.0]])
    widths = np.diff(edges)
    mids = 0.5 * (edges[:-1] + edges[1:])
    ia = np.minimum((mids * na).astype(np.int64), na - 1)
    ib = np.minimum((mids * nb).astype(np.int64), nb - 1)
    return float(np.sqrt(np.sum(widths * (a[ia] - b[ib]) ** 2)))


def sliced_wasserstein_projected(
    a: np.ndarray, b: np.ndarray, projections: np.ndarray
) -> float:
    """Mean 1-D W2 over the given unit projection directions."""
    a = _as_batch(a, "first sample")
    b = _as_batch(b, "second sample")
    if a.shape[1] != b.shape[1]:
        raise ConfigError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    projections = np.atleast_2d(np.asarray(projections, dtype=np.float64))
    vals = [wasserstein_1d(a @ u, b @ u) for u in projections]
    return float(np.mean(vals))


def random_projections(d: int, count: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    raw = rng.standard_normal((count, d))
    norms = np.linalg.norm(raw, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return raw / norms


def sliced_wasserstein(a: np.ndarray, b: np.ndarray, spec: MetricSpec) -> float:
    """Seeded sliced 2-Wasserstein distance (mean over projections)."""
    a = _as_batch(a, "first sample")
    proj = random_projections(a.shape[1], spec.n_projections, spec.seed)
    return sliced_wasserstein_projected(a, b, proj)


def energy_distance(a: np.ndarray, b: np.ndarray) -> float:
    """2 E||a-b|| - E||a-a'|| - E||b-b'||, exact over all ordered pairs."""
    a = _as_batch(a, "first sample")
    b = _as_batch(b, "second sample")
    if a.shape[1] != b.shape[1]:
        raise ConfigError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    cross = float(cdist(a, b).mean())
    within_a = float(cdist(a, a).mean())
    within_b = float(cdist(b, b).mean())
    return 2.0 * cross - within_a - within_b


@dataclass(frozen=True)
class CoverageReport:
    cov_r: float
    cov_p: float
    amr_r: float
    amr_p: float


def coverage_and_amr(ref: np.ndarray, gen: np.ndarray, tau: float) -> CoverageReport:
    """Mode coverage and mean nearest-neighbour distances, both directions.

    cov_r: fraction of reference points with a generated point nearer
    than tau; amr_r: mean distance from reference points to their nearest
    generated point. The _p variants swap the roles.
    """
    if tau <= 0:
        raise ConfigError(f"tau must be > 0, got {tau}")
    ref = _as_batch(ref, "reference sample")
    gen = _as_batch(gen, "generated sample")
    if ref.shape[1] != gen.shape[1]:
        raise ConfigError(f"dimension mismatch: {ref.shape[1]} vs {gen.shape[1]}")
    dists = cdist(ref, gen)
    near_gen = dists.min(axis=1)
    near_ref = dists.min(axis=0)
    return CoverageReport(
        cov_r=float(np.mean(near_gen < tau)),
        cov_p=float(np.mean(near_ref < tau)),
        amr_r=float(near_gen.mean()),
        amr_p=float(near_ref.mean()),
    )


def energy_error(
    ref_energy: np.ndarray,
    gen_energy: np.ndarray,
    e_max: float | None = None,
) -> tuple[float, int]:
    """Signed percent error of mean energy after optional truncation.

    Both sets keep only entries strictly below e_max; the returned count
    is how many generated entries were dropped.
    """
    ref_energy = np.asarray(ref_energy, dtype=np.float64).ravel()
    gen_energy = np.asarray(gen_energy, dtype=np.float64).ravel()
    if ref_energy.size == 0 or gen_energy.size == 0:
        raise ConfigError("energy arrays must be non-empty")
    if e_max is not None:
        ref_keep = ref_energy[ref_energy < e_max]
        gen_keep = gen_energy[gen_energy < e_max]
    else:
        ref_keep, gen_keep = ref_energy, gen_energy
    excluded = int(gen_energy.size - gen_keep.size)
    if ref_keep.size == 0 or gen_keep.size == 0:
        raise NumericalError("energy truncation removed every sample")
    ref_mean = float(ref_keep.mean())
    if ref_mean == 0.0:
        raise NumericalError("reference mean energy is zero")
    value = 100.0 * (float(gen_keep.mean()) - ref_mean) / abs(ref_mean)
    return value, excluded


@dataclass(frozen=True)
class GaussianityReport:
    mean: np.ndarray
    var: np.ndarray
    max_abs_mean: float
    max_var_dev: float


def latent_gaussianity(z: np.ndarray) -> GaussianityReport:
    """Per-dimension mean and unbiased variance against N(0, I)."""
    z = _as_batch(z, "latent sample")
    if z.shape[0] < 2:
        raise ConfigError("variance needs at least two samples")
    mean = z.mean(axis=0)
    var = z.var(axis=0, ddof=1)
    return GaussianityReport(
        mean=mean,
        var=var,
        max_abs_mean=float(np.max(np.abs(mean))),
        max_var_dev=float(np.max(np.abs(var - 1.0))),
    )


def true_energy(spec: DatasetSpec, x: np.ndarray) -> np.ndarray:
    """-log density under the closed-form mixture behind the dataset.

    Defined for eight_gaussians and for point_mass with mode_std > 0;
    the other datasets have no closed form and raise UnsupportedError.
    """
    x = _as_batch(x, "energy input")
    if spec.name not in ("eight_gaussians", "point_mass"):
        raise UnsupportedError(f"{spec.name} has no closed-form density")
    if spec.mode_std <= 0:
        raise UnsupportedError("mode_std must be > 0 for a proper density")
    centers = mode_centers(spec)
    d = centers.shape[1]
    if x.shape[1] != d:
        raise ConfigError(f"points have dim {x.shape[1]}, mixture has {d}")
    var = spec.mode_std**2
    sq = cdist(x, centers, metric="sqeuclidean")
    log_comp = -0.5 * sq / var - 0.5 * d * np.log(2.0 * np.pi * var)
    log_p = logsumexp(log_comp, axis=1) - np.log(centers.shape[0])
    return -log_p


@dataclass
class MetricRow:
    name: str
    value: float
    n: int
    seed: int
    nfe: int
    excluded: int | None = None
    dataset: str = ""
    generator: str = ""
    refiner: str = ""


@dataclass
class MetricsReport:
    rows: list[MetricRow] = field(default_factory=list)

    def add(self, row: MetricRow) -> None:
        self.rows.append(row)

    def value(self, name: str, refiner: str | None = None) -> float:
        for row in self.rows:
            if row.name == name and (refiner is None or row.refiner == refiner):
                return row.value
        raise KeyError(f"no row named {name!r}")


def format_float(v: float) -> str:
    return repr(float(v))


def write_report_csv(path: str, report: MetricsReport) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(REPORT_NOTE + "\n")
        writer = csv.writer(fh)
        writer.writerow(REPORT_COLUMNS + PROVENANCE_COLUMNS)
        for r in report.rows:
            writer.writerow(
                [
                    r.name,
                    format_float(r.value),
                    r.n,
                    r.seed,
                    r.nfe,
                    "" if r.excluded is None else r.excluded,
                    r.dataset,
                    r.generator,
                    r.refiner,
                ]
            )


def read_report_csv(path: str) -> MetricsReport:
    report = MetricsReport()
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    for rec in reader:
        report.add(
            MetricRow(
                name=rec["name"],
                value=float(rec["value"]),
                n=int(rec["n"]),
                seed=int(rec["seed"]),
                nfe=int(rec["nfe"]),
                excluded=int(rec["excluded"]) if rec["excluded"] else None,
                dataset=rec["dataset"],
                generator=rec["generator"],
                refiner=rec["refiner"],
            )
        )
    return report


def evaluate_samples(
    ref: np.ndarray,
    gen: np.ndarray,
    mspec: MetricSpec,
    dspec: DatasetSpec | None = None,
    *,
    nfe: int = 0,
    seed: int = 0,
    dataset: str = "",
    generator: str = "",
    refiner: str = "",
) -> list[MetricRow]:
    """Standard metric rows for one (reference, generated) pair."""

    def row(name, value, excluded=None):
        return MetricRow(
            name=name,
            value=value,
            n=gen.shape[0],
            seed=seed,
            nfe=nfe,
            excluded=excluded,
            dataset=dataset,
            generator=generator,
            refiner=refiner,
        )

    rows = [
        row("energy_distance", energy_distance(ref, gen)),
        row("sliced_wasserstein", sliced_wasserstein(ref, gen, mspec)),
    ]
    if mspec.tau is not None:
        cov = coverage_and_amr(ref, gen, mspec.tau)
        rows += [
            row("cov_r", cov.cov_r),
            row("cov_p", cov.cov_p),
            row("amr_r", cov.amr_r),
            row("amr_p", cov.amr_p),
        ]
    if dspec is not None and dspec.name in ("eight_gaussians", "point_mass"):
        try:
            err, excluded = energy_error(
                true_energy(dspec, ref), true_energy(dspec, gen), mspec.e_max
            )
            rows.append(row("energy_error_pct", err, excluded))
        except UnsupportedError:
            pass
    return rows
