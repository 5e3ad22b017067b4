"""Command-line harness: train, refine, evaluate, ablate, transfer, plot.

Every command takes --config (a YAML tree, see config.py) plus optional
--seed and dotted --set key=value overrides mirroring the tree. Outputs
under out_dir are byte-for-byte reproducible for a given config; wall
clock timestamps go only to the run.log sidecar.

Exit codes: 0 success, 2 configuration problems, 3 missing or corrupt
artifacts, 4 numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import os
import sys

import numpy as np

from . import dumps, net
from .config import (
    ALPHA_GRID,
    ENV_THREADS,
    NFE_GRID,
    SIGMA_D_GRID,
    SIGMA_F_GRID,
    ExperimentConfig,
    load_config,
    seed_for,
)
from .datasets import DatasetSpec, make_dataset, min_mode_distance
from .errors import (
    ConfigError,
    FlowRefineError,
    FormatError,
    HashMismatchError,
    MissingArtifactError,
    NumericalError,
    UnsupportedError,
)
from .generator import Generator, TrainConfig, train_base
from .metrics import (
    MetricsReport,
    MetricSpec,
    evaluate_samples,
    format_float,
    latent_gaussianity,
    write_report_csv,
)
from .ode import SolverSpec
from .plotting import scatter_svg
from .refine import (
    Refiner,
    apply_refiner,
    train_dfr,
    train_fmrefiner,
    train_lfr,
    train_noise_inject,
)

TABLE_COLUMNS = (
    "label",
    "param",
    "value",
    "refiner_nfe",
    "base_nfe",
    "total_nfe",
    "energy_distance",
    "sliced_wasserstein",
    "seeds",
    "n",
)

TRANSFER_LABELS = ("Base", "+DFR (1-NFE)", "+DFR (10-NFE)", "+LFR (1-NFE)", "+LFR (10-NFE)")


def _out(cfg: ExperimentConfig, name: str) -> str:
    os.makedirs(cfg.out_dir, exist_ok=True)
    return os.path.join(cfg.out_dir, name)


def _log(cfg: ExperimentConfig, message: str) -> None:
    stamp = datetime.datetime.now().isoformat(timespec="seconds")
    with open(_out(cfg, "run.log"), "a") as fh:
        fh.write(f"[{stamp}] {message}\n")


def _write_loss_csv(path: str, log: net.TrainLog) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "loss"])
        for i, loss in enumerate(log.losses):
            writer.writerow([i, format_float(loss)])
        for key in sorted(log.diagnostics):
            writer.writerow([key, format_float(log.diagnostics[key])])


def _write_table_csv(path: str, rows: list[dict], provenance: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# {provenance}\n")
        fh.write("# distances: plain euclidean, no rotational alignment\n")
        writer = csv.writer(fh)
        writer.writerow(TABLE_COLUMNS)
        for row in rows:
            writer.writerow(
                [
                    row["label"],
                    row["param"],
                    row["value"],
                    row["refiner_nfe"],
                    row["base_nfe"],
                    row["total_nfe"],
                    format_float(row["energy_distance"]),
                    format_float(row["sliced_wasserstein"]),
                    row["seeds"],
                    row["n"],
                ]
            )


def read_table_csv(path: str) -> list[dict]:
    try:
        with open(path, newline="") as fh:
            lines = [ln for ln in fh if not ln.startswith("#")]
    except FileNotFoundError as exc:
        raise MissingArtifactError(f"no such table: {path}") from exc
    return list(csv.DictReader(lines))


def _base_path(cfg: ExperimentConfig, degraded: bool = False) -> str:
    return _out(cfg, "base_degraded.bfr" if degraded else "base.bfr")


def _load_generator(cfg: ExperimentConfig, degraded: bool = False) -> Generator:
    path = _base_path(cfg, degraded)
    if not os.path.exists(path):
        raise MissingArtifactError(
            f"generator checkpoint {path} not found; run train-base first"
        )
    return Generator.load(path)


def _load_refiner(cfg: ExperimentConfig, kind: str | None = None) -> Refiner:
    kind = kind or cfg.refiner.kind
    path = _out(cfg, f"refiner_{kind}.bfr")
    if not os.path.exists(path):
        raise MissingArtifactError(
            f"refiner checkpoint {path} not found; run train-refiner first"
        )
    refiner = Refiner.load(path)
    if refiner.kind != kind:
        raise ConfigError(
            f"checkpoint {path} holds a {refiner.kind} refiner, expected {kind}"
        )
    return refiner


def _holdout(cfg: ExperimentConfig, n: int | None = None) -> np.ndarray:
    spec = cfg.dataset
    held = DatasetSpec(
        name=spec.name,
        n=n or cfg.metrics.eval_n,
        seed=seed_for(spec.seed, "eval"),
        radius=spec.radius,
        mode_std=spec.mode_std,
        center=spec.center,
        noise=spec.noise,
        grid=spec.grid,
    )
    return make_dataset(held).x


def _metric_spec(cfg: ExperimentConfig) -> MetricSpec:
    """Fill the distance threshold from mode geometry when unset."""
    m = cfg.metrics
    if m.tau is not None:
        return m
    try:
        tau = 0.5 * min_mode_distance(cfg.dataset)
    except ConfigError:
        return m
    return MetricSpec(
        tau=tau,
        n_projections=m.n_projections,
        e_max=m.e_max,
        seed=m.seed,
        eval_n=m.eval_n,
    )


def cmd_train_base(cfg: ExperimentConfig, degraded: bool = False) -> str:
    """Train the base generator (degraded: 10x fewer steps) and save it."""
    dataset = make_dataset(cfg.dataset)
    train_cfg = cfg.base
    if degraded:
        train_cfg = TrainConfig(
            steps=max(1, cfg.base.steps // 10),
            batch_size=cfg.base.batch_size,
            lr=cfg.base.lr,
            seed=cfg.base.seed,
            eval_every=cfg.base.eval_every,
            hidden=cfg.base.hidden,
            freq_count=cfg.base.freq_count,
        )
    gen, log = train_base(dataset, train_cfg, solver=cfg.solvers.base)
    path = _base_path(cfg, degraded)
    gen.save(path)
    suffix = "_degraded" if degraded else ""
    _write_loss_csv(_out(cfg, f"base{suffix}_loss.csv"), log)
    _log(cfg, f"train-base degraded={degraded} -> {path} hash={gen.fingerprint()[:12]}")
    return path


def cmd_train_refiner(cfg: ExperimentConfig, kind: str | None = None) -> str:
    """Train the configured refiner against the saved base generator."""
    kind = kind or cfg.refiner.kind
    dataset = make_dataset(cfg.dataset)
    seed = seed_for(cfg.base.seed, "refiner")
    train_cfg = cfg.refiner.train_config(seed)
    if kind == "fmrefiner":
        refiner, log = train_fmrefiner(
            dataset, cfg.refiner.sigma_f, cfg.refiner.sigma_z, train_cfg
        )
    else:
        gen = _load_generator(cfg)
        if kind == "dfr":
            refiner, log = train_dfr(
                gen, dataset, cfg.refiner.aug, train_cfg,
                sample_pool=cfg.refiner.sample_pool,
            )
        elif kind == "noise_inject":
            refiner, log = train_noise_inject(
                gen, dataset, cfg.refiner.sigma_d, train_cfg,
                sample_pool=cfg.refiner.sample_pool,
            )
        elif kind == "lfr":
            refiner, log = train_lfr(
                gen, dataset, cfg.refiner.mix, train_cfg,
                inversion_solver=cfg.solvers.invert,
                cache_path=_out(cfg, "latents.bfr"),
                invert_n=cfg.refiner.invert_n,
            )
        else:
            raise ConfigError(f"unknown refiner kind {kind!r}")
    path = _out(cfg, f"refiner_{kind}.bfr")
    refiner.save(path)
    _write_loss_csv(_out(cfg, f"refiner_{kind}_loss.csv"), log)
    _log(cfg, f"train-refiner kind={kind} -> {path}")
    return path


def cmd_sample(cfg: ExperimentConfig) -> list[str]:
    """Dump base generator samples for every seed in the config."""
    gen = _load_generator(cfg)
    paths = []
    for seed in cfg.seeds:
        batch = gen.sample(cfg.metrics.eval_n, seed, cfg.solvers.base)
        path = _out(cfg, f"samples_base_seed{seed}.csv")
        dumps.save_samples(path, batch)
        paths.append(path)
    _log(cfg, f"sample seeds={cfg.seeds} n={cfg.metrics.eval_n}")
    return paths


def cmd_refine(cfg: ExperimentConfig) -> list[str]:
    """Dump paired base and refined samples for every seed."""
    gen = _load_generator(cfg)
    refiner = _load_refiner(cfg)
    paths = []
    for seed in cfg.seeds:
        base, refined = apply_refiner(
            refiner,
            gen,
            cfg.metrics.eval_n,
            seed,
            base_solver=cfg.solvers.base,
            refine_solver=cfg.solvers.refine,
        )
        dumps.save_samples(_out(cfg, f"samples_base_seed{seed}.csv"), base)
        path = _out(cfg, f"samples_{refiner.kind}_seed{seed}.csv")
        dumps.save_samples(path, refined)
        paths.append(path)
    _log(cfg, f"refine kind={refiner.kind} seeds={cfg.seeds}")
    return paths


def cmd_invert(cfg: ExperimentConfig) -> str:
    """Invert held-out data, dump latents and Gaussianity diagnostics."""
    gen = _load_generator(cfg)
    from .datasets import SampleBatch

    held = _holdout(cfg)
    latents = gen.invert_batch(SampleBatch(held), cfg.solvers.invert)
    dumps.save_samples(_out(cfg, "latents_data.csv"), SampleBatch(latents.z))
    gauss = latent_gaussianity(latents.z)
    report = MetricsReport()
    from .metrics import MetricRow

    gen_hash = gen.fingerprint()[:12]
    for name, value in (
        ("latent_max_abs_mean", gauss.max_abs_mean),
        ("latent_max_var_dev", gauss.max_var_dev),
        ("inversion_recon_error", latents.recon_error),
    ):
        report.add(
            MetricRow(
                name=name,
                value=float(value),
                n=latents.z.shape[0],
                seed=cfg.dataset.seed,
                nfe=latents.nfe,
                dataset=cfg.dataset.name,
                generator=gen_hash,
                refiner="base",
            )
        )
    path = _out(cfg, "inversion.csv")
    write_report_csv(path, report)
    _log(cfg, "invert")
    return path


def cmd_evaluate(cfg: ExperimentConfig, with_refined: bool = True) -> str:
    """Metrics rows for base (and refined, when a refiner exists) samples."""
    gen = _load_generator(cfg)
    refiner = None
    if with_refined and os.path.exists(_out(cfg, f"refiner_{cfg.refiner.kind}.bfr")):
        refiner = _load_refiner(cfg)
    mspec = _metric_spec(cfg)
    ref = _holdout(cfg)
    gen_hash = gen.fingerprint()[:12]
    report = MetricsReport()
    first_base = None
    first_refined = None
    for seed in cfg.seeds:
        if refiner is None:
            base = gen.sample(mspec.eval_n, seed, cfg.solvers.base)
            refined = None
        else:
            base, refined = apply_refiner(
                refiner,
                gen,
                mspec.eval_n,
                seed,
                base_solver=cfg.solvers.base,
                refine_solver=cfg.solvers.refine,
            )
        if first_base is None:
            first_base, first_refined = base, refined
        for row in evaluate_samples(
            ref, base.x, mspec, cfg.dataset,
            nfe=base.nfe, seed=seed, dataset=cfg.dataset.name,
            generator=gen_hash, refiner="base",
        ):
            report.add(row)
        if refined is not None:
            for row in evaluate_samples(
                ref, refined.x, mspec, cfg.dataset,
                nfe=refined.nfe, seed=seed, dataset=cfg.dataset.name,
                generator=gen_hash, refiner=refiner.kind,
            ):
                report.add(row)
        dumps.save_samples(_out(cfg, f"samples_base_seed{seed}.csv"), base)
        if refined is not None:
            dumps.save_samples(
                _out(cfg, f"samples_{refiner.kind}_seed{seed}.csv"), refined
            )
    path = _out(cfg, "metrics.csv")
    write_report_csv(path, report)
    if first_refined is not None and ref.shape[1] == 2:
        scatter_svg(
            _out(cfg, "scatter.svg"),
            [("data", ref), ("base", first_base.x), ("refined", first_refined.x)],
        )
    _log(cfg, f"evaluate seeds={cfg.seeds}")
    return path


def cmd_plot(cfg: ExperimentConfig) -> str:
    """Scatter of held-out data vs dumped base and refined samples."""
    seed = cfg.seeds[0]
    base_path = _out(cfg, f"samples_base_seed{seed}.csv")
    refined_path = _out(cfg, f"samples_{cfg.refiner.kind}_seed{seed}.csv")
    for p in (base_path, refined_path):
        if not os.path.exists(p):
            raise MissingArtifactError(f"sample dump {p} not found; run refine first")
    base = dumps.load_samples(base_path)
    refined = dumps.load_samples(refined_path)
    ref = _holdout(cfg)
    if base.dim != 2:
        raise UnsupportedError("scatter plots need 2-D data")
    path = _out(cfg, "scatter.svg")
    scatter_svg(path, [("data", ref), ("base", base.x), ("refined", refined.x)])
    _log(cfg, "plot")
    return path


def _eval_pair(ref, gen_x, mspec) -> tuple[float, float]:
    from .metrics import energy_distance, sliced_wasserstein

    return energy_distance(ref, gen_x), sliced_wasserstein(ref, gen_x, mspec)


def _table_row(label, param, value, r_nfe, b_nfe, eds, sws, seeds, n) -> dict:
    return {
        "label": label,
        "param": param,
        "value": value,
        "refiner_nfe": r_nfe,
        "base_nfe": b_nfe,
        "total_nfe": r_nfe + b_nfe,
        "energy_distance": float(np.mean(eds)),
        "sliced_wasserstein": float(np.mean(sws)),
        "seeds": len(seeds),
        "n": n,
    }


def cmd_ablate(cfg: ExperimentConfig, param: str | None = None) -> str:
    """Sweep one refiner knob on its grid; one aggregated row per value.

    sigma_d sweeps the noise-injection baseline, sigma_f the clean-sample
    baseline, alpha retrains the latent refiner per mixing level, and nfe
    re-evaluates a single latent refiner at several step counts. A Base
    row always comes first.
    """
    param = param or cfg.ablate.param
    gen = _load_generator(cfg)
    dataset = make_dataset(cfg.dataset)
    mspec = _metric_spec(cfg)
    ref = _holdout(cfg)
    gen_hash = gen.fingerprint()[:12]
    n = mspec.eval_n

    base_eds, base_sws = [], []
    base_batches = {}
    for seed in cfg.seeds:
        batch = gen.sample(n, seed, cfg.solvers.base)
        base_batches[seed] = batch
        ed, sw = _eval_pair(ref, batch.x, mspec)
        base_eds.append(ed)
        base_sws.append(sw)
    base_nfe = cfg.solvers.base.nfe
    rows = [_table_row("Base", param, "", 0, base_nfe, base_eds, base_sws, cfg.seeds, n)]

    refiner_seed = seed_for(cfg.base.seed, "refiner")

    if param == "nfe":
        values = [int(v) for v in (cfg.ablate.values or NFE_GRID)]
        refiner, _ = train_lfr(
            gen, dataset, cfg.refiner.mix, cfg.refiner.train_config(refiner_seed),
            inversion_solver=cfg.solvers.invert,
            cache_path=_out(cfg, "latents.bfr"),
            invert_n=cfg.refiner.invert_n,
        )
        for steps in values:
            eds, sws = [], []
            for seed in cfg.seeds:
                _, refined = apply_refiner(
                    refiner, gen, n, seed,
                    base_solver=cfg.solvers.base,
                    refine_solver=SolverSpec("euler", steps),
                )
                ed, sw = _eval_pair(ref, refined.x, mspec)
                eds.append(ed)
                sws.append(sw)
            rows.append(
                _table_row("+LFR", param, steps, steps, base_nfe, eds, sws, cfg.seeds, n)
            )
    else:
        grids = {"sigma_d": SIGMA_D_GRID, "sigma_f": SIGMA_F_GRID, "alpha": ALPHA_GRID}
        if param not in grids:
            raise ConfigError(f"unknown ablation parameter {param!r}")
        values = [float(v) for v in (cfg.ablate.values or grids[param])]
        labels = {"sigma_d": "+NoiseInject", "sigma_f": "+FMRefiner", "alpha": "+LFR"}
        for i, value in enumerate(values):
            train_cfg = cfg.refiner.train_config(refiner_seed + i)
            if param == "sigma_d":
                refiner, _ = train_noise_inject(
                    gen, dataset, value, train_cfg,
                    sample_pool=cfg.refiner.sample_pool,
                )
            elif param == "sigma_f":
                refiner, _ = train_fmrefiner(
                    dataset, value, cfg.refiner.sigma_z, train_cfg
                )
            else:
                from .interpolant import MixSpec

                refiner, _ = train_lfr(
                    gen, dataset,
                    MixSpec(alpha_max=value, mode=cfg.refiner.mix.mode),
                    train_cfg,
                    inversion_solver=cfg.solvers.invert,
                    cache_path=_out(cfg, "latents.bfr"),
                    invert_n=cfg.refiner.invert_n,
                )
            solver = cfg.solvers.refine
            eds, sws = [], []
            for seed in cfg.seeds:
                _, refined = apply_refiner(
                    refiner, gen, n, seed,
                    base_solver=cfg.solvers.base, refine_solver=solver,
                )
                ed, sw = _eval_pair(ref, refined.x, mspec)
                eds.append(ed)
                sws.append(sw)
            rows.append(
                _table_row(
                    labels[param], param, value, solver.nfe, base_nfe,
                    eds, sws, cfg.seeds, n,
                )
            )

    path = _out(cfg, f"ablate_{param}.csv")
    provenance = (
        f"ablation param={param} dataset={cfg.dataset.name} "
        f"generator={gen_hash} seeds={cfg.seeds}"
    )
    _write_table_csv(path, rows, provenance)
    _log(cfg, f"ablate param={param} rows={len(rows)}")
    return path


def cmd_transfer(cfg: ExperimentConfig) -> str:
    """Apply full-generator refiners to the degraded generator.

    Emits five rows: Base, then data-space and latent-space refinement at
    1 and 10 NFE, all evaluated against held-out data and averaged over
    the config seeds.
    """
    degraded = _load_generator(cfg, degraded=True)
    refiner_dfr = _load_refiner(cfg, "dfr")
    refiner_lfr = _load_refiner(cfg, "lfr")
    mspec = _metric_spec(cfg)
    ref = _holdout(cfg)
    n = mspec.eval_n
    base_nfe = cfg.solvers.base.nfe
    gen_hash = degraded.fingerprint()[:12]

    collected = {label: ([], []) for label in TRANSFER_LABELS}
    for seed in cfg.seeds:
        base = degraded.sample(n, seed, cfg.solvers.base)
        ed, sw = _eval_pair(ref, base.x, mspec)
        collected["Base"][0].append(ed)
        collected["Base"][1].append(sw)
        for refiner, tag in ((refiner_dfr, "DFR"), (refiner_lfr, "LFR")):
            for steps in (1, 10):
                _, refined = apply_refiner(
                    refiner, degraded, n, seed,
                    base_solver=cfg.solvers.base,
                    refine_solver=SolverSpec("euler", steps),
                    allow_transfer=True,
                )
                ed, sw = _eval_pair(ref, refined.x, mspec)
                label = f"+{tag} ({steps}-NFE)"
                collected[label][0].append(ed)
                collected[label][1].append(sw)

    rows = []
    for label in TRANSFER_LABELS:
        eds, sws = collected[label]
        if label == "Base":
            r_nfe = 0
        else:
            r_nfe = int(label.split("(")[1].split("-")[0])
        rows.append(
            _table_row(label, "transfer", "", r_nfe, base_nfe, eds, sws, cfg.seeds, n)
        )
    path = _out(cfg, "transfer.csv")
    provenance = (
        f"transfer dataset={cfg.dataset.name} degraded={gen_hash} seeds={cfg.seeds}"
    )
    _write_table_csv(path, rows, provenance)
    _log(cfg, "transfer")
    return path


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flowrefine",
        description="Train flow-matching generators and post-hoc refiners "
        "on synthetic 2-D data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text, **extra):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="YAML experiment config")
        p.add_argument("--seed", type=int, default=None, help="override all seeds")
        p.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override a config key (dotted path)",
        )
        for flag, kwargs in extra.items():
            p.add_argument(flag, **kwargs)
        return p

    add("train-base", "train the base generator",
        **{"--degraded": dict(action="store_true", help="use 10x fewer steps")})
    add("train-refiner", "train the configured refiner",
        **{"--kind": dict(default=None, help="override refiner kind")})
    add("sample", "dump base generator samples")
    add("refine", "dump refined samples")
    add("invert", "invert held-out data to latents")
    add("evaluate", "compute metrics for dumped or fresh samples")
    add("ablate", "sweep a refiner knob on its grid",
        **{"--param": dict(default=None, choices=("sigma_d", "sigma_f", "alpha", "nfe"))})
    add("transfer", "apply full-generator refiners to the degraded generator")
    add("plot", "scatter data vs base vs refined")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        overrides = list(args.overrides)
        if args.seed is not None:
            overrides += [f"base.seed={args.seed}", f"seeds=[{args.seed}]"]
        cfg = load_config(args.config, overrides)
        if args.command == "train-base":
            cmd_train_base(cfg, degraded=args.degraded)
        elif args.command == "train-refiner":
            cmd_train_refiner(cfg, kind=args.kind)
        elif args.command == "sample":
            cmd_sample(cfg)
        elif args.command == "refine":
            cmd_refine(cfg)
        elif args.command == "invert":
            cmd_invert(cfg)
        elif args.command == "evaluate":
            cmd_evaluate(cfg)
        elif args.command == "ablate":
            cmd_ablate(cfg, param=args.param)
        elif args.command == "transfer":
            cmd_transfer(cfg)
        elif args.command == "plot":
            cmd_plot(cfg)
        return 0
    except (ConfigError, HashMismatchError, UnsupportedError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (MissingArtifactError, FormatError) as exc:
        print(f"artifact error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 4
    except FlowRefineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    threads = os.environ.get(ENV_THREADS)
    if threads:
        try:
            import threadpoolctl

            threadpoolctl.threadpool_limits(int(threads))
        except (ImportError, ValueError):
            pass
    sys.exit(main())
