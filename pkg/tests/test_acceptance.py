"""Acceptance gate: one numbered pass/fail line per stated guarantee.

Heavy artifacts (trained bases and refiners at the reference desk-scale
settings) are session fixtures shared by several criteria; their build
times are tracked so the runtime bounds can be checked where stated.
Directional claims use 3-seed means of the energy distance between
generated samples and a held-out reference.
"""

import math
import os
import time

import numpy as np
import pytest

from flowrefine import container, dumps, net
from flowrefine.cli import _write_table_csv, main, read_table_csv
from flowrefine.config import config_from_tree, seed_for
from flowrefine.datasets import (
    AugSpec,
    DatasetSpec,
    SampleBatch,
    identity_aug,
    make_dataset,
)
from flowrefine.errors import (
    BadMagicError,
    BadSectionError,
    NumericalError,
    TruncatedPayloadError,
    VersionMismatchError,
)
from flowrefine.generator import Generator, TrainConfig, train_base
from flowrefine.interpolant import MixSpec, fmrefiner_pair, lfr_mix
from flowrefine.metrics import (
    MetricSpec,
    coverage_and_amr,
    energy_distance,
    energy_error,
    sliced_wasserstein,
)
from flowrefine.ode import SolverSpec, integrate
from flowrefine.refine import (
    Refiner,
    apply_refiner,
    save_latent_cache,
    load_latent_cache,
    train_dfr,
    train_lfr,
    train_noise_inject,
)

SEEDS = (0, 1, 2)
EVAL_N = 4000
HELD_N = 2000
DATASETS = ("eight_gaussians", "two_moons")
E10 = SolverSpec("euler", 10)
E1 = SolverSpec("euler", 1)
MSPEC = MetricSpec(eval_n=EVAL_N, n_projections=128, seed=0)

# desk-scale training recipes; the short two_moons base keeps visible
# bias for the refiners to remove
BASE_STEPS = {"eight_gaussians": 5000, "two_moons": 300}
DFR_RECIPE = {
    "eight_gaussians": dict(steps=5000, batch_size=512 // 2, aug=AugSpec(noise_std=0.3),
                            sample_pool=8192),
    "two_moons": dict(steps=6000, batch_size=512, aug=AugSpec(), sample_pool=10000),
}
LFR_RECIPE = {
    "eight_gaussians": dict(steps=6000, batch_size=512, invert_n=8192),
    "two_moons": dict(steps=2500, batch_size=512, invert_n=8192),
}


def checked(acceptance, num, name, fn):
    """Run one criterion body; a crash still produces a FAIL line."""
    try:
        ok, detail = fn()
    except Exception as exc:
        acceptance.check(num, name, False, f"{type(exc).__name__}: {exc}")
        return
    acceptance.check(num, name, ok, detail)


@pytest.fixture(scope="session")
def timers():
    return {}


@pytest.fixture(scope="session")
def train_data():
    return {
        name: make_dataset(DatasetSpec(name, n=10000, seed=0)) for name in DATASETS
    }


@pytest.fixture(scope="session")
def held():
    return {
        name: make_dataset(DatasetSpec(name, n=HELD_N, seed=seed_for(0, "eval"))).x
        for name in DATASETS
    }


@pytest.fixture(scope="session")
def bases(train_data, timers):
    out = {}
    for name in DATASETS:
        start = time.monotonic()
        out[name] = [
            train_base(
                train_data[name],
                TrainConfig(steps=BASE_STEPS[name], batch_size=256, seed=s),
            )[0]
            for s in SEEDS
        ]
        timers[f"bases:{name}"] = time.monotonic() - start
    return out


@pytest.fixture(scope="session")
def base_samples(bases, timers):
    out = {}
    for name in DATASETS:
        start = time.monotonic()
        out[name] = [
            bases[name][i].sample(EVAL_N, seed_for(s, "sample"))
            for i, s in enumerate(SEEDS)
        ]
        timers[f"base_eval:{name}"] = time.monotonic() - start
    return out


@pytest.fixture(scope="session")
def base_eds(base_samples, held):
    return {
        name: [energy_distance(held[name], b.x) for b in base_samples[name]]
        for name in DATASETS
    }


@pytest.fixture(scope="session")
def dfr_refiners(bases, train_data, timers):
    out = {}
    for name in DATASETS:
        recipe = DFR_RECIPE[name]
        start = time.monotonic()
        out[name] = [
            train_dfr(
                bases[name][i],
                train_data[name],
                recipe["aug"],
                TrainConfig(
                    steps=recipe["steps"],
                    batch_size=recipe["batch_size"],
                    seed=seed_for(s, "refiner"),
                ),
                sample_pool=recipe["sample_pool"],
            )[0]
            for i, s in enumerate(SEEDS)
        ]
        timers[f"dfr:{name}"] = time.monotonic() - start
    return out


@pytest.fixture(scope="session")
def lfr_refiners(bases, train_data, timers, tmp_path_factory):
    cache_dir = tmp_path_factory.mktemp("latent_caches")
    out = {}
    for name in DATASETS:
        recipe = LFR_RECIPE[name]
        start = time.monotonic()
        out[name] = [
            train_lfr(
                bases[name][i],
                train_data[name],
                MixSpec(alpha_max=0.2),
                TrainConfig(
                    steps=recipe["steps"],
                    batch_size=recipe["batch_size"],
                    seed=seed_for(s, "refiner"),
                ),
                cache_path=str(cache_dir / f"{name}_{s}.bfr"),
                invert_n=recipe["invert_n"],
            )[0]
            for i, s in enumerate(SEEDS)
        ]
        timers[f"lfr:{name}"] = time.monotonic() - start
    return out


@pytest.fixture(scope="session")
def tiny_gen():
    ds = make_dataset(DatasetSpec("two_moons", n=256, seed=0))
    gen, _ = train_base(
        ds,
        TrainConfig(steps=60, batch_size=64, seed=0, hidden=(16,), freq_count=2),
        solver=SolverSpec("euler", 4),
    )
    return gen, ds


@pytest.fixture(scope="session")
def out_root(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance_runs")


def test_gradient_oracle(acceptance):
    def body():
        start = time.monotonic()
        rng = np.random.default_rng(0)
        params = net.init_params(2, hidden=(16,), seed=0)
        for w in params.weights:
            w[...] = 0.6 * rng.standard_normal(w.shape)
        for b in params.biases:
            b[...] = 0.3 * rng.standard_normal(b.shape)
        x = rng.standard_normal((8, 2))
        t = rng.random(8)
        target = rng.standard_normal((8, 2))
        _, grads = net.loss_and_grad(params, x, t, target)

        coords = []
        for li, w in enumerate(params.weights):
            coords += [("w", li, idx) for idx in np.ndindex(w.shape)]
        for li, b in enumerate(params.biases):
            coords += [("b", li, (j,)) for j in range(b.shape[0])]
        picks = rng.choice(len(coords), size=50, replace=False)

        eps = 1e-6
        worst = 0.0
        ok = True
        for pick in picks:
            which, li, idx = coords[pick]
            arr = params.weights[li] if which == "w" else params.biases[li]
            g = (grads.weights[li] if which == "w" else grads.biases[li])[idx]
            keep = arr[idx]
            arr[idx] = keep + eps
            up, _ = net.loss_and_grad(params, x, t, target)
            arr[idx] = keep - eps
            down, _ = net.loss_and_grad(params, x, t, target)
            arr[idx] = keep
            fd = (up - down) / (2 * eps)
            ok &= abs(g - fd) <= 1e-6 * max(abs(g), abs(fd)) + 1e-9
            if abs(fd) > 1e-6:
                worst = max(worst, abs(g - fd) / abs(fd))
        elapsed = time.monotonic() - start
        ok &= elapsed < 10.0
        return ok, f"max rel err {worst:.2e} over 50 probes, {elapsed:.2f}s"

    checked(acceptance, 1, "gradient oracle", body)


def test_solver_order(acceptance):
    def body():
        start = time.monotonic()

        def field(x, _t):
            return x

        growth = {"euler": 2.0, "heun": 4.0, "rk4": 16.0}
        details = []
        ok = True
        for kind, want in growth.items():
            errs = []
            for steps in (8, 16, 32, 64):
                out, _ = integrate(field, np.array([[1.0]]), SolverSpec(kind, steps))
                errs.append(abs(out[0, 0] - math.e))
            ratios = [errs[i] / errs[i + 1] for i in range(3)]
            ok &= all(want / 2 <= r <= want * 2 for r in ratios)
            details.append(f"{kind} {min(ratios):.2f}..{max(ratios):.2f}x")
        elapsed = time.monotonic() - start
        ok &= elapsed < 1.0
        return ok, "; ".join(details) + f", {elapsed:.2f}s"

    checked(acceptance, 2, "solver order", body)


def test_invertibility(acceptance, bases, held):
    def body():
        start = time.monotonic()
        gen = bases["eight_gaussians"][0]
        subset = SampleBatch(held["eight_gaussians"][:256])
        lat = gen.invert_batch(subset, SolverSpec("rk4", 64, "backward"))
        elapsed = time.monotonic() - start
        ok = lat.recon_error <= 1e-3 and elapsed < 120.0
        return ok, f"round-trip rel err {lat.recon_error:.2e} on 256 pts, {elapsed:.1f}s"

    checked(acceptance, 3, "invertibility", body)


def test_base_quality_floor(acceptance, base_eds, held, timers):
    def body():
        ref = held["eight_gaussians"]
        half = HELD_N // 2
        bound = 2.0 * energy_distance(ref[:half], ref[half:])
        mean_ed = float(np.mean(base_eds["eight_gaussians"]))
        elapsed = timers["bases:eight_gaussians"] + timers["base_eval:eight_gaussians"]
        ok = mean_ed <= bound and elapsed < 600.0
        return ok, (
            f"mean ED {mean_ed:.5f} <= 2x split-half {bound:.5f}, "
            f"3 seeds, {elapsed:.0f}s"
        )

    checked(acceptance, 4, "base quality floor", body)


def test_dataspace_refinement_improves(
    acceptance, bases, dfr_refiners, base_eds, held, timers
):
    def body():
        start = time.monotonic()
        details = []
        ok = True
        for name in DATASETS:
            eds = []
            for i, s in enumerate(SEEDS):
                _, refined = apply_refiner(
                    dfr_refiners[name][i], bases[name][i], EVAL_N,
                    seed_for(s, "sample"), refine_solver=E10,
                )
                eds.append(energy_distance(held[name], refined.x))
            refined_mean = float(np.mean(eds))
            base_mean = float(np.mean(base_eds[name]))
            ok &= refined_mean <= base_mean
            details.append(f"{name} {refined_mean:.5f} vs base {base_mean:.5f}")
        elapsed = (
            time.monotonic() - start
            + timers["dfr:eight_gaussians"] + timers["dfr:two_moons"]
        )
        ok &= elapsed < 900.0
        return ok, "; ".join(details) + f", {elapsed:.0f}s"

    checked(acceptance, 5, "data-space refinement at 10 steps", body)


def test_latent_refinement_improves(
    acceptance, bases, lfr_refiners, base_samples, base_eds, held, out_root
):
    def body():
        details = []
        ok = True
        for name in DATASETS:
            eds = {}
            sws = {}
            for steps in (1, 2, 5, 10):
                solver = SolverSpec("euler", steps)
                per_seed = []
                per_seed_sw = []
                for i, s in enumerate(SEEDS):
                    _, refined = apply_refiner(
                        lfr_refiners[name][i], bases[name][i], EVAL_N,
                        seed_for(s, "sample"), refine_solver=solver,
                    )
                    per_seed.append(energy_distance(held[name], refined.x))
                    per_seed_sw.append(sliced_wasserstein(held[name], refined.x, MSPEC))
                eds[steps] = per_seed
                sws[steps] = per_seed_sw

            refined_mean = float(np.mean(eds[1]))
            base_mean = float(np.mean(base_eds[name]))
            ok &= refined_mean <= base_mean
            details.append(f"{name} @1 {refined_mean:.5f} vs base {base_mean:.5f}")

            # NFE sweep table: the over-refinement trend is recorded here,
            # not asserted
            base_sws = [
                sliced_wasserstein(held[name], b.x, MSPEC)
                for b in base_samples[name]
            ]
            rows = [
                {
                    "label": "Base", "param": "nfe", "value": "",
                    "refiner_nfe": 0, "base_nfe": 100, "total_nfe": 100,
                    "energy_distance": base_mean,
                    "sliced_wasserstein": float(np.mean(base_sws)),
                    "seeds": len(SEEDS), "n": EVAL_N,
                }
            ]
            for steps in (1, 2, 5, 10):
                rows.append(
                    {
                        "label": "+LFR", "param": "nfe", "value": steps,
                        "refiner_nfe": steps, "base_nfe": 100,
                        "total_nfe": 100 + steps,
                        "energy_distance": float(np.mean(eds[steps])),
                        "sliced_wasserstein": float(np.mean(sws[steps])),
                        "seeds": len(SEEDS), "n": EVAL_N,
                    }
                )
            path = str(out_root / f"ablate_nfe_{name}.csv")
            _write_table_csv(
                path, rows, f"ablation param=nfe dataset={name} seeds={list(SEEDS)}"
            )
            got = read_table_csv(path)
            ok &= [r["label"] for r in got] == ["Base"] + ["+LFR"] * 4
            ok &= [r["value"] for r in got[1:]] == ["1", "2", "5", "10"]
            trend = ", ".join(f"@{s}={np.mean(eds[s]):.4f}" for s in (1, 2, 5, 10))
            details.append(f"sweep {trend}")
        return ok, "; ".join(details)

    checked(acceptance, 6, "latent refinement at 1 step", body)


def test_mixing_gaussianity(acceptance):
    def body():
        start = time.monotonic()
        ok = True
        worst_var = 0.0
        worst_mean = 0.0
        for mode in ("uniform", "fixed"):
            for alpha in (0.1, 0.2, 0.5):
                rng = np.random.default_rng(777)
                z1 = rng.standard_normal((100000, 2))
                z0 = rng.standard_normal((100000, 2))
                out = lfr_mix(z1, z0, MixSpec(alpha_max=alpha, mode=mode), rng)
                var = out.var(axis=0, ddof=1)
                mean = out.mean(axis=0)
                ok &= bool(np.all((var >= 0.97) & (var <= 1.03)))
                ok &= bool(np.all(np.abs(mean) <= 0.02))
                worst_var = max(worst_var, float(np.abs(var - 1.0).max()))
                worst_mean = max(worst_mean, float(np.abs(mean).max()))
        elapsed = time.monotonic() - start
        ok &= elapsed < 5.0
        return ok, (
            f"max |var-1| {worst_var:.4f}, max |mean| {worst_mean:.4f}, "
            f"both modes, alpha in (0.1, 0.2, 0.5), {elapsed:.2f}s"
        )

    checked(acceptance, 7, "mixing gaussianity", body)


def test_metric_oracles(acceptance):
    def body():
        rng = np.random.default_rng(42)
        ok = True

        # coverage / nearest-distance against explicit loops, exact equality
        for _ in range(100):
            ref = rng.standard_normal((64, 2)) * rng.uniform(0.5, 2.0)
            gen = rng.standard_normal((64, 2)) * rng.uniform(0.5, 2.0)
            tau = rng.uniform(0.2, 2.0)
            got = coverage_and_amr(ref, gen, tau)
            near_gen = np.array(
                [min(np.sqrt(((r - g) ** 2).sum()) for g in gen) for r in ref]
            )
            near_ref = np.array(
                [min(np.sqrt(((r - g) ** 2).sum()) for r in ref) for g in gen]
            )
            ok &= got.cov_r == float(np.mean(near_gen < tau))
            ok &= got.cov_p == float(np.mean(near_ref < tau))
            ok &= got.amr_r == float(near_gen.mean())
            ok &= got.amr_p == float(near_ref.mean())

        # energy distance against the independent double loop
        worst = 0.0
        for _ in range(5):
            a = rng.standard_normal((80, 3))
            b = rng.standard_normal((60, 3)) + 0.3
            cross = np.mean([np.sqrt(((x - y) ** 2).sum()) for x in a for y in b])
            within_a = np.mean([np.sqrt(((x - y) ** 2).sum()) for x in a for y in a])
            within_b = np.mean([np.sqrt(((x - y) ** 2).sum()) for x in b for y in b])
            reference = 2 * cross - within_a - within_b
            worst = max(worst, abs(energy_distance(a, b) - reference))
        ok &= worst <= 1e-12

        # signed percent energy error, with strict truncation and counts
        value, excluded = energy_error([2.0, 2.0], [1.0, 5.0], e_max=4.0)
        ok &= abs(value - (-50.0)) < 1e-12 and excluded == 1
        value, excluded = energy_error([1.0, 3.0], [2.0, 4.0], e_max=4.0)
        ok &= abs(value) < 1e-12 and excluded == 1  # 4.0 is not < 4.0
        value, excluded = energy_error([2.0, 2.0, 2.0], [1.0, 2.0, 3.0])
        ok &= abs(value) < 1e-12 and excluded == 0
        try:
            energy_error([1.0], [10.0, 11.0], e_max=5.0)
            ok = False
        except NumericalError:
            pass
        return ok, f"coverage exact on 100 instances, ED dev {worst:.1e}"

    checked(acceptance, 8, "metric oracles", body)


def test_baseline_parity_harness(acceptance, bases, out_root):
    def body():
        from flowrefine.cli import _base_path, cmd_ablate

        start = time.monotonic()
        out_dir = str(out_root / "parity")
        cfg = config_from_tree(
            {
                "dataset": {"name": "eight_gaussians", "n": 10000, "seed": 0},
                "base": {"steps": 5000, "batch_size": 256},
                "refiner": {"steps": 800, "batch_size": 256, "sample_pool": 4096},
                "metrics": {"eval_n": 1000, "n_projections": 64},
                "seeds": [0, 1, 2],
                "out_dir": out_dir,
            }
        )
        bases["eight_gaussians"][0].save(_base_path(cfg))
        ok = True
        details = []
        for param, label, grid in (
            ("sigma_d", "+NoiseInject", ("0.01", "0.05", "0.1", "0.2")),
            ("sigma_f", "+FMRefiner", ("0.01", "0.05", "0.1", "0.2")),
        ):
            path = cmd_ablate(cfg, param=param)
            rows = read_table_csv(path)
            ok &= len(rows) == 5
            ok &= rows[0]["label"] == "Base"
            ok &= [r["label"] for r in rows[1:]] == [label] * 4
            ok &= tuple(r["value"] for r in rows[1:]) == grid
            for row in rows:
                float(row["energy_distance"])
                float(row["sliced_wasserstein"])
                ok &= row["seeds"] == "3" and row["n"] == "1000"
            best = min(rows[1:], key=lambda r: float(r["energy_distance"]))
            details.append(
                f"{param}: base {float(rows[0]['energy_distance']):.4f}, "
                f"best {best['value']} -> {float(best['energy_distance']):.4f}"
            )
        elapsed = time.monotonic() - start
        ok &= elapsed < 1800.0
        return ok, "; ".join(details) + f", {elapsed:.0f}s"

    checked(acceptance, 9, "baseline parity harness", body)


def test_transfer_report(
    acceptance, train_data, dfr_refiners, lfr_refiners, out_root
):
    def body():
        from flowrefine.cli import _base_path, cmd_transfer

        out_dir = str(out_root / "transfer")
        cfg = config_from_tree(
            {
                "dataset": {"name": "eight_gaussians", "n": 10000, "seed": 0},
                "base": {"steps": 5000, "batch_size": 256},
                "metrics": {"eval_n": EVAL_N},
                "seeds": [0, 1, 2],
                "out_dir": out_dir,
            }
        )
        degraded, _ = train_base(
            train_data["eight_gaussians"],
            TrainConfig(steps=500, batch_size=256, seed=0),
        )
        degraded.save(_base_path(cfg, degraded=True))
        dfr_refiners["eight_gaussians"][0].save(os.path.join(out_dir, "refiner_dfr.bfr"))
        lfr_refiners["eight_gaussians"][0].save(os.path.join(out_dir, "refiner_lfr.bfr"))
        path = cmd_transfer(cfg)
        rows = {r["label"]: r for r in read_table_csv(path)}
        ok = list(rows) == [
            "Base", "+DFR (1-NFE)", "+DFR (10-NFE)", "+LFR (1-NFE)", "+LFR (10-NFE)"
        ]
        base_ed = float(rows["Base"]["energy_distance"])
        dfr_ed = float(rows["+DFR (10-NFE)"]["energy_distance"])
        ok &= dfr_ed <= base_ed
        summary = ", ".join(
            f"{label} {float(row['energy_distance']):.4f}"
            for label, row in rows.items()
        )
        return ok, summary

    checked(acceptance, 10, "transfer to a weaker generator", body)


def test_null_oracles(acceptance, tiny_gen):
    def body():
        gen, ds = tiny_gen
        rng = np.random.default_rng(5)
        ok = True

        # zero-field refiners: exact identities at inference
        from flowrefine.refine import refine_dfr, refine_lfr

        zero = net.init_params(2, hidden=(8,), freq_count=2, seed=1)
        dfr0 = Refiner(kind="dfr", params=zero, mean=np.zeros(2), scale=np.ones(2),
                       solver=E10, aug=identity_aug())
        batch = SampleBatch(rng.standard_normal((64, 2)) * 2.0 + 1.0)
        out = refine_dfr(dfr0, batch, E10)
        ok &= bool(np.array_equal(out.x, batch.x))

        lfr0 = Refiner(kind="lfr", params=zero, mean=gen.mean, scale=gen.scale,
                       solver=E1, generator_hash=gen.fingerprint(),
                       mix=MixSpec(alpha_max=0.2))
        refined = refine_lfr(lfr0, gen, 64, seed=11, solver=E1)
        ok &= bool(np.array_equal(refined.x, gen.sample(64, seed=11).x))

        # sigma_d = 0 training collapses onto the augmentation-free
        # data-space refiner, parameter for parameter
        tiny_cfg = TrainConfig(steps=40, batch_size=32, seed=0, eval_every=20,
                               hidden=(16,), freq_count=2)
        ni, log_ni = train_noise_inject(gen, ds, 0.0, tiny_cfg)
        df, log_df = train_dfr(gen, ds, identity_aug(), tiny_cfg)
        ok &= bool(np.array_equal(log_ni.losses, log_df.losses))
        for a, b in zip(ni.params.weights + ni.params.biases,
                        df.params.weights + df.params.biases):
            ok &= bool(np.array_equal(a, b))

        # degenerate clean-sample pairs reduce to (data, data) exactly
        x = rng.standard_normal((6, 2))
        state = np.random.default_rng(3)
        for t in (0.0, 0.37, 1.0):
            xt, target = fmrefiner_pair(x, 0.0, 0.0, t, state)
            ok &= bool(np.array_equal(xt, x)) and bool(np.array_equal(target, x))
        return ok, "zero-field no-ops and sigma=0 collapses bit-exact"

    checked(acceptance, 11, "null oracles", body)


def test_serialization(acceptance, tiny_gen, tmp_path):
    def body():
        gen, _ = tiny_gen
        rng = np.random.default_rng(8)
        ok = True

        gen_path = str(tmp_path / "gen.bfr")
        gen.save(gen_path)
        back = Generator.load(gen_path)
        ok &= back.fingerprint() == gen.fingerprint()

        ref = Refiner(kind="dfr",
                      params=net.init_params(2, hidden=(8,), freq_count=2, seed=1),
                      mean=gen.mean, scale=gen.scale, solver=E10,
                      generator_hash=gen.fingerprint(), aug=AugSpec(noise_std=0.3))
        ref_path = str(tmp_path / "ref.bfr")
        ref.save(ref_path)
        ok &= Refiner.load(ref_path).pack() == ref.pack()

        z = rng.standard_normal((32, 2))
        cache_path = str(tmp_path / "lat.bfr")
        save_latent_cache(cache_path, z, gen.fingerprint())
        z2, h2 = load_latent_cache(cache_path)
        ok &= bool(np.array_equal(z2, z)) and h2 == gen.fingerprint()

        batch = SampleBatch(rng.standard_normal((20, 2)))
        for suffix in ("csv", "bfr"):
            spath = str(tmp_path / f"s.{suffix}")
            dumps.save_samples(spath, batch)
            ok &= bool(np.array_equal(dumps.load_samples(spath).x, batch.x))

        blob = gen.pack()
        failures = {
            BadMagicError: b"JUNK" + blob[4:],
            VersionMismatchError: blob[:4] + (9).to_bytes(4, "little") + blob[8:],
            TruncatedPayloadError: blob[:-10],
            BadSectionError: blob.replace(b"GEN1", b"ZZZ1"),
        }
        bad_path = str(tmp_path / "bad.bfr")
        for error, corrupted in failures.items():
            with open(bad_path, "wb") as fh:
                fh.write(corrupted)
            try:
                Generator.load(bad_path)
                ok = False
            except error:
                pass

        # a corrupt checkpoint surfaces as the artifact exit code
        out_dir = str(tmp_path / "out")
        os.makedirs(out_dir)
        cfg_path = str(tmp_path / "cfg.yaml")
        with open(cfg_path, "w") as fh:
            fh.write(
                "dataset: {name: two_moons, n: 256}\n"
                f"metrics: {{eval_n: 32}}\nout_dir: {out_dir}\n"
            )
        with open(os.path.join(out_dir, "base.bfr"), "wb") as fh:
            fh.write(b"JUNK" + blob[4:])
        ok &= main(["evaluate", "--config", cfg_path]) == 3
        return ok, "round trips bit-exact; corruptions raise typed errors, exit 3"

    checked(acceptance, 12, "serialization", body)
