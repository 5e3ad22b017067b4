"""Synthetic distributions, augmentation, and the IDX image format."""

import numpy as np
import pytest

from flowrefine.datasets import (
    AugSpec,
    DatasetSpec,
    SampleBatch,
    data_aug,
    identity_aug,
    load_idx,
    make_dataset,
    min_mode_distance,
    mode_centers,
    write_idx,
)
from flowrefine.errors import (
    BadMagicError,
    ConfigError,
    DimensionOverflowError,
    MissingArtifactError,
    TruncatedPayloadError,
)


class TestDistributions:
    def test_point_mass_copies_center(self):
        spec = DatasetSpec("point_mass", n=17, center=(1.5, -2.0))
        batch = make_dataset(spec)
        np.testing.assert_array_equal(batch.x, np.tile([1.5, -2.0], (17, 1)))

    def test_eight_gaussians_mode_geometry(self):
        spec = DatasetSpec("eight_gaussians", radius=4.0)
        centers = mode_centers(spec)
        assert centers.shape == (8, 2)
        np.testing.assert_allclose(centers[0], [4.0, 0.0], atol=1e-12)
        np.testing.assert_allclose(
            np.linalg.norm(centers, axis=1), 4.0, atol=1e-12
        )
        # adjacent modes on the circle: chord = 2 r sin(pi/8)
        np.testing.assert_allclose(
            min_mode_distance(spec), 2 * 4.0 * np.sin(np.pi / 8), atol=1e-12
        )

    def test_eight_gaussians_samples_near_modes(self):
        spec = DatasetSpec("eight_gaussians", n=5000, seed=3, mode_std=0.2)
        x = make_dataset(spec).x
        centers = mode_centers(spec)
        d = np.linalg.norm(x[:, None, :] - centers[None, :, :], axis=2).min(axis=1)
        assert d.max() < 6 * 0.2

    def test_two_moons_noise_free_on_circles(self):
        spec = DatasetSpec("two_moons", n=400, seed=1, noise=0.0)
        x = make_dataset(spec).x
        r_top = np.linalg.norm(x, axis=1)
        r_bot = np.linalg.norm(x - np.array([1.0, 0.5]), axis=1)
        on_top = np.abs(r_top - 1.0) < 1e-9
        on_bot = np.abs(r_bot - 1.0) < 1e-9
        assert np.all(on_top | on_bot)
        assert 100 < on_top.sum() < 300

    def test_checkerboard_parity(self):
        x = make_dataset(DatasetSpec("checkerboard", n=2000, seed=2)).x
        parity = (np.floor(x[:, 0]) + np.floor(x[:, 1])) % 2
        np.testing.assert_array_equal(parity, 0.0)
        assert np.all((x >= -4.0) & (x < 4.0))

    def test_grid_images_shape_and_range(self):
        spec = DatasetSpec("grid_images", n=12, grid=(5, 6))
        batch = make_dataset(spec)
        assert batch.x.shape == (12, 30)
        assert batch.grid_shape == (5, 6)
        assert np.all(batch.x >= -1.0) and np.all(batch.x <= 1.0)

    def test_determinism(self):
        a = make_dataset(DatasetSpec("two_moons", n=100, seed=5)).x
        b = make_dataset(DatasetSpec("two_moons", n=100, seed=5)).x
        c = make_dataset(DatasetSpec("two_moons", n=100, seed=6)).x
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_spec_validation(self):
        with pytest.raises(ConfigError, match="unknown dataset"):
            DatasetSpec("spiral")
        with pytest.raises(ConfigError, match="size"):
            DatasetSpec("two_moons", n=0)
        with pytest.raises(ConfigError):
            DatasetSpec("two_moons", noise=-0.1)

    def test_mode_center_errors(self):
        with pytest.raises(ConfigError, match="no mode centers"):
            mode_centers(DatasetSpec("two_moons"))
        with pytest.raises(ConfigError, match="single mode"):
            min_mode_distance(DatasetSpec("point_mass"))

    def test_sample_batch_requires_2d(self):
        with pytest.raises(ConfigError):
            SampleBatch(np.zeros(5))


class TestAugmentation:
    def test_identity_returns_copy_without_rng_use(self, rng):
        x = rng.standard_normal((10, 2))
        r1 = np.random.default_rng(42)
        r2 = np.random.default_rng(42)
        out = data_aug(x, identity_aug(), r1)
        np.testing.assert_array_equal(out, x)
        assert out is not x
        # identity consumed no entropy
        np.testing.assert_array_equal(r1.random(8), r2.random(8))

    def test_noise_replay(self, rng):
        x = rng.standard_normal((10, 3))
        log: dict = {}
        out = data_aug(x, AugSpec(noise_std=0.2, prob=1.0), rng, log=log)
        np.testing.assert_array_equal(out, x + 0.2 * log["aug_eps"])

    def test_partial_prob_leaves_unselected_rows(self):
        x = np.random.default_rng(0).standard_normal((50, 2))
        log: dict = {}
        out = data_aug(x, AugSpec(noise_std=0.5, prob=0.4),
                       np.random.default_rng(1), log=log)
        mask = log["aug_mask"]
        assert 0 < mask.sum() < 50
        np.testing.assert_array_equal(out[~mask], x[~mask])
        assert not np.array_equal(out[mask], x[mask])

    def test_blur_on_vector_data_rejected(self, rng):
        x = rng.standard_normal((4, 2))
        with pytest.raises(ConfigError, match="non-grid"):
            data_aug(x, AugSpec(noise_std=0.0, blur_width=3), rng)

    def test_blur_keeps_constant_images(self, rng):
        x = np.full((3, 16), 0.7)
        out = data_aug(x, AugSpec(noise_std=0.0, blur_width=3), rng,
                       grid_shape=(4, 4))
        np.testing.assert_allclose(out, 0.7, atol=1e-12)

    def test_blur_grid_mismatch(self, rng):
        x = rng.standard_normal((3, 16))
        with pytest.raises(ConfigError, match="does not match"):
            data_aug(x, AugSpec(noise_std=0.0, blur_width=3), rng,
                     grid_shape=(3, 4))

    def test_aug_spec_validation(self):
        with pytest.raises(ConfigError, match="noise_std"):
            AugSpec(noise_std=-0.1)
        with pytest.raises(ConfigError, match="blur_width"):
            AugSpec(blur_width=2)
        with pytest.raises(ConfigError, match="prob"):
            AugSpec(prob=1.5)
        assert identity_aug().is_identity
        assert not AugSpec(noise_std=0.05).is_identity


class TestIdxFormat:
    def make_grid_batch(self, n=6, h=4, w=5, seed=0) -> SampleBatch:
        # values on the exact 256-level quantization grid so the
        # round trip is lossless
        rng = np.random.default_rng(seed)
        levels = rng.integers(0, 256, size=(n, h * w))
        return SampleBatch(levels / 127.5 - 1.0, grid_shape=(h, w))

    def test_round_trip_bit_exact(self, tmp_path):
        batch = self.make_grid_batch()
        path = str(tmp_path / "imgs.idx")
        write_idx(path, batch)
        back = load_idx(path)
        np.testing.assert_array_equal(back.x, batch.x)
        assert back.grid_shape == (4, 5)

    def test_bad_magic(self, tmp_path):
        path = str(tmp_path / "bad.idx")
        header = np.array([0xDEADBEEF, 1, 2, 2], dtype=">u4").tobytes()
        with open(path, "wb") as fh:
            fh.write(header + bytes(4))
        with pytest.raises(BadMagicError, match="magic"):
            load_idx(path)

    def test_truncated_header(self, tmp_path):
        path = str(tmp_path / "short.idx")
        with open(path, "wb") as fh:
            fh.write(b"\x00\x00\x08\x03")
        with pytest.raises(TruncatedPayloadError, match="header"):
            load_idx(path)

    def test_truncated_payload(self, tmp_path):
        path = str(tmp_path / "cut.idx")
        header = np.array([0x00000803, 2, 3, 3], dtype=">u4").tobytes()
        with open(path, "wb") as fh:
            fh.write(header + bytes(10))  # needs 18
        with pytest.raises(TruncatedPayloadError, match="payload"):
            load_idx(path)

    def test_dimension_overflow(self, tmp_path):
        path = str(tmp_path / "huge.idx")
        header = np.array([0x00000803, 1 << 16, 1 << 10, 1 << 10],
                          dtype=">u4").tobytes()
        with open(path, "wb") as fh:
            fh.write(header)
        with pytest.raises(DimensionOverflowError, match="declares"):
            load_idx(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(MissingArtifactError):
            load_idx(str(tmp_path / "absent.idx"))

    def test_write_requires_grid(self, tmp_path, rng):
        batch = SampleBatch(rng.standard_normal((3, 4)))
        with pytest.raises(ConfigError, match="grid"):
            write_idx(str(tmp_path / "x.idx"), batch)

    def test_trailing_bytes_tolerated(self, tmp_path):
        batch = self.make_grid_batch(n=2, h=2, w=2)
        path = str(tmp_path / "pad.idx")
        write_idx(path, batch)
        with open(path, "ab") as fh:
            fh.write(b"\x00\x01\x02")
        back = load_idx(path)
        np.testing.assert_array_equal(back.x, batch.x)
