import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from geofield import imaging
from geofield.imaging import (
    Image, MaskRect, SamplingError, bilinear_sample, bilinear_sample_many,
    depth_smoothness, mask_rect_from_matches, psnr, read_pfm, read_png,
    sample_subpixel_patch, ssim, write_pfm, write_png,
)


def checker(h=8, w=8):
    img = np.zeros((h, w, 3))
    img[::2, ::2] = 1.0
    img[1::2, 1::2] = 1.0
    return img


class TestImageType:
    def test_validates_range(self):
        with pytest.raises(ValueError):
            Image(np.full((4, 4, 3), 1.5))
        with pytest.raises(ValueError):
            Image(np.full((4, 4, 3), np.nan))

    def test_gray_promoted_to_channel_axis(self):
        img = Image(np.zeros((4, 5)))
        assert (img.height, img.width, img.channels) == (4, 5, 1)


class TestBilinear:
    def test_integer_coords_exact(self):
        rng = np.random.default_rng(0)
        img = rng.uniform(size=(6, 7, 3))
        for (u, v) in [(0, 0), (3, 2), (6, 5), (6, 0), (0, 5)]:
            np.testing.assert_array_equal(bilinear_sample(img, (u, v)), img[v, u])

    def test_midpoint_average(self):
        img = np.zeros((2, 2, 1))
        img[0, 1, 0] = 1.0
        np.testing.assert_allclose(bilinear_sample(img, (0.5, 0.0)), [0.5])
        np.testing.assert_allclose(bilinear_sample(img, (0.5, 0.5)), [0.25])

    def test_out_of_bounds_raises(self):
        img = np.zeros((4, 4, 3))
        for p in [(-0.01, 0), (0, -0.01), (3.01, 0), (0, 3.01)]:
            with pytest.raises(SamplingError):
                bilinear_sample(img, p)

    def test_far_edge_inclusive(self):
        img = np.arange(12.0).reshape(3, 4, 1) / 12.0
        np.testing.assert_allclose(bilinear_sample(img, (3.0, 2.0)), img[2, 3])

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1))
    def test_convex_combination(self, seed):
        rng = np.random.default_rng(seed)
        img = rng.uniform(size=(5, 6, 3))
        ps = np.stack([rng.uniform(0, 5, 20), rng.uniform(0, 4, 20)], axis=1)
        out = bilinear_sample_many(img, ps)
        assert np.all(out >= img.min() - 1e-12)
        assert np.all(out <= img.max() + 1e-12)

    def test_matches_manual_formula(self):
        rng = np.random.default_rng(1)
        img = rng.uniform(size=(4, 4, 2))
        u, v = 1.3, 2.6
        fu, fv = u - 1, v - 2
        expect = (img[2, 1] * (1 - fu) * (1 - fv) + img[2, 2] * fu * (1 - fv)
                  + img[3, 1] * (1 - fu) * fv + img[3, 2] * fu * fv)
        np.testing.assert_allclose(bilinear_sample(img, (u, v)), expect, atol=1e-12)


class TestSubPixelPatch:
    def test_shape_and_shared_offset(self):
        rng = np.random.default_rng(7)
        patch = sample_subpixel_patch(checker(16, 16), 5, rng)
        assert patch.coords.shape == (25, 2)
        assert patch.colors.shape == (25, 3)
        fu = np.unique(np.round(patch.coords[:, 0] - np.floor(patch.coords[:, 0]), 12))
        fv = np.unique(np.round(patch.coords[:, 1] - np.floor(patch.coords[:, 1]), 12))
        assert len(fu) == 1 and len(fv) == 1  # one jitter for the whole patch

    def test_coords_always_interpolatable(self):
        rng = np.random.default_rng(8)
        img = checker(9, 12)
        for _ in range(200):
            patch = sample_subpixel_patch(img, 4, rng)
            bilinear_sample_many(img, patch.coords)  # must not raise
            assert patch.coords[:, 0].max() < 12 - 1
            assert patch.coords[:, 1].max() < 9 - 1

    def test_colors_are_bilinear_at_coords(self):
        rng = np.random.default_rng(9)
        img = np.random.default_rng(0).uniform(size=(10, 10, 3))
        patch = sample_subpixel_patch(img, 3, rng)
        np.testing.assert_array_equal(patch.colors, bilinear_sample_many(img, patch.coords))

    def test_grid_reshape_row_major(self):
        rng = np.random.default_rng(10)
        patch = sample_subpixel_patch(checker(), 3, rng)
        grid = patch.grid(patch.coords)
        assert grid.shape == (3, 3, 2)
        # v constant along a row, u increasing along columns
        assert np.allclose(grid[0, :, 1], grid[0, 0, 1])
        assert np.all(np.diff(grid[0, :, 0]) == 1.0)

    def test_too_large_patch_raises(self):
        with pytest.raises(ValueError):
            sample_subpixel_patch(checker(8, 8), 8, np.random.default_rng(0))

    def test_seeded_rng_reproduces(self):
        img = checker(12, 12)
        a = sample_subpixel_patch(img, 4, np.random.default_rng(42))
        b = sample_subpixel_patch(img, 4, np.random.default_rng(42))
        np.testing.assert_array_equal(a.coords, b.coords)


class TestSsim:
    def test_identical_is_one(self):
        rng = np.random.default_rng(0)
        img = rng.uniform(size=(12, 12, 3))
        assert abs(ssim(img, img) - 1.0) < 1e-12

    def test_noise_ordering(self):
        rng = np.random.default_rng(1)
        img = rng.uniform(0.2, 0.8, size=(16, 16, 3))
        small = np.clip(img + rng.normal(0, 0.01, img.shape), 0, 1)
        big = np.clip(img + rng.normal(0, 0.1, img.shape), 0, 1)
        assert ssim(img, big) < ssim(img, small) < 1.0

    def test_matches_skimage(self):
        skimage = pytest.importorskip("skimage.metrics")
        rng = np.random.default_rng(2)
        a = rng.uniform(size=(20, 24, 3))
        b = np.clip(a + rng.normal(0, 0.05, a.shape), 0, 1)
        ref = skimage.structural_similarity(
            a, b, win_size=3, gaussian_weights=False, use_sample_covariance=False,
            data_range=1.0, channel_axis=2)
        assert abs(ssim(a, b) - ref) < 1e-7

    def test_gray_supported(self):
        rng = np.random.default_rng(3)
        a = rng.uniform(size=(8, 8))
        assert abs(ssim(a, a) - 1.0) < 1e-12

    def test_too_small_raises(self):
        with pytest.raises(ValueError):
            ssim(np.zeros((2, 5, 3)), np.zeros((2, 5, 3)))


class TestPsnr:
    def test_known_mse(self):
        a = np.zeros((4, 4, 3))
        b = np.full((4, 4, 3), 0.1)  # mse 0.01
        assert abs(psnr(a, b) - 20.0) < 1e-12

    def test_identical_is_inf(self):
        a = np.ones((4, 4, 3))
        assert psnr(a, a) == float("inf")


class TestDepthSmoothness:
    def test_constant_depth_is_zero(self):
        rng = np.random.default_rng(0)
        img = rng.uniform(size=(8, 8, 3))
        assert depth_smoothness(np.full((8, 8), 2.0), img) == 0.0

    def test_edge_aware_downweighting(self):
        depth = np.ones((8, 8))
        depth[:, 4:] = 2.0  # depth step at column 4
        flat = np.full((8, 8, 3), 0.5)
        edgy = flat.copy()
        edgy[:, 4:] = 1.0  # image edge aligned with the depth step
        assert depth_smoothness(depth, edgy) < depth_smoothness(depth, flat)

    def test_matches_manual_sum(self):
        rng = np.random.default_rng(5)
        depth = rng.uniform(1, 3, size=(4, 5))
        img = rng.uniform(size=(4, 5, 3))
        dx = np.abs(np.diff(depth, axis=1)) * np.exp(
            -np.abs(np.diff(img, axis=1)).mean(axis=2))
        dy = np.abs(np.diff(depth, axis=0)) * np.exp(
            -np.abs(np.diff(img, axis=0)).mean(axis=2))
        expect = dx.mean() + dy.mean()
        assert abs(depth_smoothness(depth, img) - expect) < 1e-12


class TestMaskRect:
    def test_single_match(self):
        rect = mask_rect_from_matches([(5.0, 7.0)])
        assert (rect.x_min, rect.y_min, rect.x_max, rect.y_max) == (5, 7, 5, 7)
        assert rect.contains((5.0, 7.0))

    def test_floor_ceil_cover(self):
        rect = mask_rect_from_matches([(1.2, 2.7), (3.4, 0.1)])
        assert (rect.x_min, rect.y_min, rect.x_max, rect.y_max) == (1, 0, 4, 3)

    def test_contains_inclusive_edges(self):
        rect = MaskRect(1, 2, 4, 6)
        assert rect.contains((1, 2)) and rect.contains((4, 6))
        assert not rect.contains((0.99, 3)) and not rect.contains((4.01, 3))

    def test_contains_many(self):
        rect = MaskRect(0, 0, 2, 2)
        got = rect.contains_many([(0, 0), (3, 1), (2, 2), (1, 2.5)])
        assert got.tolist() == [True, False, True, False]

    def test_empty_raises(self):
        with pytest.raises(ValueError):
            MaskRect(3, 0, 2, 1)
        with pytest.raises(ValueError):
            mask_rect_from_matches(np.zeros((0, 2)))


class TestPngIO:
    def test_round_trip_quantization(self, tmp_path):
        rng = np.random.default_rng(0)
        img = rng.uniform(size=(6, 5, 3))
        path = tmp_path / "t.png"
        write_png(path, img)
        back = read_png(path)
        assert back.data.shape == (6, 5, 3)
        assert np.abs(back.data - img).max() <= 0.5 / 255 + 1e-9

    def test_exact_for_quantized_values(self, tmp_path):
        img = (np.arange(48).reshape(4, 4, 3) % 256) / 255.0
        path = tmp_path / "t.png"
        write_png(path, img)
        np.testing.assert_array_equal(read_png(path).data, img)


class TestPfmIO:
    def test_round_trip_gray(self, tmp_path):
        rng = np.random.default_rng(1)
        data = rng.normal(size=(5, 7)).astype(np.float32)
        path = tmp_path / "d.pfm"
        write_pfm(path, data)
        np.testing.assert_array_equal(read_pfm(path), data.astype(np.float64))

    def test_round_trip_color(self, tmp_path):
        rng = np.random.default_rng(2)
        data = rng.normal(size=(4, 3, 3)).astype(np.float32)
        path = tmp_path / "c.pfm"
        write_pfm(path, data)
        np.testing.assert_array_equal(read_pfm(path), data.astype(np.float64))

    def test_rows_stored_bottom_first(self, tmp_path):
        data = np.array([[0.0, 1.0], [2.0, 3.0]], dtype=np.float32)
        path = tmp_path / "d.pfm"
        write_pfm(path, data)
        raw = path.read_bytes()
        payload = np.frombuffer(raw[raw.index(b"\n", raw.index(b"-")) + 1:], dtype="<f4")
        np.testing.assert_array_equal(payload, [2.0, 3.0, 0.0, 1.0])

    def test_negative_scale_means_little_endian(self, tmp_path):
        path = tmp_path / "d.pfm"
        write_pfm(path, np.ones((2, 2), dtype=np.float32))
        header = path.read_bytes()[:20].split(b"\n")
        assert float(header[2]) < 0

    def test_big_endian_variant_reads(self, tmp_path):
        data = np.array([[1.5, -2.0]], dtype=">f4")
        path = tmp_path / "be.pfm"
        with open(path, "wb") as fh:
            fh.write(b"Pf\n2 1\n1.0\n")
            fh.write(data.tobytes())
        np.testing.assert_array_equal(read_pfm(path), [[1.5, -2.0]])

    def test_truncated_raises(self, tmp_path):
        path = tmp_path / "bad.pfm"
        path.write_bytes(b"Pf\n4 4\n-1.0\n\x00\x00")
        with pytest.raises(ValueError):
            read_pfm(path)
