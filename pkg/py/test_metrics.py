import json
import math

import numpy as np
import pytest

from metrics import (
    MetricReport,
    compare_images,
    format_report,
    gradient_energy,
    luminance,
    mse,
    psnr,
    report_to_json,
)


class TestPSNR:
    @pytest.fixture
    def noise(self):
        return np.random.default_rng(0).integers(0, 256, size=(16, 12, 3), dtype=np.uint8)

    def test_identical_is_infinite(self, noise):
        assert psnr(noise, noise) == math.inf

    def test_black_vs_white(self):
        black = np.zeros((4, 4, 3), dtype=np.uint8)
        white = np.full((4, 4, 3), 255, dtype=np.uint8)
        assert psnr(black, white) == pytest.approx(0.0)

    def test_checkerboard_vs_blur(self):
        board = (np.indices((4, 4)).sum(axis=0) % 2 * 255).astype(np.uint8)
        blurred = board.copy()
        blurred[board == 255] = 254
        blurred[board == 0] = 1
        assert mse(board, blurred) == pytest.approx(1.0)
        assert psnr(board, blurred) == pytest.approx(10 * math.log10(255 ** 2))

    def test_symmetric(self, noise):
        other = np.random.default_rng(1).integers(0, 256, size=noise.shape, dtype=np.uint8)
        assert psnr(noise, other) == psnr(other, noise)

    def test_single_pixel_makes_finite(self, noise):
        other = noise.copy()
        other[3, 4, 1] ^= 1
        value = psnr(noise, other)
        assert math.isfinite(value)
        assert value == pytest.approx(10 * math.log10(255 ** 2 * noise.size))

    def test_no_uint8_wraparound(self):
        a = np.zeros((1, 1, 3), dtype=np.uint8)
        b = np.full((1, 1, 3), 10, dtype=np.uint8)
        assert mse(a, b) == 100.0

    def test_size_mismatch(self, noise):
        with pytest.raises(ValueError):
            psnr(noise, noise[:-1])


class TestGradientEnergy:
    def test_constant_is_zero(self):
        assert gradient_energy(np.full((8, 8, 3), 77.0)) == 0.0

    def test_step_edge_linear_in_height(self):
        def edge(h):
            img = np.zeros((6, 10, 3))
            img[:, 5:] = h
            return img

        assert gradient_energy(edge(40.0)) == pytest.approx(2 * gradient_energy(edge(20.0)))
        # two central-difference columns of h/2 out of ten
        assert gradient_energy(edge(20.0)) == pytest.approx(2 * 10.0 / 10)

    def test_blur_lowers_energy(self):
        rng = np.random.default_rng(3)
        img = rng.uniform(0, 255, size=(32, 32, 3))
        padded = np.pad(img, ((1, 1), (1, 1), (0, 0)), mode="edge")
        blurred = sum(
            padded[1 + dy : 33 + dy, 1 + dx : 33 + dx] for dy in (-1, 0, 1) for dx in (-1, 0, 1)
        ) / 9.0
        assert gradient_energy(blurred) < gradient_energy(img)

    def test_invariant_under_offset(self):
        img = np.random.default_rng(4).uniform(0, 200, size=(10, 10, 3))
        assert gradient_energy(img + 30.0) == pytest.approx(gradient_energy(img))

    def test_region(self):
        img = np.zeros((10, 10, 3))
        img[:, 5:] = 100.0
        assert gradient_energy(img, (0, 0, 3, 10)) == 0.0
        assert gradient_energy(img, (4, 0, 6, 10)) == pytest.approx(50.0)

    @pytest.mark.parametrize("region", [(0, 0, 11, 5), (3, 3, 3, 5), (-1, 0, 2, 2)])
    def test_region_out_of_bounds(self, region):
        with pytest.raises(ValueError):
            gradient_energy(np.zeros((10, 10, 3)), region)

    def test_luminance_weights(self):
        pixel = np.array([[[1.0, 0.0, 0.0]]])
        assert luminance(pixel)[0, 0] == pytest.approx(0.2126)


class TestReport:
    @pytest.fixture
    def images(self):
        rng = np.random.default_rng(5)
        a = rng.integers(0, 256, size=(20, 20, 3), dtype=np.uint8)
        b = a.copy()
        b[:10] = 0
        return a, b

    def test_compare_with_regions(self, images):
        a, b = images
        report = compare_images(a, b, regions=[(0, 10, 20, 20), (0, 0, 20, 10)])
        assert isinstance(report, MetricReport)
        assert report.psnr == pytest.approx(10 * math.log10(255 ** 2 / report.mse))
        assert report.regions[(0, 10, 20, 20)].psnr == math.inf
        assert math.isfinite(report.regions[(0, 0, 20, 10)].psnr)

    def test_key_value_line(self, images):
        a, _ = images
        line = format_report(compare_images(a, a, regions=[(0, 0, 5, 5)]))
        assert "\n" not in line
        fields = dict(item.split("=") for item in line.split())
        assert fields["psnr"] == "inf"
        assert fields["region[0,0,5,5].mse"] == "0.000000"

    def test_json_marks_infinity(self, images):
        a, b = images
        doc = json.loads(report_to_json(compare_images(a, a)))
        assert doc["psnr"] == "inf"
        doc = json.loads(report_to_json(compare_images(a, b, regions=[(0, 0, 4, 4)])))
        assert isinstance(doc["psnr"], float)
        assert doc["regions"][0]["region"] == [0, 0, 4, 4]
