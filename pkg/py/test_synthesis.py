import numpy as np
import pytest
import torch

from config import *
from scene import Material, Primitive, Scene, load_scene
from synthesis import (
    SynthesisConfig,
    hashed_uniforms,
    supersample_offsets,
    synthesize,
    texel_indices,
    texture_total_variation,
)


def constant_scene(value=0.5):
    """Ambient-only sphere on a background of the same color: every ray sees `value`."""
    color = (value, value, value)
    material = Material(color, ambient=1.0, diffuse=0.0, specular=0.0)
    return Scene((Primitive("sphere", (2.0,), material=material),), background=color)


class TestSupersampleOffsets:
    @pytest.mark.parametrize("mode", ["none", "latin", "tensor"])
    def test_single_sample_is_zero(self, mode):
        offsets = supersample_offsets(1, mode, seed=0)
        assert offsets.shape == (1, 4)
        assert np.all(offsets == 0.0)

    def test_latin_strata(self):
        offsets = supersample_offsets(7, "latin", seed=3)
        assert offsets.shape == (7, 4)
        assert np.all((offsets >= -0.5) & (offsets < 0.5))
        for k in range(4):
            bins = np.floor((offsets[:, k] + 0.5) * 7).astype(int)
            assert sorted(bins.tolist()) == list(range(7))

    def test_tensor_grid(self):
        offsets = supersample_offsets(2, "tensor", seed=0)
        assert offsets.shape == (16, 4)
        cells = {tuple(c) for c in np.floor((offsets + 0.5) * 2).astype(int).tolist()}
        assert len(cells) == 16

    def test_per_texel_streams(self):
        ids = np.arange(100)
        batch = supersample_offsets(5, "latin", seed=9, texel_ids=ids)
        assert batch.shape == (100, 5, 4)
        # each texel's offsets do not depend on its neighbours in the batch
        assert np.array_equal(batch[40], supersample_offsets(5, "latin", 9, texel_ids=[40])[0])
        assert not np.array_equal(batch[0], batch[1])

    def test_seed_changes_jitter(self):
        a = supersample_offsets(4, "latin", seed=1)
        b = supersample_offsets(4, "latin", seed=2)
        assert not np.array_equal(a, b)

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            supersample_offsets(0, "latin", 0)
        with pytest.raises(ValueError):
            supersample_offsets(2, "random", 0)


class TestHashing:
    def test_uniform_range_and_repeatability(self):
        u = hashed_uniforms(5, np.arange(1000), stream=0, count=8)
        assert u.shape == (1000, 8)
        assert np.all((u >= 0.0) & (u < 1.0))
        assert np.array_equal(u, hashed_uniforms(5, np.arange(1000), stream=0, count=8))
        assert abs(u.mean() - 0.5) < 0.02

    def test_texel_indices_layout(self):
        dims = (4, 3, 2, 5)
        ids = np.arange(np.prod(dims))
        assert np.array_equal(texel_indices(ids, dims), np.stack(np.unravel_index(ids, dims), axis=-1))


class TestSynthesisConfig:
    def test_rays_per_texel(self):
        assert SynthesisConfig((4, 4, 4, 4), 7, "latin").rays_per_texel == 7
        assert SynthesisConfig((4, 4, 4, 4), 3, "tensor").rays_per_texel == 81
        assert SynthesisConfig((4, 4, 4, 4), 7, "none").rays_per_texel == 1

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(dims=(4, 4, 1, 4)),
            dict(dims=(4, 4, 4)),
            dict(dims=(4, 4, 4, 4), supersample=0),
            dict(dims=(4, 4, 4, 4), mode="random"),
            dict(dims=(4, 4, 4, 4), channels="RGB16"),
        ],
    )
    def test_rejects_invalid(self, kwargs):
        with pytest.raises(ValueError):
            SynthesisConfig(**kwargs)


class TestSynthesize:
    @pytest.fixture
    def composed(self):
        return load_scene(COMPOSED_SCENE_PATH)

    def test_empty_scene_is_background(self):
        scene = Scene((), background=(0.2, 0.4, 0.6))
        tex = synthesize(scene, SynthesisConfig((4, 4, 2, 2), 1, "none"), progress=False)
        assert tex.texel_count == 64
        assert torch.all(tex.texels == torch.tensor([51, 102, 153], dtype=torch.uint8))

    @pytest.mark.parametrize("mode, n", [("none", 1), ("latin", 5), ("tensor", 2)])
    def test_constant_scene_is_exact(self, mode, n):
        config = SynthesisConfig((8, 4, 3, 3), n, mode, channels="RGBF32")
        tex = synthesize(constant_scene(0.5), config, progress=False)
        assert torch.all(tex.texels == 0.5)

    def test_sees_the_scene(self, composed):
        tex = synthesize(composed, SynthesisConfig((16, 8, 4, 4), 1, "none"), progress=False)
        assert tex.texels.float().std() > 0
        assert tex.texels.max() > 0

    def test_deterministic(self, composed):
        config = SynthesisConfig((8, 4, 4, 4), 3, "latin", seed=11)
        a = synthesize(composed, config, progress=False)
        b = synthesize(composed, config, progress=False)
        assert torch.equal(a.texels, b.texels)

    def test_thread_count_does_not_change_bytes(self, composed, monkeypatch):
        monkeypatch.setattr("synthesis.SYNTH_CHUNK_TEXELS", 3 * 64)
        config = SynthesisConfig((8, 4, 4, 4), 3, "latin", seed=2)
        one = synthesize(composed, config, threads=1, progress=False)
        many = synthesize(composed, config, threads=3, progress=False)
        assert torch.equal(one.texels, many.texels)

    def test_supersampling_smooths(self, composed):
        dims = (16, 8, 8, 8)
        plain = synthesize(composed, SynthesisConfig(dims, 1, "none"), progress=False)
        smooth = synthesize(composed, SynthesisConfig(dims, 4, "latin"), progress=False)
        assert texture_total_variation(smooth) <= texture_total_variation(plain)


class TestTotalVariation:
    def test_constant_is_zero(self):
        tex = synthesize(constant_scene(0.3), SynthesisConfig((4, 4, 2, 2), 1, "none"), progress=False)
        assert texture_total_variation(tex) == 0.0

    def test_u_wraps(self):
        from lightfield import LightFieldTexture

        colors = torch.zeros(4, 2, 2, 2, 3, dtype=torch.float64)
        colors[0] = 1.0
        tex = LightFieldTexture.from_colors(colors, "RGBF32")
        # slab 0 differs from slab 1 and, across the seam, from slab 3
        assert texture_total_variation(tex) == pytest.approx(2 * 2 * 2 * 2 * 3)
