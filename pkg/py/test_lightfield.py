import math
import struct

import numpy as np
import pytest
import torch

from geometry import AngularCoord, DomainError, ProxyModel, normalize
from lightfield import (
    LF4D_HEADER,
    Channels,
    LF4DFormatError,
    LightFieldTexture,
    TexelIndex,
    angular_lerp,
    fetch,
    grid_coord,
    load_lf4d,
    sample,
    sample_batch,
    save_lf4d,
    store,
)


def naive_sample(texels, radius, P, O):
    """Scalar reference: the seven reconstruction steps written out with `math`."""
    U, V, S, T = texels.shape[:4]

    def sub(a, b):
        return [a[0] - b[0], a[1] - b[1], a[2] - b[2]]

    def dotp(a, b):
        return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]

    def unit(a):
        n = math.sqrt(dotp(a, a))
        return [a[0] / n, a[1] / n, a[2] / n]

    def crossp(a, b):
        return [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]

    def cell(x, n):
        pos = min(max(x, 0.0), 1.0) * (n - 1)
        i0 = min(int(math.floor(pos)), n - 2)
        return i0, pos - i0

    x, y, z = P
    u = (math.atan2(x, z) + math.pi) / (2 * math.pi)
    v = (math.asin(max(-1.0, min(1.0, y / math.sqrt(x * x + y * y + z * z)))) + math.pi / 2) / math.pi
    fu = u * U
    u0 = int(math.floor(fu))
    wu = fu - u0
    u0 %= U
    v0, wv = cell(v, V)

    colors = {}
    for iu, iv in ((u0, v0), ((u0 + 1) % U, v0), (u0, v0 + 1), ((u0 + 1) % U, v0 + 1)):
        theta = 2 * math.pi * iu / U - math.pi
        phi = math.pi * iv / (V - 1) - math.pi / 2
        cos_phi = 0.0 if iv in (0, V - 1) else math.cos(phi)
        N = [cos_phi * math.sin(theta), math.sin(phi), cos_phi * math.cos(theta)]
        node = [radius * c for c in N]
        side = crossp([0.0, 1.0, 0.0], N)
        if math.sqrt(dotp(side, side)) < 1e-6:
            e_x = unit([1.0 - N[0] * N[0], -N[0] * N[1], -N[0] * N[2]])
        else:
            e_x = unit(side)
        e_y = crossp(N, e_x)

        d = unit(sub(O, node))
        if dotp(d, N) < -1e-6:
            dn = dotp(d, N)
            d = unit([d[k] - dn * N[k] for k in range(3)])
        dy = dotp(d, e_y)
        p = [d[k] - dy * e_y[k] for k in range(3)]
        p_len = math.sqrt(dotp(p, p))
        s = 0.5 if p_len < 1e-9 else (math.asin(max(-1.0, min(1.0, dotp(e_x, p) / p_len))) + math.pi / 2) / math.pi
        t = (math.asin(max(-1.0, min(1.0, dy))) + math.pi / 2) / math.pi

        s0, ws = cell(s, S)
        t0, wt = cell(t, T)
        c = (
            (1 - ws) * (1 - wt) * texels[iu, iv, s0, t0]
            + ws * (1 - wt) * texels[iu, iv, s0 + 1, t0]
            + (1 - ws) * wt * texels[iu, iv, s0, t0 + 1]
            + ws * wt * texels[iu, iv, s0 + 1, t0 + 1]
        )
        colors[(iu, iv)] = c

    c00, c10 = colors[(u0, v0)], colors[((u0 + 1) % U, v0)]
    c01, c11 = colors[(u0, v0 + 1)], colors[((u0 + 1) % U, v0 + 1)]
    return (
        (1 - wu) * (1 - wv) * c00 + wu * (1 - wv) * c10 + (1 - wu) * wv * c01 + wu * wv * c11
    )


class TestGridCoord:
    @pytest.mark.parametrize(
        "index, size, periodic, expected",
        [(0, 32, False, 0.0), (31, 32, False, 1.0), (512, 1024, True, 0.5), (0, 8, True, 0.0)],
    )
    def test_examples(self, index, size, periodic, expected):
        assert grid_coord(index, size, periodic) == pytest.approx(expected)

    def test_periodic_wraps(self):
        assert grid_coord(torch.tensor([8.0]), 8, True).item() == 0.0

    def test_clamped_jitter(self):
        coords = grid_coord(torch.tensor([-0.4, 7.4]), 8, False)
        assert coords.tolist() == [0.0, 1.0]


class TestTexture:
    @pytest.fixture
    def tex(self):
        g = torch.Generator().manual_seed(0)
        return LightFieldTexture.from_colors(
            torch.rand(4, 3, 2, 5, 3, generator=g, dtype=torch.float64), Channels.RGBF32
        )

    def test_dims_validated(self):
        with pytest.raises(ValueError):
            LightFieldTexture((4, 1, 2, 2))

    def test_offset_layout(self, tex):
        U, V, S, T = tex.dims
        idx = TexelIndex(3, 2, 1, 4)
        assert tex.offset(idx) == ((3 * V + 2) * S + 1) * T + 4
        flat = tex.texels.reshape(-1, 3)
        assert torch.equal(flat[tex.offset(idx)], tex.texels[3, 2, 1, 4])

    def test_first_and_last(self, tex):
        flat = tex.texels.reshape(-1, 3).to(torch.float64)
        assert torch.equal(fetch(tex, (0, 0, 0, 0)), flat[0])
        assert torch.equal(fetch(tex, (3, 2, 1, 4)), flat[-1])

    def test_out_of_bounds(self, tex):
        with pytest.raises(IndexError):
            fetch(tex, (4, 0, 0, 0))
        with pytest.raises(IndexError):
            store(tex, (0, 0, -1, 0), (0.0, 0.0, 0.0))

    def test_store_then_fetch(self):
        tex = LightFieldTexture((4, 4, 4, 4), Channels.RGB8)
        rng = np.random.default_rng(7)
        for _ in range(50):
            idx = tuple(int(i) for i in rng.integers(0, 4, size=4))
            color = (rng.integers(0, 256, size=3) / 255.0).tolist()
            store(tex, idx, color)
            assert torch.allclose(fetch(tex, idx), torch.tensor(color, dtype=torch.float64))

    def test_rgb8_encoding_rounds_and_clamps(self):
        tex = LightFieldTexture((2, 2, 2, 2), "RGB8")
        store(tex, (0, 0, 0, 0), (0.5, -1.0, 2.0))
        assert tex.texels[0, 0, 0, 0].tolist() == [128, 0, 255]

    def test_fetch_counter(self, tex):
        before = tex.fetch_count
        fetch(tex, (0, 0, 0, 0))
        assert tex.fetch_count == before + 1


class TestAngularLerp:
    @pytest.fixture
    def tex(self):
        g = torch.Generator().manual_seed(1)
        return LightFieldTexture.from_colors(
            torch.rand(2, 2, 5, 5, 3, generator=g, dtype=torch.float64), Channels.RGBF32
        )

    def test_on_node(self, tex):
        c = angular_lerp(tex, 1, 0, AngularCoord(torch.tensor(0.5), torch.tensor(0.25)))
        assert torch.equal(c, tex.decode(tex.texels[1, 0, 2, 1]))

    def test_cell_midpoint_is_mean(self, tex):
        c = angular_lerp(tex, 0, 1, AngularCoord(torch.tensor(0.125), torch.tensor(0.625)))
        corners = tex.decode(tex.texels[0, 1, 0:2, 2:4]).reshape(4, 3)
        assert torch.allclose(c, corners.mean(dim=0))

    def test_four_fetches(self, tex):
        before = tex.fetch_count
        angular_lerp(tex, 0, 0, AngularCoord(torch.tensor(0.3), torch.tensor(0.7)))
        assert tex.fetch_count - before == 4


class TestSample:
    @pytest.fixture
    def model(self):
        return ProxyModel.from_diameter((0.0, 0.0, 0.0), 7.0)

    @pytest.fixture
    def random_tex(self):
        g = torch.Generator().manual_seed(2)
        return LightFieldTexture.from_colors(
            torch.rand(16, 8, 8, 8, 3, generator=g, dtype=torch.float64), Channels.RGBF32
        )

    @pytest.fixture
    def queries(self, model):
        g = torch.Generator().manual_seed(3)
        n = 10_000
        N = normalize(torch.randn(n, 3, generator=g, dtype=torch.float64))
        P = model.radius * N
        out = normalize(N + 0.8 * torch.randn(n, 3, generator=g, dtype=torch.float64))
        out = torch.where((out * N).sum(-1, keepdim=True) > 0.05, out, N)
        O = P + (1.0 + 10.0 * torch.rand(n, 1, generator=g, dtype=torch.float64)) * out
        return P, O

    def test_constant_texture(self, model, queries):
        tex = LightFieldTexture.from_colors(torch.full((8, 4, 4, 4, 3), 0.25), Channels.RGBF32)
        P, O = queries
        assert torch.allclose(sample_batch(tex, model, P, O), torch.full_like(P, 0.25))

    def test_exact_node(self, model):
        g = torch.Generator().manual_seed(4)
        tex = LightFieldTexture.from_colors(
            torch.rand(8, 5, 5, 5, 3, generator=g, dtype=torch.float64), Channels.RGBF32
        )
        c = sample(tex, model, (0.0, 0.0, 3.5), (0.0, 0.0, 8.5))
        assert torch.equal(c, tex.decode(tex.texels[4, 2, 2, 2]))

    def test_sixteen_fetches_per_query(self, model, random_tex, queries):
        P, O = queries
        before = random_tex.fetch_count
        sample(random_tex, model, P[0], O[0])
        assert random_tex.fetch_count - before == 16
        sample_batch(random_tex, model, P[:100], O[:100])
        assert random_tex.fetch_count - before == 16 + 16 * 100

    def test_matches_naive_reference(self, model, random_tex, queries):
        P, O = queries
        got = sample_batch(random_tex, model, P, O)
        texels = random_tex.decode(random_tex.texels).numpy()
        for k in range(P.shape[0]):
            want = naive_sample(texels, model.radius, P[k].tolist(), O[k].tolist())
            assert np.max(np.abs(got[k].numpy() - want)) < 1e-6

    def test_within_fetched_range(self, model, random_tex, queries):
        P, O = queries
        got = sample_batch(random_tex, model, P, O)
        lo = random_tex.decode(random_tex.texels).amin(dim=(0, 1, 2, 3))
        hi = random_tex.decode(random_tex.texels).amax(dim=(0, 1, 2, 3))
        assert torch.all(got >= lo - 1e-12) and torch.all(got <= hi + 1e-12)

    def test_shared_direction_variant(self, model, random_tex, queries):
        P, O = queries
        shared = sample_batch(random_tex, model, P[:64], O[:64], shared_direction=True)
        assert shared.shape == (64, 3)
        assert torch.all((shared >= 0.0) & (shared <= 1.0))

    def test_off_surface_point_rejected(self, model, random_tex):
        with pytest.raises(DomainError):
            sample(random_tex, model, (0.0, 0.0, 3.0), (0.0, 0.0, 8.0))


class TestLF4D:
    @pytest.fixture(params=[Channels.RGB8, Channels.RGBF32])
    def tex(self, request):
        g = torch.Generator().manual_seed(5)
        return LightFieldTexture.from_colors(
            torch.rand(6, 4, 3, 2, 3, generator=g, dtype=torch.float64), request.param
        )

    def test_round_trip(self, tex, tmp_path):
        path = tmp_path / "tex.lf4d"
        save_lf4d(tex, path)
        loaded = load_lf4d(path)
        assert loaded.dims == tex.dims
        assert loaded.channels == tex.channels
        assert torch.equal(loaded.texels, tex.texels)
        bytes_per_value = 1 if tex.channels == Channels.RGB8 else 4
        assert path.stat().st_size == LF4D_HEADER.size + tex.texel_count * 3 * bytes_per_value

    def test_sample_survives_round_trip(self, tex, tmp_path):
        model = ProxyModel.from_diameter((0.0, 0.0, 0.0), 7.0)
        path = tmp_path / "tex.lf4d"
        save_lf4d(tex, path)
        P = torch.tensor([0.0, 1.0, math.sqrt(3.5 ** 2 - 1.0)], dtype=torch.float64)
        O = torch.tensor([1.0, 2.0, 9.0], dtype=torch.float64)
        assert torch.equal(sample(load_lf4d(path), model, P, O), sample(tex, model, P, O))

    def test_header_layout(self, tex, tmp_path):
        path = tmp_path / "tex.lf4d"
        save_lf4d(tex, path)
        magic, version, code, *dims = struct.unpack("<4sHHIIII", path.read_bytes()[:24])
        assert (magic, version, code, tuple(dims)) == (b"LF4D", 1, int(tex.channels), tex.dims)

    @pytest.mark.parametrize(
        "mutate",
        [
            lambda b: b"XXXX" + b[4:],
            lambda b: b[:4] + struct.pack("<H", 2) + b[6:],
            lambda b: b[:6] + struct.pack("<H", 9) + b[8:],
            lambda b: b[:-1],
            lambda b: b + b"\0",
            lambda b: b[:10],
            lambda b: b[:8] + struct.pack("<IIII", 65535, 65535, 65535, 65535) + b[24:54],
            lambda b: b[:8] + struct.pack("<IIII", 4096, 2048, 64, 64) + b[24:],
        ],
    )
    def test_rejects_malformed(self, tex, tmp_path, mutate):
        path = tmp_path / "tex.lf4d"
        save_lf4d(tex, path)
        path.write_bytes(mutate(path.read_bytes()))
        with pytest.raises(LF4DFormatError):
            load_lf4d(path)
