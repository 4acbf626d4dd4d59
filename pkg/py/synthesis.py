import itertools
from dataclasses import dataclass

import numpy as np
import torch

from config import *
from geometry import AngularCoord, Ray, SurfaceCoord, angular_dir, local_frame, sphere_point
from lightfield import Channels, LightFieldTexture, grid_coord
from parallel import run_chunks
from scene import trace

MODES = ("none", "latin", "tensor")

_U64 = np.uint64


@dataclass(frozen=True)
class SynthesisConfig:
    dims: tuple
    supersample: int = SUPERSAMPLE
    mode: str = SUPERSAMPLE_MODE
    seed: int = SEED
    channels: str = CHANNELS

    def __post_init__(self):
        if len(self.dims) != 4 or min(self.dims) < 2:
            raise ValueError(f"texture dims must be four sizes >= 2, got {self.dims}")
        if self.supersample < 1:
            raise ValueError(f"supersample factor must be >= 1, got {self.supersample}")
        if self.mode not in MODES:
            raise ValueError(f"unknown supersample mode {self.mode!r}, expected one of {MODES}")
        if self.channels not in Channels.__members__:
            raise ValueError(f"unknown channel format {self.channels!r}")

    @property
    def rays_per_texel(self):
        if self.mode == "none" or self.supersample == 1:
            return 1
        if self.mode == "latin":
            return self.supersample
        return self.supersample ** 4


def _mix64(x):
    # splitmix64 finaliser; uint64 arrays wrap on overflow
    x = x + _U64(0x9E3779B97F4A7C15)
    x = (x ^ (x >> _U64(30))) * _U64(0xBF58476D1CE4E5B9)
    x = (x ^ (x >> _U64(27))) * _U64(0x94D049BB133111EB)
    return x ^ (x >> _U64(31))


def hashed_uniforms(seed, texel_ids, stream, count):
    """(len(texel_ids), count) uniforms in [0, 1) keyed on (seed, texel, stream, lane).

    Counter-based, so any texel's stream is the same whichever chunk or process
    computes it.
    """
    with np.errstate(over="ignore"):
        key = _mix64(np.array([seed & 0xFFFFFFFFFFFFFFFF], dtype=_U64))
        base = _mix64(np.asarray(texel_ids).astype(_U64) ^ key)
        lanes = (_U64(stream) << _U64(32)) | np.arange(count, dtype=_U64)
        h = _mix64(base[:, None] ^ _mix64(lanes)[None, :])
    return (h >> _U64(11)).astype(np.float64) * 2.0 ** -53


def supersample_offsets(n, mode, seed, texel_ids=None):
    """Jitter offsets in [-0.5, 0.5)^4, in texel units, for each texel.

    "none" (or n == 1) gives the single zero offset; "latin" gives n offsets
    whose values along every dim fall in n distinct strata; "tensor" gives the
    full n^4 stratified grid, jittered inside each cell.

    Returns:
        (m, 4) array when `texel_ids` is None, else (len(texel_ids), m, 4).
    """
    if n < 1:
        raise ValueError(f"supersample factor must be >= 1, got {n}")
    if mode not in MODES:
        raise ValueError(f"unknown supersample mode {mode!r}")
    single = texel_ids is None
    ids = np.zeros(1, dtype=np.int64) if single else np.asarray(texel_ids, dtype=np.int64)

    if mode == "none" or n == 1:
        offsets = np.zeros((len(ids), 1, 4))
    elif mode == "latin":
        dims = []
        for k in range(4):
            strata = np.argsort(hashed_uniforms(seed, ids, 2 * k, n), axis=1, kind="stable")
            dims.append((strata + hashed_uniforms(seed, ids, 2 * k + 1, n)) / n - 0.5)
        offsets = np.stack(dims, axis=-1)
    else:
        cells = np.array(list(itertools.product(range(n), repeat=4)), dtype=np.float64)
        jitter = np.stack([hashed_uniforms(seed, ids, 8 + k, n ** 4) for k in range(4)], axis=-1)
        offsets = (cells[None] + jitter) / n - 0.5
    return offsets[0] if single else offsets


def texel_indices(ids, dims):
    _, V, S, T = dims
    ids = np.asarray(ids, dtype=np.int64)
    return np.stack([ids // (T * S * V), (ids // (T * S)) % V, (ids // T) % S, ids % T], axis=-1)


_scene = None
_config = None


def _init_synthesis(scene, config):
    global _scene, _config
    _scene, _config = scene, config


def _bake_chunk(start, stop):
    U, V, S, T = _config.dims
    model = _scene.model
    ids = np.arange(start, stop, dtype=np.int64)
    offsets = supersample_offsets(_config.supersample, _config.mode, _config.seed, ids)
    lanes = offsets.shape[1]

    pos = torch.from_numpy(texel_indices(ids, _config.dims).astype(np.float64)[:, None, :] + offsets)
    pos = pos.reshape(-1, 4)
    coord = SurfaceCoord(grid_coord(pos[:, 0], U, True), grid_coord(pos[:, 1], V, False))
    P = sphere_point(coord, model)
    frame = local_frame((P - model.center) / model.radius)
    d = angular_dir(frame, AngularCoord(grid_coord(pos[:, 2], S, False), grid_coord(pos[:, 3], T, False)))
    colors = trace(_scene, Ray(P - SYNTH_ORIGIN_NUDGE * d, -d)).reshape(len(ids), lanes, 3)

    total = colors[:, 0]
    for j in range(1, lanes):
        total = total + colors[:, j]
    return start, (total / lanes).numpy()


def synthesize(scene, config, threads=1, progress=True):
    """Bake a scene into a light-field texture.

    Every texel's ray starts on the proxy sphere at its (u, v) node and looks
    inward along the reverse of its (s, t) direction; supersampling averages
    jittered copies of that ray. Work is cut into fixed texel ranges, so the
    result is identical for any thread count.
    """
    tex = LightFieldTexture(config.dims, config.channels)
    chunk = max(1, SYNTH_CHUNK_TEXELS // config.rays_per_texel)
    tasks = [(a, min(a + chunk, tex.texel_count)) for a in range(0, tex.texel_count, chunk)]
    flat = tex.texels.view(-1, 3)
    for start, colors in run_chunks(
        _bake_chunk,
        tasks,
        threads=threads,
        initializer=_init_synthesis,
        initargs=(scene, config),
        desc="synth",
        progress=progress,
    ):
        flat[start : start + len(colors)] = tex.encode(torch.from_numpy(colors))
    return tex


def texture_total_variation(tex):
    """Sum of absolute differences between neighbouring texels along all dims (u wraps)."""
    U = tex.dims[0]
    total = 0.0
    for iu in range(U):
        slab = tex.decode(tex.texels[iu])
        total += (tex.decode(tex.texels[(iu + 1) % U]) - slab).abs().sum().item()
        for axis in range(3):
            total += slab.diff(dim=axis).abs().sum().item()
    return total
