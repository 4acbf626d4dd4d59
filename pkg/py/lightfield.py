import enum
import math
import os
import struct
from typing import NamedTuple

import numpy as np
import torch

from config import *
from constants import DTYPE
from geometry import (
    SurfaceCoord,
    angular_param,
    as_vec,
    local_frame,
    normalize,
    sphere_param,
    sphere_point,
)

LF4D_MAGIC = b"LF4D"
LF4D_VERSION = 1
LF4D_HEADER = struct.Struct("<4sHHIIII")


class LF4DFormatError(ValueError):
    pass


class Channels(enum.IntEnum):
    RGB8 = 0
    RGBF32 = 1


class TexelIndex(NamedTuple):
    iu: int
    iv: int
    i_s: int
    i_t: int


class LightFieldTexture:
    """Dense 4D texel array T(u, v, s, t) holding RGB radiance.

    Texels are kept as a (U, V, S, T, 3) tensor, row-major in (u, v, s, t) order
    with the angular dims innermost, so the four angular neighbours of a spatial
    node sit in one contiguous block. RGB8 stores round(255 * c), RGBF32 stores
    float32 radiance.

    Parameters:
        dims (tuple): (U, V, S, T), each at least 2.
        channels (Channels or str): storage format.
        texels: optional initial contents in storage dtype.
    """

    def __init__(self, dims, channels=Channels.RGB8, texels=None):
        dims = tuple(int(n) for n in dims)
        if len(dims) != 4 or min(dims) < 2:
            raise ValueError(f"texture dims must be four sizes >= 2, got {dims}")
        if isinstance(channels, str):
            channels = Channels[channels]
        self.dims = dims
        self.channels = Channels(channels)
        self.dtype = torch.uint8 if self.channels == Channels.RGB8 else torch.float32

        if texels is None:
            texels = torch.zeros(*dims, 3, dtype=self.dtype)
        else:
            texels = torch.as_tensor(texels)
            if texels.numel() != self.texel_count * 3:
                raise ValueError(
                    f"expected {self.texel_count * 3} channel values, got {texels.numel()}"
                )
            texels = texels.to(self.dtype).reshape(*dims, 3).contiguous()
        self.texels = texels
        self.fetch_count = 0

    @classmethod
    def from_colors(cls, colors, channels=Channels.RGB8):
        """Build a texture from a (U, V, S, T, 3) array of linear colors."""
        colors = torch.as_tensor(colors)
        tex = cls(colors.shape[:4], channels)
        tex.texels = tex.encode(colors).reshape(*tex.dims, 3).contiguous()
        return tex

    @property
    def texel_count(self):
        return math.prod(self.dims)

    @property
    def nbytes(self):
        return self.texels.numel() * self.texels.element_size()

    def encode(self, colors):
        colors = torch.as_tensor(colors, dtype=DTYPE).clamp(0.0, 1.0)
        if self.channels == Channels.RGB8:
            return torch.round(colors * 255.0).to(torch.uint8)
        return colors.to(torch.float32)

    def decode(self, raw):
        if self.channels == Channels.RGB8:
            return raw.to(DTYPE) / 255.0
        return raw.to(DTYPE)

    def offset(self, idx):
        U, V, S, T = self.dims
        return ((idx.iu * V + idx.iv) * S + idx.i_s) * T + idx.i_t

    def check_index(self, idx):
        for i, n, name in zip(idx, self.dims, ("u", "v", "s", "t")):
            if not 0 <= i < n:
                raise IndexError(f"texel index {name}={i} outside [0, {n})")

    def gather(self, iu, iv, i_s, i_t):
        """Batched texel read; every texel read is added to `fetch_count`."""
        shape = torch.broadcast_shapes(iu.shape, iv.shape, i_s.shape, i_t.shape)
        self.fetch_count += math.prod(shape)
        return self.decode(self.texels[iu, iv, i_s, i_t])

    def __repr__(self):
        U, V, S, T = self.dims
        return f"LightFieldTexture({U}x{V}x{S}x{T}, {self.channels.name})"


def fetch(tex, idx):
    idx = TexelIndex(*(int(i) for i in idx))
    tex.check_index(idx)
    tex.fetch_count += 1
    return tex.decode(tex.texels[idx.iu, idx.iv, idx.i_s, idx.i_t])


def store(tex, idx, color):
    idx = TexelIndex(*(int(i) for i in idx))
    tex.check_index(idx)
    tex.texels[idx.iu, idx.iv, idx.i_s, idx.i_t] = tex.encode(color)


def grid_coord(index, size, periodic):
    """Node-centred texture coordinate of a grid index.

    The periodic u dim has spacing 1/size (node `size` wraps to node 0); the
    clamped dims span [0, 1] inclusive with spacing 1/(size - 1). Fractional
    (jittered) indices are accepted and wrapped or clamped.
    """
    if isinstance(index, torch.Tensor):
        index = index.to(DTYPE)
        if periodic:
            return torch.remainder(index / size, 1.0)
        return (index / (size - 1)).clamp(0.0, 1.0)
    if periodic:
        return (index / size) % 1.0
    return min(max(index / (size - 1), 0.0), 1.0)


def _periodic_cell(x, size):
    pos = x * size
    base = torch.floor(pos)
    frac = pos - base
    i0 = torch.remainder(base.long(), size)
    return i0, torch.remainder(i0 + 1, size), frac


def _clamped_cell(x, size):
    pos = x.clamp(0.0, 1.0) * (size - 1)
    base = torch.floor(pos).clamp(max=size - 2)
    frac = (pos - base).clamp(0.0, 1.0)
    i0 = base.long()
    return i0, i0 + 1, frac


def _bilerp(c00, c10, c01, c11, fx, fy):
    gx, gy = 1.0 - fx, 1.0 - fy
    return (
        (gx * gy).unsqueeze(-1) * c00
        + (fx * gy).unsqueeze(-1) * c10
        + (gx * fy).unsqueeze(-1) * c01
        + (fx * fy).unsqueeze(-1) * c11
    )


def angular_lerp(tex, iu, iv, a):
    """Bilinear blend over the angular dims at the spatial node (iu, iv)."""
    _, _, S, T = tex.dims
    iu, iv = torch.as_tensor(iu), torch.as_tensor(iv)
    s0, s1, fs = _clamped_cell(as_vec(a.s), S)
    t0, t1, ft = _clamped_cell(as_vec(a.t), T)
    return _bilerp(
        tex.gather(iu, iv, s0, t0),
        tex.gather(iu, iv, s1, t0),
        tex.gather(iu, iv, s0, t1),
        tex.gather(iu, iv, s1, t1),
        fs,
        ft,
    )


def sample_batch(tex, model, P, O, shared_direction=SHARED_VIEW_DIRECTION):
    """Reconstruct the radiance leaving P toward the observer O.

    Locates the four spatial nodes around P (u wraps, v clamps), expresses the
    view direction in each node's local frame, blends four angular texels per
    node and finally blends the four node colors with the spatial weights.
    Exactly 16 texels are fetched per query.

    Args:
        tex (LightFieldTexture): the texture.
        model (ProxyModel): sphere the texture is mapped onto.
        P: (..., 3) points on the sphere.
        O: (3,) or (..., 3) observer positions outside the sphere.
        shared_direction (bool): use the single direction O - P for all four
            nodes instead of recomputing O - P^x per node.

    Returns:
        (..., 3) float64 colors.
    """
    P, O = as_vec(P), as_vec(O)
    U, V, _, _ = tex.dims
    coord = sphere_param(P, model)
    u0, u1, fu = _periodic_cell(coord.u, U)
    v0, v1, fv = _clamped_cell(coord.v, V)
    view = normalize(O - P)

    corners = []
    for iu, iv in ((u0, v0), (u1, v0), (u0, v1), (u1, v1)):
        node = sphere_point(
            SurfaceCoord(grid_coord(iu, U, True), grid_coord(iv, V, False)), model
        )
        frame = local_frame((node - model.center) / model.radius)
        d = view if shared_direction else normalize(O - node)
        corners.append(angular_lerp(tex, iu, iv, angular_param(frame, d, clamp=True)))
    return _bilerp(*corners, fu, fv)


def sample(tex, model, P, O, shared_direction=SHARED_VIEW_DIRECTION):
    return sample_batch(tex, model, as_vec(P).reshape(3), O, shared_direction)


def save_lf4d(tex, path):
    payload = tex.texels.numpy()
    if tex.channels == Channels.RGBF32:
        payload = payload.astype("<f4", copy=False)
    with open(path, "wb") as f:
        f.write(LF4D_HEADER.pack(LF4D_MAGIC, LF4D_VERSION, int(tex.channels), *tex.dims))
        np.ascontiguousarray(payload).tofile(f)


def load_lf4d(path):
    with open(path, "rb") as f:
        header = f.read(LF4D_HEADER.size)
        if len(header) < LF4D_HEADER.size:
            raise LF4DFormatError(f"{path}: truncated header")
        magic, version, code, *dims = LF4D_HEADER.unpack(header)
        if magic != LF4D_MAGIC:
            raise LF4DFormatError(f"{path}: bad magic {magic!r}")
        if version != LF4D_VERSION:
            raise LF4DFormatError(f"{path}: unsupported version {version}")
        try:
            channels = Channels(code)
        except ValueError:
            raise LF4DFormatError(f"{path}: unknown channel code {code}")
        if min(dims) < 2:
            raise LF4DFormatError(f"{path}: invalid dims {tuple(dims)}")

        count = math.prod(dims) * 3
        dtype = np.dtype("u1") if channels == Channels.RGB8 else np.dtype("<f4")
        available = os.fstat(f.fileno()).st_size - LF4D_HEADER.size
        if count * dtype.itemsize > available:
            raise LF4DFormatError(
                f"{path}: header dims {tuple(dims)} need {count * dtype.itemsize} payload bytes, "
                f"file has {available}"
            )
        payload = np.fromfile(f, dtype=dtype, count=count)
        if payload.size != count:
            raise LF4DFormatError(f"{path}: truncated texel payload")
        if f.read(1):
            raise LF4DFormatError(f"{path}: trailing bytes after texel payload")

    payload = payload.astype(payload.dtype.newbyteorder("="), copy=False)
    return LightFieldTexture(dims, channels, torch.from_numpy(payload))
