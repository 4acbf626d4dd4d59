import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np
import torch
from PIL import Image as PILImage

from config import *
from constants import DTYPE, X_AXIS, Z_AXIS
from geometry import Ray, as_vec, cross, dot, norm, normalize, ray_sphere_hit
from lightfield import sample_batch
from parallel import run_chunks
from scene import trace


class ObserverInsideError(ValueError):
    pass


@dataclass(frozen=True)
class Camera:
    """Pinhole camera.

    Parameters:
        position (tuple): observer position.
        direction (tuple): view direction, any non-zero length.
        fov (float): horizontal field of view in degrees.
        size (tuple): (width, height) in pixels.
        up (tuple): up hint for the camera basis.
    """

    position: tuple
    direction: tuple
    fov: float = FOV
    size: tuple = IMAGE_SIZE
    up: tuple = (0.0, 1.0, 0.0)

    def __post_init__(self):
        if not any(c != 0 for c in self.direction):
            raise ValueError("camera direction must be non-zero")
        if not 0.0 < self.fov < 180.0:
            raise ValueError(f"fov must be in (0, 180) degrees, got {self.fov}")
        if min(self.size) < 1:
            raise ValueError(f"image size must be at least 1x1, got {self.size}")

    @property
    def width(self):
        return int(self.size[0])

    @property
    def height(self):
        return int(self.size[1])

    def basis(self):
        forward = normalize(as_vec(self.direction))
        side = cross(forward, as_vec(self.up))
        if norm(side) < POLE_FRAME_TOL:
            side = X_AXIS - dot(X_AXIS, forward) * forward
        if norm(side) < POLE_FRAME_TOL:
            side = Z_AXIS - dot(Z_AXIS, forward) * forward
        right = normalize(side)
        return forward, right, cross(right, forward)

    def describe(self):
        pos = ",".join(f"{c:g}" for c in self.position)
        direction = ",".join(f"{c:g}" for c in self.direction)
        return f"pos={pos} dir={direction} fov={self.fov:g} size={self.width}x{self.height}"


class RenderStats(NamedTuple):
    covered: int
    fetches: int


def _half_extents(cam):
    half_w = math.tan(math.radians(cam.fov) / 2.0)
    return half_w, half_w * cam.height / cam.width


def pixel_directions(cam, px, py):
    forward, right, up = cam.basis()
    half_w, half_h = _half_extents(cam)
    x = ((as_vec(px) + 0.5) / cam.width * 2.0 - 1.0) * half_w
    y = (1.0 - (as_vec(py) + 0.5) / cam.height * 2.0) * half_h
    return normalize(forward + x.unsqueeze(-1) * right + y.unsqueeze(-1) * up)


def primary_ray(cam, px, py):
    if not (0 <= px < cam.width and 0 <= py < cam.height):
        raise IndexError(f"pixel ({px}, {py}) outside {cam.width}x{cam.height}")
    return Ray(as_vec(cam.position), pixel_directions(cam, float(px), float(py)))


def _tile_rays(cam, y0, y1):
    py, px = torch.meshgrid(
        torch.arange(y0, y1, dtype=DTYPE), torch.arange(cam.width, dtype=DTYPE), indexing="ij"
    )
    directions = pixel_directions(cam, px, py)
    return Ray(as_vec(cam.position).expand_as(directions), directions)


def project_point(cam, X):
    """Continuous pixel coordinates of a world point, or None behind the camera."""
    forward, right, up = cam.basis()
    rel = as_vec(X) - as_vec(cam.position)
    depth = dot(rel, forward).item()
    if depth <= 0:
        return None
    half_w, half_h = _half_extents(cam)
    x = dot(rel, right).item() / depth / half_w
    y = dot(rel, up).item() / depth / half_h
    return (x + 1.0) / 2.0 * cam.width - 0.5, (1.0 - y) / 2.0 * cam.height - 0.5


def primitive_screen_box(cam, prim):
    """Pixel rectangle (x0, y0, x1, y1), end-exclusive, covering a primitive's box."""
    hx, hy, hz = prim.half_extents
    corners = torch.tensor(
        [[sx * hx, sy * hy, sz * hz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)],
        dtype=DTYPE,
    )
    corners = prim.to_world(corners) + prim.origin
    projected = [project_point(cam, c) for c in corners]
    if any(p is None for p in projected):
        return 0, 0, cam.width, cam.height
    xs, ys = [p[0] for p in projected], [p[1] for p in projected]
    x0 = min(max(int(math.floor(min(xs))), 0), cam.width)
    y0 = min(max(int(math.floor(min(ys))), 0), cam.height)
    x1 = min(max(int(math.ceil(max(xs))) + 1, 0), cam.width)
    y1 = min(max(int(math.ceil(max(ys))) + 1, 0), cam.height)
    return x0, y0, x1, y1


_job = {}


def _init_render(job):
    _job.clear()
    _job.update(job)


def _view_tile(y0, y1):
    tex, model, cam = _job["tex"], _job["model"], _job["cam"]
    ray = _tile_rays(cam, y0, y1)
    hit = ray_sphere_hit(ray, model)
    tile = as_vec(_job["background"]).expand_as(ray.direction).clone()
    before = tex.fetch_count
    covered = int(hit.mask.sum())
    if covered:
        tile[hit.mask] = sample_batch(
            tex, model, hit.point[hit.mask], ray.origin[hit.mask], _job["shared_direction"]
        )
    return y0, tile.numpy(), RenderStats(covered, tex.fetch_count - before)


def _direct_tile(y0, y1):
    ray = _tile_rays(_job["cam"], y0, y1)
    return y0, trace(_job["scene"], ray).numpy(), RenderStats(0, 0)


def _render_tiles(tile_fn, camera, threads, progress, desc, **job):
    image = np.empty((camera.height, camera.width, 3), dtype=np.float64)
    tasks = [(y, min(y + TILE_ROWS, camera.height)) for y in range(0, camera.height, TILE_ROWS)]
    covered = fetches = 0
    for y0, tile, stats in run_chunks(
        tile_fn,
        tasks,
        threads=threads,
        initializer=_init_render,
        initargs=(job,),
        desc=desc,
        progress=progress,
    ):
        image[y0 : y0 + tile.shape[0]] = tile
        covered += stats.covered
        fetches += stats.fetches
    return image, RenderStats(covered, fetches)


def check_observer(model, position):
    if norm(as_vec(position) - model.center) <= model.radius:
        raise ObserverInsideError(
            "observer must be strictly outside the proxy sphere; "
            "rendering from inside the model is not supported"
        )


def render_view_counted(tex, model, cam, threads=1, shared_direction=SHARED_VIEW_DIRECTION,
                        background=BACKGROUND, progress=False):
    """Texture-based render plus the covered-pixel and texel-fetch counts."""
    check_observer(model, cam.position)
    before = tex.fetch_count
    image, stats = _render_tiles(
        _view_tile, cam, threads, progress, "render",
        tex=tex, model=model, cam=cam, background=background, shared_direction=shared_direction,
    )
    tex.fetch_count = before + stats.fetches
    return image, stats


def render_view(tex, model, cam, threads=1, shared_direction=SHARED_VIEW_DIRECTION,
                background=BACKGROUND, progress=False):
    """Render what an observer at `cam` sees of the textured proxy sphere.

    Pixels whose primary ray misses the sphere get `background`; the others
    reconstruct the radiance at the hit point from the texture.

    Raises:
        ObserverInsideError: if the camera is on or inside the sphere.
    """
    return render_view_counted(tex, model, cam, threads, shared_direction, background, progress)[0]


def render_direct(scene, cam, threads=1, progress=False):
    """Ray trace the scene objects themselves, ignoring the proxy sphere."""
    return _render_tiles(_direct_tile, cam, threads, progress, "direct", scene=scene, cam=cam)[0]


def orbit_frames(cam, model, count):
    """Cameras circling the model center about the vertical axis.

    Frame k turns the template position by 2*pi*k/count about the y axis
    through the model center and aims the camera at the center.
    """
    if count < 1:
        raise ValueError(f"frame count must be at least 1, got {count}")
    center = model.center.tolist()
    frames = []
    for k in range(count):
        angle = 2.0 * math.pi * k / count
        c, s = math.cos(angle), math.sin(angle)

        def turn(v):
            return (v[0] * c - v[2] * s, v[1], v[0] * s + v[2] * c)

        rel = [p - m for p, m in zip(cam.position, center)]
        position = tuple(r + m for r, m in zip(turn(rel), center))
        direction = tuple(m - p for m, p in zip(center, position))
        frames.append(replace(cam, position=position, direction=direction))
    return frames


def encode_image(image, gamma=False):
    """Linear [0, 1] float image to 8-bit: plain clamp, or gamma 2.2 when asked."""
    image = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    if gamma:
        image = image ** (1.0 / GAMMA)
    return np.round(image * 255.0).astype(np.uint8)


def write_ppm(path, pixels):
    PILImage.fromarray(np.ascontiguousarray(pixels, dtype=np.uint8), "RGB").save(path, format="PPM")


def read_ppm(path):
    with PILImage.open(path) as img:
        return np.asarray(img.convert("RGB"))
