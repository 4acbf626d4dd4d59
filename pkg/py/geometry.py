import math
from dataclasses import dataclass
from typing import NamedTuple

import torch

from config import *
from constants import DTYPE, WORLD_UP, X_AXIS


class DomainError(ValueError):
    pass


def as_vec(x):
    return torch.as_tensor(x, dtype=DTYPE)


def dot(a, b):
    # component-wise so the result does not depend on the batch layout
    return a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1] + a[..., 2] * b[..., 2]


def cross(a, b):
    return torch.stack(
        [
            a[..., 1] * b[..., 2] - a[..., 2] * b[..., 1],
            a[..., 2] * b[..., 0] - a[..., 0] * b[..., 2],
            a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0],
        ],
        dim=-1,
    )


def norm(v):
    return torch.sqrt(dot(v, v))


def normalize(v):
    return v / norm(v).clamp_min(1e-300).unsqueeze(-1)


class Ray(NamedTuple):
    origin: torch.Tensor
    direction: torch.Tensor

    @classmethod
    def toward(cls, origin, direction):
        return cls(as_vec(origin), normalize(as_vec(direction)))


class SurfaceCoord(NamedTuple):
    u: torch.Tensor
    v: torch.Tensor


class AngularCoord(NamedTuple):
    s: torch.Tensor
    t: torch.Tensor


class SurfaceFrame(NamedTuple):
    e_x: torch.Tensor
    e_y: torch.Tensor
    e_z: torch.Tensor


class SphereHit(NamedTuple):
    mask: torch.Tensor
    t: torch.Tensor
    point: torch.Tensor
    normal: torch.Tensor


@dataclass(frozen=True)
class ProxyModel:
    """The sphere carrying the texture.

    Parameters:
        center: sphere center, anything `torch.as_tensor` accepts.
        radius (float): sphere radius in scene units.
    """

    center: torch.Tensor
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"proxy model radius must be positive, got {self.radius}")
        object.__setattr__(self, "center", as_vec(self.center))
        object.__setattr__(self, "radius", float(self.radius))

    @classmethod
    def from_diameter(cls, center, diameter):
        return cls(center, diameter / 2.0)

    def contains(self, point):
        return norm(as_vec(point) - self.center) < self.radius


def _unit_range(x):
    return x.clamp(0.0, 1.0)


def sphere_param(P, model):
    """Map points on the proxy sphere to (u, v).

    u follows the azimuth atan2(x, z) and v the elevation; both land in [0, 1].
    At the poles u is fixed to 0.5.

    Raises:
        DomainError: if any point is off the sphere by more than the relative
            on-surface tolerance.
    """
    rel = as_vec(P) - model.center
    dist = norm(rel)
    if torch.any(torch.abs(dist - model.radius) > ON_SURFACE_TOL * model.radius):
        raise DomainError("point is not on the proxy sphere")

    theta = torch.atan2(rel[..., 0], rel[..., 2])
    phi = torch.asin((rel[..., 1] / dist).clamp(-1.0, 1.0))
    u = _unit_range((theta + math.pi) / (2.0 * math.pi))
    v = _unit_range((phi + math.pi / 2.0) / math.pi)
    pole = (v <= 0.0) | (v >= 1.0)
    u = torch.where(pole, torch.full_like(u, 0.5), u)
    return SurfaceCoord(u, v)


def sphere_point(coord, model):
    u, v = as_vec(coord.u), as_vec(coord.v)
    theta = 2.0 * math.pi * u - math.pi
    phi = math.pi * v - math.pi / 2.0
    cos_phi = torch.cos(phi)
    cos_phi = torch.where((v <= 0.0) | (v >= 1.0), torch.zeros_like(cos_phi), cos_phi)
    offset = torch.stack(
        [cos_phi * torch.sin(theta), torch.sin(phi), cos_phi * torch.cos(theta)], dim=-1
    )
    return model.center + model.radius * offset


def local_frame(N):
    """Orthonormal right-handed frame with e_z along the normal.

    e_x = (y x e_z)/|y x e_z| and e_y = e_z x e_x. Where the normal is parallel to
    the global up the x axis, made orthogonal to N, replaces y x e_z.
    """
    e_z = as_vec(N)
    side = cross(WORLD_UP, e_z)
    side_len = norm(side)
    fallback = normalize(X_AXIS - dot(X_AXIS, e_z).unsqueeze(-1) * e_z)
    e_x = torch.where(
        (side_len < POLE_FRAME_TOL).unsqueeze(-1),
        fallback,
        side / side_len.clamp_min(1e-300).unsqueeze(-1),
    )
    e_y = cross(e_z, e_x)
    return SurfaceFrame(e_x, e_y, e_z)


def frame_at(P, model):
    return local_frame((as_vec(P) - model.center) / model.radius)


def angular_param(frame, d, clamp=False):
    """Angular coordinates of an outgoing direction in a surface frame.

    Args:
        frame (SurfaceFrame): local frame at the surface point.
        d: unit direction(s), pointing away from the surface.
        clamp (bool): fold directions of the internal hemisphere onto the
            hemisphere boundary instead of raising.

    Returns:
        AngularCoord with s, t in [0, 1].
    """
    d = as_vec(d)
    along_z = dot(d, frame.e_z)
    inward = along_z < -HEMISPHERE_TOL
    if torch.any(inward):
        if not clamp:
            raise DomainError("direction lies in the internal hemisphere")
        boundary = d - along_z.unsqueeze(-1) * frame.e_z
        boundary_len = norm(boundary).unsqueeze(-1)
        folded = torch.where(
            boundary_len > PROJECTION_EPS,
            boundary / boundary_len.clamp_min(1e-300),
            frame.e_z.expand_as(d),
        )
        d = torch.where(inward.unsqueeze(-1), folded, d)

    along_y = dot(d, frame.e_y)
    p = d - along_y.unsqueeze(-1) * frame.e_y
    p_len = norm(p)
    sin_alpha = (dot(frame.e_x, p) / p_len.clamp_min(1e-300)).clamp(-1.0, 1.0)
    s = (torch.asin(sin_alpha) + math.pi / 2.0) / math.pi
    s = torch.where(p_len < PROJECTION_EPS, torch.full_like(s, 0.5), s)
    t = (torch.asin(along_y.clamp(-1.0, 1.0)) + math.pi / 2.0) / math.pi
    return AngularCoord(_unit_range(s), _unit_range(t))


def angular_dir(frame, coord):
    alpha = math.pi * as_vec(coord.s) - math.pi / 2.0
    beta = math.pi * as_vec(coord.t) - math.pi / 2.0
    cos_beta = torch.cos(beta)
    return (
        (cos_beta * torch.sin(alpha)).unsqueeze(-1) * frame.e_x
        + torch.sin(beta).unsqueeze(-1) * frame.e_y
        + (cos_beta * torch.cos(alpha)).unsqueeze(-1) * frame.e_z
    )


def ray_sphere_hit(ray, model):
    """Nearest intersection of rays with the proxy sphere.

    Returns a SphereHit whose `mask` marks the rays that hit; `point` and
    `normal` are only meaningful where the mask is set. Grazing rays with a
    discriminant within GRAZE_TOL of zero count as hits.
    """
    oc = ray.origin - model.center
    b = dot(oc, ray.direction)
    c = dot(oc, oc) - model.radius * model.radius
    disc = b * b - c
    root = torch.sqrt(disc.clamp_min(0.0))
    near, far = -b - root, -b + root
    t = torch.where(near >= RAY_T_MIN, near, far)
    mask = (disc >= -GRAZE_TOL) & (t >= RAY_T_MIN)
    point = ray.origin + t.unsqueeze(-1) * ray.direction
    normal = (point - model.center) / model.radius
    return SphereHit(mask, t, point, normal)
