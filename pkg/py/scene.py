import json
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import NamedTuple

import torch
from scipy.spatial.transform import Rotation

from config import *
from constants import DTYPE
from geometry import ProxyModel, Ray, as_vec, dot, normalize

SHAPES = ("sphere", "cube", "cylinder")
SHAPE_DIMS = {
    "sphere": ("diameter",),
    "cube": ("side",),
    "cylinder": ("diameter", "height"),
}


class SceneParseError(ValueError):
    pass


@dataclass(frozen=True)
class Material:
    albedo: tuple
    ambient: float = AMBIENT
    diffuse: float = DIFFUSE
    specular: float = SPECULAR
    shininess: float = SHININESS

    def __post_init__(self):
        for name in ("ambient", "diffuse", "specular"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} coefficient {value} outside [0, 1]")
        if not self.shininess > 0:
            raise ValueError(f"shininess must be positive, got {self.shininess}")


@dataclass(frozen=True)
class Primitive:
    """A sphere, cube or cylinder placed with a rigid transform.

    Cylinders are capped and stand along their local y axis. `rotation_deg` is
    an extrinsic XYZ Euler rotation in degrees.
    """

    shape: str
    dims: tuple
    position: tuple = (0.0, 0.0, 0.0)
    rotation_deg: tuple = (0.0, 0.0, 0.0)
    material: Material = field(default_factory=lambda: Material(NAMED_COLORS["white"]))
    name: str = ""

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValueError(f"unknown shape {self.shape!r}")
        if len(self.dims) != len(SHAPE_DIMS[self.shape]) or min(self.dims) <= 0:
            raise ValueError(f"{self.shape} needs positive {SHAPE_DIMS[self.shape]}")
        if not all(math.isfinite(a) for a in self.rotation_deg):
            raise ValueError("rotation angles must be finite")

    @cached_property
    def matrix(self):
        return Rotation.from_euler("xyz", self.rotation_deg, degrees=True).as_matrix().tolist()

    @cached_property
    def origin(self):
        return as_vec(self.position)

    @property
    def bounding_radius(self):
        if self.shape == "sphere":
            return self.dims[0] / 2.0
        if self.shape == "cube":
            return math.sqrt(3.0) / 2.0 * self.dims[0]
        diameter, height = self.dims
        return math.hypot(diameter / 2.0, height / 2.0)

    @property
    def half_extents(self):
        if self.shape == "cylinder":
            return (self.dims[0] / 2.0, self.dims[1] / 2.0, self.dims[0] / 2.0)
        return (self.dims[0] / 2.0,) * 3

    def to_world(self, v):
        R = self.matrix
        return torch.stack(
            [R[i][0] * v[..., 0] + R[i][1] * v[..., 1] + R[i][2] * v[..., 2] for i in range(3)],
            dim=-1,
        )

    def to_local(self, v):
        R = self.matrix
        return torch.stack(
            [R[0][j] * v[..., 0] + R[1][j] * v[..., 1] + R[2][j] * v[..., 2] for j in range(3)],
            dim=-1,
        )


@dataclass(frozen=True)
class DirectionalLight:
    direction: tuple = (-1.0, 0.0, 0.0)
    intensity: tuple = LIGHT_INTENSITY

    def __post_init__(self):
        length = math.sqrt(sum(c * c for c in self.direction))
        if length == 0:
            raise ValueError("light direction must be non-zero")
        object.__setattr__(self, "direction", tuple(c / length for c in self.direction))


@dataclass(frozen=True)
class Scene:
    primitives: tuple
    light: DirectionalLight = DirectionalLight()
    model: ProxyModel = ProxyModel.from_diameter(MODEL_CENTER, MODEL_DIAMETER)
    background: tuple = BACKGROUND

    @cached_property
    def materials(self):
        """Per-primitive material table as tensors, indexed by hit index."""
        mats = [p.material for p in self.primitives] or [Material(BACKGROUND)]
        return {
            "albedo": torch.tensor([m.albedo for m in mats], dtype=DTYPE),
            "ambient": torch.tensor([m.ambient for m in mats], dtype=DTYPE),
            "diffuse": torch.tensor([m.diffuse for m in mats], dtype=DTYPE),
            "specular": torch.tensor([m.specular for m in mats], dtype=DTYPE),
            "shininess": torch.tensor([m.shininess for m in mats], dtype=DTYPE),
        }


class SceneHit(NamedTuple):
    mask: torch.Tensor
    t: torch.Tensor
    point: torch.Tensor
    normal: torch.Tensor
    index: torch.Tensor


class PlacementVerdict(NamedTuple):
    index: int
    name: str
    verdict: str
    margin: float
    bounding_radius: float
    projection_meets_model: tuple


def _sphere_local(o, d, radius):
    b = dot(o, d)
    c = dot(o, o) - radius * radius
    disc = b * b - c
    root = torch.sqrt(disc.clamp_min(0.0))
    near, far = -b - root, -b + root
    t = torch.where(near >= RAY_T_MIN, near, far)
    t = torch.where((disc >= 0.0) & (t >= RAY_T_MIN), t, torch.full_like(t, math.inf))
    point = o + t.unsqueeze(-1) * d
    return t, point / radius


def _cube_local(o, d, half):
    parallel = d == 0.0
    d_safe = torch.where(parallel, torch.ones_like(d), d)
    ta, tb = (-half - o) / d_safe, (half - o) / d_safe
    lo, hi = torch.minimum(ta, tb), torch.maximum(ta, tb)
    inside = o.abs() <= half
    inf = torch.full_like(lo, math.inf)
    lo = torch.where(parallel, torch.where(inside, -inf, inf), lo)
    hi = torch.where(parallel, torch.where(inside, inf, -inf), hi)

    t_near, near_axis = lo.max(dim=-1)
    t_far, far_axis = hi.min(dim=-1)
    entering = t_near >= RAY_T_MIN
    t = torch.where(entering, t_near, t_far)
    valid = (t_near <= t_far) & (t_far >= RAY_T_MIN)
    t = torch.where(valid, t, torch.full_like(t, math.inf))

    axis = torch.where(entering, near_axis, far_axis)
    sign = torch.sign(d.gather(-1, axis.unsqueeze(-1)).squeeze(-1))
    sign = torch.where(entering, -sign, sign)
    normal = torch.nn.functional.one_hot(axis, 3).to(DTYPE) * sign.unsqueeze(-1)
    return t, normal


def _cylinder_local(o, d, radius, half_height):
    ox, oy, oz = o[..., 0], o[..., 1], o[..., 2]
    dx, dy, dz = d[..., 0], d[..., 1], d[..., 2]
    inf = torch.full_like(ox, math.inf)

    a = dx * dx + dz * dz
    b = ox * dx + oz * dz
    c = ox * ox + oz * oz - radius * radius
    disc = b * b - a * c
    root = torch.sqrt(disc.clamp_min(0.0))
    a_safe = torch.where(a > 0.0, a, torch.ones_like(a))
    candidates, normals = [], []
    for t in ((-b - root) / a_safe, (-b + root) / a_safe):
        y = oy + t * dy
        ok = (a > 0.0) & (disc >= 0.0) & (y.abs() <= half_height) & (t >= RAY_T_MIN)
        candidates.append(torch.where(ok, t, inf))
        hx, hz = ox + t * dx, oz + t * dz
        normals.append(torch.stack([hx / radius, torch.zeros_like(hx), hz / radius], dim=-1))

    dy_safe = torch.where(dy != 0.0, dy, torch.ones_like(dy))
    for cap in (half_height, -half_height):
        t = (cap - oy) / dy_safe
        hx, hz = ox + t * dx, oz + t * dz
        ok = (dy != 0.0) & (hx * hx + hz * hz <= radius * radius) & (t >= RAY_T_MIN)
        candidates.append(torch.where(ok, t, inf))
        cap_normal = torch.tensor([0.0, math.copysign(1.0, cap), 0.0], dtype=DTYPE)
        normals.append(cap_normal.expand_as(o))

    t, which = torch.stack(candidates, dim=-1).min(dim=-1)
    normal = torch.stack(normals, dim=-2)
    normal = normal.gather(-2, which[..., None, None].expand(*which.shape, 1, 3)).squeeze(-2)
    return t, normal


def intersect_primitive(prim, ray):
    """Distance and outward world normal of each ray's nearest hit (inf on miss)."""
    o = prim.to_local(ray.origin - prim.origin)
    d = prim.to_local(ray.direction)
    if o.shape != d.shape:
        o, d = torch.broadcast_tensors(o, d)
    if prim.shape == "sphere":
        t, n = _sphere_local(o, d, prim.dims[0] / 2.0)
    elif prim.shape == "cube":
        t, n = _cube_local(o, d, prim.dims[0] / 2.0)
    else:
        t, n = _cylinder_local(o, d, prim.dims[0] / 2.0, prim.dims[1] / 2.0)
    return t, prim.to_world(n)


def intersect(scene, ray):
    """Nearest hit over all primitives; ties keep the earlier primitive."""
    origin, direction = torch.broadcast_tensors(as_vec(ray.origin), as_vec(ray.direction))
    ray = Ray(origin, direction)
    best_t = torch.full(origin.shape[:-1], math.inf, dtype=DTYPE)
    best_n = torch.zeros_like(origin)
    best_i = torch.full(origin.shape[:-1], -1, dtype=torch.long)
    for i, prim in enumerate(scene.primitives):
        t, n = intersect_primitive(prim, ray)
        closer = t < best_t
        best_t = torch.where(closer, t, best_t)
        best_n = torch.where(closer.unsqueeze(-1), n, best_n)
        best_i = torch.where(closer, torch.full_like(best_i, i), best_i)
    mask = best_i >= 0
    t = torch.where(mask, best_t, torch.zeros_like(best_t))
    point = origin + t.unsqueeze(-1) * direction
    return SceneHit(mask, best_t, point, best_n, best_i)


def shade(hit, scene, view):
    """Local illumination at hit points.

    c = k_a albedo + k_d max(0, N.L) albedo * I + k_s max(0, N.H)^n I, where L
    points toward the light and H is the halfway vector between L and `view`
    (unit vectors toward the viewer). Diffuse and specular vanish when the
    shadow ray toward the light is blocked.
    """
    mats = scene.materials
    index = hit.index.clamp_min(0)
    albedo = mats["albedo"][index]
    intensity = as_vec(scene.light.intensity)
    to_light = -as_vec(scene.light.direction)
    normal = hit.normal

    n_dot_l = dot(normal, to_light).clamp_min(0.0)
    halfway = normalize(to_light + as_vec(view))
    n_dot_h = dot(normal, halfway).clamp_min(0.0)

    diffuse = (mats["diffuse"][index] * n_dot_l).unsqueeze(-1) * albedo * intensity
    specular = (mats["specular"][index] * n_dot_h ** mats["shininess"][index]).unsqueeze(-1) * intensity
    if HARD_SHADOWS:
        shadow_origin = hit.point + SHADOW_BIAS * normal
        blocked = intersect(scene, Ray(shadow_origin, to_light.expand_as(shadow_origin))).mask
        lit = (~blocked).to(DTYPE).unsqueeze(-1)
        diffuse, specular = diffuse * lit, specular * lit
    color = mats["ambient"][index].unsqueeze(-1) * albedo + diffuse + specular
    return color.clamp(0.0, 1.0)


def trace(scene, ray):
    origin, direction = torch.broadcast_tensors(as_vec(ray.origin), as_vec(ray.direction))
    shape = origin.shape
    origin, direction = origin.reshape(-1, 3), direction.reshape(-1, 3)
    hit = intersect(scene, Ray(origin, direction))
    color = as_vec(scene.background).expand_as(origin).clone()
    m = hit.mask
    if torch.any(m):
        sub = SceneHit(m[m], hit.t[m], hit.point[m], hit.normal[m], hit.index[m])
        color[m] = shade(sub, scene, -direction[m])
    return color.reshape(shape)


def _cone_overlap(observer, center, radius, model):
    to_model = model.center.tolist()
    to_model = [m - o for m, o in zip(to_model, observer)]
    to_obj = [c - o for c, o in zip(center, observer)]
    dist_model = math.sqrt(sum(x * x for x in to_model))
    dist_obj = math.sqrt(sum(x * x for x in to_obj))
    if dist_obj <= radius or dist_model <= model.radius:
        return True
    cos_between = sum(a * b for a, b in zip(to_model, to_obj)) / (dist_model * dist_obj)
    between = math.acos(min(1.0, max(-1.0, cos_between)))
    half_model = math.asin(min(1.0, model.radius / dist_model))
    half_obj = math.asin(min(1.0, radius / dist_obj))
    return between <= half_model + half_obj


def validate_scene(scene, observers=None):
    """Positive-parallax placement check.

    An object whose bounding sphere lies strictly inside the proxy model is
    seen through positive parallax from every outside observer ("unrestricted").
    Anything else is "view-dependent"; the margin is the model radius minus the
    farthest reach of the bounding sphere from the model center (negative when
    the bound pokes out). For each given observer position the verdict also
    says whether the object's projection from that observer meets the model.
    """
    center = scene.model.center.tolist()
    verdicts = []
    for i, prim in enumerate(scene.primitives):
        radius = prim.bounding_radius
        reach = math.dist(prim.position, center) + radius
        margin = scene.model.radius - reach
        verdict = "unrestricted" if margin > 0 else "view-dependent"
        meets = tuple(
            True if verdict == "unrestricted" else _cone_overlap(o, prim.position, radius, scene.model)
            for o in (observers or ())
        )
        verdicts.append(PlacementVerdict(i, prim.name, verdict, margin, radius, meets))
    return verdicts


def rotate_scene(scene, rotation_deg):
    """Rigidly rotate every primitive and the light about the model center."""
    rot = Rotation.from_euler("xyz", rotation_deg, degrees=True)
    center = scene.model.center.tolist()
    primitives = []
    for prim in scene.primitives:
        position = rot.apply([p - c for p, c in zip(prim.position, center)])
        orientation = rot * Rotation.from_euler("xyz", prim.rotation_deg, degrees=True)
        primitives.append(
            replace(
                prim,
                position=tuple(p + c for p, c in zip(position.tolist(), center)),
                rotation_deg=tuple(orientation.as_euler("xyz", degrees=True).tolist()),
            )
        )
    light = replace(scene.light, direction=tuple(rot.apply(scene.light.direction).tolist()))
    return replace(scene, primitives=tuple(primitives), light=light)


def _parse_color(value, where):
    if isinstance(value, str):
        try:
            return NAMED_COLORS[value.lower()]
        except KeyError:
            raise SceneParseError(f"{where}: unknown color name {value!r}")
    if isinstance(value, (int, float)):
        return (float(value),) * 3
    if isinstance(value, list) and len(value) == 3:
        return tuple(float(c) for c in value)
    raise SceneParseError(f"{where}: color must be a name, a number or [r, g, b]")


def _parse_vec(value, where):
    if not (isinstance(value, list) and len(value) == 3):
        raise SceneParseError(f"{where}: expected [x, y, z]")
    return tuple(float(c) for c in value)


def _parse_object(obj, where):
    shape = obj.get("shape")
    if shape not in SHAPES:
        raise SceneParseError(f"{where}: unknown shape {shape!r}")
    dims = obj.get("dims", {})
    try:
        sizes = tuple(float(dims[k]) for k in SHAPE_DIMS[shape])
    except (KeyError, TypeError):
        raise SceneParseError(f"{where}: {shape} needs dims {SHAPE_DIMS[shape]}")

    if "albedo" in obj:
        albedo = _parse_color(obj["albedo"], where)
    else:
        albedo = _parse_color(obj.get("color", "white"), where)
    overrides = obj.get("material", {})
    unknown = set(overrides) - {"ambient", "diffuse", "specular", "shininess"}
    if unknown:
        raise SceneParseError(f"{where}: unknown material keys {sorted(unknown)}")

    try:
        return Primitive(
            shape=shape,
            dims=sizes,
            position=_parse_vec(obj.get("position", [0, 0, 0]), where),
            rotation_deg=_parse_vec(obj.get("rotation_deg", [0, 0, 0]), where),
            material=Material(albedo, **{k: float(v) for k, v in overrides.items()}),
            name=obj.get("name") or (obj["color"] if isinstance(obj.get("color"), str) else shape),
        )
    except ValueError as e:
        raise SceneParseError(f"{where}: {e}")


def scene_from_dict(doc, source="<scene>"):
    if not isinstance(doc, dict):
        raise SceneParseError(f"{source}: scene document must be an object")
    model_doc = doc.get("model", {})
    try:
        model = ProxyModel.from_diameter(
            _parse_vec(model_doc.get("center", list(MODEL_CENTER)), f"{source}: model"),
            float(model_doc.get("diameter", MODEL_DIAMETER)),
        )
        light_doc = doc.get("light", {})
        light = DirectionalLight(
            _parse_vec(light_doc.get("direction", [-1, 0, 0]), f"{source}: light"),
            _parse_color(light_doc.get("intensity", list(LIGHT_INTENSITY)), f"{source}: light"),
        )
    except ValueError as e:
        if isinstance(e, SceneParseError):
            raise
        raise SceneParseError(f"{source}: {e}")
    background = _parse_color(doc.get("background", list(BACKGROUND)), f"{source}: background")
    primitives = tuple(
        _parse_object(obj, f"{source}: objects[{i}]") for i, obj in enumerate(doc.get("objects", []))
    )
    return Scene(primitives, light, model, background)


def load_scene(path):
    with open(path, "r") as f:
        text = f.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise SceneParseError(f"{path}:{e.lineno}:{e.colno}: {e.msg}")
    return scene_from_dict(doc, source=path)
