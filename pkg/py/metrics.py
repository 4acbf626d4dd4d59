import json
import math
from dataclasses import dataclass, field

import numpy as np

from config import *


@dataclass
class MetricReport:
    """Comparison of an image against a reference.

    `psnr` is math.inf for identical images. `regions` maps (x0, y0, x1, y1)
    rectangles to reports restricted to that window.
    """

    psnr: float
    mse: float
    gradient_energy: float
    reference_gradient_energy: float
    regions: dict = field(default_factory=dict)


def _as_pixels(img):
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        img = img[..., None]
    if img.ndim != 3:
        raise ValueError(f"expected an (H, W, C) image, got shape {img.shape}")
    return img


def _check_region(region, shape):
    if region is None:
        return 0, 0, shape[1], shape[0]
    x0, y0, x1, y1 = (int(c) for c in region)
    if not (0 <= x0 < x1 <= shape[1] and 0 <= y0 < y1 <= shape[0]):
        raise ValueError(f"region {region} outside the {shape[1]}x{shape[0]} image")
    return x0, y0, x1, y1


def mse(a, b):
    a, b = _as_pixels(a), _as_pixels(b)
    if a.shape != b.shape:
        raise ValueError(f"image sizes differ: {a.shape} vs {b.shape}")
    return float(np.mean(np.square(a - b)))


def psnr(a, b, max_value=PIXEL_MAX):
    """Peak signal-to-noise ratio in dB over all channels of two 8-bit images."""
    error = mse(a, b)
    if error == 0.0:
        return math.inf
    return float(10.0 * np.log10(max_value ** 2 / error))


def luminance(img):
    img = _as_pixels(img)
    if img.shape[-1] == 1:
        return img[..., 0]
    return img[..., :3] @ np.asarray(LUMA)


def gradient_energy(img, region=None):
    """Mean central-difference luminance gradient magnitude inside `region`.

    Gradients are taken over the whole image, so pixels on the region border
    still see their outside neighbours.
    """
    lum = luminance(img)
    x0, y0, x1, y1 = _check_region(region, lum.shape)
    gy = np.gradient(lum, axis=0) if lum.shape[0] > 1 else np.zeros_like(lum)
    gx = np.gradient(lum, axis=1) if lum.shape[1] > 1 else np.zeros_like(lum)
    return float(np.mean(np.hypot(gx, gy)[y0:y1, x0:x1]))


def _crop(img, region):
    x0, y0, x1, y1 = region
    return _as_pixels(img)[y0:y1, x0:x1]


def compare_images(a, b, regions=()):
    a, b = _as_pixels(a), _as_pixels(b)
    if a.shape != b.shape:
        raise ValueError(f"image sizes differ: {a.shape} vs {b.shape}")
    report = MetricReport(psnr(a, b), mse(a, b), gradient_energy(a), gradient_energy(b))
    for region in regions:
        region = _check_region(region, a.shape)
        report.regions[region] = MetricReport(
            psnr(_crop(a, region), _crop(b, region)),
            mse(_crop(a, region), _crop(b, region)),
            gradient_energy(a, region),
            gradient_energy(b, region),
        )
    return report


def _fmt(x):
    return "inf" if math.isinf(x) else f"{x:.6f}"


def format_report(report):
    """Single-line key=value record."""
    fields = [
        f"psnr={_fmt(report.psnr)}",
        f"mse={_fmt(report.mse)}",
        f"gradient_energy={_fmt(report.gradient_energy)}",
        f"reference_gradient_energy={_fmt(report.reference_gradient_energy)}",
    ]
    for (x0, y0, x1, y1), sub in report.regions.items():
        key = f"region[{x0},{y0},{x1},{y1}]"
        fields += [
            f"{key}.psnr={_fmt(sub.psnr)}",
            f"{key}.mse={_fmt(sub.mse)}",
            f"{key}.gradient_energy={_fmt(sub.gradient_energy)}",
            f"{key}.reference_gradient_energy={_fmt(sub.reference_gradient_energy)}",
        ]
    return " ".join(fields)


def _report_dict(report):
    return {
        "psnr": "inf" if math.isinf(report.psnr) else report.psnr,
        "mse": report.mse,
        "gradient_energy": report.gradient_energy,
        "reference_gradient_energy": report.reference_gradient_energy,
    }


def report_to_json(report):
    doc = _report_dict(report)
    doc["regions"] = [
        dict(region=list(region), **_report_dict(sub)) for region, sub in report.regions.items()
    ]
    return json.dumps(doc)
