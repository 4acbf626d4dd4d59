import json
import os
import time

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from config import *
from metrics import gradient_energy, psnr
from render import Camera, encode_image, primitive_screen_box, render_direct, render_view, write_ppm
from scene import load_scene
from synthesis import SynthesisConfig, synthesize

EXPERIMENTS = ("aliasing", "resolution-sweep", "resolution-ladder")


def shrink(dims, divisor, count=None):
    """Divide the first `count` dims (all by default), never going below 2."""
    count = len(dims) if count is None else count
    return tuple(max(2, int(n) // divisor) if k < count else int(n) for k, n in enumerate(dims))


def dims_label(dims):
    return "x".join(str(n) for n in dims)


def _require(path):
    if not os.path.isfile(path):
        raise FileNotFoundError(f"missing scene fixture {path}")
    return load_scene(path)


def _union(a, b):
    return min(a[0], b[0]), min(a[1], b[1]), max(a[2], b[2]), max(a[3], b[3])


def run_aliasing(out_dir, full=False, scale=1, size=IMAGE_SIZE, fov=FOV, supersample=SUPERSAMPLE,
                 mode=SUPERSAMPLE_MODE, seed=SEED, threads=1, progress=True, run=None):
    """Bake the near and far cylinder scenes and compare their sharpness.

    Both textures are rendered from the same camera. The energies that decide
    the outcome are measured over one shared window (the union of the two
    cylinders' screen boxes); each placement's own window and its direct render
    energy are reported alongside.
    """
    dims = ALIASING_DIMS if full else shrink(ALIASING_DIMS, 2, count=2)
    dims = shrink(dims, scale)
    config = SynthesisConfig(dims, supersample, mode, seed)
    cam = Camera(*ALIASING_POSE, fov=fov, size=size)
    print(f"aliasing: dims={dims_label(dims)} camera {cam.describe()}")

    scenes = {"near": _require(ALIASING_NEAR_PATH), "far": _require(ALIASING_FAR_PATH)}
    boxes = {k: primitive_screen_box(cam, s.primitives[0]) for k, s in scenes.items()}
    window = _union(boxes["near"], boxes["far"])

    rows = {}
    for label, scene in scenes.items():
        start = time.time()
        tex = synthesize(scene, config, threads=threads, progress=progress)
        view = encode_image(render_view(tex, scene.model, cam, threads=threads, progress=progress))
        direct = encode_image(render_direct(scene, cam, threads=threads, progress=progress))
        write_ppm(os.path.join(out_dir, f"aliasing_{label}_view.ppm"), view)
        write_ppm(os.path.join(out_dir, f"aliasing_{label}_direct.ppm"), direct)
        own = boxes[label]
        rows[label] = {
            "position": list(scene.primitives[0].position),
            "region": list(own),
            "energy": gradient_energy(view, window),
            "own_region_energy": gradient_energy(view, own),
            "direct_energy": gradient_energy(direct, own),
            "psnr_vs_direct": _finite(psnr(view, direct)),
            "seconds": time.time() - start,
        }
        print(f"  {label}: energy={rows[label]['energy']:.4f} "
              f"own_region_energy={rows[label]['own_region_energy']:.4f} "
              f"direct_energy={rows[label]['direct_energy']:.4f}")

    near, far = rows["near"]["energy"], rows["far"]["energy"]
    drop = 1.0 - far / near if near > 0 else 0.0
    report = {
        "experiment": "aliasing",
        "dims": list(dims),
        "supersample": supersample,
        "mode": mode,
        "seed": seed,
        "camera": {"position": list(cam.position), "direction": list(cam.direction),
                   "fov": cam.fov, "size": list(cam.size)},
        "window": list(window),
        "placements": rows,
        "drop": drop,
        "min_drop": ALIASING_MIN_DROP,
        "passed": drop >= ALIASING_MIN_DROP,
    }
    if run is not None:
        run.log({"aliasing/near_energy": near, "aliasing/far_energy": far, "aliasing/drop": drop})
    return report


def _direct_images(scene, cams, threads, progress):
    return [encode_image(render_direct(scene, cam, threads=threads, progress=progress)) for cam in cams]


def _mean_psnr(scene, dims, config_kw, cams, directs, threads, progress):
    tex = synthesize(scene, SynthesisConfig(dims, **config_kw), threads=threads, progress=progress)
    scores = []
    for cam, direct in zip(cams, directs):
        view = encode_image(render_view(tex, scene.model, cam, threads=threads, progress=progress))
        scores.append(psnr(view, direct))
    return scores


def _pose_cameras(size, fov):
    return [Camera(pos, direction, fov=fov, size=size) for pos, direction in RESOLUTION_POSES]


def _finite(x):
    return "inf" if np.isinf(x) else x


def plot_sweep(rows, path):
    fig, ax = plt.subplots(figsize=(7, 4))
    labels = [row["dims"] for row in rows]
    for k in range(len(RESOLUTION_POSES)):
        ax.plot(labels, [min(row["psnr"][k], 99.0) for row in rows], marker="o", alpha=0.5,
                label=f"pose {k + 1}")
    ax.plot(labels, [min(row["mean_psnr"], 99.0) for row in rows], marker="s", color="black",
            linewidth=2, label="mean")
    ax.set_xlabel("U x V x S x T")
    ax.set_ylabel("PSNR vs direct render (dB)")
    ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def run_resolution_sweep(out_dir, full=False, scale=1, size=IMAGE_SIZE, fov=FOV,
                         supersample=SUPERSAMPLE, mode=SUPERSAMPLE_MODE, seed=SEED, threads=1,
                         progress=True, run=None):
    """PSNR of texture renders against direct renders for the four sweep textures."""
    scene = _require(COMPOSED_SCENE_PATH)
    cams = _pose_cameras(size, fov)
    directs = _direct_images(scene, cams, threads, progress)
    config_kw = dict(supersample=supersample, mode=mode, seed=seed)

    rows = []
    for dims in SWEEP_DIMS:
        dims = shrink(dims if full else shrink(dims, 2), scale)
        scores = _mean_psnr(scene, dims, config_kw, cams, directs, threads, progress)
        rows.append({"dims": dims_label(dims), "psnr": scores, "mean_psnr": float(np.mean(scores))})
        print(f"  {dims_label(dims)}: " + " ".join(f"{s:.2f}" for s in scores)
              + f" mean={rows[-1]['mean_psnr']:.2f}")
        if run is not None:
            run.log({"sweep/dims": dims_label(dims), "sweep/mean_psnr": rows[-1]["mean_psnr"]})

    plot_sweep(rows, os.path.join(out_dir, "resolution_sweep.png"))
    return {
        "experiment": "resolution-sweep",
        "poses": [list(map(list, pose)) for pose in RESOLUTION_POSES],
        "fov": fov,
        "size": list(size),
        "supersample": supersample,
        "mode": mode,
        "seed": seed,
        "rows": [dict(row, psnr=[_finite(s) for s in row["psnr"]]) for row in rows],
        "passed": True,
    }


def _strictly_increasing(values):
    return all(b > a for a, b in zip(values, values[1:]))


def run_resolution_ladder(out_dir, full=False, scale=1, size=IMAGE_SIZE, fov=FOV,
                          supersample=LADDER_SUPERSAMPLE, mode=SUPERSAMPLE_MODE, seed=SEED,
                          threads=1, progress=True, run=None):
    """Mean PSNR along a spatial and an angular resolution ladder.

    Passes when mean PSNR strictly increases along both ladders.
    """
    scene = _require(COMPOSED_SCENE_PATH)
    cams = _pose_cameras(size, fov)
    directs = _direct_images(scene, cams, threads, progress)
    config_kw = dict(supersample=supersample, mode=mode, seed=seed)

    ladders = {
        "spatial": [spatial + SPATIAL_LADDER_ANGULAR for spatial in SPATIAL_LADDER],
        "angular": [ANGULAR_LADDER_SPATIAL + angular for angular in ANGULAR_LADDER],
    }
    result = {}
    for name, steps in ladders.items():
        rows = []
        for dims in steps:
            dims = shrink(dims, scale)
            scores = _mean_psnr(scene, dims, config_kw, cams, directs, threads, progress)
            rows.append({"dims": dims_label(dims), "mean_psnr": float(np.mean(scores))})
            print(f"  {name} {dims_label(dims)}: mean={rows[-1]['mean_psnr']:.2f}")
            if run is not None:
                run.log({f"ladder/{name}_mean_psnr": rows[-1]["mean_psnr"]})
        result[name] = {
            "rows": rows,
            "increasing": _strictly_increasing([row["mean_psnr"] for row in rows]),
        }
    return {
        "experiment": "resolution-ladder",
        "fov": fov,
        "size": list(size),
        "supersample": supersample,
        "mode": mode,
        "seed": seed,
        "ladders": result,
        "passed": all(ladder["increasing"] for ladder in result.values()),
    }


RUNNERS = {
    "aliasing": run_aliasing,
    "resolution-sweep": run_resolution_sweep,
    "resolution-ladder": run_resolution_ladder,
}


def run_experiment(name, out_dir, **kwargs):
    """Run one experiment and write its report.json into `out_dir`."""
    if name not in RUNNERS:
        raise ValueError(f"unknown experiment {name!r}, expected one of {EXPERIMENTS}")
    os.makedirs(out_dir, exist_ok=True)
    report = RUNNERS[name](out_dir, **kwargs)
    with open(os.path.join(out_dir, "report.json"), "w") as f:
        json.dump(report, f, indent=2)
    return report
