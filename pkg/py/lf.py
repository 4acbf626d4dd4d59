#!/usr/bin/env python
# coding: utf-8

import argparse
import json
import os
import platform
import sys
import time

from config import *
from experiment import EXPERIMENTS, run_experiment
from geometry import ProxyModel
from lightfield import LF4DFormatError, load_lf4d, save_lf4d
from metrics import compare_images, format_report, report_to_json
from parallel import resolve_threads
from render import (
    Camera,
    ObserverInsideError,
    encode_image,
    orbit_frames,
    primitive_screen_box,
    read_ppm,
    render_direct,
    render_view_counted,
    write_ppm,
)
from scene import SceneParseError, load_scene, validate_scene
from synthesis import MODES, SynthesisConfig, synthesize, texture_total_variation


def _numbers(text, count, sep, cast, what):
    parts = text.split(sep)
    try:
        values = tuple(cast(p) for p in parts)
    except ValueError:
        values = ()
    if len(values) != count:
        raise argparse.ArgumentTypeError(f"expected {what}, got {text!r}")
    return values


def vec3(text):
    return _numbers(text, 3, ",", float, "x,y,z")


def dims4(text):
    return _numbers(text.lower(), 4, "x", int, "UxVxSxT")


def size2(text):
    return _numbers(text.lower(), 2, "x", int, "WxH")


def region4(text):
    return _numbers(text, 4, ",", int, "x0,y0,x1,y1")


def _emit(args, doc, lines):
    if args.json:
        print(json.dumps(doc))
    else:
        for line in lines:
            print(line)


def _model(args):
    if args.scene:
        return load_scene(args.scene).model
    return ProxyModel.from_diameter(args.center, args.diameter)


def _camera(args):
    return Camera(args.pos, args.dir, fov=args.fov, size=args.size)


def cmd_synth(args):
    scene = load_scene(args.scene)
    config = SynthesisConfig(args.dims, args.ss, args.mode, args.seed, args.channels)
    start = time.time()
    tex = synthesize(scene, config, threads=args.threads, progress=not args.quiet)
    elapsed = time.time() - start
    save_lf4d(tex, args.out)

    rays = tex.texel_count * config.rays_per_texel
    doc = {
        "command": "synth",
        "scene": args.scene,
        "dims": list(tex.dims),
        "texels": tex.texel_count,
        "channels": tex.channels.name,
        "supersample": config.supersample,
        "mode": config.mode,
        "seed": config.seed,
        "rays": rays,
        "threads": args.threads,
        "seconds": elapsed,
        "out": args.out,
    }
    if args.json:
        doc["total_variation"] = texture_total_variation(tex)
    _emit(args, doc, [
        f"dims={'x'.join(map(str, tex.dims))} texels={tex.texel_count} channels={tex.channels.name}",
        f"supersample={config.supersample} mode={config.mode} seed={config.seed} rays={rays}",
        f"elapsed={elapsed:.2f}s threads={args.threads} -> {args.out}",
    ])
    return EXIT_OK


def cmd_render(args):
    tex = load_lf4d(args.texture)
    model = _model(args)
    cam = _camera(args)
    image, stats = render_view_counted(
        tex, model, cam, threads=args.threads, shared_direction=args.shared_direction,
        progress=not args.quiet,
    )
    write_ppm(args.out, encode_image(image, args.gamma))
    doc = {
        "command": "render",
        "camera": cam.describe(),
        "gamma": args.gamma,
        "shared_direction": args.shared_direction,
        "covered": stats.covered,
        "fetches": stats.fetches,
        "out": args.out,
    }
    _emit(args, doc, [
        f"camera {cam.describe()} gamma={'on' if args.gamma else 'off'}",
        f"covered={stats.covered} fetches={stats.fetches} -> {args.out}",
    ])
    return EXIT_OK


def cmd_direct(args):
    scene = load_scene(args.scene)
    cam = _camera(args)
    image = render_direct(scene, cam, threads=args.threads, progress=not args.quiet)
    write_ppm(args.out, encode_image(image, args.gamma))
    doc = {"command": "direct", "camera": cam.describe(), "gamma": args.gamma, "out": args.out}
    _emit(args, doc, [f"camera {cam.describe()} gamma={'on' if args.gamma else 'off'} -> {args.out}"])
    return EXIT_OK


def cmd_compare(args):
    a, b = read_ppm(args.image_a), read_ppm(args.image_b)
    regions = list(args.region or [])
    if args.primitive is not None:
        # window of one scene object as seen by the given camera
        scene = load_scene(args.scene)
        regions.append(primitive_screen_box(_camera(args), scene.primitives[args.primitive]))
    report = compare_images(a, b, regions)
    print(report_to_json(report) if args.json else format_report(report))
    if args.min_psnr is not None and report.psnr < args.min_psnr:
        return EXIT_THRESHOLD
    return EXIT_OK


def cmd_validate(args):
    scene = load_scene(args.scene)
    verdicts = validate_scene(scene, args.observer)
    doc = {
        "command": "validate",
        "scene": args.scene,
        "model_radius": scene.model.radius,
        "objects": [v._asdict() for v in verdicts],
    }
    lines = [
        f"{v.index} {v.name} {v.verdict} margin={v.margin:.4f} bound={v.bounding_radius:.4f}"
        + "".join(f" meets[{k}]={m}" for k, m in enumerate(v.projection_meets_model))
        for v in verdicts
    ]
    _emit(args, doc, lines)
    if args.strict and any(v.verdict != "unrestricted" for v in verdicts):
        return EXIT_VALIDATION
    return EXIT_OK


def cmd_bench(args):
    tex = load_lf4d(args.texture)
    model = _model(args)
    frames = orbit_frames(_camera(args), model, args.frames)
    times, covered, fetches = [], 0, 0
    for cam in frames:
        start = time.perf_counter()
        _, stats = render_view_counted(tex, model, cam, threads=args.threads, progress=False)
        times.append(time.perf_counter() - start)
        covered += stats.covered
        fetches += stats.fetches

    doc = {
        "command": "bench",
        "dims": list(tex.dims),
        "frames": len(times),
        "size": list(args.size),
        "mean_fps": len(times) / sum(times),
        "min_fps": 1.0 / max(times),
        "covered_pixels": covered,
        "fetches": fetches,
        "fetches_per_covered_pixel": fetches / covered if covered else 0.0,
        "threads": args.threads,
        "machine": f"{platform.platform()} {platform.machine()} cpus={os.cpu_count()}",
    }
    _emit(args, doc, [
        f"dims={'x'.join(map(str, tex.dims))} frames={doc['frames']} size={args.size[0]}x{args.size[1]}",
        f"mean_fps={doc['mean_fps']:.2f} min_fps={doc['min_fps']:.2f}",
        f"covered_pixels={covered} fetches_per_covered_pixel={doc['fetches_per_covered_pixel']:.2f}",
        f"threads={args.threads} machine={doc['machine']}",
    ])
    return EXIT_OK


def cmd_experiment(args):
    run = None
    if args.wandb_project:
        import wandb

        run = wandb.init(project=args.wandb_project, name=args.name, config=vars(args))
    kwargs = dict(
        full=args.full, scale=args.scale, size=args.size, fov=args.fov, mode=args.mode,
        seed=args.seed, threads=args.threads, progress=not args.quiet, run=run,
    )
    if args.ss is not None:
        kwargs["supersample"] = args.ss
    try:
        report = run_experiment(args.name, args.out, **kwargs)
    finally:
        if run is not None:
            run.finish()
    if args.json:
        print(json.dumps(report))
    else:
        print(f"{args.name}: {'passed' if report['passed'] else 'FAILED'} "
              f"(report in {os.path.join(args.out, 'report.json')})")
    return EXIT_OK if report["passed"] else EXIT_VALIDATION


def _add_common(parser):
    parser.add_argument('--threads', type=int, default=None,
                        help=f"worker processes (default: ${THREADS_ENV}, then all cores)")
    parser.add_argument('--json', action='store_true', help="print a JSON summary")
    parser.add_argument('--quiet', action='store_true', help="no progress bars")


def _add_camera(parser, pos=BENCH_POSE[0], direction=BENCH_POSE[1], size=IMAGE_SIZE):
    parser.add_argument('--pos', type=vec3, default=pos, help="observer position x,y,z")
    parser.add_argument('--dir', type=vec3, default=direction,
                        help="view direction x,y,z (write --dir=-3,0,0 for negative values)")
    parser.add_argument('--fov', type=float, default=FOV, help="horizontal fov in degrees")
    parser.add_argument('--size', type=size2, default=size, help="image size WxH")


def _add_model(parser):
    parser.add_argument('--scene', type=str, default=None,
                        help="take the proxy model from this scene file")
    parser.add_argument('--diameter', type=float, default=MODEL_DIAMETER)
    parser.add_argument('--center', type=vec3, default=MODEL_CENTER)


def parse_args(args):
    parser = argparse.ArgumentParser(prog="lf", description="4D light-field textures on a spherical proxy")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="bake a scene into an LF4D texture")
    p.add_argument('--scene', type=str, default=COMPOSED_SCENE_PATH)
    p.add_argument('--dims', type=dims4, default=SYNTH_DIMS)
    p.add_argument('--ss', type=int, default=SUPERSAMPLE, help="supersample factor n")
    p.add_argument('--mode', choices=MODES, default=SUPERSAMPLE_MODE)
    p.add_argument('--seed', type=int, default=SEED)
    p.add_argument('--channels', choices=("RGB8", "RGBF32"), default=CHANNELS)
    p.add_argument('-o', '--out', type=str, required=True)
    _add_common(p)

    p = sub.add_parser("render", help="render a view of a texture")
    p.add_argument('texture', type=str)
    p.add_argument('-o', '--out', type=str, required=True)
    p.add_argument('--gamma', action='store_true', help="encode with gamma 2.2")
    p.add_argument('--shared-direction', dest='shared_direction', action='store_true',
                   default=SHARED_VIEW_DIRECTION)
    _add_camera(p)
    _add_model(p)
    _add_common(p)

    p = sub.add_parser("direct", help="ray trace the scene itself")
    p.add_argument('--scene', type=str, default=COMPOSED_SCENE_PATH)
    p.add_argument('-o', '--out', type=str, required=True)
    p.add_argument('--gamma', action='store_true')
    _add_camera(p)
    _add_common(p)

    p = sub.add_parser("compare", help="PSNR and gradient energy of two PPM images")
    p.add_argument('image_a', type=str)
    p.add_argument('image_b', type=str)
    p.add_argument('--region', type=region4, action='append', help="x0,y0,x1,y1, repeatable")
    p.add_argument('--primitive', type=int, default=None,
                   help="add the screen window of this object of --scene seen by the camera")
    p.add_argument('--scene', type=str, default=COMPOSED_SCENE_PATH)
    p.add_argument('--min-psnr', dest='min_psnr', type=float, default=None)
    _add_camera(p)
    _add_common(p)

    p = sub.add_parser("validate", help="positive-parallax placement check")
    p.add_argument('--scene', type=str, default=COMPOSED_SCENE_PATH)
    p.add_argument('--observer', type=vec3, action='append', default=None,
                   help="observer position x,y,z, repeatable")
    p.add_argument('--strict', action='store_true', help="fail on view-dependent objects")
    _add_common(p)

    p = sub.add_parser("bench", help="orbit render throughput")
    p.add_argument('texture', type=str)
    p.add_argument('--frames', type=int, default=BENCH_FRAMES)
    _add_camera(p, size=BENCH_SIZE)
    _add_model(p)
    _add_common(p)

    p = sub.add_parser("experiment", help="aliasing and resolution studies")
    p.add_argument('name', choices=EXPERIMENTS)
    p.add_argument('-o', '--out', type=str, default="results")
    p.add_argument('--full', action='store_true', help="full-scale texture dims")
    p.add_argument('--scale', type=int, default=1, help="further divide every dim by this")
    p.add_argument('--size', type=size2, default=IMAGE_SIZE)
    p.add_argument('--fov', type=float, default=FOV)
    p.add_argument('--ss', type=int, default=None, help="supersample factor n")
    p.add_argument('--mode', choices=MODES, default=SUPERSAMPLE_MODE)
    p.add_argument('--seed', type=int, default=SEED)
    p.add_argument('--wandb-project', dest='wandb_project', type=str, default=None)
    _add_common(p)

    return parser.parse_args(args)


COMMANDS = {
    "synth": cmd_synth,
    "render": cmd_render,
    "direct": cmd_direct,
    "compare": cmd_compare,
    "validate": cmd_validate,
    "bench": cmd_bench,
    "experiment": cmd_experiment,
}


def main(argv):
    try:
        args = parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE

    try:
        args.threads = resolve_threads(args.threads)
        if getattr(args, "scale", 1) < 1:
            raise ValueError(f"--scale must be at least 1, got {args.scale}")
        return COMMANDS[args.command](args)
    except ObserverInsideError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except (SceneParseError, LF4DFormatError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, IndexError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == '__main__':
    sys.exit(main(sys.argv[1:]))
