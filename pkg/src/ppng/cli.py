"""Command-line surface: train, render, convert, inspect, eval, serve.

Exit codes: 0 ok, 2 dataset error, 3 IO/codec error, 4 training
divergence, 5 serve port in use.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import socket
import sys
from functools import partial
from http.server import SimpleHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import numpy as np
from PIL import Image

from . import codec
from .model import SceneModel
from .renderer import Camera, RayMarchConfig, image_to_bytes, render_image
from .trainer import (
    DatasetError,
    DivergenceError,
    TrainConfig,
    evaluate_psnr,
    load_dataset,
    train,
)

EXIT_OK = 0
EXIT_DATASET = 2
EXIT_IO = 3
EXIT_DIVERGENCE = 4
EXIT_SERVE = 5


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ppng", description="Train, encode, inspect, and render .ppng scene files."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a scene to a posed-image dataset")
    p.add_argument("--dataset", required=True, help="directory with transforms.json")
    p.add_argument("--type", type=int, choices=(1, 2, 3), required=True, help="PPNG variant")
    p.add_argument("--out", required=True, help="output .ppng path")
    p.add_argument("--q", type=int, default=80, help="feature grid resolution")
    p.add_argument("--l", type=int, default=4, help="frequency levels")
    p.add_argument("--d", type=int, default=4, help="feature channels")
    p.add_argument("--r", type=int, default=None, help="factor rank (default 8 for type 1, 2 for type 2)")
    p.add_argument("--steps", type=int, default=2000, help="optimization steps")
    p.add_argument("--seed", type=int, default=0, help="RNG seed")
    p.add_argument("--batch", type=int, default=4096, help="rays per step")
    p.add_argument("--occ-res", type=int, default=128, help="occupancy grid resolution")
    p.add_argument("--loss-csv", default=None, help="loss trace path (default: OUT.loss.csv)")

    p = sub.add_parser("render", help="render a model to a PNG image")
    p.add_argument("--model", required=True, help="input .ppng path")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--pose", help="JSON file with transform_matrix (and optional camera_angle_x)")
    group.add_argument("--orbit", help="camera as 'azimuth_deg,elevation_deg,radius' looking at the AABB center")
    p.add_argument("--width", type=int, default=800, help="image width")
    p.add_argument("--height", type=int, default=800, help="image height")
    p.add_argument("--fov", type=float, default=50.0, help="horizontal field of view, degrees")
    p.add_argument("--out", required=True, help="output PNG path")

    p = sub.add_parser("convert", help="compose a factorized model into a dense type-3 file")
    p.add_argument("--in", dest="infile", required=True, help="input .ppng path")
    p.add_argument("--out", required=True, help="output .ppng path")

    p = sub.add_parser("inspect", help="print model metadata")
    p.add_argument("--model", required=True, help="input .ppng path")

    p = sub.add_parser("eval", help="mean PSNR over dataset views, as CSV")
    p.add_argument("--model", required=True, help="input .ppng path")
    p.add_argument("--dataset", required=True, help="directory with transforms.json")
    p.add_argument("--out", default=None, help="CSV output path (default: stdout)")

    p = sub.add_parser("serve", help="serve the viewer bundle and a model over HTTP")
    p.add_argument("--model", required=True, help=".ppng file to expose")
    p.add_argument("--port", type=int, default=8000, help="TCP port")
    p.add_argument("--root", default=None, help="static directory with the viewer bundle")
    return parser


def cmd_train(args) -> int:
    try:
        dataset = load_dataset(args.dataset)
    except DatasetError as exc:
        print(f"dataset error: {exc}", file=sys.stderr)
        return EXIT_DATASET
    rank = args.r if args.r is not None else {1: 8, 2: 2, 3: 0}[args.type]
    config = TrainConfig(
        ppng_type=args.type, resolution=args.q, levels=args.l, channels=args.d,
        rank=rank, steps=args.steps, batch_rays=args.batch, seed=args.seed,
        occupancy_resolution=args.occ_res,
    )
    try:
        model, trace = train(dataset, config)
    except DivergenceError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    try:
        codec.save(model, args.out)
        csv_path = args.loss_csv or f"{args.out}.loss.csv"
        with open(csv_path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["step", "loss", "psnr_estimate"])
            writer.writerows(trace)
    except OSError as exc:
        print(f"write error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"wrote {args.out} ({codec.payload_bytes(model)} payload bytes)")
    return EXIT_OK


def orbit_camera(spec: str, aabb: np.ndarray, fov_x: float, width: int, height: int) -> Camera:
    """Camera from 'azimuth,elevation,radius' (degrees), looking at the AABB center, z up."""
    try:
        az_deg, el_deg, radius = (float(v) for v in spec.split(","))
    except ValueError as exc:
        raise ValueError(f"orbit spec must be 'az,el,radius', got {spec!r}") from exc
    az, el = math.radians(az_deg), math.radians(el_deg)
    center = np.asarray(aabb).mean(axis=0)
    eye = center + radius * np.array(
        [math.cos(el) * math.cos(az), math.cos(el) * math.sin(az), math.sin(el)]
    )
    forward = center - eye
    forward /= np.linalg.norm(forward)
    up = np.array([0.0, 0.0, 1.0])
    right = np.cross(forward, up)
    if np.linalg.norm(right) < 1e-8:  # looking straight up/down
        right = np.array([1.0, 0.0, 0.0])
    right /= np.linalg.norm(right)
    true_up = np.cross(right, forward)
    c2w = np.eye(4)
    c2w[:3, 0] = right
    c2w[:3, 1] = true_up
    c2w[:3, 2] = -forward
    c2w[:3, 3] = eye
    return Camera(c2w, fov_x, width, height)


def cmd_render(args) -> int:
    try:
        model = codec.load(args.model)
    except (OSError, codec.CodecError) as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return EXIT_IO
    fov = math.radians(args.fov)
    try:
        if args.pose:
            pose = json.loads(Path(args.pose).read_text())
            c2w = np.array(pose["transform_matrix"], dtype=np.float64)
            fov = float(pose.get("camera_angle_x", fov))
            cam = Camera(c2w, fov, args.width, args.height)
        else:
            cam = orbit_camera(args.orbit, model.aabb, fov, args.width, args.height)
    except (OSError, KeyError, ValueError, json.JSONDecodeError) as exc:
        print(f"pose error: {exc}", file=sys.stderr)
        return EXIT_IO
    img = render_image(cam, model, RayMarchConfig())
    try:
        Image.fromarray(image_to_bytes(img)).save(args.out, format="PNG")
    except OSError as exc:
        print(f"write error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_convert(args) -> int:
    try:
        model = codec.load(args.infile)
    except (OSError, codec.CodecError) as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return EXIT_IO
    if model.ppng_type == 3:
        print("input is already type 3; nothing to do", file=sys.stderr)
        return EXIT_OK
    dense = codec.convert(model)
    try:
        codec.save(dense, args.out)
    except OSError as exc:
        print(f"write error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"wrote {args.out} ({codec.payload_bytes(dense)} payload bytes)")
    return EXIT_OK


def cmd_inspect(args) -> int:
    try:
        model = codec.load(args.model)
    except (OSError, codec.CodecError) as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return EXIT_IO
    rank = getattr(model.field, "rank", 0)
    print(f"ppng_type: {model.ppng_type}")
    print(f"q: {model.field.resolution}  l: {model.sched.levels}  d: {model.field.channels}  r: {rank}")
    print(f"freqs: {list(model.sched.freqs)}")
    print(f"aabb: {model.aabb.tolist()}")
    print(f"params: {model.param_count:,}")
    print(f"payload_bytes: {codec.payload_bytes(model):,}")
    print(f"occupancy: {model.occupancy.resolution}^3, fill {100 * model.occupancy.fill_fraction:.2f}%")
    return EXIT_OK


def cmd_eval(args) -> int:
    try:
        model = codec.load(args.model)
    except (OSError, codec.CodecError) as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        dataset = load_dataset(args.dataset)
    except DatasetError as exc:
        print(f"dataset error: {exc}", file=sys.stderr)
        return EXIT_DATASET
    psnrs = evaluate_psnr(model, dataset, RayMarchConfig())
    rows = [["view", "psnr"]] + [[i, f"{p:.4f}"] for i, p in enumerate(psnrs)]
    rows.append(["mean", f"{float(np.mean(psnrs)):.4f}"])
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        csv.writer(out).writerows(rows)
    finally:
        if args.out:
            out.close()
    return EXIT_OK


class _ViewerHandler(SimpleHTTPRequestHandler):
    extensions_map = {**SimpleHTTPRequestHandler.extensions_map, ".ppng": "application/octet-stream"}

    def log_message(self, fmt, *log_args):
        pass


def cmd_serve(args) -> int:
    model_path = Path(args.model)
    if not model_path.is_file():
        print(f"model error: {model_path} not found", file=sys.stderr)
        return EXIT_IO
    root = Path(args.root) if args.root else model_path.parent
    handler = partial(_ViewerHandler, directory=str(root))

    class _Server(ThreadingHTTPServer):
        def finish_request(self, request, client_address):
            self.RequestHandlerClass(request, client_address, self)

    try:
        server = _Server(("0.0.0.0", args.port), handler)
    except OSError as exc:
        print(f"cannot bind port {args.port}: {exc}", file=sys.stderr)
        return EXIT_SERVE
    print(f"serving {root} on http://localhost:{args.port}/ "
          f"(model: /{model_path.name} if under the root)")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "train": cmd_train, "render": cmd_render, "convert": cmd_convert,
        "inspect": cmd_inspect, "eval": cmd_eval, "serve": cmd_serve,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
