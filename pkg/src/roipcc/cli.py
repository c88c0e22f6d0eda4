"""Command-line interface.

Exit codes: 0 ok, 2 usage or validation error, 3 corrupt data,
4 incompatible inputs.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__, ply
from .codec import decode_layers, encode_cloud
from .container import FLAG_CANONICAL_ORDER, FLAG_NO_ROI, Container
from .errors import DecodeError, NoOverlapError, PlyError
from .metrics import DEFAULT_KNN, RDCurve, bd_psnr, bd_rate, metrics_report
from .rd import RDConfig, Scene, sweep, sweep_csv, sweep_curves_json, threads_from_env
from .roi import LabelConfig, MaskMap, build_mask, select_regions
from .synthetic import room_scene

EXIT_OK, EXIT_USAGE, EXIT_CORRUPT, EXIT_INCOMPATIBLE = 0, 2, 3, 4


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_USAGE):
        super().__init__(message)
        self.code = code


def _positive(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not (v > 0 and np.isfinite(v)):
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _non_negative(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not (v >= 0 and np.isfinite(v)):
        raise argparse.ArgumentTypeError(f"must be non-negative, got {text}")
    return v


def _read_bytes(path) -> bytes:
    try:
        with open(path, "rb") as f:
            return f.read()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}") from None


def _write(path, data):
    mode = "wb" if isinstance(data, bytes) else "w"
    if path in (None, "-"):
        if isinstance(data, bytes):
            sys.stdout.buffer.write(data)
        else:
            sys.stdout.write(data)
        return
    with open(path, mode) as f:
        f.write(data)


def _load_cloud(path):
    try:
        return ply.read_ply(_read_bytes(path))
    except PlyError as exc:
        raise CliError(f"{path}: {exc}") from None


def _load_labels(path) -> LabelConfig:
    if path is None:
        return LabelConfig.default()
    try:
        return LabelConfig.from_dict(json.loads(_read_bytes(path)))
    except (ValueError, TypeError, AttributeError) as exc:
        raise CliError(f"{path}: bad label config: {exc}") from None


def cmd_encode(args) -> int:
    cloud = _load_cloud(args.input)
    if cloud.count == 0:
        raise CliError("input cloud is empty")
    labels = _load_labels(args.labels)
    res_step = args.res_step if args.res_step is not None else args.step / 4
    if args.no_roi:
        mask = MaskMap(np.zeros(cloud.count))
    else:
        if cloud.labels is None:
            raise CliError(f"{args.input} has no 'label' property; "
                           "pass --no-roi to encode without ROI weighting")
        part = select_regions(cloud.labels, labels.background_labels)
        mask = build_mask(part, cloud.count, args.fg_weight)
    try:
        enc = encode_cloud(cloud, args.step, res_step, mask)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    flags = FLAG_CANONICAL_ORDER | (FLAG_NO_ROI if args.no_roi else 0)
    box = Container(args.step, res_step, tuple(enc.grid.origin), cloud.count,
                    labels.digest(), enc.base, enc.enhancement, flags)
    data = box.to_bytes()
    _write(args.output, data)
    n = cloud.count
    summary = {
        "points": n,
        "voxels": enc.grid.size,
        "bytes": len(data),
        "bpp_base": 8 * len(enc.base) / n,
        "bpp_enh": 8 * len(enc.enhancement) / n,
        "bpp_total": 8 * (len(enc.base) + len(enc.enhancement)) / n,
        "bpp_container": 8 * len(data) / n,
    }
    print(json.dumps(summary), file=sys.stderr if args.output in (None, "-") else sys.stdout)
    return EXIT_OK


def _decode_container(path):
    data = _read_bytes(path)
    try:
        box = Container.from_bytes(data)
        grid, res, rec = decode_layers(box.base, box.enhancement)
    except DecodeError as exc:
        raise CliError(f"{path}: {exc}", EXIT_CORRUPT) from None
    return box, rec


def cmd_decode(args) -> int:
    _, rec = _decode_container(args.input)
    _write(args.output, ply.write_ply(rec, "ascii" if args.ascii else "binary"))
    return EXIT_OK


def cmd_eval(args) -> int:
    ref = _load_cloud(args.reference)
    rec = _load_cloud(args.reconstruction)
    if ref.count == 0 or rec.count == 0:
        raise CliError("cannot evaluate an empty cloud")
    mask = None
    if ref.labels is not None:
        labels = _load_labels(args.labels)
        mask = build_mask(select_regions(ref.labels, labels.background_labels), ref.count)
    base_bits = enh_bits = None
    if args.container:
        box, _ = _decode_container(args.container)
        base_bits, enh_bits = 8 * len(box.base), 8 * len(box.enhancement)
    try:
        report = metrics_report(ref, rec, mask=mask, peak=args.peak, knn=args.knn,
                                base_bits=base_bits, enh_bits=enh_bits)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    _write(args.output, json.dumps(report, indent=2) + "\n")
    return EXIT_OK


def _load_grid(path):
    try:
        obj = json.loads(_read_bytes(path))
        items = obj["configs"] if isinstance(obj, dict) else obj
        grid = [RDConfig.from_dict(c) for c in items]
    except (ValueError, TypeError, KeyError) as exc:
        raise CliError(f"{path}: bad grid file: {exc}") from None
    if not grid:
        raise CliError(f"{path}: grid holds no configurations")
    return grid


def cmd_sweep(args) -> int:
    cloud = _load_cloud(args.input)
    if cloud.labels is None:
        raise CliError(f"{args.input} has no 'label' property; sweeps need labels")
    if cloud.count == 0:
        raise CliError("input cloud is empty")
    labels = _load_labels(args.labels)
    grid = _load_grid(args.grid_file) if args.grid_file else None
    try:
        threads = args.threads or threads_from_env()
        scene = Scene(cloud, labels.background_labels, peak=args.peak, knn=args.knn)
        points = sweep(scene, None, grid, threads=threads)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    _write(args.csv, sweep_csv(points))
    if args.curves:
        _write(args.curves, sweep_curves_json(points) + "\n")
    return EXIT_OK


def _load_curves(path) -> list[dict]:
    try:
        obj = json.loads(_read_bytes(path))
        curves = obj["curves"]
        for c in curves:
            c["name"], c["points"]
    except (ValueError, TypeError, KeyError) as exc:
        raise CliError(f"{path}: bad curves file: {exc}") from None
    return curves


def cmd_bd(args) -> int:
    curves_a, curves_b = _load_curves(args.curves_a), _load_curves(args.curves_b)
    names_b = {c["name"]: c for c in curves_b}
    pairs = [(a, names_b[a["name"]]) for a in curves_a if a["name"] in names_b]
    if not pairs:
        pairs = list(zip(curves_a, curves_b))
    if not pairs:
        raise CliError("no curves to compare", EXIT_INCOMPATIBLE)
    results = []
    for a, b in pairs:
        try:
            ca = RDCurve.from_points(a["points"], a["name"])
            cb = RDCurve.from_points(b["points"], b["name"])
            results.append({"curve_a": a["name"], "curve_b": b["name"],
                            "bd_psnr": bd_psnr(ca, cb), "bd_rate": bd_rate(ca, cb)})
        except NoOverlapError as exc:
            raise CliError(f"{a['name']} vs {b['name']}: {exc}", EXIT_INCOMPATIBLE) from None
        except (ValueError, TypeError) as exc:
            raise CliError(f"{a['name']} vs {b['name']}: {exc}", EXIT_INCOMPATIBLE) from None
    _write(args.output, json.dumps({"pairs": results}, indent=2) + "\n")
    return EXIT_OK


def cmd_mask(args) -> int:
    cloud = _load_cloud(args.input)
    if cloud.labels is None:
        raise CliError(f"{args.input} has no 'label' property")
    labels = _load_labels(args.labels)
    part = select_regions(cloud.labels, labels.background_labels)
    mask = build_mask(part, cloud.count, args.fg_weight)
    _write(args.output, mask.to_csv())
    print(json.dumps({"points": cloud.count, "foreground": len(part.fg_indices),
                      "background": len(part.bg_indices)}), file=sys.stderr)
    return EXIT_OK


def cmd_synth(args) -> int:
    cloud = room_scene(args.points, args.fg_fraction, args.seed)
    _write(args.output, ply.write_ply(cloud, "ascii" if args.ascii else "binary"))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rpcgc", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("encode", help="encode a PLY cloud into a container")
    e.add_argument("input")
    e.add_argument("-o", "--output", required=True)
    e.add_argument("--labels", help="label config JSON (default: built-in)")
    e.add_argument("--step", type=_positive, default=0.3)
    e.add_argument("--res-step", type=_positive, default=None,
                   help="residual step (default: step / 4)")
    e.add_argument("--fg-weight", type=_non_negative, default=1.0)
    e.add_argument("--no-roi", action="store_true", help="encode with m = 0 everywhere")
    e.set_defaults(func=cmd_encode)

    d = sub.add_parser("decode", help="decode a container into PLY")
    d.add_argument("input")
    d.add_argument("-o", "--output", required=True)
    d.add_argument("--ascii", action="store_true")
    d.set_defaults(func=cmd_decode)

    v = sub.add_parser("eval", help="geometry metrics of a reconstruction")
    v.add_argument("reference")
    v.add_argument("reconstruction")
    v.add_argument("--peak", type=_positive, default=None)
    v.add_argument("--knn", type=int, default=DEFAULT_KNN)
    v.add_argument("--labels")
    v.add_argument("--container", help="container to report rates from")
    v.add_argument("-o", "--output")
    v.set_defaults(func=cmd_eval)

    s = sub.add_parser("sweep", help="rate-distortion sweep")
    s.add_argument("input")
    s.add_argument("--labels")
    s.add_argument("--grid-file", help="JSON list of configs (default grid otherwise)")
    s.add_argument("--csv", default="-")
    s.add_argument("--curves")
    s.add_argument("--threads", type=int, default=None)
    s.add_argument("--peak", type=_positive, default=None)
    s.add_argument("--knn", type=int, default=DEFAULT_KNN)
    s.set_defaults(func=cmd_sweep)

    b = sub.add_parser("bd", help="Bjontegaard deltas between curve files")
    b.add_argument("curves_a")
    b.add_argument("curves_b")
    b.add_argument("-o", "--output")
    b.set_defaults(func=cmd_bd)

    m = sub.add_parser("mask", help="export the ROI mask as CSV")
    m.add_argument("input")
    m.add_argument("--labels")
    m.add_argument("--fg-weight", type=_non_negative, default=1.0)
    m.add_argument("-o", "--output")
    m.set_defaults(func=cmd_mask)

    y = sub.add_parser("synth", help="write a labelled synthetic room scene")
    y.add_argument("output")
    y.add_argument("--points", type=int, default=5000)
    y.add_argument("--fg-fraction", type=float, default=0.3)
    y.add_argument("--seed", type=int, default=0)
    y.add_argument("--ascii", action="store_true")
    y.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # argparse: usage errors, --help, --version
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except CliError as exc:
        print(f"rpcgc {args.command}: error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    raise SystemExit(main())
