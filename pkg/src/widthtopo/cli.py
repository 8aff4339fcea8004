"""Command-line interface: ``widthtopo {ph,minimize,segment,metrics,fixture}``.

Exit codes: 0 success, 1 I/O or input error, 2 configuration error,
3 invariant violation. ``TWS_THREADS`` caps the BLAS/OpenMP thread pools.
"""

import argparse
import csv
import json
import logging
import os
import sys
from contextlib import nullcontext
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from ._validation import SimplexViolationError, check_channels
from .config import ConfigError, feature_settings, load_config, minimize_settings, solver_config
from .fixtures import FIXTURES, two_blob_segmentation
from .grid import FieldFormatError, load_field, save_field
from .minimize import minimize_energy
from .nlstd import metrics, run_topo_nlstd, unary_features, write_log
from .persistence import betti_at_threshold, compute_superlevel_persistence

__all__ = ["main", "build_parser"]

log = logging.getLogger("widthtopo")

EXIT_OK, EXIT_IO, EXIT_CONFIG, EXIT_INVARIANT = 0, 1, 2, 3


# ---------------------------------------------------------------- commands

def cmd_ph(args):
    field = load_field(args.image)
    diagram = compute_superlevel_persistence(field)
    diagram.to_csv(args.out_csv)
    log.info("wrote %d pairs to %s", len(diagram), args.out_csv)
    if args.threshold is not None:
        b0 = betti_at_threshold(diagram, args.threshold, 0)
        b1 = betti_at_threshold(diagram, args.threshold, 1)
        print(f"beta0={b0} beta1={b1}")
    return EXIT_OK


def _write_trace(path, trace, best_iter):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iter", "energy", "returned"])
        for i, e in enumerate(trace):
            writer.writerow([i, repr(float(e)), int(i == best_iter)])


def cmd_minimize(args):
    settings = minimize_settings(load_config(args.config))
    if args.iters is not None:
        settings["iters"] = args.iters
    field = load_field(args.image)
    out = Path(args.out_image)
    callback = None
    if args.snapshot_every:
        snap_dir = Path(args.snapshot_dir) if args.snapshot_dir else out.parent
        snap_dir.mkdir(parents=True, exist_ok=True)

        def callback(it, v):
            if (it + 1) % args.snapshot_every == 0:
                save_field(v, snap_dir / f"{out.stem}_iter{it + 1:05d}.png")

    res = minimize_energy(field, variant=args.variant, callback=callback, **settings)
    save_field(res.field, out)
    trace_path = Path(args.trace) if args.trace else out.with_name(out.stem + "_trace.csv")
    _write_trace(trace_path, res.energy_trace, res.best_iter)
    diagram = compute_superlevel_persistence(res.field)
    print(
        f"variant={args.variant} best_iter={res.best_iter} energy={res.energy_trace[res.best_iter]:.6g} "
        f"beta0={betti_at_threshold(diagram, 0.5, 0)} beta1={betti_at_threshold(diagram, 0.5, 1)}"
    )
    return EXIT_OK


def _load_features(path):
    try:
        arr = np.load(path, allow_pickle=False)
    except ValueError as exc:
        raise FieldFormatError(f"{path}: not a .npy array ({exc})") from exc
    return check_channels(arr, "features")


def cmd_segment(args):
    cfg = load_config(args.config)
    config = solver_config(cfg)
    cfg_means, sigma = feature_settings(cfg)
    image = load_field(args.image)
    if args.features:
        o = _load_features(args.features)
    else:
        means = args.means if args.means else cfg_means
        if means is None:
            raise ConfigError("segment needs --features, --means or [features] means", key="means")
        o = unary_features(image, means, args.sigma if args.sigma is not None else sigma)
    res = run_topo_nlstd(o, image, config)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for k, channel in enumerate(res.u):
        save_field(channel, out_dir / f"channel_{k}.png")
    np.save(out_dir / "soft_segmentation.npy", res.u)
    write_log(res.log, out_dir / "iterate_log.csv")
    diagram = compute_superlevel_persistence(res.u[config.topo_channel])
    print(
        f"iterations={res.n_iter} converged={res.converged} "
        f"beta0={betti_at_threshold(diagram, 0.5, 0)} beta1={betti_at_threshold(diagram, 0.5, 1)}"
    )
    return EXIT_OK


def cmd_metrics(args):
    pred = load_field(args.pred)
    truth = load_field(args.truth)
    beta = None
    if args.beta0 is not None or args.beta1 is not None:
        if args.beta0 is None or args.beta1 is None:
            raise ConfigError("--beta0 and --beta1 must be given together", key="beta0" if args.beta0 is None else "beta1")
        beta = (args.beta0, args.beta1)
    report = metrics(pred, truth, beta)
    text = json.dumps(report.as_dict(), indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return EXIT_OK


def cmd_fixture(args):
    rng = np.random.default_rng(args.seed)
    if args.name == "segmentation":
        image, truth = two_blob_segmentation(seed=args.seed, noise=args.noise if args.noise is not None else 0.1)
        save_field(image, args.out)
        if args.truth:
            save_field(truth.astype(float), args.truth)
        return EXIT_OK
    field = FIXTURES[args.name]()
    if args.noise:
        field = np.clip(field + args.noise * rng.standard_normal(field.shape), 0.0, 1.0)
    save_field(field, args.out)
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser():
    parser = argparse.ArgumentParser(prog="widthtopo", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ph", help="persistence diagram of an image as CSV")
    p.add_argument("image")
    p.add_argument("out_csv")
    p.add_argument("--threshold", type=float, help="also print Betti numbers of {u >= t}")
    p.set_defaults(func=cmd_ph)

    p = sub.add_parser("minimize", help="minimize the PH or WT energy of an image")
    p.add_argument("image")
    p.add_argument("config")
    p.add_argument("out_image")
    p.add_argument("--variant", choices=("ph", "wt"), default="wt")
    p.add_argument("--iters", type=int, help="override [minimize] iters")
    p.add_argument("--snapshot-every", type=int, default=0, metavar="N", help="write a PNG every N iterations")
    p.add_argument("--snapshot-dir", help="snapshot directory (default: next to the output)")
    p.add_argument("--trace", help="energy trace CSV (default: <out>_trace.csv)")
    p.set_defaults(func=cmd_minimize)

    p = sub.add_parser("segment", help="run the topology-constrained NLSTD solver")
    p.add_argument("image")
    p.add_argument("config")
    p.add_argument("out_dir")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--features", help=".npy array of shape (L, H, W)")
    src.add_argument("--means", type=float, nargs="+", help="class intensities for quadratic unary features")
    p.add_argument("--sigma", type=float, help="width of the quadratic features")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("metrics", help="accuracy, Dice, IoU and Betti errors as JSON")
    p.add_argument("pred")
    p.add_argument("truth")
    p.add_argument("--beta0", type=int)
    p.add_argument("--beta1", type=int)
    p.add_argument("--out", help="also write the JSON here")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("fixture", help="write a synthetic test image")
    p.add_argument("name", choices=sorted(FIXTURES) + ["segmentation"])
    p.add_argument("out")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, help="Gaussian noise level")
    p.add_argument("--truth", help="segmentation only: where to write the ground-truth mask")
    p.set_defaults(func=cmd_fixture)
    return parser


def _thread_limit():
    raw = os.environ.get("TWS_THREADS")
    if not raw:
        return nullcontext()
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"TWS_THREADS must be a positive integer, got {raw!r}", key="TWS_THREADS") from None
    if n < 1:
        raise ConfigError(f"TWS_THREADS must be a positive integer, got {raw!r}", key="TWS_THREADS")
    return threadpool_limits(limits=n)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        with _thread_limit():
            return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimplexViolationError as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (OSError, FieldFormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
