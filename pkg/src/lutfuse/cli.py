"""Command-line interface.

Exit codes: 0 success, 2 invalid arguments, 3 data/format errors (unreadable
images, corrupt bundles), 4 numeric failure during training, 5 gradient
check failure. Diagnostics go to stderr; results go to stdout.
"""

from __future__ import annotations

import argparse
import functools
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .errors import BundleError, DataError, InvalidArgument, NumericError, PngError
from .losses import LossWeights

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4
EXIT_GRADCHECK = 5

log = logging.getLogger("lutfuse")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _add_model_shape(p, predictor=True):
    p.add_argument("--t", type=int, default=3, help="scenario count T")
    p.add_argument("--m", type=int, default=10, help="category count M")
    p.add_argument("--n", type=int, default=33, help="LUT bins per axis N")
    if predictor:
        p.add_argument("--predictor", choices=("conv", "grid"), default="conv")


def _add_training(p):
    _add_model_shape(p)
    d = LossWeights()
    p.add_argument("--epochs", type=int, default=400)
    p.add_argument("--lr", type=float, default=2e-4, help="cosine schedule amplitude")
    p.add_argument("--period", type=int, default=20, help="cosine restart period in epochs")
    p.add_argument("--batch-size", type=int, default=1)
    p.add_argument("--loss-w-mse", type=float, default=d.w_mse)
    p.add_argument("--loss-w-smooth", type=float, default=d.w_smooth)
    p.add_argument("--loss-w-mono", type=float, default=d.w_mono)
    p.add_argument("--loss-w-color", type=float, default=d.w_color)
    p.add_argument("--loss-w-perceptual", type=float, default=d.w_perceptual)
    p.add_argument("--no-alpha-l2", action="store_true",
                   help="leave the weight map out of the smoothness penalty")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=None,
                        help="kernel worker threads (default: $LUTFUSE_THREADS or all cores)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="lutfuse", description="Train and apply spatially fused 3D LUT image enhancers.")
    sub = parser.add_subparsers(dest="command", required=True)
    add = functools.partial(sub.add_parser, parents=[common])

    p = add("train", help="train a bundle on a paired dataset")
    p.add_argument("--data", required=True, help="directory with input/ and target/ PNGs")
    p.add_argument("--out", required=True, help="output bundle path")
    p.add_argument("--log", help="metrics TSV path (default: <out>.metrics.tsv)")
    p.add_argument("--checkpoint", help="checkpoint path (default: <out>.ckpt.npz)")
    p.add_argument("--resume", help="checkpoint to resume from")
    p.add_argument("--no-timing", action="store_true",
                   help="write '-' for wall_ms so identical runs give identical logs")
    _add_training(p)

    p = add("init", help="write a fresh identity bundle")
    p.add_argument("--out", required=True)
    _add_model_shape(p)

    p = add("apply", help="enhance one PNG")
    p.add_argument("--bundle", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)

    p = add("eval", help="mean PSNR/SSIM over a paired dataset")
    p.add_argument("--bundle", required=True)
    p.add_argument("--data", required=True)

    p = add("bench", help="time predictor and interpolation per resolution")
    p.add_argument("--bundle", required=True)
    p.add_argument("--resolutions", default="640x480,1920x1080,3840x2160")
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--predictor-reps", type=int, default=None,
                   help="extra predictor-only timings per resolution (default: --reps)")

    p = add("gradcheck", help="finite-difference check of every gradient")
    p.add_argument("--inject-fault", default=None, help=argparse.SUPPRESS)

    p = add("export-cube", help="flatten a bundle to a .cube file")
    p.add_argument("--bundle", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--omega", type=_floats, help="T scenario weights (default uniform)")
    p.add_argument("--alpha", type=_floats, help="M category weights (default uniform)")
    p.add_argument("--title", default=None)

    p = add("inspect", help="print bundle header and statistics")
    p.add_argument("--bundle", required=True)

    p = add("dump-weights", help="write the weight maps of one image as PNGs")
    p.add_argument("--bundle", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True, help="output directory")

    p = add("sweep", help="category-count sweep on the synthetic two-zone task")
    p.add_argument("--ms", type=_ints, default=[1, 2, 3, 4])
    p.add_argument("--steps", type=int, default=2000)
    return parser


# --------------------------------------------------------------------------
# commands


def cmd_train(args) -> int:
    from .bundle import save_bundle
    from .trainer import TrainConfig, train

    weights = LossWeights(args.loss_w_mse, args.loss_w_smooth, args.loss_w_mono,
                          args.loss_w_color, args.loss_w_perceptual)
    config = TrainConfig(epochs=args.epochs, batch_size=args.batch_size, lr_amplitude=args.lr,
                         lr_period_epochs=args.period, seed=args.seed, loss_weights=weights,
                         t=args.t, m=args.m, n=args.n, predictor=args.predictor,
                         alpha_l2=not args.no_alpha_l2, threads=args.threads)
    out = Path(args.out)
    log_path = args.log or f"{out}.metrics.tsv"
    ckpt_path = args.checkpoint or f"{out}.ckpt.npz"
    result = train(args.data, config, log_path=log_path, checkpoint_path=ckpt_path,
                   resume=args.resume, record_time=not args.no_timing)
    save_bundle(result.model, out)
    last = result.history[-1] if result.history else None
    if last is not None:
        print(f"epochs\t{last.epoch}\nloss\t{last.total:.6g}\nval_psnr\t{last.val_psnr:.4f}")
    print(f"bundle\t{out}\nmetrics\t{log_path}")
    return EXIT_OK


def cmd_init(args) -> int:
    from .bundle import save_bundle
    from .model import Enhancer

    save_bundle(Enhancer.fresh(args.t, args.m, args.n, args.predictor, seed=args.seed), args.out)
    print(f"bundle\t{args.out}")
    return EXIT_OK


def cmd_apply(args) -> int:
    from .bundle import load_bundle
    from .imageio import load_png, save_png
    from .lut import apply_lowres

    model = load_bundle(args.bundle)
    image = load_png(args.input)
    t0 = time.perf_counter()
    out = model.predict(image)
    t1 = time.perf_counter()
    result = apply_lowres(model.bank, out.omega, out.alpha_lowres, image)
    t2 = time.perf_counter()
    save_png(result, args.output)
    print(f"predictor_ms\t{(t1 - t0) * 1e3:.3f}\ninterp_ms\t{(t2 - t1) * 1e3:.3f}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .bundle import load_bundle
    from .metrics import psnr, ssim
    from .trainer import load_pairs

    model = load_bundle(args.bundle)
    print("name\tpsnr\tssim")
    ps, ss = [], []
    for pair in load_pairs(args.data):
        out = np.clip(model.enhance(pair.image), 0.0, 1.0)
        p = psnr(out, pair.target)
        s = ssim(out, pair.target) if min(out.shape[:2]) >= 11 else float("nan")
        ps.append(p)
        ss.append(s)
        print(f"{pair.name}\t{p:.4f}\t{s:.4f}")
    print(f"mean\t{np.mean(ps):.4f}\t{np.mean(ss):.4f}")
    return EXIT_OK


def cmd_bench(args) -> int:
    from .bench import HEADER, parse_resolution, run_bench
    from .bundle import load_bundle

    try:
        resolutions = [parse_resolution(r) for r in args.resolutions.split(",") if r]
    except ValueError:
        raise InvalidArgument(f"bad resolution list {args.resolutions!r}") from None
    if not resolutions or any(w < 1 or h < 1 for w, h in resolutions) or args.reps < 1:
        raise InvalidArgument("resolutions and --reps must be positive")
    model = load_bundle(args.bundle)
    print(HEADER)
    for row in run_bench(model, resolutions, args.reps, seed=args.seed,
                         predictor_repetitions=args.predictor_reps):
        print(row.tsv(), flush=True)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .gradcheck import format_results, run_suite

    results = run_suite(seed=args.seed, fault=args.inject_fault)
    print(format_results(results))
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"gradient check failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_GRADCHECK
    return EXIT_OK


def cmd_export_cube(args) -> int:
    from .bundle import load_bundle, write_cube
    from .lut import flatten_bank

    model = load_bundle(args.bundle)
    t, m = model.bank.t_scenarios, model.bank.m_categories
    omega = np.full(t, 1.0 / t) if args.omega is None else np.asarray(args.omega)
    alpha = np.full(m, 1.0 / m) if args.alpha is None else np.asarray(args.alpha)
    lut = flatten_bank(model.bank, omega, alpha)
    write_cube(lut, args.out, title=args.title)
    print(f"cube\t{args.out}\nsize\t{lut.n_bins}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    from .bundle import load_bundle
    from .losses import monotonicity_loss
    from .lut import LutBank

    model = load_bundle(args.bundle)
    bank = model.bank
    params = model.predictor.params
    v = bank.values
    print(f"T\t{bank.t_scenarios}\nM\t{bank.m_categories}\nN\t{bank.n_bins}")
    print(f"predictor_arch\t{model.predictor.arch_id}")
    print(f"predictor_params\t{sum(p.size for p in params.values())}")
    print(f"cell_min\t{float(v.min()):.6f}\ncell_max\t{float(v.max()):.6f}")
    print(f"monotonicity\t{monotonicity_loss(bank)[0]:.6g}")
    ident = LutBank.identity(bank.t_scenarios, bank.m_categories, bank.n_bins).values
    print(f"max_abs_from_identity\t{float(np.max(np.abs(v - ident))):.6f}")
    print("crc\tok")
    return EXIT_OK


def cmd_dump_weights(args) -> int:
    from .bundle import load_bundle
    from .imageio import load_png, save_gray_png

    model = load_bundle(args.bundle)
    image = load_png(args.input)
    weights = model.weight_map(image)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for m in range(weights.alpha.shape[2]):
        path = out / f"alpha_{m:02d}.png"
        save_gray_png(weights.alpha[..., m], path)
        print(f"alpha\t{m}\t{path}")
    omega_path = out / "omega.txt"
    omega_path.write_text("".join(f"{t}\t{w!r}\n" for t, w in enumerate(weights.omega.tolist())),
                          encoding="utf-8")
    print(f"omega\t{omega_path}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    from .synthetic import m_sweep

    if not args.ms or min(args.ms) < 1 or args.steps < 1:
        raise InvalidArgument("--ms entries and --steps must be >= 1")
    print("M\tpsnr")
    for row in m_sweep(args.ms, steps=args.steps, seed=args.seed):
        print(f"{row.m}\t{row.psnr:.4f}", flush=True)
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "init": cmd_init,
    "apply": cmd_apply,
    "eval": cmd_eval,
    "bench": cmd_bench,
    "gradcheck": cmd_gradcheck,
    "export-cube": cmd_export_cube,
    "inspect": cmd_inspect,
    "dump-weights": cmd_dump_weights,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        from .model import set_threads

        set_threads(args.threads)
        return COMMANDS[args.command](args)
    except InvalidArgument as exc:
        parser.print_usage(sys.stderr)
        print(f"lutfuse {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, PngError, BundleError, OSError) as exc:
        print(f"lutfuse {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"lutfuse {args.command}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
