"""Command-line entry point: ``pyraflow <command> [options]``."""
import argparse
import logging
import os
import sys
from dataclasses import replace

import numpy as np

from . import diagnostics, distill, io, toy
from .cost_volume import cost_volume
from .errors import PyraflowError
from .gradcheck import DEFAULT_TOL, SUITES, run_suites

logger = logging.getLogger("pyraflow")


def _on_off(text):
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return text == "on"


def _nonneg_int(text):
    n = int(text)
    if n < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return n


def _positive_int(text):
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return n


def _center_pixel(mask):
    ys, xs = np.nonzero(mask)
    k = len(ys) // 2
    order = np.lexsort((xs, ys))
    return int(ys[order[k]]), int(xs[order[k]])


def cmd_cv_demo(args):
    spec = toy.parse_scene(args.scene, seed=args.seed)
    scene = toy.gen_scene(spec)
    modes = ("sample", "warp") if args.mode == "both" else (args.mode,)
    cfg = toy.SolveConfig(n_levels=args.levels, delta=args.delta, distance=args.distance)
    errors = {}
    for mode in modes:
        mcfg = replace(cfg, mode=mode)
        flow, levels = toy.coarse_to_fine_wta(scene, mcfg, return_levels=True)
        has_object = bool(scene.object_mask.any())
        err = toy.object_epe(scene, flow) if has_object else None
        errors[mode] = err
        print(f"{mode}: object EPE = {'n/a' if err is None else f'{err:.3f}'}, "
              f"full EPE = {diagnostics.epe(flow.data, scene.gt_flow.data):.3f}")
        if has_object:
            y, x = _center_pixel(scene.object_mask)
            finest = levels[-1]
            cv = cost_volume(scene.I1, scene.I2, finest.prior, args.delta, f"{mode}-{args.distance}")
            D = 2 * args.delta + 1
            grid = cv.data[y, x].reshape(D, D)
            print(f"  cost slice at object pixel (row {y}, col {x}), rows dv=-{args.delta}..{args.delta}:")
            for row in grid:
                print("   " + " ".join(f"{s:6.3f}" for s in row))
        if args.out:
            os.makedirs(args.out, exist_ok=True)
            io.write_flo(os.path.join(args.out, f"flow_{mode}.flo"), flow.data)
            io.write_image(os.path.join(args.out, f"flow_{mode}.png"), io.colorize_flow(flow.data))
            if has_object:
                np.save(os.path.join(args.out, f"cost_slice_{mode}.npy"), grid)
    if args.out:
        io.write_flo(os.path.join(args.out, "gt.flo"), scene.gt_flow.data)
    if len(modes) == 2 and all(e is not None for e in errors.values()):
        ok = errors["sample"] == 0.0 and errors["warp"] >= 1.0
        print("sample recovers the object, warp loses it" if ok else
              "expected outcome NOT reproduced (sample EPE 0 and warp EPE >= 1)")
        return 0 if ok else 1
    return 0


def cmd_grad_check(args):
    results = run_suites(trials=args.trials, seed=args.seed, tol=args.tol, perturb=args.perturb)
    for r in results:
        print(r.line())
    return 0 if all(r.passed for r in results) else 1


def cmd_toy_run(args):
    cfg = toy.SolveConfig(stop_gradient=args.stop_gradient, step=args.step, iterations=args.iters)
    specs = [toy.parse_scene(args.scene, seed=args.seed + k) for k in range(args.seeds)]
    summary = toy.run_batch(specs, cfg)
    rows = summary.rows()
    if args.window > 1:
        ncc = diagnostics.moving_average(summary.ncc, args.window)
        beta = diagnostics.moving_average(summary.beta_eff, args.window)
        rows = [(i, ncc[i], beta[i], s) for i, (_, _, _, s) in enumerate(rows)]
    if args.out:
        diagnostics.write_trace_csv(args.out, rows)
    else:
        diagnostics.write_trace_csv(sys.stdout, rows)
    losses = summary.final_losses
    logger.info("final loss median %.4f over %d runs; mean run NCC %.3f",
                float(np.median(losses)), len(losses), float(np.mean(summary.run_ncc)))
    return 0


def cmd_distill_filter(args):
    teacher = io.read_flow(args.teacher)
    backward = io.read_flow(args.backward)
    I1, I2 = io.read_image(args.image1), io.read_image(args.image2)
    conf = io.read_scalar_map(args.confidence)
    gt_flow = gt_valid = None
    if args.gt:
        gt = io.read_flow(args.gt)
        gt_flow, gt_valid = gt.data, gt.mask()
    cfg = distill.DistillConfig(args.occl_abs, args.occl_rel, args.conf_min, args.gt_dist_max,
                                args.photo_thresh, args.erosion_radius)
    pgt = distill.make_pseudo_gt(teacher.data, backward.data, I1, I2, conf, gt_flow, gt_valid, cfg)
    io.write_flow(args.out, pgt.flow, pgt.valid)
    print(f"kept {int(pgt.valid.sum())}/{pgt.valid.size} pixels -> {args.out}")
    return 0


def cmd_eval(args):
    pred, gt = io.read_flow(args.pred), io.read_flow(args.gt)
    valid = gt.mask() & pred.mask()
    edges = diagnostics.DEFAULT_BIN_EDGES if args.bins is None else \
        [float(b) for b in args.bins.split(",")] + [float("inf")]
    report = diagnostics.evaluate(pred.data, gt.data, valid, edges)
    print(f"epe {report.epe:.6f}")
    print(f"fl_all {report.fl_all:.6f}")
    print(f"n_valid {report.n_valid}")
    for b in report.histogram:
        mean = "-" if b.mean_epe is None else f"{b.mean_epe:.6f}"
        print(f"bin [{b.lo:g}, {b.hi:g}) count {b.count} mean_epe {mean}")
    if args.csv:
        diagnostics.write_histogram_csv(args.csv, report.histogram)
    return 0


def cmd_viz(args):
    flow = io.read_flow(args.flow)
    rgb = io.colorize_flow(flow.data, args.max_mag)
    rgb[~flow.mask()] = 0
    io.write_image(args.out, rgb)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="pyraflow", description="Coarse-to-fine optical flow toolkit.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("cv-demo", help="cost volumes and WTA flow on a synthetic scene")
    s.add_argument("--mode", choices=("warp", "sample", "both"), default="both")
    s.add_argument("--delta", type=_nonneg_int, default=8)
    s.add_argument("--scene", default="small-object", help="preset[,key=value...], e.g. small-object,seed=3")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--distance", choices=("sad", "corr"), default="sad")
    s.add_argument("--levels", type=_positive_int, default=2)
    s.add_argument("--out", help="directory for flows, renderings and cost slices")
    s.set_defaults(func=cmd_cv_demo)

    s = sub.add_parser("grad-check", help="finite-difference checks of all analytic gradients")
    s.add_argument("--trials", type=_positive_int, default=200)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--tol", type=float, default=DEFAULT_TOL)
    s.add_argument("--perturb", choices=sorted(SUITES),
                   help="corrupt one suite's analytic gradient (harness self-test)")
    s.set_defaults(func=cmd_grad_check)

    s = sub.add_parser("toy-run", help="two-level descent over seeded scenes, trace as CSV")
    s.add_argument("--stop-gradient", type=_on_off, default=False, metavar="{on,off}")
    s.add_argument("--seeds", type=_positive_int, default=4)
    s.add_argument("--seed", type=int, default=0, help="first seed")
    s.add_argument("--iters", type=_nonneg_int, default=200)
    s.add_argument("--step", type=float, default=0.05)
    s.add_argument("--scene", default="small-object")
    s.add_argument("--window", type=_positive_int, default=1, help="moving-average window")
    s.add_argument("--out", help="CSV path (default stdout)")
    s.set_defaults(func=cmd_toy_run)

    d = distill.DistillConfig()
    s = sub.add_parser("distill-filter", help="filter teacher flow into pseudo ground truth")
    s.add_argument("--teacher", required=True, help="forward teacher flow (.flo or KITTI .png)")
    s.add_argument("--backward", required=True, help="backward teacher flow")
    s.add_argument("--image1", required=True)
    s.add_argument("--image2", required=True)
    s.add_argument("--confidence", required=True, help=".npy or grayscale image in [0, 1]")
    s.add_argument("--gt", help="optional sparse ground truth")
    s.add_argument("--out", required=True, help=".png (KITTI) or .flo (+ _valid.png)")
    s.add_argument("--occl-abs", type=float, default=d.occl_abs)
    s.add_argument("--occl-rel", type=float, default=d.occl_rel)
    s.add_argument("--conf-min", type=float, default=d.conf_min)
    s.add_argument("--gt-dist-max", type=float, default=d.gt_dist_max)
    s.add_argument("--photo-thresh", type=float, default=d.photo_thresh)
    s.add_argument("--erosion-radius", type=_nonneg_int, default=d.erosion_radius)
    s.set_defaults(func=cmd_distill_filter)

    s = sub.add_parser("eval", help="EPE, Fl-all and magnitude histogram of a prediction")
    s.add_argument("pred")
    s.add_argument("gt")
    s.add_argument("--bins", help="comma-separated finite bin edges; a last open bin is added")
    s.add_argument("--csv", help="write the histogram as CSV")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("viz", help="colour-code a flow file")
    s.add_argument("flow")
    s.add_argument("--out", required=True)
    s.add_argument("--max-mag", type=float)
    s.set_defaults(func=cmd_viz)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, PyraflowError, ValueError) as exc:
        parser.exit(2, f"pyraflow: error: {exc}\n")


if __name__ == "__main__":
    sys.exit(main())
