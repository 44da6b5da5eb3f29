"""Command-line interface: solve | run | gen-synthetic | eval | inspect-bank."""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import metrics, ot, pipeline, sampling, synth, tensor_io


def _load_marginal(arg: str, length: int, name: str) -> np.ndarray:
    if arg == "uniform":
        return np.full(length, 1.0 / length)
    v = tensor_io.load_tensor(arg).astype(np.float64).reshape(-1)
    if v.shape[0] != length:
        raise ValueError(f"{name} marginal has length {v.shape[0]}, expected {length}")
    if (v < 0.0).any():
        raise ValueError(f"{name} marginal has negative entries")
    total = float(v.sum())
    if abs(total - 1.0) > 1e-5:
        raise ValueError(f"{name} marginal sums to {total}, not 1")
    return v / total  # absorb float32 storage rounding


def _cmd_solve(args) -> int:
    scores = tensor_io.load_tensor(args.scores).astype(np.float64)
    if scores.ndim != 2:
        raise ValueError("scores file must hold a rank-2 tensor")
    c, n = scores.shape
    marg = ot.Marginals(
        _load_marginal(args.r, c, "row"), _load_marginal(args.h, n, "column")
    )
    plan = ot.sinkhorn(
        scores, marg, epsilon=args.epsilon, max_iters=args.max_iters, tol=args.tol
    )
    tensor_io.save_tensor(args.out, plan.matrix.astype(np.float32))
    print(
        json.dumps(
            {
                "converged": plan.converged,
                "iterations": plan.iterations_used,
                "marginal_error": plan.marginal_error,
            }
        )
    )
    if not plan.converged:
        print("solver did not converge within the sweep budget", file=sys.stderr)
        return 1
    return 0


def _cmd_gen_synthetic(args) -> int:
    prior = None
    if args.prior:
        prior = tuple(float(x) for x in args.prior.split(","))
    spec = synth.WorldSpec(
        num_classes=args.classes,
        feature_dim=args.dim,
        class_prior=prior if prior is not None else synth.DEFAULT_PRIOR[: args.classes],
        noise_sigma=args.noise_sigma,
        label_noise=args.label_noise,
        image_size=(args.height, args.width),
        n_images=args.images,
        seed=args.seed,
        cells_per_image=args.cells,
        classifier_temp=args.classifier_temp,
    )
    world = synth.generate(spec)
    os.makedirs(args.out, exist_ok=True)
    for sub in ("features", "pst", "truth"):
        os.makedirs(os.path.join(args.out, sub), exist_ok=True)
    entries = []
    for i in range(spec.n_images):
        names = {
            "features": f"features/{i:04d}.slt1",
            "pst": f"pst/{i:04d}.slt1",
            "truth": f"truth/{i:04d}.sll1",
        }
        tensor_io.save_tensor(os.path.join(args.out, names["features"]), world.features[i])
        tensor_io.save_tensor(os.path.join(args.out, names["pst"]), world.classifier_probs[i])
        tensor_io.save_labels(os.path.join(args.out, names["truth"]), world.truth[i])
        entries.append(names)
    manifest = {
        "num_classes": spec.num_classes,
        "feature_dim": spec.feature_dim,
        "world": {
            "num_classes": spec.num_classes,
            "feature_dim": spec.feature_dim,
            "class_prior": list(spec.class_prior),
            "noise_sigma": spec.noise_sigma,
            "label_noise": spec.label_noise,
            "image_size": list(spec.image_size),
            "n_images": spec.n_images,
            "seed": spec.seed,
            "cells_per_image": spec.cells_per_image,
            "classifier_temp": spec.classifier_temp,
        },
        "images": entries,
    }
    with open(os.path.join(args.out, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    print(f"wrote {spec.n_images} images to {args.out}")
    return 0


def _cmd_run(args) -> int:
    cfg = (
        pipeline.PipelineConfig.from_json(args.config)
        if args.config
        else pipeline.PipelineConfig()
    )
    if args.data:
        cfg.data = args.data
    if args.out:
        cfg.out = args.out
    if args.seed is not None:
        cfg.seed = args.seed
    if args.epochs is not None:
        cfg.epochs = args.epochs
    if args.equal_partition:
        cfg.equal_partition = True
    if not cfg.data or not cfg.out:
        raise ValueError("run requires --data and --out (or config keys data/out)")
    corpus = pipeline.load_corpus(cfg.data)
    result = pipeline.run_pipeline(cfg, corpus)
    os.makedirs(cfg.out, exist_ok=True)
    pipeline.write_outputs(cfg.out, cfg, corpus, result)
    last = result.reports[-1]
    print(
        json.dumps(
            {
                "epochs": cfg.epochs,
                "images": len(result.labels),
                "final_l_sl": last.l_sl,
                "final_rectified_accuracy": last.rectified_accuracy,
                "delta_pseudo": result.delta_pseudo.tolist(),
            }
        )
    )
    return 0


def _cmd_eval(args) -> int:
    pred = tensor_io.load_labels(args.pred)
    truth = tensor_io.load_labels(args.truth, args.classes)
    res = metrics.evaluate(pred, truth, args.classes)
    as_list = lambda v: [None if np.isnan(x) else float(x) for x in v]
    payload = {
        "iou": as_list(res.iou),
        "miou": res.miou,
        "pa": as_list(res.pa),
        "mpa": res.mpa,
    }
    print(json.dumps(payload))
    if args.csv:
        new = not os.path.exists(args.csv)
        with open(args.csv, "a") as fh:
            if new:
                cols = [f"iou_{i}" for i in range(args.classes)]
                cols += ["miou"] + [f"pa_{i}" for i in range(args.classes)] + ["mpa"]
                fh.write("pred,truth," + ",".join(cols) + "\n")
            vals = list(res.iou) + [res.miou] + list(res.pa) + [res.mpa]
            fh.write(
                f"{args.pred},{args.truth},"
                + ",".join("" if np.isnan(v) else f"{v:.6f}" for v in vals)
                + "\n"
            )
    return 0


def _cmd_inspect_bank(args) -> int:
    sidecar = args.meta or os.path.splitext(args.bank)[0] + ".json"
    bank = sampling.FeatureBank.load(args.bank, sidecar)
    _, hints = bank.snapshot()
    histogram = {int(k): int(v) for k, v in zip(*np.unique(hints, return_counts=True))}
    print(
        json.dumps(
            {
                "path": args.bank,
                "capacity": bank.capacity,
                "size": bank.size,
                "dim": bank.dim,
                "total_pushed": bank.total_pushed,
                "total_evicted": bank.total_evicted,
                "class_histogram": histogram,
            }
        )
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="selflab",
        description="Pixel-level self-labeling: transport-based cluster assignment, "
        "pseudo-label rectification, and class-distribution alignment.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="run the transport solver on score files")
    p.add_argument("--scores", required=True, help="SLT1 file with a C x N score matrix")
    p.add_argument("--r", default="uniform", help='SLT1 path or "uniform"')
    p.add_argument("--h", default="uniform", help='SLT1 path or "uniform"')
    p.add_argument("--epsilon", type=float, default=0.05)
    p.add_argument("--tol", type=float, default=ot.DEFAULT_TOL)
    p.add_argument("--max-iters", type=int, default=ot.DEFAULT_MAX_ITERS)
    p.add_argument("--out", required=True, help="SLT1 path for the plan")
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("gen-synthetic", help="write a synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--classes", type=int, default=5)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--images", type=int, default=40)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--noise-sigma", type=float, default=0.25)
    p.add_argument("--label-noise", type=float, default=0.375)
    p.add_argument("--classifier-temp", type=float, default=0.45)
    p.add_argument("--cells", type=int, default=40)
    p.add_argument("--prior", default=None, help="comma-separated class prior")
    p.set_defaults(func=_cmd_gen_synthetic)

    p = sub.add_parser("run", help="run the self-labeling pipeline")
    p.add_argument("--config", default=None, help="JSON file mirroring PipelineConfig")
    p.add_argument("--data", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--equal-partition", action="store_true")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("eval", help="score a prediction against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--csv", default=None, help="append a CSV row here")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("inspect-bank", help="summarize a bank checkpoint")
    p.add_argument("--bank", required=True, help="SLT1 bank checkpoint")
    p.add_argument("--meta", default=None, help="sidecar JSON (default: next to bank)")
    p.set_defaults(func=_cmd_inspect_bank)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError, RuntimeError, tensor_io.TensorIOError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
