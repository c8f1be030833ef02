"""Command-line front end: generation, decomposition, denoising, completion, eval.

Exit codes: 0 success, 2 usage error, 3 data/IO error, 4 numeric abort.
Every command is deterministic given its flags; reports always record the
fully-resolved configuration so a run can be replayed exactly.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import data, fileio
from .admm import SolverAbort
from .model import SolverConfig
from .variants import solve_variant

__all__ = ["main"]

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

VARIANT_FLAGS = {
    "admm2": "admm2",
    "ladmm2": "ladmm2",
    "ladmm3-fro": "ladmm3_fro",
    "ladmm3-nuc": "ladmm3_nuc",
    "admm3-fro": "admm3_fro",
    "admm3-nuc": "admm3_nuc",
}


def _write_json(path, payload):
    with open(path, "w", encoding="ascii") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _add_solver_flags(parser):
    parser.add_argument(
        "--variant", choices=sorted(VARIANT_FLAGS), default="admm2",
        help="solver variant (default admm2)",
    )
    parser.add_argument("--rank", type=int, required=True, help="rank upper bound r")
    parser.add_argument("--alpha", type=float, default=1e-2)
    parser.add_argument(
        "--lambda", dest="lam", type=float, default=None,
        help="sparsity weight; defaults to 1/sqrt(N*max(m,n))",
    )
    parser.add_argument("--rho", type=float, default=1.1)
    parser.add_argument("--tol", type=float, default=1e-5)
    parser.add_argument("--max-iters", type=int, default=1000)
    parser.add_argument(
        "--threads", type=int, default=1,
        help="worker threads; reductions use a fixed order so results do not "
        "depend on this value",
    )


def _solver_config(args, mask=None):
    return SolverConfig(
        rank=args.rank,
        alpha=args.alpha,
        lam=args.lam,
        rho=args.rho,
        tol=args.tol,
        max_iters=args.max_iters,
        mask=mask,
        variant=VARIANT_FLAGS[args.variant],
    )


def _report_payload(report, threads):
    payload = report.to_dict()
    payload["config"]["threads"] = threads
    return payload


def cmd_synth(args):
    spec = data.SynthSpec(
        m=args.m,
        n=args.n,
        n_slices=args.N,
        rank_a=args.rank_a,
        rank_b=args.rank_b,
        p_clean=args.p_clean,
        seed=args.seed,
    )
    low_rank, sparse, observed = data.synth_generate(spec)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fileio.write_rkt(out / "L_true.rkt", low_rank)
    fileio.write_rkt(out / "E_true.rkt", sparse)
    fileio.write_rkt(out / "X.rkt", observed)
    _write_json(
        out / "spec.json",
        {
            "m": spec.m,
            "n": spec.n,
            "N": spec.n_slices,
            "rank_a": spec.rank_a,
            "rank_b": spec.rank_b,
            "p_clean": spec.p_clean,
            "seed": spec.seed,
        },
    )
    return EXIT_OK


def _run_solver(X, cfg, out, threads):
    try:
        model, sparse, report = solve_variant(X, cfg)
    except SolverAbort as exc:
        if exc.report is not None:
            _write_json(out / "report.json", _report_payload(exc.report, threads))
        print(f"error: {exc}", file=sys.stderr)
        return None
    fileio.write_rkt(out / "A.rkt", model.a[:, :, None])
    fileio.write_rkt(out / "B.rkt", model.b[:, :, None])
    fileio.write_rkt(out / "R.rkt", model.core)
    fileio.write_rkt(out / "L.rkt", model.reconstruct())
    fileio.write_rkt(out / "E.rkt", sparse)
    _write_json(out / "report.json", _report_payload(report, threads))
    return model, sparse, report


def cmd_decompose(args):
    X = fileio.read_rkt(args.input)
    mask = None
    if args.mask is not None:
        mask = fileio.read_rkt(args.mask) != 0
        if mask.shape != X.shape:
            raise ValueError(
                f"mask dims {mask.shape} do not match data dims {X.shape}"
            )
    cfg = _solver_config(args, mask=mask)
    cfg.validate_for(X.shape)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = _run_solver(X, cfg, out, args.threads)
    return EXIT_OK if result is not None else EXIT_NUMERIC


def _load_image_stack(directory):
    directory = Path(directory)
    pgm = sorted(directory.glob("*.pgm"))
    ppm = sorted(directory.glob("*.ppm"))
    if pgm and ppm:
        raise ValueError(f"{directory}: mixed PGM and PPM inputs")
    if ppm:
        if len(ppm) != 1:
            raise ValueError(f"{directory}: color stacking expects one PPM image")
        return fileio.read_ppm(ppm[0]), ppm, "ppm"
    if not pgm:
        raise ValueError(f"{directory}: no PGM or PPM images found")
    slices = [fileio.read_pgm(p) for p in pgm]
    dims = {s.shape for s in slices}
    if len(dims) != 1:
        raise ValueError(f"{directory}: images have mixed dimensions {sorted(dims)}")
    return np.stack(slices, axis=2), pgm, "pgm"


def cmd_denoise(args):
    X, paths, kind = _load_image_stack(args.images)
    noisy = X
    if args.noise_level > 0:
        noisy, _ = data.add_salt_pepper(X, args.noise_level, 0.0, 1.0, args.seed)
    cfg = _solver_config(args)
    cfg.validate_for(noisy.shape)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = _run_solver(noisy, cfg, out, args.threads)
    if result is None:
        return EXIT_NUMERIC
    model, _, _ = result
    denoised = np.clip(model.reconstruct(), 0.0, 1.0)
    if kind == "ppm":
        fileio.write_ppm(out / paths[0].name, denoised)
    else:
        for i, path in enumerate(paths):
            fileio.write_pgm(out / path.name, denoised[:, :, i])
    summary = {"images": [p.name for p in paths], "noise_level": args.noise_level}
    if args.clean is not None:
        clean, _, _ = _load_image_stack(args.clean)
        if clean.shape != X.shape:
            raise ValueError("clean reference dims do not match input images")
        summary["psnr_noisy"] = data.psnr(noisy, clean, 1.0)
        summary["psnr_denoised"] = data.psnr(denoised, clean, 1.0)
    _write_json(out / "metrics.json", summary)
    return EXIT_OK


def cmd_complete(args):
    X = fileio.read_rkt(args.input)
    mask = fileio.read_rkt(args.mask) != 0
    if mask.shape != X.shape:
        raise ValueError(f"mask dims {mask.shape} do not match data dims {X.shape}")
    if not mask.any():
        raise ValueError("empty observation mask: nothing to complete from")
    observed = np.where(mask, X, 0.0)
    cfg = _solver_config(args, mask=mask)
    cfg.validate_for(X.shape)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = _run_solver(observed, cfg, out, args.threads)
    if result is None:
        return EXIT_NUMERIC
    model, _, _ = result
    if args.truth is not None:
        truth = fileio.read_rkt(args.truth)
        if truth.shape != X.shape:
            raise ValueError("truth dims do not match data dims")
        completed = model.reconstruct()
        hidden = ~mask
        diff = float(np.linalg.norm((completed - truth)[hidden]))
        ref = float(np.linalg.norm(truth[hidden]))
        _write_json(
            out / "metrics.json",
            {
                "rel_error_unobserved": diff / ref if ref > 0 else diff,
                "psnr_completed": data.psnr(completed, truth, args.range),
                "psnr_zero_filled": data.psnr(observed, truth, args.range),
            },
        )
    return EXIT_OK


def cmd_eval(args):
    estimate = fileio.read_rkt(args.estimate)
    truth = fileio.read_rkt(args.truth)
    if estimate.shape != truth.shape:
        raise ValueError("estimate and truth dims differ")
    if (args.sparse_estimate is None) != (args.sparse_truth is None):
        raise ValueError("--sparse-estimate and --sparse-truth go together")
    if args.sparse_estimate is not None:
        sparse_est = fileio.read_rkt(args.sparse_estimate)
        sparse_tru = fileio.read_rkt(args.sparse_truth)
        result = data.metrics(estimate, sparse_est, truth, sparse_tru, args.range)
        payload = result.to_dict()
    else:
        payload = {
            "rel_error_L": data.metrics(
                estimate, np.zeros_like(estimate), truth, np.zeros_like(truth),
                args.range,
            ).rel_error_L,
            "psnr": data.psnr(estimate, truth, args.range),
        }
    text = json.dumps(payload, indent=2, sort_keys=True)
    if args.out is not None:
        Path(args.out).write_text(text + "\n", encoding="ascii")
    else:
        print(text)
    return EXIT_OK


def _apply_config_file(args, parser, argv):
    """Fill flags from --config JSON for keys not given on the command line."""
    if getattr(args, "config", None) is None:
        return args
    with open(args.config, "r", encoding="ascii") as fh:
        overrides = json.load(fh)
    given = {tok.split("=", 1)[0] for tok in argv if tok.startswith("--")}
    for key, value in overrides.items():
        flag = "--" + key.replace("_", "-")
        if flag in given:
            continue
        dest = key.replace("-", "_")
        if dest == "lambda":
            dest = "lam"
        if not hasattr(args, dest):
            raise ValueError(f"unknown config key {key!r}")
        setattr(args, dest, value)
    return args


def build_parser():
    parser = argparse.ArgumentParser(
        prog="rkca",
        description="Robust Kronecker-separable low-rank tensor decomposition",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a synthetic instance")
    p_synth.add_argument("--m", type=int, required=True)
    p_synth.add_argument("--n", type=int, required=True)
    p_synth.add_argument("--N", type=int, required=True)
    p_synth.add_argument("--rank-a", dest="rank_a", type=int, required=True)
    p_synth.add_argument("--rank-b", dest="rank_b", type=int, required=True)
    p_synth.add_argument("--p-clean", dest="p_clean", type=float, required=True)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--out-dir", required=True)
    p_synth.set_defaults(func=cmd_synth)

    p_dec = sub.add_parser("decompose", help="decompose a tensor file")
    p_dec.add_argument("--input", required=True)
    p_dec.add_argument("--mask", default=None)
    p_dec.add_argument("--out-dir", required=True)
    p_dec.add_argument("--config", default=None, help="JSON file with flag defaults")
    _add_solver_flags(p_dec)
    p_dec.set_defaults(func=cmd_decompose)

    p_den = sub.add_parser("denoise", help="denoise a directory of images")
    p_den.add_argument("--images", required=True)
    p_den.add_argument("--clean", default=None, help="clean reference directory")
    p_den.add_argument("--noise-level", dest="noise_level", type=float, default=0.0)
    p_den.add_argument("--seed", type=int, default=0)
    p_den.add_argument("--out-dir", required=True)
    p_den.add_argument("--config", default=None)
    _add_solver_flags(p_den)
    p_den.set_defaults(func=cmd_denoise)

    p_com = sub.add_parser("complete", help="complete a partially observed tensor")
    p_com.add_argument("--input", required=True)
    p_com.add_argument("--mask", required=True)
    p_com.add_argument("--truth", default=None)
    p_com.add_argument("--range", type=float, default=1.0)
    p_com.add_argument("--out-dir", required=True)
    p_com.add_argument("--config", default=None)
    _add_solver_flags(p_com)
    p_com.set_defaults(func=cmd_complete)

    p_eval = sub.add_parser("eval", help="compare estimates against ground truth")
    p_eval.add_argument("--estimate", required=True)
    p_eval.add_argument("--truth", required=True)
    p_eval.add_argument("--sparse-estimate", dest="sparse_estimate", default=None)
    p_eval.add_argument("--sparse-truth", dest="sparse_truth", default=None)
    p_eval.add_argument("--range", type=float, default=1.0)
    p_eval.add_argument("--out", default=None)
    p_eval.set_defaults(func=cmd_eval)

    return parser


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args = _apply_config_file(args, parser, argv)
        return args.func(args)
    except SolverAbort as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
