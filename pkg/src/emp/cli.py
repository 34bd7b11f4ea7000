"""Command-line entry point exposing every subsystem as a subcommand.

Every run emits a machine-readable report: a JSON envelope carrying the
subcommand name, tool version and build hash, a content digest of the
input files, the parsed parameters, the subcommand outputs, and the wall
time.  Reports are written atomically; identical inputs and seeds yield
byte-identical reports apart from the wall-time field.  Exit codes:
0 success, 2 usage or input error, 3 verification failure.
"""

from __future__ import annotations

import argparse
import base64
import csv
import hashlib
import io
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__
from ._files import atomic_write_text
from ._svg import line_plot
from .bounds import bound_report, tight_lower_bound, trivial_bound
from .core import (
    Partition,
    emp_decide,
    emp_decide_partitioned,
    partition_sparsity,
)
from .errors import EmpError
from .image import load_png, prune_image_global, prune_image_patch, save_png
from .net import (
    DenseNet,
    TrainConfig,
    beta_sweep,
    estimate_trace_h,
    evaluate_bound_gap,
    make_blobs,
    make_digit_patterns,
    make_moons,
    net_grad_fn,
    save_checkpoint,
    train,
)
from .simplex import verify_proposition

__all__ = ["main"]

_DATASETS = {"blobs": make_blobs, "moons": make_moons, "digits": make_digit_patterns}


def _build_hash() -> str:
    """Short digest over the package's source files; stable per install."""
    root = os.path.dirname(os.path.abspath(__file__))
    digest = hashlib.sha256()
    for name in sorted(os.listdir(root)):
        if name.endswith(".py"):
            with open(os.path.join(root, name), "rb") as fh:
                digest.update(fh.read())
    return digest.hexdigest()[:12]


def _input_digest(paths) -> str:
    digest = hashlib.sha256()
    for path in paths:
        with open(path, "rb") as fh:
            digest.update(hashlib.sha256(fh.read()).digest())
    return "sha256:" + digest.hexdigest()


def _atomic_write(path: str, data: str) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".emp-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _json_default(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"not JSON serializable: {type(value)!r}")


def _finite_or_none(value: float):
    return None if value is None or not math.isfinite(value) else float(value)


def _emit(args, report: dict, csv_text: str | None = None) -> None:
    """Write (or print) the report in the requested format."""
    fmt = getattr(args, "format", "json")
    if fmt == "csv" and csv_text is not None:
        payload = csv_text
    else:
        payload = json.dumps(report, indent=2, sort_keys=True, default=_json_default) + "\n"
    target = getattr(args, "report", None)
    if target:
        _atomic_write(target, payload)
        print(f"report written to {target}")
    else:
        sys.stdout.write(payload)


def _envelope(subcommand: str, input_paths, parameters: dict, outputs, started: float) -> dict:
    return {
        "subcommand": subcommand,
        "version": __version__,
        "build_hash": _build_hash(),
        "input_digest": _input_digest(input_paths) if input_paths else None,
        "parameters": parameters,
        "outputs": outputs,
        "wall_time_s": round(time.time() - started, 6),
    }


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


# ----------------------------------------------------------------------
# input parsing
# ----------------------------------------------------------------------

def _read_scores(path: str) -> np.ndarray:
    """Scores from a JSON array or CSV (one value per line or comma row)."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read().strip()
    if not text:
        raise ValueError(f"{path}: empty score file")
    if text.startswith("["):
        values = json.loads(text)
        return np.asarray(values, dtype=np.float64).ravel()
    values = []
    for line in text.splitlines():
        for cell in line.split(","):
            cell = cell.strip()
            if cell:
                values.append(float(cell))
    if not values:
        raise ValueError(f"{path}: no numeric entries found")
    return np.asarray(values, dtype=np.float64)


def _read_partition(path: str) -> Partition:
    """Partition from a JSON list of index arrays."""
    with open(path, "r", encoding="utf-8") as fh:
        groups = json.load(fh)
    if not isinstance(groups, list) or not all(isinstance(g, list) for g in groups):
        raise ValueError(f"{path}: expected a JSON list of index arrays")
    return Partition([np.asarray(g, dtype=np.intp) for g in groups])


def _mask_b64(mask: np.ndarray) -> str:
    return base64.b64encode(np.packbits(mask.astype(np.uint8)).tobytes()).decode("ascii")


def _decision_dict(decision) -> dict:
    return {
        "n": decision.size,
        "n_eff": decision.n_eff,
        "beta": decision.beta,
        "keep_count": decision.keep_count,
        "s_eff": decision.s_eff,
        "sparsity": decision.sparsity,
        "kept_indices": decision.kept_indices.tolist(),
        "mask": _mask_b64(decision.mask),
        "mask_encoding": "base64 of packbits, most-significant bit first, zero-padded",
    }


# ----------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------

def _cmd_prune_scores(args) -> int:
    started = time.time()
    scores = _read_scores(args.scores)
    inputs = [args.scores]
    if args.partition:
        inputs.append(args.partition)
        partition = _read_partition(args.partition)
        decisions = emp_decide_partitioned(scores, partition, args.beta)
        outputs = {
            "n": int(scores.size),
            "beta": args.beta,
            "sparsity": partition_sparsity(decisions, scores.size),
            "groups": [dict(_decision_dict(d), group=i) for i, d in enumerate(decisions)],
        }
        rows = [
            (i, d.size, d.n_eff, d.beta, d.keep_count, repr(d.s_eff), repr(d.sparsity))
            for i, d in enumerate(decisions)
        ]
    else:
        decision = emp_decide(scores, args.beta)
        outputs = _decision_dict(decision)
        rows = [
            (0, decision.size, decision.n_eff, decision.beta, decision.keep_count,
             repr(decision.s_eff), repr(decision.sparsity))
        ]
    report = _envelope(
        "prune-scores", inputs,
        {"scores": args.scores, "partition": args.partition, "beta": args.beta},
        outputs, started,
    )
    _emit(args, report, _csv_text(
        ("group", "n", "n_eff", "beta", "keep_count", "s_eff", "sparsity"), rows))
    return 0


def _cmd_bounds(args) -> int:
    started = time.time()
    if not args.sweep and args.nu is None:
        raise ValueError("provide --nu for a single report or --sweep for the full curve")
    if args.format is None:
        args.format = "csv" if args.sweep else "json"
    if args.sweep:
        rows = []
        for nu in range(1, args.n + 1):
            tight = tight_lower_bound(args.n, nu)
            rows.append({
                "nu": nu,
                "trivial": trivial_bound(args.n, nu),
                "tight": tight,
                "gap": 1.0 - tight,
            })
        outputs = {"n": args.n, "rows": rows}
        csv_text = _csv_text(
            ("nu", "trivial", "tight", "gap"),
            [(r["nu"], repr(r["trivial"]), repr(r["tight"]), repr(r["gap"])) for r in rows],
        )
        if args.svg:
            nus = [r["nu"] for r in rows]
            line_plot(
                [
                    ("tight bound", nus, [r["tight"] for r in rows]),
                    ("trivial bound", nus, [r["trivial"] for r in rows]),
                ],
                args.svg,
                title=f"retained-mass lower bounds, N={args.n}",
                xlabel="effective number",
                ylabel="bound on retained mass",
            )
    else:
        rep = bound_report(args.n, args.nu, observed_s_eff=args.observed)
        outputs = {
            "n": rep.n,
            "nu": rep.nu,
            "trivial_bound": rep.trivial_bound,
            "tight_bound": rep.tight_bound,
            "approx_bound": rep.approx_bound,
            "observed_s_eff": rep.observed_s_eff,
            "slack": rep.slack,
        }
        csv_text = _csv_text(
            ("n", "nu", "trivial", "tight", "approx", "observed", "slack"),
            [(rep.n, rep.nu, repr(rep.trivial_bound), repr(rep.tight_bound),
              "" if rep.approx_bound is None else repr(rep.approx_bound),
              "" if rep.observed_s_eff is None else repr(rep.observed_s_eff),
              "" if rep.slack is None else repr(rep.slack))],
        )
    report = _envelope(
        "bounds", [],
        {"n": args.n, "nu": args.nu, "sweep": bool(args.sweep), "observed": args.observed},
        outputs, started,
    )
    _emit(args, report, csv_text)
    return 0


def _cmd_verify_geometry(args) -> int:
    started = time.time()
    nus = [int(x) for x in args.nu.split(",")] if args.nu else None
    rep = verify_proposition(args.n, nu_range=nus, budget=args.budget, seed=args.seed)
    checks = [
        {
            "nu": c.nu,
            "closed_form": c.closed_form,
            "brute_min": c.brute_min,
            "gap": c.brute_min - c.closed_form,
            "feasible_samples": c.feasible_samples,
            "lower_ok": c.lower_ok,
            "tightness_ok": c.tightness_ok,
            "point_value_ok": c.point_value_ok,
            "closure_ok": c.closure_ok,
            "passed": c.passed,
        }
        for c in rep.checks
    ]
    outputs = {
        "n": rep.n,
        "budget": rep.budget,
        "seed": rep.seed,
        "all_passed": rep.all_passed,
        "checks": checks,
    }
    if args.svg:
        nus_x = [c["nu"] for c in checks]
        line_plot(
            [
                ("brute-force min", nus_x, [c["brute_min"] for c in checks]),
                ("closed form", nus_x, [c["closed_form"] for c in checks]),
            ],
            args.svg,
            title=f"level-set minima, N={rep.n}",
            xlabel="effective number",
            ylabel="min retained mass",
        )
    report = _envelope(
        "verify-geometry", [],
        {"n": args.n, "nu": args.nu, "budget": args.budget, "seed": args.seed},
        outputs, started,
    )
    _emit(args, report, _csv_text(
        ("nu", "closed_form", "brute_min", "gap", "feasible_samples", "passed"),
        [(c["nu"], repr(c["closed_form"]), repr(c["brute_min"]), repr(c["gap"]),
          c["feasible_samples"], c["passed"]) for c in checks],
    ))
    return 0 if rep.all_passed else 3


def _cmd_prune_image(args) -> int:
    started = time.time()
    img = load_png(args.input)
    if args.mode == "global":
        outcome = prune_image_global(img, args.beta)
    else:
        outcome = prune_image_patch(img, args.beta, patch=args.patch)
    save_png(outcome.pruned, args.output)
    with open(args.output, "rb") as fh:
        out_digest = "sha256:" + hashlib.sha256(fh.read()).hexdigest()
    outputs = {
        "mode": outcome.mode,
        "beta": outcome.beta,
        "patch": outcome.patch,
        "height": int(img.shape[0]),
        "width": int(img.shape[1]),
        "sparsity": outcome.sparsity,
        "ssim": outcome.ssim,
        "psnr_db": _finite_or_none(outcome.psnr_db),
        "channels": [
            {
                "name": "RGB"[c],
                "sparsity": outcome.channel_sparsity[c],
                "ssim": outcome.channel_ssim[c],
                "psnr_db": _finite_or_none(outcome.channel_psnr[c]),
                "passthrough": outcome.passthrough_channels[c],
                "zero_score_tiles": outcome.zero_score_tiles[c],
            }
            for c in range(3)
        ],
        "output": args.output,
        "output_digest": out_digest,
    }
    report = _envelope(
        "prune-image", [args.input],
        {"input": args.input, "output": args.output, "mode": args.mode,
         "patch": args.patch, "beta": args.beta},
        outputs, started,
    )
    _emit(args, report)
    return 0


def _cmd_demo_net(args) -> int:
    started = time.time()
    arch = tuple(int(x) for x in args.arch.split(","))
    betas = [float(x) for x in args.betas.split(",")]
    data = _DATASETS[args.dataset](seed=args.seed)
    result = train(DenseNet.init(arch, seed=args.seed), data,
                   TrainConfig(epochs=args.epochs, lr=args.lr,
                               batch_size=args.batch_size, seed=args.seed))
    modes = ("global", "block") if args.mode == "both" else (args.mode,)
    sweep = beta_sweep(result.net, data, betas, modes=modes)

    trace = None
    if args.trace_probes > 0:
        estimate = estimate_trace_h(
            net_grad_fn(result.net, data),
            result.net.flatten(),
            probes=args.trace_probes,
            seed=args.seed,
        )
        trace = {"mean": estimate.mean, "stderr": estimate.stderr, "probes": estimate.probes}

    rows = []
    for cell in sweep:
        row = {
            "beta": cell.beta,
            "mode": cell.mode,
            "sparsity": cell.sparsity,
            "rho": cell.rho,
            "dense_loss": cell.dense_loss,
            "pruned_loss": cell.pruned_loss,
            "epsilon": cell.epsilon,
            "dense_acc": cell.dense_acc,
            "pruned_acc": cell.pruned_acc,
            "delta_theta_sq": cell.delta_theta_sq,
        }
        if trace is not None:
            gap = evaluate_bound_gap(cell, trace["mean"])
            row["lemma_bound"] = gap.lemma_bound
            row["asymptotic_bound"] = gap.asymptotic_bound
        rows.append(row)

    if args.checkpoint:
        save_checkpoint(result.net, args.checkpoint)

    outputs = {
        "dataset": args.dataset,
        "arch": list(arch),
        "seed": args.seed,
        "epochs": args.epochs,
        "dense": {
            "train_loss": result.train_loss,
            "test_loss": result.test_loss,
            "train_acc": result.train_acc,
            "test_acc": result.test_acc,
        },
        "trace_h": trace,
        "sweep": rows,
    }
    report = _envelope(
        "demo-net", [],
        {"dataset": args.dataset, "arch": args.arch, "epochs": args.epochs,
         "lr": args.lr, "batch_size": args.batch_size, "seed": args.seed,
         "betas": args.betas, "mode": args.mode, "trace_probes": args.trace_probes},
        outputs, started,
    )
    header = ("beta", "mode", "sparsity", "rho", "dense_loss", "pruned_loss",
              "epsilon", "dense_acc", "pruned_acc")
    _emit(args, report, _csv_text(
        header,
        [tuple(repr(r[k]) if isinstance(r[k], float) else r[k] for k in header) for r in rows],
    ))
    return 0


# ----------------------------------------------------------------------
# parser
# ----------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="emp",
        description="Adaptive top-k pruning with certified retained-mass bounds.",
        epilog="Set EMP_THREADS to cap internal parallelism (default 1).",
    )
    parser.add_argument(
        "--version", action="version",
        version=f"emp {__version__} (build {_build_hash()})",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prune-scores", help="decide a mask for a score file")
    p.add_argument("--scores", required=True, help="CSV or JSON array of scores")
    p.add_argument("--partition", default=None, help="JSON list of index groups")
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--report", default=None)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.set_defaults(handler=_cmd_prune_scores)

    p = sub.add_parser("bounds", help="closed-form retained-mass bounds")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--nu", type=int, default=None)
    p.add_argument("--observed", type=float, default=None, help="observed retained mass")
    p.add_argument("--sweep", action="store_true", help="emit the whole nu curve")
    p.add_argument("--report", default=None)
    # sweeps default to CSV (plot-ready), single reports to JSON
    p.add_argument("--format", choices=("json", "csv"), default=None)
    p.add_argument("--svg", default=None, help="optional plot of the sweep")
    p.set_defaults(handler=_cmd_bounds)

    p = sub.add_parser("verify-geometry", help="brute-force certification of the bound")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--nu", default=None, help="comma list, default 2..n-1")
    p.add_argument("--budget", type=int, default=200_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", default=None)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--svg", default=None)
    p.set_defaults(handler=_cmd_verify_geometry)

    p = sub.add_parser("prune-image", help="featurewise pruning of an RGB PNG")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--mode", choices=("global", "patch"), default="global")
    p.add_argument("--patch", type=int, default=4)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--report", default=None)
    p.set_defaults(handler=_cmd_prune_image)

    p = sub.add_parser("demo-net", help="train, prune, and measure a tiny dense net")
    p.add_argument("--dataset", choices=sorted(_DATASETS), default="blobs")
    p.add_argument("--arch", default="2,16,2", help="comma-separated layer widths")
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--betas", default="0.5,0.75,1,1.25,1.5,2")
    p.add_argument("--mode", choices=("global", "block", "both"), default="both")
    p.add_argument("--trace-probes", type=int, default=0,
                   help="Hutchinson probes for the Hessian trace (0 = skip)")
    p.add_argument("--checkpoint", default=None, help="write trained parameters here")
    p.add_argument("--report", default=None)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.set_defaults(handler=_cmd_demo_net)

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except (EmpError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
