"""``mpdo-sim`` command line entry point.

Exit codes: 0 on success, 1 when a check experiment reports failures, 2 for
configuration errors, 3 for numerical failures and 4 for I/O errors.
"""

from __future__ import annotations

import argparse
import sys
from typing import Sequence

import numpy as np

from . import __version__, experiments, numerics

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4

def _cap(text: str) -> int | None:
    """Bond cap; ``none`` or ``0`` mean unbounded."""
    if text.lower() in ("none", "inf", "0"):
        return None
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("caps must be positive")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mpdo-sim", description="Noisy circuit emulation with compressed MPDOs.")
    p.add_argument("experiment", choices=experiments.EXPERIMENTS)
    p.add_argument("--method", choices=experiments.METHODS)
    p.add_argument("--qubits", type=int, dest="n", metavar="N")
    p.add_argument("--depth", type=int, metavar="D")
    p.add_argument("--noise", type=float, nargs="+", metavar="P", help="depolarizing level(s); mms-scan takes several")
    p.add_argument("--sweeps", type=int, metavar="S")
    p.add_argument("--alpha", type=int, choices=(1, 2))
    p.add_argument("--eps", type=float, dest="eps_rel", metavar="E", help="relative weight threshold")
    # caps can be set to None (unbounded), so absence is marked by a missing attribute
    p.add_argument("--chi-max", type=_cap, metavar="C", default=argparse.SUPPRESS, help="entanglement cap ('none' for unbounded)")
    p.add_argument("--r-max", type=_cap, metavar="R", default=argparse.SUPPRESS, help="purification cap ('none' for unbounded)")
    p.add_argument("--seed", type=int, metavar="K")
    p.add_argument("--repeats", type=int, metavar="M")
    p.add_argument("--out", metavar="PATH", help="output directory")
    p.add_argument("--dense-check", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument(
        "--truncate-purification",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="truncate purification bonds after each IPD sweep (default on)",
    )
    p.add_argument(
        "--fixed-bonds",
        action="store_true",
        default=None,
        help="cap bonds after every layer and before IPD sweeps (defaults: eps 0, chi 32, r 2)",
    )
    p.add_argument("--opt-tol", type=float)
    p.add_argument("--opt-max-iters", type=int)
    p.add_argument("--snapshots", action="store_true", default=None, help="save final states as JSON")
    p.add_argument("--chi-init", type=int, help="entanglement dimension of random input states")
    p.add_argument("--r-init", type=int, help="purification dimension of random input states")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def config_from_args(args: argparse.Namespace) -> experiments.RunConfig:
    fields = (
        "method",
        "n",
        "depth",
        "sweeps",
        "alpha",
        "eps_rel",
        "seed",
        "repeats",
        "out",
        "dense_check",
        "truncate_purification",
        "fixed_bonds",
        "opt_tol",
        "opt_max_iters",
        "snapshots",
        "chi_init",
        "r_init",
    )
    opts = {f: getattr(args, f) for f in fields}
    if args.noise is not None:
        opts["noise"] = tuple(args.noise)
    cfg = experiments.make_config(args.experiment, **opts)
    for name in ("chi_max", "r_max"):
        if hasattr(args, name):
            setattr(cfg, name, getattr(args, name))
    cfg.validate()
    return cfg


def _summarize(cfg: experiments.RunConfig, result) -> int:
    if cfg.experiment == "gradcheck":
        failed = [c for c in result if not c.passed]
        print(f"gradcheck: {len(result) - len(failed)}/{len(result)} checks passed")
        return EXIT_CHECK_FAILED if failed else EXIT_OK
    if cfg.experiment == "two-qudit":
        for r in result:
            print(
                f"seed {r.seed}: E2 {r.trace.objective[0]:.4f} -> {r.trace.objective[-1]:.4f}, "
                f"lambda ratio {r.lambda_ratio_left:.2e}/{r.lambda_ratio_right:.2e}, "
                f"fidelity after truncation {r.truncated_fidelity:.6f}"
            )
    elif cfg.experiment == "one-shot":
        for r in result:
            if r.report is not None:
                fid = r.fidelity
                ftxt = "n/a" if fid is None else f"{fid:.5f}"
                print(f"seed {r.seed}: fidelity {ftxt}, memory ratio {r.report.compression_ratio:.4f}")
    elif cfg.experiment == "circuit":
        for run in result:
            last = run.records[-1] if run.records else None
            if last is not None:
                print(
                    f"seed {run.seed}: layer {last.layer} pseudo-fidelity {last.pseudo_fidelity:.6f} "
                    f"memory {last.memory_bytes} avg_chi {last.avg_chi:.2f} avg_r {last.avg_r:.2f}"
                )
    elif cfg.experiment == "mms-scan":
        for row in result:
            if row.layer == cfg.depth:
                print(f"p={row.noise_p}: purity {row.purity_mean:.4e} mms fidelity {row.mms_fidelity_mean:.5f}")
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
        result = experiments.run(cfg)
    except (numerics.NumericError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"mpdo-sim: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"mpdo-sim: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"mpdo-sim: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return _summarize(cfg, result)


if __name__ == "__main__":
    sys.exit(main())
