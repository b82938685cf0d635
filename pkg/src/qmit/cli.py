"""Command line front end.

Every subcommand writes its output file plus a ``<output>.manifest.json``
run manifest recording the argv, the fully resolved configuration, the
input and output paths, the seed, the wall time and the tool version.
``qmit replay --manifest m.json`` re-executes the recorded argv.

Exit codes: 0 on success, 1 on contract or validation errors (including
bad command lines), 2 on resource errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from contextlib import nullcontext
from dataclasses import asdict
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .baselines import IbuConfig, ibu, mim
from .bayes import ARGMAX, MEAN, MitigationConfig, mitigate
from .calibration import CALIBRATION_SHOTS, calibrate, read_records, write_records
from .errors import ContractError, ModeMismatchError, QmitError, ResourceError
from .metrics import rows_to_csv
from .noise_model import ANALOG, BINARY, load_model, save_model
from .simulator import DetectorSpec, ExperimentSpec, load_json, sample_shots, simulate_calibration
from .tally import empirical_frequencies, read_shots, tally_file, threshold_tally, write_shots

METHODS = ("bayes", "ibu", "mim", "raw")
THREADS_ENV = "QMIT_THREADS"


class UsageError(ContractError):
    """Malformed command line."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--threads", type=int, default=None, help=f"cap on worker threads (fallback: ${THREADS_ENV})")
    p.add_argument("--json-errors", action="store_true", help="report errors as JSON on stderr")


def _mitigation_flags(p: argparse.ArgumentParser) -> None:
    d = MitigationConfig()
    p.add_argument("--n-p", type=int, default=d.n_p, help="grid points per pair")
    p.add_argument("--epsilon", type=float, default=d.epsilon, help="TV threshold for convergence")
    p.add_argument("--max-sweeps", type=int, default=d.max_sweeps)
    p.add_argument("--estimator", choices=(ARGMAX, MEAN), default=d.estimator)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qmit", description="Readout error mitigation for qubit registers.")
    parser.add_argument("--version", action="version", version=f"qmit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("calibrate", help="build a detector model from calibration records")
    p.add_argument("--mode", choices=(BINARY, ANALOG), required=True)
    p.add_argument("--n-bin", type=int, default=2, help="analog bins per qubit")
    p.add_argument("--in", dest="inp", required=True, help="calibration records (JSONL)")
    p.add_argument("--out", required=True, help="detector model (JSON)")
    _common(p)

    p = sub.add_parser("simulate", help="sample synthetic shots or calibration records")
    p.add_argument("--spec", required=True, help="experiment spec (JSON, must carry a seed)")
    p.add_argument("--detector-spec", required=True, help="Gaussian cloud detector (JSON)")
    p.add_argument("--out", required=True, help="shots or calibration records (JSONL)")
    _common(p)

    p = sub.add_parser("mitigate", help="pairwise Bayesian mitigation")
    p.add_argument("--detector", required=True)
    p.add_argument("--shots", required=True)
    p.add_argument("--out", required=True, help="result file (JSON)")
    _mitigation_flags(p)
    p.add_argument("--trace-pairs", action="store_true", help="record every pair update in the result")
    _common(p)

    p = sub.add_parser("compare", help="success probability of several mitigators")
    p.add_argument("--methods", default="bayes,ibu,mim", help=f"comma list from {','.join(METHODS)}")
    p.add_argument("--detector", required=True)
    p.add_argument("--shots", required=True)
    p.add_argument("--target", required=True, help="prepared bitstring")
    p.add_argument("--out", required=True, help="table (CSV)")
    p.add_argument("--ibu-iterations", type=int, default=IbuConfig().iterations)
    _mitigation_flags(p)
    _common(p)

    p = sub.add_parser("report", help="render a result trace or comparison table")
    p.add_argument("--in", dest="inp", required=True, help="result JSON or comparison CSV")
    p.add_argument("--out", required=True)
    p.add_argument("--table", choices=("trace", "populations"), default="trace", help="which table of a result file")
    p.add_argument("--format", choices=("csv", "gnuplot"), default="csv")
    _common(p)

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    p.add_argument("--manifest", required=True)
    _common(p)
    return parser


# -- subcommands -------------------------------------------------------------

def _cmd_calibrate(args) -> dict:
    model = calibrate(read_records(args.inp), args.mode, args.n_bin)
    save_model(model, args.out)
    return {"config": {"mode": args.mode, "n_bin": args.n_bin}, "inputs": [args.inp], "seed": None}


def _cmd_simulate(args) -> dict:
    doc = load_json(args.spec)
    det = DetectorSpec.from_dict(load_json(args.detector_spec))
    kind = doc.get("kind", "experiment")
    if kind == "calibration":
        if "seed" not in doc:
            raise ContractError("calibration spec must carry an explicit seed")
        mode = doc.get("mode", ANALOG)
        n_shots = int(doc.get("n_shots", CALIBRATION_SHOTS))
        write_records(simulate_calibration(det, int(doc["seed"]), n_shots, mode), args.out)
        config = {"kind": kind, "seed": int(doc["seed"]), "n_shots": n_shots, "mode": mode}
    elif kind == "experiment":
        exp = ExperimentSpec.from_dict(doc)
        write_shots(sample_shots(exp, det), args.out)
        config = {"kind": kind, **exp.to_dict()}
    else:
        raise ContractError(f"unknown spec kind {kind!r}; expected 'experiment' or 'calibration'")
    config["detector"] = det.to_dict()
    return {"config": config, "inputs": [args.spec, args.detector_spec], "seed": config["seed"]}


def _mitigation_config(args, trace_pairs: bool = False) -> MitigationConfig:
    return MitigationConfig(
        n_p=args.n_p, epsilon=args.epsilon, max_sweeps=args.max_sweeps, estimator=args.estimator, trace_pairs=trace_pairs
    )


def _load_tally(detector: str, shots: str):
    model = load_model(detector)
    shot_file = read_shots(shots)
    if shot_file.mode != model.mode:
        raise ModeMismatchError(
            f"mode mismatch: detector {detector} is {model.mode} but shots {shots} are {shot_file.mode}"
        )
    return model, tally_file(shot_file, model)


def _cmd_mitigate(args) -> dict:
    cfg = _mitigation_config(args, args.trace_pairs)
    model, tally = _load_tally(args.detector, args.shots)
    result = mitigate(tally, model, cfg)
    Path(args.out).write_text(result.to_json())
    return {"config": asdict(cfg), "inputs": [args.detector, args.shots], "seed": None}


def _cmd_compare(args) -> dict:
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    unknown = sorted(set(methods) - set(METHODS))
    if unknown or not methods:
        raise UsageError(f"unknown methods {unknown}; choose from {', '.join(METHODS)}")
    cfg = _mitigation_config(args)
    ibu_cfg = IbuConfig(iterations=args.ibu_iterations)
    model, tally = _load_tally(args.detector, args.shots)
    if len(args.target) != model.n_qubits or set(args.target) - {"0", "1"}:
        raise ContractError(f"target {args.target!r} is not a {model.n_qubits}-qubit bitstring")
    # the baselines work on thresholded data
    binary_tally = threshold_tally(tally, model)
    binary_model = model.binary_view()
    names = binary_tally.active
    rows = []
    for method in methods:
        start = time.perf_counter()
        if method == "bayes":
            p = mitigate(tally, model, cfg).populations.get(args.target, 0.0)
        elif method == "raw":
            p = dict(zip(names, empirical_frequencies(binary_tally))).get(args.target, 0.0)
        else:
            vec = ibu(binary_tally, binary_model, ibu_cfg) if method == "ibu" else mim(binary_tally, binary_model)
            p = dict(zip(names, vec)).get(args.target, 0.0)
        rows.append([method, float(p), time.perf_counter() - start])
    Path(args.out).write_text(rows_to_csv(["method", "success_probability", "seconds"], rows))
    config = {"methods": methods, "target": args.target, "bayes": asdict(cfg), "ibu": asdict(ibu_cfg)}
    return {"config": config, "inputs": [args.detector, args.shots], "seed": None}


def _cmd_report(args) -> dict:
    text = Path(args.inp).read_text()
    gnuplot = args.format == "gnuplot"
    if args.inp.endswith(".json"):
        doc = json.loads(text)
        if args.table == "trace":
            header = ["sweep", "tv", "active_size"]
            rows = [[k + 1, tv, m] for k, (tv, m) in enumerate(zip(doc["tv_trace"], doc["active_sizes"]))]
        else:
            header = ["bitstring", "population"]
            rows = sorted(doc["populations"].items(), key=lambda kv: (-kv[1], kv[0]))
    else:
        lines = [ln.split(",") for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise ContractError(f"{args.inp}: empty table")
        header, rows = lines[0], lines[1:]
    Path(args.out).write_text(rows_to_csv(header, rows, gnuplot=gnuplot))
    return {"config": {"table": args.table, "format": args.format}, "inputs": [args.inp], "seed": None}


def _cmd_replay(args) -> dict:
    doc = load_json(args.manifest)
    argv = doc.get("argv")
    if not isinstance(argv, list) or not argv or argv[0] == "replay":
        raise ContractError(f"{args.manifest}: manifest has no replayable argv")
    inner = build_parser().parse_args(argv)
    _execute(inner, argv)
    return {"config": {"replayed": argv}, "inputs": [args.manifest], "seed": doc.get("seed"), "out": None}


_COMMANDS = {
    "calibrate": _cmd_calibrate,
    "simulate": _cmd_simulate,
    "mitigate": _cmd_mitigate,
    "compare": _cmd_compare,
    "report": _cmd_report,
    "replay": _cmd_replay,
}


def manifest_path(out) -> Path:
    return Path(str(out) + ".manifest.json")


def _thread_cap(args) -> Optional[int]:
    if args.threads is not None:
        n = args.threads
    elif os.environ.get(THREADS_ENV):
        try:
            n = int(os.environ[THREADS_ENV])
        except ValueError:
            raise UsageError(f"${THREADS_ENV} must be an integer, got {os.environ[THREADS_ENV]!r}") from None
    else:
        return None
    if n < 1:
        raise UsageError(f"thread cap must be >= 1, got {n}")
    return n


def _execute(args, argv: Sequence[str]) -> None:
    threads = _thread_cap(args)
    start = time.perf_counter()
    with threadpool_limits(threads) if threads else nullcontext():
        info = _COMMANDS[args.command](args)
    out = info.pop("out", args.out if hasattr(args, "out") else None)
    if out is None:
        return
    manifest = {
        "subcommand": args.command,
        "argv": list(argv),
        "config": info["config"],
        "inputs": info["inputs"],
        "outputs": [str(out)],
        "seed": info["seed"],
        "threads": threads,
        "wall_time": time.perf_counter() - start,
        "version": __version__,
        "numpy_version": np.__version__,
    }
    manifest_path(out).write_text(json.dumps(manifest, indent=2) + "\n")


def _report_error(exc: BaseException, code: int, as_json: bool) -> int:
    if as_json:
        doc = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
        print(json.dumps(doc), file=sys.stderr)
    else:
        print(f"qmit: error: {exc}", file=sys.stderr)
    return code


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Execute one command line and return its exit code."""
    argv = list(sys.argv[1:] if argv is None else argv)
    as_json = "--json-errors" in argv
    try:
        args = build_parser().parse_args(argv)
        _execute(args, argv)
    except SystemExit as exc:  # --help and --version
        return int(exc.code or 0)
    except (ResourceError, MemoryError) as exc:
        return _report_error(exc, 2, as_json)
    except (QmitError, ValueError, OSError, KeyError, TypeError) as exc:
        return _report_error(exc, 1, as_json)
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
