"""Command-line front end.

Exit codes: 0 success / CertifiedTrue / Sat, 1 CertifiedFalse, 2 Unknown,
3 and above for errors (see :mod:`etrnn.errors`; 10 for I/O failures).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from typing import Optional, Sequence

from .compile import GadgetIndex, compile_system, preprocess, witness_backward, witness_forward
from .ecf import polynomial_activation
from .errors import EtrnnError, ValidationError
from .formula import DEFAULT_SIGNATURE, Signature, parse, to_json
from .intervals import format_rational
from .network import (
    DataPoint, instance_from_json, instance_to_json, neural_eval_exact, neural_eval_interval,
    verify, weights_from_json, weights_to_json,
)
from .normalize import ConstraintSystem, NameSupply, build_4feas, normalize
from .schedule import Schedule, format_assignment, parse_assignment
from .solve import Budget, Sat, solve

log = logging.getLogger("etrnn")
IO_ERROR = 10


def dumps(obj) -> str:
    """Canonical JSON: sorted keys, two-space indent, trailing newline."""
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def _read(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def _read_json(path: str):
    try:
        return json.loads(_read(path))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON: {exc}") from None


def _write(path: Optional[str], text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _signature(args) -> Signature:
    sig = DEFAULT_SIGNATURE
    for spec in args.activation or []:
        name, _, coeffs = spec.partition("=")
        if not name or not coeffs:
            raise ValidationError(f"--activation expects NAME=c0,c1,...; got {spec!r}")
        sig = sig.with_activation(polynomial_activation(name, [c.strip() for c in coeffs.split(",")]))
    return sig


# -- commands -------------------------------------------------------------------


def cmd_parse(args, sig) -> int:
    _write(args.output, dumps(to_json(parse(_read(args.file), sig))))
    return 0


def cmd_normalize(args, sig) -> int:
    result = normalize(parse(_read(args.file), sig))
    _write(args.output, result.system.to_text())
    if args.schedule:
        _write(args.schedule, dumps({"original_variables": result.original_variables,
                                     "steps": result.schedule.to_json()}))
    log.info("normalized to %d constraints", len(result.system))
    return 0


def cmd_feas4(args, sig) -> int:
    poly = build_4feas(parse(_read(args.file), sig))
    text = poly.render_expanded() if args.expanded else poly.render()
    _write(args.output, text + "\n")
    log.info("degree %d", poly.degree)
    return 0


def cmd_compile(args, sig) -> int:
    system = ConstraintSystem.from_text(_read(args.file), sig)
    system, schedule = preprocess(system, NameSupply(system.variables))
    inst, index = compile_system(system, corrections=not args.no_corrections)
    inst.validate(sig)
    index.schedule = schedule
    _write(args.output, dumps(instance_to_json(inst)))
    if args.sidecar:
        _write(args.sidecar, dumps(index.to_json()))
    return 0


def cmd_witness(args, sig) -> int:
    inst = instance_from_json(_read_json(args.instance), sig)
    index = GadgetIndex.from_json(_read_json(args.sidecar), sig)
    if args.dir == "forward":
        s = parse_assignment(_read_json(args.input))
        if args.schedule:
            doc = _read_json(args.schedule)
            s = _complete(Schedule.from_json(doc["steps"], sig), s, sig)
        s = _complete(index.schedule, s, sig)
        wa = witness_forward(index, s, inst)
        _write(args.output, dumps(weights_to_json(wa)))
    else:
        wa = weights_from_json(_read_json(args.input), sig)
        _write(args.output, dumps(format_assignment(witness_backward(index, wa))))
    return 0


def _complete(schedule: Schedule, s: dict, sig) -> dict:
    ext = schedule.evaluate(s, sig)
    if ext.missing or ext.intervals:
        raise EtrnnError(f"witness extension is partial; not exactly computable: "
                         f"{sorted(set(ext.missing) | set(ext.intervals))[:5]}")
    return ext.values


def cmd_verify(args, sig) -> int:
    inst = instance_from_json(_read_json(args.instance), sig)
    wa = weights_from_json(_read_json(args.weights), sig)
    verdict = verify(inst, wa, args.mode, args.depth, sig)
    _write(args.output, verdict.value + "\n")
    return verdict.exit_code


def cmd_solve(args, sig) -> int:
    budget = Budget(args.budget, args.depth, args.seconds)
    result = solve(parse(_read(args.file), sig), budget, sig)
    if isinstance(result, Sat):
        _write(args.output, dumps({"result": "Sat", "depth": result.witness.depth,
                                   "box": result.witness.to_json()}))
        return 0
    _write(args.output, dumps({"result": "Unknown", "reason": result.reason}))
    return 2


def cmd_eval(args, sig) -> int:
    inst = instance_from_json(_read_json(args.instance), sig)
    wa = weights_from_json(_read_json(args.weights), sig)
    if not 0 <= args.index < len(inst.data_points):
        raise ValidationError(f"data point index {args.index} out of range")
    d: DataPoint = inst.data_points[args.index]
    if args.mode == "exact":
        values = {k: format_rational(v) for k, v in neural_eval_exact(inst.arch, wa, d, sig).items()}
    else:
        values = {k: v.to_json() for k, v in neural_eval_interval(inst.arch, wa, d, args.depth, sig).items()}
    _write(args.output, dumps(values))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="etrnn", description=__doc__.splitlines()[0])
    parser.add_argument("--activation", action="append", metavar="NAME=c0,c1,...",
                        help="declare a polynomial activation c0 + c1 x + c2 x^2 + ...")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, fn, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("-o", "--output", help="output file (default stdout)")
        p.set_defaults(func=fn)
        return p

    p = command("parse", cmd_parse, "dump the AST of a formula as JSON")
    p.add_argument("file")
    p = command("normalize", cmd_normalize, "formula to INV-FLAT constraints")
    p.add_argument("file")
    p.add_argument("--schedule", help="write the witness-extension schedule here")
    p = command("feas4", cmd_feas4, "formula to a degree-4 tau-polynomial")
    p.add_argument("file")
    p.add_argument("--expanded", action="store_true", help="print the expanded polynomial")
    p = command("compile", cmd_compile, "INV-FLAT constraints to a training instance")
    p.add_argument("file")
    p.add_argument("--sidecar", help="write the gadget index here")
    p.add_argument("--no-corrections", action="store_true", help="omit the f(0) correction gadgets")
    p = command("witness", cmd_witness, "map witnesses between assignments and weights")
    p.add_argument("instance")
    p.add_argument("sidecar")
    p.add_argument("input", help="assignment JSON (forward) or weights JSON (backward)")
    p.add_argument("--dir", choices=("forward", "backward"), default="forward")
    p.add_argument("--schedule", help="normalization schedule used to extend a formula witness")
    p = command("verify", cmd_verify, "check a weight assignment against an instance")
    p.add_argument("instance")
    p.add_argument("weights")
    p.add_argument("--mode", choices=("exact", "interval"), default="exact")
    p.add_argument("--depth", type=int, default=30)
    p = command("solve", cmd_solve, "search for a witness box of a strict formula")
    p.add_argument("file")
    p.add_argument("--budget", type=int, default=20000, help="maximum enumeration index")
    p.add_argument("--depth", type=int, default=40, help="maximum evaluation depth")
    p.add_argument("--seconds", type=float, default=None, help="wall-clock cap")
    p = command("eval", cmd_eval, "per-neuron values on one data point")
    p.add_argument("instance")
    p.add_argument("weights")
    p.add_argument("index", type=int)
    p.add_argument("--mode", choices=("exact", "interval"), default="exact")
    p.add_argument("--depth", type=int, default=30)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    level = os.environ.get("ETRNN_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args, _signature(args))
    except EtrnnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return IO_ERROR


if __name__ == "__main__":
    sys.exit(main())
