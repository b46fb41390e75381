"""Command-line interface: ``dedalus <command> ...``.

Machine outputs are canonical JSON (sorted keys, sorted fact lists) so that
repeated invocations are byte-identical.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import corpus
from .correspondence import ModelCandidate, verify_theorem, windowed_stable_check
from .datalog import DatalogError, Fact
from .frontend import DedalusError, InstanceError, check_dedalus
from .operational import Policy, Scheduler, dumps, run_to_json, simulate, trace, trace_to_json
from .syntax import ParseError, parse_program
from .transform import Mode, transform


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _scheduler(args) -> Scheduler:
    return Scheduler(Policy(args.scheduler), args.seed, args.max_delay)


def _load(args):
    d = corpus.load_program(args.program)
    h = corpus.load_instance(args.instance, d)
    return d, h


def cmd_check(args) -> int:
    text = corpus.resolve(args.program).read_text(encoding="utf-8")
    diags = check_dedalus(text)
    for diag in diags:
        print(diag)
    errors = [d for d in diags if d.severity == "error"]
    if not errors:
        print("valid")
    return 1 if errors else 0


def cmd_transform(args) -> int:
    d = corpus.load_program(args.program)
    _emit(transform(d, args.mode).text(), args.out)
    return 0


def cmd_simulate(args) -> int:
    d, h = _load(args)
    run = simulate(d, h, _scheduler(args), args.transitions)
    _emit(dumps(run_to_json(run)), args.out)
    return 0


def cmd_trace(args) -> int:
    d, h = _load(args)
    run = simulate(d, h, _scheduler(args), args.transitions)
    _emit(dumps(trace_to_json(trace(run))), args.out)
    return 0


def cmd_verify(args) -> int:
    d, h = _load(args)
    report = verify_theorem(d, h, _scheduler(args), args.transitions, args.mode)
    _emit(dumps(report.to_json()), args.out)
    print(report.summary(), file=sys.stderr)
    return 0 if report.passed else 1


def cmd_stable_check(args) -> int:
    program = parse_program(corpus.resolve(args.pure_program).read_text(encoding="utf-8"))
    decl = json.loads(corpus.resolve(args.decl_input).read_text(encoding="utf-8"))
    instance = frozenset(Fact(e[0], tuple(e[1:])) for e in decl)
    model = ModelCandidate.from_json(corpus.resolve(args.model).read_text(encoding="utf-8"))
    verdict = windowed_stable_check(program, instance, model)
    _emit(dumps(verdict.to_json()), args.out)
    print("accepted" if verdict else f"rejected: {len(verdict.missing)} missing, {len(verdict.unexpected)} unexpected", file=sys.stderr)
    return 0 if verdict else 1


def cmd_goldens(args) -> int:
    stale = []
    for path, text in sorted(corpus.golden_files().items()):
        current = path.read_text(encoding="utf-8") if path.exists() else None
        if current == text:
            continue
        if args.check:
            stale.append(path)
        else:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(text, encoding="utf-8")
            print(f"wrote {path}")
    for path in stale:
        print(f"stale: {path}")
    return 1 if stale else 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dedalus", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def run_flags(sp, with_mode: bool = False) -> None:
        sp.add_argument("--program", required=True)
        sp.add_argument("--instance", required=True)
        sp.add_argument("--scheduler", choices=[x.value for x in Policy], default=Policy.ROUND_ROBIN.value)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--transitions", type=int, default=24)
        sp.add_argument("--max-delay", type=int, default=2)
        if with_mode:
            sp.add_argument("--mode", choices=[m.value for m in Mode], default=Mode.CAUSFIN.value)
        sp.add_argument("--out")

    sp = sub.add_parser("check", help="parse and validate a program")
    sp.add_argument("program")
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("transform", help="print the pure Datalog encoding")
    sp.add_argument("--program", required=True)
    sp.add_argument("--mode", choices=[m.value for m in Mode], default=Mode.CAUSFIN.value)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_transform)

    sp = sub.add_parser("simulate", help="simulate a run prefix and write run.json")
    run_flags(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("trace", help="simulate and write the trace")
    run_flags(sp)
    sp.set_defaults(func=cmd_trace)

    sp = sub.add_parser("verify", help="run the run/model roundtrip and report")
    run_flags(sp, with_mode=True)
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("stable-check", help="check a model against a pure program on its window")
    sp.add_argument("--pure-program", required=True)
    sp.add_argument("--decl-input", required=True)
    sp.add_argument("--model", required=True)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_stable_check)

    sp = sub.add_parser("goldens", help="regenerate golden files (or --check them)")
    sp.add_argument("--check", action="store_true")
    sp.set_defaults(func=cmd_goldens)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DedalusError, InstanceError, ParseError, DatalogError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
