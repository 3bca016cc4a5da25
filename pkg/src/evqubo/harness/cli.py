"""Command-line entry point.

Exit codes: 0 success, 1 unexpected failure, 2 usage, 3 parse error,
4 invariant violation, 5 size guard refusal, 6 assignment infeasible (verify).
"""
from __future__ import annotations

import argparse
import json
import sys
from importlib import resources
from pathlib import Path
from typing import List, Optional

from ..instances import InstanceError
from ..model import ModelError, evaluate, model_to_dict
from ..qubo import PenaltyConfig, TranspileError, default_encodings, dumps_qubo, penalty_audit, transpile
from ..solvers import GuardError, NonSeparableError
from .bench import emit_results, load_benchmark_config, run_benchmark
from .generate import GeneratorParams, generate_instance
from .io import SchemaError, dumps_instance, load_bundle
from .pipeline import METHODS, build_model, run_method

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_PARSE, EXIT_INVARIANT, EXIT_GUARD, EXIT_INFEASIBLE = range(7)


def fixture_path(name: str) -> Path:
    return Path(str(resources.files("evqubo.harness") / "fixtures" / name))


def _penalty(args) -> PenaltyConfig:
    return PenaltyConfig(inequality_mode=args.penalty_mode, lambda_scale=args.lambda_scale)


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _model(args):
    bundle = load_bundle(args.instance)
    return build_model(bundle.instance, bundle.scenarios, bundle.first_stage)


def cmd_generate(args) -> int:
    params = GeneratorParams(args.kind, args.vehicles, args.horizon,
                             args.nodes if args.nodes is not None else (2 if args.kind == "csp" else 1),
                             args.seed, args.levels, args.soc_levels, objective=args.objective,
                             tight_capacity=args.tight_capacity)
    text = dumps_instance(generate_instance(params))
    out = args.out
    if out and (Path(out).is_dir() or not Path(out).suffix):
        out = str(Path(out) / f"{args.kind}-v{args.vehicles}-T{args.horizon}-s{args.seed}.instance")
    _emit(text, out)
    return EXIT_OK


def cmd_build(args) -> int:
    _emit(json.dumps(model_to_dict(_model(args)), indent=2) + "\n", args.out)
    return EXIT_OK


def cmd_transpile(args) -> int:
    model = _model(args)
    enc = default_encodings(model, K=args.levels, K_soc=args.soc_levels, J=args.gen_levels)
    q, vmap = transpile(model, _penalty(args), enc)
    _emit(dumps_qubo(q), args.out)
    print(f"{q.num_bits} bits, {len(q.coefficients)} coefficients, "
          f"{len(vmap.penalties)} penalty terms", file=sys.stderr)
    return EXIT_OK


def cmd_solve(args) -> int:
    model = _model(args)
    res = run_method(model, args.method, seed=args.seed, K=args.levels, K_soc=args.soc_levels,
                     J=args.gen_levels, penalty=_penalty(args))
    payload = {"method": res.method, "objective": res.objective, "feasible": res.feasible,
               "qubo_energy": res.qubo_energy, "num_bits": res.num_bits,
               "assignment": {k: res.assignment[k] for k in sorted(res.assignment)}}
    _emit(json.dumps(payload, indent=2) + "\n", args.out)
    return EXIT_OK


def cmd_bench(args) -> int:
    config = load_benchmark_config(args.config or fixture_path("bench_tiny.json"))
    rows = run_benchmark(config)
    out = args.out or config.out or "bench-out"
    paths = emit_results(rows, out)
    print(f"{len(rows)} rows -> {paths['results']}", file=sys.stderr)
    return EXIT_OK


def cmd_verify(args) -> int:
    model = _model(args)
    try:
        data = json.loads(Path(args.assignment).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(exc.msg, line=exc.lineno) from exc
    values = data.get("assignment", data) if isinstance(data, dict) else None
    if not isinstance(values, dict):
        raise SchemaError("assignment file must map variable names to numbers")
    report = evaluate(model, values)
    lines = [f"objective {report.objective!r}", f"feasible {str(report.feasible).lower()}"]
    lines += [f"violated {label} residual {report.residuals[label]!r}" for label in report.violated]
    lines += [f"exclusion {a} {b}" for a, b in report.exclusion_violations]
    lines += [f"bound {name}" for name in report.bound_violations]
    if args.audit:
        enc = default_encodings(model, K=args.levels, K_soc=args.soc_levels, J=args.gen_levels)
        q, vmap = transpile(model, _penalty(args), enc)
        audit = penalty_audit(model, vmap, vmap.encode(values))
        lines += [f"penalty {e.label} {e.energy!r}" for e in audit.entries if e.energy != 0.0]
        lines.append(f"total_penalty {audit.total_penalty!r}")
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK if report.feasible else EXIT_INFEASIBLE


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--levels", type=int, default=2, metavar="K", help="power levels per variable")
    p.add_argument("--soc-levels", type=int, default=3, metavar="K_SOC")
    p.add_argument("--gen-levels", type=int, default=2, metavar="J")
    p.add_argument("--penalty-mode", choices=("slack_bits", "paper_verbatim"), default="slack_bits")
    p.add_argument("--lambda-scale", type=float, default=2.0)
    p.add_argument("--out", default=None, metavar="PATH")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evqubo", description="EV scheduling models as QUBOs.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic instance")
    p.add_argument("--kind", choices=("v2g", "csp"), default="v2g")
    p.add_argument("--vehicles", type=int, default=1)
    p.add_argument("--horizon", type=int, default=2)
    p.add_argument("--nodes", type=int, default=None)
    p.add_argument("--objective", choices=("cost", "contingency", "weighted"), default="cost")
    p.add_argument("--tight-capacity", action="store_true")
    _common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("build", help="dump the structured model as JSON")
    p.add_argument("instance")
    _common(p)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("transpile", help="export the QUBO coordinate list")
    p.add_argument("instance")
    _common(p)
    p.set_defaults(func=cmd_transpile)

    p = sub.add_parser("solve", help="solve an instance")
    p.add_argument("instance")
    p.add_argument("--method", choices=METHODS, default="sa")
    _common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("bench", help="run a benchmark sweep (bundled fixture config by default)")
    p.add_argument("config", nargs="?", default=None)
    _common(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("verify", help="feasibility audit of an assignment file")
    p.add_argument("instance")
    p.add_argument("assignment")
    p.add_argument("--audit", action="store_true", help="also report QUBO penalty contributions")
    _common(p)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except SchemaError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (InstanceError, ModelError, TranspileError, NonSeparableError) as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except GuardError as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
