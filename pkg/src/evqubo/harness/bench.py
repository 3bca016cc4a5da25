"""Benchmark sweeps over (instance, solver, seed) and CSV emission."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

from ..qubo import PenaltyConfig, default_encodings
from ..solvers import GuardError, exact_discrete_reference
from ..solvers.reference import encoded_bits
from .generate import GeneratorParams, generate_instance
from .io import SchemaError, load_bundle
from .pipeline import METHODS, build_model, run_method

__all__ = [
    "SolverSpec",
    "BenchmarkConfig",
    "ResultRow",
    "RESULT_COLUMNS",
    "SUMMARY_COLUMNS",
    "TIMING_COLUMNS",
    "load_benchmark_config",
    "run_benchmark",
    "emit_results",
]

RESULT_COLUMNS = ("instance", "solver", "seed", "penalty_mode", "num_bits", "objective",
                  "qubo_energy", "feasible", "oracle_objective", "gap", "status", "message")
TIMING_COLUMNS = ("instance", "solver", "seed", "wall_time")
SUMMARY_COLUMNS = ("solver", "penalty_mode", "rows", "errors", "feasible_rate", "zero_gap_rate",
                   "mean_gap")


@dataclass(frozen=True)
class SolverSpec:
    name: str
    sweeps: Optional[int] = None
    restarts: Optional[int] = None

    def __post_init__(self):
        if self.name not in METHODS:
            raise ValueError(f"unknown solver {self.name!r}; choose from {', '.join(METHODS)}")


@dataclass(frozen=True)
class BenchmarkConfig:
    solvers: Tuple[SolverSpec, ...]
    seeds: Tuple[int, ...]
    instances: Tuple[str, ...] = ()
    generate: Tuple[GeneratorParams, ...] = ()
    penalty_mode: str = "slack_bits"
    K: int = 2
    K_soc: int = 3
    J: int = 2
    lambda_scale: float = 2.0
    oracle_max_bits: int = 26
    out: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "solvers", tuple(self.solvers))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "instances", tuple(str(p) for p in self.instances))
        object.__setattr__(self, "generate", tuple(self.generate))
        if not self.solvers:
            raise ValueError("benchmark config needs at least one solver")
        if not self.seeds:
            raise ValueError("benchmark config needs at least one seed")
        if not self.instances and not self.generate:
            raise ValueError("benchmark config needs instances or generator entries")
        PenaltyConfig(inequality_mode=self.penalty_mode, lambda_scale=self.lambda_scale)


@dataclass(frozen=True)
class ResultRow:
    instance: str
    solver: str
    seed: int
    penalty_mode: str
    num_bits: Optional[int] = None
    objective: Optional[float] = None
    qubo_energy: Optional[float] = None
    feasible: Optional[bool] = None
    oracle_objective: Optional[float] = None
    gap: Optional[float] = None
    status: str = "ok"
    message: str = ""
    wall_time: float = field(default=0.0, compare=False)

    def __post_init__(self):
        if self.gap is not None and self.gap < 0:
            raise ValueError("gap must be >= 0")

    def sort_key(self):
        return (self.instance, self.solver, self.seed)


def load_benchmark_config(path: Union[str, Path]) -> BenchmarkConfig:
    """Read a JSON benchmark config; instance paths resolve against its directory."""
    p = Path(path)
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(exc.msg, line=exc.lineno) from exc
    except OSError as exc:
        raise SchemaError(f"cannot read {p}: {exc.strerror}") from exc
    if not isinstance(data, dict):
        raise SchemaError("benchmark config must be an object")
    solvers = []
    for i, s in enumerate(data.get("solvers", [])):
        if isinstance(s, str):
            s = {"name": s}
        if not isinstance(s, dict) or "name" not in s:
            raise SchemaError("solver entry needs a name", field=f"solvers[{i}]")
        solvers.append(SolverSpec(s["name"], s.get("sweeps"), s.get("restarts")))
    gens = []
    for i, g in enumerate(data.get("generate", [])):
        if not isinstance(g, dict):
            raise SchemaError("expected an object", field=f"generate[{i}]")
        gens.append(GeneratorParams(**g))
    base = p.parent
    instances = [str((base / ip).resolve()) if not Path(ip).is_absolute() else ip
                 for ip in data.get("instances", [])]
    known = {"solvers", "generate", "instances", "seeds", "penalty_mode", "K", "K_soc", "J",
             "lambda_scale", "oracle_max_bits", "out"}
    extra = sorted(set(data) - known)
    if extra:
        raise SchemaError(f"unknown keys {extra}", field=extra[0])
    return BenchmarkConfig(
        solvers=tuple(solvers), seeds=tuple(data.get("seeds", ())), instances=tuple(instances),
        generate=tuple(gens), penalty_mode=data.get("penalty_mode", "slack_bits"),
        K=int(data.get("K", 2)), K_soc=int(data.get("K_soc", 3)), J=int(data.get("J", 2)),
        lambda_scale=float(data.get("lambda_scale", 2.0)),
        oracle_max_bits=int(data.get("oracle_max_bits", 26)), out=data.get("out"))


def _instances(config: BenchmarkConfig):
    for path in config.instances:
        bundle = load_bundle(path)
        yield Path(path).stem, bundle.instance, bundle.scenarios, bundle.first_stage
    for g in config.generate:
        name = f"gen-{g.kind}-v{g.vehicles}-T{g.horizon}-n{g.nodes}-s{g.seed}"
        yield name, generate_instance(g), None, ()


def run_benchmark(config: BenchmarkConfig) -> List[ResultRow]:
    """Rows in canonical (instance, solver, seed) order; failures become error rows."""
    penalty = PenaltyConfig(inequality_mode=config.penalty_mode, lambda_scale=config.lambda_scale)
    rows: List[ResultRow] = []
    for name, instance, scenarios, first_stage in _instances(config):
        model = build_model(instance, scenarios, first_stage)
        oracle = None
        enc = default_encodings(model, K=config.K, K_soc=config.K_soc, J=config.J)
        if encoded_bits(model, enc) <= config.oracle_max_bits:
            ref = exact_discrete_reference(model, enc, max_bits=config.oracle_max_bits)
            oracle = ref.objective if ref.feasible else None
        for solver in config.solvers:
            for seed in config.seeds:
                rows.append(_row(name, model, solver, seed, config, penalty, oracle))
    rows.sort(key=ResultRow.sort_key)
    return rows


def _row(name, model, solver: SolverSpec, seed: int, config: BenchmarkConfig,
         penalty: PenaltyConfig, oracle: Optional[float]) -> ResultRow:
    base = dict(instance=name, solver=solver.name, seed=seed, penalty_mode=config.penalty_mode)
    try:
        out = run_method(model, solver.name, seed=seed, K=config.K, K_soc=config.K_soc, J=config.J,
                         penalty=penalty, sweeps=solver.sweeps, restarts=solver.restarts,
                         max_bits=config.oracle_max_bits)
    except GuardError as exc:
        return ResultRow(**base, status="guard", message=str(exc))
    except Exception as exc:  # recorded in the row, never aborts the sweep
        return ResultRow(**base, status="error", message=f"{type(exc).__name__}: {exc}")
    gap = None
    if oracle is not None and out.feasible:
        gap = out.objective - oracle
        gap = 0.0 if gap < 1e-9 * max(1.0, abs(oracle)) else gap
    return ResultRow(**base, num_bits=out.num_bits, objective=out.objective,
                     qubo_energy=out.qubo_energy, feasible=out.feasible, oracle_objective=oracle,
                     gap=gap, wall_time=out.wall_time)


def _fmt(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _table(columns: Sequence[str], records: Sequence[Sequence[Any]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for rec in records:
        w.writerow([_fmt(v) for v in rec])
    return buf.getvalue()


def summarize(rows: Sequence[ResultRow]) -> List[Tuple[Any, ...]]:
    groups: Dict[Tuple[str, str], List[ResultRow]] = {}
    for r in rows:
        groups.setdefault((r.solver, r.penalty_mode), []).append(r)
    out = []
    for (solver, mode), rs in sorted(groups.items()):
        done = [r for r in rs if r.status == "ok"]
        gaps = [r.gap for r in done if r.gap is not None]
        feas = sum(1 for r in done if r.feasible)
        out.append((solver, mode, len(rs), len(rs) - len(done),
                    feas / len(done) if done else None,
                    sum(1 for g in gaps if g == 0.0) / len(gaps) if gaps else None,
                    sum(gaps) / len(gaps) if gaps else None))
    return out


def emit_results(rows: Sequence[ResultRow], directory: Union[str, Path]) -> Dict[str, Path]:
    """Write results.csv, timings.csv and summary.csv; returns their paths.

    results.csv and summary.csv depend only on the rows' content, so identical
    sweeps give byte-identical files; wall times go to timings.csv.
    """
    d = Path(directory)
    rows = sorted(rows, key=ResultRow.sort_key)
    files = {
        "results": (RESULT_COLUMNS, [[getattr(r, c) for c in RESULT_COLUMNS] for r in rows]),
        "timings": (TIMING_COLUMNS, [[getattr(r, c) for c in TIMING_COLUMNS] for r in rows]),
        "summary": (SUMMARY_COLUMNS, summarize(rows)),
    }
    paths = {}
    try:
        d.mkdir(parents=True, exist_ok=True)
        for name, (cols, recs) in files.items():
            path = d / f"{name}.csv"
            path.write_text(_table(cols, recs))
            paths[name] = path
    except OSError as exc:
        raise OSError(f"cannot write results to {d}: {exc.strerror}") from exc
    return paths
