"""Solver-neutral model representation and assignment evaluation.

A :class:`StructuredModel` is a bag of typed variables, linear constraints, a
linear objective and a list of binary pairs whose product must vanish.  Models
are immutable; builders return new models.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

FEAS_TOL = 1e-6

Terms = Tuple[Tuple[str, float], ...]


class ModelError(ValueError):
    pass


class MissingVariableError(KeyError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"assignment has no value for variable {name!r}")


@dataclass(frozen=True)
class Variable:
    """A decision variable.

    ``role`` names the physical quantity (``p_ch``, ``soc``, ``z`` ...),
    ``owner`` the vehicle (or vehicle@scenario) it belongs to, and ``stage``
    the timestep at which its value is decided.  Solvers use these tags for
    ordering and decomposition; they carry no semantics for evaluation.
    """

    name: str
    kind: str
    lo: float
    hi: float
    role: str = ""
    owner: Optional[str] = None
    stage: int = 0

    def __post_init__(self):
        if self.kind not in ("binary", "continuous"):
            raise ModelError(f"{self.name}: unknown variable kind {self.kind!r}")
        if self.lo > self.hi:
            raise ModelError(f"{self.name}: bounds lo={self.lo} > hi={self.hi}")

    @property
    def fixed(self) -> bool:
        return self.lo == self.hi


@dataclass(frozen=True)
class Constraint:
    terms: Terms
    sense: str
    rhs: float
    label: str
    cls: str = ""

    def __post_init__(self):
        if self.sense not in ("<=", "==", ">="):
            raise ModelError(f"{self.label}: unknown relation {self.sense!r}")

    @property
    def names(self) -> Tuple[str, ...]:
        return tuple(n for n, _ in self.terms)

    def lhs(self, values: Mapping[str, float]) -> float:
        return sum(c * values[n] for n, c in self.terms)

    def residual(self, values: Mapping[str, float]) -> float:
        """Signed lhs - rhs for equalities, amount of violation (>= 0) otherwise."""
        diff = self.lhs(values) - self.rhs
        if self.sense == "==":
            return diff
        if self.sense == "<=":
            return max(0.0, diff)
        return max(0.0, -diff)

    def satisfied(self, values: Mapping[str, float], tol: float = FEAS_TOL) -> bool:
        return abs(self.residual(values)) <= tol


def merge_terms(pairs: Iterable[Tuple[str, float]]) -> Terms:
    acc: Dict[str, float] = {}
    for n, c in pairs:
        acc[n] = acc.get(n, 0.0) + c
    return tuple((n, c) for n, c in acc.items() if c != 0.0)


@dataclass(frozen=True)
class StructuredModel:
    variables: Tuple[Variable, ...] = ()
    constraints: Tuple[Constraint, ...] = ()
    objective: Terms = ()
    objective_constant: float = 0.0
    bilinear_exclusions: Tuple[Tuple[str, str], ...] = ()
    # named linear pieces of the objective, kept for reporting and weighting
    parts: Tuple[Tuple[str, Terms, float], ...] = ()
    weights: Tuple[Tuple[str, float], ...] = ()
    name: str = "model"

    def __post_init__(self):
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            dup = sorted({n for n in names if names.count(n) > 1})
            raise ModelError(f"duplicate variables: {dup[:5]}")
        known = set(names)
        for con in self.constraints:
            for n in con.names:
                if n not in known:
                    raise ModelError(f"constraint {con.label} references undeclared {n!r}")
        for term in self.objective:
            if len(term) != 2:
                raise ModelError(f"objective term {term!r} is not linear")
            n = term[0]
            if n not in known:
                raise ModelError(f"objective references undeclared {n!r}")
        for a, b in self.bilinear_exclusions:
            for n in (a, b):
                if n not in known:
                    raise ModelError(f"exclusion references undeclared {n!r}")

    # -- lookup -------------------------------------------------------------
    def var(self, name: str) -> Variable:
        return self._index()[name]

    def _index(self) -> Dict[str, Variable]:
        idx = self.__dict__.get("_idx")
        if idx is None:
            idx = {v.name: v for v in self.variables}
            object.__setattr__(self, "_idx", idx)
        return idx

    def has(self, name: str) -> bool:
        return name in self._index()

    def by_role(self, role: str) -> List[Variable]:
        return [v for v in self.variables if v.role == role]

    def constraints_of(self, cls: str) -> List[Constraint]:
        return [c for c in self.constraints if c.cls == cls]

    def counts(self) -> Dict[str, int]:
        out: Dict[str, int] = {}
        for v in self.variables:
            out[v.role] = out.get(v.role, 0) + 1
        return out

    # -- functional updates -------------------------------------------------
    def extend(self, variables: Sequence[Variable] = (), constraints: Sequence[Constraint] = (),
               exclusions: Sequence[Tuple[str, str]] = ()) -> "StructuredModel":
        return replace(self, variables=self.variables + tuple(variables),
                       constraints=self.constraints + tuple(constraints),
                       bilinear_exclusions=self.bilinear_exclusions + tuple(exclusions))

    def with_objective(self, parts: Sequence[Tuple[str, Terms, float]],
                       weights: Optional[Mapping[str, float]] = None) -> "StructuredModel":
        """Set the objective to a weighted sum of named parts (weight 1 by default)."""
        weights = weights or {}
        pairs: List[Tuple[str, float]] = []
        const = 0.0
        for pname, terms, c0 in parts:
            w = weights.get(pname, 1.0)
            if w == 0.0:
                continue
            pairs.extend((n, w * c) for n, c in terms)
            const += w * c0
        return replace(self, objective=merge_terms(pairs), objective_constant=const,
                       parts=tuple(parts),
                       weights=tuple((p, float(weights.get(p, 1.0))) for p, _, _ in parts))

    def reweighted(self, weights: Mapping[str, float]) -> "StructuredModel":
        return self.with_objective(self.parts, weights)

    def objective_value(self, values: Mapping[str, float]) -> float:
        return self.objective_constant + sum(c * values[n] for n, c in self.objective)

    def part_value(self, part: str, values: Mapping[str, float]) -> float:
        for pname, terms, c0 in self.parts:
            if pname == part:
                return c0 + sum(c * values[n] for n, c in terms)
        raise KeyError(part)


@dataclass
class ObjectiveReport:
    objective: float
    residuals: Dict[str, float]
    violated: List[str]
    exclusion_violations: List[Tuple[str, str]]
    bound_violations: List[str]
    feasible: bool
    parts: Dict[str, float] = field(default_factory=dict)


def evaluate(model: StructuredModel, assignment: Mapping[str, float],
             tol: float = FEAS_TOL) -> ObjectiveReport:
    """Objective, constraint residuals and a feasibility verdict for ``assignment``."""
    values: Dict[str, float] = {}
    for v in model.variables:
        if v.name not in assignment:
            raise MissingVariableError(v.name)
        values[v.name] = float(assignment[v.name])

    bound_violations = []
    for v in model.variables:
        x = values[v.name]
        if x < v.lo - tol or x > v.hi + tol:
            bound_violations.append(v.name)
        elif v.kind == "binary" and x not in (0.0, 1.0):
            bound_violations.append(v.name)

    residuals = {}
    violated = []
    for con in model.constraints:
        r = con.residual(values)
        residuals[con.label] = r
        if abs(r) > tol:
            violated.append(con.label)

    excl = [(a, b) for a, b in model.bilinear_exclusions
            if abs(values[a] * values[b]) > tol]
    parts = {p: model.part_value(p, values) for p, _, _ in model.parts}
    return ObjectiveReport(
        objective=model.objective_value(values),
        residuals=residuals,
        violated=violated,
        exclusion_violations=excl,
        bound_violations=bound_violations,
        feasible=not (violated or excl or bound_violations),
        parts=parts,
    )


def model_to_dict(model: StructuredModel) -> dict:
    """Plain-data dump used by the ``build`` CLI command."""
    return {
        "name": model.name,
        "variables": [
            {"name": v.name, "kind": v.kind, "lo": v.lo, "hi": v.hi, "role": v.role,
             "owner": v.owner, "stage": v.stage}
            for v in model.variables
        ],
        "constraints": [
            {"label": c.label, "class": c.cls, "terms": [[n, a] for n, a in c.terms],
             "sense": c.sense, "rhs": c.rhs}
            for c in model.constraints
        ],
        "objective": {"terms": [[n, a] for n, a in model.objective],
                      "constant": model.objective_constant},
        "bilinear_exclusions": [list(p) for p in model.bilinear_exclusions],
    }
