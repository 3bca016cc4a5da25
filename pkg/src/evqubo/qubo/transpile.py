"""StructuredModel -> QUBO by one-hot level encoding and quadratic penalties.

Penalty forms, all exactly zero on feasible one-hot states and at least the
class weight on every violating one-hot state:

* equalities: ``w * residual^2`` with ``w = lambda / r_min^2``, where ``r_min``
  is the smallest nonzero |residual| attainable over the encoded levels;
* inequalities touching at most two encoded variables: an indicator table,
  ``lambda * sum over violating level pairs of I1(k1) * I2(k2)``, where
  ``I(k) = b_k`` and ``I(0) = 1 - sum_k b_k``;
* at-most-m over equally weighted binaries (m = 0 or 1): ``lambda * sum b`` or
  ``lambda * sum_{i<j} b_i b_j``;
* any other inequality: a one-hot slack variable whose levels are exactly the
  slack values reachable by feasible level combinations, turning it into an
  equality that is squared as above.

``paper_verbatim`` mode instead squares ``lhs - rhs`` of every inequality,
which also charges strictly feasible points.

One-hot validity of each group is enforced with ``lambda_oh * sum_{k<k'} b_k
b_k'``.  When no weight is configured, ``lambda_oh`` is chosen per group as
``1 + max_k R_k`` with ``R_k`` the absolute row sum of bit ``k`` over every
other term, so a multi-hot state can always be improved by clearing a bit.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce
from math import gcd
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from ..model import FEAS_TOL, Constraint, StructuredModel, evaluate
from .encoding import FixedValue, OneHotEncoding, default_encodings
from .problem import Poly, QuboProblem, qubo_energy

__all__ = [
    "PenaltyConfig",
    "TranspileError",
    "EncodedVariable",
    "PenaltyTerm",
    "VariableMap",
    "Assignment",
    "AuditEntry",
    "AuditReport",
    "transpile",
    "decode",
    "penalty_audit",
    "dominance_bound",
]

MODES = ("slack_bits", "paper_verbatim")
_MERGE_TOL = 1e-9


class TranspileError(ValueError):
    pass


@dataclass(frozen=True)
class PenaltyConfig:
    """Penalty weights.

    ``lambdas`` maps a constraint class (``soc_dynamics``, ``capacity`` ...) to
    its weight; unlisted classes use ``default_lambda``, or, when that is
    unset, ``lambda_scale * dominance_bound``.
    """

    lambdas: Tuple[Tuple[str, float], ...] = ()
    default_lambda: Optional[float] = None
    onehot_lambda: Optional[float] = None
    exclusion_lambda: Optional[float] = None
    inequality_mode: str = "slack_bits"
    lambda_scale: float = 2.0
    normalize: bool = True
    enum_limit: int = 200_000

    def __post_init__(self):
        lam = self.lambdas
        if isinstance(lam, Mapping):
            lam = lam.items()
        object.__setattr__(self, "lambdas", tuple(sorted((str(k), float(v)) for k, v in lam)))
        if self.inequality_mode not in MODES:
            raise ValueError(f"inequality_mode must be one of {MODES}, got {self.inequality_mode!r}")
        for name, v in self.lambdas:
            if not v > 0:
                raise ValueError(f"lambda for {name!r} must be > 0")
        for name in ("default_lambda", "onehot_lambda", "exclusion_lambda"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"{name} must be > 0")
        if not self.lambda_scale > 0:
            raise ValueError("lambda_scale must be > 0")

    def lambda_for(self, cls: str, auto: float) -> float:
        found = dict(self.lambdas).get(cls)
        if found is not None:
            return found
        return self.default_lambda if self.default_lambda is not None else auto


@dataclass(frozen=True)
class EncodedVariable:
    """A model variable (or slack) with its encoding and bit indices.

    ``bits[k - 1]`` is the indicator of level ``k``; level 0 has no bit.
    """

    name: str
    encoding: object
    bits: Tuple[int, ...]
    slack_of: Optional[Tuple[Tuple[Tuple[str, float], ...], float]] = None

    def form(self) -> Tuple[Dict[int, float], float]:
        vals = self.encoding.values
        v0 = vals[0]
        return {b: vals[k + 1] - v0 for k, b in enumerate(self.bits)}, v0

    def indicator(self, level: int) -> Tuple[Dict[int, float], float]:
        if level == 0:
            return {b: -1.0 for b in self.bits}, 1.0
        return {self.bits[level - 1]: 1.0}, 0.0


@dataclass(frozen=True)
class PenaltyTerm:
    label: str
    kind: str
    weight: float
    poly: Poly = field(compare=False, repr=False)
    constraint: Optional[str] = None


@dataclass(frozen=True)
class VariableMap:
    variables: Tuple[EncodedVariable, ...]
    slacks: Tuple[EncodedVariable, ...]
    bit_names: Tuple[str, ...]
    objective: Poly = field(compare=False, repr=False)
    penalties: Tuple[PenaltyTerm, ...] = field(repr=False, default=())
    qubo: Optional[QuboProblem] = field(default=None, repr=False, compare=False)
    mode: str = "slack_bits"
    lambda_base: float = 1.0

    @property
    def num_bits(self) -> int:
        return len(self.bit_names)

    def entry(self, name: str) -> EncodedVariable:
        idx = self.__dict__.get("_by_name")
        if idx is None:
            idx = {e.name: e for e in self.variables + self.slacks}
            object.__setattr__(self, "_by_name", idx)
        return idx[name]

    def groups(self) -> List[EncodedVariable]:
        return [e for e in self.variables + self.slacks if e.bits]

    def encode(self, assignment: Mapping[str, float]) -> List[int]:
        """Bitstring of a representable assignment, slack bits included."""
        bits = [0] * self.num_bits
        for e in self.variables:
            if e.name not in assignment:
                raise KeyError(f"assignment has no value for {e.name!r}")
            self._set(bits, e, float(assignment[e.name]))
        for e in self.slacks:
            terms, rhs = e.slack_of
            s = rhs - sum(c * float(assignment[n]) for n, c in terms)
            self._set(bits, e, s, tol=FEAS_TOL)
        return bits

    @staticmethod
    def _set(bits, e: EncodedVariable, value: float, tol: float = 1e-9) -> None:
        vals = np.asarray(e.encoding.values)
        k = int(np.argmin(np.abs(vals - value)))
        if abs(vals[k] - value) > tol * max(1.0, abs(value)):
            raise ValueError(f"{e.name}: value {value!r} is not representable")
        if k > 0:
            bits[e.bits[k - 1]] = 1


class Assignment(dict):
    """Decoded values; ``multi_hot`` lists variables with more than one set bit."""

    def __init__(self, values=(), multi_hot=()):
        super().__init__(values)
        self.multi_hot: Tuple[str, ...] = tuple(multi_hot)


# ---------------------------------------------------------------------------
# helpers

def _unique_tol(arr: np.ndarray, tol: float = _MERGE_TOL) -> np.ndarray:
    if arr.size == 0:
        return arr
    s = np.sort(arr)
    keep = np.empty(s.size, dtype=bool)
    keep[0] = True
    keep[1:] = np.diff(s) > tol * np.maximum(1.0, np.abs(s[1:]))
    return s[keep]


def _lhs_table(active: Sequence[Tuple[EncodedVariable, float]]) -> np.ndarray:
    """lhs value for every level combination, C order over ``active``."""
    out = np.zeros(1)
    for e, c in active:
        out = np.add.outer(out, c * np.asarray(e.encoding.values)).ravel()
    return out


def _quantum(active: Sequence[Tuple[EncodedVariable, float]]) -> float:
    """Lattice spacing of lhs values, used when enumeration is too large."""
    fr = []
    for e, c in active:
        vals = e.encoding.values
        for a, b in zip(vals, vals[1:]):
            fr.append(Fraction(abs(c * (b - a))).limit_denominator(10 ** 6))
    fr = [f for f in fr if f]
    if not fr:
        return 1.0
    den = reduce(lambda x, y: x * y // gcd(x, y), (f.denominator for f in fr))
    num = reduce(gcd, (int(f * den) for f in fr))
    return num / den


def _min_nonzero_gap(lhs: np.ndarray, targets: np.ndarray) -> Optional[float]:
    """min |l - t| over pairs with |l - t| > tol; ``targets`` sorted unique."""
    best = np.inf
    idx = np.searchsorted(targets, lhs)
    for off in (-2, -1, 0, 1):
        j = np.clip(idx + off, 0, targets.size - 1)
        d = np.abs(lhs - targets[j])
        d = d[d > FEAS_TOL]
        if d.size:
            best = min(best, float(d.min()))
    return None if not np.isfinite(best) else best


def dominance_bound(model: StructuredModel, encodings: Mapping[str, object]) -> float:
    """1 + sum_j |c_j| * max |encoded value of x_j| over objective terms."""
    total = 1.0
    for name, c in model.objective:
        enc = encodings[name]
        total += abs(c) * max(abs(v) for v in enc.values)
    return total


# ---------------------------------------------------------------------------

class _Transpiler:
    def __init__(self, model: StructuredModel, config: PenaltyConfig, encodings: Mapping[str, object]):
        self.model = model
        self.config = config
        self.encodings = encodings
        self.lam_auto = config.lambda_scale * dominance_bound(model, encodings)
        self.bit_names: List[str] = []
        self.entries: Dict[str, EncodedVariable] = {}
        self.slacks: List[EncodedVariable] = []
        self.terms: List[PenaltyTerm] = []

    # -- presolve ------------------------------------------------------------
    def presolve(self) -> Dict[str, np.ndarray]:
        """Allowed-level masks from bounds and constraints that touch one free variable."""
        values = {v.name: np.asarray(self.encodings[v.name].values, dtype=float) for v in self.model.variables}
        allowed = {}
        for v in self.model.variables:
            vals = values[v.name]
            allowed[v.name] = (vals >= v.lo - FEAS_TOL) & (vals <= v.hi + FEAS_TOL)
        changed = True
        while changed:
            changed = False
            for con in self.model.constraints:
                free = [(n, c) for n, c in con.terms if allowed[n].sum() > 1]
                if len(free) != 1:
                    continue
                n, c = free[0]
                const = sum(c2 * float(values[n2][allowed[n2]][0]) for n2, c2 in con.terms
                            if n2 != n and allowed[n2].sum() == 1)
                if any(allowed[n2].sum() == 0 for n2, _ in con.terms):
                    continue
                lhs = const + c * values[n]
                ok = _satisfies(lhs, con.sense, con.rhs)
                new = allowed[n] & ok
                if new.sum() >= 1 and not np.array_equal(new, allowed[n]):
                    allowed[n] = new
                    changed = True
        return allowed

    # -- bit allocation ---------------------------------------------------------
    def allocate(self, allowed: Dict[str, np.ndarray]) -> None:
        for v in self.model.variables:
            enc = self.encodings[v.name]
            mask = allowed[v.name]
            if mask.sum() == 1:
                enc = FixedValue(float(np.asarray(enc.values)[mask][0]))
            self.entries[v.name] = self._alloc(v.name, enc)
            if mask.sum() > 1 and not mask.all():
                e = self.entries[v.name]
                poly = Poly()
                for k in np.flatnonzero(~mask):
                    poly.add_linear_form(*e.indicator(int(k)), scale=self.lam_default)
                self.terms.append(PenaltyTerm(f"bound[{v.name}]", "bound", self.lam_default, poly))

    def _alloc(self, name: str, enc, slack_of=None) -> EncodedVariable:
        start = len(self.bit_names)
        self.bit_names.extend(f"{name}#{k}" for k in range(1, enc.n_bits + 1))
        return EncodedVariable(name, enc, tuple(range(start, start + enc.n_bits)), slack_of)

    @property
    def lam_default(self) -> float:
        c = self.config
        return c.default_lambda if c.default_lambda is not None else self.lam_auto

    # -- constraints ---------------------------------------------------------------
    def split(self, con: Constraint):
        active, const = [], 0.0
        for n, c in con.terms:
            e = self.entries[n]
            if e.bits:
                active.append((e, c))
            else:
                const += c * e.encoding.values[0]
        return active, con.rhs - const

    def constraint(self, con: Constraint) -> None:
        lam = self.config.lambda_for(con.cls or con.label, self.lam_auto)
        active, rhs = self.split(con)
        if con.sense == "==":
            self._equality(con, active, rhs, lam, "equality")
            return
        if con.sense == ">=":
            active = [(e, -c) for e, c in active]
            rhs = -rhs
        if not active:
            if 0.0 > rhs + FEAS_TOL:
                self._constant(con, lam)
            elif self.config.inequality_mode == "paper_verbatim" and abs(rhs) > FEAS_TOL:
                self._constant(con, lam * (rhs * rhs if not self.config.normalize else 1.0), "verbatim")
            return
        if self.config.inequality_mode == "paper_verbatim":
            self._equality(con, active, rhs, lam, "verbatim")
            return
        lo = sum(min(c * v for v in e.encoding.values) for e, c in active)
        hi = sum(max(c * v for v in e.encoding.values) for e, c in active)
        if hi <= rhs + FEAS_TOL:
            return
        if lo > rhs + FEAS_TOL:
            self._constant(con, lam)
            return
        if self._at_most(con, active, rhs, lam):
            return
        if len(active) <= 2:
            self._table(con, active, rhs, lam)
            return
        self._slack(con, active, rhs, lam)

    def _constant(self, con: Constraint, lam: float, kind: str = "constant") -> None:
        poly = Poly()
        poly.const += lam
        self.terms.append(PenaltyTerm(con.label, kind, lam, poly, con.label))

    def _equality(self, con, active, rhs, lam, kind) -> None:
        if not active:
            if abs(rhs) > FEAS_TOL:
                scale = 1.0 if self.config.normalize else rhs * rhs
                self._constant(con, lam * scale, kind)
            return
        r_min = self._r_min(active, np.array([rhs]))
        if r_min is None:
            return
        w = lam / (r_min * r_min) if self.config.normalize else lam
        form: Dict[int, float] = {}
        c0 = -rhs
        for e, c in active:
            f, v0 = e.form()
            c0 += c * v0
            for b, a in f.items():
                form[b] = form.get(b, 0.0) + c * a
        poly = Poly()
        poly.add_square(form, c0, scale=w)
        self.terms.append(PenaltyTerm(con.label, kind, w, poly, con.label))

    def _r_min(self, active, targets: np.ndarray) -> Optional[float]:
        """Smallest nonzero |lhs - target|; None when every combination hits a target."""
        size = int(np.prod([e.encoding.levels for e, _ in active]))
        if size <= self.config.enum_limit:
            lhs = _unique_tol(_lhs_table(active))
            return _min_nonzero_gap(lhs, np.sort(targets))
        return _quantum(active)

    def _at_most(self, con, active, rhs, lam) -> bool:
        coefs = {c for _, c in active}
        if len(coefs) != 1 or any(e.encoding.values != (0.0, 1.0) for e, _ in active):
            return False
        a = coefs.pop()
        if a <= 0:
            return False
        m = int(np.floor(rhs / a + FEAS_TOL))
        if m not in (0, 1) or len(active) < 2:
            return False
        bits = [e.bits[0] for e, _ in active]
        poly = Poly()
        if m == 0:
            for b in bits:
                poly.add(b, b, lam)
        else:
            for i, j in itertools.combinations(bits, 2):
                poly.add(i, j, lam)
        self.terms.append(PenaltyTerm(con.label, "pairwise", lam, poly, con.label))
        return True

    def _table(self, con, active, rhs, lam) -> None:
        poly = Poly()
        if len(active) == 1:
            e, c = active[0]
            for k, v in enumerate(e.encoding.values):
                if c * v > rhs + FEAS_TOL:
                    poly.add_linear_form(*e.indicator(k), scale=lam)
        else:
            (e1, c1), (e2, c2) = active
            for k1, v1 in enumerate(e1.encoding.values):
                for k2, v2 in enumerate(e2.encoding.values):
                    if c1 * v1 + c2 * v2 > rhs + FEAS_TOL:
                        poly.add_product(e1.indicator(k1), e2.indicator(k2), scale=lam)
        self.terms.append(PenaltyTerm(con.label, "table", lam, poly, con.label))

    def _slack(self, con, active, rhs, lam) -> None:
        size = int(np.prod([e.encoding.levels for e, _ in active]))
        if size <= self.config.enum_limit:
            lhs = _lhs_table(active)
            feas = lhs[lhs <= rhs + FEAS_TOL]
            slack_vals = _unique_tol(rhs - feas)
        else:
            q = _quantum(active)
            lo = sum(min(c * v for v in e.encoding.values) for e, c in active)
            n = int(np.floor((rhs - lo) / q + FEAS_TOL)) + 1
            if n > 256:
                raise TranspileError(f"{con.label}: slack range needs {n} levels; refine encodings")
            slack_vals = np.arange(n) * q
        enc = (FixedValue(float(slack_vals[0])) if slack_vals.size == 1
               else OneHotEncoding.from_values(tuple(float(s) for s in slack_vals)))
        orig = tuple((e.name, c) for e, c in active)
        entry = self._alloc(f"slack:{con.label}", enc, slack_of=(orig, rhs))
        self.slacks.append(entry)
        # lhs + s == rhs  <=>  lhs - rhs + s == 0; the slack enters with coefficient 1
        targets = rhs - slack_vals
        r_min = self._r_min(active, targets) if size <= self.config.enum_limit else _quantum(active)
        if r_min is None:
            return
        w = lam / (r_min * r_min) if self.config.normalize else lam
        form: Dict[int, float] = {}
        c0 = -rhs
        for e, c in active + [(entry, 1.0)]:
            f, v0 = e.form()
            c0 += c * v0
            for b, a in f.items():
                form[b] = form.get(b, 0.0) + c * a
        poly = Poly()
        poly.add_square(form, c0, scale=w)
        self.terms.append(PenaltyTerm(con.label, "slack", w, poly, con.label))

    # -- other pieces ------------------------------------------------------------
    def exclusions(self) -> None:
        lam = self.config.exclusion_lambda or self.lam_default
        for a, b in self.model.bilinear_exclusions:
            ea, eb = self.entries[a], self.entries[b]
            poly = Poly()
            poly.add_product(ea.form(), eb.form(), scale=lam)
            if poly.coef or poly.const:
                self.terms.append(PenaltyTerm(f"exclusion[{a},{b}]", "exclusion", lam, poly))

    def objective(self) -> Poly:
        poly = Poly()
        poly.const += self.model.objective_constant
        for term in self.model.objective:
            if len(term) != 2:
                raise TranspileError(f"nonlinear objective term {term!r}")
            n, c = term
            poly.add_linear_form(*self.entries[n].form(), scale=c)
        return poly

    def onehot(self, base: Poly) -> None:
        rows = np.zeros(len(self.bit_names))
        for (i, j), c in base.coef.items():
            rows[i] += abs(c)
            if i != j:
                rows[j] += abs(c)
        for e in list(self.entries.values()) + self.slacks:
            if len(e.bits) < 2:
                continue
            lam = self.config.onehot_lambda
            if lam is None:
                lam = 1.0 + float(max(rows[b] for b in e.bits))
            poly = Poly()
            for i, j in itertools.combinations(e.bits, 2):
                poly.add(i, j, lam)
            self.terms.append(PenaltyTerm(f"onehot[{e.name}]", "onehot", lam, poly))


def _satisfies(lhs: np.ndarray, sense: str, rhs: float) -> np.ndarray:
    if sense == "<=":
        return lhs <= rhs + FEAS_TOL
    if sense == ">=":
        return lhs >= rhs - FEAS_TOL
    return np.abs(lhs - rhs) <= FEAS_TOL


def transpile(model: StructuredModel, config: Optional[PenaltyConfig] = None,
              encodings: Optional[Mapping[str, object]] = None) -> Tuple[QuboProblem, VariableMap]:
    """Encode ``model`` as a QUBO; returns the problem and the bit map."""
    config = config or PenaltyConfig()
    if encodings is None:
        encodings = default_encodings(model)
    for v in model.variables:
        if v.name not in encodings:
            raise TranspileError(f"no encoding for variable {v.name!r}")
    tr = _Transpiler(model, config, encodings)
    tr.allocate(tr.presolve())
    objective = tr.objective()
    for con in model.constraints:
        tr.constraint(con)
    tr.exclusions()
    total = Poly()
    total.merge(objective)
    for t in tr.terms:
        total.merge(t.poly)
    tr.onehot(total)
    total = Poly()
    total.merge(objective)
    for t in tr.terms:
        total.merge(t.poly)
    qubo = QuboProblem.from_poly(len(tr.bit_names), total)
    vmap = VariableMap(
        variables=tuple(tr.entries[v.name] for v in model.variables),
        slacks=tuple(tr.slacks),
        bit_names=tuple(tr.bit_names),
        objective=objective,
        penalties=tuple(tr.terms),
        qubo=qubo,
        mode=config.inequality_mode,
        lambda_base=tr.lam_default,
    )
    return qubo, vmap


def decode(bits: Sequence[int], vmap: VariableMap) -> Assignment:
    """Model values for ``bits``; multi-hot groups take their lowest set level."""
    if len(bits) != vmap.num_bits:
        raise ValueError(f"expected {vmap.num_bits} bits, got {len(bits)}")
    values = {}
    multi = []
    for e in vmap.variables:
        val, mh = e.encoding.decode([bits[b] for b in e.bits])
        values[e.name] = val
        if mh:
            multi.append(e.name)
    return Assignment(values, multi)


@dataclass(frozen=True)
class AuditEntry:
    label: str
    kind: str
    energy: float
    satisfied: Optional[bool]


@dataclass(frozen=True)
class AuditReport:
    entries: Tuple[AuditEntry, ...]
    qubo_energy: float
    objective: float
    total_penalty: float
    feasible: bool
    multi_hot: Tuple[str, ...]

    def by_label(self) -> Dict[str, AuditEntry]:
        return {e.label: e for e in self.entries}

    @property
    def penalty_sum(self) -> float:
        return sum(e.energy for e in self.entries)


def penalty_audit(model: StructuredModel, vmap: VariableMap, bits: Sequence[int]) -> AuditReport:
    """Per-penalty energy contributions for ``bits`` and constraint verdicts.

    The entry ``encoding:multi-hot`` carries the gap between the objective
    polynomial on raw bits and the objective of the decoded assignment; it is
    zero unless some group has more than one bit set.
    """
    assignment = decode(bits, vmap)
    report = evaluate(model, assignment)
    verdict = {c.label: c.label not in report.violated for c in model.constraints}
    bad_pairs = {f"exclusion[{a},{b}]" for a, b in report.exclusion_violations}
    group_ok = {f"onehot[{e.name}]": sum(bits[b] for b in e.bits) <= 1 for e in vmap.groups()}
    entries = []
    for t in vmap.penalties:
        if t.constraint is not None:
            ok = verdict.get(t.constraint)
        elif t.kind == "onehot":
            ok = group_ok[t.label]
        elif t.kind == "exclusion":
            ok = t.label not in bad_pairs
        elif t.kind == "bound":
            name = t.label[len("bound["):-1]
            ok = name not in report.bound_violations
        else:
            ok = None
        entries.append(AuditEntry(t.label, t.kind, t.poly.value(bits), ok))
    raw = vmap.objective.value(bits)
    entries.append(AuditEntry("encoding:multi-hot", "decode", raw - report.objective,
                              not assignment.multi_hot))
    energy = qubo_energy(vmap.qubo, bits) if vmap.qubo is not None else raw + sum(e.energy for e in entries[:-1])
    return AuditReport(
        entries=tuple(entries),
        qubo_energy=energy,
        objective=report.objective,
        total_penalty=energy - report.objective,
        feasible=report.feasible,
        multi_hot=assignment.multi_hot,
    )
