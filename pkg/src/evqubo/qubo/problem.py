"""QUBO container, energy evaluation and the coordinate-list file format."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Dict, Iterable, Mapping, Sequence, Tuple, Union

import numpy as np

__all__ = ["QuboProblem", "Poly", "qubo_energy", "write_qubo", "read_qubo", "dumps_qubo", "loads_qubo"]

Key = Tuple[int, int]


class Poly:
    """Mutable degree-2 pseudo-boolean polynomial; keys are (i, j) with i <= j."""

    __slots__ = ("coef", "const")

    def __init__(self):
        self.coef: Dict[Key, float] = {}
        self.const = 0.0

    def add(self, i: int, j: int, c: float) -> None:
        if c == 0.0:
            return
        key = (i, j) if i <= j else (j, i)
        self.coef[key] = self.coef.get(key, 0.0) + c

    def add_linear_form(self, form: Dict[int, float], c0: float, scale: float = 1.0) -> None:
        for i, c in form.items():
            self.add(i, i, scale * c)
        self.const += scale * c0

    def add_product(self, f: Tuple[Dict[int, float], float], g: Tuple[Dict[int, float], float],
                    scale: float = 1.0) -> None:
        """Add scale * (f0 + sum f_i b_i) * (g0 + sum g_j b_j), using b*b = b."""
        fl, f0 = f
        gl, g0 = g
        self.const += scale * f0 * g0
        for i, c in fl.items():
            self.add(i, i, scale * c * g0)
        for j, c in gl.items():
            self.add(j, j, scale * c * f0)
        for i, a in fl.items():
            for j, b in gl.items():
                self.add(i, j, scale * a * b)

    def add_square(self, form: Dict[int, float], c0: float, scale: float = 1.0) -> None:
        """Add scale * (c0 + sum_i form_i b_i)^2 expanded to degree 2."""
        items = sorted(form.items())
        self.const += scale * c0 * c0
        for n, (i, a) in enumerate(items):
            self.add(i, i, scale * (a * a + 2.0 * a * c0))
            for j, b in items[n + 1:]:
                self.add(i, j, scale * 2.0 * a * b)

    def merge(self, other: "Poly", scale: float = 1.0) -> None:
        for (i, j), c in other.coef.items():
            self.add(i, j, scale * c)
        self.const += scale * other.const

    def value(self, bits: Sequence[int]) -> float:
        total = 0.0
        for (i, j), c in sorted(self.coef.items()):
            if bits[i] and bits[j]:
                total += c
        return total + self.const


@dataclass(frozen=True)
class QuboProblem:
    """min sum_{i<=j} Q_ij b_i b_j + constant_offset over b in {0,1}^num_bits."""

    num_bits: int
    coefficients: Mapping[Key, float] = field(default_factory=dict)
    constant_offset: float = 0.0

    def __post_init__(self):
        clean = {}
        for (i, j), c in self.coefficients.items():
            i, j = int(i), int(j)
            if i > j:
                raise ValueError(f"coefficient ({i}, {j}) is below the diagonal")
            if not 0 <= i <= j < self.num_bits:
                raise ValueError(f"coefficient ({i}, {j}) outside {self.num_bits} bits")
            if c != 0.0:
                clean[(i, j)] = float(c)
        object.__setattr__(self, "coefficients",
                           MappingProxyType(dict(sorted(clean.items()))))
        object.__setattr__(self, "constant_offset", float(self.constant_offset))

    @classmethod
    def from_poly(cls, num_bits: int, poly: Poly) -> "QuboProblem":
        return cls(num_bits, poly.coef, poly.const)

    def upper(self) -> np.ndarray:
        """Dense upper-triangular coefficient matrix (cached)."""
        mat = self.__dict__.get("_upper")
        if mat is None:
            mat = np.zeros((self.num_bits, self.num_bits))
            for (i, j), c in self.coefficients.items():
                mat[i, j] = c
            mat.setflags(write=False)
            object.__setattr__(self, "_upper", mat)
        return mat

    def symmetric(self) -> Tuple[np.ndarray, np.ndarray]:
        """(diagonal, symmetric off-diagonal coupling matrix)."""
        up = self.upper()
        diag = np.diag(up).copy()
        off = up - np.diag(diag)
        return diag, off + off.T

    def __eq__(self, other):
        if not isinstance(other, QuboProblem):
            return NotImplemented
        return (self.num_bits == other.num_bits and dict(self.coefficients) == dict(other.coefficients)
                and self.constant_offset == other.constant_offset)

    def __hash__(self):
        return hash((self.num_bits, tuple(self.coefficients.items()), self.constant_offset))


def qubo_energy(q: QuboProblem, bits: Sequence[int]) -> float:
    """Energy summed over coefficients in sorted (i, j) order, then the offset."""
    if len(bits) != q.num_bits:
        raise ValueError(f"expected {q.num_bits} bits, got {len(bits)}")
    total = 0.0
    for (i, j), c in q.coefficients.items():
        if bits[i] and bits[j]:
            total += c
    return total + q.constant_offset


def dumps_qubo(q: QuboProblem) -> str:
    lines = [f"#bits {q.num_bits} offset {q.constant_offset!r}"]
    lines += [f"{i} {j} {c!r}" for (i, j), c in q.coefficients.items()]
    return "\n".join(lines) + "\n"


def loads_qubo(text: str) -> QuboProblem:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("#bits"):
        raise ValueError("line 1: missing '#bits N offset C' header")
    head = lines[0].split()
    if len(head) != 4 or head[2] != "offset":
        raise ValueError(f"line 1: malformed header {lines[0]!r}")
    n, offset = int(head[1]), float(head[3])
    coef: Dict[Key, float] = {}
    for lineno, ln in enumerate(lines[1:], start=2):
        parts = ln.split()
        if len(parts) != 3:
            raise ValueError(f"line {lineno}: expected 'i j value', got {ln!r}")
        i, j, c = int(parts[0]), int(parts[1]), float(parts[2])
        if i > j:
            raise ValueError(f"line {lineno}: i > j")
        coef[(i, j)] = coef.get((i, j), 0.0) + c
    return QuboProblem(n, coef, offset)


def write_qubo(q: QuboProblem, path: Union[str, Path]) -> None:
    Path(path).write_text(dumps_qubo(q))


def read_qubo(path: Union[str, Path]) -> QuboProblem:
    return loads_qubo(Path(path).read_text())
