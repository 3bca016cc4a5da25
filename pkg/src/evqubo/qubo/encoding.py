"""One-hot level encodings of bounded variables.

A variable with levels v_0 < v_1 < ... < v_{K-1} gets K-1 bits b_1..b_{K-1};
the all-zero state means level 0, so its value is

    v_0 + sum_k (v_k - v_0) * b_k

whenever at most one bit is set.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Tuple

from ..instances import VehicleSpec
from ..model import StructuredModel

__all__ = [
    "OneHotEncoding",
    "FixedValue",
    "make_power_encoding",
    "make_soc_encoding",
    "make_binary_encoding",
    "default_encodings",
]


@dataclass(frozen=True)
class OneHotEncoding:
    """Uniform levels ``offset + step * k`` unless an explicit ``table`` is given."""

    levels: int
    step: float = 1.0
    offset: float = 0.0
    table: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        if self.table is not None:
            object.__setattr__(self, "table", tuple(float(v) for v in self.table))
            object.__setattr__(self, "levels", len(self.table))
        if self.levels < 2:
            raise ValueError(f"one-hot encoding needs at least 2 levels, got {self.levels}")
        if self.table is None and not self.step > 0:
            raise ValueError("step must be > 0")

    @classmethod
    def from_values(cls, values) -> "OneHotEncoding":
        return cls(len(values), table=tuple(values))

    @property
    def values(self) -> Tuple[float, ...]:
        if self.table is not None:
            return self.table
        return tuple(self.offset + self.step * k for k in range(self.levels))

    @property
    def n_bits(self) -> int:
        return self.levels - 1

    def value(self, level: int) -> float:
        return self.values[level]

    def level_of(self, value: float, tol: float = 1e-9) -> int:
        """Level whose value equals ``value``; ValueError if none is."""
        for k, v in enumerate(self.values):
            if abs(v - value) <= tol * max(1.0, abs(v)):
                return k
        raise ValueError(f"{value!r} is not representable (levels {self.values})")

    def encode(self, value: float) -> Tuple[int, ...]:
        k = self.level_of(value)
        return tuple(1 if j == k else 0 for j in range(1, self.levels))

    def decode(self, bits) -> Tuple[float, bool]:
        """(value, multi_hot) using the lowest set level."""
        set_levels = [j + 1 for j, b in enumerate(bits) if b]
        if not set_levels:
            return self.values[0], False
        return self.values[set_levels[0]], len(set_levels) > 1


@dataclass(frozen=True)
class FixedValue:
    """A variable pinned to one value; uses no bits."""

    value: float

    @property
    def levels(self) -> int:
        return 1

    @property
    def values(self) -> Tuple[float, ...]:
        return (self.value,)

    @property
    def n_bits(self) -> int:
        return 0

    def level_of(self, value: float, tol: float = 1e-9) -> int:
        if abs(value - self.value) > tol * max(1.0, abs(value)):
            raise ValueError(f"{value!r} is not representable (fixed at {self.value!r})")
        return 0

    def encode(self, value: float) -> Tuple[int, ...]:
        self.level_of(value)
        return ()

    def decode(self, bits) -> Tuple[float, bool]:
        return self.value, False


def make_power_encoding(p_max: float, K: int) -> OneHotEncoding:
    """Power levels 0, h, ..., (K-1)h with h = p_max / K.

    The top level is p_max * (K-1) / K; p_max itself is not representable.
    """
    if K < 2:
        raise ValueError(f"K must be >= 2, got {K}")
    if not p_max > 0:
        raise ValueError("p_max must be > 0")
    return OneHotEncoding(K, step=p_max / K, offset=0.0)


def make_soc_encoding(vehicle: VehicleSpec, K_soc: int) -> OneHotEncoding:
    """SOC levels from soc_min to soc_max inclusive, evenly spaced."""
    return _span_encoding(vehicle.soc_min, vehicle.soc_max, K_soc)


def _span_encoding(lo: float, hi: float, K: int) -> OneHotEncoding:
    if K < 2:
        raise ValueError(f"K_soc must be >= 2, got {K}")
    if not hi > lo:
        raise ValueError("soc_max must exceed soc_min")
    return OneHotEncoding(K, step=(hi - lo) / (K - 1), offset=lo)


def make_binary_encoding() -> OneHotEncoding:
    return OneHotEncoding(2, step=1.0, offset=0.0)


def default_encodings(model: StructuredModel, K: int = 2, K_soc: int = 3, J: int = 2,
                      overrides: Optional[Mapping[str, object]] = None) -> Dict[str, object]:
    """Encodings keyed by variable name, chosen from each variable's role.

    Charge/discharge power uses ``K`` levels, SOC ``K_soc``, generation ``J``.
    Fixed variables (lo == hi) use no bits.
    """
    out: Dict[str, object] = {}
    for v in model.variables:
        if v.fixed:
            out[v.name] = FixedValue(v.lo)
        elif v.kind == "binary":
            out[v.name] = make_binary_encoding()
        elif v.role == "soc":
            out[v.name] = _span_encoding(v.lo, v.hi, K_soc)
        elif v.role == "p_gen":
            out[v.name] = make_power_encoding(v.hi, J)
        elif v.lo == 0.0:
            out[v.name] = make_power_encoding(v.hi, K)
        else:
            out[v.name] = _span_encoding(v.lo, v.hi, K)
    if overrides:
        out.update(overrides)
    return out
