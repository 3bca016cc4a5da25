from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

__all__ = ["SolveResult", "GuardError", "DEFAULT_MAX_BITS"]

DEFAULT_MAX_BITS = 26


class GuardError(ValueError):
    """Problem too large for an exhaustive method."""


@dataclass(frozen=True)
class SolveResult:
    best_bits: Tuple[int, ...]
    best_energy: float
    energy_trace: Tuple[Tuple[float, ...], ...] = ()
    wall_time: float = field(default=0.0, compare=False)
    feasible_after_decode: Optional[bool] = None
    method: str = ""

    def bitstring(self) -> str:
        return "".join(str(b) for b in self.best_bits)
