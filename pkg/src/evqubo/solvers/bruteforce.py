"""Exhaustive QUBO minimization, the ground-truth oracle for small problems."""
from __future__ import annotations

import time

import numpy as np

from ..qubo.problem import QuboProblem, qubo_energy
from .common import DEFAULT_MAX_BITS, GuardError, SolveResult

__all__ = ["brute_force"]

_LOW_BITS = 14


def _states(n: int) -> np.ndarray:
    """All n-bit states in increasing integer order, bit 0 most significant."""
    idx = np.arange(1 << n, dtype=np.int64)
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    return ((idx[:, None] >> shifts) & 1).astype(np.float64)


def _tol(e: float) -> float:
    return 1e-9 * max(1.0, abs(e))


def brute_force(q: QuboProblem, max_bits: int = DEFAULT_MAX_BITS) -> SolveResult:
    """Global minimum; ties go to the lexicographically smallest bitstring."""
    n = q.num_bits
    if n > max_bits:
        raise GuardError(f"brute force refused: {n} bits exceeds the guard of {max_bits}")
    t0 = time.perf_counter()
    if n == 0:
        return SolveResult((), q.constant_offset, ((q.constant_offset,),),
                           time.perf_counter() - t0, method="bruteforce")
    up = q.upper()
    n_low = min(n, _LOW_BITS)
    n_high = n - n_low
    lo_sl = slice(n_high, n)
    low = _states(n_low)
    u_ll = up[lo_sl, lo_sl]
    e_low = np.einsum("si,ij,sj->s", low, u_ll, low)
    high = _states(n_high) if n_high else np.zeros((1, 0))
    u_hh = up[:n_high, :n_high]
    u_hl = up[:n_high, lo_sl]

    def chunk(h: np.ndarray) -> np.ndarray:
        return h @ u_hh @ h + e_low + low @ (h @ u_hl)

    minima = np.array([chunk(h).min() for h in high])
    e_min = float(minima.min())
    for hi_idx in np.flatnonzero(minima <= e_min + _tol(e_min)):
        energies = chunk(high[hi_idx])
        lo_idx = int(np.flatnonzero(energies <= e_min + _tol(e_min))[0])
        bits = tuple(int(b) for b in high[hi_idx]) + tuple(int(b) for b in low[lo_idx])
        break
    energy = qubo_energy(q, bits)
    return SolveResult(bits, energy, ((energy,),), time.perf_counter() - t0, method="bruteforce")
