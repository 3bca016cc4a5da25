"""Single-flip Metropolis annealing and steepest-descent local search."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from numba import njit

from ..qubo.problem import QuboProblem, qubo_energy
from .common import SolveResult

__all__ = ["AnnealSchedule", "simulated_anneal", "greedy_descent", "flip_delta", "default_schedule"]


@dataclass(frozen=True)
class AnnealSchedule:
    initial_temperature: float
    final_temperature: float
    sweeps: int = 1000
    restarts: int = 8
    seed: int = 0

    def __post_init__(self):
        if not self.final_temperature > 0:
            raise ValueError("final_temperature must be > 0")
        if self.initial_temperature < self.final_temperature:
            raise ValueError("initial_temperature must be >= final_temperature")
        if self.sweeps < 1:
            raise ValueError("sweeps must be >= 1")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")

    def temperatures(self) -> np.ndarray:
        if self.sweeps == 1:
            return np.array([self.final_temperature])
        ratio = (self.final_temperature / self.initial_temperature) ** (1.0 / (self.sweeps - 1))
        return self.initial_temperature * ratio ** np.arange(self.sweeps)


def default_schedule(q: QuboProblem, seed: int = 0, sweeps: int = 1000, restarts: int = 8) -> AnnealSchedule:
    """Temperatures scaled to the problem.

    Starts where the largest possible uphill flip is accepted with probability
    1/2 and ends where the smallest nonzero coefficient is accepted with
    probability 1e-3.
    """
    diag, off = q.symmetric()
    coefs = np.abs(np.fromiter(q.coefficients.values(), float, len(q.coefficients)))
    if coefs.size == 0:
        return AnnealSchedule(1.0, 1.0, sweeps, restarts, seed)
    worst = float(np.max(np.abs(diag) + np.abs(off).sum(axis=1)))
    smallest = float(coefs[coefs > 0].min())
    t_hi = worst / math.log(2.0)
    t_lo = min(t_hi, smallest / math.log(1000.0))
    return AnnealSchedule(t_hi, t_lo, sweeps, restarts, seed)


@njit(cache=True)
def _anneal_kernel(diag, coup, bits, temps, uniforms):
    n = bits.size
    field = diag.copy()
    for i in range(n):
        if bits[i]:
            for j in range(n):
                field[j] += coup[i, j]
    # energy without offset: sum_i b_i diag_i + sum_{i<j} coup_ij b_i b_j
    energy = 0.0
    for i in range(n):
        if bits[i]:
            energy += diag[i]
            for j in range(i + 1, n):
                if bits[j]:
                    energy += coup[i, j]
    best = energy
    best_bits = bits.copy()
    trace = np.empty(temps.size)
    for s in range(temps.size):
        t = temps[s]
        for i in range(n):
            delta = -field[i] if bits[i] else field[i]
            if delta <= 0.0 or uniforms[s, i] < math.exp(-delta / t):
                sign = -1.0 if bits[i] else 1.0
                bits[i] = 1 - bits[i]
                energy += delta
                for j in range(n):
                    field[j] += sign * coup[i, j]
                if energy < best:
                    best = energy
                    best_bits[:] = bits
        trace[s] = best
    return best_bits, trace


def simulated_anneal(q: QuboProblem, sched: Optional[AnnealSchedule] = None) -> SolveResult:
    """Restarted Metropolis annealing under a geometric temperature decay.

    Deterministic in (q, sched).  The trace of each restart records the
    running best energy after every sweep, so it never increases.
    """
    if sched is None:
        sched = default_schedule(q)
    t0 = time.perf_counter()
    n = q.num_bits
    if n == 0:
        e = q.constant_offset
        return SolveResult((), e, tuple((e,) * sched.sweeps for _ in range(sched.restarts)),
                           time.perf_counter() - t0, method="sa")
    diag, coup = q.symmetric()
    temps = sched.temperatures()
    runs = []
    traces = []
    for r in range(sched.restarts):
        rng = np.random.default_rng([sched.seed, r])
        start = rng.integers(0, 2, n).astype(np.int8)
        uniforms = rng.random((sched.sweeps, n))
        bits, trace = _anneal_kernel(diag, coup, start, temps, uniforms)
        trace = trace + q.constant_offset
        # running best is monotone by construction; enforce against float drift
        trace = np.minimum.accumulate(trace)
        found = tuple(int(b) for b in bits)
        runs.append((qubo_energy(q, found), found))
        traces.append(tuple(float(x) for x in trace))
    energy, best = min(runs)
    return SolveResult(best, energy, tuple(traces), time.perf_counter() - t0, method="sa")


def flip_delta(q: QuboProblem, bits: Sequence[int], i: int) -> float:
    """Energy change of flipping bit i, from row/column i only."""
    up = q.upper()
    b = np.asarray(bits, dtype=float)
    h = up[i, i] + up[i, :] @ b + up[:, i] @ b - 2.0 * up[i, i] * b[i]
    return float(-h if bits[i] else h)


def greedy_descent(q: QuboProblem, start_bits: Sequence[int]) -> SolveResult:
    """Flip the most improving bit (lowest index on ties) until none improves."""
    n = q.num_bits
    if len(start_bits) != n:
        raise ValueError(f"expected {n} bits, got {len(start_bits)}")
    t0 = time.perf_counter()
    bits = np.array(start_bits, dtype=np.int64)
    trace = [qubo_energy(q, tuple(int(b) for b in bits))]
    if n:
        diag, coup = q.symmetric()
        field = diag + coup @ bits
        scale = 1e-12 * max(1.0, float(np.abs(diag).max() + np.abs(coup).max()))
        while True:
            delta = np.where(bits == 1, -field, field)
            i = int(np.argmin(delta))
            if delta[i] >= -scale:
                break
            sign = -1.0 if bits[i] else 1.0
            bits[i] = 1 - bits[i]
            field += sign * coup[i]
            trace.append(trace[-1] + float(delta[i]))
    best = tuple(int(b) for b in bits)
    return SolveResult(best, qubo_energy(q, best), (tuple(trace),), time.perf_counter() - t0,
                       method="greedy")
