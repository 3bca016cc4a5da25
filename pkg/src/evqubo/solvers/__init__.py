"""QUBO solvers, the constrained reference search and the hybrid split."""
from .anneal import AnnealSchedule, default_schedule, flip_delta, greedy_descent, simulated_anneal
from .bruteforce import brute_force
from .common import DEFAULT_MAX_BITS, GuardError, SolveResult
from .reference import ReferenceResult, encoded_bits, exact_discrete_reference
from .hybrid import HybridConfig, HybridResult, NonSeparableError, hybrid_solve
