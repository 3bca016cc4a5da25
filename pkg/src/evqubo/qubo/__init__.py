"""QUBO encodings, container and model transpiler."""
from .encoding import (FixedValue, OneHotEncoding, default_encodings, make_binary_encoding,
                       make_power_encoding, make_soc_encoding)
from .problem import Poly, QuboProblem, dumps_qubo, loads_qubo, qubo_energy, read_qubo, write_qubo
from .transpile import (Assignment, AuditEntry, AuditReport, EncodedVariable, PenaltyConfig,
                        PenaltyTerm, TranspileError, VariableMap, decode, dominance_bound,
                        penalty_audit, transpile)
