"""EV vehicle-to-grid and mobile charging-asset models, QUBO encodings and solvers."""
from .instances import (CSPInstance, Edge, GridLimits, InstanceError, ObjectiveMode, PriceSeries,
                        TimeGrid, TransportGraph, V2GInstance, VehicleSpec)
from .model import Constraint, ObjectiveReport, StructuredModel, Variable, evaluate

__version__ = "0.1.0"
