"""Instance files, generation, benchmark sweeps and the command line."""
from .bench import (BenchmarkConfig, ResultRow, SolverSpec, emit_results, load_benchmark_config,
                    run_benchmark)
from .generate import GeneratorParams, generate_instance
from .io import (SCHEMA_VERSION, InstanceBundle, SchemaError, dumps_instance, load_bundle,
                 load_instance, loads_instance, save_instance)
from .pipeline import METHODS, build_model, run_method
