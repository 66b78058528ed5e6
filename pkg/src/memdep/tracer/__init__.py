"""Forced-execution tracing and ground-truth dependency extraction."""

from .cfg import ControlFlowGraph, build_cfg
from .deps import DependencyRecord, dependency_pairs, extract_dependencies, memory_instructions
from .environment import (
    LayoutError,
    RegionMap,
    Snapshot,
    initialize_environment,
    region_map,
)
from .forced import (
    CoverageSet,
    TraceLog,
    force_execute,
    randomize,
    run_seeds,
    trace_function_to_fixpoint,
    trace_program,
)
from .logfile import (
    TraceFormatError,
    parse_dependencies,
    parse_traces,
    read_dependencies,
    read_traces,
    write_dependencies,
    write_traces,
)

__all__ = [
    "ControlFlowGraph",
    "CoverageSet",
    "DependencyRecord",
    "LayoutError",
    "RegionMap",
    "Snapshot",
    "TraceFormatError",
    "TraceLog",
    "build_cfg",
    "dependency_pairs",
    "extract_dependencies",
    "force_execute",
    "initialize_environment",
    "memory_instructions",
    "parse_dependencies",
    "parse_traces",
    "randomize",
    "read_dependencies",
    "read_traces",
    "region_map",
    "run_seeds",
    "trace_function_to_fixpoint",
    "trace_program",
    "write_dependencies",
    "write_traces",
]
