"""Confidence-gated appearance memory, discrepancy-triggered scene-graph
evolution and mesh-based interaction pose safety."""

from ._core import (
    DegenerateGeometry,
    EmptySuite,
    FeatureCodec,
    InsufficientData,
    MifError,
    NoPath,
    ParseError,
    confidence_value,
    estimate_confidence,
    generate_suite,
    graph_discrepancy,
    memory_graph,
    pure_pursuit_step,
    run_scenario,
    scaled_robust_icp,
    signed_distance,
    sweep_tau,
    update_graph,
)

__all__ = [name for name in dir() if not name.startswith("_")]
