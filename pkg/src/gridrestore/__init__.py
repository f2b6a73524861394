"""Black-start restoration planning for islanded droop-controlled microgrids."""

__version__ = "0.1.0"

from .feeder import (
    FeederModel,
    FeederFormatError,
    ScenarioConfig,
    load_feeder,
    parse_feeder,
    serialize_feeder,
    to_per_unit,
    to_physical,
    validate,
)
from .graphs import (
    BusBlockGraph,
    StepEstimate,
    connected_subgraphs,
    eccentricity,
    reduce_to_bus_blocks,
    restoration_step_bounds,
    step_estimates,
)

__all__ = [
    "FeederModel",
    "FeederFormatError",
    "ScenarioConfig",
    "load_feeder",
    "parse_feeder",
    "serialize_feeder",
    "to_per_unit",
    "to_physical",
    "validate",
    "BusBlockGraph",
    "StepEstimate",
    "connected_subgraphs",
    "eccentricity",
    "reduce_to_bus_blocks",
    "restoration_step_bounds",
    "step_estimates",
]
