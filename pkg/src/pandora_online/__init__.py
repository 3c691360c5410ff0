"""Online learning for Pandora's box and min-sum set cover."""

from .core import (INF, InspectionTranscript, MatroidBasis, Scenario, ScenarioSequence, Select1, SelectK,
                   generate_instance, transcript_cost)

__all__ = ["INF", "InspectionTranscript", "MatroidBasis", "Scenario", "ScenarioSequence", "Select1", "SelectK",
           "generate_instance", "transcript_cost"]
__version__ = "0.1.0"
