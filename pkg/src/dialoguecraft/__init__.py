"""Theme-conditioned video dialogue generation and evaluation engine."""

from .model import (
    AgentState,
    Character,
    DialogueTurn,
    EvalReport,
    MemoryEntry,
    MetricScore,
    Perception,
    Plot,
    Role,
    Segment,
    Suggestion,
    Theme,
    Transcript,
    VideoManifest,
    manifest_stats,
    validate_manifest,
)
from .pipeline import BackendSuite, PipelineConfig, run_dialogue

__version__ = "0.1.0"

__all__ = [
    "AgentState",
    "BackendSuite",
    "Character",
    "DialogueTurn",
    "EvalReport",
    "MemoryEntry",
    "MetricScore",
    "Perception",
    "PipelineConfig",
    "Plot",
    "Role",
    "Segment",
    "Suggestion",
    "Theme",
    "Transcript",
    "VideoManifest",
    "manifest_stats",
    "run_dialogue",
    "validate_manifest",
]
