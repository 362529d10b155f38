"""Pipeline wiring: declarative config, stage provenance, the orchestrator."""

from .config import PipelineConfig
from .orchestrator import (
    cmd_compare,
    cmd_evaluate,
    cmd_ingest,
    cmd_prompts,
    cmd_report,
    cmd_train,
    cmd_validate,
)

__all__ = [
    "PipelineConfig",
    "cmd_compare",
    "cmd_evaluate",
    "cmd_ingest",
    "cmd_prompts",
    "cmd_report",
    "cmd_train",
    "cmd_validate",
]
