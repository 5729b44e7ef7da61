"""End-to-end orchestration: generate domains, train the translator, convert
anomalies, assemble datasets, train both detector variants, evaluate,
explain, and report."""

from .config import PipelineConfig, PipelineError, PreconditionError, derive_seed
from .record import RunRecord, file_sha256
from .stages import (
    STAGE_ASSEMBLE,
    STAGE_CONVERT,
    STAGE_EVALUATE,
    STAGE_EXPLAIN,
    STAGE_GEN_DATA,
    STAGE_REPORT,
    STAGE_TRAIN_DETECTOR,
    STAGE_TRAIN_GCGAN,
    assemble_training_sets,
    run_stage,
)

__all__ = [
    "PipelineConfig",
    "PipelineError",
    "PreconditionError",
    "derive_seed",
    "RunRecord",
    "file_sha256",
    "run_stage",
    "assemble_training_sets",
    "STAGE_GEN_DATA",
    "STAGE_TRAIN_GCGAN",
    "STAGE_CONVERT",
    "STAGE_ASSEMBLE",
    "STAGE_TRAIN_DETECTOR",
    "STAGE_EVALUATE",
    "STAGE_EXPLAIN",
    "STAGE_REPORT",
]
