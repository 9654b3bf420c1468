"""Loop invariant generation, bounded validation and verification for single-loop C tasks."""

from .acsl import InvariantText, parse_invariant, print_invariant, to_c
from .annotator import baseline, insert_mask, instantiate, strip_annotations
from .cminus import parse_task, print_program
from .generation import (
    GenerationConfig,
    HeuristicGenerator,
    LLMGenerator,
    ReplayGenerator,
    build_feedback_prompt,
    build_prompt,
    extract_candidates,
    generate,
)
from .oracle import DomainConfig, check_useful, validate, verify
from .pipeline import PipelineConfig, load_run, persist, run_benchmark, run_task, select_tasks

__version__ = "0.1.0"
