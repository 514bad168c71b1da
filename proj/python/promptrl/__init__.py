# SPDX-License-Identifier: Apache-2.0
"""Prompt adaptation pipeline: rewrite user prompts into generator-preferred ones.

The heavy lifting lives in the C++ core; this package re-exports its Python
surface. Stages are driven by config dicts (see ``desk_config()`` /
``paper_config()``) and produce artifacts inside a run directory.
"""

from ._core import (
    ConfigError,
    DependencyError,
    InvalidInputError,
    Policy,
    RewardUnavailableError,
    TrainingError,
    UnsupportedOperationError,
    build_corpus,
    desk_config,
    load_corpus,
    paper_config,
    run_stage,
    score_prompt,
    split_prompt,
)

__all__ = [
    "ConfigError",
    "DependencyError",
    "InvalidInputError",
    "Policy",
    "RewardUnavailableError",
    "TrainingError",
    "UnsupportedOperationError",
    "build_corpus",
    "desk_config",
    "load_corpus",
    "paper_config",
    "run_stage",
    "score_prompt",
    "split_prompt",
]
