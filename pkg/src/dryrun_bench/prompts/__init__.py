"""Versioned prompt templates shipped as package data.

Templates live under prompts/<version>/<name>.md and are plain
str.format templates. The active version is selected per run via
PipelineConfig.prompt_set_version so results stay attributable.
"""

from __future__ import annotations

from functools import lru_cache
from importlib import resources


class PromptSetError(Exception):
    pass


@lru_cache(maxsize=None)
def load_template(version: str, name: str) -> str:
    ref = resources.files(__package__).joinpath(version, f"{name}.md")
    try:
        return ref.read_text(encoding="utf-8")
    except (FileNotFoundError, NotADirectoryError) as exc:
        raise PromptSetError(f"prompt template {version}/{name}.md not found") from exc
