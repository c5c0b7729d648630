"""Prompt template loading and rendering.

Templates are plain text files shipped as package data, one file per message
(``<stage>.system.txt`` / ``<stage>.user.txt``).  Placeholders look like
``{paper_title}`` and are substituted by literal replacement, so JSON braces
inside the templates need no escaping.
"""

from __future__ import annotations

from functools import lru_cache
from importlib import resources
from typing import Mapping


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    ref = resources.files("reviewlab").joinpath("prompts_data", name)
    return ref.read_text(encoding="utf-8")


def render(template: str, variables: Mapping[str, str]) -> str:
    """Substitute every ``{key}`` occurrence; a provided key that never
    appears in the template is a template/caller mismatch and raises."""
    out = template
    for key, value in variables.items():
        token = "{" + key + "}"
        if token not in out:
            raise KeyError(f"placeholder {token} not present in template")
        out = out.replace(token, str(value))
    return out


def render_pair(stage: str, variables: Mapping[str, str]) -> tuple[str, str]:
    """Load and render the (system, user) message pair for a pipeline stage.
    Only the user template takes placeholders."""
    system = load_template(f"{stage}.system.txt")
    user = render(load_template(f"{stage}.user.txt"), variables)
    return system, user
