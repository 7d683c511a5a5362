"""Prompt templates and their assembly.

The memory-agent and master templates are stored as package data.  The
memory agent expects its context *above* the instructions, so the context
block is placed first in the system prompt; this also makes
``context + instructions`` a reusable prefix for the prefix-state cache.
The planner template is local plumbing for the iterative mode.
"""

from __future__ import annotations

import re
from importlib import resources


def _load(name: str) -> str:
    return resources.files(__name__).joinpath(name).read_text(encoding="utf-8")


MEMORY_AGENT_PROMPT = _load("memory_agent.txt")
SUMMARY_INSTRUCTIONS = _load("summary_instructions.txt")
MASTER_PROMPT = _load("master.txt")
PLANNER_PROMPT = _load("planner.txt")
SUMMARY_REQUEST = _load("mode_b_request.txt").strip()


def memory_system_prompt(context_text: str) -> str:
    return f"### MEMORY SEGMENTS\n{context_text}\n\n---\n\n{MEMORY_AGENT_PROMPT}"


def summary_user_prompt() -> str:
    return f"{SUMMARY_INSTRUCTIONS.strip()}\n\n{SUMMARY_REQUEST}"


def fill(template: str, **slots: str) -> str:
    # single pass, so slot values containing "{name}" are left alone;
    # str.format would trip over literal braces in model-facing text
    pattern = re.compile(r"\{(" + "|".join(map(re.escape, slots)) + r")\}")
    return pattern.sub(lambda m: slots[m.group(1)], template)


def master_system_prompt(query: str, results: str) -> str:
    return fill(MASTER_PROMPT, query=query, results=results)


def planner_system_prompt(query: str, state: str) -> str:
    return fill(PLANNER_PROMPT, query=query, state=state)
