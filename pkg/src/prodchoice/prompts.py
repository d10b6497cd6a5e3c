"""Versioned prompt templates for generation and judging.

Templates live as plain-text resource files and are substituted with
str.replace (never str.format) so corpus text containing braces cannot
break rendering. Message lists are (role, content) pairs; every task
uses a developer instruction followed by a one-shot demonstration.
"""

from __future__ import annotations

from functools import lru_cache
from importlib import resources

PROMPT_VERSION = "b1"

HISTORY_CONDITIONS = ("no_history", "prev_utterance", "full_history")

_USER_TEMPLATE = {
    "no_history": "completion_user_no_history",
    "prev_utterance": "completion_user_prev_utterance",
    "full_history": "completion_user_full_history",
}


@lru_cache(maxsize=None)
def _load(name: str) -> str:
    ref = resources.files("prodchoice.resources.prompts") / f"{name}.txt"
    return ref.read_text(encoding="utf-8").rstrip("\n")


def _fill(template: str, **fields: str) -> str:
    out = template
    for key, value in fields.items():
        out = out.replace("{" + key + "}", value)
    return out


def completion_messages(condition: str, context: str, history: str = "",
                        speaker_id: str = "") -> list[tuple[str, str]]:
    """Messages for goal-agnostic continuation sampling under one history condition."""
    if condition not in HISTORY_CONDITIONS:
        raise ValueError(f"unknown history condition {condition!r}")
    user = _fill(
        _load(_USER_TEMPLATE[condition]),
        context=context,
        history=history,
        SpeakerID=speaker_id,
    )
    return [
        ("developer", _load("completion_developer")),
        ("user", _load("completion_demo_user")),
        ("assistant", _load("completion_demo_assistant")),
        ("user", user),
    ]


def paraphrase_messages(text: str, context: str, n: int = 10) -> list[tuple[str, str]]:
    """Messages requesting ``n`` unique context-prefixed paraphrases of ``text``."""
    user = _fill(_load("paraphrase_user"), n=str(n), text=text, context=context)
    return [
        ("developer", _load("paraphrase_developer")),
        ("user", _load("paraphrase_demo_user")),
        ("assistant", _load("paraphrase_demo_assistant")),
        ("user", user),
    ]


def judge_messages(sentence_a: str, sentence_b: str) -> list[tuple[str, str]]:
    """Messages for the binary paraphrase judgment of sentence_b against sentence_a."""
    user = _fill(_load("judge_user"), text=sentence_a, generation=sentence_b)
    return [
        ("developer", _load("judge_developer")),
        ("user", _load("judge_demo_user")),
        ("assistant", _load("judge_demo_assistant")),
        ("user", user),
    ]
