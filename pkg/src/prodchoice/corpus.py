"""Dialogue transcript ingestion: cleaning, turn merging, target selection,
choice-point splitting and history attachment.

Cleaning rule set (version ``CLEANING_VERSION``): annotation tags in angle
brackets are dropped, word fragments ending in "-" are dropped, the fillers
um/uh are dropped, runs of identical adjacent words collapse to one
occurrence (case-insensitive), and whitespace is normalized. The pass is
idempotent. Root-verb choice points arrive as sidecar annotations; the
bundled first-verb heuristic exists for tests and demos only.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from .errors import DataError, EmptyDialogue, NoPrecedingTurn

__all__ = [
    "RawUtterance",
    "Turn",
    "ChoiceItem",
    "clean_utterance",
    "merge_and_filter",
    "select_targets",
    "attach_history",
    "extract_choice_items",
    "naive_choice_points",
    "read_transcripts",
    "read_annotations",
    "write_items",
    "read_items",
    "item_key",
    "CLEANING_VERSION",
    "VALID_ACT_TAGS",
    "MIN_TARGET_WORDS",
    "MAX_TARGET_WORDS",
]

CLEANING_VERSION = "rules-1"
VALID_ACT_TAGS = ("statement", "question")
MIN_TARGET_WORDS = 10
MAX_TARGET_WORDS = 30
MIN_CONTEXT_WORDS = 3
BACKCHANNEL_MAX_WORDS = 3

_TAG_RE = re.compile(r"<<[^<>]*>>|<[^<>]*>")
_FILLER_RE = re.compile(r"\b(?:um+|uh+)\b", flags=re.IGNORECASE)
_WS_RE = re.compile(r"\s+")
_SENT_SPLIT_RE = re.compile(r"(?<=[.?!])\s+")


@dataclass(frozen=True)
class RawUtterance:
    dialogue_id: str
    turn_index: int
    speaker: str  # A | B
    text: str
    act_tag: str


@dataclass(frozen=True)
class Turn:
    dialogue_id: str
    speaker: str
    utterances: tuple[str, ...]
    act_tags: tuple[str, ...]
    turn_index: int

    @property
    def text(self) -> str:
        return " ".join(self.utterances)


@dataclass(frozen=True)
class ChoiceItem:
    item_id: str
    dialogue_id: str
    turn_index: int
    speaker: str
    context: str
    human_continuation: str
    choice_point_index: int
    act_tag: str
    history_prev: str = ""
    history_full: str = ""

    @property
    def sentence(self) -> str:
        return f"{self.context} {self.human_continuation}"


def clean_utterance(raw: str) -> str:
    """Apply the cleaning rule set; may return an empty string."""
    text = _TAG_RE.sub(" ", raw)
    tokens = [t for t in text.split() if not t.endswith("-")]
    text = _FILLER_RE.sub(" ", " ".join(tokens))
    collapsed: list[str] = []
    for tok in text.split():
        if collapsed and collapsed[-1].lower() == tok.lower():
            continue
        collapsed.append(tok)
    return _WS_RE.sub(" ", " ".join(collapsed)).strip()


def merge_and_filter(dialogue: Sequence[RawUtterance]) -> list[Turn]:
    """Clean, drop backchannels (<= 3 words), merge same-speaker runs.

    Turns are re-indexed densely from 0; adjacent turns alternate
    speakers by construction.
    """
    cleaned: list[tuple[str, str, str, str]] = []  # (dialogue_id, speaker, text, act)
    for utt in sorted(dialogue, key=lambda u: u.turn_index):
        text = clean_utterance(utt.text)
        if len(text.split()) <= BACKCHANNEL_MAX_WORDS:
            continue
        cleaned.append((utt.dialogue_id, utt.speaker, text, utt.act_tag))
    if not cleaned:
        did = dialogue[0].dialogue_id if dialogue else "?"
        raise EmptyDialogue(f"dialogue {did}: nothing survives filtering")
    turns: list[Turn] = []
    for dialogue_id, speaker, text, act in cleaned:
        if turns and turns[-1].speaker == speaker:
            prev = turns[-1]
            turns[-1] = replace(
                prev,
                utterances=prev.utterances + (text,),
                act_tags=prev.act_tags + (act,),
            )
        else:
            turns.append(Turn(
                dialogue_id=dialogue_id, speaker=speaker,
                utterances=(text,), act_tags=(act,), turn_index=len(turns),
            ))
    return turns


def item_key(dialogue_id: str, turn_index: int) -> str:
    return f"{dialogue_id}:{turn_index}"


def first_sentence(text: str) -> str:
    return _SENT_SPLIT_RE.split(text.strip(), maxsplit=1)[0]


def select_targets(
    turns: Sequence[Turn],
    annotations: Mapping[str, int],
    exclusions: Counter | None = None,
) -> list[ChoiceItem]:
    """Pick target utterances and split them at the annotated root verb.

    The target is the first sentence of a turn. Kept only when the act
    tag is statement/question, another speaker's turn precedes, the
    sentence is 10..30 words, a choice-point annotation exists, the
    context reaches 3+ words, and the continuation is non-empty. Excluded
    turns are tallied per reason; the tallies plus the emitted items add
    up to the number of input turns.
    """
    counts = exclusions if exclusions is not None else Counter()
    items: list[ChoiceItem] = []
    for turn in turns:
        sentence = first_sentence(turn.utterances[0])
        act = turn.act_tags[0]
        words = sentence.split()
        if act not in VALID_ACT_TAGS:
            counts["bad_act_tag"] += 1
            continue
        if turn.turn_index == 0:
            counts["no_preceding_turn"] += 1
            continue
        if len(words) < MIN_TARGET_WORDS:
            counts["too_short"] += 1
            continue
        if len(words) > MAX_TARGET_WORDS:
            counts["too_long"] += 1
            continue
        key = item_key(turn.dialogue_id, turn.turn_index)
        if key not in annotations:
            counts["no_choice_point"] += 1
            continue
        idx = annotations[key]
        if not (0 <= idx < len(words)):
            counts["choice_point_out_of_range"] += 1
            continue
        if idx + 1 < MIN_CONTEXT_WORDS:
            counts["context_too_short"] += 1
            continue
        if idx + 1 >= len(words):
            counts["empty_continuation"] += 1
            continue
        items.append(ChoiceItem(
            item_id=key,
            dialogue_id=turn.dialogue_id,
            turn_index=turn.turn_index,
            speaker=turn.speaker,
            context=" ".join(words[:idx + 1]),
            human_continuation=" ".join(words[idx + 1:]),
            choice_point_index=idx,
            act_tag=act,
        ))
    return items


def format_history(turns: Sequence[Turn]) -> str:
    """Render prior turns as speaker-labelled transcript lines."""
    return "\n".join(f"{t.speaker}: {t.text}" for t in turns)


def attach_history(
    item: ChoiceItem,
    dialogue: Sequence[Turn],
    token_budget: int,
    count_tokens: Callable[[str], int],
) -> ChoiceItem:
    """Fill history_prev and history_full for one item.

    history_prev is the immediately preceding other-speaker turn.
    history_full is the longest suffix of whole prior turns (rendered as
    a speaker-labelled transcript) whose token count fits the budget;
    whole turns only, so a budget smaller than the nearest turn yields an
    empty history.
    """
    if token_budget <= 0:
        raise DataError("token budget must be positive")
    if item.turn_index == 0:
        raise NoPrecedingTurn(f"item {item.item_id} starts its dialogue")
    prior = [t for t in dialogue if t.turn_index < item.turn_index]
    prev_turn = prior[-1]
    history_full = ""
    for start in range(len(prior)):
        candidate = format_history(prior[start:])
        if count_tokens(candidate) <= token_budget:
            history_full = candidate
            break
    return replace(item, history_prev=prev_turn.text, history_full=history_full)


def extract_choice_items(
    dialogues: Mapping[str, Sequence[RawUtterance]],
    annotations: Mapping[str, int],
    token_budget: int,
    count_tokens: Callable[[str], int],
) -> tuple[list[ChoiceItem], Counter]:
    """Full corpus pass; items ordered by (dialogue_id, turn_index)."""
    items: list[ChoiceItem] = []
    exclusions: Counter = Counter()
    for dialogue_id in sorted(dialogues):
        try:
            turns = merge_and_filter(dialogues[dialogue_id])
        except EmptyDialogue:
            exclusions["empty_dialogue"] += 1
            continue
        for item in select_targets(turns, annotations, exclusions):
            items.append(attach_history(item, turns, token_budget, count_tokens))
    items.sort(key=lambda it: (it.dialogue_id, it.turn_index))
    return items, exclusions


# A small closed lexicon so tests and demos can annotate choice points
# without an external parser. Real runs use sidecar annotations.
_NAIVE_VERBS = frozenset("""
think thought know knew said say says see saw heard hear confirmed told
tell believe believed guess guessed mean meant figured figure remember
remembered noticed notice decided decide hoped hope wish wished feel felt
found find wonder wondered suppose supposed bet agreed agree mentioned
mention read realized realize learned learn
""".split())


def naive_choice_points(turns: Iterable[Turn],
                        verbs: frozenset[str] = _NAIVE_VERBS) -> dict[str, int]:
    """First verb-from-lexicon annotation; test/demo fallback only."""
    out: dict[str, int] = {}
    for turn in turns:
        words = first_sentence(turn.utterances[0]).split()
        for i, w in enumerate(words):
            if w.lower().strip(".,!?;:\"'") in verbs:
                out[item_key(turn.dialogue_id, turn.turn_index)] = i
                break
    return out


# -- JSONL I/O ------------------------------------------------------------------

def _dump(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False,
                      separators=(",", ":"))


def read_transcripts(path: str | Path) -> dict[str, list[RawUtterance]]:
    """Transcript JSONL -> utterances grouped by dialogue."""
    dialogues: dict[str, list[RawUtterance]] = {}
    with Path(path).open("r", encoding="utf-8") as fh:
        for ln, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                utt = RawUtterance(
                    dialogue_id=str(rec["dialogue_id"]),
                    turn_index=int(rec["turn_index"]),
                    speaker=str(rec["speaker"]),
                    text=str(rec["text"]),
                    act_tag=str(rec["act_tag"]),
                )
            except (KeyError, ValueError, json.JSONDecodeError) as exc:
                raise DataError(f"{path}:{ln}: bad transcript record: {exc}")
            dialogues.setdefault(utt.dialogue_id, []).append(utt)
    return dialogues


def read_annotations(path: str | Path) -> dict[str, int]:
    out: dict[str, int] = {}
    with Path(path).open("r", encoding="utf-8") as fh:
        for ln, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                out[str(rec["item_key"])] = int(rec["choice_point_index"])
            except (KeyError, ValueError, json.JSONDecodeError) as exc:
                raise DataError(f"{path}:{ln}: bad annotation record: {exc}")
    return out


def write_items(items: Iterable[ChoiceItem], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for it in items:
            fh.write(_dump({
                "item_id": it.item_id,
                "dialogue_id": it.dialogue_id,
                "turn_index": it.turn_index,
                "speaker": it.speaker,
                "context": it.context,
                "human_continuation": it.human_continuation,
                "choice_point_index": it.choice_point_index,
                "act_tag": it.act_tag,
                "history_prev": it.history_prev,
                "history_full": it.history_full,
            }) + "\n")


def read_items(path: str | Path) -> list[ChoiceItem]:
    items = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            items.append(ChoiceItem(**rec))
    return items
