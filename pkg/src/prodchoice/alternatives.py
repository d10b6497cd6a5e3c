"""Construction of goal-agnostic and goal-directed alternative sets.

Goal-agnostic continuations are sampled under three dialogue-history
conditions; goal-directed continuations are unique paraphrases of the
human sentence constrained to share the context prefix. A post-hoc judge
pass reclassifies: paraphrases judged "no" leave the goal-directed set,
goal-agnostic continuations judged "yes" additionally join it.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

from . import prompts
from .corpus import ChoiceItem
from .errors import (
    InsufficientParaphrases,
    PrefixViolation,
    UnparseableVerdict,
)
from .gateway import Gateway, GenRequest, Message

__all__ = [
    "AlternativeRecord",
    "AlternativeSetSummary",
    "gen_goal_agnostic",
    "gen_goal_directed",
    "reclassify",
    "goal_match_proportions",
    "lexical_overlap",
    "human_record",
    "write_records",
    "read_records",
]

GOAL_AGNOSTIC_METHODS = prompts.HISTORY_CONDITIONS
PARAPHRASE_RETRIES = 1  # one full re-request, then the context is dropped

_WS_RE = re.compile(r"\s+")
_PUNCT = ".,!?;:\"'()[]"


@dataclass(frozen=True)
class AlternativeRecord:
    item_id: str
    candidate_id: str
    continuation: str
    method: str  # no_history | prev_utterance | full_history | paraphrase | human
    in_goal_directed: bool
    in_goal_agnostic: bool
    judge_label: str | None = None  # yes | no | None


@dataclass(frozen=True)
class AlternativeSetSummary:
    item_id: str
    n_goal_directed: int
    n_goal_agnostic: int
    dropped: bool
    reason: str = ""


def _norm(text: str) -> str:
    return _WS_RE.sub(" ", text.strip()).lower()


def _strip_context_prefix(completion: str, context: str) -> str | None:
    """Remove an echoed context prefix, case- and whitespace-insensitively.

    Returns the continuation, or None when the completion does not echo
    the context at all. Raises PrefixViolation when the completion starts
    with the context's first word but then deviates (a restated, garbled
    context) or when stripping leaves nothing.
    """
    comp_words = completion.split()
    ctx_words = context.split()
    if not comp_words:
        raise PrefixViolation("empty completion")
    lc = [w.lower() for w in comp_words]
    lx = [w.lower() for w in ctx_words]
    if lc[:len(lx)] == lx:
        rest = " ".join(comp_words[len(lx):]).strip()
        if not rest:
            raise PrefixViolation(f"completion restates the context only: {completion!r}")
        return rest
    if lc[0] == lx[0]:
        raise PrefixViolation(f"completion restates a different context: {completion!r}")
    return None


def human_record(item: ChoiceItem) -> AlternativeRecord:
    """The observed continuation; reference point, member of neither set."""
    return AlternativeRecord(
        item_id=item.item_id,
        candidate_id=f"{item.item_id}/human",
        continuation=item.human_continuation,
        method="human",
        in_goal_directed=False,
        in_goal_agnostic=False,
    )


def gen_goal_agnostic(item: ChoiceItem, condition: str, gateway: Gateway,
                      n: int = 10) -> list[AlternativeRecord]:
    """Sample n continuations of the context under one history condition."""
    if condition not in GOAL_AGNOSTIC_METHODS:
        raise ValueError(f"unknown history condition {condition!r}")
    history = {
        "no_history": "",
        "prev_utterance": item.history_prev,
        "full_history": item.history_full,
    }[condition]
    messages = tuple(Message(r, c) for r, c in prompts.completion_messages(
        condition, item.context, history=history, speaker_id=item.speaker))
    completions = gateway.generate(GenRequest(
        messages=messages,
        model_id=gateway.config.generator_model_id,
        temperature=gateway.config.generator_temperature,
        n_samples=n,
    ))
    records = []
    for k, comp in enumerate(completions):
        stripped = _strip_context_prefix(comp.strip(), item.context)
        continuation = stripped if stripped is not None else comp.strip()
        records.append(AlternativeRecord(
            item_id=item.item_id,
            candidate_id=f"{item.item_id}/{condition}/{k:02d}",
            continuation=continuation,
            method=condition,
            in_goal_directed=False,
            in_goal_agnostic=True,
        ))
    return records


def gen_goal_directed(item: ChoiceItem, gateway: Gateway,
                      n: int = 10) -> list[AlternativeRecord]:
    """Request n unique context-prefixed paraphrases of the human sentence.

    The model returns all paraphrases in a single completion, one per
    line. Lines that do not start with the context are discarded; the
    survivors are deduplicated case-insensitively. If fewer than n remain
    the whole request is retried once, after which the context is dropped
    via InsufficientParaphrases.
    """
    messages = tuple(Message(r, c) for r, c in prompts.paraphrase_messages(
        item.sentence, item.context, n=n))
    req = GenRequest(
        messages=messages,
        model_id=gateway.config.generator_model_id,
        temperature=gateway.config.generator_temperature,
        n_samples=1,
    )
    best: list[str] = []
    for _attempt in range(PARAPHRASE_RETRIES + 1):
        completion = gateway.generate(req)[0]
        uniques: list[str] = []
        seen: set[str] = set()
        for line in completion.splitlines():
            line = line.strip()
            if not line:
                continue
            try:
                stripped = _strip_context_prefix(line, item.context)
            except PrefixViolation:
                continue
            if stripped is None:
                continue  # paraphrases must carry the context prefix
            key = _norm(stripped)
            if key in seen:
                continue
            seen.add(key)
            uniques.append(stripped)
        if len(uniques) > len(best):
            best = uniques
        if len(best) >= n:
            break
        if gateway.config.mode == "replay":
            break  # the fixture cannot change on retry
    if len(best) < n:
        raise InsufficientParaphrases(
            f"item {item.item_id}: {len(best)} unique paraphrases < {n}")
    return [
        AlternativeRecord(
            item_id=item.item_id,
            candidate_id=f"{item.item_id}/paraphrase/{k:02d}",
            continuation=cont,
            method="paraphrase",
            in_goal_directed=True,
            in_goal_agnostic=False,
        )
        for k, cont in enumerate(best[:n])
    ]


def reclassify(records: Sequence[AlternativeRecord], human: AlternativeRecord,
               item: ChoiceItem, gateway: Gateway) -> list[AlternativeRecord]:
    """Judge every generated record against the human sentence and update
    goal-directed membership.

    Paraphrase-set records judged "no" leave the goal-directed set;
    goal-agnostic records judged "yes" join it (dual membership). A
    verdict that cannot be parsed leaves judge_label unset and keeps the
    record out of goal-directed analyses. The human record is never
    judged or removed.
    """
    human_sentence = f"{item.context} {human.continuation}"
    out: list[AlternativeRecord] = []
    for rec in records:
        if rec.method == "human":
            out.append(rec)
            continue
        candidate_sentence = f"{item.context} {rec.continuation}"
        try:
            verdict = gateway.judge(human_sentence, candidate_sentence)
        except UnparseableVerdict:
            out.append(replace(rec, judge_label=None, in_goal_directed=False))
            continue
        is_para = verdict.label == "yes"
        out.append(replace(
            rec,
            judge_label=verdict.label,
            in_goal_directed=(rec.in_goal_directed and is_para) or
                             (rec.in_goal_agnostic and is_para),
        ))
    return out


def judge_inconsistencies(records: Iterable[AlternativeRecord],
                          human: AlternativeRecord) -> list[str]:
    """Candidate ids whose continuation equals the human's (up to case and
    whitespace) yet were not judged as paraphrases; logged, never repaired."""
    target = _norm(human.continuation)
    return [r.candidate_id for r in records
            if r.method != "human" and _norm(r.continuation) == target
            and r.judge_label != "yes"]


def goal_match_proportions(records: Iterable[AlternativeRecord]) -> dict[str, float]:
    """Per history condition, the share of goal-agnostic records judged yes."""
    counts: dict[str, list[int]] = {m: [0, 0] for m in GOAL_AGNOSTIC_METHODS}
    for rec in records:
        if not rec.in_goal_agnostic or rec.method not in counts:
            continue
        counts[rec.method][1] += 1
        if rec.judge_label == "yes":
            counts[rec.method][0] += 1
    return {m: (yes / total if total else 0.0)
            for m, (yes, total) in counts.items()}


def lexical_overlap(context: str, continuation: str) -> float:
    """Share of the continuation's word types already present in the context.

    Case-insensitive; punctuation-only tokens are ignored and surrounding
    punctuation is stripped from word tokens.
    """
    if not context.strip() or not continuation.strip():
        raise ValueError("context and continuation must be non-empty")

    def types(text: str) -> set[str]:
        toks = (t.strip(_PUNCT).lower() for t in text.split())
        return {t for t in toks if t}

    cont = types(continuation)
    if not cont:
        return 0.0
    return len(cont & types(context)) / len(cont)


# -- JSONL I/O ------------------------------------------------------------------

def write_records(records: Iterable[AlternativeRecord], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps({
                "item_id": r.item_id,
                "candidate_id": r.candidate_id,
                "continuation": r.continuation,
                "method": r.method,
                "in_goal_directed": r.in_goal_directed,
                "in_goal_agnostic": r.in_goal_agnostic,
                "judge_label": r.judge_label,
            }, sort_keys=True, ensure_ascii=False, separators=(",", ":")) + "\n")


def read_records(path: str | Path) -> list[AlternativeRecord]:
    out = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            out.append(AlternativeRecord(**json.loads(line)))
    return out
