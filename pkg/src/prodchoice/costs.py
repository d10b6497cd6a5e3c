"""The four utterance cost measures, computed from word-level surprisal profiles.

All surprisals are in nats. Word-level values are obtained by summing
subtoken log probabilities within each word; a subtoken's leading
whitespace attaches it to the word that follows.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .errors import AlignmentError, UndefinedForSingleton
from .gateway import ScoreResponse

__all__ = [
    "SurprisalProfile",
    "CostBundle",
    "word_surprisals",
    "surprisal_cost",
    "uid_local_cost",
    "uid_global_cost",
    "length_cost",
    "count_words",
    "cost_bundle",
]


@dataclass(frozen=True)
class SurprisalProfile:
    """Per-word surprisal sequence; ``source`` is context, continuation or full."""

    words: tuple[tuple[str, float], ...]
    source: str

    def __post_init__(self):
        if not self.words:
            raise ValueError("profile must contain at least one word")
        for surface, s in self.words:
            if not (s >= 0.0 and s == s and s != float("inf")):
                raise ValueError(f"surprisal for {surface!r} must be finite and >= 0")

    @property
    def values(self) -> list[float]:
        return [s for _, s in self.words]

    def concat(self, other: "SurprisalProfile", source: str = "full") -> "SurprisalProfile":
        return SurprisalProfile(words=self.words + other.words, source=source)


@dataclass(frozen=True)
class CostBundle:
    surprisal: float
    uid_local: float | None
    uid_global: float
    length_words: int

    @property
    def uid_local_defined(self) -> bool:
        return self.uid_local is not None

    def as_dict(self) -> dict:
        return {
            "surprisal": self.surprisal,
            "uid_local": self.uid_local,
            "uid_global": self.uid_global,
            "length": self.length_words,
            "uid_local_defined": self.uid_local_defined,
        }


def word_surprisals(score: ScoreResponse, word_boundaries: Sequence[str],
                    source: str = "continuation") -> SurprisalProfile:
    """Aggregate subtoken logprobs into word surprisals.

    Walks the subtokens through the character stream of the words joined
    by single spaces. A subtoken belongs to the word containing its first
    non-space character; purely-whitespace subtokens attach to the next
    word. A subtoken whose characters fall in two different words cannot
    be partitioned and raises AlignmentError.
    """
    words = list(word_boundaries)
    if not words:
        raise AlignmentError("no word boundaries supplied")
    stream = " ".join(words)
    # char position -> word index (spaces map to -1)
    char_word = []
    for wi, w in enumerate(words):
        char_word.extend([wi] * len(w))
        char_word.append(-1)
    char_word = char_word[:-1]

    sums = [0.0] * len(words)
    seen = [False] * len(words)
    pos = 0
    pending = 0.0  # logprob mass from whitespace-only subtokens
    for surface, logprob in score.subtokens:
        piece = surface
        touched: set[int] = set()
        for ch in piece:
            if ch.isspace():
                if pos < len(stream) and stream[pos] == " ":
                    pos += 1
                # extra whitespace beyond the normalized stream is ignored
                continue
            if pos < len(stream) and stream[pos] == " ":
                pos += 1
            if pos >= len(stream) or stream[pos] != ch:
                raise AlignmentError(
                    f"subtoken {surface!r} does not match the word stream at {pos}"
                )
            touched.add(char_word[pos])
            pos += 1
        if len(touched) > 1:
            raise AlignmentError(f"subtoken {surface!r} spans a word boundary")
        if not touched:
            pending += -logprob
            continue
        wi = touched.pop()
        sums[wi] += pending + (-logprob)
        pending = 0.0
        seen[wi] = True
    # skip any trailing whitespace in the stream
    while pos < len(stream) and stream[pos] == " ":
        pos += 1
    if pos != len(stream) or not all(seen):
        raise AlignmentError("subtokens do not cover the full word sequence")
    if pending:
        sums[-1] += pending
    return SurprisalProfile(
        words=tuple((w, s) for w, s in zip(words, sums)), source=source
    )


def surprisal_cost(continuation: SurprisalProfile) -> float:
    """Total surprisal of the continuation: -log p(continuation | context)."""
    return float(sum(continuation.values))


def uid_local_cost(continuation: SurprisalProfile) -> float:
    """Mean squared successive surprisal difference over the continuation."""
    s = continuation.values
    n = len(s)
    if n < 2:
        raise UndefinedForSingleton(
            "local uniformity needs a continuation of at least 2 words"
        )
    return float(sum((s[t] - s[t - 1]) ** 2 for t in range(1, n)) / (n - 1))


def uid_global_cost(full: SurprisalProfile) -> float:
    """Variance of word surprisals around the sequence mean (full utterance)."""
    s = full.values
    n = len(s)
    mu = sum(s) / n
    return float(sum((v - mu) ** 2 for v in s) / n)


def _is_word_token(token: str) -> bool:
    return any(ch.isalnum() for ch in token)


def count_words(text: str) -> int:
    """Whitespace-delimited token count (punctuation tokens included)."""
    return len(text.split())


def length_cost(continuation_text: str) -> int:
    """Number of words in the continuation; punctuation-only tokens excluded."""
    if not continuation_text.strip():
        raise ValueError("continuation text must be non-empty")
    return sum(1 for tok in continuation_text.split() if _is_word_token(tok))


def cost_bundle(
    continuation: SurprisalProfile,
    full: SurprisalProfile,
    continuation_text: str | None = None,
) -> CostBundle:
    """Assemble all four costs for one candidate.

    Local uniformity is undefined for single-word continuations; the
    bundle carries None and downstream analyses exclude the candidate.
    Length comes from ``continuation_text`` when available, otherwise
    from the profile's non-punctuation word surfaces.
    """
    try:
        uid_loc: float | None = uid_local_cost(continuation)
    except UndefinedForSingleton:
        uid_loc = None
    if continuation_text is not None:
        length = length_cost(continuation_text)
    else:
        length = sum(1 for w, _ in continuation.words if _is_word_token(w))
    return CostBundle(
        surprisal=surprisal_cost(continuation),
        uid_local=uid_loc,
        uid_global=uid_global_cost(full),
        length_words=length,
    )
