"""Scorer and chat backends: HTTP wire clients and deterministic stubs.

Wire protocols
--------------
Chat (generation and judging): POST {endpoint}/chat/completions with a
chat-completions-compatible body {"model", "messages", "temperature", "n"};
completions are read from choices[*].message.content. No top_p / top_k is
ever sent. The API key comes from the PRODCHOICE_API_KEY environment
variable only.

Scoring: mainstream chat APIs do not expose conditional target logprobs,
so scoring speaks a minimal protocol:
  POST {endpoint}/score  {"model", "conditioning", "target"}
      -> {"tokens": [[surface, logprob], ...], "truncated": bool}
         or {"error": {"type": "context_overflow"}}
  POST {endpoint}/count  {"model", "text"} -> {"n": int}
The server truncates conditioning from the left to fit its window.

The stub backends simulate both protocols deterministically (pure
functions of the request) so fixture stores can be recorded without
network access and demos run offline.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
import urllib.error
import urllib.request
from typing import Sequence

from .errors import BackendUnavailable, ConfigError

__all__ = [
    "HttpScorerBackend",
    "HttpChatBackend",
    "StubScorerBackend",
    "StubChatBackend",
    "make_scorer_backend",
    "make_chat_backend",
]

_RETRIES = 3
_BACKOFF_S = 0.5


def _post_json(url: str, body: dict, api_key: str | None = None,
               timeout: float = 60.0) -> dict:
    data = json.dumps(body).encode("utf-8")
    headers = {"Content-Type": "application/json"}
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"
    last: Exception | None = None
    for attempt in range(_RETRIES):
        req = urllib.request.Request(url, data=data, headers=headers)
        try:
            with urllib.request.urlopen(req, timeout=timeout) as resp:
                return json.loads(resp.read().decode("utf-8"))
        except (urllib.error.URLError, TimeoutError, json.JSONDecodeError) as exc:
            last = exc
            time.sleep(_BACKOFF_S * (2 ** attempt))
    raise BackendUnavailable(f"POST {url} failed after {_RETRIES} tries: {last}")


class HttpScorerBackend:
    def __init__(self, endpoint: str):
        self.endpoint = endpoint.rstrip("/")

    def score(self, conditioning: str, target: str, model_id: str) -> dict:
        return _post_json(f"{self.endpoint}/score", {
            "model": model_id, "conditioning": conditioning, "target": target,
        })

    def count(self, text: str, model_id: str) -> int:
        out = _post_json(f"{self.endpoint}/count",
                         {"model": model_id, "text": text})
        return int(out["n"])


class HttpChatBackend:
    def __init__(self, endpoint: str, api_key_env: str = "PRODCHOICE_API_KEY"):
        self.endpoint = endpoint.rstrip("/")
        self.api_key_env = api_key_env

    def complete(self, messages: Sequence[dict], model_id: str,
                 temperature: float, n: int) -> list[str]:
        body = {"model": model_id, "messages": list(messages),
                "temperature": temperature, "n": n}
        out = _post_json(f"{self.endpoint}/chat/completions", body,
                         api_key=os.environ.get(self.api_key_env))
        try:
            return [c["message"]["content"] for c in out["choices"]]
        except (KeyError, TypeError) as exc:
            raise BackendUnavailable(f"malformed chat response: {exc}")


# -- deterministic stubs -------------------------------------------------------


def _hash_unit(*parts: str) -> float:
    """Deterministic float in [0, 1) from the given strings."""
    h = hashlib.sha256("\x1f".join(parts).encode("utf-8")).digest()
    return int.from_bytes(h[:8], "big") / 2.0 ** 64


def _hash_int(*parts: str) -> int:
    h = hashlib.sha256("\x1f".join(parts).encode("utf-8")).digest()
    return int.from_bytes(h[:8], "big")


class StubScorerBackend:
    """Simulated scorer: whitespace tokens, hash-derived logprobs.

    Words of 7+ characters are split into two subtokens, and every
    non-initial word's first subtoken carries a leading space, mimicking
    BPE-style surfaces. Logprobs depend on the word, its position and the
    previous word, so identical continuations score differently in
    different contexts.
    """

    def __init__(self, window: int = 1024):
        self.window = window

    def count(self, text: str, model_id: str) -> int:
        return len(text.split())

    def score(self, conditioning: str, target: str, model_id: str) -> dict:
        tgt_words = target.split()
        if len(tgt_words) > self.window:
            return {"error": {"type": "context_overflow",
                              "message": "target exceeds context window"}}
        cond_words = conditioning.split()
        room = self.window - len(tgt_words)
        truncated = len(cond_words) > room
        kept = cond_words[-room:] if room > 0 else []
        tokens: list[list] = []
        prev = kept[-1] if kept else ""
        for i, word in enumerate(tgt_words):
            pieces = [word]
            if len(word) >= 7:
                mid = len(word) // 2
                pieces = [word[:mid], word[mid:]]
            for j, piece in enumerate(pieces):
                surface = piece
                if j == 0 and (i > 0 or kept):
                    surface = " " + piece
                u = _hash_unit(model_id, prev, word, str(i), str(j), piece)
                tokens.append([surface, -(0.1 + 6.9 * u)])
            prev = word
        return {"tokens": tokens, "truncated": truncated}


_GENERIC_TAILS = (
    "and nobody minded.",
    "that the schedule keeps changing every single week without much warning.",
    "because the weather turned so quickly.",
    "that we should probably sit down and talk about it again soon.",
    "and it honestly surprised everybody.",
    "that the prices went up again this spring.",
    "because the neighbors kept asking about it every time we saw them.",
    "and the whole thing took nearly two hours.",
    "that the garden needs a lot more attention than anyone wants to admit.",
    "and they decided to wait until next month.",
    "that the traffic has gotten much worse lately.",
    "because everyone was completely worn out after the long drive back home.",
    "and the kids loved it.",
    "that the new building looks completely different from the old drawings.",
    "because the paperwork took longer than expected.",
    "and we finally agreed on a plan together after talking it over twice.",
    "that the movie was better than the reviews said.",
    "and the food there is usually pretty good.",
    "that they might move closer to the city sometime early next year.",
    "because the old one broke down last winter.",
    "and it rained hard.",
    "that the meeting ran much longer than planned.",
    "and she found a better job across town with shorter hours too.",
    "that the team played really well this season.",
    "because the repair shop quoted a fair price for once this year.",
    "and the house needed a fresh coat of paint.",
    "that the recipe calls for far too much salt for most people.",
    "and he kept the receipts just in case.",
    "that the lake stays warm until late September most years around here.",
    "because the committee rejected the first proposal.",
    "and the dog barked at every passing car all afternoon long.",
    "that the library extended its evening hours.",
    "because the flight was delayed twice that day and everyone was cranky.",
    "and the bill came out lower than expected.",
    "that the course covers more material this year than it ever has.",
    "and they planted tomatoes along the back fence.",
    "that the radio station changed its format again without telling anyone.",
    "because the insurance would not cover the damage.",
    "and everyone brought something different to share at the long table.",
    "that the bridge will be closed all summer.",
)

_PARA_PREFIX_VARIANTS = (
    "", "honestly ", "really ", "you know ", "basically ", "frankly ",
    "actually ", "truly ", "certainly ", "clearly ", "obviously ", "simply ",
)


class StubChatBackend:
    """Simulated chat model for the three prompt families.

    The task is recognized from the developer instruction; context and
    sentences are parsed back out of the final user message. Completions
    echo the context prefix, paraphrases recombine the human continuation
    with adverb variants (keeping word overlap high), and judgments apply
    a type-overlap rule, so downstream prefix stripping, deduplication and
    reclassification all get exercised. Paraphrase requests refuse for a
    deterministic ~8% of inputs to mirror generator failures.
    """

    def complete(self, messages: Sequence[dict], model_id: str,
                 temperature: float, n: int) -> list[str]:
        developer = messages[0]["content"]
        user = messages[-1]["content"]
        if developer.startswith("Your task is to complete"):
            return self._complete_sentence(user, model_id, n)
        if developer.startswith("Your task is to paraphrase"):
            return self._paraphrase(user, model_id, n)
        if developer.startswith("Your task is to determine"):
            return self._judge(user, n)
        raise ConfigError("stub chat backend got an unknown task prompt")

    @staticmethod
    def _last_quoted(text: str) -> str:
        end = text.rfind('"')
        start = text.rfind('"', 0, end)
        return text[start + 1:end]

    @staticmethod
    def _first_quoted(text: str) -> str:
        start = text.find('"')
        end = text.find('"', start + 1)
        return text[start + 1:end]

    def _complete_sentence(self, user: str, model_id: str, n: int) -> list[str]:
        context = self._last_quoted(user)
        out = []
        for k in range(n):
            idx = _hash_int(model_id, user, str(k)) % len(_GENERIC_TAILS)
            out.append(f"{context} {_GENERIC_TAILS[idx]}")
        return out

    def _paraphrase(self, user: str, model_id: str, n: int) -> list[str]:
        text = self._first_quoted(user)
        context = self._last_quoted(user)
        if _hash_int("refuse", text) % 13 == 0:
            return ["I'm sorry, but I don't understand."] * n
        continuation = text[len(context):].strip()
        want = 10
        for tok in user.split():
            if tok.isdigit():
                want = int(tok)
                break
        lines = [f"{context} {continuation}"]
        base = _hash_int(model_id, text)
        k = 0
        while len(lines) < want and k < 4 * want:
            variant = _PARA_PREFIX_VARIANTS[(base + k) % len(_PARA_PREFIX_VARIANTS)]
            candidate = f"{context} {variant}{continuation}".strip()
            if candidate not in lines:
                lines.append(candidate)
            k += 1
        return ["\n".join(lines)] * n

    def _judge(self, user: str, n: int) -> list[str]:
        body = user[user.find("Sentence A:"):]
        a = self._first_quoted(body)
        b = self._last_quoted(body)
        strip = ".,!?;:\"'"
        types_a = {w.strip(strip).lower() for w in a.split()} - {""}
        types_b = {w.strip(strip).lower() for w in b.split()} - {""}
        ratio = len(types_a & types_b) / len(types_b) if types_b else 0.0
        return ["Yes" if ratio >= 0.75 else "No"] * n


def make_scorer_backend(endpoint: str | None, context_window: int):
    if endpoint is None:
        return None
    if endpoint.startswith("stub:"):
        return StubScorerBackend(window=context_window)
    if endpoint.startswith(("http://", "https://")):
        return HttpScorerBackend(endpoint)
    raise ConfigError(f"unrecognized scorer endpoint {endpoint!r}")


def make_chat_backend(endpoint: str | None):
    if endpoint is None:
        return None
    if endpoint.startswith("stub:"):
        return StubChatBackend()
    if endpoint.startswith(("http://", "https://")):
        return HttpChatBackend(endpoint)
    raise ConfigError(f"unrecognized chat endpoint {endpoint!r}")
