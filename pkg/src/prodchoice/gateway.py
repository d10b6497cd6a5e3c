"""Uniform access to external language models with record/replay fixtures.

Three capabilities are exposed: token-level log-probability scoring,
chat-style generation, and binary paraphrase judgment, plus a token-count
helper used for history budgeting. Every request is hashed over
(capability, model_id, canonical payload) only, so fixture lookups do not
depend on call order. Modes:

  live    call the backend, never touch the store
  record  call the backend unless the store already has the hash; persist
  replay  serve from the store only; unknown hashes raise FixtureMiss

Generation uses the default decoding of the upstream API: temperature as
configured and no nucleus or top-k truncation (the request never sends
top_p / top_k).
"""

from __future__ import annotations

import hashlib
import json
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Protocol, Sequence

from . import prompts
from .errors import (
    ConfigError,
    ContextOverflow,
    FixtureMiss,
    InvalidRequest,
    InvalidResponse,
    RefusalDetected,
    UnparseableVerdict,
)

__all__ = [
    "Message",
    "ScoreRequest",
    "ScoreResponse",
    "GenRequest",
    "JudgeVerdict",
    "GatewayConfig",
    "FixtureStore",
    "Gateway",
    "request_key",
]

DEFAULT_REFUSAL_PREFIXES = ("i'm sorry", "i am sorry", "i can't", "i cannot")


@dataclass(frozen=True)
class Message:
    role: str  # developer | user | assistant
    content: str


@dataclass(frozen=True)
class ScoreRequest:
    conditioning_text: str
    target_text: str
    model_id: str


@dataclass(frozen=True)
class ScoreResponse:
    """Subtoken surfaces with logprobs (nats, <= 0) for one scored target."""

    subtokens: tuple[tuple[str, float], ...]
    truncated: bool

    def total_logprob(self) -> float:
        return sum(lp for _, lp in self.subtokens)


@dataclass(frozen=True)
class GenRequest:
    messages: tuple[Message, ...]
    model_id: str
    temperature: float = 1.0
    n_samples: int = 1


@dataclass(frozen=True)
class JudgeVerdict:
    label: str  # yes | no
    raw_response: str


def _canonical(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, ensure_ascii=False,
                      separators=(",", ":"))


def request_key(capability: str, model_id: str, payload: dict) -> str:
    """Content hash of a gateway request; independent of call order."""
    body = _canonical({"capability": capability, "model_id": model_id,
                       "payload": payload})
    return hashlib.sha256(body.encode("utf-8")).hexdigest()


class FixtureStore:
    """Append-only JSONL store of recorded responses keyed by request hash.

    Reads are lock-free once loaded; writes are serialized. A record is
    one JSON object per line: {"key", "capability", "model_id",
    "request", "response"}.
    """

    def __init__(self, path: str | Path):
        self.dir = Path(path)
        self.file = self.dir / "records.jsonl"
        self._lock = threading.Lock()
        self._index: dict[str, dict] = {}
        if self.file.exists():
            with self.file.open("r", encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    rec = json.loads(line)
                    self._index[rec["key"]] = rec["response"]

    def __len__(self) -> int:
        return len(self._index)

    def get(self, key: str) -> dict | None:
        return self._index.get(key)

    def put(self, key: str, capability: str, model_id: str,
            request: dict, response: dict) -> None:
        with self._lock:
            if key in self._index:
                return
            self._index[key] = response
            self.dir.mkdir(parents=True, exist_ok=True)
            rec = {"key": key, "capability": capability, "model_id": model_id,
                   "request": request, "response": response}
            with self.file.open("a", encoding="utf-8") as fh:
                fh.write(_canonical(rec) + "\n")


class ScorerBackend(Protocol):
    def score(self, conditioning: str, target: str, model_id: str) -> dict: ...
    def count(self, text: str, model_id: str) -> int: ...


class ChatBackend(Protocol):
    def complete(self, messages: Sequence[dict], model_id: str,
                 temperature: float, n: int) -> list[str]: ...


@dataclass
class GatewayConfig:
    mode: str = "replay"  # live | record | replay
    scorer_endpoint: str | None = None
    scorer_model_id: str = "gpt2"
    scorer_context_window: int = 1024
    separator: str = "\n"
    generator_endpoint: str | None = None
    generator_model_id: str = "gpt-4o"
    generator_temperature: float = 1.0
    judge_model_id: str = "gpt-4o"
    judge_temperature: float = 0.0
    fixtures_path: str | None = None
    max_refusal_retries: int = 2
    refusal_prefixes: tuple[str, ...] = DEFAULT_REFUSAL_PREFIXES
    concurrency: int = 4
    extra: dict = field(default_factory=dict)


class Gateway:
    """Capability front-end with mode-dependent dispatch."""

    def __init__(self, config: GatewayConfig,
                 scorer_backend: ScorerBackend | None = None,
                 chat_backend: ChatBackend | None = None):
        if config.mode not in ("live", "record", "replay"):
            raise ConfigError(f"unknown gateway mode {config.mode!r}")
        self.config = config
        self.scorer_backend = scorer_backend
        self.chat_backend = chat_backend
        self.store: FixtureStore | None = None
        if config.mode in ("record", "replay"):
            if not config.fixtures_path:
                raise ConfigError(f"mode {config.mode!r} requires fixtures.path")
            self.store = FixtureStore(config.fixtures_path)

    # -- dispatch -------------------------------------------------------------

    def _dispatch(self, capability: str, model_id: str, payload: dict,
                  live_call: Callable[[], dict]) -> dict:
        key = request_key(capability, model_id, payload)
        if self.config.mode == "replay":
            assert self.store is not None
            hit = self.store.get(key)
            if hit is None:
                raise FixtureMiss(key, capability)
            return hit
        if self.config.mode == "record":
            assert self.store is not None
            hit = self.store.get(key)
            if hit is not None:
                return hit
            response = live_call()
            self.store.put(key, capability, model_id, payload, response)
            return response
        return live_call()

    def _need_scorer(self) -> ScorerBackend:
        if self.scorer_backend is None:
            raise ConfigError("no scorer backend configured for this mode")
        return self.scorer_backend

    def _need_chat(self) -> ChatBackend:
        if self.chat_backend is None:
            raise ConfigError("no chat backend configured for this mode")
        return self.chat_backend

    # -- scoring ----------------------------------------------------------------

    def score(self, req: ScoreRequest) -> ScoreResponse:
        """Subtoken logprobs of the target given the conditioning text.

        The scorer backend truncates the conditioning from the left when
        the pair does not fit its context window and reports that via the
        ``truncated`` flag; a target that alone exceeds the window is a
        ContextOverflow.
        """
        if not req.target_text:
            raise InvalidRequest("score target must be non-empty")
        payload = {"conditioning": req.conditioning_text, "target": req.target_text}
        raw = self._dispatch(
            "score", req.model_id, payload,
            lambda: self._need_scorer().score(
                req.conditioning_text, req.target_text, req.model_id),
        )
        if "error" in raw:
            kind = raw["error"].get("type", "")
            if kind == "context_overflow":
                raise ContextOverflow(raw["error"].get("message", "target too long"))
            raise InvalidResponse(f"scorer error: {raw['error']}")
        subtokens = []
        for surface, logprob in raw["tokens"]:
            lp = float(logprob)
            if not math.isfinite(lp):
                raise InvalidResponse(f"non-finite logprob for {surface!r}")
            if lp > 0.0:
                if lp > 1e-9:
                    raise InvalidResponse(f"positive logprob {lp} for {surface!r}")
                lp = 0.0
            subtokens.append((str(surface), lp))
        joined = "".join(s for s, _ in subtokens)
        if joined.split() != req.target_text.split():
            raise InvalidResponse("subtokens do not reconstruct the target text")
        return ScoreResponse(subtokens=tuple(subtokens),
                             truncated=bool(raw.get("truncated", False)))

    def count_tokens(self, text: str) -> int:
        if text == "":
            return 0
        payload = {"text": text}
        raw = self._dispatch(
            "count", self.config.scorer_model_id, payload,
            lambda: {"n": int(self._need_scorer().count(
                text, self.config.scorer_model_id))},
        )
        return int(raw["n"])

    def token_counter(self) -> Callable[[str], int]:
        return self.count_tokens

    # -- generation ---------------------------------------------------------------

    def generate(self, req: GenRequest) -> list[str]:
        """n_samples completions for a chat request; refusals are retried
        up to the configured budget, then surface as RefusalDetected."""
        if not req.messages or req.messages[0].role != "developer":
            raise InvalidRequest("first message must have role developer")
        if req.n_samples < 1:
            raise InvalidRequest("n_samples must be >= 1")
        payload = {
            "messages": [{"role": m.role, "content": m.content} for m in req.messages],
            "temperature": req.temperature,
            "n": req.n_samples,
        }
        last: list[str] = []
        for _attempt in range(self.config.max_refusal_retries + 1):
            raw = self._dispatch(
                "generate", req.model_id, payload,
                lambda: {"completions": self._need_chat().complete(
                    payload["messages"], req.model_id, req.temperature,
                    req.n_samples)},
            )
            completions = [str(c) for c in raw["completions"]]
            if len(completions) != req.n_samples:
                raise InvalidResponse(
                    f"expected {req.n_samples} completions, got {len(completions)}"
                )
            refused = [c for c in completions if self._is_refusal(c)]
            if not refused:
                return completions
            last = refused
            if self.config.mode == "replay":
                break  # identical fixture on every retry
        raise RefusalDetected(f"generator refused: {last[0][:80]!r}")

    def _is_refusal(self, completion: str) -> bool:
        lead = completion.strip().lower()
        return any(lead.startswith(p) for p in self.config.refusal_prefixes)

    # -- judging -----------------------------------------------------------------

    def judge(self, sentence_a: str, sentence_b: str) -> JudgeVerdict:
        """Binary paraphrase verdict for sentence_b against sentence_a."""
        if not sentence_a or not sentence_b:
            raise InvalidRequest("judge sentences must be non-empty")
        messages = tuple(Message(r, c) for r, c in
                         prompts.judge_messages(sentence_a, sentence_b))
        payload = {
            "messages": [{"role": m.role, "content": m.content} for m in messages],
            "temperature": self.config.judge_temperature,
            "n": 1,
        }
        raw = self._dispatch(
            "judge", self.config.judge_model_id, payload,
            lambda: {"completions": self._need_chat().complete(
                payload["messages"], self.config.judge_model_id,
                self.config.judge_temperature, 1)},
        )
        response = str(raw["completions"][0])
        words = response.strip().split()
        first = words[0].strip(".,!:;\"'").lower() if words else ""
        if first not in ("yes", "no"):
            raise UnparseableVerdict(f"judge said {response[:80]!r}")
        return JudgeVerdict(label=first, raw_response=response)

    # -- bounded fan-out -----------------------------------------------------------

    def _map_ordered(self, fn: Callable, items: Iterable) -> list:
        items = list(items)
        if len(items) <= 1 or self.config.concurrency <= 1:
            return [fn(it) for it in items]
        with ThreadPoolExecutor(max_workers=self.config.concurrency) as pool:
            return list(pool.map(fn, items))

    def score_many(self, reqs: Iterable[ScoreRequest]) -> list[ScoreResponse]:
        return self._map_ordered(self.score, reqs)

    def generate_many(self, reqs: Iterable[GenRequest]) -> list[list[str]]:
        return self._map_ordered(self.generate, reqs)

    def judge_many(self, pairs: Iterable[tuple[str, str]]) -> list[JudgeVerdict]:
        return self._map_ordered(lambda ab: self.judge(*ab), pairs)
