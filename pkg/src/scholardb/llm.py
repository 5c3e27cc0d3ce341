"""Provider abstraction: chat completion, embeddings, cassette replay, accounting.

Every provider-dependent step in the system goes through :class:`LlmClient`.
With a cassette in ``replay-strict`` mode the whole stack is bit-deterministic;
in ``record`` mode responses come from a pluggable backend and are appended to
the cassette for later replay.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .errors import CassetteMissError, ProviderError, SchemaViolationError

log = logging.getLogger(__name__)

VALID_MODES = ("record", "replay", "replay-strict")


@dataclass(frozen=True)
class PromptRequest:
    """A role-tagged chat request.

    ``response_schema`` names the structured-output contract the caller will
    parse; it participates in the fingerprint so recorded responses never leak
    across schemas.
    """

    messages: tuple[tuple[str, str], ...]
    response_schema: Optional[str] = None
    temperature: float = 0.0

    def __post_init__(self):
        if not any(role == "user" for role, _ in self.messages):
            raise ValueError("at least one user message required")
        for role, _ in self.messages:
            if role not in ("system", "user"):
                raise ValueError(f"unknown role {role!r}")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature must lie in [0, 2]")

    @staticmethod
    def build(user: str, system: str = "", response_schema: str | None = None,
              temperature: float = 0.0) -> "PromptRequest":
        msgs: list[tuple[str, str]] = []
        if system:
            msgs.append(("system", system))
        msgs.append(("user", user))
        return PromptRequest(tuple(msgs), response_schema, temperature)

    def with_appended_user(self, text: str) -> "PromptRequest":
        return PromptRequest(self.messages + (("user", text),),
                             self.response_schema, self.temperature)


@dataclass
class CallRecord:
    fingerprint: str
    response: str
    input_tokens: int
    output_tokens: int
    latency_ms: float
    kind: str = "chat"  # chat | embed

    def __post_init__(self):
        if self.input_tokens < 0 or self.output_tokens < 0:
            raise ValueError("token counts must be non-negative")


def _token_count(text: str) -> int:
    return len(text.split())


def fingerprint_request(req: PromptRequest, model: str = "") -> str:
    payload = json.dumps(
        {"model": model, "messages": list(req.messages),
         "schema": req.response_schema, "temperature": req.temperature},
        sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def fingerprint_embedding(text: str, model: str = "") -> str:
    payload = json.dumps({"embed": text, "model": model},
                         sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class Cassette:
    """Ordered fingerprint -> response map with newline-delimited persistence."""

    def __init__(self, mode: str = "record", path: str | Path | None = None):
        if mode not in VALID_MODES:
            raise ValueError(f"mode must be one of {VALID_MODES}")
        self.mode = mode
        self.path = Path(path) if path is not None else None
        self._entries: dict[str, dict] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            self._load(self.path)

    def _load(self, path: Path) -> None:
        for line in path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            self._entries[rec["fingerprint"]] = rec

    def lookup(self, fingerprint: str) -> Optional[dict]:
        return self._entries.get(fingerprint)

    def record(self, fingerprint: str, response: str, input_tokens: int = 0,
               output_tokens: int = 0) -> None:
        rec = {"fingerprint": fingerprint, "response": response,
               "input_tokens": input_tokens, "output_tokens": output_tokens}
        with self._lock:
            self._entries[fingerprint] = rec
            if self.path is not None:
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(rec, ensure_ascii=False) + "\n")

    def save(self, path: str | Path) -> None:
        path = Path(path)
        with self._lock:
            lines = [json.dumps(rec, ensure_ascii=False)
                     for rec in self._entries.values()]
        path.write_text("\n".join(lines) + ("\n" if lines else ""),
                        encoding="utf-8")

    def reopened(self, mode: str) -> "Cassette":
        """Same recorded entries under a different mode (no file rebind)."""
        twin = Cassette(mode=mode)
        twin._entries = dict(self._entries)
        return twin

    def __len__(self) -> int:
        return len(self._entries)


class HashEmbedder:
    """Deterministic mock embedder: text -> seeded pseudo-random unit vector."""

    def __init__(self, dim: int = 64, seed: int = 0):
        self.dim = dim
        self.seed = seed

    def embed(self, text: str) -> list[float]:
        digest = hashlib.sha256(f"{self.seed}:{text}".encode("utf-8")).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "big"))
        vec = rng.standard_normal(self.dim)
        vec /= np.linalg.norm(vec)
        return vec.tolist()


class GeometryEmbedder:
    """Embedder for fixtures that need controlled pairwise similarities.

    Texts registered via ``place`` get explicit vectors; everything else
    falls back to hash-derived vectors, which are near-orthogonal to each
    other and to the placed ones at reasonable dimension.
    """

    def __init__(self, dim: int = 64, seed: int = 0):
        self.dim = dim
        self._fallback = HashEmbedder(dim=dim, seed=seed)
        self._placed: dict[str, list[float]] = {}

    def place(self, text: str, vector: Sequence[float]) -> None:
        vec = np.asarray(vector, dtype=float)
        if vec.shape != (self.dim,):
            raise ValueError(f"vector must have dimension {self.dim}")
        vec = vec / np.linalg.norm(vec)
        self._placed[text] = vec.tolist()

    def place_near(self, text: str, anchor_text: str, cosine: float) -> None:
        """Place ``text`` at a chosen cosine from the (placed or hash) anchor."""
        anchor = np.asarray(self.embed(anchor_text))
        ortho = np.asarray(self._fallback.embed("ortho::" + text))
        ortho -= anchor * float(anchor @ ortho)
        ortho /= np.linalg.norm(ortho)
        vec = cosine * anchor + np.sqrt(max(0.0, 1 - cosine ** 2)) * ortho
        self._placed[text] = (vec / np.linalg.norm(vec)).tolist()

    def embed(self, text: str) -> list[float]:
        if text in self._placed:
            return list(self._placed[text])
        return self._fallback.embed(text)


class ScriptedChat:
    """Rule-driven chat backend for offline runs and cassette recording.

    Rules are tried in order; the first whose schema matches (``None`` matches
    any) and whose pattern is found in the concatenated prompt text answers.
    Responses may be strings or callables receiving the request.
    """

    def __init__(self, rules: Iterable[tuple[Optional[str], Optional[str],
                                             str | Callable[[PromptRequest], str]]] = (),
                 default: str | Callable[[PromptRequest], str] | None = None):
        self.rules = list(rules)
        self.default = default

    def add(self, schema: Optional[str], pattern: Optional[str],
            response: str | Callable[[PromptRequest], str]) -> None:
        self.rules.append((schema, pattern, response))

    def complete(self, req: PromptRequest) -> str:
        text = "\n".join(content for _, content in req.messages)
        for schema, pattern, response in self.rules:
            if schema is not None and schema != req.response_schema:
                continue
            if pattern is not None and pattern not in text:
                continue
            return response(req) if callable(response) else response
        if self.default is not None:
            return self.default(req) if callable(self.default) else self.default
        raise ProviderError(
            f"no scripted rule matches request (schema={req.response_schema!r})")


class HttpChat:
    """Minimal OpenAI-compatible chat backend; credentials via env var."""

    def __init__(self, model: str, base_url: str | None = None,
                 api_key_env: str = "SCHOLARDB_API_KEY"):
        self.model = model
        self.base_url = base_url or os.environ.get(
            "SCHOLARDB_API_BASE", "https://api.openai.com/v1")
        self.api_key_env = api_key_env

    def complete(self, req: PromptRequest) -> str:
        key = os.environ.get(self.api_key_env)
        if not key:
            raise ProviderError(f"no credentials in ${self.api_key_env}")
        import httpx  # local import: optional dependency in offline use

        body = {
            "model": self.model,
            "temperature": req.temperature,
            "messages": [{"role": r, "content": c} for r, c in req.messages],
        }
        resp = httpx.post(f"{self.base_url}/chat/completions",
                          headers={"Authorization": f"Bearer {key}"},
                          json=body, timeout=120)
        if resp.status_code != 200:
            raise ProviderError(f"provider returned {resp.status_code}: {resp.text[:200]}")
        return resp.json()["choices"][0]["message"]["content"]


@dataclass
class Accounting:
    """Exact running totals over every CallRecord; no call bypasses it."""

    records: list[CallRecord] = field(default_factory=list)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def add(self, record: CallRecord) -> None:
        with self._lock:
            self.records.append(record)

    def summary(self) -> dict:
        with self._lock:
            chat = [r for r in self.records if r.kind == "chat"]
            embeds = [r for r in self.records if r.kind == "embed"]
            return {
                "input_tokens": sum(r.input_tokens for r in chat),
                "output_tokens": sum(r.output_tokens for r in chat),
                "call_count": len(chat),
                "embed_count": len(embeds),
                "wall_time_ms": sum(r.latency_ms for r in self.records),
            }

    def reset(self) -> None:
        with self._lock:
            self.records.clear()


class LlmClient:
    """Chat + embedding front door with cassette, accounting, and tallies."""

    def __init__(self, chat=None, embedder=None, cassette: Cassette | None = None,
                 embed_dim: int = 64, model: str = "offline",
                 accounting: Accounting | None = None):
        self.chat = chat
        self.embedder = embedder if embedder is not None else HashEmbedder(dim=embed_dim)
        self.cassette = cassette
        self.embed_dim = embed_dim
        self.model = model
        self.accounting = accounting if accounting is not None else Accounting()
        self._tallies: list[Accounting] = []

    # -- configuration ------------------------------------------------

    @property
    def mode(self) -> str:
        return self.cassette.mode if self.cassette is not None else "record"

    def with_tally(self, tally: Accounting) -> "LlmClient":
        """A view of this client that mirrors records into ``tally``."""
        view = LlmClient(chat=self.chat, embedder=self.embedder,
                         cassette=self.cassette, embed_dim=self.embed_dim,
                         model=self.model, accounting=self.accounting)
        view._tallies = self._tallies + [tally]
        return view

    def _log(self, record: CallRecord) -> None:
        self.accounting.add(record)
        for tally in self._tallies:
            tally.add(record)

    # -- chat ----------------------------------------------------------

    def fingerprint(self, req: PromptRequest) -> str:
        return fingerprint_request(req, self.model)

    def complete(self, req: PromptRequest) -> tuple[str, CallRecord]:
        fp = self.fingerprint(req)
        start = time.perf_counter()
        recorded = self.cassette.lookup(fp) if self.cassette is not None else None
        if recorded is not None:
            response = recorded["response"]
            in_tok = recorded.get("input_tokens", 0)
            out_tok = recorded.get("output_tokens", 0)
        elif self.mode == "replay-strict":
            raise CassetteMissError(fp)
        else:
            if self.chat is None:
                raise ProviderError("no chat backend configured and no recording found")
            response = self.chat.complete(req)
            in_tok = sum(_token_count(c) for _, c in req.messages)
            out_tok = _token_count(response)
            if self.cassette is not None and self.cassette.mode == "record":
                self.cassette.record(fp, response, in_tok, out_tok)
        latency = (time.perf_counter() - start) * 1000.0
        record = CallRecord(fp, response, in_tok, out_tok, latency, kind="chat")
        self._log(record)
        return response, record

    def complete_json(self, req: PromptRequest, required: Sequence[str] = ()) -> dict | list:
        """Strict structured-output path: parse-or-retry-once, then fail loud."""
        if req.response_schema is None:
            raise ValueError("complete_json requires a response_schema")
        response, _ = self.complete(req)
        try:
            return self._parse(response, required)
        except SchemaViolationError:
            retry = req.with_appended_user(
                f"Respond with valid structure for schema '{req.response_schema}'.")
            response, _ = self.complete(retry)
            return self._parse(response, required)

    @staticmethod
    def _parse(response: str, required: Sequence[str]) -> dict | list:
        try:
            value = json.loads(response)
        except json.JSONDecodeError as exc:
            raise SchemaViolationError(f"response is not valid JSON: {exc}", raw=response)
        if required:
            if not isinstance(value, dict):
                raise SchemaViolationError("expected a JSON object", raw=response)
            missing = [key for key in required if key not in value]
            if missing:
                raise SchemaViolationError(
                    f"response missing required keys {missing}", raw=response)
        return value

    # -- embeddings ------------------------------------------------------

    def embed(self, text: str) -> np.ndarray:
        if not text:
            raise ProviderError("cannot embed empty text")
        fp = fingerprint_embedding(text, self.model)
        start = time.perf_counter()
        recorded = self.cassette.lookup(fp) if self.cassette is not None else None
        if recorded is not None:
            vec = np.asarray(json.loads(recorded["response"]), dtype=float)
        elif self.mode == "replay-strict":
            raise CassetteMissError(fp)
        else:
            vec = np.asarray(self.embedder.embed(text), dtype=float)
            if self.cassette is not None and self.cassette.mode == "record":
                self.cassette.record(fp, json.dumps(vec.tolist()), _token_count(text), 0)
        if vec.shape != (self.embed_dim,):
            raise ProviderError(
                f"embedding dimension {vec.shape} != declared {self.embed_dim}")
        latency = (time.perf_counter() - start) * 1000.0
        self._log(CallRecord(fp, "", _token_count(text), 0, latency, kind="embed"))
        return vec

    # -- accounting -------------------------------------------------------

    def accounting_summary(self) -> dict:
        return self.accounting.summary()

    def reset_accounting(self) -> None:
        self.accounting.reset()


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(a @ b / (na * nb))
