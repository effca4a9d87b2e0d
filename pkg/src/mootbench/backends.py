"""Pluggable example synthesizers.

Two interchangeable backends produce a synthetic x-row from a rendered
prompt: `LlmBackend` posts a chat-completion JSON request to a hosted
model (with a mandatory on-disk response cache), and `SurrogateBackend`
is a deterministic seeded stand-in that interpolates the prompt's Best
rows, for offline tests and desk-scale experiments.

Replies are parsed the same way for both: the first markdown table data
row that matches the column schema, numeric cells clamped to the column
range, symbolic cells mapped onto observed levels.
"""

from __future__ import annotations

import hashlib
import os
import re
import tempfile
import threading
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import httpx

from .data import NUMERIC

_SEPARATOR = re.compile(r"^[-: ]+$")


class SynthesisError(RuntimeError):
    """Base class for backend failures; carries the raw reply when any."""

    def __init__(self, message: str, raw_reply: str | None = None):
        super().__init__(message)
        self.raw_reply = raw_reply


class TransportError(SynthesisError):
    """Network-level failure talking to the endpoint."""


class StatusError(SynthesisError):
    """Endpoint answered with a non-2xx status."""

    def __init__(self, status: int, raw_reply: str):
        super().__init__(f"endpoint returned HTTP {status}", raw_reply)
        self.status = status


class ReplyParseError(SynthesisError):
    """No parseable markdown table row in the reply."""


class CellCountError(SynthesisError):
    """A table row was found but its width does not match the schema."""


class PromptContractError(SynthesisError):
    """The surrogate could not parse its own prompt back; the prompt
    renderer and the parser have drifted apart."""


@dataclass(frozen=True)
class SchemaColumn:
    """Parsing contract for one independent column of the reply row."""

    name: str
    kind: str
    lo: float | None = None
    hi: float | None = None
    levels: tuple[str, ...] = ()
    mode: str | None = None


@dataclass(frozen=True)
class SynthesisRequest:
    """One fresh-session synthesis call: three prompt parts plus the
    schema used to parse the reply.  Schema order matches the prompt
    tables."""

    system: str
    human: str
    task: str
    schema: tuple[SchemaColumn, ...]


@dataclass(frozen=True)
class SyntheticRow:
    """Backend output: x cells only, already clamped onto the schema."""

    x: tuple


@dataclass
class BackendConfig:
    endpoint: str = "https://api.openai.com/v1/chat/completions"
    model: str = "gpt-4o-mini"
    api_key_env: str = "MOOTBENCH_API_KEY"
    timeout: float = 60.0
    max_retries: int = 2
    cache_dir: str | Path | None = None
    temperature: float = 1.0

    def __post_init__(self):
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


def _clamp_cell(cell: str, col: SchemaColumn):
    if col.kind == NUMERIC:
        value = float(cell)
        if col.lo is not None:
            value = max(value, col.lo)
        if col.hi is not None:
            value = min(value, col.hi)
        return value
    if col.levels and cell not in col.levels:
        return col.mode if col.mode is not None else col.levels[0]
    return cell


def parse_reply(text: str, schema: tuple[SchemaColumn, ...]) -> SyntheticRow:
    """Extract the first markdown table data row matching the schema."""
    names = sorted(c.name.lower() for c in schema)
    widths_seen: list[int] = []
    for line in text.splitlines():
        if "|" not in line:
            continue
        cells = [c.strip() for c in line.strip().strip("|").split("|")]
        if all(_SEPARATOR.fullmatch(c) for c in cells):
            continue
        if sorted(c.lower() for c in cells) == names:
            continue  # header echo
        widths_seen.append(len(cells))
        if len(cells) != len(schema):
            continue
        try:
            values = tuple(_clamp_cell(c, col) for c, col in zip(cells, schema))
        except ValueError:
            continue
        return SyntheticRow(x=values)
    if widths_seen and len(schema) not in widths_seen:
        raise CellCountError(
            f"table rows had widths {sorted(set(widths_seen))}, schema needs {len(schema)}",
            raw_reply=text,
        )
    raise ReplyParseError("no parseable table row in reply", raw_reply=text)


def cache_key(model: str, system: str, human: str, task: str) -> str:
    """Digest of the model name and full prompt text."""
    h = hashlib.sha256()
    for part in (model, system, human, task):
        h.update(part.encode("utf-8"))
        h.update(b"\x00")
    return h.hexdigest()


def cache_get(cache_dir: str | Path, digest: str) -> str | None:
    path = Path(cache_dir) / f"{digest}.txt"
    if not path.exists():
        return None
    return path.read_text(encoding="utf-8")


def cache_put(cache_dir: str | Path, digest: str, reply: str) -> None:
    """Write one reply file per digest; concurrent writers of the same key
    end with identical content (atomic replace)."""
    directory = Path(cache_dir)
    directory.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".part")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            handle.write(reply)
        os.replace(tmp, directory / f"{digest}.txt")
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class LlmBackend:
    """Chat-completion client with a persistent response cache.

    The cache is not optional: repeated experiment matrices re-ask the
    same prompts and live inference is the dominant cost.
    """

    def __init__(self, config: BackendConfig, client: httpx.Client | None = None):
        if config.cache_dir is None:
            raise ValueError("LlmBackend requires a cache directory")
        self.config = config
        self._client = client or httpx.Client(timeout=config.timeout)
        self._lock = threading.Lock()
        self.calls: list[SynthesisRequest] = []
        self.cache_hits = 0
        self.cache_misses = 0

    def _api_key(self) -> str:
        key = os.environ.get(self.config.api_key_env, "")
        if not key:
            raise TransportError(
                f"environment variable {self.config.api_key_env} is empty or unset"
            )
        return key

    def _post(self, payload: dict) -> str:
        last_exc: Exception | None = None
        for _ in range(self.config.max_retries + 1):
            try:
                response = self._client.post(
                    self.config.endpoint,
                    json=payload,
                    headers={"Authorization": f"Bearer {self._api_key()}"},
                    timeout=self.config.timeout,
                )
            except httpx.HTTPError as exc:
                last_exc = exc
                continue
            if response.status_code // 100 == 5:
                last_exc = StatusError(response.status_code, response.text)
                continue
            if response.status_code // 100 != 2:
                raise StatusError(response.status_code, response.text)
            return response.text
        if isinstance(last_exc, StatusError):
            raise last_exc
        raise TransportError(f"transport failure after retries: {last_exc}")

    def _reply_text(self, raw: str) -> str:
        import json

        try:
            body = json.loads(raw)
            return body["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError):
            raise ReplyParseError(
                "completion payload missing choices[0].message.content", raw_reply=raw
            ) from None

    def synthesize(self, request: SynthesisRequest, rng=None) -> SyntheticRow:
        """Answer from cache when possible, otherwise one network call."""
        with self._lock:
            self.calls.append(request)
        digest = cache_key(self.config.model, request.system, request.human, request.task)
        cached = cache_get(self.config.cache_dir, digest)
        if cached is not None:
            with self._lock:
                self.cache_hits += 1
            return parse_reply(cached, request.schema)
        payload = {
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.human + "\n\n" + request.task},
            ],
            "temperature": self.config.temperature,
        }
        raw = self._post(payload)
        reply = self._reply_text(raw)
        cache_put(self.config.cache_dir, digest, reply)
        with self._lock:
            self.cache_misses += 1
        return parse_reply(reply, request.schema)


def llm_synthesize(request: SynthesisRequest, config: BackendConfig) -> SyntheticRow:
    """One-shot convenience wrapper around LlmBackend."""
    return LlmBackend(config).synthesize(request)


class SurrogateBackend:
    """Deterministic synthesizer: numeric cells are the mean of the
    prompt's Best rows plus seeded Gaussian jitter (sd = jitter_scale of
    the column range), symbolic cells their mode."""

    def __init__(self, jitter_scale: float = 0.05):
        self.jitter_scale = jitter_scale
        self._lock = threading.Lock()
        self.calls: list[SynthesisRequest] = []

    def _best_rows(self, request: SynthesisRequest) -> list[list[str]]:
        rows = []
        for line in request.human.splitlines():
            if "|" not in line:
                continue
            cells = [c.strip() for c in line.strip().strip("|").split("|")]
            if cells and cells[0] == "Best" and len(cells) >= 1 + len(request.schema):
                rows.append(cells[1 : 1 + len(request.schema)])
        if not rows:
            raise PromptContractError(
                "no Best rows found in own prompt", raw_reply=request.human
            )
        return rows

    def synthesize(self, request: SynthesisRequest, rng) -> SyntheticRow:
        with self._lock:
            self.calls.append(request)
        best = self._best_rows(request)
        values = []
        for i, col in enumerate(request.schema):
            cells = [row[i] for row in best]
            if col.kind == NUMERIC:
                try:
                    nums = [float(c) for c in cells]
                except ValueError:
                    raise PromptContractError(
                        f"Best cell for numeric column {col.name!r} is not a number",
                        raw_reply=request.human,
                    ) from None
                center = sum(nums) / len(nums)
                span = (col.hi - col.lo) if col.hi is not None and col.lo is not None else 0.0
                value = center + rng.gauss(0.0, self.jitter_scale * span)
                if col.lo is not None:
                    value = max(value, col.lo)
                if col.hi is not None:
                    value = min(value, col.hi)
                values.append(value)
            else:
                counts = Counter(cells)
                mode = max(sorted(counts), key=lambda lvl: counts[lvl])
                if col.levels and mode not in col.levels:
                    mode = col.mode if col.mode is not None else col.levels[0]
                values.append(mode)
        return SyntheticRow(x=tuple(values))


def surrogate_synthesize(request: SynthesisRequest, rng) -> SyntheticRow:
    """One-shot surrogate call with the default jitter."""
    return SurrogateBackend().synthesize(request, rng)
