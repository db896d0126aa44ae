"""Remote judge protocol: scores and preferences from a model endpoint.

Requests are JSON {model, prompt, images: [base64 PNG]} POSTed to the
endpoint named by VIZGRAD_JUDGE_URL (token in VIZGRAD_JUDGE_TOKEN); the
reply is JSON {text}.  Every request/reply pair can be recorded to a
JSON-lines transcript keyed by a canonical request hash, and replayed
later with zero network access: replay pops recorded replies per hash in
FIFO order, so repeated identical requests replay in their original
sequence.

Parsing is strict and documented: a score is the first decimal number in
[0, 1] found in the reply; a preference is the first standalone
FIRST/SECOND/TIE token (case-insensitive).  Anything else raises a parse
error carrying the raw reply.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import re
import threading
import time
import urllib.error
import urllib.request
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

from .errors import JudgeParseError, JudgeTransportError, ValidationError
from .image import Image
from .judges import Goal, Judgment, Preference

__all__ = [
    "RemoteJudgeConfig",
    "HttpTransport",
    "CallableTransport",
    "RecordingTransport",
    "ReplayTransport",
    "RemoteScoreJudge",
    "RemoteCompareJudge",
    "parse_score",
    "parse_preference",
    "request_hash",
    "ENV_URL",
    "ENV_TOKEN",
]

ENV_URL = "VIZGRAD_JUDGE_URL"
ENV_TOKEN = "VIZGRAD_JUDGE_TOKEN"

SCORE_PROMPT = (
    "You are a visualization judge. Goal: {goal}\n"
    "Rate how well the attached chart serves that goal.\n"
    "Reply with a single decimal score between 0 and 1."
)
COMPARE_PROMPT = (
    "You are a visualization judge. Goal: {goal}\n"
    "Two charts are attached, labeled FIRST and SECOND in order.\n"
    "Which serves the goal better? Answer exactly FIRST, SECOND, or TIE."
)

_NUMBER_RE = re.compile(r"-?(?:\d+\.?\d*|\.\d+)")
_PREF_RE = re.compile(r"\b(first|second|tie)\b", re.IGNORECASE)


@dataclass(frozen=True)
class RemoteJudgeConfig:
    """Endpoint, retry, and concurrency settings for remote judges."""

    url: str | None = None
    token: str | None = None
    model: str = "viz-judge-1"
    timeout: float = 60.0
    retries: int = 2
    backoff: float = 0.5
    debias: bool = True
    concurrency: int = 4

    def resolved_url(self) -> str:
        url = self.url or os.environ.get(ENV_URL)
        if not url:
            raise ValidationError(f"no judge endpoint: set url or {ENV_URL}")
        return url

    def resolved_token(self) -> str | None:
        return self.token if self.token is not None else os.environ.get(ENV_TOKEN)


def request_hash(request: dict) -> str:
    """Canonical hash of a request body (sorted-key JSON, sha256 hex)."""
    blob = json.dumps(request, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def build_request(cfg: RemoteJudgeConfig, prompt: str, images: list[Image]) -> dict:
    return {
        "model": cfg.model,
        "prompt": prompt,
        "images": [base64.b64encode(img.to_png_bytes()).decode("ascii") for img in images],
    }


class HttpTransport:
    """Live POST transport over urllib; raises JudgeTransportError on any
    network, HTTP, timeout, or malformed-reply failure."""

    def __init__(self, cfg: RemoteJudgeConfig):
        self.cfg = cfg

    def send(self, request: dict) -> str:
        body = json.dumps(request).encode("utf-8")
        headers = {"Content-Type": "application/json"}
        token = self.cfg.resolved_token()
        if token:
            headers["Authorization"] = f"Bearer {token}"
        req = urllib.request.Request(
            self.cfg.resolved_url(), data=body, headers=headers, method="POST"
        )
        try:
            with urllib.request.urlopen(req, timeout=self.cfg.timeout) as resp:
                payload = resp.read()
        except (urllib.error.URLError, urllib.error.HTTPError, TimeoutError, OSError) as e:
            raise JudgeTransportError(f"judge endpoint unreachable: {e}") from e
        try:
            reply = json.loads(payload.decode("utf-8"))
            return str(reply["text"])
        except (ValueError, KeyError, UnicodeDecodeError) as e:
            raise JudgeTransportError(f"malformed judge reply: {e}") from e


class CallableTransport:
    """Adapter for in-process mock servers: fn(request) -> reply text."""

    def __init__(self, fn):
        self.fn = fn

    def send(self, request: dict) -> str:
        return str(self.fn(request))


class RecordingTransport:
    """Forwards to an inner transport and appends {request_hash,
    reply_text} lines to the transcript file."""

    def __init__(self, inner, path: str):
        self.inner = inner
        self.path = path
        self._lock = threading.Lock()

    def send(self, request: dict) -> str:
        reply = self.inner.send(request)
        line = json.dumps(
            {"request_hash": request_hash(request), "reply_text": reply}, sort_keys=True
        )
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as f:
                f.write(line + "\n")
        return reply


class ReplayTransport:
    """Serves recorded replies with no network: per-hash FIFO queues."""

    def __init__(self, path: str):
        self.path = path
        self._lock = threading.Lock()
        self._queues: dict[str, deque[str]] = {}
        try:
            with open(path, encoding="utf-8") as f:
                for ln, line in enumerate(f, start=1):
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        entry = json.loads(line)
                        h, t = entry["request_hash"], entry["reply_text"]
                    except (ValueError, KeyError, TypeError) as e:
                        raise ValidationError(f"{path}:{ln}: bad transcript line: {e}") from e
                    self._queues.setdefault(h, deque()).append(t)
        except OSError as e:
            raise ValidationError(f"cannot read transcript {path}: {e}") from e

    def send(self, request: dict) -> str:
        h = request_hash(request)
        with self._lock:
            q = self._queues.get(h)
            if not q:
                raise JudgeTransportError(f"transcript has no reply for request {h[:12]}…")
            return q.popleft()


def _send_with_retry(transport, cfg: RemoteJudgeConfig, request: dict) -> str:
    last: Exception | None = None
    for attempt in range(cfg.retries + 1):
        try:
            return transport.send(request)
        except JudgeTransportError as e:
            last = e
            if attempt < cfg.retries and cfg.backoff > 0:
                time.sleep(cfg.backoff * (2.0**attempt))
    raise JudgeTransportError(f"judge call failed after {cfg.retries + 1} attempts: {last}")


def parse_score(text: str) -> float:
    """First decimal number in [0, 1] anywhere in the reply."""
    for m in _NUMBER_RE.finditer(text):
        v = float(m.group(0))
        if 0.0 <= v <= 1.0:
            return v
    raise JudgeParseError("no score in [0, 1] found in judge reply", raw_reply=text)


def parse_preference(text: str) -> str:
    """First standalone FIRST/SECOND/TIE token, case-insensitive."""
    m = _PREF_RE.search(text)
    if not m:
        raise JudgeParseError("no FIRST/SECOND/TIE token in judge reply", raw_reply=text)
    return m.group(1).lower()


class RemoteScoreJudge:
    """Scoring judge backed by the remote protocol; never differentiable."""

    differentiable = False
    comparative = False

    def __init__(self, goal: Goal, cfg: RemoteJudgeConfig | None = None, transport=None):
        self.goal = goal
        self.cfg = cfg or RemoteJudgeConfig()
        self.transport = transport if transport is not None else HttpTransport(self.cfg)
        self.calls = 0

    def judge(self, img: Image) -> Judgment:
        prompt = SCORE_PROMPT.format(goal=self.goal.text)
        request = build_request(self.cfg, prompt, [img])
        reply = _send_with_retry(self.transport, self.cfg, request)
        self.calls += 1
        return Judgment(score=parse_score(reply), rationale=reply)

    def judge_many(self, images: list[Image]) -> list[Judgment]:
        """Up to cfg.concurrency in-flight requests, results joined in
        request order."""
        if len(images) <= 1 or self.cfg.concurrency <= 1:
            return [self.judge(img) for img in images]
        prompt = SCORE_PROMPT.format(goal=self.goal.text)
        reqs = [build_request(self.cfg, prompt, [img]) for img in images]
        with ThreadPoolExecutor(max_workers=self.cfg.concurrency) as ex:
            futs = [ex.submit(_send_with_retry, self.transport, self.cfg, r) for r in reqs]
            replies = [f.result() for f in futs]
        self.calls += len(images)
        return [Judgment(score=parse_score(t), rationale=t) for t in replies]


_SWAP = {"first": "second", "second": "first", "tie": "tie"}


class RemoteCompareJudge:
    """Pairwise-preference judge with optional position debiasing: query
    both orders and call it a tie unless the two verdicts agree."""

    differentiable = False
    comparative = True

    def __init__(self, goal: Goal, cfg: RemoteJudgeConfig | None = None, transport=None):
        self.goal = goal
        self.cfg = cfg or RemoteJudgeConfig()
        self.transport = transport if transport is not None else HttpTransport(self.cfg)
        self.calls = 0

    @property
    def calls_per_compare(self) -> int:
        return 2 if self.cfg.debias else 1

    def _ask(self, a: Image, b: Image) -> tuple[str, str]:
        prompt = COMPARE_PROMPT.format(goal=self.goal.text)
        request = build_request(self.cfg, prompt, [a, b])
        reply = _send_with_retry(self.transport, self.cfg, request)
        self.calls += 1
        return parse_preference(reply), reply

    def compare(self, a: Image, b: Image) -> Preference:
        verdict, reply = self._ask(a, b)
        if not self.cfg.debias:
            return Preference(verdict, rationale=reply)
        swapped, reply2 = self._ask(b, a)
        if _SWAP[swapped] == verdict:
            return Preference(verdict, rationale=reply)
        return Preference("tie", rationale=f"{reply} / swapped: {reply2}")


def with_transcript(judge, path: str, mode: str):
    """Rewire a remote judge's transport for --record / --replay runs."""
    if mode == "record":
        judge.transport = RecordingTransport(judge.transport, path)
    elif mode == "replay":
        judge.transport = ReplayTransport(path)
        judge.cfg = replace(judge.cfg, backoff=0.0)
    else:
        raise ValidationError(f"unknown transcript mode {mode!r}")
    return judge
