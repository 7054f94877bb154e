"""Verification probes: planning, prompt rendering, oracles, cached driver."""
from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
import urllib.error
import urllib.request
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .errors import (
    CacheCorrupt,
    EmptyDataset,
    FormatError,
    InvalidProbability,
    MissingPlaceholder,
    OracleUnreachable,
    PolicyViolation,
)
from .norms import MACHINE, BinaryFeatureMatrix, NormDataset

log = logging.getLogger(__name__)

WITHIN = "within"
CROSS = "cross"
PLAN_SCOPES = ("within", "cross", "all")


class Probe(NamedTuple):
    concept_id: str
    feature_id: str
    scope_tag: str  # WITHIN or CROSS


def build_probe_plan(dataset: NormDataset, scope: str = "all") -> list[Probe]:
    """One probe per (concept, feature) pair, concept-major in file order."""
    if scope not in PLAN_SCOPES:
        raise ValueError(f"scope must be one of {PLAN_SCOPES}, got {scope!r}")
    if not dataset.concepts or not dataset.features:
        raise EmptyDataset(f"cannot plan probes over a {dataset.shape[0]}x{dataset.shape[1]} dataset")
    fids = [f.id for f in dataset.features]
    within = dataset.within_domain
    plan = []
    for i, c in enumerate(dataset.concepts):
        row = within[i]
        for j, fid in enumerate(fids):
            tag = WITHIN if row[j] else CROSS
            if scope == "all" or scope == tag:
                plan.append(Probe(c.id, fid, tag))
    return plan


# ------------------------------------------------------------------ prompts

DEFAULT_TEMPLATE_TEXT = (
    "Q: Is the property [is_female] true for the concept [book]?\n"
    "A: False\n"
    "Q: Is the property [can_be_digital] true for the concept [book]\n"
    "A: True\n"
    "In one word True/False, answer the following question\n"
    "Q: Is the property [{feature}] true for {concept}?\n"
    "A:"
)


@dataclass(frozen=True)
class PromptTemplate:
    few_shot_block: str
    question_pattern: str
    answer_cue: str

    def __post_init__(self):
        for ph in ("{feature}", "{concept}"):
            n = self.question_pattern.count(ph)
            if n != 1:
                raise MissingPlaceholder(
                    f"question pattern must contain {ph} exactly once (found {n})")

    @classmethod
    def from_text(cls, text: str) -> "PromptTemplate":
        """Split a plain-text template around the line holding the placeholders."""
        lines = text.split("\n")
        hits = [i for i, line in enumerate(lines) if "{feature}" in line or "{concept}" in line]
        if not hits:
            raise MissingPlaceholder("template has neither {feature} nor {concept}")
        if len(set(hits)) != 1:
            raise MissingPlaceholder("{feature} and {concept} must sit on the same question line")
        k = hits[0]
        return cls("\n".join(lines[:k]), lines[k], "\n".join(lines[k + 1:]))

    @classmethod
    def from_file(cls, path) -> "PromptTemplate":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))

    @classmethod
    def default(cls) -> "PromptTemplate":
        return cls.from_text(DEFAULT_TEMPLATE_TEXT)

    @property
    def text(self) -> str:
        parts = (self.few_shot_block, self.question_pattern, self.answer_cue)
        return "\n".join(p for p in parts if p)

    @property
    def content_hash(self) -> str:
        return hashlib.sha256(self.text.encode("utf-8")).hexdigest()

    def render(self, feature: str, concept: str) -> str:
        # str.replace, not str.format: few-shot text may contain braces
        question = self.question_pattern.replace("{feature}", feature).replace("{concept}", concept)
        return "\n".join(p for p in (self.few_shot_block, question, self.answer_cue) if p)


def render_prompt(probe: Probe, template: PromptTemplate, dataset: NormDataset) -> str:
    concept = dataset.concept(probe.concept_id)
    feature = dataset.features[dataset.feature_index(probe.feature_id)]
    return template.render(feature.name, concept.name)


# ------------------------------------------------------------------ answers

class Answer(str, Enum):
    YES = "yes"
    NO = "no"
    UNPARSEABLE = "unparseable"


_TOKEN = re.compile(r"[a-z]+")
_AFFIRM = {"true", "yes"}
_DENY = {"false", "no"}


def parse_answer(raw: str) -> Answer:
    """Map a generation to yes/no by its leading word; never raises."""
    m = _TOKEN.match((raw or "").strip().lower())
    if m is None:
        return Answer.UNPARSEABLE
    token = m.group(0)
    if token in _AFFIRM:
        return Answer.YES
    if token in _DENY:
        return Answer.NO
    return Answer.UNPARSEABLE


@dataclass(frozen=True)
class OracleAnswer:
    key: str
    concept: str
    feature: str
    template_hash: str
    raw_text: str
    parsed: Answer
    timestamp: str
    from_cache: bool = False

    def to_record(self) -> dict:
        return {"key": self.key, "concept": self.concept, "feature": self.feature,
                "template_hash": self.template_hash, "raw_text": self.raw_text,
                "parsed": self.parsed.value, "timestamp": self.timestamp}


def cache_key(concept: str, feature_id: str, template_hash: str) -> str:
    return hashlib.sha256(f"{concept}\x1f{feature_id}\x1f{template_hash}".encode("utf-8")).hexdigest()


class AnswerCache:
    """Append-only JSONL answer store keyed by probe and template.

    A trailing line without a newline is treated as an interrupted write and
    dropped; any other malformed line raises :class:`CacheCorrupt`.
    """

    _FIELDS = ("key", "concept", "feature", "template_hash", "raw_text", "parsed", "timestamp")

    def __init__(self, path=None):
        self.path = Path(path) if path is not None else None
        self._records: dict[str, OracleAnswer] = {}
        self._lock = threading.Lock()
        self._fh = None
        if self.path is not None and self.path.exists():
            self._load()

    def _load(self):
        data = self.path.read_bytes()
        lines = data.split(b"\n")
        keep_len = len(data)
        if lines and lines[-1] != b"":
            # interrupted append: discard the partial record
            keep_len = len(data) - len(lines[-1])
            log.warning("dropping partial trailing record in %s", self.path)
        for lineno, line in enumerate(lines[:-1], start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                ans = OracleAnswer(*(rec[k] for k in self._FIELDS[:5]), Answer(rec["parsed"]),
                                   rec["timestamp"], True)
            except (ValueError, KeyError, TypeError) as exc:
                raise CacheCorrupt(f"{self.path}:{lineno}: unreadable record ({exc})") from None
            if ans.key != cache_key(ans.concept, ans.feature, ans.template_hash):
                raise CacheCorrupt(f"{self.path}:{lineno}: key does not match record contents")
            self._records[ans.key] = ans
        if keep_len != len(data):
            with open(self.path, "r+b") as fh:
                fh.truncate(keep_len)

    def __len__(self):
        return len(self._records)

    def __contains__(self, key):
        return key in self._records

    def get(self, key: str) -> OracleAnswer | None:
        return self._records.get(key)

    def put(self, answer: OracleAnswer) -> None:
        line = json.dumps(answer.to_record(), ensure_ascii=False, separators=(",", ":")) + "\n"
        with self._lock:
            self._records[answer.key] = answer
            if self.path is not None:
                if self._fh is None:
                    self.path.parent.mkdir(parents=True, exist_ok=True)
                    self._fh = open(self.path, "a", encoding="utf-8")
                self._fh.write(line)

    def flush(self):
        with self._lock:
            if self._fh is not None:
                self._fh.flush()

    def close(self):
        with self._lock:
            if self._fh is not None:
                self._fh.close()
                self._fh = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


# ------------------------------------------------------------------ oracles

class MockOracle:
    """Seeded noisy copy of a ground-truth matrix.

    Each cell gets its own pre-drawn uniform variate, so answers do not depend
    on the order in which probes arrive.
    """

    remote = False

    def __init__(self, truth: BinaryFeatureMatrix, p_miss: float = 0.0, p_fa: float = 0.0, seed: int = 0):
        for name, p in (("p_miss", p_miss), ("p_fa", p_fa)):
            if not 0.0 <= p <= 1.0:
                raise InvalidProbability(f"{name} must lie in [0, 1], got {p}")
        self.truth = truth
        self.p_miss, self.p_fa, self.seed = float(p_miss), float(p_fa), int(seed)
        u = np.random.default_rng(self.seed).random(truth.shape)
        truth_yes = truth.cells.astype(bool)
        self._says_yes = np.where(truth_yes, u >= self.p_miss, u < self.p_fa)
        self.calls = 0

    def __call__(self, prompt: str, probe: Probe) -> str:
        self.calls += 1
        i = self.truth.concept_index(probe.concept_id)
        j = self.truth.feature_index(probe.feature_id)
        return "True" if self._says_yes[i, j] else "False"


def mock_oracle(truth: BinaryFeatureMatrix, p_miss: float, p_fa: float, seed: int) -> MockOracle:
    return MockOracle(truth, p_miss, p_fa, seed)


class HttpOracle:
    """Text-completion endpoint: POST {"prompt", "max_new_tokens"} -> {"text"}."""

    remote = True

    def __init__(self, url: str | None = None, token: str | None = None, *, max_new_tokens: int = 5,
                 timeout: float = 60.0, retries: int = 4, backoff: float = 0.5,
                 sleep: Callable[[float], None] = time.sleep):
        self.url = url or os.environ.get("ORACLE_URL")
        if not self.url:
            raise OracleUnreachable("no oracle endpoint configured (set ORACLE_URL or pass --oracle-url)")
        self.token = token if token is not None else os.environ.get("ORACLE_TOKEN")
        self.max_new_tokens = max_new_tokens
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self._sleep = sleep
        self.calls = 0

    def _request(self, prompt: str) -> str:
        body = json.dumps({"prompt": prompt, "max_new_tokens": self.max_new_tokens}).encode("utf-8")
        headers = {"Content-Type": "application/json"}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        req = urllib.request.Request(self.url, data=body, headers=headers, method="POST")
        with urllib.request.urlopen(req, timeout=self.timeout) as resp:
            payload = json.loads(resp.read().decode("utf-8"))
        return extract_text(payload)

    def __call__(self, prompt: str, probe: Probe | None = None) -> str:
        self.calls += 1
        last = None
        for attempt in range(self.retries + 1):
            try:
                return self._request(prompt)
            except urllib.error.HTTPError as exc:
                if exc.code < 500 and exc.code != 429:
                    raise OracleUnreachable(f"{self.url} rejected the request: HTTP {exc.code}") from exc
                last = exc
            except (urllib.error.URLError, OSError, TimeoutError) as exc:
                last = exc
            if attempt < self.retries:
                self._sleep(self.backoff * 2 ** attempt)
        raise OracleUnreachable(f"{self.url} unreachable after {self.retries + 1} attempts: {last}")


def extract_text(payload) -> str:
    if isinstance(payload, list) and payload:
        payload = payload[0]
    if isinstance(payload, dict):
        for key in ("text", "generated_text"):
            if isinstance(payload.get(key), str):
                return payload[key]
    raise FormatError(f"oracle response has no text field: {str(payload)[:200]}")


# ------------------------------------------------------------------- driver

UNPARSEABLE_POLICIES = ("zero", "fail")


@dataclass(frozen=True)
class VerificationRun:
    machine: BinaryFeatureMatrix
    plan_size: int
    n_yes: int
    n_no: int
    n_unparseable: int
    oracle_calls: int
    cache_hits: int
    unparseable: tuple[Probe, ...] = field(default=(), repr=False)

    def log_record(self) -> dict:
        return {"plan_size": self.plan_size, "yes": self.n_yes, "no": self.n_no,
                "unparseable": self.n_unparseable, "oracle_calls": self.oracle_calls,
                "cache_hits": self.cache_hits, "machine_ones": int(self.machine.cells.sum())}


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def run_verification(plan: Sequence[Probe], oracle: Callable[[str, Probe], str],
                     cache: AnswerCache | None, *, dataset: NormDataset,
                     template: PromptTemplate | None = None, policy: str = "zero",
                     max_workers: int = 8) -> VerificationRun:
    """Answer every probe (cache first), then assemble the machine matrix.

    Fresh answers are appended to ``cache`` as they complete, so an aborted run
    resumes without repeating oracle calls.
    """
    if policy not in UNPARSEABLE_POLICIES:
        raise ValueError(f"policy must be one of {UNPARSEABLE_POLICIES}")
    if max_workers < 1:
        raise ValueError("max_workers must be >= 1")
    template = template or PromptTemplate.default()
    cache = cache if cache is not None else AnswerCache()
    thash = template.content_hash
    answers: dict[Probe, Answer] = {}
    pending: list[tuple[Probe, str]] = []
    for probe in plan:
        key = cache_key(probe.concept_id, probe.feature_id, thash)
        hit = cache.get(key)
        if hit is not None:
            answers[probe] = hit.parsed
        else:
            pending.append((probe, key))
    cache_hits = len(answers)

    def ask(probe: Probe, key: str) -> OracleAnswer:
        prompt = render_prompt(probe, template, dataset)
        raw = oracle(prompt, probe)
        ans = OracleAnswer(key, probe.concept_id, probe.feature_id, thash, raw, parse_answer(raw), _now())
        cache.put(ans)
        return ans

    def record(probe: Probe, ans: OracleAnswer):
        answers[probe] = ans.parsed
        if ans.parsed is Answer.UNPARSEABLE:
            log.warning("unparseable answer for (%s, %s): %r", probe.concept_id, probe.feature_id, ans.raw_text)
            if policy == "fail":
                raise PolicyViolation(
                    f"unparseable answer for ({probe.concept_id}, {probe.feature_id}): {ans.raw_text!r}")

    try:
        if max_workers == 1 or not getattr(oracle, "remote", True):
            for probe, key in pending:
                record(probe, ask(probe, key))
        else:
            _drive_concurrently(pending, ask, record, max_workers)
    finally:
        cache.flush()

    shape = dataset.shape
    cells = np.zeros(shape, dtype=np.uint8)
    counts = {a: 0 for a in Answer}
    bad = []
    for probe, a in answers.items():
        counts[a] += 1
        if a is Answer.YES:
            cells[dataset.concept_index(probe.concept_id), dataset.feature_index(probe.feature_id)] = 1
        elif a is Answer.UNPARSEABLE:
            bad.append(probe)
    if bad:
        log.info("%d unparseable answers mapped to 0", len(bad))
    machine = BinaryFeatureMatrix(dataset.concepts, dataset.features, cells, MACHINE)
    return VerificationRun(machine, len(answers), counts[Answer.YES], counts[Answer.NO],
                           counts[Answer.UNPARSEABLE], len(pending), cache_hits, tuple(bad))


def _drive_concurrently(pending, ask, record, max_workers):
    # at most max_workers requests in flight; stop submitting on first failure
    it = iter(pending)
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        inflight = {}
        try:
            for probe, key in it:
                inflight[pool.submit(ask, probe, key)] = probe
                if len(inflight) >= max_workers:
                    break
            while inflight:
                done, _ = wait(inflight, return_when=FIRST_COMPLETED)
                for fut in done:
                    probe = inflight.pop(fut)
                    record(probe, fut.result())
                for probe, key in it:
                    inflight[pool.submit(ask, probe, key)] = probe
                    if len(inflight) >= max_workers:
                        break
        except BaseException:
            for fut in inflight:
                fut.cancel()
            raise
