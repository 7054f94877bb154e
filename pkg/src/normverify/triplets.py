"""Triplet similarity-judgment conditions, sampling, prediction and scoring."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace
from enum import Enum
from itertools import combinations
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    DuplicateWord,
    EmptyCondition,
    FormatError,
    InfeasibleCondition,
    MissingVotes,
    UnknownId,
)
from .space import DistanceMatrix


class Condition(str, Enum):
    CC = "CC"
    CD = "CD"
    COD = "COD"
    DD = "DD"
    DOD = "DOD"
    ODOD = "ODOD"


# relation of an option to the target: same category, same domain, other domain
SAME, DIFF, OTHER = "C", "D", "OD"
_RANK = {SAME: 0, DIFF: 1, OTHER: 2}
_PAIR_TO_CONDITION = {
    (SAME, SAME): Condition.CC, (SAME, DIFF): Condition.CD, (SAME, OTHER): Condition.COD,
    (DIFF, DIFF): Condition.DD, (DIFF, OTHER): Condition.DOD, (OTHER, OTHER): Condition.ODOD,
}
_CONDITION_TO_PAIR = {v: k for k, v in _PAIR_TO_CONDITION.items()}


def relation(target, option) -> str:
    if option.domain is not target.domain:
        return OTHER
    return SAME if option.category == target.category else DIFF


def classify_condition(target: str, a: str, b: str, dataset) -> Condition:
    if len({target, a, b}) < 3:
        raise DuplicateWord(f"triplet words must be distinct: ({target}, {a}, {b})")
    t, ca, cb = dataset.concept(target), dataset.concept(a), dataset.concept(b)
    pair = tuple(sorted((relation(t, ca), relation(t, cb)), key=_RANK.__getitem__))
    return _PAIR_TO_CONDITION[pair]


@dataclass(frozen=True)
class TripletRecord:
    triplet_id: str
    target: str
    option_a: str
    option_b: str
    condition: Condition
    votes_a: int | None = None
    votes_b: int | None = None

    @property
    def has_votes(self) -> bool:
        return self.votes_a is not None and self.votes_b is not None

    def with_votes(self, votes_a: int, votes_b: int) -> "TripletRecord":
        return replace(self, votes_a=int(votes_a), votes_b=int(votes_b))


def _candidates(dataset):
    by_rel = []
    for t in dataset.concepts:
        groups = {SAME: [], DIFF: [], OTHER: []}
        for c in dataset.concepts:
            if c.id != t.id:
                groups[relation(t, c)].append(c.id)
        by_rel.append(groups)
    return by_rel


def _pair_count(groups, r1, r2) -> int:
    if r1 == r2:
        n = len(groups[r1])
        return n * (n - 1) // 2
    return len(groups[r1]) * len(groups[r2])


_ENUMERATE_LIMIT = 200_000


def generate_triplets(dataset, n_per_condition: int, seed: int,
                      conditions: Sequence[Condition] = tuple(Condition)) -> list[TripletRecord]:
    """Sample ``n_per_condition`` distinct triplets per condition.

    Every eligible (target, unordered option pair) is equally likely; which
    option lands in slot A is a fair coin flip.
    """
    rng = np.random.default_rng(seed)
    groups = _candidates(dataset)
    targets = [c.id for c in dataset.concepts]
    out: list[TripletRecord] = []
    for cond in conditions:
        cond = Condition(cond)
        r1, r2 = _CONDITION_TO_PAIR[cond]
        weights = np.array([_pair_count(g, r1, r2) for g in groups], dtype=np.int64)
        total = int(weights.sum())
        if total < n_per_condition or total == 0:
            raise InfeasibleCondition(
                f"condition {cond.value} has only {total} eligible triplets; {n_per_condition} requested")
        if total <= _ENUMERATE_LIMIT:
            pool = []
            for ti, g in enumerate(groups):
                pairs = combinations(g[r1], 2) if r1 == r2 else ((a, b) for a in g[r1] for b in g[r2])
                pool.extend((targets[ti], a, b) for a, b in pairs)
            picks = [pool[k] for k in rng.choice(len(pool), size=n_per_condition, replace=False)]
        else:
            picks, seen = [], set()
            probs = weights / total
            while len(picks) < n_per_condition:
                ti = int(rng.choice(len(targets), p=probs))
                g = groups[ti]
                if r1 == r2:
                    i, j = rng.choice(len(g[r1]), size=2, replace=False)
                    a, b = g[r1][i], g[r1][j]
                else:
                    a = g[r1][rng.integers(len(g[r1]))]
                    b = g[r2][rng.integers(len(g[r2]))]
                key = (targets[ti], frozenset((a, b)))
                if key not in seen:
                    seen.add(key)
                    picks.append((targets[ti], a, b))
        for t, a, b in picks:
            if rng.random() < 0.5:
                a, b = b, a
            out.append(TripletRecord(f"t{len(out):06d}", t, a, b, cond))
    return out


# --------------------------------------------------------------- prediction

class Choice(str, Enum):
    A = "A"
    B = "B"
    TIE = "tie"


def predict_choice(triplet: TripletRecord, distances: DistanceMatrix) -> Choice:
    da = distances.distance(triplet.target, triplet.option_a)
    db = distances.distance(triplet.target, triplet.option_b)
    if da < db:
        return Choice.A
    if da > db:
        return Choice.B
    return Choice.TIE


def majority(triplet: TripletRecord) -> Choice:
    if triplet.votes_a > triplet.votes_b:
        return Choice.A
    if triplet.votes_b > triplet.votes_a:
        return Choice.B
    return Choice.TIE


@dataclass(frozen=True)
class ConditionAgreement:
    condition: Condition
    n_total: int
    n_scored: int
    n_agree: int
    ties_votes: int
    ties_pred: int
    human_consistency: float

    @property
    def agreement(self) -> float:
        """NaN when every triplet in the condition was excluded as a tie."""
        return self.n_agree / self.n_scored if self.n_scored else math.nan

    @property
    def n_excluded(self) -> int:
        return self.n_total - self.n_scored


@dataclass(frozen=True)
class AgreementReport:
    rows: tuple[ConditionAgreement, ...]

    def __getitem__(self, cond) -> ConditionAgreement:
        cond = Condition(cond)
        for r in self.rows:
            if r.condition is cond:
                return r
        raise KeyError(cond)

    @property
    def n_scored(self) -> int:
        return sum(r.n_scored for r in self.rows)

    @property
    def n_total(self) -> int:
        return sum(r.n_total for r in self.rows)

    @property
    def agreement(self) -> float:
        return sum(r.n_agree for r in self.rows) / self.n_scored

    @property
    def human_consistency(self) -> float:
        return sum(r.human_consistency * r.n_total for r in self.rows) / self.n_total


def score_agreement(triplets: Iterable[TripletRecord], distances: DistanceMatrix,
                    conditions: Sequence[Condition] | None = None) -> AgreementReport:
    """Per-condition agreement of distance-based predictions with the vote majority.

    Triplets whose votes tie or whose prediction ties are excluded from the
    agreement fraction and counted separately; human consistency averages over
    every triplet in the condition. A requested condition with no triplets at
    all raises :class:`EmptyCondition`.
    """
    buckets: dict[Condition, list[TripletRecord]] = {}
    for t in triplets:
        if not t.has_votes or t.votes_a + t.votes_b <= 0:
            raise MissingVotes(f"triplet {t.triplet_id} has no votes")
        buckets.setdefault(Condition(t.condition), []).append(t)
    wanted = [c for c in Condition if c in buckets] if conditions is None else [Condition(c) for c in conditions]
    rows = []
    for cond in wanted:
        items = buckets.get(cond, [])
        agree = scored = tv = tp = 0
        consistency = 0.0
        for t in items:
            consistency += max(t.votes_a, t.votes_b) / (t.votes_a + t.votes_b)
            human = majority(t)
            pred = predict_choice(t, distances)
            tv += human is Choice.TIE
            tp += pred is Choice.TIE
            if human is Choice.TIE or pred is Choice.TIE:
                continue
            scored += 1
            agree += pred is human
        if not items:
            raise EmptyCondition(f"no triplets for condition {cond.value}")
        rows.append(ConditionAgreement(cond, len(items), scored, agree, tv, tp, consistency / len(items)))
    return AgreementReport(tuple(rows))


def synthesize_votes(triplets: Iterable[TripletRecord], distances: DistanceMatrix,
                     n_raters: int = 10, scale: float = 0.1) -> list[TripletRecord]:
    """Deterministic votes whose majority always favours the closer option.

    The majority widens with the distance gap; equal distances give an even
    split (for even ``n_raters``).
    """
    lo = n_raters // 2 + 1
    out = []
    for t in triplets:
        da = distances.distance(t.target, t.option_a)
        db = distances.distance(t.target, t.option_b)
        if da == db:
            va = n_raters // 2
            out.append(t.with_votes(va, n_raters - va))
            continue
        winner = lo + int(round((n_raters - lo) * math.tanh(abs(da - db) / scale)))
        va, vb = (winner, n_raters - winner) if da < db else (n_raters - winner, winner)
        out.append(t.with_votes(va, vb))
    return out


def random_distance_matrix(concepts, seed: int) -> DistanceMatrix:
    rng = np.random.default_rng(seed)
    n = len(concepts)
    d = np.triu(rng.random((n, n)), 1)
    return DistanceMatrix(tuple(concepts), d + d.T)


# ---------------------------------------------------------------------- IO

TRIPLET_COLUMNS = ("triplet_id", "target", "option_a", "option_b", "condition")
VOTE_COLUMNS = ("triplet_id", "votes_a", "votes_b")
REPORT_COLUMNS = ("condition", "n", "agreement", "ties_votes", "ties_pred", "human_consistency")
FIGURE_COLUMNS = ("space", "condition", "n", "agreement", "human_consistency")


def _rows(path, required):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = [h.strip() for h in reader.fieldnames or []]
        missing = [c for c in required if c not in header]
        if missing:
            raise FormatError(f"{path}: missing column(s) {', '.join(missing)}")
        reader.fieldnames = header
        for lineno, row in enumerate(reader, start=2):
            yield f"{path}:{lineno}", {k: (v or "").strip() for k, v in row.items()}


def write_triplets(triplets: Iterable[TripletRecord], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRIPLET_COLUMNS)
        for t in triplets:
            w.writerow((t.triplet_id, t.target, t.option_a, t.option_b, t.condition.value))


def read_triplets(path, dataset=None) -> list[TripletRecord]:
    """Load a triplet file; with ``dataset`` each condition label is re-checked."""
    out, seen = [], set()
    for where, row in _rows(path, TRIPLET_COLUMNS):
        try:
            cond = Condition(row["condition"].upper())
        except ValueError:
            raise FormatError(f"{where}: unknown condition {row['condition']!r}") from None
        if row["triplet_id"] in seen:
            raise FormatError(f"{where}: duplicate triplet_id {row['triplet_id']!r}")
        seen.add(row["triplet_id"])
        t = TripletRecord(row["triplet_id"], row["target"], row["option_a"], row["option_b"], cond)
        if dataset is not None:
            actual = classify_condition(t.target, t.option_a, t.option_b, dataset)
            if actual is not cond:
                raise FormatError(f"{where}: labelled {cond.value} but the words form {actual.value}")
        out.append(t)
    return out


def write_votes(triplets: Iterable[TripletRecord], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(VOTE_COLUMNS)
        for t in triplets:
            w.writerow((t.triplet_id, t.votes_a, t.votes_b))


def read_votes(path) -> dict[str, tuple[int, int]]:
    votes = {}
    for where, row in _rows(path, VOTE_COLUMNS):
        try:
            va, vb = int(row["votes_a"]), int(row["votes_b"])
        except ValueError:
            raise FormatError(f"{where}: vote counts must be integers") from None
        if va < 0 or vb < 0:
            raise FormatError(f"{where}: vote counts must be non-negative")
        if row["triplet_id"] in votes:
            raise FormatError(f"{where}: duplicate votes for {row['triplet_id']!r}")
        votes[row["triplet_id"]] = (va, vb)
    return votes


def attach_votes(triplets: Sequence[TripletRecord], votes: Mapping[str, tuple[int, int]]) -> list[TripletRecord]:
    ids = {t.triplet_id for t in triplets}
    for tid in votes:
        if tid not in ids:
            raise UnknownId(f"votes given for unknown triplet_id {tid!r}")
    out = []
    for t in triplets:
        if t.triplet_id not in votes:
            raise MissingVotes(f"no votes for triplet_id {t.triplet_id!r}")
        out.append(t.with_votes(*votes[t.triplet_id]))
    return out


def _fmt(x: float) -> str:
    return "" if math.isnan(x) else f"{x:.6f}"


def report_to_csv(report: AgreementReport) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for r in report.rows:
        w.writerow((r.condition.value, r.n_scored, _fmt(r.agreement), r.ties_votes, r.ties_pred,
                    _fmt(r.human_consistency)))
    return out.getvalue()


def figure_table(reports: Mapping[str, AgreementReport]) -> str:
    """Long-format agreement table: one row per space per condition."""
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(FIGURE_COLUMNS)
    for space, report in reports.items():
        for r in report.rows:
            w.writerow((space, r.condition.value, r.n_scored, _fmt(r.agreement), _fmt(r.human_consistency)))
    return out.getvalue()

