"""Hit/miss/false-alarm scoring of machine matrices against human targets."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import DimensionMismatch, DomainError, NoDistractors, NoTargets
from .norms import BinaryFeatureMatrix, CellLabelMatrix, Domain, Feature, NormDataset, check_tau, label_cells

DEFAULT_THRESHOLDS = (0.25, 0.50, 0.75, 1.00)
CORRECTIONS = ("half-count", "none")


class Scope(str, Enum):
    WHOLE = "whole"
    ANIMALS = "animals"
    ARTIFACTS = "artifacts"


def scope_mask(matrix, scope: Scope | str) -> np.ndarray:
    """Cells considered under ``scope``: everything, or one domain's block."""
    scope = Scope(scope)
    if scope is Scope.WHOLE:
        return np.ones(matrix.shape, dtype=bool)
    return matrix.block(Domain.ANIMAL if scope is Scope.ANIMALS else Domain.ARTIFACT)


# ------------------------------------------------------------------- probit

# Wichura (1988), algorithm AS 241, PPND16: ~1e-16 relative accuracy.
_A = (3.3871328727963666080e0, 1.3314166789178437745e2, 1.9715909503065514427e3,
      1.3731693765509461125e4, 4.5921953931549871457e4, 6.7265770927008700853e4,
      3.3430575583588128105e4, 2.5090809287301226727e3)
_B = (1.0, 4.2313330701600911252e1, 6.8718700749205790830e2, 5.3941960214247511077e3,
      2.1213794301586595867e4, 3.9307895800092710610e4, 2.8729085735721942674e4,
      5.2264952788528545610e3)
_C = (1.42343711074968357734e0, 4.63033784615654529590e0, 5.76949722146069140550e0,
      3.64784832476320460504e0, 1.27045825245236838258e0, 2.41780725177450611770e-1,
      2.27238449892691845833e-2, 7.74545014278341407640e-4)
_D = (1.0, 2.05319162663775882187e0, 1.67638483018380384940e0, 6.89767334985100004550e-1,
      1.48103976427480074590e-1, 1.51986665636164571966e-2, 5.47593808499534494600e-4,
      1.05075007164441684324e-9)
_E = (6.65790464350110377720e0, 5.46378491116411436990e0, 1.78482653991729133580e0,
      2.96560571828504891230e-1, 2.65321895265761230930e-2, 1.24266094738807843860e-3,
      2.71155556874348757815e-5, 2.01033439929228813265e-7)
_F = (1.0, 5.99832206555887937690e-1, 1.36929880922735805310e-1, 1.48753612908506148525e-2,
      7.86869131145613259100e-4, 1.84631831751005468180e-5, 1.42151175831644588870e-7,
      2.04426310338993978564e-15)


def _ratio(num, den, x):
    # coefficients are lowest order first
    return np.polyval(num[::-1], x) / np.polyval(den[::-1], x)


def probit(p):
    """Standard normal quantile z with Phi(z) = p, for p strictly inside (0, 1).

    Accepts scalars or arrays; returns the same kind.
    """
    arr = np.asarray(p, dtype=float)
    if np.isnan(arr).any() or (arr <= 0).any() or (arr >= 1).any():
        raise DomainError(f"probit is defined only on (0, 1), got {p}")
    q = arr - 0.5
    z = np.empty_like(arr)
    central = np.abs(q) <= 0.425
    if central.any():
        qc = q[central]
        r = 0.180625 - qc * qc
        z[central] = qc * _ratio(_A, _B, r)
    tail = ~central
    if tail.any():
        qt = q[tail]
        r = np.sqrt(-np.log(np.where(qt < 0, arr[tail], 1.0 - arr[tail])))
        near = r <= 5.0
        val = np.empty_like(r)
        val[near] = _ratio(_C, _D, r[near] - 1.6)
        val[~near] = _ratio(_E, _F, r[~near] - 5.0)
        z[tail] = np.where(qt < 0, -val, val)
    return float(z) if z.ndim == 0 else z


def dprime(hit_rate: float, false_alarm_rate: float) -> float:
    return probit(hit_rate) - probit(false_alarm_rate)


# ------------------------------------------------------------------ tallies

@dataclass(frozen=True)
class DetectionTally:
    hits: int
    misses: int
    false_alarms: int
    correct_rejections: int
    scope: Scope = Scope.WHOLE

    @property
    def n_targets(self) -> int:
        return self.hits + self.misses

    @property
    def n_distractors(self) -> int:
        return self.false_alarms + self.correct_rejections

    @property
    def total(self) -> int:
        return self.n_targets + self.n_distractors


def tally(machine: BinaryFeatureMatrix, labels: CellLabelMatrix, scope: Scope | str = Scope.WHOLE) -> DetectionTally:
    if machine.shape != labels.shape:
        raise DimensionMismatch(f"machine matrix {machine.shape} vs labels {labels.shape}")
    scope = Scope(scope)
    inside = scope_mask(machine, scope)
    said_yes = machine.cells.astype(bool)
    target = labels.is_target
    return DetectionTally(
        hits=int((inside & target & said_yes).sum()),
        misses=int((inside & target & ~said_yes).sum()),
        false_alarms=int((inside & ~target & said_yes).sum()),
        correct_rejections=int((inside & ~target & ~said_yes).sum()),
        scope=scope,
    )


class Rates(NamedTuple):
    hit_rate: float
    false_alarm_rate: float
    hr_corrected: bool
    far_corrected: bool


def _adjust(k: int, n: int, correction: str) -> tuple[float, bool]:
    rate = k / n
    if correction == "none" or 0 < k < n:
        return rate, False
    # 0 -> 1/(2N), 1 -> 1 - 1/(2N)
    half = 1.0 / (2 * n)
    return (half if k == 0 else 1.0 - half), True


def rates(t: DetectionTally, correction: str = "half-count") -> Rates:
    """Hit and false-alarm rates, with boundary rates pulled inside (0, 1).

    With ``correction="none"`` boundary rates are returned as-is and
    :func:`dprime` will refuse them.
    """
    if correction not in CORRECTIONS:
        raise ValueError(f"correction must be one of {CORRECTIONS}, got {correction!r}")
    if t.n_targets == 0:
        raise NoTargets(f"no target cells in scope {t.scope.value}")
    if t.n_distractors == 0:
        raise NoDistractors(f"no distractor cells in scope {t.scope.value}")
    hr, hc = _adjust(t.hits, t.n_targets, correction)
    far, fc = _adjust(t.false_alarms, t.n_distractors, correction)
    return Rates(hr, far, hc, fc)


@dataclass(frozen=True)
class DetectionScore:
    """One scored scope. ``hit_rate``/``false_alarm_rate`` are the raw ratios;
    ``d_prime`` is computed on the corrected ones."""

    tally: DetectionTally
    tau: float
    hit_rate: float
    false_alarm_rate: float
    d_prime: float
    hr_corrected: bool
    far_corrected: bool

    @property
    def scope(self) -> Scope:
        return self.tally.scope

    @property
    def correction_label(self) -> str:
        flags = [name for name, on in (("hr", self.hr_corrected), ("far", self.far_corrected)) if on]
        return "+".join(flags) or "none"


def score_scope(dataset: NormDataset, machine: BinaryFeatureMatrix, tau: float = 1.0,
                scope: Scope | str = Scope.WHOLE, correction: str = "half-count") -> DetectionScore:
    machine.require_layout(dataset)
    labels = label_cells(dataset, tau)
    t = tally(machine, labels, scope)
    r = rates(t, correction)
    return DetectionScore(t, float(tau), t.hits / t.n_targets, t.false_alarms / t.n_distractors,
                          dprime(r.hit_rate, r.false_alarm_rate), r.hr_corrected, r.far_corrected)


def sensitivity_sweep(dataset: NormDataset, machine: BinaryFeatureMatrix,
                      thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
                      scope: Scope | str = Scope.WHOLE, correction: str = "half-count") -> list[DetectionScore]:
    thresholds = [check_tau(t) for t in thresholds]
    if not thresholds:
        raise ValueError("at least one threshold is required")
    return [score_scope(dataset, machine, tau, scope, correction) for tau in thresholds]


# ------------------------------------------------------------ disagreements

HUMAN_YES_MACHINE_NO = "human_yes_machine_no"
MACHINE_YES_HUMAN_NO = "machine_yes_human_no"


def top_disagreements(human: BinaryFeatureMatrix, machine: BinaryFeatureMatrix, k: int = 20,
                      direction: str = HUMAN_YES_MACHINE_NO,
                      scope: Scope | str = Scope.WHOLE) -> list[tuple[Feature, int]]:
    """Features ranked by how many in-scope cells disagree in ``direction``.

    Ties go to the alphabetically first feature name.
    """
    if human.shape != machine.shape or human.features != machine.features:
        raise DimensionMismatch(f"human {human.shape} vs machine {machine.shape}")
    h = human.cells.astype(bool)
    m = machine.cells.astype(bool)
    if direction == HUMAN_YES_MACHINE_NO:
        diff = h & ~m
    elif direction == MACHINE_YES_HUMAN_NO:
        diff = m & ~h
    else:
        raise ValueError(f"unknown direction {direction!r}")
    diff &= scope_mask(human, scope)
    counts = diff.sum(axis=0)
    feats = human.features
    if scope != Scope.WHOLE:
        dom = Domain.ANIMAL if Scope(scope) is Scope.ANIMALS else Domain.ARTIFACT
        cols = [j for j, f in enumerate(feats) if f.source_domain is dom]
    else:
        cols = range(len(feats))
    ranked = sorted(cols, key=lambda j: (-int(counts[j]), feats[j].name, feats[j].source_domain.value))
    return [(feats[j], int(counts[j])) for j in ranked[:k]]


# ------------------------------------------------------------------ exports

SCORE_COLUMNS = ("scope", "tau", "hits", "misses", "fas", "crs", "hr", "far", "dprime", "corrected")


def scores_to_csv(scores: Iterable[DetectionScore], stream=None) -> str:
    out = stream or io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(SCORE_COLUMNS)
    for s in scores:
        t = s.tally
        w.writerow((s.scope.value, f"{s.tau:g}", t.hits, t.misses, t.false_alarms, t.correct_rejections,
                    f"{s.hit_rate:.6f}", f"{s.false_alarm_rate:.6f}", f"{s.d_prime:.6f}", s.correction_label))
    return out.getvalue() if stream is None else ""


def sweep_markdown(scores: Sequence[DetectionScore], title: str = "") -> str:
    lines = [f"**{title}**", ""] if title else []
    lines += ["| Inter-rater agreement | d' | hit-rate | false-alarm rate |",
              "|---|---|---|---|"]
    for s in scores:
        lines.append(f"| {s.tau * 100:g}% | {s.d_prime:.2f} | {s.hit_rate:.2f} | {s.false_alarm_rate:.2f} |")
    return "\n".join(lines) + "\n"


def disagreements_markdown(human_only: Sequence[tuple[Feature, int]],
                           machine_only: Sequence[tuple[Feature, int]], title: str = "") -> str:
    lines = [f"**{title}**", ""] if title else []
    lines += ["| Human norms say yes but machine says no | Machine says yes but human norms say no |",
              "|---|---|"]
    for i in range(max(len(human_only), len(machine_only))):
        left = f"{human_only[i][0].name} ({human_only[i][1]})" if i < len(human_only) else ""
        right = f"{machine_only[i][0].name} ({machine_only[i][1]})" if i < len(machine_only) else ""
        lines.append(f"| {left} | {right} |")
    return "\n".join(lines) + "\n"
