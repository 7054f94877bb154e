"""Concept/feature data model, norm ingestion and human binarization."""
from __future__ import annotations

import base64
import csv
import io
import json
import os
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import IO, Iterable, Union

import numpy as np

from .errors import (
    CrossDomainCell,
    DimensionMismatch,
    DuplicateCell,
    DuplicateConcept,
    EmptyDataset,
    FormatError,
    InconsistentCategory,
    InvalidThreshold,
    RaterCountOverflow,
    UnknownDomain,
    UnknownId,
)

Source = Union[str, os.PathLike, IO[str]]

CONCEPT_COLUMNS = ("name", "domain", "category")
CELL_COLUMNS = ("concept", "feature", "feature_domain", "raters_yes", "raters_total")
DUMP_FORMAT = "normverify.dataset/1"
MATRIX_FORMAT = "normverify.matrix/1"


class Domain(str, Enum):
    ANIMAL = "animal"
    ARTIFACT = "artifact"

    @classmethod
    def parse(cls, text: str) -> "Domain":
        try:
            return cls(str(text).strip().lower())
        except ValueError:
            raise UnknownDomain(f"unknown domain {text!r} (expected animal or artifact)") from None


@dataclass(frozen=True)
class Concept:
    name: str
    domain: Domain
    category: str

    @property
    def id(self) -> str:
        return self.name


@dataclass(frozen=True)
class Feature:
    name: str
    source_domain: Domain

    @property
    def id(self) -> str:
        # same-named features from the two generation phases stay distinct
        return f"{self.source_domain.value}:{self.name}"


def check_tau(tau: float) -> float:
    tau = float(tau)
    if not (0.0 < tau <= 1.0):
        raise InvalidThreshold(f"threshold must lie in (0, 1], got {tau}")
    return tau


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


class _Indexed:
    """Mixin: id lookup over ``concepts``/``features`` tuples."""

    concepts: tuple
    features: tuple

    @cached_property
    def _concept_pos(self) -> dict:
        return {c.id: i for i, c in enumerate(self.concepts)}

    @cached_property
    def _feature_pos(self) -> dict:
        return {f.id: j for j, f in enumerate(self.features)}

    def concept_index(self, concept_id: str) -> int:
        try:
            return self._concept_pos[concept_id]
        except KeyError:
            raise UnknownId(f"unknown concept {concept_id!r}") from None

    def feature_index(self, feature_id: str) -> int:
        try:
            return self._feature_pos[feature_id]
        except KeyError:
            raise UnknownId(f"unknown feature {feature_id!r}") from None

    def concept(self, concept_id: str) -> Concept:
        return self.concepts[self.concept_index(concept_id)]

    @cached_property
    def concept_domains(self) -> np.ndarray:
        return _frozen(np.array([c.domain is Domain.ANIMAL for c in self.concepts], dtype=bool))

    @cached_property
    def feature_domains(self) -> np.ndarray:
        return _frozen(np.array([f.source_domain is Domain.ANIMAL for f in self.features], dtype=bool))

    @cached_property
    def within_domain(self) -> np.ndarray:
        """Boolean (concept, feature) mask of same-domain pairs."""
        return _frozen(self.concept_domains[:, None] == self.feature_domains[None, :])

    def block(self, domain: Domain) -> np.ndarray:
        """Mask selecting ``domain`` concepts crossed with ``domain`` features."""
        is_animal = domain is Domain.ANIMAL
        rows = self.concept_domains == is_animal
        cols = self.feature_domains == is_animal
        return rows[:, None] & cols[None, :]

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.concepts), len(self.features)


@dataclass(frozen=True, eq=False)
class NormDataset(_Indexed):
    """Human verification data: per-cell rater counts plus a coverage mask.

    ``human_verified`` marks cells that raters actually judged; cross-domain
    cells are never verified.
    """

    concepts: tuple[Concept, ...]
    features: tuple[Feature, ...]
    rater_yes: np.ndarray
    rater_total: int
    human_verified: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "concepts", tuple(self.concepts))
        object.__setattr__(self, "features", tuple(self.features))
        yes = np.asarray(self.rater_yes, dtype=np.int32).reshape(self.shape)
        verified = np.asarray(self.human_verified, dtype=bool).reshape(self.shape)
        object.__setattr__(self, "rater_yes", _frozen(yes))
        object.__setattr__(self, "human_verified", _frozen(verified))
        if self.rater_total < 1:
            raise FormatError(f"rater_total must be >= 1, got {self.rater_total}")
        _check_unique([c.name for c in self.concepts], DuplicateConcept, "concept")
        _check_unique([f.id for f in self.features], FormatError, "feature")
        cat_domain: dict[str, Domain] = {}
        for c in self.concepts:
            if not c.name:
                raise FormatError("concept name must be non-empty")
            if cat_domain.setdefault(c.category, c.domain) is not c.domain:
                raise InconsistentCategory(
                    f"category {c.category!r} appears in both domains (concept {c.name!r})")
        if any(not f.name for f in self.features):
            raise FormatError("feature name must be non-empty")
        if (yes < 0).any() or (yes > self.rater_total).any():
            raise RaterCountOverflow(f"rater_yes must lie in [0, {self.rater_total}]")
        if self.shape[1] and (verified & ~self.within_domain).any():
            raise CrossDomainCell("cross-domain cells cannot be human-verified")
        if ((yes > 0) & ~verified).any():
            raise FormatError("cells with rater_yes > 0 must be human-verified")

    def __eq__(self, other):
        if not isinstance(other, NormDataset):
            return NotImplemented
        return (self.concepts == other.concepts and self.features == other.features
                and self.rater_total == other.rater_total
                and np.array_equal(self.rater_yes, other.rater_yes)
                and np.array_equal(self.human_verified, other.human_verified))

    __hash__ = None  # type: ignore[assignment]

    def agreement(self) -> np.ndarray:
        """Fraction of raters affirming each cell."""
        return self.rater_yes / self.rater_total

    def name_collisions(self) -> list[str]:
        """Feature names generated independently in both domains."""
        counts = Counter(f.name for f in self.features)
        return sorted(name for name, n in counts.items() if n > 1)

    def summary(self) -> dict:
        n_animal = int(self.concept_domains.sum())
        return {
            "concepts": len(self.concepts),
            "animals": n_animal,
            "artifacts": len(self.concepts) - n_animal,
            "features": len(self.features),
            "cells": int(np.prod(self.shape)),
            "human_verified_cells": int(self.human_verified.sum()),
            "rater_total": self.rater_total,
            "name_collisions": len(self.name_collisions()),
        }


def _check_unique(names, exc, what):
    seen = set()
    for n in names:
        if n in seen:
            raise exc(f"duplicate {what} {n!r}")
        seen.add(n)


@dataclass(frozen=True)
class Provenance:
    kind: str  # "human" | "machine" | "combined"
    tau: float | None = None

    def __post_init__(self):
        if self.kind not in ("human", "machine", "combined"):
            raise FormatError(f"unknown provenance {self.kind!r}")
        if self.kind == "human":
            check_tau(self.tau)
        elif self.tau is not None:
            raise FormatError("only human provenance carries a threshold")

    def __str__(self) -> str:
        return f"Human({self.tau:g})" if self.kind == "human" else self.kind.capitalize()


def human_provenance(tau: float) -> Provenance:
    return Provenance("human", check_tau(tau))


MACHINE = Provenance("machine")
COMBINED = Provenance("combined")


@dataclass(frozen=True, eq=False)
class BinaryFeatureMatrix(_Indexed):
    concepts: tuple[Concept, ...]
    features: tuple[Feature, ...]
    cells: np.ndarray
    provenance: Provenance

    def __post_init__(self):
        object.__setattr__(self, "concepts", tuple(self.concepts))
        object.__setattr__(self, "features", tuple(self.features))
        cells = np.asarray(self.cells)
        if cells.shape != self.shape:
            raise DimensionMismatch(f"cells have shape {cells.shape}, expected {self.shape}")
        if cells.size and not np.isin(cells, (0, 1)).all():
            raise FormatError("binary matrix cells must be 0 or 1")
        object.__setattr__(self, "cells", _frozen(cells.astype(np.uint8)))

    def __eq__(self, other):
        if not isinstance(other, BinaryFeatureMatrix):
            return NotImplemented
        return (self.concepts == other.concepts and self.features == other.features
                and self.provenance == other.provenance
                and np.array_equal(self.cells, other.cells))

    __hash__ = None  # type: ignore[assignment]

    def same_layout(self, other) -> bool:
        return self.concepts == other.concepts and self.features == other.features

    def require_layout(self, other) -> None:
        if not self.same_layout(other):
            raise DimensionMismatch(
                f"layout mismatch: {self.shape} vs {other.shape} (or differing concept/feature order)")

    def check_source(self, dataset: NormDataset) -> None:
        """Raise unless this matrix is consistent with ``dataset``."""
        self.require_layout(dataset)
        if self.provenance.kind == "human" and (self.cells.astype(bool) & ~dataset.human_verified).any():
            raise FormatError("Human matrix has 1-cells on cells raters never verified")


@dataclass(frozen=True)
class CellLabelMatrix:
    """Target/distractor labels; ``is_target`` is True for targets."""

    is_target: np.ndarray
    tau: float

    def label(self, c: int, f: int) -> str:
        return "Target" if self.is_target[c, f] else "Distractor"

    @property
    def shape(self):
        return self.is_target.shape


def _target_mask(dataset: NormDataset, tau: float) -> np.ndarray:
    tau = check_tau(tau)
    return dataset.human_verified & (dataset.agreement() >= tau)


def label_cells(dataset: NormDataset, tau: float = 1.0) -> CellLabelMatrix:
    """Target iff the fraction of affirming raters reaches ``tau``."""
    return CellLabelMatrix(_frozen(_target_mask(dataset, tau)), float(tau))


def binarize_human(dataset: NormDataset, tau: float = 1.0) -> BinaryFeatureMatrix:
    return BinaryFeatureMatrix(dataset.concepts, dataset.features,
                               _target_mask(dataset, tau).astype(np.uint8), human_provenance(tau))


# ---------------------------------------------------------------- ingestion

def _open(source: Source, mode: str = "r"):
    if isinstance(source, (str, os.PathLike)):
        return open(source, mode, newline="", encoding="utf-8"), str(source)
    return _NoClose(source), getattr(source, "name", "<stream>")


class _NoClose:
    def __init__(self, stream):
        self.stream = stream

    def __enter__(self):
        return self.stream

    def __exit__(self, *exc):
        return False


def _reader(stream, required, where):
    reader = csv.DictReader(stream)
    header = [h.strip() for h in (reader.fieldnames or [])]
    missing = [c for c in required if c not in header]
    if missing:
        raise FormatError(f"{where}: missing column(s) {', '.join(missing)}; header is {header}")
    reader.fieldnames = header
    return reader


def _int(row, key, where):
    try:
        return int(str(row[key]).strip())
    except (TypeError, ValueError):
        raise FormatError(f"{where}: {key} must be an integer, got {row[key]!r}") from None


def load_norms(concepts_source: Source, cells_source: Source, *,
               within_default_verified: bool = True) -> NormDataset:
    """Read the two-table norm format.

    Features take their order from first appearance in the cells table.
    Within-domain cells missing from the table default to verified with zero
    affirmations unless ``within_default_verified`` is False, in which case
    only listed cells count as verified.
    """
    concepts: list[Concept] = []
    names: set[str] = set()
    handle, src = _open(concepts_source)
    with handle as stream:
        for lineno, row in enumerate(_reader(stream, CONCEPT_COLUMNS, src), start=2):
            where = f"{src}:{lineno}"
            name = (row["name"] or "").strip()
            if not name:
                raise FormatError(f"{where}: empty concept name")
            if name in names:
                raise DuplicateConcept(f"{where}: duplicate concept {name!r}")
            try:
                domain = Domain.parse(row["domain"])
            except UnknownDomain as exc:
                raise UnknownDomain(f"{where}: {exc}") from None
            names.add(name)
            concepts.append(Concept(name, domain, (row["category"] or "").strip()))

    concept_pos = {c.name: i for i, c in enumerate(concepts)}
    feature_pos: dict[tuple[str, Domain], int] = {}
    features: list[Feature] = []
    entries: dict[tuple[int, int], int] = {}
    rater_total = None
    handle, src = _open(cells_source)
    with handle as stream:
        for lineno, row in enumerate(_reader(stream, CELL_COLUMNS, src), start=2):
            where = f"{src}:{lineno}"
            cname = (row["concept"] or "").strip()
            fname = (row["feature"] or "").strip()
            if cname not in concept_pos:
                raise UnknownId(f"{where}: unknown concept {cname!r}")
            if not fname:
                raise FormatError(f"{where}: empty feature name")
            try:
                fdomain = Domain.parse(row["feature_domain"])
            except UnknownDomain as exc:
                raise UnknownDomain(f"{where}: {exc}") from None
            yes = _int(row, "raters_yes", where)
            total = _int(row, "raters_total", where)
            if total < 1:
                raise FormatError(f"{where}: raters_total must be >= 1")
            if yes < 0 or yes > total:
                raise RaterCountOverflow(f"{where}: raters_yes={yes} exceeds raters_total={total}")
            if rater_total is None:
                rater_total = total
            elif total != rater_total:
                raise FormatError(f"{where}: raters_total={total} differs from earlier rows ({rater_total})")
            ci = concept_pos[cname]
            if concepts[ci].domain is not fdomain:
                raise CrossDomainCell(
                    f"{where}: {cname!r} is {concepts[ci].domain.value} but feature {fname!r} "
                    f"is {fdomain.value}; raters only judge within-domain pairs")
            key = (fname, fdomain)
            if key not in feature_pos:
                feature_pos[key] = len(features)
                features.append(Feature(fname, fdomain))
            fi = feature_pos[key]
            if (ci, fi) in entries:
                raise DuplicateCell(f"{where}: duplicate cell ({cname!r}, {fname!r})")
            entries[(ci, fi)] = yes

    if not concepts or not features:
        raise EmptyDataset(f"dataset has {len(concepts)} concepts and {len(features)} features")

    shape = (len(concepts), len(features))
    yes_m = np.zeros(shape, dtype=np.int32)
    listed = np.zeros(shape, dtype=bool)
    if entries:
        idx = np.array(list(entries.keys()))
        yes_m[idx[:, 0], idx[:, 1]] = list(entries.values())
        listed[idx[:, 0], idx[:, 1]] = True
    cdom = np.array([c.domain is Domain.ANIMAL for c in concepts])
    fdom = np.array([f.source_domain is Domain.ANIMAL for f in features])
    within = cdom[:, None] == fdom[None, :]
    verified = within if within_default_verified else listed
    return NormDataset(tuple(concepts), tuple(features), yes_m, rater_total, verified)


def write_norms(dataset: NormDataset, concepts_out: Source, cells_out: Source, *,
                sparse: bool = True) -> None:
    """Serialize back to the two-table format.

    Rows are written feature-major so that re-loading preserves feature order.
    With ``sparse`` only cells with at least one affirmation are written (plus
    one zero row for any feature that would otherwise vanish); this round-trips
    datasets whose within-domain cells are all verified.
    """
    handle, _ = _open(concepts_out, "w")
    with handle as stream:
        w = csv.writer(stream, lineterminator="\n")
        w.writerow(CONCEPT_COLUMNS)
        for c in dataset.concepts:
            w.writerow((c.name, c.domain.value, c.category))
    keep = dataset.rater_yes > 0 if sparse else dataset.human_verified
    handle, _ = _open(cells_out, "w")
    with handle as stream:
        w = csv.writer(stream, lineterminator="\n")
        w.writerow(CELL_COLUMNS)
        for j, f in enumerate(dataset.features):
            rows = np.flatnonzero(keep[:, j])
            if rows.size == 0:
                candidates = np.flatnonzero(dataset.human_verified[:, j])
                if candidates.size == 0:
                    candidates = np.flatnonzero(dataset.within_domain[:, j])[:1]
                rows = candidates[:1]
            for i in rows:
                w.writerow((dataset.concepts[i].name, f.name, f.source_domain.value,
                            int(dataset.rater_yes[i, j]), dataset.rater_total))


# ----------------------------------------------------------- JSON documents

def _pack(mask: np.ndarray) -> str:
    return base64.b64encode(np.packbits(mask.astype(bool), axis=None).tobytes()).decode("ascii")


def _unpack(text: str, shape) -> np.ndarray:
    raw = np.frombuffer(base64.b64decode(text), dtype=np.uint8)
    n = int(np.prod(shape))
    return np.unpackbits(raw, count=n).reshape(shape).astype(bool)


def _concepts_json(concepts):
    return [[c.name, c.domain.value, c.category] for c in concepts]


def _features_json(features):
    return [[f.name, f.source_domain.value] for f in features]


def _concepts_from(rows):
    return tuple(Concept(n, Domain.parse(d), cat) for n, d, cat in rows)


def _features_from(rows):
    return tuple(Feature(n, Domain.parse(d)) for n, d in rows)


def _write_json(doc: dict, target: Source) -> None:
    text = json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"
    if isinstance(target, (str, os.PathLike)):
        Path(target).write_text(text, encoding="utf-8")
    else:
        target.write(text)


def _read_json(source: Source, expected_format: str) -> dict:
    if isinstance(source, (str, os.PathLike)):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"not a JSON document: {exc}") from None
    if doc.get("format") != expected_format:
        raise FormatError(f"expected format {expected_format!r}, got {doc.get('format')!r}")
    return doc


def dump_dataset(dataset: NormDataset, target: Source) -> None:
    """Write the canonical single-document JSON form of ``dataset``."""
    ci, fi = np.nonzero(dataset.rater_yes)
    doc = {
        "format": DUMP_FORMAT,
        "rater_total": dataset.rater_total,
        "concepts": _concepts_json(dataset.concepts),
        "features": _features_json(dataset.features),
        "rater_yes": [[int(i), int(j), int(dataset.rater_yes[i, j])] for i, j in zip(ci, fi)],
        "human_verified": _pack(dataset.human_verified),
    }
    _write_json(doc, target)


def load_dataset(source: Source) -> NormDataset:
    doc = _read_json(source, DUMP_FORMAT)
    concepts = _concepts_from(doc["concepts"])
    features = _features_from(doc["features"])
    shape = (len(concepts), len(features))
    yes = np.zeros(shape, dtype=np.int32)
    for i, j, v in doc["rater_yes"]:
        yes[i, j] = v
    return NormDataset(concepts, features, yes, int(doc["rater_total"]),
                       _unpack(doc["human_verified"], shape))


def save_matrix(matrix: BinaryFeatureMatrix, target: Source) -> None:
    doc = {
        "format": MATRIX_FORMAT,
        "provenance": {"kind": matrix.provenance.kind, "tau": matrix.provenance.tau},
        "concepts": _concepts_json(matrix.concepts),
        "features": _features_json(matrix.features),
        "cells": _pack(matrix.cells),
    }
    _write_json(doc, target)


def load_matrix(source: Source) -> BinaryFeatureMatrix:
    doc = _read_json(source, MATRIX_FORMAT)
    concepts = _concepts_from(doc["concepts"])
    features = _features_from(doc["features"])
    prov = Provenance(doc["provenance"]["kind"], doc["provenance"]["tau"])
    cells = _unpack(doc["cells"], (len(concepts), len(features))).astype(np.uint8)
    return BinaryFeatureMatrix(concepts, features, cells, prov)


def dataset_from_rows(concept_rows: Iterable[tuple[str, str, str]],
                      cell_rows: Iterable[tuple], **kwargs) -> NormDataset:
    """Build a dataset from in-memory rows (mostly for tests and scripts)."""
    c_buf, f_buf = io.StringIO(), io.StringIO()
    cw, fw = csv.writer(c_buf), csv.writer(f_buf)
    cw.writerow(CONCEPT_COLUMNS)
    cw.writerows(concept_rows)
    fw.writerow(CELL_COLUMNS)
    fw.writerows(cell_rows)
    c_buf.seek(0)
    f_buf.seek(0)
    return load_norms(c_buf, f_buf, **kwargs)
