"""Cosine-distance spaces over concepts and the human+machine combination."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DimensionMismatch, UnknownId, ZeroVector
from .norms import COMBINED, BinaryFeatureMatrix, Concept, NormDataset

COMBINE_MODES = ("patch", "union")


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    concepts: tuple[Concept, ...]
    values: np.ndarray

    @cached_property
    def _pos(self) -> dict:
        return {c.id: i for i, c in enumerate(self.concepts)}

    def index(self, concept_id: str) -> int:
        try:
            return self._pos[concept_id]
        except KeyError:
            raise UnknownId(f"concept {concept_id!r} is not in the distance matrix") from None

    def distance(self, a: str, b: str) -> float:
        return float(self.values[self.index(a), self.index(b)])

    def to_square_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow([""] + [c.name for c in self.concepts])
        for c, row in zip(self.concepts, self.values):
            w.writerow([c.name] + [repr(float(v)) for v in row])
        return out.getvalue()

    def to_long_csv(self) -> str:
        """Upper-triangle pairs as ``concept_a,concept_b,distance``."""
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(("concept_a", "concept_b", "distance"))
        n = len(self.concepts)
        for i in range(n):
            for j in range(i + 1, n):
                w.writerow((self.concepts[i].name, self.concepts[j].name, repr(float(self.values[i, j]))))
        return out.getvalue()


def cosine_distance_matrix(matrix: BinaryFeatureMatrix) -> DistanceMatrix:
    """1 - cosine similarity between every pair of concept rows."""
    x = matrix.cells.astype(np.float64)
    sizes = x.sum(axis=1)
    empty = np.flatnonzero(sizes == 0)
    if empty.size:
        raise ZeroVector(matrix.concepts[empty[0]].name)
    sim = (x @ x.T) / np.sqrt(np.outer(sizes, sizes))
    d = np.clip(1.0 - sim, 0.0, 1.0)
    d = np.triu(d, 1)
    d = d + d.T  # exact symmetry, zero diagonal
    d.setflags(write=False)
    return DistanceMatrix(matrix.concepts, d)


def combine(dataset: NormDataset, human: BinaryFeatureMatrix, machine: BinaryFeatureMatrix,
            mode: str = "patch") -> BinaryFeatureMatrix:
    """Human answers where raters judged the cell, machine answers elsewhere.

    ``mode="union"`` instead sets a cell whenever either source does.
    """
    if mode not in COMBINE_MODES:
        raise ValueError(f"mode must be one of {COMBINE_MODES}")
    for m in (human, machine):
        if not m.same_layout(dataset):
            raise DimensionMismatch(f"matrix {m.shape} does not match dataset {dataset.shape}")
    if mode == "patch":
        cells = np.where(dataset.human_verified, human.cells, machine.cells)
    else:
        cells = human.cells | machine.cells
    return BinaryFeatureMatrix(dataset.concepts, dataset.features, cells, COMBINED)
