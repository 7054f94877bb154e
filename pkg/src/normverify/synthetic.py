"""Seeded synthetic norm datasets with category structure."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .norms import Concept, Domain, Feature, NormDataset


@dataclass
class SyntheticConfig:
    n_animals: int = 150
    n_artifacts: int = 150
    n_animal_features: int = 1000
    n_artifact_features: int = 1000
    animal_categories: int = 6
    artifact_categories: int = 7
    raters: int = 4
    base_rate: float = 0.02  # chance a feature is true outside its home category
    category_rate: float = 0.35  # chance a category-typical feature is true
    typical_fraction: float = 0.15  # share of a domain's features typical of each category
    rater_accuracy: float = 0.92
    rater_false_yes: float = 0.03
    seed: int = 0


def make_synthetic(cfg: SyntheticConfig | None = None, **overrides) -> NormDataset:
    """Build a dataset whose latent truth is block-structured by category.

    Each rater independently affirms a true cell with probability
    ``rater_accuracy`` and a false one with ``rater_false_yes``. Every concept
    with any same-domain feature gets at least one unanimously affirmed one.
    """
    cfg = replace(cfg or SyntheticConfig(), **overrides)
    rng = np.random.default_rng(cfg.seed)

    concepts: list[Concept] = []
    features: list[Feature] = []
    blocks = []
    domains = ((Domain.ANIMAL, "animal", cfg.n_animals, cfg.n_animal_features, cfg.animal_categories),
            (Domain.ARTIFACT, "artifact", cfg.n_artifacts, cfg.n_artifact_features, cfg.artifact_categories))
    for domain, stem, n_c, n_f, n_cat in domains:
        cats = rng.integers(n_cat, size=n_c)
        cats[:min(n_cat, n_c)] = np.arange(min(n_cat, n_c))  # every category populated
        c0 = len(concepts)
        concepts += [Concept(f"{stem}_{i:03d}", domain, f"{stem}_cat_{cats[i]}") for i in range(n_c)]
        f0 = len(features)
        features += [Feature(f"{stem}_feature_{j:04d}", domain) for j in range(n_f)]
        typical = rng.random((n_cat, n_f)) < cfg.typical_fraction
        p = np.where(typical[cats], cfg.category_rate, cfg.base_rate)
        blocks.append((slice(c0, c0 + n_c), slice(f0, f0 + n_f), rng.random((n_c, n_f)) < p))

    shape = (len(concepts), len(features))
    truth = np.zeros(shape, dtype=bool)
    for rows, cols, t in blocks:
        truth[rows, cols] = t
    cdom = np.array([c.domain is Domain.ANIMAL for c in concepts])
    fdom = np.array([f.source_domain is Domain.ANIMAL for f in features])
    within = cdom[:, None] == fdom[None, :]

    p_yes = np.where(truth, cfg.rater_accuracy, cfg.rater_false_yes)
    yes = rng.binomial(cfg.raters, p_yes) * within
    for i in np.flatnonzero((yes == cfg.raters).sum(axis=1) == 0):
        if not within[i].any():
            continue
        j = rng.choice(np.flatnonzero(within[i]))
        yes[i, j] = cfg.raters
    return NormDataset(tuple(concepts), tuple(features), yes.astype(np.int32), cfg.raters, within)
