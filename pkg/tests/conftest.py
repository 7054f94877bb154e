import pytest

from normverify.norms import dataset_from_rows
from normverify.synthetic import make_synthetic

TOY_CONCEPTS = [
    ("tiger", "animal", "mammals"),
    ("lion", "Animal", "mammals"),
    ("wolf", "animal", "mammals"),
    ("eagle", "animal", "birds"),
    ("sparrow", "animal", "birds"),
    ("hammer", "artifact", "tools"),
    ("saw", "ARTIFACT", "tools"),
    ("car", "artifact", "vehicles"),
    ("bus", "artifact", "vehicles"),
]

TOY_CELLS = [
    ("tiger", "has_stripes", "animal", 4, 4),
    ("tiger", "has_fur", "animal", 4, 4),
    ("lion", "has_fur", "animal", 4, 4),
    ("wolf", "has_fur", "animal", 3, 4),
    ("lion", "has_mane", "animal", 2, 4),
    ("eagle", "can_fly", "animal", 4, 4),
    ("sparrow", "can_fly", "animal", 4, 4),
    ("eagle", "has_beak", "animal", 4, 4),
    ("sparrow", "has_beak", "animal", 1, 4),
    ("hammer", "is_hard", "artifact", 4, 4),
    ("saw", "is_hard", "artifact", 3, 4),
    ("saw", "is_sharp", "artifact", 4, 4),
    ("car", "has_wheels", "artifact", 4, 4),
    ("bus", "has_wheels", "artifact", 4, 4),
    ("bus", "is_big", "artifact", 4, 4),
    ("hammer", "is_big", "artifact", 0, 4),
    # same name, generated in the animal domain too
    ("tiger", "is_big", "animal", 4, 4),
    ("wolf", "is_big", "animal", 1, 4),
    ("car", "is_fast", "artifact", 4, 4),
]


@pytest.fixture
def toy():
    return dataset_from_rows(TOY_CONCEPTS, TOY_CELLS)


@pytest.fixture(scope="session")
def synth_small():
    return make_synthetic(n_animals=30, n_artifacts=30, n_animal_features=60, n_artifact_features=60,
                          animal_categories=3, artifact_categories=3, seed=11)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
