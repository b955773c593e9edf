import pytest

import settings
from feedback import load_pack, validate_pack
from rubric import CategoryVector, load_rubric, validate_vector
from support import resolve_path

COMPLETE_MODEL_FEEDBACK = (
    "your model accurately describes how the difference in the amount of charge on the rod in scenario B "
    "compared to A affects the observations. Make sure your explanation describes why bigger charge on the rod "
    "in scenario B causes the leaves in scenario B to move further apart."
)

OPPOSITE_CHARGES_FEEDBACK = (
    "Your model shows opposite charges on different parts of the electroscope. Make sure your model explains how "
    "the charges to cause the difference in observations of the leaves' motion in scenarios A and B. Provide a "
    "brief written explanation of your proposed model. Make sure your explanation includes how the charges affect "
    "electroscope leaves in both scenarios to cause the difference in observations."
)


def make_vector(rubric, ones) -> CategoryVector:
    scores = {category.id: int(category.id in ones) for category in rubric.categories}
    return validate_vector(rubric, CategoryVector(scores=scores))


@pytest.fixture(scope="session")
def rubric():
    return load_rubric(resolve_path(settings.RUBRIC_PATH))


@pytest.fixture(scope="session")
def pack(rubric):
    return validate_pack(load_pack(resolve_path(settings.FEEDBACK_PATH)), rubric)


@pytest.fixture
def complete_model(rubric):
    return make_vector(rubric, set(range(1, 11)) | {14})


@pytest.fixture
def partial_model(rubric):
    return make_vector(rubric, {1, 4, 5, 6, 9, 10, 14})


@pytest.fixture
def opposite_charges(rubric):
    return make_vector(rubric, {11})
