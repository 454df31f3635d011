import pathlib

import pytest

from sceneloop.captions import CaptureFrame

FIXTURES = pathlib.Path(__file__).parent / "fixtures"


def load_fixture_frame(name: str, captured_at: float = 0.0) -> CaptureFrame:
    data = (FIXTURES / name).read_bytes()
    return CaptureFrame(image_bytes=data, width=320, height=180, captured_at=captured_at)


@pytest.fixture
def night_street_frame():
    return load_fixture_frame("night_street.jpg")


@pytest.fixture
def forest_frame():
    return load_fixture_frame("forest_morning.jpg")


@pytest.fixture
def city_frame():
    return load_fixture_frame("city_day.jpg")
