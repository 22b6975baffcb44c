import pytest


@pytest.fixture
def context():
    """Контекст для передачи данных между шагами."""
    return {}
