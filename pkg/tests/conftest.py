import numpy as np
import pytest

from ripplestego import crypto_layer as cl
from ripplestego import embedder as E

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def key64():
    return E.StegoKey(cl.keygen(64, 11))


@pytest.fixture(scope="session")
def key512():
    return E.StegoKey(cl.keygen(512, 3))


@pytest.fixture(scope="session")
def natural():
    """A 128x128 natural crop (falls back to a smooth synthetic image)."""
    try:
        import skimage.data

        return skimage.data.camera()[200:328, 200:328].copy()
    except ImportError:  # pragma: no cover
        y, x = np.mgrid[0:128, 0:128]
        return (128 + 60 * np.sin(x / 9.0) * np.cos(y / 13.0)).astype(np.uint8)
