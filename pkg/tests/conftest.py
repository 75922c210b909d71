import numpy as np
import pytest

from provgraph.records import ImageRecord
from provgraph.synthgen import procedural_texture


@pytest.fixture(scope="session")
def texture():
    return ImageRecord.from_rgb("t0", procedural_texture(11))


@pytest.fixture(scope="session")
def other_texture():
    return ImageRecord.from_rgb("t1", procedural_texture(12))


def blob_image(size=512, center=(256, 256), radius=8, contrast=0.8):
    yy, xx = np.mgrid[0:size, 0:size]
    d2 = (xx - center[0]) ** 2 + (yy - center[1]) ** 2
    img = np.full((size, size), 0.1)
    img[d2 <= radius * radius] += contrast
    return img


ACCEPTANCE_LINES = []


def record_acceptance(number, ok, detail):
    line = f"acceptance {number}: {'PASS' if ok else 'FAIL'} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
