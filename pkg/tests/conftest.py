import sys
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from clickseg.core import BinaryMask, ProbabilityMap, RasterImage

_ACCEPTANCE_RESULTS: list[tuple[str, bool, float]] = []


@pytest.fixture
def criterion():
    """Times an acceptance criterion and records a pass/fail line for the summary."""

    @contextmanager
    def run(name: str, budget_seconds: float | None = None):
        started = time.perf_counter()
        try:
            yield
        except BaseException:
            _ACCEPTANCE_RESULTS.append((name, False, time.perf_counter() - started))
            raise
        elapsed = time.perf_counter() - started
        ok = budget_seconds is None or elapsed <= budget_seconds
        _ACCEPTANCE_RESULTS.append((name, ok, elapsed))
        if not ok:
            pytest.fail(f"{name}: exceeded runtime budget {budget_seconds}s ({elapsed:.2f}s)")

    return run


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for name, ok, elapsed in _ACCEPTANCE_RESULTS:
        status = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"[{status}] {name} ({elapsed:.2f}s)")


# ---------------------------------------------------------------------------
# shared builders


@pytest.fixture
def flat_image():
    def build(width: int, height: int, rgb=(128, 128, 128)) -> RasterImage:
        return RasterImage.full(width, height, rgb)

    return build


@pytest.fixture
def random_image():
    def build(width: int, height: int, seed: int = 0) -> RasterImage:
        rng = np.random.default_rng(seed)
        return RasterImage(rng.integers(0, 256, (height, width, 3), dtype=np.uint8))

    return build


def make_mask(rows: list[str]) -> BinaryMask:
    """ASCII mask helper: '#' is foreground."""
    return BinaryMask(np.array([[ch == "#" for ch in row] for row in rows]))


def make_prob(rows: list[list[float]]) -> ProbabilityMap:
    return ProbabilityMap(np.array(rows, dtype=float))
