import os
import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", max_examples=100, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

PKG_ROOT = Path(__file__).resolve().parents[1]

# accepted file names for the public benchmark datasets
DATASET_NAMES = {
    "csail": ["csail.g2o", "CSAIL.g2o", "mit_csail.g2o"],
    "fr079": ["fr079.g2o", "FR079.g2o", "intel_fr079.g2o", "fr079_corrected.g2o"],
    "m3500": ["m3500.g2o", "M3500.g2o", "manhattanOlson3500.g2o", "manhattan3500.g2o"],
}


def dataset_dirs() -> list[Path]:
    dirs = []
    if os.environ.get("LEANMAP_DATA"):
        dirs.append(Path(os.environ["LEANMAP_DATA"]))
    dirs.append(PKG_ROOT / "data")
    return dirs


def find_dataset(key: str) -> Path | None:
    for d in dataset_dirs():
        for name in DATASET_NAMES[key]:
            if (d / name).is_file():
                return d / name
    return None


@pytest.fixture
def rng():
    import numpy as np

    return np.random.default_rng(12345)


ACCEPTANCE_LINES = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line for an acceptance criterion and assert it."""
    lines = request.config.stash.setdefault(ACCEPTANCE_LINES, [])

    def check(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append((number, line))
        print(line)
        assert ok, line

    return check


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
