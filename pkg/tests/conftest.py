import os
import subprocess
import sys
from pathlib import Path

import pytest
from hypothesis import settings

ROOT = Path(__file__).resolve().parents[1]
SUBSET_DIR = ROOT / "data" / "mnist-subset"

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


def mnist_dir() -> Path:
    """$SSVAE_DATA_DIR if set, else the bundled subset (built on first use)."""
    env = os.environ.get("SSVAE_DATA_DIR")
    if env:
        return Path(env)
    if not (SUBSET_DIR / "train-images-idx3-ubyte.gz").exists():
        subprocess.run([sys.executable, str(ROOT / "scripts" / "prepare_mnist_subset.py"), str(SUBSET_DIR)],
                       check=True)
    return SUBSET_DIR


@pytest.fixture(scope="session")
def mnist_path() -> Path:
    try:
        return mnist_dir()
    except (subprocess.CalledProcessError, FileNotFoundError) as exc:
        pytest.skip(f"MNIST data unavailable: {exc}")


@pytest.fixture(scope="session")
def mnist(mnist_path):
    from ssvae.data import load_splits

    return load_splits(mnist_path)


ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_KEY] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def criterion(request):
    """``criterion(n, ok, detail)`` records a PASS/FAIL line and returns ``ok``."""
    lines = request.config.stash[ACCEPTANCE_KEY]

    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        lines.append(line)
        print(line)
        return ok

    return record
