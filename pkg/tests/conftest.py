import os
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

ROOT = Path(__file__).resolve().parents[1]


def mnist_dir():
    d = Path(os.environ.get("SFATTI_DATA_DIR", ROOT / "data" / "mnist"))
    return d if (d / "t10k-images-idx3-ubyte").exists() or (d / "t10k-images-idx3-ubyte.gz").exists() else None


@pytest.fixture(scope="session")
def mnist_path():
    d = mnist_dir()
    if d is None:
        pytest.skip("MNIST not available; set SFATTI_DATA_DIR")
    return d


@pytest.fixture(scope="session")
def mnist_test(mnist_path):
    from sfatti.dataset import load_mnist
    return load_mnist(mnist_path, "test")


@pytest.fixture(scope="session")
def mnist_train(mnist_path):
    from sfatti.dataset import load_mnist
    return load_mnist(mnist_path, "train")


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES
    if LINES:
        terminalreporter.section("acceptance")
        for line in LINES:
            terminalreporter.write_line(line)
