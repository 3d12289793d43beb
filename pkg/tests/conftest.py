import os
from pathlib import Path

import numpy as np
import pytest

REPO = Path(__file__).resolve().parent.parent
BUNDLED_DATA = REPO / "data"


def mnist_root() -> Path | None:
    """Data root holding an ``mnist`` directory: SNNLAB_DATA_DIR first, then the bundled subset."""
    env = os.environ.get("SNNLAB_DATA_DIR")
    for root in ([Path(env)] if env else []) + [BUNDLED_DATA]:
        if (root / "mnist").is_dir() or (root / "train-images-idx3-ubyte.gz").exists():
            return root
    return None


@pytest.fixture
def gen():
    return np.random.default_rng(12345)


@pytest.fixture
def mnist_dir():
    root = mnist_root()
    if root is None:
        pytest.skip("no MNIST files; run scripts/fetch_mnist_subset.py or set SNNLAB_DATA_DIR")
    return root
