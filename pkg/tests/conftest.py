# Copyright: (c) 2024, ucloudnet contributors
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

import numpy as np
import pytest
from PIL import Image

from ucloudnet.synthetic import synth_dataset
from ucloudnet.tensor import reset_graph, set_default_dtype


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run long experiments")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running experiment, needs --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def fresh_graph():
    reset_graph()
    yield
    reset_graph()
    set_default_dtype("float32")


@pytest.fixture
def synthetic8():
    return synth_dataset(8, (64, 64), seed=1)


def write_png(path, array):
    Image.fromarray(array).save(path)


@pytest.fixture
def dataset_dir(tmp_path):
    """Tiny SWINySEG-style folder: 6 day and 4 night images of 30x30 with masks."""
    rng = np.random.default_rng(0)
    images, masks = tmp_path / "images", tmp_path / "GTmaps"
    images.mkdir()
    masks.mkdir()
    for prefix, count in (("d", 6), ("n", 4)):
        for i in range(count):
            name = f"{prefix}{i:03d}"
            img = rng.integers(0, 256, size=(30, 30, 3), dtype=np.uint8)
            mask = np.zeros((30, 30), dtype=np.uint8)
            mask[:, :15] = 255
            write_png(images / f"{name}.png", img)
            write_png(masks / f"{name}_GT.png", mask)
    return tmp_path
