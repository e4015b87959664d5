# Copyright: (c) 2024, ucloudnet contributors
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

import struct

import numpy as np
import pytest

from ucloudnet.checkpoint import FORMAT_VERSION, MAGIC, load_checkpoint, read_manifest, save_checkpoint
from ucloudnet.dataset import Dataset
from ucloudnet.errors import CheckpointError
from ucloudnet.model import build
from ucloudnet.optimizer import AdamState
from ucloudnet.runConfig import RunConfig
from ucloudnet.synthetic import synth_dataset
from ucloudnet.tensor import Tensor, default_dtype, float64_mode, no_grad
from ucloudnet.training import fit


@pytest.fixture
def trained(tmp_path):
    cfg = RunConfig(k=1, epochs=1, batch_size=4, target_size=(32, 32), synthetic=8, aux_enabled=True)
    dataset = Dataset(samples=synth_dataset(8, (32, 32), seed=3))
    ckpt, _ = fit(cfg, dataset)
    path = save_checkpoint(ckpt.model, ckpt.state, cfg, tmp_path / "model.ckpt", ckpt.epoch, ckpt.iteration)
    return ckpt, path


def random_images():
    return Tensor(np.random.default_rng(0).uniform(size=(2, 3, 32, 32)))


def test_round_trip_forward_is_bitwise_equal(trained):
    ckpt, path = trained
    loaded = load_checkpoint(path)
    with no_grad():
        before = ckpt.model.forward(random_images(), training=False)
        after = loaded.model.forward(random_images(), training=False)
    for a, b in zip(before, after):
        np.testing.assert_array_equal(a.data, b.data)


def test_round_trip_restores_everything(trained):
    ckpt, path = trained
    loaded = load_checkpoint(path)
    assert loaded.config == ckpt.config
    assert (loaded.epoch, loaded.iteration, loaded.state.t) == (1, 2, 2)
    for (na, ta), (nb, tb) in zip(ckpt.model.named_state(), loaded.model.named_state()):
        assert na == nb
        np.testing.assert_array_equal(ta.data, tb.data)
    for name in ckpt.state.names():
        np.testing.assert_array_equal(ckpt.state.m[name], loaded.state.m[name])
        np.testing.assert_array_equal(ckpt.state.v[name], loaded.state.v[name])


def test_manifest_lists_tensors_in_model_order(trained):
    ckpt, path = trained
    manifest, payload = read_manifest(path)
    assert manifest["format_version"] == FORMAT_VERSION
    names = [t["name"] for t in manifest["tensors"]]
    assert names[0] == "param/encoder.0.conv1.conv.weight"
    assert names.index("buffer/encoder.0.conv1.bn.running_mean") > names.index("param/head.aux4.conv.bias")
    assert all(t["dtype"] == "<f4" for t in manifest["tensors"])
    assert len(payload) == sum(t["nbytes"] for t in manifest["tensors"])


def test_load_into_mismatched_k_names_first_tensor(trained):
    _, path = trained
    with pytest.raises(CheckpointError, match=r"encoder\.0\.conv1\.conv\.weight"):
        load_checkpoint(path, model=build(2, 0))


def test_truncated_file_is_rejected(trained, tmp_path):
    _, path = trained
    cut = tmp_path / "cut.ckpt"
    cut.write_bytes(path.read_bytes()[:-10])
    with pytest.raises(CheckpointError, match="truncated"):
        load_checkpoint(cut)


def test_wrong_version_is_rejected(trained, tmp_path):
    _, path = trained
    blob = bytearray(path.read_bytes())
    blob[len(MAGIC):len(MAGIC) + 4] = struct.pack("<I", FORMAT_VERSION + 1)
    other = tmp_path / "v2.ckpt"
    other.write_bytes(bytes(blob))
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(other)


def test_foreign_file_is_rejected(tmp_path):
    path = tmp_path / "notes.ckpt"
    path.write_bytes(b"hello world, this is not a checkpoint at all")
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_missing_file_is_rejected(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "absent.ckpt")


def test_float64_checkpoint_loads_as_float64(tmp_path):
    cfg = RunConfig(k=1, dtype="float64", target_size=(32, 32))
    with float64_mode():
        model = build(1, 0)
    path = save_checkpoint(model, AdamState(list(model.named_parameters())), cfg, tmp_path / "f64.ckpt")
    loaded = load_checkpoint(path)
    assert all(t.dtype == np.float64 for _, t in loaded.model.named_state())
    for (_, a), (_, b) in zip(model.named_state(), loaded.model.named_state()):
        np.testing.assert_array_equal(a.data, b.data)


def test_float32_checkpoint_ignores_global_dtype(trained):
    _, path = trained
    with float64_mode():
        loaded = load_checkpoint(path)
        assert default_dtype() == np.float64
    assert all(t.dtype == np.float32 for _, t in loaded.model.named_state())
    assert default_dtype() == np.float32


def test_save_replaces_existing_file(trained):
    ckpt, path = trained
    save_checkpoint(ckpt.model, ckpt.state, ckpt.config, path, 5, 10)
    assert load_checkpoint(path).epoch == 5
    assert not path.with_name(path.name + ".tmp").exists()
