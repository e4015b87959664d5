# Copyright: (c) 2024, ucloudnet contributors
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

import threading
from multiprocessing.pool import ThreadPool

import numpy as np
import pytest
from PIL import Image

from ucloudnet.analytics import Analytics
from ucloudnet.dataset import Dataset, batches, load_manifest, num_batches, split, write_split
from ucloudnet.errors import ConfigError, DatasetError
from ucloudnet.inputImages import InputImages, load_sample
from ucloudnet.synthetic import synth_dataset


# ---- manifest ------------------------------------------------------------

def test_manifest_pairs_every_image(dataset_dir):
    manifest = load_manifest(dataset_dir)
    assert len(manifest) == 10
    assert manifest.ids() == sorted(manifest.ids())
    assert all(e.mask_path.name == e.id + "_GT.png" for e in manifest.entries)


def test_manifest_subsets_by_prefix(dataset_dir):
    assert len(load_manifest(dataset_dir, "day")) == 6
    night = load_manifest(dataset_dir, "night")
    assert len(night) == 4
    assert all(i.startswith("n") for i in night.ids())


def test_manifest_override_list(dataset_dir, tmp_path):
    override = tmp_path / "override.tsv"
    override.write_text("# moved\nd000\tnight\n", encoding="utf-8")
    assert len(load_manifest(dataset_dir, "night", override_list=override)) == 5


def test_manifest_names_orphan_image(dataset_dir):
    Image.fromarray(np.zeros((30, 30, 3), dtype=np.uint8)).save(dataset_dir / "images" / "d999.png")
    with pytest.raises(DatasetError, match="d999"):
        load_manifest(dataset_dir)


def test_manifest_needs_day_or_night_for_every_image(dataset_dir, tmp_path):
    img = np.zeros((30, 30, 3), dtype=np.uint8)
    Image.fromarray(img).save(dataset_dir / "images" / "x001.png")
    Image.fromarray(img[..., 0]).save(dataset_dir / "GTmaps" / "x001_GT.png")
    with pytest.raises(DatasetError, match="x001.png"):
        load_manifest(dataset_dir)

    override = tmp_path / "override.tsv"
    override.write_text("x001\tnight\n", encoding="utf-8")
    assert "x001" in load_manifest(dataset_dir, "night", override_list=override).ids()


def test_manifest_rejects_empty_result(tmp_path):
    (tmp_path / "images").mkdir()
    (tmp_path / "GTmaps").mkdir()
    with pytest.raises(DatasetError):
        load_manifest(tmp_path)


def test_manifest_rejects_missing_directories(tmp_path):
    with pytest.raises(DatasetError):
        load_manifest(tmp_path)


def test_manifest_rejects_unknown_subset(dataset_dir):
    with pytest.raises(DatasetError):
        load_manifest(dataset_dir, "dusk")


# ---- split & batches -----------------------------------------------------

def test_split_full_database_sizes():
    ids = [f"img{i:05d}" for i in range(6768)]
    train, test = split(ids, 0.8, seed=0)
    assert (len(train), len(test)) == (5414, 1354)


def test_split_is_a_deterministic_partition():
    ids = [f"s{i}" for i in range(10)]
    train, test = split(ids, 0.8, seed=4)
    assert (len(train), len(test)) == (8, 2)
    assert not set(train) & set(test)
    assert set(train) | set(test) == set(ids)
    assert split(list(reversed(ids)), 0.8, seed=4) == (train, test)


@pytest.mark.parametrize("ratio", [0.0, 1.0, 1.5])
def test_split_rejects_bad_ratio(ratio):
    with pytest.raises(ValueError):
        split(["a", "b"], ratio)


def test_split_file_round_trip(tmp_path):
    train, test = split([f"s{i}" for i in range(10)], 0.8, seed=1)
    write_split(train, test, tmp_path / "split.tsv")
    rows = [line.split("\t") for line in (tmp_path / "split.tsv").read_text(encoding="utf-8").splitlines()]
    assert [i for i, part in rows if part == "train"] == train
    assert [i for i, part in rows if part == "test"] == test


def test_iterations_per_epoch():
    assert num_batches(5414, 16) == 339
    ids = [str(i) for i in range(5414)]
    assert sum(1 for _ in batches(ids, 16, seed=0, epoch=0)) == 339


def test_batches_replay_and_cover_every_id():
    ids = [str(i) for i in range(50)]
    first = list(batches(ids, 16, seed=7, epoch=3))
    assert first == list(batches(ids, 16, seed=7, epoch=3))
    assert first != list(batches(ids, 16, seed=7, epoch=4))
    assert sorted(i for b in first for i in b) == sorted(ids)
    assert [len(b) for b in first] == [16, 16, 16, 2]


def test_partial_batch_is_kept():
    assert [len(b) for b in batches(list("abcde"), 16)] == [5]


def test_batches_rejects_zero_batch_size():
    with pytest.raises(ValueError):
        list(batches(["a"], 0))


# ---- samples -------------------------------------------------------------

def test_load_sample_resizes_and_binarizes(dataset_dir):
    entry = load_manifest(dataset_dir).entries[0]
    sample = load_sample(entry, (32, 32))
    assert sample.image.shape == (1, 3, 32, 32)
    assert sample.mask.shape == (1, 1, 32, 32)
    assert 0 <= sample.image.data.min() and sample.image.data.max() <= 1
    assert set(np.unique(sample.mask.data)) == {0.0, 1.0}
    assert 0.4 < sample.mask.data.mean() < 0.6


def test_white_mask_gives_all_ones(dataset_dir):
    entry = load_manifest(dataset_dir).entries[0]
    Image.fromarray(np.full((30, 30), 255, dtype=np.uint8)).save(entry.mask_path)
    np.testing.assert_array_equal(load_sample(entry, (32, 32)).mask.data, 1.0)


def test_load_sample_rejects_indivisible_size(dataset_dir):
    entry = load_manifest(dataset_dir).entries[0]
    with pytest.raises(ConfigError):
        load_sample(entry, (30, 30))


def test_undecodable_image_names_path(dataset_dir):
    entry = load_manifest(dataset_dir).entries[0]
    entry.image_path.write_bytes(b"not an image")
    with pytest.raises(DatasetError, match=entry.image_path.name):
        load_sample(entry, (32, 32))


def test_sample_cache_hit_equals_fresh_load(dataset_dir, tmp_path):
    analytics = Analytics(tmp_path / "analytics")
    images = InputImages(analytics, tmp_path / "cache", (32, 32))
    entry = load_manifest(dataset_dir).entries[3]

    fresh = images.fetchSample(entry)
    cached = images.fetchSample(entry)
    assert analytics.numImageCacheMisses.amount == 1
    assert analytics.numImageCacheHits.amount == 1
    np.testing.assert_array_equal(fresh.image.data, cached.image.data)
    np.testing.assert_array_equal(fresh.mask.data, cached.mask.data)


def test_ignore_cache_reloads(dataset_dir, tmp_path):
    entry = load_manifest(dataset_dir).entries[0]
    InputImages(None, tmp_path / "cache", (32, 32)).fetchSample(entry)
    analytics = Analytics(tmp_path / "analytics")
    InputImages(analytics, tmp_path / "cache", (32, 32), ignore_cache=True).fetchSample(entry)
    assert analytics.numImageCacheHits.amount == 0


def test_prefetch_keeps_batch_order(dataset_dir, tmp_path):
    manifest = load_manifest(dataset_dir)
    serial = Dataset(manifest=manifest, inputImages=InputImages(None, None, (32, 32)))
    threaded = Dataset(manifest=manifest, inputImages=InputImages(None, None, (32, 32)), workers=3)
    order = list(batches(serial.ids, 3, seed=2, epoch=1))

    for (ids_a, xa, ya), (ids_b, xb, yb) in zip(serial.iterate(iter(order)), threaded.iterate(iter(order))):
        assert ids_a == ids_b
        np.testing.assert_array_equal(xa.data, xb.data)
        np.testing.assert_array_equal(ya.data, yb.data)
    assert serial.subset_counts(serial.ids) == {"day": 6, "night": 4}


def test_prefetch_reads_a_bounded_number_of_batches_ahead(dataset_dir):
    dataset = Dataset(manifest=load_manifest(dataset_dir), inputImages=InputImages(None, None, (32, 32)), workers=2)
    pulled = []

    def batch_stream():
        for i in dataset.ids:
            pulled.append(i)
            yield [i]

    stream = dataset.iterate(batch_stream())
    ids, _, _ = next(stream)
    assert ids == [dataset.ids[0]]
    assert len(pulled) == dataset.lookahead + 1 < len(dataset.ids)
    next(stream)
    assert len(pulled) == dataset.lookahead + 2
    assert [b[0] for b, _, _ in stream] == dataset.ids[2:]


def test_concurrent_cache_fills_match_serial_loads(dataset_dir, tmp_path):
    entries = load_manifest(dataset_dir).entries
    images = InputImages(None, tmp_path / "cache", (32, 32))
    with ThreadPool(4) as pool:
        cold = pool.map(images.fetchSample, entries)
        warm = pool.map(images.fetchSample, entries)
    for entry, a, b in zip(entries, cold, warm):
        fresh = load_sample(entry, (32, 32))
        np.testing.assert_array_equal(a.image.data, fresh.image.data)
        np.testing.assert_array_equal(b.image.data, fresh.image.data)
        np.testing.assert_array_equal(b.mask.data, fresh.mask.data)

    # every thread compresses with its own context
    both_running = threading.Barrier(2)

    def codec_of_this_thread(_):
        both_running.wait(timeout=10)
        return images._InputImages__codec()

    with ThreadPool(2) as pool:
        first, second = pool.map(codec_of_this_thread, range(2), chunksize=1)
    assert first[0] is not second[0]
    assert first[1] is not second[1]
    assert images._InputImages__codec()[0] is images._InputImages__codec()[0]


# ---- synthetic -----------------------------------------------------------

def test_synthetic_is_deterministic():
    a, b = synth_dataset(8, (64, 64), seed=1), synth_dataset(8, (64, 64), seed=1)
    for sa, sb in zip(a, b):
        assert sa.id == sb.id
        np.testing.assert_array_equal(sa.image.data, sb.image.data)
        np.testing.assert_array_equal(sa.mask.data, sb.mask.data)


def test_synthetic_masks_have_both_classes(synthetic8):
    for s in synthetic8:
        assert s.image.shape == (1, 3, 64, 64)
        assert 0 <= s.image.data.min() and s.image.data.max() <= 1
        assert set(np.unique(s.mask.data)) == {0.0, 1.0}
        assert 0.2 <= s.mask.data.mean() <= 0.8


def test_synthetic_clouds_are_separable_in_red(synthetic8):
    # the sky gradient is dark blue; clouds are near white with a steep rim
    for s in synthetic8:
        red = s.image.data[0, 0]
        mask = s.mask.data[0, 0] > 0
        assert red[mask].mean() - red[~mask].mean() > 0.5
        assert np.mean((red > 0.55) == mask) > 0.95


def test_synthetic_rejects_empty():
    with pytest.raises(ConfigError):
        synth_dataset(0)
