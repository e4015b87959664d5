# Copyright: (c) 2024, ucloudnet contributors
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

import logging
import math
from collections import deque
from multiprocessing.pool import ThreadPool
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DatasetError
from .inputImages import InputImages
from .objects.datasetEntry import DatasetEntry, DatasetManifest
from .objects.sample import Sample
from .tensor import Tensor

logger = logging.getLogger("ucloudnet.data")

IMAGE_DIR = "images"
MASK_DIR = "GTmaps"
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")
SUBSETS = ("day", "night", "all")
# SWINySEG names daytime images d*, nighttime images n*
SUBSET_PREFIX = {"d": "day", "n": "night"}


def _read_override_list(path:Path) -> Dict[str, str]:
    res = {}
    with open(path, "r", encoding="utf-8") as f:
        for i, line in enumerate(f):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2 or parts[1] not in ("day", "night"):
                raise DatasetError(f"{path}:{i+1}: expected 'id<TAB>day|night', got {line!r}")
            res[parts[0]] = parts[1]
    return res


def _find_mask(mask_dir:Path, stem:str) -> Optional[Path]:
    for name in (stem + ".png", stem + "_GT.png"):
        p = mask_dir / name
        if p.exists():
            return p
    return None


def load_manifest(root:Path, subset:str="all", override_list:Optional[Path]=None, split_seed:int=0) -> DatasetManifest:
    """Pair every image under images/ with its mask under GTmaps/ and filter by subset."""
    root = Path(root)
    if subset not in SUBSETS:
        raise DatasetError(f"Unknown subset {subset!r}, use one of {SUBSETS}")
    image_dir, mask_dir = root / IMAGE_DIR, root / MASK_DIR
    if not image_dir.is_dir() or not mask_dir.is_dir():
        raise DatasetError(f"{root} must contain {IMAGE_DIR}/ and {MASK_DIR}/ directories")

    overrides = _read_override_list(override_list) if override_list else {}

    entries = []
    for image_path in sorted(image_dir.iterdir(), key=lambda p: p.name):
        if image_path.suffix.lower() not in IMAGE_SUFFIXES:
            continue
        stem = image_path.stem
        mask_path = _find_mask(mask_dir, stem)
        if mask_path is None:
            raise DatasetError(f"No mask in {mask_dir} for image {image_path.name}")
        kind = overrides.get(stem) or SUBSET_PREFIX.get(stem[:1].lower())
        if kind is None:
            raise DatasetError(f"Cannot tell day from night for {image_path.name}: name it d*/n* or list it in "
                "the subset override file")
        if subset != "all" and kind != subset:
            continue
        entries.append(DatasetEntry(stem, image_path, mask_path, kind))

    if not entries:
        raise DatasetError(f"No {subset} samples found under {root}")
    entries.sort(key=lambda e: e.id)
    return DatasetManifest(root, subset, entries, split_seed)


def split(ids:Sequence[str], ratio:float=0.8, seed:int=0) -> Tuple[List[str], List[str]]:
    """Seeded shuffle of the sorted ids; the first floor(ratio*n) go to training."""
    if not 0 < ratio < 1:
        raise ValueError(f"split ratio must lie in (0,1), got {ratio}")
    ordered = sorted(ids)
    perm = np.random.default_rng(seed).permutation(len(ordered))
    n_train = math.floor(ratio * len(ordered))
    train = [ordered[i] for i in perm[:n_train]]
    test = [ordered[i] for i in perm[n_train:]]
    return train, test


def write_split(train:Sequence[str], test:Sequence[str], path:Path):
    with open(path, "w", encoding="utf-8") as f:
        for i in train:
            f.write(f"{i}\ttrain\n")
        for i in test:
            f.write(f"{i}\ttest\n")


def batches(ids:Sequence[str], batch_size:int=16, seed:int=0, epoch:int=0) -> Iterator[List[str]]:
    """Per-epoch shuffle keyed by (seed, epoch); the last partial batch is kept."""
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    perm = np.random.default_rng([seed, epoch]).permutation(len(ids))
    for start in range(0, len(ids), batch_size):
        yield [ids[i] for i in perm[start:start + batch_size]]


def num_batches(n:int, batch_size:int) -> int:
    return math.ceil(n / batch_size)


def stack(samples:Sequence[Sample]) -> Tuple[Tensor, Tensor]:
    x = np.concatenate([s.image.data for s in samples], axis=0)
    y = np.concatenate([s.mask.data for s in samples], axis=0)
    return Tensor(x), Tensor(y)


class Dataset():
    """Samples addressed by id, either held in memory or loaded through InputImages."""

    def __init__(self, samples:Optional[Sequence[Sample]]=None, manifest:Optional[DatasetManifest]=None,
            inputImages:Optional[InputImages]=None, workers:int=0, lookahead:Optional[int]=None):
        if (samples is None) == (manifest is None):
            raise ValueError("Dataset needs either samples or a manifest")
        self.workers = workers
        self.lookahead = max(1, 2*workers) if lookahead is None else max(1, lookahead)
        self.inputImages = inputImages
        if samples is not None:
            self.samples = {s.id: s for s in samples}
            self.entries = None
            self.ids = sorted(self.samples)
        else:
            if inputImages is None:
                raise ValueError("A manifest-backed Dataset needs an InputImages loader")
            self.samples = None
            self.entries = {e.id: e for e in manifest.entries}
            self.ids = manifest.ids()
        if not self.ids:
            raise DatasetError("Dataset is empty")

    def __len__(self):
        return len(self.ids)

    def __getitem__(self, id:str) -> Sample:
        if self.samples is not None:
            return self.samples[id]
        return self.inputImages.fetchSample(self.entries[id])

    def subset_counts(self, ids:Sequence[str]) -> Dict[str, int]:
        counts = {}
        for i in ids:
            kind = self.entries[i].subset if self.entries is not None else "synthetic"
            counts[kind] = counts.get(kind, 0) + 1
        return counts

    def iterate(self, batch_ids:Iterator[List[str]]) -> Iterator[Tuple[List[str], Tensor, Tensor]]:
        """Stacked batches in exactly the order of `batch_ids`, prefetched by worker threads."""
        if self.workers <= 0 or self.samples is not None:
            for ids in batch_ids:
                x, y = stack([self[i] for i in ids])
                yield ids, x, y
            return

        def load(ids):
            return ids, [self[i] for i in ids]

        # batch_ids is only advanced when a batch is handed out, so at most
        # lookahead + 1 batches are loaded or in flight
        pending = deque()
        with ThreadPool(self.workers) as pool:
            for ids in batch_ids:
                pending.append(pool.apply_async(load, (ids,)))
                if len(pending) > self.lookahead:
                    ids, samples = pending.popleft().get()
                    yield (ids, *stack(samples))
            while pending:
                ids, samples = pending.popleft().get()
                yield (ids, *stack(samples))
