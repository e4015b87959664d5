# Copyright: (c) 2024, ucloudnet contributors
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

import io
import logging
import os
import threading
from pathlib import Path
from time import time_ns
from typing import Optional, Tuple

import imageio.v3 as iio
import numpy as np
from PIL import Image
from zstandard import ZstdCompressor, ZstdDecompressor

from .analytics import Analytics
from .errors import ConfigError, DatasetError
from .objects.datasetEntry import DatasetEntry
from .objects.sample import Sample
from .tensor import Tensor

logger = logging.getLogger("ucloudnet.data")

MASK_THRESHOLD = 0.5


def check_target_size(target_size:Tuple[int, int]):
    h, w = target_size
    if h <= 0 or w <= 0 or h % 16 or w % 16:
        raise ConfigError(f"target size {h}x{w} must be positive and divisible by 16")


def read_image(path:Path) -> np.ndarray:
    """RGB uint8 array (H,W,3)."""
    try:
        img = iio.imread(path)
    except Exception as e:
        logger.error(f"decode failed: {path}: {e}")
        raise DatasetError(f"Could not decode image {path}: {e}") from e
    if img.ndim == 2:
        img = np.stack([img]*3, axis=-1)
    elif img.ndim == 3 and img.shape[2] == 4:
        img = img[:, :, :3]
    elif img.ndim != 3 or img.shape[2] != 3:
        raise DatasetError(f"Unsupported image layout {img.shape} in {path}")
    return img.astype(np.uint8, copy=False)


def read_mask(path:Path) -> np.ndarray:
    """Grayscale uint8 array (H,W)."""
    try:
        m = iio.imread(path)
    except Exception as e:
        logger.error(f"decode failed: {path}: {e}")
        raise DatasetError(f"Could not decode mask {path}: {e}") from e
    if m.ndim == 3:
        m = np.asarray(Image.fromarray(m[:, :, :3].astype(np.uint8)).convert("L"))
    if m.dtype != np.uint8:
        # 16-bit or boolean masks
        m = (m.astype(np.float64) / max(float(m.max()), 1.0) * 255).round().astype(np.uint8)
    return m


def resize_image(img:np.ndarray, size:Tuple[int, int]) -> np.ndarray:
    """Bilinear resize of an RGB uint8 image to (H,W), returned as float32 in [0,1], shape (3,H,W)."""
    h, w = size
    resized = np.asarray(Image.fromarray(img).resize((w, h), Image.BILINEAR), dtype=np.float32)
    return resized.transpose(2, 0, 1) / 255.0


def resize_mask(mask:np.ndarray, size:Tuple[int, int]) -> np.ndarray:
    """Nearest resize then binarization at 0.5, shape (1,H,W) in {0,1}."""
    h, w = size
    resized = np.asarray(Image.fromarray(mask).resize((w, h), Image.NEAREST), dtype=np.float32) / 255.0
    return (resized >= MASK_THRESHOLD).astype(np.float32)[None]


def resize_prob_map(prob:np.ndarray, size:Tuple[int, int]) -> np.ndarray:
    """Nearest resize of a (H,W) float map back to an (h,w) source resolution."""
    h, w = size
    return np.asarray(Image.fromarray(prob.astype(np.float32), mode="F").resize((w, h), Image.NEAREST))


def load_sample(entry:DatasetEntry, target_size:Tuple[int, int]=(320, 320)) -> Sample:
    check_target_size(target_size)
    image = resize_image(read_image(entry.image_path), target_size)
    mask = resize_mask(read_mask(entry.mask_path), target_size)
    return Sample(Tensor(image[None]), Tensor(mask[None]), entry.id)


class InputImages():
    """Decoded, resized samples with a zstd-compressed on-disk cache."""

    def __init__(self, analytics:Optional[Analytics], cache_dir:Optional[Path], target_size:Tuple[int, int],
            ignore_cache:bool=False):
        check_target_size(target_size)
        self.analytics = analytics
        self.target_size = target_size
        self.ignore_cache = ignore_cache

        self.cache_dir = None
        if cache_dir is not None:
            self.cache_dir = Path(cache_dir) / "samples" / f"{target_size[0]}x{target_size[1]}"
            os.makedirs(self.cache_dir, exist_ok=True)

        # zstd contexts must not be shared by prefetch threads
        self.__codecs = threading.local()


    def __codec(self) -> Tuple[ZstdCompressor, ZstdDecompressor]:
        c = self.__codecs
        if not hasattr(c, "compressor"):
            c.compressor = ZstdCompressor(threads=-1)
            c.decompressor = ZstdDecompressor()
        return c.compressor, c.decompressor


    def __compress_and_store(self, sample:Sample, path:Path):
        buf = io.BytesIO()
        np.savez(buf, image=sample.image.data.astype(np.float32), mask=sample.mask.data.astype(np.uint8))
        with open(path, mode="wb") as f:
            compressor, _ = self.__codec()
            f.write(compressor.compress(buf.getvalue()))


    def __load_and_decompress(self, path:Path, id:str) -> Sample:
        with open(path, mode="rb") as f:
            _, decompressor = self.__codec()
            raw = decompressor.decompress(f.read())
        with np.load(io.BytesIO(raw)) as z:
            image, mask = z["image"], z["mask"].astype(np.float32)
        return Sample(Tensor(image), Tensor(mask), id)


    def fetchSample(self, entry:DatasetEntry) -> Sample:
        t = time_ns()
        path = self.cache_dir / (entry.id + ".npz.zst") if self.cache_dir is not None else None

        hit = False
        if path is not None and os.path.exists(path) and not self.ignore_cache:
            try:
                sample = self.__load_and_decompress(path, entry.id)
                hit = True
            except Exception as e:
                logger.warning(f"Dropping unreadable cache file {path}: {e}")
                os.remove(path)
        if not hit:
            sample = load_sample(entry, self.target_size)
            if path is not None:
                logger.debug(f"cache miss: {entry.id}")
                self.__compress_and_store(sample, path)

        if self.analytics:
            # called from prefetch workers
            with self.analytics.lock:
                if hit:
                    self.analytics.numImageCacheHits += 1
                else:
                    self.analytics.numImageCacheMisses += 1
                self.analytics.numSamplesLoaded += 1
                self.analytics.avgSampleLoadTime.add_value((time_ns() - t) / 1e6)
        return sample
