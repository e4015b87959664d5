# Copyright: (c) 2024, ucloudnet contributors
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

from typing import List, Tuple

import numpy as np

from .errors import ConfigError
from .inputImages import check_target_size
from .objects.sample import Sample
from .tensor import Tensor

SKY_TOP = np.array([0.08, 0.22, 0.65])
SKY_HORIZON = np.array([0.25, 0.45, 0.85])
CLOUD_COLOR = np.array([0.97, 0.97, 0.98])
MAX_BLOBS = 3
NOISE = 0.01
# rim steepness; the blend goes from 0.9 to 0.1 over about 0.15 in squared radius
RIM = 30.0
# fraction of cloud pixels kept between these bounds
CLOUD_FRACTION = (0.2, 0.8)


def _cloud_field(rng:np.random.Generator, h:int, w:int) -> np.ndarray:
    """Union of randomly rotated soft ellipses, values in [0,1]."""
    yy, xx = np.mgrid[0:h, 0:w]
    yy = (yy + 0.5) / h
    xx = (xx + 0.5) / w
    field = np.zeros((h, w))
    for _ in range(rng.integers(1, MAX_BLOBS + 1)):
        cy, cx = rng.uniform(0.1, 0.9, size=2)
        ry, rx = rng.uniform(0.18, 0.4, size=2)
        theta = rng.uniform(0, np.pi)
        dy, dx = yy - cy, xx - cx
        u = (dx*np.cos(theta) + dy*np.sin(theta)) / rx
        v = (-dx*np.sin(theta) + dy*np.cos(theta)) / ry
        d = u**2 + v**2
        # ~1 inside, ~0 outside, soft rim around d == 1
        blob = 1.0 / (1.0 + np.exp(np.clip(RIM*(d - 1.0), -50, 50)))
        field = np.maximum(field, blob)
    return field


def synth_sample(rng:np.random.Generator, size:Tuple[int, int], id:str) -> Sample:
    h, w = size
    while True:
        cloud = _cloud_field(rng, h, w)
        mask = cloud >= 0.5
        # both classes must be present in a usable ratio
        if CLOUD_FRACTION[0] <= mask.mean() <= CLOUD_FRACTION[1]:
            break

    t = ((np.arange(h) + 0.5) / h)[:, None, None]
    sky = SKY_TOP*(1 - t) + SKY_HORIZON*t                 # (h,1,3)
    img = sky*(1 - cloud[..., None]) + CLOUD_COLOR*cloud[..., None]
    img = img + rng.normal(0.0, NOISE, size=img.shape)
    img = np.clip(img, 0.0, 1.0).transpose(2, 0, 1)

    return Sample(Tensor(img[None]), Tensor(mask.astype(np.float64)[None, None]), id)


def synth_dataset(n:int, size:Tuple[int, int]=(64, 64), seed:int=0) -> List[Sample]:
    """Deterministic cloud images: near-white ellipses with a steep rim blended over a
    dark blue vertical sky gradient."""
    if n < 1:
        raise ConfigError(f"synthetic dataset size must be >= 1, got {n}")
    check_target_size(size)
    rng = np.random.default_rng(seed)
    return [synth_sample(rng, size, f"synth_{i:05d}") for i in range(n)]
