# Copyright: (c) 2024, ucloudnet contributors
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

from typing import Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from .analytics import Analytics
from .dataset import Dataset, num_batches
from .inputImages import resize_image, resize_prob_map
from .metrics import PrHistogram, auc_pr, confusion, scalar_metrics
from .model import UCloudNet, forward
from .objects.confusion import Confusion
from .objects.evalReport import EvalReport
from .tensor import Tensor, no_grad, reset_graph


def _in_order(ids:Sequence[str], batch_size:int):
    for start in range(0, len(ids), batch_size):
        yield list(ids[start:start + batch_size])


def predict_batch(model:UCloudNet, x:Tensor) -> np.ndarray:
    """Main-head probabilities with batch norm in inference mode."""
    dtype = next(model.named_parameters())[1].dtype
    with no_grad():
        main, _, _ = forward(model, Tensor(x.data, dtype=dtype), training=False, aux=False)
    reset_graph()
    return main.data


def evaluate(model:UCloudNet, dataset:Dataset, ids:Sequence[str], threshold:float=0.5, batch_size:int=16,
        with_curve:bool=True, analytics:Optional[Analytics]=None, progress:bool=False) -> EvalReport:
    """Micro-averaged metrics over every pixel of `ids`, plus the 256-threshold curve."""
    total = Confusion()
    hist = PrHistogram()
    stream = dataset.iterate(_in_order(list(ids), batch_size))
    for _, x, y in tqdm(stream, total=num_batches(len(ids), batch_size), desc="eval", disable=not progress):
        pred = predict_batch(model, x)
        total += confusion(pred, y.data, threshold)
        if with_curve:
            hist.add(pred, y.data)

    report = scalar_metrics(total, threshold)
    if with_curve:
        report.pr_curve = hist.curve()
        report.auc = auc_pr(report.pr_curve)
    if analytics:
        analytics.numEvaluatedPixels += total.total
    return report


def predict_image(model:UCloudNet, image:np.ndarray, target_size:Tuple[int, int]) -> np.ndarray:
    """Probability map at the source resolution of an RGB uint8 image.

    The image is resized to the training resolution and the prediction is resized
    back with nearest neighbour.
    """
    h, w = image.shape[:2]
    x = Tensor(resize_image(image, target_size)[None])
    prob = predict_batch(model, x)[0, 0]
    return resize_prob_map(prob, (h, w))


def binarize(prob:np.ndarray, threshold:float=0.5) -> np.ndarray:
    """8-bit mask with 255 where prob >= threshold and 0 elsewhere."""
    return np.where(prob.astype(np.float64) >= threshold, 255, 0).astype(np.uint8)


def to_gray8(prob:np.ndarray) -> np.ndarray:
    return np.clip(np.round(prob.astype(np.float64) * 255), 0, 255).astype(np.uint8)
