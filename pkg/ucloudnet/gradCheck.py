# Copyright: (c) 2024, ucloudnet contributors
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

import logging
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from . import functional as F
from .loss import LossConfig, bce, total_loss
from .tensor import Tensor, backward, float64_mode, no_grad, reset_graph

logger = logging.getLogger("ucloudnet.gradcheck")

PRIMITIVES = ["conv2d", "maxpool2d", "upsample", "batchnorm", "relu6", "sigmoid", "concat", "add", "bce"]
COMPOSED = ["encoder_dcb", "ucloudnet"]
TOLERANCE = 1e-4


def _scalar_output(fn:Callable, inputs:Sequence[Tensor], projection:Optional[np.ndarray]) -> Tensor:
    out = fn(*inputs)
    if out.shape == (1, 1, 1, 1):
        return out
    return F.weighted_sum(out, projection)


def crosses_kink(f_minus:float, f_zero:float, f_plus:float, eps:float) -> bool:
    """True if the one-sided differences disagree, i.e. a relu6 or max pooling
    switched inside [x-eps, x+eps]."""
    d_plus, d_minus = (f_plus - f_zero) / eps, (f_zero - f_minus) / eps
    return abs(d_plus - d_minus) > TOLERANCE * max(abs(d_plus), abs(d_minus), 1e-8)


def grad_check(fn:Callable[..., Tensor], inputs:Sequence[Tensor], eps:float=1e-5,
        kinks:Sequence[float]=(), n_checked:Optional[int]=None, skip_kinks:bool=False, seed:int=0) -> float:
    """Worst relative error between analytic and central-difference gradients.

    Non-scalar outputs are reduced with a fixed random projection. Elements closer than
    10*eps to one of `kinks` are skipped. With `skip_kinks` every element whose
    one-sided differences disagree is skipped as well; this only looks at function
    values, so a wrong analytic gradient still fails. With `n_checked` the elements
    are visited in random order until that many have been compared. A non-finite
    value, or nothing left to compare, yields inf.
    """
    rng = np.random.default_rng(seed)
    for t in inputs:
        if t.dtype != np.float64:
            raise ValueError("grad_check needs 64-bit inputs (construct them inside float64_mode())")

    reset_graph()
    for t in inputs:
        t.zero_grad()
    out = fn(*inputs)
    projection = None if out.shape == (1, 1, 1, 1) else rng.standard_normal(out.shape)
    loss = out if projection is None else F.weighted_sum(out, projection)
    backward(loss)
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in inputs]
    reset_graph()

    candidates = []
    for i, t in enumerate(inputs):
        if not t.requires_grad:
            continue
        flat = t.data.reshape(-1)
        for j in range(flat.size):
            if any(abs(flat[j] - k) < 10*eps for k in kinks):
                continue
            candidates.append((i, j))
    if n_checked is not None:
        candidates = [candidates[c] for c in rng.permutation(len(candidates))]

    worst, checked, skipped = 0.0, 0, 0
    with no_grad():
        f_zero = _scalar_output(fn, inputs, projection).item() if skip_kinks else None
        for i, j in candidates:
            if n_checked is not None and checked >= n_checked:
                break
            flat = inputs[i].data.reshape(-1)
            orig = flat[j]
            flat[j] = orig + eps
            f_plus = _scalar_output(fn, inputs, projection).item()
            flat[j] = orig - eps
            f_minus = _scalar_output(fn, inputs, projection).item()
            flat[j] = orig
            a = analytic[i].reshape(-1)[j]
            if not (np.isfinite(f_plus) and np.isfinite(f_minus) and np.isfinite(a)):
                logger.warning(f"non-finite value at input {i} element {j}: analytic={a} f+={f_plus} f-={f_minus}")
                return float("inf")
            if skip_kinks and crosses_kink(f_minus, f_zero, f_plus, eps):
                skipped += 1
                continue
            numeric = (f_plus - f_minus) / (2*eps)
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, rel)
            checked += 1
    if skipped:
        logger.debug(f"skipped {skipped} elements next to a kink")
    if checked == 0:
        logger.warning("no element left to compare")
        return float("inf")
    return worst


# ---- suite ---------------------------------------------------------------

def _t(rng, shape, low=-1.0, high=1.0):
    return Tensor(rng.uniform(low, high, size=shape), requires_grad=True)

def _check_conv2d(rng, seed):
    x, w, b = _t(rng, (2, 3, 8, 8)), _t(rng, (4, 3, 3, 3)), _t(rng, (1, 4, 1, 1))
    return grad_check(lambda x, w, b: F.conv2d(x, w, b, padding=1), [x, w, b], seed=seed)

def _check_maxpool2d(rng, seed):
    # spaced distinct values keep every window away from ties
    vals = rng.permutation(36).astype(np.float64)*0.1 + rng.uniform(0, 0.01, size=36)
    x = Tensor(vals.reshape(1, 1, 6, 6), requires_grad=True)
    return grad_check(F.maxpool2d, [x], seed=seed)

def _check_upsample(rng, seed):
    return grad_check(F.upsample_nearest2x, [_t(rng, (1, 2, 3, 3))], seed=seed)

def _check_batchnorm(rng, seed):
    x, gamma, beta = _t(rng, (2, 3, 4, 4)), _t(rng, (1, 3, 1, 1), 0.5, 1.5), _t(rng, (1, 3, 1, 1))
    rm, rv = Tensor(np.zeros((1, 3, 1, 1))), Tensor(np.ones((1, 3, 1, 1)))
    return grad_check(lambda x, g, b: F.batchnorm2d(x, g, b, rm, rv, training=True), [x, gamma, beta], seed=seed)

def _check_relu6(rng, seed):
    return grad_check(F.relu6, [_t(rng, (1, 2, 4, 4), -2.0, 8.0)], kinks=(0.0, 6.0), seed=seed)

def _check_sigmoid(rng, seed):
    return grad_check(F.sigmoid, [_t(rng, (1, 2, 4, 4), -4.0, 4.0)], seed=seed)

def _check_concat(rng, seed):
    return grad_check(F.concat_channels, [_t(rng, (2, 1, 3, 3)), _t(rng, (2, 2, 3, 3))], seed=seed)

def _check_add(rng, seed):
    return grad_check(F.add, [_t(rng, (2, 2, 3, 3)), _t(rng, (2, 2, 3, 3))], seed=seed)

def _check_bce(rng, seed):
    p = _t(rng, (1, 1, 4, 4), 0.05, 0.95)
    y = Tensor((rng.uniform(size=(1, 1, 4, 4)) > 0.5).astype(np.float64))
    return grad_check(lambda p: bce(p, y), [p], seed=seed)

def _check_encoder_dcb(rng, seed):
    from .model import EncoderDCB
    from .layers import InitSpec, init_parameters
    block = EncoderDCB(3, 4)
    init_parameters(block, InitSpec(), seed)
    x = _t(rng, (2, 3, 8, 8))
    params = [t for _, t in block.named_parameters()]
    return grad_check(lambda x, *_: block.forward(x, training=True), [x] + params, n_checked=40,
        skip_kinks=True, seed=seed)

def _check_ucloudnet(rng, seed):
    from .model import build
    model = build(1, seed)
    x = Tensor(rng.uniform(size=(1, 3, 32, 32)))
    y = Tensor((rng.uniform(size=(1, 1, 32, 32)) > 0.5).astype(np.float64))
    cfg = LossConfig(aux_enabled=True)
    params = [t for _, t in model.named_parameters()]

    def loss_fn(*_):
        main, aux2, aux4 = model.forward(x, training=True)
        return total_loss(main, aux2, aux4, y, cfg)
    return grad_check(loss_fn, params, n_checked=10, skip_kinks=True, seed=seed)

CHECKS = {
    "conv2d": _check_conv2d,
    "maxpool2d": _check_maxpool2d,
    "upsample": _check_upsample,
    "batchnorm": _check_batchnorm,
    "relu6": _check_relu6,
    "sigmoid": _check_sigmoid,
    "concat": _check_concat,
    "add": _check_add,
    "bce": _check_bce,
    "encoder_dcb": _check_encoder_dcb,
    "ucloudnet": _check_ucloudnet,
}


def run_suite(seeds:int=20, model_seeds:int=20, names:Optional[List[str]]=None) -> Dict[str, float]:
    """Worst relative error per check over the given number of seeds, in 64-bit mode."""
    names = names or (PRIMITIVES + COMPOSED)
    results = {}
    with float64_mode():
        for name in names:
            n_seeds = model_seeds if name in COMPOSED else seeds
            worst = 0.0
            for seed in range(n_seeds):
                rng = np.random.default_rng(seed)
                worst = max(worst, CHECKS[name](rng, seed))
            results[name] = worst
            logger.info(f"{name}: {worst:.3e}")
    reset_graph()
    return results


def tolerance_for(name:str) -> float:
    return TOLERANCE


def failed_checks(results:Dict[str, float]) -> List[str]:
    return [name for name, err in results.items() if not err < tolerance_for(name)]
