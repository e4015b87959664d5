# Copyright: (c) 2024, ucloudnet contributors
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from .errors import ShapeError
from .functional import add, scale
from .tensor import Tensor, record


@dataclass(frozen=True)
class LossConfig:
    aux_enabled: bool = True
    # main, 1/2 resolution, 1/4 resolution
    weights: Tuple[float, float, float] = (1.0, 0.4, 0.2)
    clamp_eps: float = 1e-7


def bce(p:Tensor, y:Tensor, clamp_eps:float=1e-7) -> Tensor:
    """Mean binary cross-entropy over every element of the batch.

    Predictions are clamped to [clamp_eps, 1-clamp_eps]; clamped elements get no gradient.
    """
    if p.shape != y.shape:
        raise ShapeError(f"bce: prediction {p.shape} and target {y.shape} differ")
    n = p.numel
    lo, hi = clamp_eps, 1.0 - clamp_eps
    pc = np.clip(p.data, lo, hi)
    yd = y.data.astype(p.dtype, copy=False)
    value = -(yd*np.log(pc) + (1 - yd)*np.log(1 - pc)).sum() / n
    out = np.asarray(value, dtype=p.dtype).reshape(1, 1, 1, 1)
    inside = (p.data >= lo) & (p.data <= hi)

    def _backward(g):
        dp = g.reshape(()) * (-(yd/pc) + (1 - yd)/(1 - pc)) / n
        return dp*inside, None
    return record("bce", (p, y), out, _backward)


def downsample_target(y:Tensor, factor:int) -> Tensor:
    """Nearest-neighbour subsampling, keeping the top-left pixel of every cell."""
    if factor not in (2, 4):
        raise ValueError(f"downsample factor must be 2 or 4, got {factor}")
    _, _, h, w = y.shape
    if h % factor or w % factor:
        raise ShapeError(f"Target size {h}x{w} is not divisible by {factor}")
    return Tensor(y.data[:, :, ::factor, ::factor], dtype=y.dtype)


def loss_terms(main:Tensor, aux2:Optional[Tensor], aux4:Optional[Tensor], y:Tensor,
        cfg:LossConfig) -> Dict[str, Optional[Tensor]]:
    """Branch losses and their weighted total.

    With the auxiliary branches disabled the total is the main loss tensor itself.
    """
    main_loss = bce(main, y, cfg.clamp_eps)
    if not cfg.aux_enabled:
        return {"main": main_loss, "aux2": None, "aux4": None, "total": main_loss}

    if aux2 is None or aux4 is None:
        raise ValueError("auxiliary losses are enabled but the model returned no auxiliary outputs")
    y2 = downsample_target(y, 2)
    y4 = downsample_target(y, 4)
    if aux2.shape != y2.shape or aux4.shape != y4.shape:
        raise ShapeError(f"auxiliary outputs {aux2.shape}/{aux4.shape} do not match targets {y2.shape}/{y4.shape}")
    aux2_loss = bce(aux2, y2, cfg.clamp_eps)
    aux4_loss = bce(aux4, y4, cfg.clamp_eps)

    w_main, w_half, w_quarter = cfg.weights
    total = main_loss if w_main == 1.0 else scale(main_loss, w_main)
    total = add(total, scale(aux2_loss, w_half))
    total = add(total, scale(aux4_loss, w_quarter))
    return {"main": main_loss, "aux2": aux2_loss, "aux4": aux4_loss, "total": total}


def total_loss(main:Tensor, aux2:Optional[Tensor], aux4:Optional[Tensor], y:Tensor, cfg:LossConfig) -> Tensor:
    return loss_terms(main, aux2, aux4, y, cfg)["total"]
