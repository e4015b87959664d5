# Copyright: (c) 2024, ucloudnet contributors
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

from . import functional as F
from .errors import ShapeError
from .layers import BasicConv2d, Conv2d, InitSpec, Layer, init_parameters
from .tensor import Tensor

STAGES = 4
DIVISOR = 2**STAGES
IN_CHANNELS = 3


@dataclass(frozen=True)
class ChannelPlan:
    k: int
    encoder_dcb: Tuple[int, ...] = field(init=False)
    decoder_dcb: Tuple[int, ...] = field(init=False)
    dsb: Tuple[int, ...] = field(init=False)
    upb: Tuple[int, ...] = field(init=False)

    def __post_init__(self):
        if not isinstance(self.k, int) or self.k < 1:
            raise ValueError(f"k must be a positive integer, got {self.k}")
        k, s = self.k, range(STAGES)
        object.__setattr__(self, "encoder_dcb", tuple(k * 2**i for i in s))
        object.__setattr__(self, "decoder_dcb", tuple(k * 2**(3 - i) for i in s))
        object.__setattr__(self, "dsb", tuple(k * 2**(i + 1) for i in s))
        object.__setattr__(self, "upb", tuple(k * 2**(4 - i) for i in s))

    def is_continuous(self) -> bool:
        down = all(self.dsb[i] == self.encoder_dcb[i + 1] for i in range(STAGES - 1))
        up = all(self.upb[i + 1] == self.decoder_dcb[i] for i in range(STAGES - 1))
        return down and up


class EncoderDCB(Layer):
    """Two BasicConv2d with a residual shortcut (1x1 projection when channels change)."""

    def __init__(self, cin:int, cout:int):
        self.cin = cin
        self.cout = cout
        self.conv1 = BasicConv2d(cin, cout)
        self.conv2 = BasicConv2d(cout, cout)
        self.shortcut = Conv2d(cin, cout, 1) if cin != cout else None

    def children(self):
        res = [("conv1", self.conv1), ("conv2", self.conv2)]
        if self.shortcut is not None:
            res.append(("shortcut", self.shortcut))
        return res

    def forward(self, x, training=False, residual:bool=True):
        return encoder_dcb_forward(self, x, training, residual)


def encoder_dcb_forward(block:EncoderDCB, x:Tensor, training:bool, residual:bool=True) -> Tensor:
    if x.shape[1] != block.cin:
        raise ShapeError(f"EncoderDCB expects {block.cin} input channels, got {x.shape[1]}")
    out = block.conv2.forward(block.conv1.forward(x, training), training)
    if not residual:
        return out
    skip = x if block.shortcut is None else block.shortcut.forward(x)
    return F.add(out, skip)


class DecoderDCB(Layer):
    def __init__(self, cin:int, cout:int):
        self.cin = cin
        self.cout = cout
        self.conv1 = BasicConv2d(cin, cout)
        self.conv2 = BasicConv2d(cout, cout)

    def children(self):
        return [("conv1", self.conv1), ("conv2", self.conv2)]

    def forward(self, x, training=False):
        return self.conv2.forward(self.conv1.forward(x, training), training)


class DownSampleBlock(Layer):
    """Max pooling, then BasicConv2d."""

    def __init__(self, cin:int, cout:int):
        self.conv = BasicConv2d(cin, cout)

    def children(self):
        return [("conv", self.conv)]

    def forward(self, x, training=False):
        return self.conv.forward(F.maxpool2d(x), training)


class UpSampleBlock(Layer):
    """Nearest 2x upsampling, then BasicConv2d."""

    def __init__(self, cin:int, cout:int):
        self.conv = BasicConv2d(cin, cout)

    def children(self):
        return [("conv", self.conv)]

    def forward(self, x, training=False):
        return self.conv.forward(F.upsample_nearest2x(x), training)


class Head(Layer):
    def __init__(self, cin:int):
        self.conv = Conv2d(cin, 1, 1)

    def children(self):
        return [("conv", self.conv)]

    def forward(self, x, training=False):
        return F.sigmoid(self.conv.forward(x))


class UCloudNet(Layer):
    def __init__(self, k:int):
        self.plan = plan = ChannelPlan(k)
        self.k = k

        enc_in = [IN_CHANNELS] + [plan.dsb[s - 1] for s in range(1, STAGES)]
        self.encoder = [EncoderDCB(enc_in[s], plan.encoder_dcb[s]) for s in range(STAGES)]
        self.down = [DownSampleBlock(plan.encoder_dcb[s], plan.dsb[s]) for s in range(STAGES)]
        up_in = [plan.dsb[-1]] + [plan.decoder_dcb[s - 1] for s in range(1, STAGES)]
        self.up = [UpSampleBlock(up_in[s], plan.upb[s]) for s in range(STAGES)]
        # decoder stage s concatenates UPB s with encoder stage 3-s
        self.decoder = [DecoderDCB(plan.upb[s] + plan.encoder_dcb[STAGES - 1 - s], plan.decoder_dcb[s])
            for s in range(STAGES)]
        self.head_main = Head(plan.decoder_dcb[3])
        self.head_aux2 = Head(plan.decoder_dcb[2])
        self.head_aux4 = Head(plan.decoder_dcb[1])

    def children(self):
        res = []
        res += [(f"encoder.{s}", b) for s, b in enumerate(self.encoder)]
        res += [(f"down.{s}", b) for s, b in enumerate(self.down)]
        res += [(f"up.{s}", b) for s, b in enumerate(self.up)]
        res += [(f"decoder.{s}", b) for s, b in enumerate(self.decoder)]
        res += [("head.main", self.head_main), ("head.aux2", self.head_aux2), ("head.aux4", self.head_aux4)]
        return res

    def forward(self, x:Tensor, training:bool=False, aux:bool=True) -> Tuple[Tensor, Optional[Tensor], Optional[Tensor]]:
        return forward(self, x, training, aux)


def forward(model:UCloudNet, x:Tensor, training:bool=False, aux:bool=True):
    """Returns (main, aux2, aux4); the auxiliary outputs are None when `aux` is False."""
    n, c, h, w = x.shape
    if c != IN_CHANNELS:
        raise ShapeError(f"UCloudNet expects {IN_CHANNELS} input channels, got {c}")
    if h % DIVISOR or w % DIVISOR:
        raise ShapeError(f"Input size {h}x{w} must be divisible by {DIVISOR}")

    skips = []
    e = x
    for s in range(STAGES):
        inp = e if s == 0 else model.down[s - 1].forward(e, training)
        e = model.encoder[s].forward(inp, training)
        skips.append(e)
    d = model.down[STAGES - 1].forward(e, training)

    decoded = []
    for s in range(STAGES):
        up = model.up[s].forward(d, training)
        d = model.decoder[s].forward(F.concat_channels(up, skips[STAGES - 1 - s]), training)
        decoded.append(d)

    main = model.head_main.forward(decoded[3], training)
    if not aux:
        return main, None, None
    aux2 = model.head_aux2.forward(decoded[2], training)
    aux4 = model.head_aux4.forward(decoded[1], training)
    return main, aux2, aux4


def build(k:int, seed:int, spec:InitSpec=InitSpec()) -> UCloudNet:
    if not isinstance(k, int) or k < 1:
        raise ValueError(f"k must be a positive integer, got {k}")
    model = UCloudNet(k)
    init_parameters(model, spec, seed)
    return model
