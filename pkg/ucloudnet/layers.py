# Copyright: (c) 2024, ucloudnet contributors
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Iterator, List, Tuple

import numpy as np

from . import functional as F
from .errors import ShapeError
from .tensor import Tensor


@dataclass(frozen=True)
class InitSpec:
    """Fan-in scaled uniform weights, zero biases, identity batch-norm."""
    scheme: str = "fan_in_uniform"
    gain: float = 6.0
    bias: float = 0.0
    bn_gamma: float = 1.0
    bn_beta: float = 0.0
    running_mean: float = 0.0
    running_var: float = 1.0

    def bound(self, fan_in:int) -> float:
        if fan_in <= 0:
            raise ValueError(f"fan_in must be positive, got {fan_in}")
        return float(np.sqrt(self.gain / fan_in))


class Layer(ABC):
    """Parameters and sub-layers in a fixed, declared order."""

    def children(self) -> List[Tuple[str, "Layer"]]:
        return []

    def own_parameters(self) -> List[Tuple[str, Tensor]]:
        return []

    def own_buffers(self) -> List[Tuple[str, Tensor]]:
        return []

    def reset_parameters(self, rng:np.random.Generator, spec:InitSpec):
        pass

    def named_parameters(self, prefix:str="") -> Iterator[Tuple[str, Tensor]]:
        for name, t in self.own_parameters():
            yield prefix + name, t
        for name, child in self.children():
            yield from child.named_parameters(f"{prefix}{name}.")

    def named_buffers(self, prefix:str="") -> Iterator[Tuple[str, Tensor]]:
        for name, t in self.own_buffers():
            yield prefix + name, t
        for name, child in self.children():
            yield from child.named_buffers(f"{prefix}{name}.")

    def named_state(self, prefix:str="") -> Iterator[Tuple[str, Tensor]]:
        """Parameters and buffers together, layer by layer."""
        for name, t in self.own_parameters():
            yield prefix + name, t
        for name, t in self.own_buffers():
            yield prefix + name, t
        for name, child in self.children():
            yield from child.named_state(f"{prefix}{name}.")

    def layers(self) -> Iterator["Layer"]:
        yield self
        for _, child in self.children():
            yield from child.layers()

    def zero_grad(self):
        for _, t in self.named_parameters():
            t.zero_grad()

    @abstractmethod
    def forward(self, x:Tensor, training:bool) -> Tensor:
        pass


class Conv2d(Layer):
    def __init__(self, cin:int, cout:int, kernel_size:int):
        if kernel_size not in (1, 3):
            raise ValueError(f"kernel_size must be 1 or 3, got {kernel_size}")
        self.cin = cin
        self.cout = cout
        self.kernel_size = kernel_size
        self.padding = kernel_size // 2
        self.weight = Tensor(np.zeros((cout, cin, kernel_size, kernel_size)), requires_grad=True)
        self.bias = Tensor(np.zeros((1, cout, 1, 1)), requires_grad=True)

    @property
    def fan_in(self) -> int:
        return self.cin * self.kernel_size**2

    def own_parameters(self):
        return [("weight", self.weight), ("bias", self.bias)]

    def reset_parameters(self, rng, spec):
        b = spec.bound(self.fan_in)
        self.weight.data[...] = rng.uniform(-b, b, size=self.weight.shape)
        self.bias.data[...] = spec.bias

    def forward(self, x, training=False):
        return F.conv2d(x, self.weight, self.bias, stride=1, padding=self.padding)


class BatchNorm2d(Layer):
    def __init__(self, channels:int, momentum:float=0.1, eps:float=1e-5):
        self.channels = channels
        self.momentum = momentum
        self.eps = eps
        self.gamma = Tensor(np.ones((1, channels, 1, 1)), requires_grad=True)
        self.beta = Tensor(np.zeros((1, channels, 1, 1)), requires_grad=True)
        self.running_mean = Tensor(np.zeros((1, channels, 1, 1)))
        self.running_var = Tensor(np.ones((1, channels, 1, 1)))

    def own_parameters(self):
        return [("gamma", self.gamma), ("beta", self.beta)]

    def own_buffers(self):
        return [("running_mean", self.running_mean), ("running_var", self.running_var)]

    def reset_parameters(self, rng, spec):
        self.gamma.data[...] = spec.bn_gamma
        self.beta.data[...] = spec.bn_beta
        self.running_mean.data[...] = spec.running_mean
        self.running_var.data[...] = spec.running_var

    def forward(self, x, training=False):
        return F.batchnorm2d(x, self.gamma, self.beta, self.running_mean, self.running_var,
            training, self.momentum, self.eps)


class BasicConv2d(Layer):
    """conv -> ReLU6 -> batch norm."""

    def __init__(self, cin:int, cout:int, kernel_size:int=3):
        self.cin = cin
        self.cout = cout
        self.conv = Conv2d(cin, cout, kernel_size)
        self.bn = BatchNorm2d(cout)

    def children(self):
        return [("conv", self.conv), ("bn", self.bn)]

    def forward(self, x, training=False):
        return basic_conv2d_forward(self, x, training)


def basic_conv2d_forward(layer:BasicConv2d, x:Tensor, training:bool) -> Tensor:
    if x.shape[1] != layer.cin:
        raise ShapeError(f"BasicConv2d expects {layer.cin} input channels, got {x.shape[1]}")
    return layer.bn.forward(F.relu6(layer.conv.forward(x)), training)


def init_parameters(model:Layer, spec:InitSpec, seed:int) -> List[Tuple[str, Tensor]]:
    """(Re)initialize every layer in declaration order from a single seeded generator."""
    rng = np.random.default_rng(seed)
    for layer in model.layers():
        layer.reset_parameters(rng, spec)
    return list(model.named_state())


def collect_parameters(model:Layer) -> List[Tuple[str, Tensor]]:
    return list(model.named_parameters())


def count_parameters(model:Layer, include_buffers:bool=False) -> int:
    tensors = model.named_state() if include_buffers else model.named_parameters()
    return sum(t.numel for _, t in tensors)
