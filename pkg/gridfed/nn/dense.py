"""
Dense networks - Affine + activation stacks with hand-written backprop

Inputs may be a single vector of shape (in,) or a batch of shape (N, in).
Backward returns the gradient of sum(output * output_grad) over the batch,
laid out like get_flat(): for each layer the row-major weight matrix
followed by the bias.
"""

import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from gridfed.core.errors import ContractViolation
from gridfed.nn.params import ParamLayout, Partition, Segment

logger = logging.getLogger(__name__)

ACTIVATIONS = ("tanh", "relu", "identity")


def _activate(name: str, z: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return np.tanh(z)
    if name == "relu":
        return np.maximum(z, 0.0)
    return z


def _activation_grad(name: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return 1.0 - a * a
    if name == "relu":
        return (z > 0.0).astype(np.float64)
    return np.ones_like(z)


@dataclass
class DenseLayer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray    # (out,)
    activation: str = "tanh"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ContractViolation(f"Unknown activation: {self.activation}")
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ContractViolation(
                f"Layer shapes disagree: weight {self.weight.shape}, bias {self.bias.shape}")

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def param_count(self) -> int:
        return self.weight.size + self.bias.size


@dataclass
class ForwardCache:
    """Per-layer inputs, pre-activations and outputs of one forward pass"""
    inputs: List[np.ndarray]
    pre: List[np.ndarray]
    post: List[np.ndarray]
    squeeze: bool


class DenseNet:
    """Feed-forward stack of DenseLayers"""

    def __init__(self, layers: Sequence[DenseLayer]):
        if not layers:
            raise ContractViolation("A network needs at least one layer")
        for k in range(1, len(layers)):
            if layers[k].in_dim != layers[k - 1].out_dim:
                raise ContractViolation(
                    f"Layer {k} expects {layers[k].in_dim} inputs but layer {k - 1} "
                    f"emits {layers[k - 1].out_dim}")
        self.layers = list(layers)

    @classmethod
    def glorot(cls, sizes: Sequence[int], activations: Sequence[str],
               rng: np.random.Generator) -> "DenseNet":
        """Uniform Glorot weights, zero biases"""
        if len(activations) != len(sizes) - 1:
            raise ContractViolation("Need one activation per layer")
        layers = []
        for fan_in, fan_out, act in zip(sizes[:-1], sizes[1:], activations):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            weight = rng.uniform(-limit, limit, size=(fan_out, fan_in))
            layers.append(DenseLayer(weight, np.zeros(fan_out), act))
        return cls(layers)

    @classmethod
    def zeros(cls, sizes: Sequence[int], activations: Sequence[str]) -> "DenseNet":
        if len(activations) != len(sizes) - 1:
            raise ContractViolation("Need one activation per layer")
        return cls([DenseLayer(np.zeros((o, i)), np.zeros(o), a)
                    for i, o, a in zip(sizes[:-1], sizes[1:], activations)])

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def param_count(self) -> int:
        return sum(layer.param_count for layer in self.layers)

    def layout(self, prefix: str = "", partition: Partition = Partition.SHARED) -> ParamLayout:
        segments, offset = [], 0
        for k, layer in enumerate(self.layers):
            segments.append(Segment(f"{prefix}layer{k}.weight", offset, layer.weight.size, partition))
            offset += layer.weight.size
            segments.append(Segment(f"{prefix}layer{k}.bias", offset, layer.bias.size, partition))
            offset += layer.bias.size
        return ParamLayout(segments)

    def _as_batch(self, x: np.ndarray) -> Tuple[np.ndarray, bool]:
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ContractViolation(f"Expected input width {self.in_dim}, got shape {x.shape}")
        return x, squeeze

    def forward_cached(self, x: np.ndarray) -> Tuple[np.ndarray, ForwardCache]:
        h, squeeze = self._as_batch(x)
        cache = ForwardCache(inputs=[], pre=[], post=[], squeeze=squeeze)
        for layer in self.layers:
            cache.inputs.append(h)
            z = h @ layer.weight.T + layer.bias
            h = _activate(layer.activation, z)
            cache.pre.append(z)
            cache.post.append(h)
        return (h[0] if squeeze else h), cache

    def forward(self, x: np.ndarray) -> np.ndarray:
        return self.forward_cached(x)[0]

    def backward_cached(self, cache: ForwardCache,
                        output_grad: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Reverse pass over a stored forward; returns (flat param grad, input grad)"""
        g = np.asarray(output_grad, dtype=np.float64)
        if cache.squeeze:
            g = g[None, :]
        if g.shape != cache.post[-1].shape:
            raise ContractViolation(
                f"Output grad shape {g.shape} does not match output {cache.post[-1].shape}")

        grads: List[np.ndarray] = []
        for k in reversed(range(len(self.layers))):
            layer = self.layers[k]
            dz = g * _activation_grad(layer.activation, cache.pre[k], cache.post[k])
            grads.append(dz.sum(axis=0))
            grads.append((dz.T @ cache.inputs[k]).ravel())
            g = dz @ layer.weight
        flat = np.concatenate(grads[::-1])
        return flat, (g[0] if cache.squeeze else g)

    def backward(self, x: np.ndarray, output_grad: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        _, cache = self.forward_cached(x)
        return self.backward_cached(cache, output_grad)

    def get_flat(self) -> np.ndarray:
        return np.concatenate([np.concatenate([l.weight.ravel(), l.bias]) for l in self.layers])

    def set_flat(self, values: np.ndarray) -> None:
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 1 or values.size != self.param_count:
            raise ContractViolation(
                f"Flat vector has {values.size} values, network has {self.param_count}")
        offset = 0
        for layer in self.layers:
            n = layer.weight.size
            layer.weight = values[offset:offset + n].reshape(layer.weight.shape).copy()
            offset += n
            layer.bias = values[offset:offset + layer.bias.size].copy()
            offset += layer.bias.size
