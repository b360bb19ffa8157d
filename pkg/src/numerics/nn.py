import logging
import math
from typing import Sequence

import numpy as np

from src.common.exceptions import ShapeError
from src.numerics.tensor import ACTIVATIONS, Tensor, as_tensor, concat

logger = logging.getLogger(__name__)


def sinusoidal_features(steps: np.ndarray, dim: int) -> np.ndarray:
    """
    Sinusoidal features of integer diffusion steps, shape (len(steps), dim).
    """
    steps = np.asarray(steps, dtype=np.float64).reshape(-1, 1)
    half = dim // 2
    freqs = np.exp(-math.log(10_000.0) * np.arange(half) / max(half - 1, 1))
    angles = steps * freqs[None, :]
    features = np.concatenate([np.sin(angles), np.cos(angles)], axis=1)
    if dim % 2:
        features = np.concatenate([features, np.zeros((features.shape[0], 1))], axis=1)
    return features


class Linear:
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, zero: bool = False):
        bound = 1.0 / math.sqrt(in_dim)
        if zero:
            weight = np.zeros((in_dim, out_dim))
            bias = np.zeros(out_dim)
        else:
            weight = rng.uniform(-bound, bound, size=(in_dim, out_dim))
            bias = rng.uniform(-bound, bound, size=out_dim)
        self.weight = Tensor(weight, requires_grad=True)
        self.bias = Tensor(bias, requires_grad=True)

    @property
    def in_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[1]

    def __call__(self, x: Tensor) -> Tensor:
        return x @ self.weight + self.bias


class FeedForwardNet:
    """
    Multi-layer perceptron with an optional learned embedding of an integer
    step input (sinusoidal features passed through one learned projection).

    Args:
        in_dim: Width of the regular input.
        hidden: Widths of the hidden layers, in order.
        out_dim: Width of the output.
        rng: Generator used for fan-in uniform initialization.
        activation: Activation used by every hidden layer; the output is linear.
        zero_last: Zero-initialize the output layer.
        step_embedding_dim: When set, ``forward`` expects ``steps``.
    """

    def __init__(
        self,
        in_dim: int,
        hidden: Sequence[int],
        out_dim: int,
        rng: np.random.Generator,
        activation: str = "tanh",
        zero_last: bool = False,
        step_embedding_dim: int | None = None,
    ):
        if activation not in ACTIVATIONS:
            raise ShapeError(f"unknown activation '{activation}', expected one of {sorted(ACTIVATIONS)}")
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.step_embedding_dim = step_embedding_dim

        self.embedding: Linear | None = None
        width = in_dim
        if step_embedding_dim:
            self.embedding = Linear(step_embedding_dim, step_embedding_dim, rng)
            width += step_embedding_dim

        widths = [width, *hidden, out_dim]
        self.layers = [
            Linear(widths[k], widths[k + 1], rng, zero=zero_last and k == len(widths) - 2)
            for k in range(len(widths) - 1)
        ]
        self.activations = [activation] * len(hidden) + ["identity"]

    @property
    def widths(self) -> list[int]:
        return [self.layers[0].in_dim, *(layer.out_dim for layer in self.layers)]

    def forward(self, x, steps: np.ndarray | None = None) -> Tensor:
        x = as_tensor(x)
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ShapeError(f"expected input of shape (batch, {self.in_dim}), got {x.shape}")

        if self.embedding is not None:
            if steps is None:
                raise ShapeError("this network embeds a step input; 'steps' is required")
            steps = np.broadcast_to(np.asarray(steps), (x.shape[0],))
            emb = Tensor(sinusoidal_features(steps, self.step_embedding_dim))
            x = concat([x, ACTIVATIONS["silu"](self.embedding(emb))], axis=1)

        for layer, activation in zip(self.layers, self.activations):
            x = ACTIVATIONS[activation](layer(x))
        return x

    __call__ = forward

    def predict(self, x: np.ndarray, steps: np.ndarray | None = None) -> np.ndarray:
        """Forward pass returning a plain array."""
        return self.forward(np.asarray(x, dtype=np.float64), steps).data

    # ------------------------------------------------------------------
    # Parameters
    # ------------------------------------------------------------------

    def named_parameters(self) -> dict[str, Tensor]:
        params: dict[str, Tensor] = {}
        if self.embedding is not None:
            params["embedding.weight"] = self.embedding.weight
            params["embedding.bias"] = self.embedding.bias
        for k, layer in enumerate(self.layers):
            params[f"layers.{k}.weight"] = layer.weight
            params[f"layers.{k}.bias"] = layer.bias
        return params

    def parameters(self) -> list[Tensor]:
        return list(self.named_parameters().values())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters().items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = self.named_parameters()
        missing = set(params) - set(state)
        if missing:
            raise ShapeError(f"state dict is missing parameters: {sorted(missing)}")
        for name, p in params.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != p.shape:
                raise ShapeError(f"parameter '{name}' has shape {p.shape}, checkpoint holds {value.shape}")
            p.data = value.copy()
