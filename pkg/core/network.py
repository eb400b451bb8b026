#!/usr/bin/env python3
"""
Network - Xception-style classifier over co-occurrence tensors

Entry flow (two plain convolutions, then strided separable-conv residual
blocks), middle flow (identity residual blocks of three separable convs),
exit flow (one strided residual block plus trailing separable convs),
global average pooling and a detection (1 logit) or attribution (C logits)
head. Batch normalization is omitted; every block is bias + ReLU.
"""

import logging
from typing import Dict, List, Tuple, Union, Sequence

import numpy as np

from core.errors import DepthMismatchError, ShapeMismatchError
from core.models import INPUT_SIZE, ArchConfig, CoocTensor, HeadKind
from core.nn import (
    Conv2D, Dense, GlobalAvgPool, Layer, LayerParam, MaxPool2D, ReLU, ResidualBlock,
    SeparableConv2D, Sequential, sigmoid, softmax_xent, sigmoid_xent, zero_grads,
)
from scipy.special import softmax

logger = logging.getLogger(__name__)

Batch = Union[np.ndarray, Sequence[CoocTensor]]


class MiniXception:
    """
    Xception-style residual CNN with depthwise-separable convolutions

    Parameters are created in a fixed order from one seeded generator, so the
    same (config, seed) always yields bit-identical tensors.
    """

    def __init__(self, config: ArchConfig, seed: int = 0, dtype=np.float32):
        self.config = config
        self.seed = seed
        self.dtype = dtype
        rng = np.random.default_rng(seed)
        self.trunk = self._build_trunk(config, rng, dtype)
        self.pool = GlobalAvgPool("gap")
        self.head = Dense("head", config.feature_width, config.output_dim, rng=rng, dtype=dtype)

    # ------------------------------------------------------------------
    # Construction
    # ------------------------------------------------------------------

    @staticmethod
    def _build_trunk(config: ArchConfig, rng: np.random.Generator, dtype) -> Sequential:
        layers: List[Layer] = []
        w1, w2 = config.entry_conv_widths
        layers += [
            Conv2D("entry/conv1", config.input_depth, w1, kernel=3, stride=2, rng=rng, dtype=dtype),
            ReLU("entry/conv1/relu"),
            Conv2D("entry/conv2", w1, w2, kernel=3, stride=1, rng=rng, dtype=dtype),
            ReLU("entry/conv2/relu"),
        ]

        width = w2
        for k, out_width in enumerate(config.entry_widths):
            name = f"entry/block{k + 1}"
            body: List[Layer] = [] if k == 0 else [ReLU(f"{name}/relu0")]
            body += [
                SeparableConv2D(f"{name}/sep1", width, out_width, rng=rng, dtype=dtype),
                ReLU(f"{name}/relu1"),
                SeparableConv2D(f"{name}/sep2", out_width, out_width, rng=rng, dtype=dtype),
                MaxPool2D(f"{name}/pool"),
            ]
            shortcut = Conv2D(f"{name}/shortcut", width, out_width, kernel=1, stride=2,
                              rng=rng, dtype=dtype)
            layers.append(ResidualBlock(name, Sequential(name, body), shortcut))
            width = out_width

        for k in range(config.middle_blocks):
            name = f"middle/block{k + 1}"
            body = []
            for s in range(3):
                body += [
                    ReLU(f"{name}/relu{s + 1}"),
                    SeparableConv2D(f"{name}/sep{s + 1}", width, width, rng=rng, dtype=dtype),
                ]
            layers.append(ResidualBlock(name, Sequential(name, body)))

        exit_width = config.exit_widths[0]
        body = [
            ReLU("exit/block/relu1"),
            SeparableConv2D("exit/block/sep1", width, width, rng=rng, dtype=dtype),
            ReLU("exit/block/relu2"),
            SeparableConv2D("exit/block/sep2", width, exit_width, rng=rng, dtype=dtype),
            MaxPool2D("exit/block/pool"),
        ]
        shortcut = Conv2D("exit/block/shortcut", width, exit_width, kernel=1, stride=2,
                          rng=rng, dtype=dtype)
        layers.append(ResidualBlock("exit/block", Sequential("exit/block", body), shortcut))
        width = exit_width

        for k, out_width in enumerate(config.exit_widths[1:]):
            layers += [
                SeparableConv2D(f"exit/sep{k + 1}", width, out_width, rng=rng, dtype=dtype),
                ReLU(f"exit/sep{k + 1}/relu"),
            ]
            width = out_width

        return Sequential("trunk", layers)

    # ------------------------------------------------------------------
    # Parameters
    # ------------------------------------------------------------------

    def params(self) -> List[LayerParam]:
        """All parameters in construction order"""
        return self.trunk.params() + self.head.params()

    def parameter_count(self) -> int:
        return int(sum(p.weights.size for p in self.params()))

    def zero_grad(self) -> None:
        zero_grads(self.params())

    def state_dict(self) -> Dict[str, np.ndarray]:
        """Parameter name -> copy of its weights, in construction order"""
        return {p.name: p.weights.copy() for p in self.params()}

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        """Load weights by name; every parameter must be present with its exact shape"""
        params = self.params()
        names = [p.name for p in params]
        missing = [n for n in names if n not in state]
        extra = [n for n in state if n not in set(names)]
        if missing or extra:
            raise ShapeMismatchError(
                f"State does not match architecture (missing={missing[:3]}, extra={extra[:3]})"
            )
        for p in params:
            value = np.asarray(state[p.name])
            if value.shape != p.weights.shape:
                raise ShapeMismatchError(
                    f"Parameter {p.name}: expected shape {p.weights.shape}, got {value.shape}"
                )
            p.weights[...] = value.astype(p.weights.dtype)

    # ------------------------------------------------------------------
    # Forward / backward
    # ------------------------------------------------------------------

    def _as_batch(self, batch: Batch) -> np.ndarray:
        if not isinstance(batch, np.ndarray):
            batch = np.stack([t.values if isinstance(t, CoocTensor) else t for t in batch])
        if batch.ndim == 3:
            batch = batch[None]
        if batch.ndim != 4:
            raise ShapeMismatchError(f"Expected an (N, 256, 256, D) batch, got {batch.shape}")
        if batch.shape[3] != self.config.input_depth:
            raise DepthMismatchError(self.config.input_depth, batch.shape[3])
        if batch.shape[1:3] != (INPUT_SIZE, INPUT_SIZE):
            raise ShapeMismatchError(
                f"Co-occurrence input must be {INPUT_SIZE}x{INPUT_SIZE}, got {batch.shape[1:3]}"
            )
        return batch.astype(self.dtype, copy=False)

    def forward(self, batch: Batch, record: bool = True, return_features: bool = False):
        """
        Logits for a batch of co-occurrence tensors

        Args:
            batch: (N, 256, 256, D) array or sequence of CoocTensor
            record: Keep activations for backward; pass False for read-only inference
            return_features: Also return the pooled penultimate vectors

        Returns:
            (N, 1) or (N, C) logits, or (logits, features) when return_features
        """
        x = self._as_batch(batch)
        features = self.pool.forward(self.trunk.forward(x, record), record)
        logits = self.head.forward(features, record)
        if return_features:
            return logits, features
        return logits

    def backward(self, dlogits: np.ndarray) -> np.ndarray:
        """Accumulate parameter gradients for the last recorded forward pass"""
        dfeatures = self.head.backward(dlogits.astype(self.dtype, copy=False))
        return self.trunk.backward(self.pool.backward(dfeatures))

    def probabilities(self, logits: np.ndarray) -> np.ndarray:
        """Head activation: sigmoid for detection, softmax for attribution"""
        if self.config.head == HeadKind.DETECTION.value:
            return sigmoid(logits.astype(np.float64))
        return softmax(logits.astype(np.float64), axis=1)

    def predict(self, batch: Batch) -> np.ndarray:
        """Probabilities without recording activations (safe for concurrent readers)"""
        return self.probabilities(self.forward(batch, record=False))

    def loss_and_grad(self, logits: np.ndarray, targets: np.ndarray) -> Tuple[float, np.ndarray]:
        """Head-appropriate cross-entropy and its logit gradient"""
        if self.config.head == HeadKind.DETECTION.value:
            return sigmoid_xent(logits, targets)
        return softmax_xent(logits, targets)

    # ------------------------------------------------------------------
    # Summary
    # ------------------------------------------------------------------

    def summary(self, batch_size: int = 1) -> List[Tuple[str, Tuple[int, ...], int]]:
        """(layer name, output shape, parameter count) rows plus a final total row"""
        rows = []
        shape: Tuple[int, ...] = (batch_size, INPUT_SIZE, INPUT_SIZE, self.config.input_depth)
        for layer in self.trunk.layers + [self.pool, self.head]:
            shape = tuple(layer.output_shape(shape))
            count = int(sum(p.weights.size for p in layer.params()))
            rows.append((layer.name, shape, count))
        rows.append(("total", shape, self.parameter_count()))
        return rows

    def describe(self) -> str:
        lines = [f"{name:<28} {str(shape):<24} {count:>10,}" for name, shape, count in self.summary()]
        return "\n".join(lines)


def build(config: ArchConfig, seed: int = 0, dtype=np.float32) -> MiniXception:
    """Build a model with deterministic seeded initialization"""
    model = MiniXception(config, seed=seed, dtype=dtype)
    logger.debug("Built %s model (%s head): %d parameters",
                 config.scale, config.head, model.parameter_count())
    return model
