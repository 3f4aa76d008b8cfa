"""
Feature extractors with hand-written vector-Jacobian products and beta-blended checkpoints

Parameter layouts (flat, row-major):
    identity:                empty
    random-relu-projection:  W (in_dim x out_dim), b (out_dim)
    mlp:                     W1 (in_dim x hidden), b1 (hidden), W2 (hidden x out_dim), b2 (out_dim)
"""
import logging
from dataclasses import dataclass, replace
from typing import Any, Dict, Optional

import numpy as np
from scipy.special import log_softmax, softmax

from data import DataMatrix
from errors import ArgumentError, ShapeError, StateError

logger = logging.getLogger(__name__)

FEATURE_KINDS = ("identity", "random-relu-projection", "mlp")


def _relu_mask(pre: np.ndarray) -> np.ndarray:
    # subgradient at 0 is 0
    return (pre > 0).astype(np.float64)


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """A map from input space to feature space, blended from two checkpoints"""

    kind: str
    in_dim: int
    out_dim: int
    hidden: int
    params: np.ndarray
    init_checkpoint: np.ndarray
    final_checkpoint: np.ndarray
    beta: float = 0.5
    train_accuracy: Optional[float] = None

    def __post_init__(self):
        if self.kind not in FEATURE_KINDS:
            raise ArgumentError(f"feature map kind must be one of {FEATURE_KINDS}, got {self.kind!r}")
        for name in ("params", "init_checkpoint", "final_checkpoint"):
            vector = np.asarray(getattr(self, name), dtype=np.float64).reshape(-1)
            if not np.all(np.isfinite(vector)):
                raise ArgumentError(f"{name} must be finite")
            object.__setattr__(self, name, vector)
        if self.kind == "identity" and (self.out_dim != self.in_dim or self.params.size):
            raise ArgumentError("identity map requires out_dim == in_dim and no parameters")
        if self.params.size != self.n_params:
            raise ShapeError(f"{self.kind} map expects {self.n_params} parameters, got {self.params.size}")

    @classmethod
    def create(
        cls,
        kind: str,
        in_dim: int,
        rng: np.random.Generator,
        out_dim: Optional[int] = None,
        hidden: int = 64,
    ) -> "FeatureMap":
        """
        Build a freshly initialized map; both checkpoints start at the initialization

        Args:
            kind: identity, random-relu-projection or mlp
            in_dim: Input dimension
            rng: Generator for the random initialization
            out_dim: Feature dimension (identity: forced to in_dim; default 32)
            hidden: Hidden width of the mlp
        """
        if kind == "identity":
            out_dim, hidden, params = in_dim, 0, np.zeros(0)
        elif kind == "random-relu-projection":
            out_dim = out_dim or 32
            hidden = 0
            weights = rng.standard_normal((in_dim, out_dim)) / np.sqrt(in_dim)
            bias = 0.1 * rng.standard_normal(out_dim)
            params = np.concatenate([weights.ravel(), bias])
        elif kind == "mlp":
            out_dim = out_dim or 32
            w1 = rng.standard_normal((in_dim, hidden)) * np.sqrt(2.0 / in_dim)
            w2 = rng.standard_normal((hidden, out_dim)) * np.sqrt(1.0 / hidden)
            params = np.concatenate([w1.ravel(), np.zeros(hidden), w2.ravel(), np.zeros(out_dim)])
        else:
            raise ArgumentError(f"feature map kind must be one of {FEATURE_KINDS}, got {kind!r}")
        return cls(
            kind=kind,
            in_dim=in_dim,
            out_dim=out_dim,
            hidden=hidden,
            params=params,
            init_checkpoint=params.copy(),
            final_checkpoint=params.copy(),
        )

    @property
    def n_params(self) -> int:
        if self.kind == "identity":
            return 0
        if self.kind == "random-relu-projection":
            return self.in_dim * self.out_dim + self.out_dim
        return self.in_dim * self.hidden + self.hidden + self.hidden * self.out_dim + self.out_dim

    def unpack(self, params: Optional[np.ndarray] = None) -> Dict[str, np.ndarray]:
        """Views of the weight matrices and biases inside a flat parameter vector"""
        params = self.params if params is None else params
        if self.kind == "identity":
            return {}
        if self.kind == "random-relu-projection":
            split = self.in_dim * self.out_dim
            return {"W": params[:split].reshape(self.in_dim, self.out_dim), "b": params[split:]}
        i, h, o = self.in_dim, self.hidden, self.out_dim
        offsets = np.cumsum([0, i * h, h, h * o, o])
        return {
            "W1": params[offsets[0]:offsets[1]].reshape(i, h),
            "b1": params[offsets[1]:offsets[2]],
            "W2": params[offsets[2]:offsets[3]].reshape(h, o),
            "b2": params[offsets[3]:offsets[4]],
        }

    def _check_inputs(self, inputs: np.ndarray) -> np.ndarray:
        inputs = np.asarray(inputs, dtype=np.float64)
        if inputs.ndim != 2 or inputs.shape[1] != self.in_dim:
            raise ShapeError(f"inputs must have {self.in_dim} columns, got shape {inputs.shape}")
        return inputs

    def forward(self, inputs: np.ndarray, params: Optional[np.ndarray] = None) -> np.ndarray:
        """Features of each input row"""
        inputs = self._check_inputs(inputs)
        if self.kind == "identity":
            return inputs.copy()
        layers = self.unpack(params)
        if self.kind == "random-relu-projection":
            return np.maximum(inputs @ layers["W"] + layers["b"], 0.0)
        hidden = np.maximum(inputs @ layers["W1"] + layers["b1"], 0.0)
        return hidden @ layers["W2"] + layers["b2"]

    def vjp(self, inputs: np.ndarray, cotangent: np.ndarray) -> np.ndarray:
        """
        Pull a cotangent on the features back to the inputs

        Args:
            inputs: n x in_dim inputs the map was evaluated at
            cotangent: n x out_dim cotangent (e.g. d loss / d features)

        Returns:
            n x in_dim cotangent on the inputs
        """
        inputs = self._check_inputs(inputs)
        cotangent = np.asarray(cotangent, dtype=np.float64)
        if cotangent.shape != (inputs.shape[0], self.out_dim):
            raise ShapeError(f"cotangent must have shape {(inputs.shape[0], self.out_dim)}, got {cotangent.shape}")
        if self.kind == "identity":
            return cotangent.copy()
        layers = self.unpack()
        if self.kind == "random-relu-projection":
            pre = inputs @ layers["W"] + layers["b"]
            return (cotangent * _relu_mask(pre)) @ layers["W"].T
        pre = inputs @ layers["W1"] + layers["b1"]
        d_pre = (cotangent @ layers["W2"].T) * _relu_mask(pre)
        return d_pre @ layers["W1"].T

    def param_vjp(self, inputs: np.ndarray, cotangent: np.ndarray, params: np.ndarray) -> np.ndarray:
        """Flat gradient w.r.t. the mlp parameters for a cotangent on the features"""
        if self.kind != "mlp":
            raise ArgumentError("parameter gradients are only defined for the mlp kind")
        layers = self.unpack(params)
        pre = inputs @ layers["W1"] + layers["b1"]
        hidden = np.maximum(pre, 0.0)
        d_pre = (cotangent @ layers["W2"].T) * _relu_mask(pre)
        return np.concatenate([
            (inputs.T @ d_pre).ravel(),
            d_pre.sum(axis=0),
            (hidden.T @ cotangent).ravel(),
            cotangent.sum(axis=0),
        ])

    def blend(self, beta: float) -> "FeatureMap":
        """Set params to (1 - beta) * init_checkpoint + beta * final_checkpoint"""
        if self.init_checkpoint.shape != self.final_checkpoint.shape:
            raise StateError(
                f"checkpoint lengths differ: {self.init_checkpoint.size} vs {self.final_checkpoint.size}"
            )
        params = (1.0 - beta) * self.init_checkpoint + beta * self.final_checkpoint
        return replace(self, params=params, beta=float(beta))

    def reblend(self, rng: np.random.Generator) -> "FeatureMap":
        """Blend with a fresh beta ~ U(0, 1)"""
        return self.blend(rng.uniform(0.0, 1.0))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "in_dim": self.in_dim,
            "out_dim": self.out_dim,
            "hidden": self.hidden,
            "beta": self.beta,
            "init_checkpoint": self.init_checkpoint.tolist(),
            "final_checkpoint": self.final_checkpoint.tolist(),
            "train_accuracy": self.train_accuracy,
        }

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "FeatureMap":
        init = np.asarray(payload["init_checkpoint"], dtype=np.float64)
        final = np.asarray(payload["final_checkpoint"], dtype=np.float64)
        beta = float(payload["beta"])
        return cls(
            kind=payload["kind"],
            in_dim=int(payload["in_dim"]),
            out_dim=int(payload["out_dim"]),
            hidden=int(payload["hidden"]),
            params=(1.0 - beta) * init + beta * final,
            init_checkpoint=init,
            final_checkpoint=final,
            beta=beta,
            train_accuracy=payload.get("train_accuracy"),
        )


@dataclass(frozen=True)
class FeatureConfig:
    """How the run builds its feature map"""

    kind: str = "mlp"
    out_dim: Optional[int] = 32
    hidden: int = 64
    pretrain_epochs: int = 20
    pretrain_lr: float = 0.1
    pretrain_batch: int = 32

    def __post_init__(self):
        if self.kind not in FEATURE_KINDS:
            raise ArgumentError(f"feature map kind must be one of {FEATURE_KINDS}, got {self.kind!r}")
        if self.hidden < 1 or self.pretrain_epochs < 0 or self.pretrain_batch < 1 or self.pretrain_lr <= 0:
            raise ArgumentError("hidden and pretrain_batch must be >= 1, pretrain_epochs >= 0, pretrain_lr > 0")


def build_feature_map(config: FeatureConfig, real: DataMatrix, rng: np.random.Generator) -> FeatureMap:
    """Initialize the configured map and, for the mlp kind, pretrain its final checkpoint"""
    feature_map = FeatureMap.create(config.kind, real.d, rng, out_dim=config.out_dim, hidden=config.hidden)
    if config.kind == "mlp":
        feature_map = pretrain_final_checkpoint(
            feature_map, real, config.pretrain_epochs, rng,
            learning_rate=config.pretrain_lr, batch_size=config.pretrain_batch,
        )
    return feature_map


def forward(feature_map: FeatureMap, inputs: np.ndarray) -> np.ndarray:
    return feature_map.forward(inputs)


def vjp(feature_map: FeatureMap, inputs: np.ndarray, cotangent: np.ndarray) -> np.ndarray:
    return feature_map.vjp(inputs, cotangent)


def reblend(feature_map: FeatureMap, rng: np.random.Generator) -> FeatureMap:
    return feature_map.reblend(rng)


def pretrain_final_checkpoint(
    feature_map: FeatureMap,
    data: DataMatrix,
    epochs: int,
    rng: np.random.Generator,
    learning_rate: float = 0.1,
    batch_size: int = 32,
) -> FeatureMap:
    """
    Train the mlp body as a classifier on real data and store it as the final checkpoint

    A linear softmax head is attached for training and discarded afterwards. The
    body starts from init_checkpoint, which stays untouched.

    Args:
        feature_map: mlp-kind map
        data: Labeled training data
        epochs: Passes over the data (0 -> final_checkpoint = init_checkpoint)
        rng: Generator for head initialization and shuffling
        learning_rate: SGD step size
        batch_size: Mini-batch size

    Returns:
        Map with the trained final checkpoint, params re-blended at the current beta
        and train_accuracy set to the head's accuracy on the training set
    """
    if feature_map.kind != "mlp":
        raise ArgumentError(f"pretraining needs an mlp feature map, got {feature_map.kind}")
    if data.labels is None:
        raise ArgumentError("pretraining needs labeled data")
    if epochs < 0:
        raise ArgumentError(f"epochs must be >= 0, got {epochs}")

    body = feature_map.init_checkpoint.copy()
    n_classes = data.n_classes
    head_w = rng.standard_normal((feature_map.out_dim, n_classes)) / np.sqrt(feature_map.out_dim)
    head_b = np.zeros(n_classes)
    onehot = np.eye(n_classes)[data.labels]

    for epoch in range(epochs):
        order = rng.permutation(data.n)
        for start in range(0, data.n, batch_size):
            rows = order[start:start + batch_size]
            inputs = data.values[rows]
            feats = feature_map.forward(inputs, body)
            d_logits = (softmax(feats @ head_w + head_b, axis=1) - onehot[rows]) / rows.size
            d_feats = d_logits @ head_w.T
            head_w -= learning_rate * (feats.T @ d_logits)
            head_b -= learning_rate * d_logits.sum(axis=0)
            body -= learning_rate * feature_map.param_vjp(inputs, d_feats, body)
        if not np.all(np.isfinite(body)):
            raise ArgumentError(f"pretraining diverged at epoch {epoch}; lower the learning rate")
        if (epoch + 1) % 10 == 0:
            logits = feature_map.forward(data.values, body) @ head_w + head_b
            loss = -np.mean(np.sum(log_softmax(logits, axis=1) * onehot, axis=1))
            logger.debug("pretrain epoch %d: cross-entropy %.4f", epoch + 1, loss)

    logits = feature_map.forward(data.values, body) @ head_w + head_b
    accuracy = float(np.mean(np.argmax(logits, axis=1) == data.labels))
    logger.info("Pretrained feature map for %d epochs: train accuracy %.3f", epochs, accuracy)
    trained = replace(feature_map, final_checkpoint=body, train_accuracy=accuracy)
    return trained.blend(feature_map.beta)
