"""
Learnable frequency sampler: a zero-mean scale mixture of normals over frequency space
"""
import logging
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Optional

import numpy as np
from scipy.special import softmax

from errors import ArgumentError, ShapeError, StateError

logger = logging.getLogger(__name__)

LOG_SCALE_BOUND = 30.0


@dataclass(frozen=True, eq=False)
class FrequencyDraw:
    """Component indices and standard-normal noise behind one batch of frequencies"""

    components: np.ndarray
    noise: np.ndarray


def default_components(q: int) -> int:
    """One mixture component per 16 frequency arguments, at least one"""
    return max(1, q // 16)


@dataclass(eq=False)
class FreqSampler:
    """
    Scale mixture of zero-mean normals with diagonal per-component scales

    A frequency is drawn by picking component c from softmax(mixture_logits) and
    returning exp(log_scales[c]) * eps with eps ~ N(0, I).
    """

    log_scales: np.ndarray
    mixture_logits: np.ndarray
    learn_mixture: bool = False
    last_draw: Optional[FrequencyDraw] = field(default=None, repr=False)

    def __post_init__(self):
        self.log_scales = np.atleast_2d(np.asarray(self.log_scales, dtype=np.float64))
        self.mixture_logits = np.asarray(self.mixture_logits, dtype=np.float64).reshape(-1)
        if self.mixture_logits.shape[0] != self.log_scales.shape[0]:
            raise ShapeError(
                f"{self.log_scales.shape[0]} components but {self.mixture_logits.shape[0]} mixture logits"
            )
        scales = np.exp(self.log_scales)
        if not np.all(np.isfinite(scales)) or not np.all(scales > 0):
            raise ArgumentError("component scales must be finite and strictly positive")
        if self.learn_mixture:
            raise ArgumentError("learned mixture weights are not supported; weights stay uniform")

    @classmethod
    def create(
        cls,
        dim: int,
        q: int,
        n_components: Optional[int] = None,
        init_scale: float = 1.0,
        scale_spread: float = 0.0,
    ) -> "FreqSampler":
        """
        Build a sampler with uniform mixture weights

        Args:
            dim: Frequency (feature) dimension m
            q: Frequencies drawn per iteration; sets the default component count
            n_components: Override for the component count
            init_scale: Geometric centre of the initial component scales
            scale_spread: Log-range of initial scales across components (0 -> all equal)
        """
        if dim < 1 or q < 1:
            raise ArgumentError(f"dim and q must be >= 1, got {dim}, {q}")
        if init_scale <= 0:
            raise ArgumentError(f"init_scale must be > 0, got {init_scale}")
        k = n_components or default_components(q)
        offsets = np.linspace(-0.5, 0.5, k) * scale_spread if k > 1 else np.zeros(1)
        log_scales = np.log(init_scale) + np.repeat(offsets[:, None], dim, axis=1)
        return cls(log_scales=log_scales, mixture_logits=np.zeros(k))

    @property
    def n_components(self) -> int:
        return self.log_scales.shape[0]

    @property
    def dim(self) -> int:
        return self.log_scales.shape[1]

    @property
    def weights(self) -> np.ndarray:
        return softmax(self.mixture_logits)

    def scale_norm(self) -> float:
        return float(np.linalg.norm(np.exp(self.log_scales)))

    def reparameterize(self, draw: FrequencyDraw) -> np.ndarray:
        """Frequencies for a frozen draw under the current scales"""
        return np.exp(self.log_scales[draw.components]) * draw.noise

    def sample_freqs(self, q: int, rng: np.random.Generator) -> np.ndarray:
        """
        Draw q frequencies and record the draw for the next max_step

        Args:
            q: Number of frequency arguments
            rng: Caller-owned generator

        Returns:
            q x m frequency matrix
        """
        if q < 1:
            raise ArgumentError(f"q must be >= 1, got {q}")
        components = rng.choice(self.n_components, size=q, p=self.weights)
        noise = rng.standard_normal((q, self.dim))
        self.last_draw = FrequencyDraw(components=components, noise=noise)
        return self.reparameterize(self.last_draw)

    def log_scale_grad(self, grad_freqs: np.ndarray) -> np.ndarray:
        """
        Pathwise gradient w.r.t. log_scales of a function of the last drawn frequencies

        t = exp(log_scale) * eps, so d t / d log_scale = t.
        """
        if self.last_draw is None:
            raise StateError("no frequency draw recorded; call sample_freqs first")
        freqs = self.reparameterize(self.last_draw)
        grad_freqs = np.asarray(grad_freqs, dtype=np.float64)
        if grad_freqs.shape != freqs.shape:
            raise ShapeError(f"grad_freqs has shape {grad_freqs.shape}, last draw has {freqs.shape}")
        grad = np.zeros_like(self.log_scales)
        np.add.at(grad, self.last_draw.components, grad_freqs * freqs)
        return grad

    def max_step(self, grad_freqs: np.ndarray, learning_rate: float, normalize: bool = False) -> "FreqSampler":
        """
        One gradient-ascent step on the log scales

        Args:
            grad_freqs: d loss / d freqs for the last draw
            learning_rate: Ascent step size
            normalize: Step along the unit-norm gradient direction, so every
                non-zero step moves the log scales by learning_rate

        Returns:
            Updated sampler with the draw cleared; mixture logits are unchanged
        """
        grad = self.log_scale_grad(grad_freqs)
        if normalize:
            norm = np.linalg.norm(grad)
            if norm > 0:
                grad = grad / norm
        log_scales = np.clip(self.log_scales + learning_rate * grad, -LOG_SCALE_BOUND, LOG_SCALE_BOUND)
        return replace(self, log_scales=log_scales, last_draw=None)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "log_scales": self.log_scales.tolist(),
            "mixture_logits": self.mixture_logits.tolist(),
            "learn_mixture": self.learn_mixture,
        }

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "FreqSampler":
        return cls(
            log_scales=np.asarray(payload["log_scales"], dtype=np.float64),
            mixture_logits=np.asarray(payload["mixture_logits"], dtype=np.float64),
            learn_mixture=bool(payload.get("learn_mixture", False)),
        )


def sample_freqs(sampler: FreqSampler, q: int, rng: np.random.Generator) -> np.ndarray:
    return sampler.sample_freqs(q, rng)


def max_step(sampler: FreqSampler, grad_freqs: np.ndarray, learning_rate: float, normalize: bool = False) -> FreqSampler:
    return sampler.max_step(grad_freqs, learning_rate, normalize)


def spread_scale(features: np.ndarray, labels: np.ndarray) -> float:
    """
    Frequency scale that gives projections <t, z> unit spread within a class

    With t ~ s * N(0, I), Var(<t, z>) = s^2 * trace(Cov z); the within-class
    trace is averaged over classes. Degenerate (zero-spread) data gives 1.
    """
    features = np.asarray(features, dtype=np.float64)
    traces = [features[labels == c].var(axis=0).sum() for c in np.unique(labels)]
    spread = float(np.mean(traces)) if traces else 0.0
    if not np.isfinite(spread) or spread <= 0:
        return 1.0
    return float(1.0 / np.sqrt(spread))
