"""
Empirical characteristic functions and the characteristic function discrepancy (CFD)

All sums over samples run in fixed-size chunks. In strict mode the chunks are
reduced sequentially in a fixed order, which makes results bit-exact across
machines. Non-strict mode splits the rows across a thread pool with one chunk
per worker; the chunking then depends on the worker count and results may
differ from strict mode at the 1e-13 level.
"""
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, List, Optional, Tuple

import numpy as np

from errors import ArgumentError, ShapeError

logger = logging.getLogger(__name__)

STRICT_CHUNK_ROWS = 2048


@dataclass(frozen=True)
class DiscrepancyConfig:
    """Amplitude/phase blend and square-root guard of the discrepancy"""

    alpha: float = 0.5
    epsilon_sqrt: float = 1e-12
    strict: bool = True

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ArgumentError(f"alpha must be in [0, 1], got {self.alpha}")
        if not self.epsilon_sqrt >= 0.0:
            raise ArgumentError(f"epsilon_sqrt must be >= 0, got {self.epsilon_sqrt}")
        if self.epsilon_sqrt == 0.0:
            logger.warning("epsilon_sqrt = 0: CFD gradients are undefined where the two CFs coincide")


@dataclass(frozen=True, eq=False)
class CFTable:
    """Per-frequency statistics of the empirical CF of one feature batch"""

    freqs: np.ndarray
    re: np.ndarray
    im: np.ndarray
    amplitude: np.ndarray
    phase: np.ndarray

    @classmethod
    def from_parts(cls, freqs: np.ndarray, re: np.ndarray, im: np.ndarray) -> "CFTable":
        phase = np.arctan2(im, re)
        # arctan2 returns -pi for (-0.0, negative); the table uses (-pi, pi]
        phase = np.where(phase <= -np.pi, np.pi, phase)
        return cls(freqs=freqs, re=re, im=im, amplitude=np.hypot(re, im), phase=phase)

    @property
    def q(self) -> int:
        return self.freqs.shape[0]

    def as_complex(self) -> np.ndarray:
        return self.re + 1j * self.im


@dataclass(frozen=True, eq=False)
class LossBreakdown:
    """The CFD estimate and its per-frequency / per-term parts"""

    total: float
    per_freq_chf: np.ndarray
    amp_term: float
    phase_term: float


def _check_pair(points: np.ndarray, freqs: np.ndarray, name: str = "features") -> Tuple[np.ndarray, np.ndarray]:
    points = np.asarray(points, dtype=np.float64)
    freqs = np.asarray(freqs, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] < 1:
        raise ShapeError(f"{name} must be an n x m matrix with n >= 1, got shape {points.shape}")
    if freqs.ndim != 2 or freqs.shape[0] < 1:
        raise ShapeError(f"freqs must be a q x m matrix with q >= 1, got shape {freqs.shape}")
    if points.shape[1] != freqs.shape[1]:
        raise ShapeError(
            f"{name} have {points.shape[1]} columns but freqs have {freqs.shape[1]}"
        )
    return points, freqs


def _cos_sin(points: np.ndarray, freqs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    proj = points @ freqs.T
    return np.cos(proj), np.sin(proj)


def _column_sums(cos: np.ndarray, sin: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    return cos.sum(axis=0), sin.sum(axis=0)


def _map_row_blocks(func: Callable[[np.ndarray], Any], points: np.ndarray, strict: bool) -> List[Any]:
    """Apply func to consecutive row blocks, in order; non-strict blocks run on a thread pool"""
    n = points.shape[0]
    size = STRICT_CHUNK_ROWS if strict else -(-n // (os.cpu_count() or 1))
    blocks = [points[start:start + size] for start in range(0, n, size)]
    if strict or len(blocks) == 1:
        return [func(block) for block in blocks]
    with ThreadPoolExecutor(max_workers=len(blocks)) as pool:
        return list(pool.map(func, blocks))


def _accumulate(partials: List[Tuple[np.ndarray, np.ndarray]], q: int) -> Tuple[np.ndarray, np.ndarray]:
    cos_sum = np.zeros(q)
    sin_sum = np.zeros(q)
    for c, s in partials:
        cos_sum += c
        sin_sum += s
    return cos_sum, sin_sum


def _cos_sin_sums(points: np.ndarray, freqs: np.ndarray, strict: bool) -> Tuple[np.ndarray, np.ndarray]:
    partials = _map_row_blocks(lambda block: _column_sums(*_cos_sin(block, freqs)), points, strict)
    return _accumulate(partials, freqs.shape[0])


def _cf_from_trig(freqs: np.ndarray, trig: List[Tuple[np.ndarray, np.ndarray]], n: int) -> "CFTable":
    cos_sum, sin_sum = _accumulate([_column_sums(c, s) for c, s in trig], freqs.shape[0])
    return CFTable.from_parts(freqs, cos_sum / n, sin_sum / n)


def empirical_cf(features: np.ndarray, freqs: np.ndarray, strict: bool = True) -> CFTable:
    """
    Empirical characteristic function of a feature batch at the given frequencies

    Args:
        features: n x m batch, one sample per row
        freqs: q x m matrix, one frequency argument per row
        strict: Sequential, machine-independent reduction order

    Returns:
        CFTable with re/im the batch means of cos/sin <t_k, z_i>
    """
    features, freqs = _check_pair(features, freqs)
    cos_sum, sin_sum = _cos_sin_sums(features, freqs, strict)
    n = features.shape[0]
    return CFTable.from_parts(freqs, cos_sum / n, sin_sum / n)


def _check_tables(cf_p: CFTable, cf_q: CFTable):
    if cf_p.freqs.shape != cf_q.freqs.shape or not np.array_equal(cf_p.freqs, cf_q.freqs):
        raise ArgumentError("CF tables were built from different frequency matrices")


def _amp_phase_terms(cf_p: CFTable, cf_q: CFTable, alpha: float) -> Tuple[np.ndarray, np.ndarray]:
    amp = alpha * (cf_p.amplitude - cf_q.amplitude) ** 2
    # abs() and the grouped product keep both terms exactly symmetric in (p, q)
    cross = 2.0 * (cf_p.amplitude * cf_q.amplitude)
    phase = (1.0 - alpha) * cross * (1.0 - np.cos(np.abs(cf_p.phase - cf_q.phase)))
    return amp, phase


def chf_blended(cf_p: CFTable, cf_q: CFTable, config: DiscrepancyConfig) -> np.ndarray:
    """
    Per-frequency blended integrand

    alpha * (|Pp| - |Pq|)^2 + (1 - alpha) * 2|Pp||Pq| * (1 - cos(a_p - a_q))
    """
    _check_tables(cf_p, cf_q)
    amp, phase = _amp_phase_terms(cf_p, cf_q, config.alpha)
    return amp + phase


def cfd(cf_p: CFTable, cf_q: CFTable, config: DiscrepancyConfig) -> LossBreakdown:
    """
    Monte-Carlo CFD: the mean over sampled frequencies of sqrt(Chf + epsilon_sqrt)

    Frequencies are drawn from the sampling distribution itself, so every
    frequency carries equal weight.
    """
    _check_tables(cf_p, cf_q)
    amp, phase = _amp_phase_terms(cf_p, cf_q, config.alpha)
    chf = amp + phase
    total = float(np.mean(np.sqrt(chf + config.epsilon_sqrt)))
    return LossBreakdown(total=total, per_freq_chf=chf, amp_term=float(amp.mean()), phase_term=float(phase.mean()))


def unblended_cfd(features_p: np.ndarray, features_q: np.ndarray, freqs: np.ndarray,
                  epsilon_sqrt: float = 1e-12, strict: bool = True) -> float:
    """CFD in its metric form (alpha = 0.5, i.e. half the complex modulus gap)"""
    config = DiscrepancyConfig(alpha=0.5, epsilon_sqrt=epsilon_sqrt, strict=strict)
    return cfd(empirical_cf(features_p, freqs, strict), empirical_cf(features_q, freqs, strict), config).total


def _safe_ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    # d|z|/dz is undefined at z = 0; the subgradient 0 is used there
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


def _chf_partials(cf_p: CFTable, cf_q: CFTable, alpha: float):
    """
    Partial derivatives of Chf w.r.t. (re_p, im_p, re_q, im_q)

    Uses Chf = alpha (|p|^2 + |q|^2) + (2 - 4 alpha) |p||q| - 2 (1 - alpha) <p, q>,
    where <p, q> = re_p re_q + im_p im_q = |p||q| cos(a_p - a_q).
    """
    ap, aq = cf_p.amplitude, cf_q.amplitude
    cross = 2.0 - 4.0 * alpha
    d_re_p = 2 * alpha * cf_p.re + cross * aq * _safe_ratio(cf_p.re, ap) - 2 * (1 - alpha) * cf_q.re
    d_im_p = 2 * alpha * cf_p.im + cross * aq * _safe_ratio(cf_p.im, ap) - 2 * (1 - alpha) * cf_q.im
    d_re_q = 2 * alpha * cf_q.re + cross * ap * _safe_ratio(cf_q.re, aq) - 2 * (1 - alpha) * cf_p.re
    d_im_q = 2 * alpha * cf_q.im + cross * ap * _safe_ratio(cf_q.im, aq) - 2 * (1 - alpha) * cf_p.im
    return d_re_p, d_im_p, d_re_q, d_im_q


def cfd_value_and_grad(
    real_features: np.ndarray,
    synth_features: np.ndarray,
    freqs: np.ndarray,
    config: DiscrepancyConfig,
    freq_grad: bool = True,
) -> Tuple[LossBreakdown, np.ndarray, Optional[np.ndarray]]:
    """
    CFD between a real and a synthetic feature batch, with analytic gradients

    The cos/sin tables of each batch are computed once and shared by the
    value and the gradients.

    Args:
        real_features: n x m real batch (treated as constant)
        synth_features: n~ x m synthetic batch
        freqs: q x m frequency arguments
        config: Blend and guard
        freq_grad: Also return the frequency gradient; without it the real
            batch only contributes its CF sums

    Returns:
        (loss, grad_synth n~ x m, grad_freqs q x m or None)
    """
    real, freqs = _check_pair(real_features, freqs, "real features")
    synth, _ = _check_pair(synth_features, freqs, "synthetic features")

    synth_trig = _map_row_blocks(lambda block: _cos_sin(block, freqs), synth, config.strict)
    cf_q = _cf_from_trig(freqs, synth_trig, synth.shape[0])
    if freq_grad:
        real_trig = _map_row_blocks(lambda block: _cos_sin(block, freqs), real, config.strict)
        cf_p = _cf_from_trig(freqs, real_trig, real.shape[0])
    else:
        cf_p = empirical_cf(real, freqs, config.strict)
    loss = cfd(cf_p, cf_q, config)

    with np.errstate(divide="ignore", invalid="ignore"):
        scale = 1.0 / (2.0 * freqs.shape[0] * np.sqrt(loss.per_freq_chf + config.epsilon_sqrt))
        d_re_p, d_im_p, d_re_q, d_im_q = _chf_partials(cf_p, cf_q, config.alpha)

        # Row weights of d total / d z_i: -sin * dRe + cos * dIm, averaged over the batch
        w_q = np.concatenate(_row_weights(synth_trig, scale * d_re_q, scale * d_im_q, synth.shape[0]))
        grad_synth = w_q @ freqs
        if not freq_grad:
            return loss, grad_synth, None

        grad_freqs = w_q.T @ synth
        real_weights = _row_weights(real_trig, scale * d_re_p, scale * d_im_p, real.shape[0])
        start = 0
        for w_p in real_weights:
            grad_freqs += w_p.T @ real[start:start + w_p.shape[0]]
            start += w_p.shape[0]
    return loss, grad_synth, grad_freqs


def _row_weights(trig: List[Tuple[np.ndarray, np.ndarray]], d_re: np.ndarray, d_im: np.ndarray, n: int) -> List[np.ndarray]:
    return [(c * d_im - s * d_re) / n for c, s in trig]


def cfd_backward(
    real_features: np.ndarray,
    synth_features: np.ndarray,
    freqs: np.ndarray,
    config: DiscrepancyConfig,
) -> Tuple[np.ndarray, np.ndarray]:
    """Gradients of the CFD total w.r.t. the synthetic features and the frequencies"""
    _, grad_synth, grad_freqs = cfd_value_and_grad(real_features, synth_features, freqs, config)
    return grad_synth, grad_freqs
