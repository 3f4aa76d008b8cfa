"""
Numerical verification suites: metric axioms, amplitude/phase decomposition,
gradient checks, Levy convergence and the CFD/MMD correspondence
"""
import logging
from dataclasses import dataclass, replace
from typing import Callable, Dict, List, Sequence

import numpy as np
import pandas as pd
from scipy.stats import linregress

from baselines import KernelSpec, cf_mmd_estimate, mmd_squared
from charfn import CFTable, DiscrepancyConfig, cfd_value_and_grad, chf_blended, empirical_cf
from errors import ArgumentError
from evaluation import metric_axiom_suite
from features import FeatureMap
from freq_sampler import FreqSampler

logger = logging.getLogger(__name__)

SUITES = ("axioms", "decomposition", "gradients", "levy", "correspondence")
GRADIENT_STEP = 1e-5
GRADIENT_TOLERANCE = 1e-5
KINK_MARGIN = 1e-3


@dataclass(frozen=True)
class SuiteResult:
    """Outcome of one suite; metric is the worst observed error"""

    name: str
    passed: bool
    metric: float
    detail: str


def summary_frame(results: Sequence[SuiteResult]) -> pd.DataFrame:
    return pd.DataFrame(
        [(r.name, "pass" if r.passed else "fail", r.metric, r.detail) for r in results],
        columns=["suite", "status", "metric", "detail"],
    )


def check_axioms(seed: int = 0, trials: int = 1000, epsilon_sqrt: float = 1e-12) -> SuiteResult:
    report = metric_axiom_suite(trials=trials, seed=seed, epsilon_sqrt=epsilon_sqrt)
    worst = max(report.worst_negativity, report.worst_asymmetry, report.worst_triangle)
    detail = f"{trials} trials, worst triangle slack {report.worst_triangle:.2e}"
    if report.failures:
        detail += f"; first failure: {report.failures[0]}"
    return SuiteResult("axioms", report.passed, worst, detail)


def check_decomposition(seed: int = 0, instances: int = 10000, tolerance: float = 1e-10) -> SuiteResult:
    """Amplitude plus phase terms against the squared complex modulus of the CF gap"""
    rng = np.random.default_rng(seed)
    radius_p, radius_q = rng.uniform(0.0, 1.0, (2, instances))
    angle_p, angle_q = rng.uniform(-np.pi, np.pi, (2, instances))
    z_p = radius_p * np.exp(1j * angle_p)
    z_q = radius_q * np.exp(1j * angle_q)
    freqs = np.zeros((instances, 1))
    cf_p = CFTable.from_parts(freqs, z_p.real, z_p.imag)
    cf_q = CFTable.from_parts(freqs, z_q.real, z_q.imag)

    # alpha = 0.5 halves both terms
    decomposed = 2.0 * chf_blended(cf_p, cf_q, DiscrepancyConfig(alpha=0.5))
    error = float(np.max(np.abs(decomposed - np.abs(z_p - z_q) ** 2)))
    return SuiteResult("decomposition", error <= tolerance, error, f"{instances} instances, max abs error {error:.2e}")


def _central_difference(func: Callable[[np.ndarray], float], point: np.ndarray, step: float) -> np.ndarray:
    grad = np.zeros_like(point)
    for idx in np.ndindex(point.shape):
        shifted = point.copy()
        shifted[idx] += step
        upper = func(shifted)
        shifted[idx] -= 2 * step
        grad[idx] = (upper - func(shifted)) / (2 * step)
    return grad


def _relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)), 1e-6)
    return float(np.max(np.abs(analytic - numeric)) / scale)


def _near_kink(fmap: FeatureMap, *inputs: np.ndarray) -> bool:
    layers = fmap.unpack()
    return any(np.min(np.abs(x @ layers["W1"] + layers["b1"])) < KINK_MARGIN for x in inputs)


def _gradient_instance(rng: np.random.Generator, config: DiscrepancyConfig) -> float:
    while True:
        n, n_synth = rng.integers(1, 6, size=2)
        q = int(rng.integers(1, 9))
        in_dim, out_dim = rng.integers(1, 5, size=2)
        fmap = FeatureMap.create("mlp", int(in_dim), rng, out_dim=int(out_dim), hidden=8)
        fmap = replace(fmap, final_checkpoint=fmap.init_checkpoint + 0.3 * rng.standard_normal(fmap.n_params))
        fmap = fmap.blend(rng.uniform())
        real = rng.standard_normal((n, in_dim))
        synth = rng.standard_normal((n_synth, in_dim))
        if not _near_kink(fmap, real, synth):
            break

    n_components = int(rng.integers(1, 3))
    sampler = FreqSampler(log_scales=rng.uniform(-0.5, 0.5, (n_components, out_dim)),
                          mixture_logits=np.zeros(n_components))
    sampler.sample_freqs(q, rng)
    draw = sampler.last_draw
    real_feat = fmap.forward(real)

    def loss_at(synth_inputs: np.ndarray, log_scales: np.ndarray) -> float:
        freqs = np.exp(log_scales[draw.components]) * draw.noise
        return cfd_value_and_grad(real_feat, fmap.forward(synth_inputs), freqs, config)[0].total

    _, grad_feat, grad_freqs = cfd_value_and_grad(
        real_feat, fmap.forward(synth), sampler.reparameterize(draw), config
    )
    analytic_synth = fmap.vjp(synth, grad_feat)
    analytic_scales = sampler.log_scale_grad(grad_freqs)
    numeric_synth = _central_difference(lambda s: loss_at(s, sampler.log_scales), synth, GRADIENT_STEP)
    numeric_scales = _central_difference(lambda ls: loss_at(synth, ls), sampler.log_scales, GRADIENT_STEP)
    return max(_relative_error(analytic_synth, numeric_synth), _relative_error(analytic_scales, numeric_scales))


def _coinciding_instance(rng: np.random.Generator, config: DiscrepancyConfig) -> float:
    """Synthetic equal to real: the gradient must be finite and exactly zero"""
    points = rng.standard_normal((4, 3))
    freqs = rng.standard_normal((8, 3))
    _, grad_synth, grad_freqs = cfd_value_and_grad(points, points.copy(), freqs, config)
    if not (np.all(np.isfinite(grad_synth)) and np.all(np.isfinite(grad_freqs))):
        return float("inf")
    return float(max(np.max(np.abs(grad_synth)), np.max(np.abs(grad_freqs))))


def check_gradients(seed: int = 0, instances: int = 100, epsilon_sqrt: float = 1e-12) -> SuiteResult:
    """
    Analytic gradients w.r.t. synthetic inputs (through an mlp) and sampler log-scales
    against central finite differences, plus one coinciding-data instance

    Instances with an mlp pre-activation within KINK_MARGIN of zero are redrawn.
    With epsilon_sqrt = 0 the coinciding instance yields NaN and the suite fails.
    """
    rng = np.random.default_rng(seed)
    config = DiscrepancyConfig(alpha=0.5, epsilon_sqrt=epsilon_sqrt)
    with np.errstate(divide="ignore", invalid="ignore"):
        errors = [_gradient_instance(rng, config) for _ in range(instances)]
        coinciding = _coinciding_instance(rng, config)
    worst = float(np.nanmax(errors)) if not np.all(np.isnan(errors)) else float("nan")
    passed = bool(np.all(np.array(errors) < GRADIENT_TOLERANCE)) and coinciding == 0.0
    detail = f"{instances} instances, worst relative error {worst:.2e}; coinciding-data gradient {coinciding:.2e}"
    return SuiteResult("gradients", passed, worst, detail)


def check_levy(
    seed: int = 0,
    sizes: Sequence[int] = (100, 1000, 10000, 100000),
    replicates: int = 20,
    dim: int = 2,
    grid_points: int = 32,
    tolerance: float = 0.15,
) -> SuiteResult:
    """
    Empirical CF of standard normal data converges to exp(-|t|^2 / 2) at rate N^-1/2

    The error at each N is the max-abs gap over the grid, averaged over replicates.
    """
    rng = np.random.default_rng(seed)
    grid = np.random.default_rng(0).standard_normal((grid_points, dim))
    target = np.exp(-0.5 * np.sum(grid ** 2, axis=1))
    errors = []
    for n in sizes:
        sup = [cf_sup_error(rng.standard_normal((n, dim)), grid, target) for _ in range(replicates)]
        errors.append(float(np.mean(sup)))
    slope = float(linregress(np.log(sizes), np.log(errors)).slope)
    passed = abs(slope + 0.5) <= tolerance
    return SuiteResult("levy", passed, slope, f"log-log max-abs error slope {slope:.3f} over N = {list(sizes)}")


def cf_sup_error(sample: np.ndarray, grid: np.ndarray, target: np.ndarray) -> float:
    """Largest modulus of the gap between the empirical CF of sample and target on the grid"""
    ecf = empirical_cf(sample, grid).as_complex()
    return float(np.max(np.abs(ecf - target)))


def check_correspondence(seed: int = 0, pairs: int = 20, q: int = 10000, sigmas: float = 3.0) -> SuiteResult:
    """
    A single-component sampler at scale 1/h against the gaussian-kernel MMD of bandwidth h

    Every pair must land within `sigmas` Monte-Carlo standard errors.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    misses = 0
    for _ in range(pairs):
        dim = int(rng.integers(1, 4))
        bandwidth = rng.uniform(0.5, 2.0)
        x = rng.standard_normal((int(rng.integers(2, 51)), dim))
        y = rng.normal(rng.uniform(-1.0, 1.0), rng.uniform(0.5, 1.5), (int(rng.integers(2, 51)), dim))
        sampler = FreqSampler.create(dim, q, n_components=1, init_scale=1.0 / bandwidth)
        mean, stderr = cf_mmd_estimate(x, y, sampler.sample_freqs(q, rng))
        exact = mmd_squared(x, y, KernelSpec("gaussian", bandwidth))
        z = abs(mean - exact) / max(stderr, 1e-15)
        worst = max(worst, z)
        misses += z > sigmas
    return SuiteResult(
        "correspondence", misses == 0, worst,
        f"{pairs - misses}/{pairs} pairs within {sigmas:g} standard errors (worst {worst:.2f})",
    )


def run_suites(names: Sequence[str], seed: int = 0, epsilon_sqrt: float = 1e-12) -> List[SuiteResult]:
    """Run the named suites in order"""
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise ArgumentError(f"unknown verify suites {unknown}; choose from {SUITES}")
    runners: Dict[str, Callable[[], SuiteResult]] = {
        "axioms": lambda: check_axioms(seed, epsilon_sqrt=epsilon_sqrt),
        "decomposition": lambda: check_decomposition(seed),
        "gradients": lambda: check_gradients(seed, epsilon_sqrt=epsilon_sqrt),
        "levy": lambda: check_levy(seed),
        "correspondence": lambda: check_correspondence(seed),
    }
    results = []
    for name in names:
        result = runners[name]()
        logger.info("%s: %s (%s)", name, "pass" if result.passed else "FAIL", result.detail)
        results.append(result)
    return results
