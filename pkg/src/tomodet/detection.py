"""Detection statistics and decision rules.

Two detectors over the same hypothesis set (0..Kmax scatterers per pixel):

* the penalized-likelihood detector, which scores every candidate order
  with N log(x^H x / residual_k) minus a complexity penalty 3 k (1 + rho)
  and compares the best score against a single threshold; and
* the sequential support-search baseline, which at each stage compares the
  exhaustively minimized residual ratio against a per-stage threshold.

Both statistics depend on the data only through residual ratios, so scaling
a pixel by any nonzero constant leaves them unchanged (given the supports).
The penalized detector additionally normalizes the pixel power before the
support estimation step, which makes its full decision path exactly
invariant to the unknown noise level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dictionary import Dictionary, grid_lookup
from .errors import ConfigurationError
from .signal_model import ScattererParams
from .sparse_estimation import CsConfig, run_cs, support_order

# residuals below this fraction of the data power count as a perfect fit
PERFECT_FIT_RTOL = 1e-12

# pair enumeration guard for the exhaustive baseline
DEFAULT_PAIR_CAP = 2_000_000


@dataclass(frozen=True)
class DetectorConfig:
    """Configuration of the penalized-likelihood detector."""

    kmax: int = 2
    rho: float = 3.0
    threshold: float | None = None
    cs: CsConfig = field(default_factory=CsConfig)
    support_mode: str = "topk"
    normalize_input: bool = True

    def __post_init__(self):
        if self.kmax < 1:
            raise ConfigurationError("kmax must be >= 1")
        if not self.rho > 1.0:
            raise ConfigurationError(f"rho must exceed 1, got {self.rho}")


@dataclass(frozen=True, eq=False)
class DetectionOutcome:
    """Decision for one pixel: accepted order plus per-scatterer estimates."""

    k_hat: int
    statistic: float
    params: tuple[ScattererParams, ...]
    amplitudes: np.ndarray
    support: np.ndarray
    noise_estimate: float


def penalty(k: int, rho: float) -> float:
    """Model-complexity penalty: 3 k (1 + rho); zero for the null order."""
    if k < 0:
        raise ConfigurationError("k must be >= 0")
    if not rho > 1.0:
        raise ConfigurationError("rho must exceed 1")
    return 3.0 * k * (1.0 + rho)


def projection_residual(x: np.ndarray, a_k: np.ndarray | None) -> float:
    """Energy of x outside the span of the support columns.

    Computed as the least-squares residual, never by forming the projector;
    rank-deficient supports fall back to the minimum-norm solution.  An
    empty support returns the full power.
    """
    x = np.asarray(x, dtype=np.complex128)
    power = float(np.real(np.vdot(x, x)))
    if a_k is None or a_k.size == 0:
        return power
    a_k = np.atleast_2d(a_k)
    if a_k.ndim == 1:
        a_k = a_k[:, None]
    n, k = a_k.shape
    if k >= n:
        raise ConfigurationError(f"support of size {k} >= N={n}: projector undefined")
    beta, *_ = np.linalg.lstsq(a_k, x, rcond=None)
    resid = x - a_k @ beta
    return max(float(np.real(np.vdot(resid, resid))), 0.0)


def backscatter_estimate(x: np.ndarray, a_k: np.ndarray) -> np.ndarray:
    """Least-squares complex amplitudes of the supported scatterers."""
    a_k = np.atleast_2d(a_k)
    if a_k.ndim == 1:
        a_k = a_k[:, None]
    beta, *_ = np.linalg.lstsq(a_k, np.asarray(x, dtype=np.complex128), rcond=None)
    return beta


def noise_variance_estimate(x: np.ndarray, a_k: np.ndarray | None) -> float:
    """Maximum-likelihood noise variance given the support: residual / N."""
    return projection_residual(x, a_k) / np.asarray(x).shape[-1]


def glrt_log_terms(x: np.ndarray, supports) -> np.ndarray:
    """Unpenalized terms N log(x^H x / residual_k), one per candidate order.

    Perfect fits map to +inf.  These terms are what threshold calibration
    and penalty tuning reuse across penalty values.
    """
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[-1]
    power = float(np.real(np.vdot(x, x)))
    terms = np.empty(len(supports))
    for i, a_k in enumerate(supports):
        r = projection_residual(x, a_k)
        if r <= power * PERFECT_FIT_RTOL:
            terms[i] = np.inf
        else:
            terms[i] = n * math.log(power / r)
    return terms


def klic_statistic(x: np.ndarray, supports, rho: float) -> tuple[int, float]:
    """Best penalized score over the candidate orders.

    Returns (k_star, T) where T is the maximum of the per-order scores and
    k_star the maximizing order (ties resolved toward fewer scatterers).
    A zero residual yields T = +inf with k_star the smallest such order.
    """
    terms = glrt_log_terms(x, supports)
    ks = np.arange(1, len(supports) + 1)
    scores = terms - 3.0 * ks * (1.0 + rho)
    best = int(np.argmax(np.isinf(terms))) if np.any(np.isinf(terms)) else int(
        np.argmax(scores)
    )
    if np.isinf(terms[best]):
        return best + 1, np.inf
    return best + 1, float(scores[best])


def klic_detect(
    x: np.ndarray, dictionary: Dictionary, config: DetectorConfig
) -> DetectionOutcome:
    """Full per-pixel decision of the penalized-likelihood detector.

    One sparse-estimation run provides the nested supports for every
    candidate order; the best penalized score is then compared against the
    calibrated threshold.  A zero pixel accepts the null hypothesis.
    """
    if config.threshold is None:
        raise ConfigurationError("detector threshold not calibrated")
    if config.kmax >= dictionary.n_images:
        raise ConfigurationError("kmax must be smaller than the number of images")
    x = np.asarray(x, dtype=np.complex128)
    power = float(np.real(np.vdot(x, x)))
    if power == 0.0:
        return DetectionOutcome(
            k_hat=0,
            statistic=-np.inf,
            params=(),
            amplitudes=np.zeros(0, dtype=np.complex128),
            support=np.zeros(0, dtype=int),
            noise_estimate=0.0,
        )
    x_est = x
    if config.normalize_input:
        scale = math.sqrt(dictionary.n_images * config.cs.noise_variance / power)
        x_est = x * scale
    estimate = run_cs(x_est, dictionary, config.cs)
    order = support_order(estimate.g_hat, dictionary, config.support_mode)
    top = order[: config.kmax]
    supports = [dictionary.matrix[:, top[:k]] for k in range(1, config.kmax + 1)]
    k_star, statistic = klic_statistic(x, supports, config.rho)
    k_hat = k_star if statistic > config.threshold else 0
    return _build_outcome(x, dictionary, top, k_hat, statistic)


def _build_outcome(x, dictionary, ranked_support, k_hat, statistic):
    if k_hat > 0:
        support = np.asarray(ranked_support[:k_hat])
        a_k = dictionary.matrix[:, support]
        amplitudes = backscatter_estimate(x, a_k)
        params = tuple(grid_lookup(dictionary, j) for j in support)
        noise = noise_variance_estimate(x, a_k)
    else:
        support = np.zeros(0, dtype=int)
        amplitudes = np.zeros(0, dtype=np.complex128)
        params = ()
        noise = float(np.real(np.vdot(x, x))) / dictionary.n_images
    return DetectionOutcome(
        k_hat=int(k_hat),
        statistic=float(statistic),
        params=params,
        amplitudes=amplitudes,
        support=support,
        noise_estimate=noise,
    )


def _min_residual_single(x: np.ndarray, dictionary: Dictionary):
    """Minimum residual over single-column supports (columns are unit-norm)."""
    corr = dictionary.conj_transpose @ x
    proj = np.abs(corr) ** 2
    power = float(np.real(np.vdot(x, x)))
    best = int(np.argmax(proj))
    return max(power - float(proj[best]), 0.0), best, corr, power


def _min_residual_pair(x: np.ndarray, dictionary: Dictionary, corr, power):
    """Exhaustive minimum residual over all column pairs via the cached Gram."""
    gram = dictionary.gram
    kp = dictionary.n_atoms
    p1 = np.abs(corr) ** 2
    cross = gram * (corr.conj()[:, None] * corr[None, :])
    denom = 1.0 - np.abs(gram) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        q = (p1[:, None] + p1[None, :] - 2.0 * cross.real) / denom
    # near-collinear pairs degenerate to the better single column
    q = np.where(denom > 1e-12, q, np.maximum(p1[:, None], p1[None, :]))
    iu, ju = np.triu_indices(kp, k=1)
    flat = q[iu, ju]
    best = int(np.argmax(flat))
    residual = max(power - float(flat[best]), 0.0)
    return residual, (int(iu[best]), int(ju[best]))


def supglrt_statistics(
    x: np.ndarray, dictionary: Dictionary, kmax: int, pair_cap: int = DEFAULT_PAIR_CAP
):
    """Stage statistics of the sequential baseline, with minimizing supports.

    Stage k compares the exhaustively minimized residual over (k-1)-column
    supports to the minimized residual over kmax-column supports.  Returns
    (lambdas, stage_supports, min_residuals) where min_residuals[k] is the
    minimum residual over k-column supports for k = 0..kmax.
    """
    if kmax not in (1, 2):
        raise ConfigurationError(
            "the sequential baseline is limited to kmax <= 2 "
            "(exhaustive search cost grows combinatorially)"
        )
    kp = dictionary.n_atoms
    if kmax == 2 and kp * (kp - 1) // 2 > pair_cap:
        raise ConfigurationError(
            f"grid with {kp} columns yields {kp * (kp - 1) // 2} pairs, above "
            f"the cap of {pair_cap}; shrink the grid or raise pair_cap"
        )
    x = np.asarray(x, dtype=np.complex128)
    r1, best_single, corr, power = _min_residual_single(x, dictionary)
    residuals = [power, r1]
    supports = [np.zeros(0, dtype=int), np.array([best_single])]
    if kmax == 2:
        r2, best_pair = _min_residual_pair(x, dictionary, corr, power)
        residuals.append(r2)
        supports.append(np.array(best_pair))
    denom = residuals[kmax]
    lambdas = np.empty(kmax)
    for k in range(1, kmax + 1):
        num = residuals[k - 1]
        if denom <= power * PERFECT_FIT_RTOL:
            lambdas[k - 1] = np.inf if num > denom else 1.0
        else:
            lambdas[k - 1] = num / denom
    return lambdas, supports, np.asarray(residuals)


def supglrt_detect(
    x: np.ndarray,
    dictionary: Dictionary,
    thresholds,
    kmax: int = 2,
    pair_cap: int = DEFAULT_PAIR_CAP,
) -> DetectionOutcome:
    """Sequential multistage decision of the support-search baseline.

    At stage k the detector stops and accepts k-1 scatterers when the stage
    statistic falls below its threshold; surviving every stage accepts kmax.
    """
    thresholds = np.atleast_1d(np.asarray(thresholds, dtype=float))
    if thresholds.size != kmax:
        raise ConfigurationError(
            f"need {kmax} stage thresholds, got {thresholds.size}"
        )
    x = np.asarray(x, dtype=np.complex128)
    if float(np.real(np.vdot(x, x))) == 0.0:
        return DetectionOutcome(
            k_hat=0,
            statistic=1.0,
            params=(),
            amplitudes=np.zeros(0, dtype=np.complex128),
            support=np.zeros(0, dtype=int),
            noise_estimate=0.0,
        )
    lambdas, supports, _ = supglrt_statistics(x, dictionary, kmax, pair_cap)
    k_hat = kmax
    statistic = lambdas[-1]
    for k in range(1, kmax + 1):
        if lambdas[k - 1] < thresholds[k - 1]:
            k_hat = k - 1
            statistic = lambdas[k - 1]
            break
    ranked = supports[k_hat] if k_hat > 0 else np.zeros(0, dtype=int)
    return _build_outcome(x, dictionary, ranked, k_hat, statistic)
