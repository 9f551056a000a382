"""Sparse amplitude estimation over the dictionary grid.

The coefficient vector is estimated by maximizing the data likelihood under
a Laplace-type improper prior whose scale parameter has a closed-form
optimum.  Concentrating the scale out of the objective leaves a penalized
least-squares problem that is solved by iteratively reweighted updates; each
update solves an N x N system (N = number of images) instead of a Kp x Kp
one, so the cost per iteration is independent of the number of hypotheses
being tested downstream.

The iteration produces a nondecreasing objective sequence; the per-iteration
values and their relative variation are recorded for convergence studies.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .dictionary import Dictionary
from .errors import ConfigurationError


@dataclass(frozen=True)
class CsConfig:
    """Knobs of the iterative estimator.

    max_iterations is a hard cap; the loop also exits once the relative
    coefficient change drops below stop_epsilon.  magnitude_floor keeps
    positive-but-underflowed weights alive (exact zeros stay zero, which is
    the documented absorbing state).  noise_variance is assumed known.
    """

    max_iterations: int = 6
    stop_epsilon: float = 1e-3
    magnitude_floor: float = 1e-12
    noise_variance: float = 1.0

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ConfigurationError("max_iterations must be >= 1")
        if self.stop_epsilon < 0:
            raise ConfigurationError("stop_epsilon must be >= 0")
        if not (self.magnitude_floor > 0 and self.noise_variance > 0):
            raise ConfigurationError(
                "magnitude_floor and noise_variance must be positive"
            )


@dataclass(frozen=True, eq=False)
class SparseEstimate:
    """Result of the iterative estimation for one pixel."""

    g_hat: np.ndarray
    iterations_used: int
    objective_trace: np.ndarray
    relative_variation_trace: np.ndarray
    alpha_hat: float


def initialize_g(x: np.ndarray, dictionary: Dictionary) -> np.ndarray:
    """Matched-filter initialization: entry k is |a(p_k)^H x|."""
    return np.abs(dictionary.conj_transpose @ x).astype(np.complex128)


def estimate_alpha(g: np.ndarray) -> float:
    """Closed-form optimum of the prior scale given the coefficients."""
    kp = g.shape[-1]
    s1 = float(np.sum(np.abs(g))) + 1.0
    return 4.0 * kp * kp / (s1 * s1)


def _weight_vector(g: np.ndarray, magnitude_floor: float) -> np.ndarray:
    """Diagonal of the reweighting matrix C (times Kp / (sum|g|+1)).

    Positive magnitudes are floored to keep the iteration numerically alive;
    exact zeros are preserved so that annihilated entries stay annihilated.
    """
    w = np.abs(g)
    return np.where(w > 0.0, np.maximum(w, magnitude_floor), 0.0)


def iterate_g(
    g_prev: np.ndarray,
    x: np.ndarray,
    dictionary: Dictionary,
    noise_variance: float = 1.0,
    magnitude_floor: float = 1e-12,
) -> np.ndarray:
    """One reweighted update of the coefficient vector.

    Computes C A^H (sigma^2 I + A C A^H)^{-1} x with
    C = ((sum|g|+1)/Kp) diag(|g_1|, ..., |g_Kp|); the N x N system is
    symmetric positive definite for any positive noise variance.
    """
    a = dictionary.matrix
    n, kp = a.shape
    if g_prev.shape[-1] != kp:
        raise ConfigurationError(
            f"coefficient length {g_prev.shape[-1]} != dictionary size {kp}"
        )
    scale = (float(np.sum(np.abs(g_prev))) + 1.0) / kp
    c = scale * _weight_vector(g_prev, magnitude_floor)
    m = (a * c) @ dictionary.conj_transpose
    m[np.diag_indices(n)] += noise_variance
    factor = cho_factor(m, lower=True)
    y = cho_solve(factor, x)
    return c * (dictionary.conj_transpose @ y)


def cs_objective(
    x: np.ndarray,
    g: np.ndarray,
    dictionary: Dictionary,
    noise_variance: float = 1.0,
) -> float:
    """Joint log-likelihood of (x, g) with the prior scale concentrated out.

    Decreases without bound as sum|g| grows, which is what drives the
    solution toward sparsity.
    """
    kp = dictionary.n_atoms
    n = dictionary.n_images
    resid = x - dictionary.matrix @ g
    s1 = float(np.sum(np.abs(g))) + 1.0
    fit = -float(np.real(np.vdot(resid, resid))) / noise_variance
    return (
        fit
        - n * np.log(np.pi)
        - n * np.log(noise_variance)
        + 2.0 * kp * np.log(2.0 * kp)
        - 2.0 * kp * np.log(s1)
        - kp * np.log(2.0 * np.pi)
        - 2.0 * kp
    )


def run_cs(
    x: np.ndarray, dictionary: Dictionary, config: CsConfig = CsConfig()
) -> SparseEstimate:
    """Run the full iterative estimation for one pixel.

    Stops at max_iterations or when the relative coefficient change drops
    below stop_epsilon, whichever comes first.  The objective trace starts
    at the initialization, so it has one more entry than iterations run.
    """
    x = np.asarray(x, dtype=np.complex128)
    sigma2 = config.noise_variance
    g = initialize_g(x, dictionary)
    objective = [cs_objective(x, g, dictionary, sigma2)]
    rel_changes = []
    iterations = 0
    for _ in range(config.max_iterations):
        g_new = iterate_g(g, x, dictionary, sigma2, config.magnitude_floor)
        iterations += 1
        objective.append(cs_objective(x, g_new, dictionary, sigma2))
        norm_new = float(np.linalg.norm(g_new))
        if norm_new > 0.0:
            rel = float(np.linalg.norm(g_new - g)) / norm_new
        else:
            rel = 0.0
        rel_changes.append(rel)
        g = g_new
        if rel < config.stop_epsilon:
            break
    objective = np.asarray(objective)
    delta = np.abs((objective[1:] - objective[:-1]) / objective[1:])
    return SparseEstimate(
        g_hat=g,
        iterations_used=iterations,
        objective_trace=objective,
        relative_variation_trace=delta,
        alpha_hat=estimate_alpha(g),
    )


def support_order(
    g: np.ndarray, dictionary: Dictionary, mode: str = "topk"
) -> np.ndarray:
    """Candidate column ranking used to build nested supports.

    ``topk`` ranks all entries by magnitude (ties to the lower index), so
    the top-k sets are nested by construction.  ``local`` ranks grid-local
    maxima of |g| first (again by magnitude), then the remaining entries;
    prefixes stay nested because the ranking is a fixed permutation.
    """
    mag = np.abs(np.asarray(g))
    if mode == "topk":
        return np.argsort(-mag, kind="stable")
    if mode != "local":
        raise ConfigurationError(f"unknown support mode {mode!r}")

    counts = dictionary.grid.axis_counts
    ns, nv = counts[0], counts[1]
    nl = counts[2] if len(counts) > 2 else 1
    cube = mag.reshape(nl, nv, ns)
    is_peak = np.ones_like(cube, dtype=bool)
    for axis in range(3):
        if cube.shape[axis] == 1:
            continue
        padded = np.moveaxis(cube, axis, 0)
        lo = np.concatenate([padded[:1] * 0 - np.inf, padded[:-1]], axis=0)
        hi = np.concatenate([padded[1:], padded[:1] * 0 - np.inf], axis=0)
        ok = (padded >= lo) & (padded >= hi)
        is_peak &= np.moveaxis(ok, 0, axis)
    peak_flat = is_peak.reshape(-1)
    order = np.argsort(-mag, kind="stable")
    peaks_first = np.concatenate([order[peak_flat[order]], order[~peak_flat[order]]])
    return peaks_first


def select_support(
    estimate,
    k: int,
    dictionary: Dictionary,
    mode: str = "topk",
) -> tuple[np.ndarray, np.ndarray]:
    """Indices and steering matrix of the k strongest estimated scatterers.

    Accepts a SparseEstimate or a raw coefficient vector.  Supports for
    successive k are nested.  k must stay below the number of images for the
    downstream projector to be well defined.
    """
    g = estimate.g_hat if isinstance(estimate, SparseEstimate) else estimate
    n = dictionary.n_images
    if not 1 <= k < n:
        raise ConfigurationError(f"support size {k} must satisfy 1 <= k < N={n}")
    if k > dictionary.n_atoms:
        raise ConfigurationError("support size exceeds dictionary size")
    order = support_order(g, dictionary, mode)
    indices = order[:k]
    return indices, dictionary.matrix[:, indices]
