"""Randomized-smoothing estimators for nonsmooth stochastic objectives.

The smoothed surrogate of f at radius delta averages f over a uniform ball
perturbation.  Its gradient admits an unbiased two-point estimator from
function values only, which everything in this module builds on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .oracle import RandomStream, StochasticOracle, sample_ball, sample_sphere_batch

# E||g||^2 <= SECOND_MOMENT_COEF * d * L^2 for the two-point sphere estimator.
SECOND_MOMENT_COEF = 16.0 * math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class DerivedConstants:
    """Smoothing constants derived from (d, L, delta, Delta, c).

    smooth_lipschitz   gradient Lipschitz constant of the surrogate, c*sqrt(d)*L/delta
    ms_lipschitz       mean-squared Lipschitz constant of the estimator, d*L/delta
    sigma_sq           second-moment bound of the estimator, 16*sqrt(2*pi)*d*L^2
    gap_bound          initial surrogate gap bound, Delta + L*delta
    """

    dim: int
    lipschitz: float
    delta: float
    smooth_lipschitz: float
    ms_lipschitz: float
    sigma_sq: float
    gap_bound: float
    smoothness_constant: float


def derived_constants(d: int, L: float, delta: float, Delta: float = 0.0,
                      c: float = 1.0) -> DerivedConstants:
    if d < 1:
        raise ParameterError(f"d must be >= 1, got {d}")
    if L <= 0.0:
        raise ParameterError(f"L must be positive, got {L}")
    if delta <= 0.0:
        raise ParameterError(f"delta must be positive, got {delta}")
    if Delta < 0.0:
        raise ParameterError(f"Delta must be nonnegative, got {Delta}")
    if c <= 0.0:
        raise ParameterError(f"c must be positive, got {c}")
    return DerivedConstants(
        dim=d,
        lipschitz=L,
        delta=delta,
        smooth_lipschitz=c * math.sqrt(d) * L / delta,
        ms_lipschitz=d * L / delta,
        sigma_sq=SECOND_MOMENT_COEF * d * L * L,
        gap_bound=Delta + L * delta,
        smoothness_constant=c,
    )


@dataclass(frozen=True)
class SampleSet:
    """A mini-batch of i.i.d. (direction, index) pairs.

    ``directions`` is a (b, d) matrix of unit rows; ``indices`` the matching
    opaque index samples.  Reductions over the batch always run in ascending
    row order, so results are reproducible.
    """

    directions: np.ndarray
    indices: np.ndarray

    def __len__(self) -> int:
        return self.directions.shape[0]

    @property
    def pairs(self):
        return list(zip(self.directions, self.indices))

    @classmethod
    def draw(cls, oracle: StochasticOracle, b: int, rng: RandomStream) -> "SampleSet":
        """Draw b pairs from one stream: directions first, then indices."""
        if b < 1:
            raise ParameterError(f"batch size must be >= 1, got {b}")
        directions = sample_sphere_batch(rng, b, oracle.dim)
        indices = oracle.sample_indices(rng, b)
        return cls(directions, indices)


def zo_gradient(oracle: StochasticOracle, x: np.ndarray, w: np.ndarray,
                xi: int, delta: float) -> np.ndarray:
    """Two-point gradient estimate (d/(2 delta))(F(x+delta w) - F(x-delta w)) w.

    Costs exactly two oracle evaluations sharing the same index sample.
    """
    d = oracle.dim
    fp = oracle.eval(x + delta * w, xi)
    fm = oracle.eval(x - delta * w, xi)
    return (d / (2.0 * delta)) * (fp - fm) * w


def _batch_coefficients(oracle, x, S, delta):
    # Per-pair scalars (d/(2 delta))(F(x+delta w_i) - F(x-delta w_i)); the
    # perturbed points are materialized in one shot, evaluations stay scalar.
    W = S.directions
    x_plus = x + delta * W
    x_minus = x - delta * W
    fp = np.empty(len(S))
    fm = np.empty(len(S))
    for i in range(len(S)):
        xi = S.indices[i]
        fp[i] = oracle.eval(x_plus[i], xi)
        fm[i] = oracle.eval(x_minus[i], xi)
    return (oracle.dim / (2.0 * delta)) * (fp - fm)


def minibatch_gradient(oracle: StochasticOracle, x: np.ndarray, S: SampleSet,
                       delta: float) -> np.ndarray:
    """Mean of the two-point estimator over a sample set; 2*b evaluations."""
    coeffs = _batch_coefficients(oracle, x, S, delta)
    return (coeffs[:, None] * S.directions).sum(axis=0) / len(S)


def recursive_update(v_prev: np.ndarray, oracle: StochasticOracle,
                     x_curr: np.ndarray, x_prev: np.ndarray, S: SampleSet,
                     delta: float) -> np.ndarray:
    """Variance-reduced update v_prev + g(x_curr; S) - g(x_prev; S).

    Both batch terms reuse the one materialized sample set, so the update is
    an exact identity on v_prev whenever x_curr == x_prev.  Costs 4*b
    evaluations.
    """
    g_curr = minibatch_gradient(oracle, x_curr, S, delta)
    g_prev = minibatch_gradient(oracle, x_prev, S, delta)
    return v_prev + (g_curr - g_prev)


def estimate_smoothed_value(oracle: StochasticOracle, x: np.ndarray, delta: float,
                            n_samples: int, rng: RandomStream) -> tuple[float, float]:
    """Monte-Carlo estimate of the smoothed value, with its standard error."""
    if n_samples < 2:
        raise ParameterError(f"n_samples must be >= 2, got {n_samples}")
    vals = np.empty(n_samples)
    for i in range(n_samples):
        u = sample_ball(rng, oracle.dim)
        xi = oracle.sample_index(rng)
        vals[i] = oracle.eval(x + delta * u, xi)
    mean = float(vals.mean())
    stderr = float(vals.std(ddof=1) / math.sqrt(n_samples))
    return mean, stderr


def estimate_smoothed_gradient(oracle: StochasticOracle, x: np.ndarray, delta: float,
                               n_samples: int, rng: RandomStream) -> tuple[np.ndarray, float]:
    """Monte-Carlo mean of two-point draws, estimating the smoothed gradient.

    The scalar standard error is sqrt(sum of per-coordinate sample variances
    over n) -- a single number adequate for 3-sigma gates.
    """
    if n_samples < 2:
        raise ParameterError(f"n_samples must be >= 2, got {n_samples}")
    S = SampleSet.draw(oracle, n_samples, rng)
    coeffs = _batch_coefficients(oracle, x, S, delta)
    G = coeffs[:, None] * S.directions
    mean = G.sum(axis=0) / n_samples
    stderr = float(math.sqrt(G.var(axis=0, ddof=1).sum() / n_samples))
    return mean, stderr
