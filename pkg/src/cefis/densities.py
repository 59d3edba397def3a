"""Gaussian biasing densities: evaluation, sampling, weighted fitting.

Samples are stored row-wise, i.e. a batch of ``n`` points in ``k``
dimensions is an ``(n, k)`` array.
"""
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.linalg import solve_triangular

from .errors import AllWeightsZero, DegenerateCovariance, DimensionMismatch

LOG_2PI = np.log(2.0 * np.pi)

# relative diagonal jitter, tried in order after a plain factorization fails
JITTER_LEVELS = (1e-10, 1e-6)
JITTER_FLOOR = 1e-300


def _jitter(cov, rel):
    k = cov.shape[0]
    return max(rel * np.trace(cov) / k, JITTER_FLOOR)


def regularized_cholesky(cov):
    """Lower Cholesky factor of ``cov`` and the diagonal jitter that was needed.

    Raises DegenerateCovariance when the matrix is not finite or cannot be
    factorized with the largest jitter level.
    """
    cov = np.asarray(cov, dtype=float)
    if not np.all(np.isfinite(cov)):
        raise DegenerateCovariance("covariance has non-finite entries")
    try:
        return np.linalg.cholesky(cov), 0.0
    except np.linalg.LinAlgError:
        pass
    eye = np.eye(cov.shape[0])
    for rel in JITTER_LEVELS:
        eps = _jitter(cov, rel)
        try:
            return np.linalg.cholesky(cov + eps * eye), eps
        except np.linalg.LinAlgError:
            continue
    raise DegenerateCovariance(
        f"covariance of size {cov.shape[0]} not factorizable after jitter")


@dataclass(frozen=True, eq=False)
class GaussianParams:
    """Mean vector and covariance matrix of a Gaussian density."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if mean.ndim != 1 or cov.shape != (mean.size, mean.size):
            raise DimensionMismatch(
                f"mean {mean.shape} and covariance {cov.shape} disagree")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self):
        return self.mean.size

    @cached_property
    def _factor(self):
        return regularized_cholesky(self.cov)

    @property
    def chol(self):
        return self._factor[0]

    @classmethod
    def standard(cls, k):
        return cls(np.zeros(k), np.eye(k))


def std_normal_logpdf(x):
    """Log-density of N(0, I) evaluated along the last axis."""
    x = np.asarray(x, dtype=float)
    k = x.shape[-1]
    return -0.5 * np.sum(x * x, axis=-1) - 0.5 * k * LOG_2PI


def gaussian_logpdf(x, params):
    """log N(x; mean, cov) for a single point ``(k,)`` or a batch ``(n, k)``."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != params.dim:
        raise DimensionMismatch(
            f"point dimension {x.shape[-1]} != density dimension {params.dim}")
    L = params.chol
    diff = np.atleast_2d(x - params.mean)
    z = solve_triangular(L, diff.T, lower=True, check_finite=False)
    quad = np.sum(z * z, axis=0)
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    out = -0.5 * (quad + logdet + params.dim * LOG_2PI)
    return out[0] if x.ndim == 1 else out


def sample_gaussian(params, n, rng):
    """Draw ``n`` i.i.d. samples as an ``(n, k)`` array."""
    if n < 1:
        raise ValueError("n must be >= 1")
    z = rng.standard_normal((n, params.dim))
    return params.mean + z @ params.chol.T


def fit_gaussian_weighted(samples, weights):
    """Weighted maximum-likelihood Gaussian (closed-form CE update).

    The covariance is normalized by the weight sum (biased MLE). If the
    fitted covariance cannot be factorized as is, the jittered matrix that
    can be factorized is returned instead.
    """
    X = np.asarray(samples, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    w = np.asarray(weights, dtype=float).ravel()
    if w.size != X.shape[0]:
        raise DimensionMismatch(f"{X.shape[0]} samples but {w.size} weights")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ValueError("weights must be finite and nonnegative")
    total = w.sum()
    if not total > 0:
        raise AllWeightsZero("all CE weights are zero")
    w = w / total
    mean = w @ X
    D = X - mean
    cov = (D * w[:, None]).T @ D
    cov = 0.5 * (cov + cov.T)
    _, eps = regularized_cholesky(cov)
    if eps:
        cov = cov + eps * np.eye(cov.shape[0])
    return GaussianParams(mean, cov)


@dataclass(frozen=True, eq=False)
class CompositeBiasing:
    """Gaussian on the local failure-informed coordinates times N(0, I) on
    the complement."""

    reduced: GaussianParams
    basis: object = field(repr=False)

    def __post_init__(self):
        if self.reduced.dim != self.basis.rank:
            raise DimensionMismatch(
                f"reduced dimension {self.reduced.dim} != basis rank {self.basis.rank}")

    @property
    def full_dim(self):
        return self.basis.dim


def composite_logpdf(theta_tilde, biasing):
    """Log-density of local coordinates ``[theta_r, theta_perp]``."""
    theta_tilde = np.asarray(theta_tilde, dtype=float)
    d = biasing.full_dim
    r = biasing.reduced.dim
    if theta_tilde.shape[-1] != d:
        raise DimensionMismatch(f"expected {d} coordinates, got {theta_tilde.shape[-1]}")
    out = gaussian_logpdf(theta_tilde[..., :r], biasing.reduced)
    if r < d:
        out = out + std_normal_logpdf(theta_tilde[..., r:])
    return out


def adjust_reference_params(reduced, basis_old, basis_new):
    """Express reduced parameters fitted in ``basis_old`` as a full Gaussian in
    the local coordinates of ``basis_new``.

    The old density is N(mu_r, Sigma_r) on the old local FIS and standard
    normal on the old complement; the result is the same density after the
    orthogonal change of coordinates.
    """
    if basis_old.dim != basis_new.dim:
        raise DimensionMismatch("bases live in different ambient dimensions")
    if reduced.dim != basis_old.rank:
        raise DimensionMismatch(
            f"reduced dimension {reduced.dim} != old basis rank {basis_old.rank}")
    B = np.hstack([basis_new.phi_r, basis_new.phi_perp])
    U = B.T @ basis_old.phi_r
    mean = U @ reduced.mean
    # B^T (phi_perp phi_perp^T) B == I - U U^T for complete orthonormal bases
    cov = U @ reduced.cov @ U.T + (np.eye(basis_new.dim) - U @ U.T)
    cov = 0.5 * (cov + cov.T)
    return GaussianParams(mean, cov)
