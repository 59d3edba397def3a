"""Lognormal random fields by Karhunen-Loeve expansion and a 1D elastic bar
reliability problem with adjoint gradients.

The covariance operator of the underlying Gaussian field is discretized with
the Nystrom method on Gauss-Legendre points. The bar is clamped at ``x = 0``,
loaded axially at the tip, and fails when the tip displacement exceeds
``u_max``.
"""
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla

from . import _bar
from .errors import DimensionMismatch, EigenFailure, SolveFailure
from .problems import LimitStateProblem


def exp_kernel(x, y, ell):
    """Exponential correlation ``exp(-|x - y| / ell)``; broadcasts over arrays."""
    if not ell > 0:
        raise ValueError("correlation length must be positive")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return np.exp(-np.abs(x - y) / ell)


def lognormal_to_gaussian(mu_ln, sigma_ln):
    """Mean and standard deviation of ``ln E`` for a lognormal ``E`` with the
    given mean and standard deviation."""
    if not (mu_ln > 0 and sigma_ln >= 0):
        raise ValueError("lognormal mean must be positive and std nonnegative")
    s2 = math.log1p((sigma_ln / mu_ln) ** 2)
    mu = math.log(mu_ln**2 / math.sqrt(mu_ln**2 + sigma_ln**2))
    return mu, math.sqrt(s2)


@dataclass(frozen=True, eq=False)
class KLExpansion:
    """Truncated KL expansion of a Gaussian field ``N(mu_gauss, sigma_gauss^2)``
    with exponential correlation. ``eigfuncs[:, k]`` holds mode k at the
    quadrature nodes."""

    domain: tuple
    ell: float
    nodes: np.ndarray
    quad_weights: np.ndarray
    eigvals: np.ndarray
    eigfuncs: np.ndarray
    sigma_gauss: float
    mu_gauss: float = 0.0
    mu_lognormal: Optional[float] = None
    sigma_lognormal: Optional[float] = None

    @property
    def n_terms(self):
        return self.eigvals.size

    @property
    def total_variance(self):
        """Integral of the pointwise variance over the domain."""
        a, b = self.domain
        return self.sigma_gauss**2 * (b - a)

    def captured_variance(self):
        """Cumulative share of the total variance captured by the first k modes."""
        return np.cumsum(self.eigvals) / self.total_variance

    def eval_eigfuncs(self, x):
        """Nystrom interpolation of the modes at arbitrary points, ``(len(x), K)``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        C = self.sigma_gauss**2 * exp_kernel(x[:, None], self.nodes[None, :], self.ell)
        return (C * self.quad_weights) @ self.eigfuncs / self.eigvals


def nystrom_kl(domain, ell, sigma_gauss, n_gp, K, mu_gauss=0.0):
    """Top ``K`` eigenpairs of the covariance operator ``sigma^2 exp(-|x-y|/ell)``.

    Uses the symmetric form ``W^1/2 C W^1/2`` so the modes come out orthonormal
    in the quadrature inner product.
    """
    a, b = (float(v) for v in domain)
    n_gp, K = int(n_gp), int(K)
    if not b > a:
        raise ValueError("empty domain")
    if n_gp < 2 or not 1 <= K <= n_gp:
        raise ValueError(f"need n_gp >= 2 and 1 <= K <= n_gp, got n_gp={n_gp}, K={K}")
    if not sigma_gauss > 0:
        raise ValueError("field standard deviation must be positive")
    xi, wi = np.polynomial.legendre.leggauss(n_gp)
    nodes = 0.5 * (b - a) * xi + 0.5 * (a + b)
    weights = 0.5 * (b - a) * wi
    C = sigma_gauss**2 * exp_kernel(nodes[:, None], nodes[None, :], ell)
    sw = np.sqrt(weights)
    A = sw[:, None] * C * sw[None, :]
    try:
        lam, V = sla.eigh(A, subset_by_index=[n_gp - K, n_gp - 1])
    except (sla.LinAlgError, ValueError) as exc:
        raise EigenFailure(str(exc)) from exc
    lam, V = lam[::-1], V[:, ::-1]
    if not np.all(lam > 0):
        raise EigenFailure("non-positive eigenvalue among the retained modes")
    phi = V / sw[:, None]
    # deterministic sign: positive mean over the domain (or first node)
    ref = weights @ phi
    ref = np.where(np.abs(ref) > 1e-12, ref, phi[0])
    phi = phi * np.where(ref < 0, -1.0, 1.0)
    return KLExpansion((a, b), float(ell), nodes, weights, lam, phi,
                       float(sigma_gauss), float(mu_gauss))


def lognormal_kl(domain, ell, mu_lognormal, sigma_lognormal, n_gp, K):
    """KL expansion of ``ln E`` for a lognormal field with the given moments."""
    mu_g, sigma_g = lognormal_to_gaussian(mu_lognormal, sigma_lognormal)
    kl = nystrom_kl(domain, ell, sigma_g, n_gp, K, mu_gauss=mu_g)
    return KLExpansion(kl.domain, kl.ell, kl.nodes, kl.quad_weights, kl.eigvals,
                       kl.eigfuncs, kl.sigma_gauss, kl.mu_gauss,
                       float(mu_lognormal), float(sigma_lognormal))


def realize_lognormal_field(kl, theta_kl, x=None):
    """``exp(mu + sum_k sqrt(alpha_k) phi_k theta_k)`` at the nodes or at ``x``.

    ``theta_kl`` is one coefficient vector ``(K,)`` or a batch ``(n, K)``.
    """
    theta = np.asarray(theta_kl, dtype=float)
    if theta.shape[-1] != kl.n_terms:
        raise DimensionMismatch(f"expected {kl.n_terms} KL coefficients, got {theta.shape[-1]}")
    phi = kl.eigfuncs if x is None else kl.eval_eigfuncs(x)
    modes = phi * np.sqrt(kl.eigvals)
    return np.exp(kl.mu_gauss + theta @ modes.T)


# --------------------------------------------------------------------------
# elastic bar


@dataclass(frozen=True, eq=False)
class BarProblem:
    """Axial bar with a lognormal Young's modulus field and a Gaussian tip load.

    Inputs are ``theta = [theta_q, theta_kl]``. ``u_max`` is expressed as
    ``u_max_scale * u_ref`` where the nominal tip displacement (mean load,
    field at its median) equals ``0.7 * u_ref``.
    """

    kl: KLExpansion
    length: float = 1.0
    area: float = 1e-4
    n_elem: int = 100
    load_cov: float = 0.2
    u_ref: float = 1e-3
    u_max_scale: float = 1.19
    _modes: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.n_elem < 1:
            raise ValueError("need at least one element")
        h = self.length / self.n_elem
        mid = (np.arange(self.n_elem) + 0.5) * h
        # sqrt(alpha_k) phi_k at the element midpoints
        modes = self.kl.eval_eigfuncs(mid) * np.sqrt(self.kl.eigvals)
        object.__setattr__(self, "_modes", modes)

    @property
    def dim(self):
        return self.kl.n_terms + 1

    @property
    def h(self):
        return self.length / self.n_elem

    @property
    def e_nominal(self):
        return math.exp(self.kl.mu_gauss)

    @property
    def load_mean(self):
        return 0.7 * self.u_ref * self.e_nominal * self.area / self.length

    @property
    def load_std(self):
        return self.load_cov * self.load_mean

    @property
    def u_max(self):
        return self.u_max_scale * self.u_ref

    def element_moduli(self, theta_kl):
        theta = np.asarray(theta_kl, dtype=float)
        return np.exp(self.kl.mu_gauss + theta @ self._modes.T)


def default_bar(n_elem=100, K=50, ell=0.1, u_max_scale=1.19, n_gp=None,
                length=1.0, area=1e-4, mu_lognormal=2e5, sigma_lognormal=3e4):
    n_gp = max(200, 2 * K) if n_gp is None else n_gp
    kl = lognormal_kl((0.0, length), ell * length, mu_lognormal, sigma_lognormal, n_gp, K)
    return BarProblem(kl, length=length, area=area, n_elem=n_elem,
                      u_max_scale=u_max_scale)


def _bar_batch(theta, bar, want_grad):
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    if theta.shape[-1] != bar.dim:
        raise DimensionMismatch(f"expected {bar.dim} inputs, got {theta.shape[-1]}")
    q = bar.load_mean + bar.load_std * theta[:, 0]
    E = bar.element_moduli(theta[:, 1:])
    k = np.ascontiguousarray(E * (bar.area / bar.h))
    if not np.all(np.isfinite(k)) or np.any(k <= 0):
        raise SolveFailure("element stiffness is not positive and finite")
    u_tip, lam_tip, c = _bar.solve_tip_load(k, np.ascontiguousarray(q))
    g = bar.u_max - u_tip
    if not want_grad:
        return g, None
    grad = np.empty_like(theta)
    # g = u_max - lam^T f with f = q e_n, and dk_e/dtheta_k = k_e * mode_k(x_e)
    grad[:, 0] = -lam_tip * bar.load_std
    grad[:, 1:] = c @ bar._modes
    return g, grad


def bar_lsf(theta, bar):
    """``g = u_max - u(L)`` and its adjoint gradient for one point or a batch."""
    single = np.ndim(theta) == 1
    g, grad = _bar_batch(theta, bar, True)
    return (float(g[0]), grad[0]) if single else (g, grad)


def bar_problem(bar, reference_p=None):
    return LimitStateProblem(
        dim=bar.dim,
        evaluate=lambda th: _bar_batch(th, bar, False)[0],
        gradient=lambda th: _bar_batch(th, bar, True)[1],
        reference_p=reference_p,
        name="bar",
    )
