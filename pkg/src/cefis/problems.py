"""Analytic benchmark limit-state functions in standard Gaussian space."""
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import integrate
from scipy.special import ndtr
from scipy.stats import norm

from .errors import DimensionMismatch


@dataclass
class LimitStateProblem:
    """A limit-state function on R^d; failure is ``g <= 0``.

    ``evaluate`` maps an ``(n, d)`` batch to ``(n,)`` values and ``gradient``
    maps it to ``(n, d)`` gradients.
    """

    dim: int
    evaluate: Callable[[np.ndarray], np.ndarray]
    gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None
    reference_p: Optional[float] = None
    name: str = "custom"


@dataclass(frozen=True)
class LinearLsfSpec:
    dim: int
    beta: float

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dimension must be >= 1")


@dataclass(frozen=True)
class QuadraticLsfSpec:
    dim: int
    beta: float = 4.0
    kappa: float = 5.0

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError("the quadratic benchmark needs d >= 2")
        if self.kappa < 0:
            raise ValueError("curvature must be nonnegative")


def _as_batch(theta, d):
    theta = np.asarray(theta, dtype=float)
    if theta.shape[-1] != d:
        raise DimensionMismatch(f"expected {d} components, got {theta.shape[-1]}")
    return theta


def linear_lsf(theta, spec):
    """``g = beta - sum(theta) / sqrt(d)`` and its constant gradient."""
    theta = _as_batch(theta, spec.dim)
    c = 1.0 / np.sqrt(spec.dim)
    g = spec.beta - c * np.sum(theta, axis=-1)
    grad = np.full(theta.shape, -c)
    return g, grad


def quadratic_lsf(theta, spec):
    """Linear benchmark plus ``kappa / 4 * (theta_1 - theta_2)^2``."""
    theta = _as_batch(theta, spec.dim)
    c = 1.0 / np.sqrt(spec.dim)
    diff = theta[..., 0] - theta[..., 1]
    g = spec.beta + 0.25 * spec.kappa * diff**2 - c * np.sum(theta, axis=-1)
    grad = np.full(theta.shape, -c)
    grad[..., 0] += 0.5 * spec.kappa * diff
    grad[..., 1] -= 0.5 * spec.kappa * diff
    return g, grad


def linear_reference(beta):
    return float(ndtr(-beta))


def quadratic_reference(beta, kappa):
    """Failure probability of the quadratic benchmark.

    With ``u = sum(theta)/sqrt(d)`` and ``v = (theta_1 - theta_2)/sqrt(2)``
    (independent standard normals) failure is ``u >= beta + kappa v^2 / 2``,
    so ``p = int phi(v) Phi(-beta - kappa v^2 / 2) dv``.
    """
    if kappa < 0:
        raise ValueError("curvature must be nonnegative")
    if kappa == 0:
        return linear_reference(beta)

    def integrand(v):
        return norm.pdf(v) * ndtr(-beta - 0.5 * kappa * v * v)

    val, err = integrate.quad(integrand, -np.inf, np.inf, epsabs=1e-15,
                              epsrel=1e-12, limit=200)
    if not err < 1e-12:
        raise RuntimeError(f"quadrature did not converge (error estimate {err})")
    return float(val)


def linear_problem(dim, beta):
    spec = LinearLsfSpec(int(dim), float(beta))
    return LimitStateProblem(
        dim=spec.dim,
        evaluate=lambda th: linear_lsf(th, spec)[0],
        gradient=lambda th: linear_lsf(th, spec)[1],
        reference_p=linear_reference(spec.beta),
        name="linear",
    )


def quadratic_problem(dim, beta=4.0, kappa=5.0):
    spec = QuadraticLsfSpec(int(dim), float(beta), float(kappa))
    return LimitStateProblem(
        dim=spec.dim,
        evaluate=lambda th: quadratic_lsf(th, spec)[0],
        gradient=lambda th: quadratic_lsf(th, spec)[1],
        reference_p=quadratic_reference(spec.beta, spec.kappa),
        name="quadratic",
    )


def constant_problem(dim, value):
    """Degenerate problem with ``g`` identically ``value`` (zero gradient)."""
    value = float(value)
    return LimitStateProblem(
        dim=int(dim),
        evaluate=lambda th: np.full(np.shape(th)[:-1], value),
        gradient=lambda th: np.zeros(np.shape(th)),
        reference_p=1.0 if value <= 0 else 0.0,
        name="constant",
    )
