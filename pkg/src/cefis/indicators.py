"""Failure indicator and its smooth approximations.

Failure is the event ``g <= 0``. Both smoothings equal 1/2 at ``g = 0`` and
tend to the indicator as the smoothing parameter ``s`` goes to zero.
"""
import enum

import numpy as np
from scipy.special import expit, log_expit, log_ndtr, ndtr

from .errors import InvalidLsfValue, InvalidSmoothing

_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


class SmoothIndicatorKind(enum.Enum):
    LOGISTIC = "logistic"
    GAUSSIAN_CDF = "gaussian_cdf"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {"log": "logistic", "tanh": "logistic",
                   "erf": "gaussian_cdf", "gaussiancdf": "gaussian_cdf"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise ValueError(f"unknown smooth indicator kind {value!r}") from None


def _check_g(g):
    g = np.asarray(g, dtype=float)
    if np.any(np.isnan(g)):
        raise InvalidLsfValue("limit-state value is NaN")
    return g


def _check_s(s):
    s = float(s)
    if not s > 0:
        raise InvalidSmoothing(f"smoothing parameter must be positive, got {s}")
    return s


def indicator(g_value):
    """1 where ``g <= 0`` and 0 elsewhere."""
    g = _check_g(g_value)
    out = (g <= 0).astype(np.int8)
    return int(out) if out.ndim == 0 else out


def log_smooth_indicator(g_value, s, kind=SmoothIndicatorKind.LOGISTIC):
    """Natural log of the smooth indicator, accurate deep in both tails."""
    g = _check_g(g_value)
    s = _check_s(s)
    if np.isinf(s):
        return np.full_like(g, -np.log(2.0))
    z = -g / s
    if kind is SmoothIndicatorKind.LOGISTIC:
        # 0.5 * (1 + tanh(z)) == expit(2 z)
        return log_expit(2.0 * z)
    return log_ndtr(z)


def smooth_indicator(g_value, s, kind=SmoothIndicatorKind.LOGISTIC):
    """Logistic ``(1 + tanh(-g/s)) / 2`` or Gaussian-CDF ``Phi(-g/s)`` smoothing."""
    g = _check_g(g_value)
    s = _check_s(s)
    if np.isinf(s):
        out = np.full_like(g, 0.5)
    elif kind is SmoothIndicatorKind.LOGISTIC:
        out = expit(-2.0 * g / s)
    else:
        out = ndtr(-g / s)
    return float(out) if out.ndim == 0 else out


def mills_ratio(z):
    """phi(z) / Phi(z), computed in the log domain so it stays finite for very
    negative ``z`` where both factors underflow."""
    z = np.asarray(z, dtype=float)
    return np.exp(-0.5 * z * z - _LOG_SQRT_2PI - log_ndtr(z))


def grad_log_smooth_indicator(g_value, grad_g, s, kind=SmoothIndicatorKind.LOGISTIC):
    """Gradient of ``ln f(theta; s)`` given ``g(theta)`` and its gradient.

    Accepts one point (scalar ``g``, ``(d,)`` gradient) or a batch (``(n,)``
    values with ``(n, d)`` gradients).
    """
    g = np.asarray(g_value, dtype=float)
    grad = np.asarray(grad_g, dtype=float)
    if not (np.all(np.isfinite(g)) and np.all(np.isfinite(grad))):
        raise InvalidLsfValue("limit-state value or gradient is not finite")
    s = _check_s(s)
    if np.isinf(s):
        raise InvalidSmoothing("gradient of ln f needs a finite smoothing parameter")
    z = g / s
    if kind is SmoothIndicatorKind.LOGISTIC:
        # 1 + tanh(z) == 2 expit(2 z)
        coef = 2.0 * expit(2.0 * z)
    else:
        coef = mills_ratio(-z)
    return -(coef / s)[..., None] * grad if g.ndim else -(coef / s) * grad
