"""Failure-probability estimators: plain Monte Carlo, cross-entropy (CE),
improved CE (iCE) and iCE on the failure-informed subspace (iCEred), plus the
LSF-only refinement of an iCEred estimate.

All drivers work in standard Gaussian space and keep importance weights in
the log domain; fits and coefficients of variation are scale invariant, so
weights are shifted by their maximum before exponentiation.
"""
import math
import time
from dataclasses import dataclass, field, asdict
from typing import List, NamedTuple, Optional

import numpy as np

from . import densities as dens
from . import fis
from .errors import AllWeightsZero, DegenerateCovariance, EigenFailure, MissingGradient
from .indicators import (SmoothIndicatorKind, grad_log_smooth_indicator,
                         log_smooth_indicator)

F_FLOOR = 1e-300
_LOG_F_FLOOR = math.log(F_FLOOR)
GSS_MAX_ITER = 200
GSS_TOL = 1e-6
GSS_GRID = 41
PLATEAU_TOL = 0.01
REFINE_MAX_ITER = 5000
MC_CHUNK = 20000


@dataclass
class SolverConfig:
    n_per_level: int = 1000
    delta: float = 1.5
    eps: float = 0.01
    delta_bar: float = 0.05
    m_check: int = 10
    m_increment: int = 50
    t_max: int = 50
    rho: float = 0.1
    kind: SmoothIndicatorKind = SmoothIndicatorKind.LOGISTIC
    seed: int = 0
    refine: bool = False
    n_grad: Optional[int] = None
    mc_samples: int = 100_000

    def __post_init__(self):
        self.kind = SmoothIndicatorKind.parse(self.kind)
        self.validate()

    def validate(self):
        if self.n_per_level < 2:
            raise ValueError("n_per_level must be >= 2")
        if not 0 < self.rho < 1:
            raise ValueError("rho must lie in (0, 1)")
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if not self.eps >= 0:
            raise ValueError("eps must be nonnegative")
        if not self.delta_bar > 0:
            raise ValueError("delta_bar must be positive")
        if self.t_max < 1:
            raise ValueError("t_max must be >= 1")
        if self.m_check < 1 or self.m_increment < 1:
            raise ValueError("m_check and m_increment must be >= 1")
        if self.n_grad is not None and not 1 <= self.n_grad <= self.n_per_level:
            raise ValueError("n_grad must lie in [1, n_per_level]")
        if self.mc_samples < 1:
            raise ValueError("mc_samples must be >= 1")

    @property
    def grad_samples(self):
        return self.n_per_level if self.n_grad is None else self.n_grad


@dataclass
class LevelDiag:
    level: int
    s: Optional[float] = None
    rank: Optional[int] = None
    weights_cv: Optional[float] = None
    n_fail: int = 0
    threshold: Optional[float] = None
    elapsed: float = 0.0


@dataclass
class EstimationResult:
    method: str
    p_hat: float
    cv_hat: float
    n_levels: int
    lsf_calls: int
    grad_calls: int
    converged: bool
    per_level: List[LevelDiag] = field(default_factory=list)
    flags: dict = field(default_factory=dict)
    # eigenvalues per level that estimated H, and the last basis (iCEred)
    spectra: list = field(default_factory=list, repr=False)
    final_basis: object = field(default=None, repr=False)

    def to_dict(self, timings=False):
        """JSON-ready summary. Wall-clock timings are left out by default so
        that repeated runs serialize identically."""
        levels = []
        for lv in self.per_level:
            row = asdict(lv)
            if not timings:
                row.pop("elapsed")
            levels.append(row)
        return {
            "method": self.method,
            "p_hat": self.p_hat,
            "cv_hat": self.cv_hat,
            "n_levels": self.n_levels,
            "lsf_calls": self.lsf_calls,
            "grad_calls": self.grad_calls,
            "converged": self.converged,
            "flags": dict(self.flags),
            "per_level": levels,
        }


class SmoothingUpdate(NamedTuple):
    s: float
    degenerate: bool


# --------------------------------------------------------------------------
# weighted statistics


def weighted_cv(values):
    """Population standard deviation over mean of a nonnegative vector."""
    v = np.asarray(values, dtype=float)
    mean = v.mean()
    if not mean > 0:
        raise AllWeightsZero("coefficient of variation of an all-zero vector")
    return float(v.std() / mean)


def _cv_log(log_v):
    """cv of ``exp(log_v)`` without overflow; +inf if every entry is zero."""
    log_v = np.asarray(log_v, dtype=float)
    top = np.max(log_v)
    if not np.isfinite(top):
        return math.inf
    v = np.exp(log_v - top)
    return float(v.std() / v.mean())


def _normalized(log_w):
    top = np.max(log_w)
    if not np.isfinite(top):
        raise AllWeightsZero("all level weights underflow to zero")
    return np.exp(log_w - top)


def is_estimate(ind, log_w):
    """IS estimate ``mean(ind * w)`` and its estimated coefficient of variation.

    Works on weights rescaled by their largest failing value so that huge log
    weights from a poor biasing density neither overflow nor produce NaN.
    """
    ind = np.asarray(ind, dtype=float)
    log_w = np.asarray(log_w, dtype=float)
    n = ind.size
    hit = ind > 0
    if not np.any(hit):
        return 0.0, math.inf
    top = float(np.max(log_w[hit]))
    if not np.isfinite(top):
        return (1.0, math.inf) if top > 0 else (0.0, math.inf)
    v = np.where(hit, np.exp(np.where(hit, log_w, top) - top), 0.0)
    m1 = float(v.mean())
    with np.errstate(over="ignore"):
        p = m1 * math.exp(top) if top < 700 else math.inf
    if not p > 0:
        return 0.0, math.inf
    if n < 2:
        return min(p, 1.0), math.inf
    var = max(float((v * v).mean()) - m1 * m1, 0.0) / (n - 1)
    return min(p, 1.0), math.sqrt(var) / m1


def _stopping_cv(ind, log_f):
    """cv of ``ind / f``; samples with ``f`` below the floor are dropped.

    Returns ``(cv, n_dropped)``.
    """
    keep = log_f >= _LOG_F_FLOOR
    dropped = int(ind.size - np.count_nonzero(keep))
    if not np.any(keep):
        return math.inf, dropped
    ratio = np.where(ind[keep] > 0, np.exp(-log_f[keep]), 0.0)
    mean = ratio.mean()
    if not mean > 0:
        return math.inf, dropped
    return float(ratio.std() / mean), dropped


# --------------------------------------------------------------------------
# smoothing adaptation


def _golden_section(fun, a, b, tol=GSS_TOL, max_iter=GSS_MAX_ITER):
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(max_iter):
        if abs(b - a) <= tol:
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fun(d)
    return 0.5 * (a + b)


def _plateau_edge(cv_at, grid):
    limit = cv_at(grid[0])
    inside = [abs(cv_at(x) - limit) <= PLATEAU_TOL for x in grid]
    i = inside.index(False) - 1 if not all(inside) else len(grid) - 1
    lo, hi = grid[i], grid[min(i + 1, len(grid) - 1)]
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if abs(cv_at(mid) - limit) <= PLATEAU_TOL:
            lo = mid
        else:
            hi = mid
    return math.exp(lo)


def adapt_smoothing(g_values, level_weights, s_prev, delta,
                    kind=SmoothIndicatorKind.LOGISTIC, log_weights=False):
    """Next smoothing parameter: minimizer over ``(0, s_prev)`` of
    ``(cv(f(g; s) * w) - delta)^2``, by golden-section search in ``ln s``.

    Uses only the stored LSF values. Returns ``SmoothingUpdate(s, degenerate)``;
    when the objective is flat in ``s`` the result is ``s_prev / 2`` (or half
    the search bound at level 0) and ``degenerate`` is set.
    """
    g = np.asarray(g_values, dtype=float)
    w = np.asarray(level_weights, dtype=float)
    if log_weights:
        lw = w
    else:
        with np.errstate(divide="ignore"):
            lw = np.log(w)
    abs_g = np.abs(g)
    g_max = float(abs_g.max())
    s_ub = float(s_prev) if math.isfinite(s_prev) else 10.0 * g_max
    if not s_ub > 0:
        return SmoothingUpdate(0.5 * s_prev if math.isfinite(s_prev) else 1.0, True)
    q75, q25 = np.percentile(abs_g, [75, 25])
    spread = float(q75 - q25) if q75 > q25 else g_max
    s_min = 1e-8 * spread if spread > 0 else 1e-8 * s_ub
    s_min = min(s_min, 1e-8 * s_ub)

    def cv_at(log_s):
        return _cv_log(log_smooth_indicator(g, math.exp(log_s), kind) + lw)

    def objective(log_s):
        cv = cv_at(log_s)
        return (cv - delta) ** 2 if math.isfinite(cv) else math.inf

    lo, hi = math.log(s_min), math.log(s_ub)
    if abs(cv_at(lo) - cv_at(hi)) <= 1e-12:
        return SmoothingUpdate(0.5 * s_ub, True)
    # the objective has wide flat plateaus near both ends, so a bare golden
    # section can wander into the wrong one; bracket on a coarse grid first
    grid = np.linspace(lo, hi, GSS_GRID)
    vals = [objective(x) for x in grid]
    k = int(np.argmin(vals))
    if k == 0:
        # delta is out of reach and cv(s) only creeps toward its hard-indicator
        # limit as s -> 0; taking s_min there makes f and its gradient
        # underflow, so settle for the largest s within PLATEAU_TOL of it
        return SmoothingUpdate(_plateau_edge(cv_at, grid), False)
    a, b = grid[max(k - 1, 0)], grid[min(k + 1, GSS_GRID - 1)]
    log_s = _golden_section(objective, a, b)
    if objective(log_s) > vals[k]:
        log_s = grid[k]
    return SmoothingUpdate(min(math.exp(log_s), s_ub), False)


# --------------------------------------------------------------------------
# drivers


def _evaluate(problem, theta):
    g = np.asarray(problem.evaluate(theta), dtype=float).reshape(theta.shape[0])
    return g


def run_mc(problem, n, rng):
    """Crude Monte Carlo with ``n`` prior samples."""
    if n < 1:
        raise ValueError("n must be >= 1")
    t0 = time.perf_counter()
    n_fail = 0
    done = 0
    while done < n:
        m = min(MC_CHUNK, n - done)
        theta = rng.standard_normal((m, problem.dim))
        n_fail += int(np.count_nonzero(_evaluate(problem, theta) <= 0))
        done += m
    p = n_fail / n
    cv = math.sqrt((1.0 - p) / (n * p)) if p > 0 else math.inf
    diag = LevelDiag(level=0, n_fail=n_fail, elapsed=time.perf_counter() - t0)
    return EstimationResult("mc", p, cv, 1, n, 0, True, [diag])


def run_ce(problem, config, rng):
    """Standard CE with a full-dimensional Gaussian family and rho-quantile
    intermediate thresholds."""
    N, d = config.n_per_level, problem.dim
    k_elite = max(1, int(math.ceil(N * config.rho)))
    params = dens.GaussianParams.standard(d)
    levels, flags = [], {}
    lsf_calls, j, converged = 0, 0, False
    while True:
        t0 = time.perf_counter()
        if j == 0:
            theta = rng.standard_normal((N, d))
            log_w = np.zeros(N)
        else:
            theta = dens.sample_gaussian(params, N, rng)
            log_w = dens.std_normal_logpdf(theta) - dens.gaussian_logpdf(theta, params)
        g = _evaluate(problem, theta)
        lsf_calls += N
        gamma = float(np.partition(g, k_elite - 1)[k_elite - 1])
        diag = LevelDiag(level=j, threshold=gamma, n_fail=int(np.count_nonzero(g <= 0)))
        levels.append(diag)
        final = gamma <= 0
        if final:
            converged = True
        elif j >= config.t_max:
            flags["budget_exhausted"] = True
            diag.elapsed = time.perf_counter() - t0
            break
        # at the last level the elite set is the failure set itself
        elite = g <= (0.0 if final else gamma)
        lw = np.where(elite, log_w, -np.inf)
        try:
            w = _normalized(lw)
            diag.weights_cv = weighted_cv(w)
            params = dens.fit_gaussian_weighted(theta, w)
        except (AllWeightsZero, DegenerateCovariance) as exc:
            flags["fit_failed"] = type(exc).__name__
            converged = False
            diag.elapsed = time.perf_counter() - t0
            break
        diag.elapsed = time.perf_counter() - t0
        j += 1
        if final:
            # fresh samples from the fitted near-optimal density; they are
            # not a level of their own
            theta = dens.sample_gaussian(params, N, rng)
            log_w = dens.std_normal_logpdf(theta) - dens.gaussian_logpdf(theta, params)
            g = _evaluate(problem, theta)
            lsf_calls += N
            flags["final_n_fail"] = int(np.count_nonzero(g <= 0))
            break
    p, cv = is_estimate(g <= 0, log_w)
    return EstimationResult("ce", p, cv, len(levels), lsf_calls, 0, converged, levels, flags)


def _next_smoothing(g, log_w, s, uninformative, config, flags):
    """Adapted smoothing for the next level; halves ``s`` when every sample of
    the level fell below the f floor."""
    if uninformative and math.isfinite(s):
        flags["smoothing_halved"] = flags.get("smoothing_halved", 0) + 1
        return 0.5 * s
    upd = adapt_smoothing(g, log_w, s, config.delta, config.kind, log_weights=True)
    if upd.degenerate:
        flags["smoothing_degenerate"] = flags.get("smoothing_degenerate", 0) + 1
    return upd.s


def run_ice(problem, config, rng):
    """Improved CE: smooth indicator with adaptive smoothing, full-dimensional
    Gaussian family."""
    N, d, kind = config.n_per_level, problem.dim, config.kind
    params = dens.GaussianParams.standard(d)
    s = math.inf
    levels, flags = [], {}
    lsf_calls, j, converged = 0, 0, False
    while True:
        t0 = time.perf_counter()
        if j == 0:
            theta = rng.standard_normal((N, d))
            log_w = np.zeros(N)
        else:
            theta = dens.sample_gaussian(params, N, rng)
            log_w = dens.std_normal_logpdf(theta) - dens.gaussian_logpdf(theta, params)
        g = _evaluate(problem, theta)
        lsf_calls += N
        ind = (g <= 0).astype(float)
        cv_stop, dropped = _stopping_cv(ind, log_smooth_indicator(g, s, kind))
        diag = LevelDiag(level=j, s=s, n_fail=int(ind.sum()))
        levels.append(diag)
        if dropped:
            flags["f_floor_dropped"] = flags.get("f_floor_dropped", 0) + dropped
        if cv_stop <= config.delta:
            converged = True
        if converged or j >= config.t_max:
            if not converged:
                flags["budget_exhausted"] = True
            diag.elapsed = time.perf_counter() - t0
            break
        s = _next_smoothing(g, log_w, s, dropped == N, config, flags)
        lw_tilde = log_w + log_smooth_indicator(g, s, kind)
        try:
            w = _normalized(lw_tilde)
            diag.weights_cv = weighted_cv(w)
            params = dens.fit_gaussian_weighted(theta, w)
        except (AllWeightsZero, DegenerateCovariance) as exc:
            flags["fit_failed"] = type(exc).__name__
            diag.elapsed = time.perf_counter() - t0
            break
        diag.elapsed = time.perf_counter() - t0
        j += 1
    p, cv = is_estimate(ind, log_w)
    return EstimationResult("ice", p, cv, j + 1, lsf_calls, 0, converged, levels, flags)


@dataclass
class RefinementState:
    """Final iCEred level: the biasing density it sampled from and the
    indicator values and weights of its samples."""

    problem: object
    reduced: dens.GaussianParams
    basis: fis.FisBasis
    ind: np.ndarray
    log_w: np.ndarray
    result: EstimationResult


def _level_basis(problem, theta, g, lw_tilde, s, config, previous):
    """FIS basis estimated from one level, or ``None`` if H is not usable."""
    n_grad = config.grad_samples
    th = theta[:n_grad]
    grad_g = np.asarray(problem.gradient(th), dtype=float).reshape(th.shape)
    try:
        glf = grad_log_smooth_indicator(g[:n_grad], grad_g, s, config.kind)
        w = _normalized(lw_tilde[:n_grad])
        return fis.fis_basis_from_gradients(glf, w, config.eps,
                                            max_rank=min(problem.dim, n_grad - 1))
    except (AllWeightsZero, EigenFailure, ValueError):
        return None


def run_icered(problem, config, rng, return_state=False):
    """iCE on the failure-informed subspace, optionally followed by refinement.

    With ``return_state=True`` the pre-refinement :class:`RefinementState` is
    returned alongside the result.
    """
    if problem.gradient is None:
        raise MissingGradient("iCEred needs the limit-state gradient")
    N, d, kind = config.n_per_level, problem.dim, config.kind
    s = math.inf
    levels, spectra, flags = [], [], {}
    lsf_calls = grad_calls = 0
    j, converged = 0, False
    basis = reduced = None
    while True:
        t0 = time.perf_counter()
        if j == 0:
            theta = rng.standard_normal((N, d))
            log_w = np.zeros(N)
        else:
            tr = dens.sample_gaussian(reduced, N, rng)
            tp = rng.standard_normal((N, d - basis.rank))
            # complement factors of the prior and the biasing cancel
            log_w = dens.std_normal_logpdf(tr) - dens.gaussian_logpdf(tr, reduced)
            theta = fis.reconstruct(tr.T, tp.T, basis).T
        g = _evaluate(problem, theta)
        lsf_calls += N
        ind = (g <= 0).astype(float)
        cv_stop, dropped = _stopping_cv(ind, log_smooth_indicator(g, s, kind))
        diag = LevelDiag(level=j, s=s, rank=None if basis is None else basis.rank,
                         n_fail=int(ind.sum()))
        levels.append(diag)
        if dropped:
            flags["f_floor_dropped"] = flags.get("f_floor_dropped", 0) + dropped
        if cv_stop <= config.delta:
            converged = True
        if converged or j >= config.t_max:
            if not converged:
                flags["budget_exhausted"] = True
            diag.elapsed = time.perf_counter() - t0
            break

        s = _next_smoothing(g, log_w, s, dropped == N, config, flags)
        log_f = log_smooth_indicator(g, s, kind)
        lw_tilde = log_w + log_f

        new_basis = _level_basis(problem, theta, g, lw_tilde, s, config, basis)
        grad_calls += config.grad_samples
        if new_basis is None:
            flags["basis_reused"] = flags.get("basis_reused", 0) + 1
            new_basis = basis if basis is not None else fis.FisBasis.identity(
                d, min(d, N - 1))
        else:
            spectra.append((j, new_basis.eigvals, new_basis.rank))
        tt_r, tt_p = fis.project(theta.T, new_basis)
        tt_r, tt_p = tt_r.T, tt_p.T
        if j > 0:
            adjusted = dens.adjust_reference_params(reduced, basis, new_basis)
            tt = np.hstack([tt_r, tt_p])
            lw_bar = log_f + dens.std_normal_logpdf(tt) - dens.gaussian_logpdf(tt, adjusted)
        else:
            lw_bar = lw_tilde
        try:
            w = _normalized(lw_bar)
            diag.weights_cv = weighted_cv(_normalized(lw_tilde))
            reduced = dens.fit_gaussian_weighted(tt_r, w)
        except (AllWeightsZero, DegenerateCovariance) as exc:
            flags["fit_failed"] = type(exc).__name__
            diag.elapsed = time.perf_counter() - t0
            break
        basis = new_basis
        diag.elapsed = time.perf_counter() - t0
        j += 1

    p, cv = is_estimate(ind, log_w)
    result = EstimationResult("icered", p, cv, j + 1, lsf_calls, grad_calls, converged,
                              levels, flags, spectra, basis)
    if basis is None:
        # stopped at level 0: the final biasing density is the prior itself
        basis = fis.FisBasis.identity(d)
        reduced = dens.GaussianParams.standard(d)
    state = RefinementState(problem, reduced, basis, ind, log_w, result)
    if config.refine:
        result = refine(state, config, rng)
    return (result, state) if return_state else result


def refine(state, config, rng):
    """Add LSF-only samples from the final biasing density until the running
    mean of the last ``m_check`` coefficients of variation is at most
    ``delta_bar``. No gradients are evaluated."""
    problem, reduced, basis = state.problem, state.reduced, state.basis
    ind = [np.asarray(state.ind, dtype=float)]
    log_w = [np.asarray(state.log_w, dtype=float)]
    M, m = config.m_increment, config.m_check
    base = state.result
    flags = dict(base.flags)
    extra_calls = 0
    history = []
    zero_streak = 0
    k = 1
    while True:
        p, cv = is_estimate(np.concatenate(ind), np.concatenate(log_w))
        history.append(cv)
        if k == 1 and cv <= config.delta_bar:
            break
        if k % m == 0 and float(np.mean(history[-m:])) <= config.delta_bar:
            break
        zero_streak = zero_streak + 1 if p == 0 else 0
        if zero_streak >= 100 * m:
            flags["refine_aborted_zero"] = True
            break
        if k >= REFINE_MAX_ITER:
            flags["refine_max_iter"] = True
            break
        tr = dens.sample_gaussian(reduced, M, rng)
        tp = rng.standard_normal((M, basis.dim - basis.rank))
        theta = fis.reconstruct(tr.T, tp.T, basis).T
        g = _evaluate(problem, theta)
        extra_calls += M
        ind.append((g <= 0).astype(float))
        log_w.append(dens.std_normal_logpdf(tr) - dens.gaussian_logpdf(tr, reduced))
        k += 1
    flags["refine_batches"] = k - 1
    flags["cv_before_refine"] = base.cv_hat
    return EstimationResult(base.method, p, cv, base.n_levels, base.lsf_calls + extra_calls,
                            base.grad_calls, base.converged, base.per_level, flags,
                            base.spectra, base.final_basis)


METHODS = {"ce": run_ce, "ice": run_ice, "icered": run_icered}


def run_method(method, problem, config, rng=None):
    """Dispatch by method name; ``rng`` defaults to one seeded from the config."""
    rng = np.random.default_rng(config.seed) if rng is None else rng
    if method == "mc":
        return run_mc(problem, config.mc_samples, rng)
    try:
        driver = METHODS[method]
    except KeyError:
        raise ValueError(f"unknown method {method!r}") from None
    return driver(problem, config, rng)
