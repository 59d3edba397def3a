"""Failure-informed subspace: second-moment matrix of the log-smooth-indicator
gradient, its spectrum, certified rank selection and the basis operators."""
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import AllWeightsZero, DimensionMismatch, EigenFailure

# Gram eigenvalues below this fraction of the largest are treated as zero
GRAM_RANK_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class FisBasis:
    """Eigen-decomposition of H split into failure-informed and complementary
    bases. ``eigvals`` is sorted in nonincreasing order."""

    eigvals: np.ndarray
    rank: int
    phi_r: np.ndarray
    phi_perp: np.ndarray

    @property
    def dim(self):
        return self.phi_r.shape[0]

    @property
    def eigvecs(self):
        return np.hstack([self.phi_r, self.phi_perp])

    @classmethod
    def identity(cls, d, rank=None):
        """Canonical basis with the first ``rank`` axes as the FIS."""
        rank = d if rank is None else rank
        eye = np.eye(d)
        return cls(np.zeros(d), rank, eye[:, :rank], eye[:, rank:])


def estimate_H(grad_log_f, weights):
    """Self-normalized weighted average of the outer products ``g g^T``."""
    G = np.atleast_2d(np.asarray(grad_log_f, dtype=float))
    w = np.asarray(weights, dtype=float).ravel()
    if w.size != G.shape[0]:
        raise DimensionMismatch(f"{G.shape[0]} gradients but {w.size} weights")
    total = w.sum()
    if not total > 0:
        raise AllWeightsZero("all weights are zero, H is undefined")
    w = w / total
    H = (G * w[:, None]).T @ G
    return 0.5 * (H + H.T)


def select_rank(eigvals, eps):
    """Smallest ``r >= 1`` with ``0.5 * sum(eigvals[r:]) <= eps``."""
    lam = np.asarray(eigvals, dtype=float)
    d = lam.size
    # tail[r] = 0.5 * sum(lam[r:]), accumulated from the small end
    tail = 0.5 * np.concatenate([np.cumsum(lam[::-1])[::-1], [0.0]])
    for r in range(1, d + 1):
        if tail[r] <= eps:
            return r
    return d


def _fix_signs(V):
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def _clip(eigvals):
    lam = np.asarray(eigvals, dtype=float).copy()
    lam[lam < 0] = 0.0
    return lam


def _build(eigvals, eigvecs, eps, max_rank):
    lam = _clip(eigvals)
    V = _fix_signs(eigvecs)
    r = select_rank(lam, eps)
    if max_rank is not None:
        r = min(r, max(1, int(max_rank)))
    return FisBasis(lam, r, V[:, :r].copy(), V[:, r:].copy())


def compute_fis_basis(H, eps, max_rank=None):
    """Full orthonormal eigenbasis of symmetric ``H``, eigenvalues descending,
    rank chosen by :func:`select_rank` and capped at ``max_rank``."""
    H = np.asarray(H, dtype=float)
    H = 0.5 * (H + H.T)
    if not np.all(np.isfinite(H)):
        raise EigenFailure("H has non-finite entries")
    try:
        lam, V = sla.eigh(H)
    except (sla.LinAlgError, ValueError) as exc:
        raise EigenFailure(str(exc)) from exc
    order = np.argsort(lam)[::-1]
    return _build(lam[order], V[:, order], eps, max_rank)


def fis_basis_from_gradients(grad_log_f, weights, eps, max_rank=None):
    """Same result as ``compute_fis_basis(estimate_H(...))`` but factorizes the
    weighted gradient matrix directly when there are fewer samples than
    dimensions, which avoids a dense ``d x d`` eigenproblem."""
    G = np.atleast_2d(np.asarray(grad_log_f, dtype=float))
    n, d = G.shape
    if n >= d:
        return compute_fis_basis(estimate_H(G, weights), eps, max_rank)
    w = np.asarray(weights, dtype=float).ravel()
    total = w.sum()
    if not total > 0:
        raise AllWeightsZero("all weights are zero, H is undefined")
    Gw = np.sqrt(w / total)[:, None] * G
    if not np.all(np.isfinite(Gw)):
        raise EigenFailure("weighted gradients have non-finite entries")
    # H = Gw^T Gw shares its nonzero spectrum with the n x n Gram matrix
    try:
        mu, W = sla.eigh(Gw @ Gw.T)
    except sla.LinAlgError as exc:
        raise EigenFailure(str(exc)) from exc
    mu, W = mu[::-1], W[:, ::-1]
    if not mu[0] > 0:
        return compute_fis_basis(np.zeros((d, d)), eps, max_rank)
    m = int(np.count_nonzero(mu > GRAM_RANK_TOL * mu[0]))
    Vm = (Gw.T @ W[:, :m]) / np.sqrt(mu[:m])
    # restore orthonormality lost to rounding, then complete the basis with
    # m Householder reflectors (cost ~ d^2 m instead of d^3)
    Q, R = sla.qr(Vm, mode="full")
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    V = Q.copy()
    V[:, :m] *= signs
    lam = np.zeros(d)
    lam[:m] = mu[:m]
    return _build(lam, V, eps, max_rank)


def project(theta, basis):
    """Local coordinates ``(phi_r^T theta, phi_perp^T theta)``; ``theta`` is a
    point ``(d,)`` or a column batch ``(d, N)``."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape[0] != basis.dim:
        raise DimensionMismatch(f"theta has {theta.shape[0]} rows, basis dim is {basis.dim}")
    return basis.phi_r.T @ theta, basis.phi_perp.T @ theta


def reconstruct(theta_r_local, theta_perp_local, basis):
    """``phi_r theta_r + phi_perp theta_perp``."""
    tr = np.asarray(theta_r_local, dtype=float)
    tp = np.asarray(theta_perp_local, dtype=float)
    if tr.shape[0] != basis.rank or tp.shape[0] != basis.dim - basis.rank:
        raise DimensionMismatch("local coordinates do not match the basis split")
    return basis.phi_r @ tr + basis.phi_perp @ tp


def projector(basis):
    return basis.phi_r @ basis.phi_r.T
