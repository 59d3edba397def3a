# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled bar kernels: one tridiagonal factorization per sample, shared by
the forward and the adjoint solve."""
import numpy as np

cimport numpy as cnp

cnp.import_array()


def solve_tip_load(double[:, ::1] k, double[::1] q):
    """Tip displacement, tip adjoint value and per-element adjoint terms.

    Same contract as the numpy version: returns ``(u_tip, lam_tip, c)`` with
    ``c_e = k_e * dlam_e * du_e``.
    """
    cdef Py_ssize_t m = k.shape[0], n = k.shape[1]
    cdef Py_ssize_t s, i
    cdef double denom, off_prev, up, lp, du, dl
    if q.shape[0] != m:
        raise ValueError("one load per sample expected")
    u_tip = np.empty(m)
    lam_tip = np.empty(m)
    c = np.empty((m, n))
    cdef double[::1] ut = u_tip, lt = lam_tip
    cdef double[:, ::1] cv = c
    cdef double[::1] cp = np.empty(n)
    cdef double[::1] du_ = np.empty(n)
    cdef double[::1] dl_ = np.empty(n)
    cdef double[::1] u = np.empty(n)
    cdef double[::1] lam = np.empty(n)
    with nogil:
        for s in range(m):
            # forward sweep; the right-hand sides vanish except at the tip
            off_prev = 0.0
            for i in range(n):
                if i < n - 1:
                    denom = k[s, i] + k[s, i + 1]
                else:
                    denom = k[s, i]
                if i > 0:
                    denom = denom - off_prev * cp[i - 1]
                if i < n - 1:
                    cp[i] = -k[s, i + 1] / denom
                    off_prev = -k[s, i + 1]
                du_[i] = 0.0
                dl_[i] = 0.0
                if i == n - 1:
                    du_[i] = q[s]
                    dl_[i] = 1.0
                if i > 0:
                    du_[i] = du_[i] + k[s, i] * du_[i - 1]
                    dl_[i] = dl_[i] + k[s, i] * dl_[i - 1]
                du_[i] = du_[i] / denom
                dl_[i] = dl_[i] / denom
            u[n - 1] = du_[n - 1]
            lam[n - 1] = dl_[n - 1]
            for i in range(n - 2, -1, -1):
                u[i] = du_[i] - cp[i] * u[i + 1]
                lam[i] = dl_[i] - cp[i] * lam[i + 1]
            ut[s] = u[n - 1]
            lt[s] = lam[n - 1]
            up = 0.0
            lp = 0.0
            for i in range(n):
                du = u[i] - up
                dl = lam[i] - lp
                cv[s, i] = k[s, i] * dl * du
                up = u[i]
                lp = lam[i]
    return u_tip, lam_tip, c
