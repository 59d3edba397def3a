"""Pure numpy version of the bar kernels, used when the compiled extension is
not available. Vectorized over the batch, sequential along the bar."""
import numpy as np


def _thomas(k, rhs_tip):
    # stiffness of the clamped chain: diag_i = k_i + k_{i+1}, off_i = -k_{i+1}
    m, n = k.shape
    diag = k.copy()
    diag[:, :-1] += k[:, 1:]
    off = -k[:, 1:]
    cp = np.empty((m, n - 1))
    dp = np.empty((m, n))
    r = np.zeros((m, n))
    r[:, -1] = rhs_tip
    cp_prev = None
    for i in range(n):
        denom = diag[:, i] if i == 0 else diag[:, i] - off[:, i - 1] * cp_prev
        if i < n - 1:
            cp[:, i] = off[:, i] / denom
            cp_prev = cp[:, i]
        dp[:, i] = r[:, i] if i == 0 else r[:, i] - off[:, i - 1] * dp[:, i - 1]
        dp[:, i] /= denom
    x = np.empty((m, n))
    x[:, -1] = dp[:, -1]
    for i in range(n - 2, -1, -1):
        x[:, i] = dp[:, i] - cp[:, i] * x[:, i + 1]
    return x


def solve_tip_load(k, q):
    """Tip displacement, tip adjoint value and per-element adjoint terms.

    ``k`` is ``(m, n)`` element stiffness, ``q`` the ``(m,)`` tip loads. The
    adjoint solves the same system with a unit tip load. Returns
    ``(u_tip, lam_tip, c)`` with ``c_e = k_e * dlam_e * du_e``.
    """
    k = np.asarray(k, dtype=float)
    q = np.asarray(q, dtype=float)
    m, n = k.shape
    both = _thomas(np.concatenate([k, k]), np.concatenate([q, np.ones(m)]))
    u, lam = both[:m], both[m:]
    du = np.diff(u, axis=1, prepend=0.0)
    dlam = np.diff(lam, axis=1, prepend=0.0)
    return u[:, -1].copy(), lam[:, -1].copy(), k * dlam * du
